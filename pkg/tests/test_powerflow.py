import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from droopcert.network import neighbors, other_neighbors
from droopcert.powerflow import (
    MAX_DEGREE,
    NodeAssignment,
    active_power,
    coupling,
    injection_at,
    reactive_power,
    taylor3_power,
    taylor_remainder_bound,
)

from conftest import PI6, make_network, random_network, toy_spec


def complex_injection(model, i, theta, v):
    """S_i = V_i * conj(sum_k Y_ik V_k) with phasors; ``theta``/``v`` dicts over all nodes."""
    ids = model.node_ids
    V = {k: (model.params(k).v_nom + v[k]) * np.exp(1j * theta[k]) for k in ids}
    current = sum(complex(*model.admittance(i, k)) * V[k] for k in ids)
    return V[i] * np.conj(current)


def random_assignment(model, i, rng, spec):
    nb = other_neighbors(model, i)
    v_i = float(rng.uniform(*spec.s_v))
    asg = {k: (float(rng.uniform(*spec.s_theta)), float(rng.uniform(*spec.s_v))) for k in nb}
    return NodeAssignment(v_i, asg)


def test_two_node_examples():
    m = make_network(2, [(0, 1, -2.0, 0.0)])
    asg = NodeAssignment(0.0, {1: (0.0, 0.0)})
    assert active_power(m, 0, asg) == -2.0
    assert reactive_power(m, 0, asg) == 0.0
    assert active_power(m, 0, NodeAssignment(0.0, {1: (math.pi / 2, 0.0)})) == pytest.approx(0.0, abs=1e-15)
    m = make_network(2, [(0, 1, 0.0, -1.0)])
    assert reactive_power(m, 0, asg) == 1.0


def test_assignment_must_cover_neighbors(bundled):
    model, _ = bundled
    with pytest.raises(ValueError):
        active_power(model, 1, NodeAssignment(0.0, {2: (0.0, 0.0)}))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_complex_phasor_form(seed):
    rng = np.random.default_rng(seed)
    model = random_network(rng)
    spec = toy_spec()
    i = int(rng.choice(model.node_ids))
    asg = random_assignment(model, i, rng, spec)
    theta = {k: 0.0 for k in model.node_ids}
    v = {k: float(rng.uniform(-0.4, 0.2)) for k in model.node_ids}  # non-neighbours must not matter
    v[i] = asg.v_i
    for k, (t, vk) in asg.neighbors.items():
        theta[k], v[k] = t, vk
    for k in model.node_ids:
        if k not in neighbors(model, i):
            theta[k] = float(rng.uniform(-1, 1))
    s = complex_injection(model, i, theta, v)
    assert active_power(model, i, asg) == pytest.approx(s.real, abs=1e-12)
    assert reactive_power(model, i, asg) == pytest.approx(s.imag, abs=1e-12)
    # vectorised path agrees with the literal sum
    x = [asg.v_i] + [c for k in sorted(asg.neighbors) for c in asg.neighbors[k]]
    assert injection_at(coupling(model, i, "active"), x)[0] == pytest.approx(s.real, abs=1e-12)
    assert injection_at(coupling(model, i, "reactive"), x)[0] == pytest.approx(s.imag, abs=1e-12)


def test_bundled_random_assignments(bundled):
    model, spec = bundled
    rng = np.random.default_rng(7)
    for i in model.node_ids:
        for _ in range(20):
            asg = random_assignment(model, i, rng, spec)
            theta = {k: 0.0 for k in model.node_ids}
            v = {k: 0.0 for k in model.node_ids}
            v[i] = asg.v_i
            for k, (t, vk) in asg.neighbors.items():
                theta[k], v[k] = t, vk
            s = complex_injection(model, i, theta, v)
            assert active_power(model, i, asg) == pytest.approx(s.real, abs=1e-12)
            assert reactive_power(model, i, asg) == pytest.approx(s.imag, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(-3, 3))
def test_periodic_in_angles(seed, turns):
    rng = np.random.default_rng(seed)
    model = random_network(rng)
    i = model.node_ids[0]
    asg = random_assignment(model, i, rng, toy_spec())
    shifted = NodeAssignment(asg.v_i, {k: (t + 2 * math.pi * turns, v) for k, (t, v) in asg.neighbors.items()})
    for f in (active_power, reactive_power):
        assert f(model, i, shifted) == pytest.approx(f(model, i, asg), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_linear_in_each_neighbor_voltage(seed):
    rng = np.random.default_rng(seed)
    model = random_network(rng)
    i = model.node_ids[0]
    asg = random_assignment(model, i, rng, toy_spec())
    k = other_neighbors(model, i)[0]
    t, _ = asg.neighbors[k]

    def at(vk):
        nb = dict(asg.neighbors)
        nb[k] = (t, vk)
        return active_power(model, i, NodeAssignment(asg.v_i, nb))

    a, b, c = at(-0.4), at(-0.1), at(0.2)
    assert b == pytest.approx(0.5 * (a + c), abs=1e-12)


def test_taylor_single_term():
    m = make_network(2, [(0, 1, 1.0, 0.0)])
    poly = taylor3_power(m, 0, "active")
    assert poly.variables == ("v_0", "theta_1", "v_1")
    for v0, th, v1 in [(0.0, 0.3, 0.0), (0.1, -0.2, -0.3)]:
        expected = (1 + v0) * (1 + v1) * (1 - th**2 / 2)
        assert poly([v0, th, v1])[0] == pytest.approx(expected, abs=1e-14)
    assert str(poly).startswith("1.0 + ")


def test_taylor_degree(bundled):
    model, _ = bundled
    for i in model.node_ids:
        for kind in ("active", "reactive"):
            assert taylor3_power(model, i, kind).degree <= MAX_DEGREE


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_taylor_exact_at_zero_angle(seed):
    rng = np.random.default_rng(seed)
    model = random_network(rng)
    i = model.node_ids[-1]
    for kind in ("active", "reactive"):
        c = coupling(model, i, kind)
        x = rng.uniform(-0.4, 0.2, size=(20, 1 + 2 * c.m))
        x[:, 1::2] = 0.0
        np.testing.assert_allclose(taylor3_power(model, i, kind)(x), injection_at(c, x), atol=1e-13)


def test_remainder_bound_examples():
    m = make_network(2, [(0, 1, 1.5, -0.5)])
    spec = toy_spec(s_v=(-0.4, 0.2))
    assert taylor_remainder_bound(m, 0, spec) == pytest.approx(2 * 1.44 * PI6**4 / 24, rel=1e-12)
    assert 2 * 1.44 * PI6**4 / 24 == pytest.approx(9.02e-3, abs=5e-6)
    assert taylor_remainder_bound(m, 0, toy_spec(s_theta=(0.0, 0.0))) == 0.0


def test_remainder_bound_sampled(bundled):
    model, spec = bundled
    rng = np.random.default_rng(3)
    for i in model.node_ids:
        bound = taylor_remainder_bound(model, i, spec)
        for kind in ("active", "reactive"):
            c = coupling(model, i, kind)
            x = np.empty((200_000, 1 + 2 * c.m))
            x[:, 0::2] = rng.uniform(*spec.s_v, size=(len(x), c.m + 1))
            x[:, 1::2] = rng.uniform(*spec.s_theta, size=(len(x), c.m))
            err = np.abs(injection_at(c, x) - taylor3_power(model, i, kind)(x))
            assert err.max() <= bound
