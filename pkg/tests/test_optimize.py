import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from droopcert.network import Line, NetworkModel
from droopcert.optimize import (
    CoupledBoxError,
    DisturbanceBox,
    InfeasibleBoxError,
    OracleBudgetError,
    extremize_bnb,
    extremize_separable,
    grid_oracle,
)
from droopcert.powerflow import coupling, injection, injection_at
from droopcert.verify import OptimizerError, power_envelope

from conftest import PI6, make_network, random_network, toy_spec
from instances import random_instance, random_separable_instance

TOL = 1e-6


def toy_box(delta=math.inf, v_i=(0.0, 0.0)):
    return DisturbanceBox(0, (1,), v_i, ((-PI6, PI6),), ((-0.4, 0.2),), delta)


def test_separable_example():
    m = make_network(2, [(0, 1, -2.0, 0.0)])
    b = extremize_separable(m, 0, "active", toy_box(), "max")
    expected = -2 * 0.6 * math.cos(PI6)
    assert b.lo <= expected <= b.hi
    assert b.width < 1e-12
    assert b.hi == pytest.approx(-1.0392, abs=5e-5)
    assert abs(b.witness[1]) == pytest.approx(PI6) and b.witness[2] == pytest.approx(-0.4)
    # the same answer from a dense grid
    t, v = np.meshgrid(np.linspace(-PI6, PI6, 401), np.linspace(-0.4, 0.2, 401))
    assert np.max((1 + v) * (-2 * np.cos(t))) == pytest.approx(expected, abs=1e-12)


def test_degenerate_box_is_point_evaluation(bundled):
    model, spec = bundled
    x = [0.05, 0.2, -0.1, -0.3, 0.1]
    box = DisturbanceBox(1, (2, 4), (x[0], x[0]), ((x[1], x[1]), (x[3], x[3])), ((x[2], x[2]), (x[4], x[4])))
    for kind in ("active", "reactive"):
        val = injection_at(coupling(model, 1, kind), x)[0]
        for sense in ("max", "min"):
            for b in (extremize_separable(model, 1, kind, box, sense),
                      extremize_bnb(model, 1, kind, box, sense, TOL)):
                assert b.lo - 1e-12 <= val <= b.hi + 1e-12


def test_separable_rejects_coupled_free_box():
    m = make_network(2, [(0, 1, -2.0, 0.0)])
    with pytest.raises(CoupledBoxError):
        extremize_separable(m, 0, "active", toy_box(0.1, v_i=(-0.4, 0.2)), "max")


def test_infeasible_boxes():
    with pytest.raises(InfeasibleBoxError):
        DisturbanceBox(0, (1,), (0.1, 0.0), ((0, 0),), ((0, 0),))
    with pytest.raises(InfeasibleBoxError):
        DisturbanceBox(0, (1,), (-0.4, 0.2), ((0, 0),), ((0.1, 0.2),), delta_v=0.05)


def test_bad_sense():
    m = make_network(2, [(0, 1, -2.0, 0.0)])
    with pytest.raises(ValueError):
        extremize_bnb(m, 0, "active", toy_box(), "largest", TOL)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_engines_agree_on_separable_boxes(seed):
    model, i, kind, box = random_separable_instance(np.random.default_rng(seed))
    for sense in ("max", "min"):
        a = extremize_separable(model, i, kind, box, sense)
        b = extremize_bnb(model, i, kind, box, sense, TOL)
        assert b.converged
        assert b.width <= TOL * (1 + 1e-9)
        side = "hi" if sense == "max" else "lo"
        assert abs(getattr(a, side) - getattr(b, side)) <= TOL


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_witness_soundness(seed):
    model, i, kind, box = random_instance(np.random.default_rng(seed))
    for sense in ("max", "min"):
        b = extremize_bnb(model, i, kind, box, sense, TOL)
        assert box.contains(b.witness)
        val = injection_at(coupling(model, i, kind), b.witness)[0]
        assert b.lo <= val <= b.hi
        assert val == pytest.approx(b.witness_value, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_refined_tolerance_nests(seed):
    model, i, kind, box = random_instance(np.random.default_rng(seed))
    coarse = extremize_bnb(model, i, kind, box, "max", 1e-4)
    fine = extremize_bnb(model, i, kind, box, "max", 1e-5)
    assert coarse.lo <= fine.lo <= fine.hi <= coarse.hi
    assert fine.width <= 1e-5 * (1 + 1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_negated_network_swaps_extremes(seed):
    rng = np.random.default_rng(seed)
    model, i, kind, box = random_instance(rng)
    neg = NetworkModel(model.nodes, tuple(Line(l.from_node, l.to_node, -l.conductance, -l.susceptance)
                                          for l in model.lines))
    mx = extremize_bnb(model, i, kind, box, "max", TOL)
    mn_neg = extremize_bnb(neg, i, kind, box, "min", TOL)
    assert abs(mx.hi + mn_neg.lo) <= 2 * TOL
    assert abs(mx.lo + mn_neg.hi) <= 2 * TOL


def test_perfect_coupling_matches_dense_grid():
    # with delta_v = 0 every neighbour voltage equals the own voltage
    rng = np.random.default_rng(11)
    model = random_network(rng, n_nodes=2)
    box = DisturbanceBox(0, (1,), (-0.4, 0.2), ((-PI6, PI6),), ((-0.4, 0.2),), delta_v=0.0)
    v, t = np.meshgrid(np.linspace(-0.4, 0.2, 801), np.linspace(-PI6, PI6, 801))
    for kind in ("active", "reactive"):
        c = coupling(model, 0, kind)
        vals = injection(c, v, t[..., None], v[..., None])
        for sense, ref in (("max", vals.max()), ("min", vals.min())):
            b = extremize_bnb(model, 0, kind, box, sense, TOL)
            assert b.witness[2] == pytest.approx(b.witness[0])
            bound = b.hi if sense == "max" else b.lo
            if sense == "max":
                assert ref <= bound + TOL
            else:
                assert ref >= bound - TOL
            # an 801-point grid is within a small Lipschitz gap of the optimum
            assert abs(ref - bound) < 1e-4


def test_budget_exhaustion(bundled):
    model, spec = bundled
    box = DisturbanceBox.from_spec(model, 1, spec)
    b = extremize_bnb(model, 1, "active", box, "min", TOL, budget=20)
    assert not b.converged
    assert b.lo <= b.witness_value
    with pytest.raises(OptimizerError):
        power_envelope(model, 1, spec, engine="bnb", budget=20)


def test_grid_oracle_linear_corner():
    # pinned angle and own voltage: the injection is affine in v_1
    m = make_network(2, [(0, 1, -2.0, 0.5)])
    box = DisturbanceBox(0, (1,), (0.1, 0.1), ((0.3, 0.3),), ((-0.4, 0.2),))
    c = coupling(m, 0, "active")
    ends = [injection_at(c, [0.1, 0.3, v])[0] for v in (-0.4, 0.2)]
    val, x = grid_oracle(m, 0, "active", box, "max", 7)
    assert val == max(ends)
    assert x[2] in (-0.4, 0.2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(3, 15))
def test_grid_oracle_refinement(seed, n):
    model, i, kind, box = random_instance(np.random.default_rng(seed))
    coarse, _ = grid_oracle(model, i, kind, box, "max", n)
    fine, _ = grid_oracle(model, i, kind, box, "max", 2 * n - 1)  # nested grid
    assert fine >= coarse - 1e-12


def test_grid_oracle_budget(bundled):
    model, spec = bundled
    box = DisturbanceBox.from_spec(model, 1, spec)
    with pytest.raises(OracleBudgetError):
        grid_oracle(model, 1, "active", box, "max", 41)
