import math

import numpy as np
import pytest

from droopcert.simulate import (
    Scenario,
    SimulationError,
    discretization_allowance,
    read_trace_csv,
    safety_margins,
    safety_monitor,
    simulate,
    switching_policy_step,
    trace_columns,
    write_trace_csv,
)
from droopcert.verify import verify_node

from conftest import make_network, toy_spec

TWO_PI = 2 * math.pi


def isolated(tau=0.5):
    return make_network(1, [], tau=tau)


def decay_run(step, duration=2.0, tau=0.5):
    sc = Scenario(duration=duration, step=step, control="constant", neighbors="worst-case",
                  initial=(0.0, TWO_PI, 0.1))
    return simulate(isolated(tau), 0, toy_spec(), sc)


def test_isolated_exponential_decay():
    tr = decay_run(1e-3)
    np.testing.assert_allclose(tr.omega, TWO_PI * np.exp(-tr.time / 0.5), rtol=1e-11)
    np.testing.assert_allclose(tr.v, 0.1 * np.exp(-tr.time / 0.5), rtol=1e-11)
    # theta integrates omega
    np.testing.assert_allclose(tr.theta, TWO_PI * 0.5 * (1 - np.exp(-tr.time / 0.5)), rtol=1e-10)


def test_rk4_fourth_order():
    exact = TWO_PI * math.exp(-2.0 / 0.5)
    errs = [abs(decay_run(h).omega[-1] - exact) for h in (0.02, 0.01, 0.005)]
    # halving the step divides the error by about 16
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(14 < r < 18 for r in ratios), ratios
    c = errs[-1] / 0.005**4
    assert c < 1.0, f"measured error constant {c}"


def test_deterministic(bundled):
    model, spec = bundled
    rep = verify_node(model, 1, spec)
    sc = Scenario(duration=1.0, u_omega=rep.u_omega, u_v=rep.u_v, seed=42)
    a, b = simulate(model, 1, spec, sc), simulate(model, 1, spec, sc)
    for name in ("theta", "omega", "v", "u_p", "u_q", "theta_k", "v_k", "omega_k"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = simulate(model, 1, spec, Scenario(duration=1.0, u_omega=rep.u_omega, u_v=rep.u_v, seed=43))
    assert not np.array_equal(a.v, c.v)


def test_trace_consistency(bundled):
    model, spec = bundled
    rep = verify_node(model, 1, spec)
    tr = simulate(model, 1, spec, Scenario(duration=2.0, u_omega=rep.u_omega, u_v=rep.u_v, seed=1))
    n = len(tr)
    assert n == 2001
    for arr in (tr.theta, tr.omega, tr.v, tr.u_p, tr.u_q, tr.margin_omega, tr.margin_v):
        assert arr.shape == (n,)
    assert tr.theta_k.shape == tr.v_k.shape == tr.omega_k.shape == (n, 2)
    mw, mv = safety_margins(tr.omega, tr.v, spec)
    assert np.array_equal(mw, tr.margin_omega) and np.array_equal(mv, tr.margin_v)
    # controls resampled once per second, within the certified intervals
    assert len(np.unique(tr.u_p[:-1])) == 2
    assert np.all((rep.u_omega.lower <= tr.u_p) & (tr.u_p <= rep.u_omega.upper))
    # neighbour draws respect the angle box, and the coupling bands at each draw
    assert np.all(np.abs(tr.theta_k) <= spec.s_theta[1])
    draws = slice(0, n - 1, 10)
    assert np.all(np.abs(tr.v_k[draws] - tr.v[draws, None]) <= spec.delta_v + 1e-12)
    assert np.all(np.abs(tr.omega_k[draws] - tr.omega[draws, None]) <= spec.delta_omega + 1e-12)
    assert len(np.unique(tr.v_k[:-1, 0])) == 200


def test_worst_case_hold_rule(bundled):
    model, spec = bundled
    tr = simulate(model, 1, spec, Scenario(duration=0.5, control="constant", neighbors="worst-case"))
    assert np.all(tr.theta_k == spec.s_theta[0])
    # refreshed every step; the final sample repeats the last inputs
    np.testing.assert_array_equal(tr.v_k[:-1, 0], np.maximum(spec.s_v[0], tr.v[:-1] - spec.delta_v))
    assert np.all(tr.omega_k == 0.0)


@pytest.mark.parametrize("kw", [
    dict(step=0.003),                       # duration not a multiple of step
    dict(neighbor_period=0.0125),
    dict(step=0.0),
    dict(control="switching", u_omega=(0, 1), u_v=(0, 1), threshold=0.6),
    dict(control="stochastic"),             # no intervals supplied
    dict(initial=(0.0, 100.0, 0.0)),
])
def test_invalid_scenarios(bundled, kw):
    model, spec = bundled
    base = dict(duration=1.0, control="constant")
    base.update(kw)
    with pytest.raises(ValueError):
        simulate(model, 1, spec, Scenario(**base))


def test_divergence_is_reported():
    sc = Scenario(duration=1.0, step=0.5, control="constant", neighbors="worst-case", u_p=1e200)
    with pytest.raises(SimulationError, match="step"):
        simulate(make_network(1, [], tau=1e-3, lambda_p=1e200), 0, toy_spec(), sc)


def test_halt_truncates_runaway(bundled):
    model, spec = bundled
    rep = verify_node(model, 1, spec)
    u_q = rep.u_v.upper + 0.5 * (spec.s_v[1] - spec.s_v[0]) / rep.lambda_q
    sc = Scenario(duration=20.0, control="constant", u_q=u_q, neighbors="worst-case", halt_margin=0.5)
    tr = simulate(model, 1, spec, sc)
    assert len(tr) < 20001 and tr.meta["halted_at"] == tr.time[-1]
    assert tr.margin_v[-1] < -0.5 * (spec.s_v[1] - spec.s_v[0])
    assert np.all(tr.margin_v[:-1] >= -0.5 * (spec.s_v[1] - spec.s_v[0]))
    assert safety_monitor(tr, spec).count > 0
    with pytest.raises(ValueError):
        simulate(model, 1, spec, Scenario(duration=1.0, control="constant", halt_margin=-1.0))


def test_switching_policy():
    spec = toy_spec()
    w_hi = spec.s_omega[1]
    iv = ((-1.0, 2.0), (-0.3, 0.1))
    assert switching_policy_step(w_hi, 0.0, spec, *iv, 0.1, (0.5, 0.0)) == (2.0, 0.0)
    assert switching_policy_step(-w_hi, spec.s_v[0], spec, *iv, 0.1, (0.5, 0.0)) == (-1.0, -0.3)
    assert switching_policy_step(0.0, -0.1, spec, *iv, 0.1, (0.5, 0.02)) == (0.5, 0.02)
    assert switching_policy_step(0.0, spec.s_v[1], spec, *iv, 0.1, (0.5, 0.0)) == (0.5, 0.1)
    with pytest.raises(ValueError):
        switching_policy_step(0.0, 0.0, spec, *iv, 0.5, (0.0, 0.0))
    with pytest.raises(ValueError):
        switching_policy_step(0.0, 0.0, spec, (2.0, -1.0), (0.0, 0.1), 0.1, (0.0, 0.0))
    assert switching_policy_step(w_hi, 0.0, spec, (2.0, -1.0), (0.0, 0.1), 0.1, (0.0, 0.0),
                                 allow_empty=True) == (-1.0, 0.0)
    with pytest.raises(ValueError):
        switching_policy_step(0.0, 0.0, spec, (0.0, math.inf), (0.0, 0.1), 0.1, (0.0, 0.0))


def test_switching_beyond_critical_droop(bundled):
    # no guarantee past the maximal droop: measure the excursion, do not certify it
    model, spec = bundled
    base = verify_node(model, 1, spec)
    lp, lq = 1.1 * base.lambda_p_star, 1.1 * base.lambda_q_star
    rep = verify_node(model, 1, spec, lp, lq)
    assert not rep.nonempty
    sc = Scenario(duration=5.0, control="switching", u_omega=rep.u_omega, u_v=rep.u_v,
                  lambda_p=lp, lambda_q=lq, seed=3)
    tr = simulate(model, 1, spec, sc)
    assert set(np.unique(tr.u_p)) <= {rep.u_omega.lower, rep.u_omega.upper,
                                      0.5 * (rep.u_omega.lower + rep.u_omega.upper)}
    mon = safety_monitor(tr, spec)
    assert np.isfinite(mon.worst_margin_omega)


def _manual_trace(spec):
    sc = Scenario(duration=0.01, step=0.001, control="constant")
    tr = simulate(isolated(), 0, spec, sc)
    return tr


def test_monitor_interior_and_manufactured():
    spec = toy_spec()
    tr = _manual_trace(spec)
    rep = safety_monitor(tr, spec, 1e-6)
    assert rep.ok and rep.count == 0
    tr.v[4] = spec.s_v[1] + 1e-3
    rep = safety_monitor(tr, spec, 1e-6)
    assert rep.violations == [(4, tr.time[4], "v", pytest.approx(-1e-3))]
    assert rep.worst_time_v == tr.time[4]
    rep = safety_monitor(tr, spec, 1e-6, allowance=(0.0, 2e-3))
    assert rep.ok and len(rep.discretization_level) == 1


def test_allowance_positive(bundled):
    model, spec = bundled
    rep = verify_node(model, 1, spec)
    aw, av = discretization_allowance(model, 1, spec, Scenario(u_omega=rep.u_omega, u_v=rep.u_v))
    assert 0 < aw < 1 and 0 < av < 0.05


def test_csv_export(bundled, tmp_path):
    model, spec = bundled
    rep = verify_node(model, 1, spec)
    tr = simulate(model, 1, spec, Scenario(duration=0.1, u_omega=rep.u_omega, u_v=rep.u_v))
    path = tmp_path / "trace.csv"
    write_trace_csv(tr, path, {"seed": 0})
    assert path.read_text().startswith("# config: ")
    cols, data = read_trace_csv(path)
    assert cols == trace_columns(tr) == ["time_s", "theta_i", "omega_i_hz", "v_i_dev", "u_p", "u_q",
                                         "theta_2", "v_2_dev", "theta_4", "v_4_dev",
                                         "margin_omega", "margin_v"]
    assert data.shape == (len(tr), len(cols))
    np.testing.assert_array_equal(data[:, 2], tr.omega / TWO_PI)
    np.testing.assert_array_equal(data[:, -2], tr.margin_omega / TWO_PI)
