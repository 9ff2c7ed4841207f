"""Focal-node simulation of the droop dynamics against scripted neighbours.

The focal inverter integrates

    d theta/dt = omega
    tau d omega/dt = -omega + lambda_p (P_nom + u_p - P)
    tau d v/dt     = -v     + lambda_q (Q_nom + u_q - Q)

with the exact injections.  Neighbour angles (relative to the focal node) and
voltage deviations are exogenous and held constant between updates, as are
the controls.  Integration is classical fixed-step RK4.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .interval import Iv
from .network import NetworkModel, SafetySpec
from .optimize import PowerObjective, DisturbanceBox
from .powerflow import coupling
from .verify import AdmissibleInterval


class SimulationError(RuntimeError):
    pass


def _as_pair(iv) -> tuple[float, float] | None:
    if iv is None:
        return None
    if isinstance(iv, AdmissibleInterval):
        return (iv.lower, iv.upper)
    lo, hi = iv
    return (float(lo), float(hi))


@dataclass(frozen=True)
class Scenario:
    """Simulation settings.

    ``control`` is ``"constant"`` (uses ``u_p``/``u_q``), ``"stochastic"``
    (uniform redraw from ``u_omega``/``u_v`` every ``control_period``) or
    ``"switching"`` (bang-bang between interval endpoints near the safe-set
    faces, see :func:`switching_policy_step`).  ``neighbors`` is
    ``"stochastic"`` (uniform redraw every ``neighbor_period`` within the
    coupled boxes) or ``"worst-case"`` (angles pinned to one end of
    ``s_theta``, voltages pinned to the coupled bound, refreshed every step).
    """

    duration: float = 20.0
    step: float = 1e-3
    control: Literal["constant", "stochastic", "switching"] = "stochastic"
    control_period: float = 1.0
    u_p: float = 0.0
    u_q: float = 0.0
    u_omega: tuple[float, float] | None = None
    u_v: tuple[float, float] | None = None
    threshold: float = 0.1
    neighbors: Literal["stochastic", "worst-case"] = "stochastic"
    neighbor_period: float = 0.01
    theta_side: Literal["lower", "upper"] = "lower"
    v_side: Literal["lower", "upper"] = "lower"
    lambda_p: float | None = None
    lambda_q: float | None = None
    initial: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0
    halt_margin: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "u_omega", _as_pair(self.u_omega))
        object.__setattr__(self, "u_v", _as_pair(self.u_v))

    def ticks(self, period: float) -> int:
        """``period`` as a whole number of steps."""
        n = round(period / self.step)
        if n < 1 or abs(n * self.step - period) > 1e-9 * max(1.0, period):
            raise ValueError(f"period {period} is not an integer multiple of step {self.step}")
        return n

    def validate(self) -> None:
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if self.control not in ("constant", "stochastic", "switching"):
            raise ValueError(f"unknown control policy {self.control!r}")
        if self.neighbors not in ("stochastic", "worst-case"):
            raise ValueError(f"unknown neighbour policy {self.neighbors!r}")
        self.ticks(self.duration)
        if self.control == "stochastic":
            self.ticks(self.control_period)
        if self.neighbors == "stochastic":
            self.ticks(self.neighbor_period)
        if self.control in ("stochastic", "switching") and (self.u_omega is None or self.u_v is None):
            raise ValueError(f"{self.control} control needs u_omega and u_v")
        if self.control == "switching" and not 0 < self.threshold < 0.5:
            raise ValueError("threshold fraction must lie in (0, 0.5)")
        if self.halt_margin is not None and not self.halt_margin >= 0:
            raise ValueError("halt_margin must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SimTrace:
    """States are recorded at every grid time; inputs at index ``n`` act on ``[t_n, t_n+1)``.

    ``omega`` and ``margin_omega`` are in rad/s, voltages in p.u. deviation.
    """

    node: int
    neighbors: tuple[int, ...]
    time: np.ndarray
    theta: np.ndarray
    omega: np.ndarray
    v: np.ndarray
    u_p: np.ndarray
    u_q: np.ndarray
    theta_k: np.ndarray
    v_k: np.ndarray
    omega_k: np.ndarray
    margin_omega: np.ndarray
    margin_v: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.time)


def safety_margins(omega, v, spec: SafetySpec):
    w_lo, w_hi = spec.s_omega
    v_lo, v_hi = spec.s_v
    omega = np.asarray(omega)
    v = np.asarray(v)
    return np.minimum(omega - w_lo, w_hi - omega), np.minimum(v - v_lo, v_hi - v)


def switching_policy_step(omega: float, v: float, spec: SafetySpec, u_omega, u_v,
                          threshold_fraction: float, previous: tuple[float, float],
                          allow_empty: bool = False):
    """Bang-bang set-point choice near the safe-set faces.

    Within ``threshold_fraction`` of the safe-set width from the upper (lower)
    face the upper (lower) endpoint is applied; elsewhere the previous control
    is held.  Beyond the maximal droop the computed intervals are empty
    (lower > upper); pass ``allow_empty=True`` to switch between those
    endpoints anyway.
    """
    if not 0 < threshold_fraction < 0.5:
        raise ValueError("threshold fraction must lie in (0, 0.5)")
    u_omega, u_v = _as_pair(u_omega), _as_pair(u_v)
    for pair in (u_omega, u_v):
        if pair is None or not all(math.isfinite(x) for x in pair):
            raise ValueError("switching policy needs finite interval endpoints")
        if pair[0] > pair[1] and not allow_empty:
            raise ValueError(f"empty control interval {pair}")
    u_p, u_q = previous
    w_lo, w_hi = spec.s_omega
    band = threshold_fraction * (w_hi - w_lo)
    if omega >= w_hi - band:
        u_p = u_omega[1]
    elif omega <= w_lo + band:
        u_p = u_omega[0]
    v_lo, v_hi = spec.s_v
    band = threshold_fraction * (v_hi - v_lo)
    if v >= v_hi - band:
        u_q = u_v[1]
    elif v <= v_lo + band:
        u_q = u_v[0]
    return u_p, u_q


def _coupled(lo, hi, center, radius):
    return max(lo, center - radius), min(hi, center + radius)


def simulate(model: NetworkModel, i: int, spec: SafetySpec, scenario: Scenario) -> SimTrace:
    sc = scenario
    sc.validate()
    params = model.params(i)
    lam_p = params.lambda_p if sc.lambda_p is None else sc.lambda_p
    lam_q = params.lambda_q if sc.lambda_q is None else sc.lambda_q
    tau = params.tau
    cp = coupling(model, i, "active")
    cq = coupling(model, i, "reactive")
    nb = cp.neighbors
    m = len(nb)
    v_nom = params.v_nom
    h = sc.step
    n_steps = sc.ticks(sc.duration)
    ctrl_ticks = sc.ticks(sc.control_period) if sc.control == "stochastic" else 0
    nb_ticks = sc.ticks(sc.neighbor_period) if sc.neighbors == "stochastic" else 1
    rng = np.random.default_rng(sc.seed)

    s_v = spec.s_v
    s_w = spec.s_omega
    s_th = spec.s_theta

    N = n_steps + 1
    time = np.arange(N) * h
    TH = np.empty(N)
    W = np.empty(N)
    V = np.empty(N)
    UP = np.empty(N)
    UQ = np.empty(N)
    THK = np.empty((N, m))
    VK = np.empty((N, m))
    WK = np.empty((N, m))

    th, w, v = (float(x) for x in sc.initial)
    if not (s_w[0] <= w <= s_w[1] and s_v[0] <= v <= s_v[1]):
        raise ValueError(f"initial state (omega={w}, v={v}) lies outside the safe set")
    if sc.control == "constant":
        u_p, u_q = float(sc.u_p), float(sc.u_q)
    elif sc.control == "switching":
        u_p = 0.5 * (sc.u_omega[0] + sc.u_omega[1])
        u_q = 0.5 * (sc.u_v[0] + sc.u_v[1])
    else:
        u_p = u_q = 0.0
    thk = np.zeros(m)
    vk = np.zeros(m)
    wk = np.zeros(m)

    halt = sc.halt_margin
    halted = None
    sP, sQ = cp.self_coef, cq.self_coef
    p0 = params.p_nom
    q0 = params.q_nom

    def rhs(w_, v_, AP, AQ, up, uq):
        Vi = v_nom + v_
        P = sP * Vi * Vi + Vi * AP
        Q = sQ * Vi * Vi + Vi * AQ
        return (w_,
                (-w_ + lam_p * (p0 + up - P)) / tau,
                (-v_ + lam_q * (q0 + uq - Q)) / tau)

    for n in range(N):
        if n < n_steps:
            # inputs for [t_n, t_n+1)
            if sc.control == "stochastic" and n % ctrl_ticks == 0:
                u_p = float(rng.uniform(*sc.u_omega))
                u_q = float(rng.uniform(*sc.u_v))
            elif sc.control == "switching":
                u_p, u_q = switching_policy_step(w, v, spec, sc.u_omega, sc.u_v, sc.threshold,
                                                 (u_p, u_q), allow_empty=True)
            if sc.neighbors == "stochastic":
                if n % nb_ticks == 0:
                    lo, hi = _coupled(*s_v, v, spec.delta_v)
                    wlo, whi = _coupled(*s_w, w, spec.delta_omega)
                    for j in range(m):
                        thk[j] = rng.uniform(*s_th)
                        vk[j] = rng.uniform(lo, hi) if lo < hi else lo
                        wk[j] = rng.uniform(wlo, whi) if wlo < whi else wlo
            else:
                thk[:] = s_th[0] if sc.theta_side == "lower" else s_th[1]
                if sc.v_side == "lower":
                    vk[:] = max(s_v[0], v - spec.delta_v)
                else:
                    vk[:] = min(s_v[1], v + spec.delta_v)
                wk[:] = 0.0
        TH[n], W[n], V[n] = th, w, v
        UP[n], UQ[n] = u_p, u_q
        THK[n], VK[n], WK[n] = thk, vk, wk
        if n == n_steps:
            break
        if halt is not None and (min(w - s_w[0], s_w[1] - w) < -halt * (s_w[1] - s_w[0])
                                 or min(v - s_v[0], s_v[1] - v) < -halt * (s_v[1] - s_v[0])):
            halted = n
            break

        Vk = cp.v_nom_k + vk
        cs, sn = np.cos(thk), np.sin(thk)
        AP = float(np.dot(Vk, cp.a * cs + cp.b * sn))
        AQ = float(np.dot(Vk, cq.a * cs + cq.b * sn))
        k1 = rhs(w, v, AP, AQ, u_p, u_q)
        k2 = rhs(w + 0.5 * h * k1[1], v + 0.5 * h * k1[2], AP, AQ, u_p, u_q)
        k3 = rhs(w + 0.5 * h * k2[1], v + 0.5 * h * k2[2], AP, AQ, u_p, u_q)
        k4 = rhs(w + h * k3[1], v + h * k3[2], AP, AQ, u_p, u_q)
        th += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        w += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        v += h / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        if not (math.isfinite(th) and math.isfinite(w) and math.isfinite(v)):
            raise SimulationError(f"non-finite state at step {n + 1} (t = {(n + 1) * h:.6g} s)")

    if halted is not None:
        keep = halted + 1
        time, TH, W, V, UP, UQ, THK, VK, WK = (a[:keep] for a in (time, TH, W, V, UP, UQ, THK, VK, WK))
    mw, mv = safety_margins(W, V, spec)
    meta = {"node": i, "lambda_p": lam_p, "lambda_q": lam_q, "scenario": sc.to_dict(),
            "halted_at": None if halted is None else float(time[-1])}
    return SimTrace(i, tuple(nb), time, TH, W, V, UP, UQ, THK, VK, WK, mw, mv, meta)


def discretization_allowance(model: NetworkModel, i: int, spec: SafetySpec, scenario: Scenario,
                             u_p_range=None, u_q_range=None) -> tuple[float, float]:
    """``step`` times a bound on |d omega/dt| and |dv/dt| over the safe operating set.

    Returns ``(omega allowance in rad/s, voltage allowance in p.u.)``.
    """
    p = model.params(i)
    lam_p = p.lambda_p if scenario.lambda_p is None else scenario.lambda_p
    lam_q = p.lambda_q if scenario.lambda_q is None else scenario.lambda_q
    if u_p_range is None:
        u_p_range = scenario.u_omega or (scenario.u_p, scenario.u_p)
    if u_q_range is None:
        u_q_range = scenario.u_v or (scenario.u_q, scenario.u_q)
    box = DisturbanceBox.from_spec(model, i, spec, coupled=False)
    lo, hi = box.bounds()
    out = []
    for kind, lam, nom, (ulo, uhi), (slo, shi) in (
        ("active", lam_p, p.p_nom, sorted(u_p_range), spec.s_omega),
        ("reactive", lam_q, p.q_nom, sorted(u_q_range), spec.s_v),
    ):
        f, _ = PowerObjective(coupling(model, i, kind)).enclose(lo[None], hi[None], grad=False)
        drive = Iv(nom + ulo, nom + uhi) - f
        bound = (max(abs(slo), abs(shi)) + lam * float(drive.mag[0])) / p.tau
        out.append(scenario.step * bound)
    return out[0], out[1]


@dataclass
class ViolationReport:
    tolerance: float
    allowance: tuple[float, float]
    violations: list[tuple[int, float, str, float]]
    discretization_level: list[tuple[int, float, str, float]]
    worst_margin_omega: float
    worst_time_omega: float
    worst_margin_v: float
    worst_time_v: float

    @property
    def count(self) -> int:
        return len(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        return (f"{self.count} violations, {len(self.discretization_level)} discretization-level; "
                f"worst margins omega {self.worst_margin_omega:.6g} rad/s at t={self.worst_time_omega:.4g} s, "
                f"v {self.worst_margin_v:.6g} p.u. at t={self.worst_time_v:.4g} s")


def safety_monitor(trace: SimTrace, spec: SafetySpec, tolerance: float = 1e-6,
                   allowance: Sequence[float] = (0.0, 0.0)) -> ViolationReport:
    """Steps whose safety margin falls below ``-tolerance``.

    Margins between ``-tolerance - allowance`` and ``-tolerance`` are listed
    separately as discretization-level excursions.
    """
    mw, mv = safety_margins(trace.omega, trace.v, spec)
    viol, disc = [], []
    for name, marg, allow in (("omega", mw, allowance[0]), ("v", mv, allowance[1])):
        for n in np.flatnonzero(marg < -tolerance):
            entry = (int(n), float(trace.time[n]), name, float(marg[n]))
            (disc if marg[n] >= -tolerance - allow else viol).append(entry)
    viol.sort()
    disc.sort()
    jw, jv = int(np.argmin(mw)), int(np.argmin(mv))
    return ViolationReport(tolerance, tuple(allowance), viol, disc,
                           float(mw[jw]), float(trace.time[jw]), float(mv[jv]), float(trace.time[jv]))


TWO_PI = 2.0 * math.pi


def trace_columns(trace: SimTrace) -> list[str]:
    cols = ["time_s", "theta_i", "omega_i_hz", "v_i_dev", "u_p", "u_q"]
    for k in trace.neighbors:
        cols += [f"theta_{k}", f"v_{k}_dev"]
    return cols + ["margin_omega", "margin_v"]


def write_trace_csv(trace: SimTrace, path: str | Path, config: dict | None = None) -> None:
    """CSV export; frequency and its margin are written in Hz.

    An optional ``config`` dict is echoed on a leading ``#`` comment line.
    """
    with open(path, "w", newline="") as fh:
        if config is not None:
            fh.write("# config: " + json.dumps(config, sort_keys=True, default=str) + "\n")
        wr = csv.writer(fh)
        wr.writerow(trace_columns(trace))
        for n in range(len(trace)):
            row = [trace.time[n], trace.theta[n], trace.omega[n] / TWO_PI, trace.v[n],
                   trace.u_p[n], trace.u_q[n]]
            for j in range(len(trace.neighbors)):
                row += [trace.theta_k[n, j], trace.v_k[n, j]]
            row += [trace.margin_omega[n] / TWO_PI, trace.margin_v[n]]
            wr.writerow([repr(float(x)) for x in row])


def read_trace_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], np.array(rows[1:], dtype=float)
