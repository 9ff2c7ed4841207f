"""Power envelopes, admissible set-point intervals and maximal droop gains.

For a droop inverter with filter ``tau``, droop ``lam`` and safe interval
``[s_lo, s_hi]`` on the regulated state (frequency in rad/s, or voltage
deviation), the boundary sign conditions give

    lower control = s_lo / lam + F_max - F_nom
    upper control = s_hi / lam + F_min - F_nom

where ``F_max``/``F_min`` are the certified extremes of the injected power
(active for frequency, reactive for voltage) over the disturbance box.  The
interval is nonempty exactly when ``lam <= (s_hi - s_lo) / (F_max - F_min)``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .network import NetworkModel, SafetySpec
from .powerflow import coupling
from .optimize import (
    DEFAULT_BUDGET,
    DEFAULT_TOL,
    CertifiedBound,
    DisturbanceBox,
    extremize_bnb,
    extremize_separable,
)

log = logging.getLogger(__name__)

Channel = Literal["p", "q"]


class OptimizerError(RuntimeError):
    pass


class SafeSetWarning(UserWarning):
    """Zero is not in the interior of a safe set; existence of controls is not guaranteed."""


def _certified(model, i, kind, box, sense, tol, engine, form, budget, label) -> CertifiedBound:
    c = coupling(model, i, kind)
    if c.self_coef == 0.0 and not np.any(c.a) and not np.any(c.b):
        # no admittance at all: the injection is identically zero
        x = np.concatenate([[box.v_i[0]], np.ravel([[t[0], v[0]] for t, v in zip(box.theta, box.v_k)])])
        return CertifiedBound(0.0, 0.0, x, 0.0, "trivial", sense, 0, var_names=c.var_names)
    if form == "exact" and engine == "auto" and box.is_separable:
        return extremize_separable(model, i, kind, box, sense)
    if engine not in ("auto", "bnb"):
        raise ValueError(f"unknown engine {engine!r}")
    b = extremize_bnb(model, i, kind, box, sense, tol=tol, budget=budget, form=form)
    if not b.converged:
        raise OptimizerError(f"node {i}, {label}: {b.message}")
    return b


@dataclass
class PowerEnvelope:
    p_max: CertifiedBound
    p_min: CertifiedBound
    q_max: CertifiedBound
    q_min: CertifiedBound

    # conservative sides: maxima from above, minima from below
    @property
    def P_max(self) -> float:
        return float(self.p_max.hi)

    @property
    def P_min(self) -> float:
        return float(self.p_min.lo)

    @property
    def Q_max(self) -> float:
        return float(self.q_max.hi)

    @property
    def Q_min(self) -> float:
        return float(self.q_min.lo)

    def to_dict(self) -> dict:
        return {
            "P_max": self.P_max, "P_min": self.P_min, "Q_max": self.Q_max, "Q_min": self.Q_min,
            "bounds": {name: getattr(self, name).to_dict()
                       for name in ("p_max", "p_min", "q_max", "q_min")},
        }


def envelope_boxes(model: NetworkModel, i: int, spec: SafetySpec,
                   own_voltage: str = "free") -> dict[str, DisturbanceBox]:
    """Disturbance boxes of the four envelope problems.

    The frequency problems leave the own voltage free in ``s_v``
    (``own_voltage="free"``) or pin it at nominal (``"nominal"``).  The voltage
    problems pin it at the lower/upper bound of ``s_v``.
    """
    if own_voltage == "free":
        p_vi = None
    elif own_voltage == "nominal":
        p_vi = 0.0
    else:
        raise ValueError(f"own_voltage must be 'free' or 'nominal', got {own_voltage!r}")
    p_box = DisturbanceBox.from_spec(model, i, spec, v_i=p_vi)
    return {
        "p_max": p_box,
        "p_min": p_box,
        "q_max": DisturbanceBox.from_spec(model, i, spec, v_i=spec.s_v[0]),
        "q_min": DisturbanceBox.from_spec(model, i, spec, v_i=spec.s_v[1]),
    }


def power_envelope(model: NetworkModel, i: int, spec: SafetySpec, tol: float = DEFAULT_TOL,
                   engine: str = "auto", form: str = "exact", own_voltage: str = "free",
                   budget: int = DEFAULT_BUDGET, only: Sequence[str] | None = None) -> PowerEnvelope:
    """Certified extremes of P and Q at the safe-set bounds.

    Frequency does not enter the power flow, so both P problems share one box.
    ``engine="auto"`` uses the closed form where the box allows it and
    branch-and-bound otherwise; ``engine="bnb"`` always uses branch-and-bound.
    ``form="taylor3"`` optimises the cubic-angle polynomial.
    """
    boxes = envelope_boxes(model, i, spec, own_voltage)
    spec_of = {"p_max": ("active", "max"), "p_min": ("active", "min"),
               "q_max": ("reactive", "max"), "q_min": ("reactive", "min")}
    out = {}
    for name, (kind, sense) in spec_of.items():
        if only is not None and name not in only:
            out[name] = None
            continue
        out[name] = _certified(model, i, kind, boxes[name], sense, tol, engine, form, budget, name)
    return PowerEnvelope(**out)


@dataclass(frozen=True)
class AdmissibleInterval:
    lower: float
    upper: float

    @property
    def nonempty(self) -> bool:
        return self.lower <= self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper, "nonempty": self.nonempty}


def control_interval(lam: float, s_lo: float, s_hi: float, f_max: float, f_min: float,
                     f_nom: float) -> AdmissibleInterval:
    if not lam > 0:
        raise ValueError("droop must be positive")
    return AdmissibleInterval(s_lo / lam + f_max - f_nom, s_hi / lam + f_min - f_nom)


def critical_droop(s_lo: float, s_hi: float, f_max: float, f_min: float, tol: float = 0.0) -> float:
    """Largest droop with a nonempty interval; ``inf`` when no droop empties it."""
    spread = f_max - f_min
    if spread <= max(tol, 0.0):
        return math.inf
    return (s_hi - s_lo) / spread


def _check_prop2(spec: SafetySpec) -> list[str]:
    notes = []
    lo, hi = spec.s_omega
    if not lo < 0 < hi:
        msg = "0 is not interior to s_omega: admissible frequency controls may not exist for any droop"
        warnings.warn(msg, SafeSetWarning, stacklevel=3)
        notes.append(msg)
    lo, hi = spec.s_v
    if not lo < 0 < hi:
        msg = "0 is not interior to s_v: the existence condition for voltage controls is only sufficient"
        warnings.warn(msg, SafeSetWarning, stacklevel=3)
        notes.append(msg)
    return notes


def admissible_controls(model: NetworkModel, i: int, lambda_p: float, lambda_q: float,
                        spec: SafetySpec, tol: float = DEFAULT_TOL,
                        envelope: PowerEnvelope | None = None, **envelope_kw):
    """Admissible ``u_p`` (frequency) and ``u_q`` (voltage) intervals."""
    if not (lambda_p > 0 and lambda_q > 0):
        raise ValueError("droop must be positive")
    env = envelope or power_envelope(model, i, spec, tol, **envelope_kw)
    p = model.params(i)
    w_lo, w_hi = spec.s_omega
    v_lo, v_hi = spec.s_v
    u_p = control_interval(lambda_p, w_lo, w_hi, env.P_max, env.P_min, p.p_nom)
    u_q = control_interval(lambda_q, v_lo, v_hi, env.Q_max, env.Q_min, p.q_nom)
    return u_p, u_q


def max_droop(model: NetworkModel, i: int, spec: SafetySpec, tol: float = DEFAULT_TOL,
              envelope: PowerEnvelope | None = None, **envelope_kw) -> tuple[float, float]:
    """Maximal droop gains ``(lambda_p*, lambda_q*)``; ``inf`` when unbounded."""
    _check_prop2(spec)
    env = envelope or power_envelope(model, i, spec, tol, **envelope_kw)
    lp = critical_droop(*spec.s_omega, env.P_max, env.P_min, tol)
    lq = critical_droop(*spec.s_v, env.Q_max, env.Q_min, tol)
    return lp, lq


def simple_example(lambda_p: float) -> tuple[float, float]:
    """Single-neighbour toy: ``tau = 1``, ``G = -2``, ``theta = 0``, ``S = [-1, 1]``.

    The coupling reads ``P = -2 w w2`` with the neighbour ``w2`` in ``S``;
    returns ``(u_lower, u_upper)``.
    """
    if not lambda_p > 0:
        raise ValueError("droop must be positive")
    s_lo, s_hi = -1.0, 1.0
    # P is linear in w2, so its extremes sit at the ends of S
    p_at_lower = [-2.0 * s_lo * w2 for w2 in (s_lo, s_hi)]
    p_at_upper = [-2.0 * s_hi * w2 for w2 in (s_lo, s_hi)]
    iv = control_interval(lambda_p, s_lo, s_hi, max(p_at_lower), min(p_at_upper), 0.0)
    return iv.lower, iv.upper


def simple_example_max_droop() -> float:
    return critical_droop(-1.0, 1.0, 2.0, -2.0)


@dataclass(frozen=True)
class BoundaryCondition:
    name: str
    worst_derivative: float
    margin: float

    @property
    def holds(self) -> bool:
        return self.margin >= 0.0


@dataclass
class NagumoReport:
    node: int
    conditions: list[BoundaryCondition]

    @property
    def margins(self) -> dict[str, float]:
        return {c.name: c.margin for c in self.conditions}

    def all_hold(self, tol: float = 0.0) -> bool:
        return all(c.margin >= -tol for c in self.conditions)


def nagumo_check(model: NetworkModel, i: int, u_p: float, u_q: float, spec: SafetySpec,
                 tol: float = DEFAULT_TOL, lambda_p: float | None = None,
                 lambda_q: float | None = None, envelope: PowerEnvelope | None = None,
                 **envelope_kw) -> NagumoReport:
    """Worst-case state derivatives on the four safe-set faces.

    ``margin`` is ``tau`` times the derivative, signed so that a nonnegative
    margin means the vector field points into the safe set on that face.
    """
    p = model.params(i)
    lp = p.lambda_p if lambda_p is None else lambda_p
    lq = p.lambda_q if lambda_q is None else lambda_q
    env = envelope or power_envelope(model, i, spec, tol, **envelope_kw)
    w_lo, w_hi = spec.s_omega
    v_lo, v_hi = spec.s_v
    # tau * derivative at each face, worst case over the disturbance box
    up_w = -w_hi + lp * (p.p_nom + u_p - env.P_min)
    lo_w = -w_lo + lp * (p.p_nom + u_p - env.P_max)
    up_v = -v_hi + lq * (p.q_nom + u_q - env.Q_min)
    lo_v = -v_lo + lq * (p.q_nom + u_q - env.Q_max)
    conds = [
        BoundaryCondition("omega_upper", up_w / p.tau, -up_w),
        BoundaryCondition("omega_lower", lo_w / p.tau, lo_w),
        BoundaryCondition("v_upper", up_v / p.tau, -up_v),
        BoundaryCondition("v_lower", lo_v / p.tau, lo_v),
    ]
    return NagumoReport(i, conds)


@dataclass
class DroopSweep:
    channel: str
    lambdas: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    lambda_star: float
    f_max: float
    f_min: float
    f_nom: float

    @property
    def nonempty(self) -> np.ndarray:
        return self.lower <= self.upper

    @property
    def crossing(self) -> int | None:
        """Index of the first grid point after which the interval is empty."""
        ne = self.nonempty
        for j in range(len(ne) - 1):
            if ne[j] and not ne[j + 1]:
                return j
        return None

    def rows(self):
        for lam, lo, hi, ne in zip(self.lambdas, self.lower, self.upper, self.nonempty):
            yield float(lam), float(lo), float(hi), bool(ne)


def droop_sweep(model: NetworkModel, i: int, spec: SafetySpec, lambda_grid, channel: Channel = "p",
                tol: float = DEFAULT_TOL, envelope: PowerEnvelope | None = None,
                **envelope_kw) -> DroopSweep:
    """Admissible interval endpoints across a grid of droop gains."""
    lams = np.asarray(lambda_grid, dtype=float)
    if lams.size == 0:
        raise ValueError("empty droop grid")
    if np.any(lams <= 0):
        raise ValueError("droop must be positive")
    p = model.params(i)
    if channel == "p":
        only = ("p_max", "p_min")
        s_lo, s_hi = spec.s_omega
    elif channel == "q":
        only = ("q_max", "q_min")
        s_lo, s_hi = spec.s_v
    else:
        raise ValueError(f"channel must be 'p' or 'q', got {channel!r}")
    env = envelope or power_envelope(model, i, spec, tol, only=only, **envelope_kw)
    if channel == "p":
        f_max, f_min, f_nom = env.P_max, env.P_min, p.p_nom
    else:
        f_max, f_min, f_nom = env.Q_max, env.Q_min, p.q_nom
    lower = s_lo / lams + f_max - f_nom
    upper = s_hi / lams + f_min - f_nom
    star = critical_droop(s_lo, s_hi, f_max, f_min, tol)
    return DroopSweep(channel, lams, lower, upper, star, f_max, f_min, f_nom)


SWEEP_AXES = ("delta_v", "s_theta_halfwidth", "s_v_width")


@dataclass
class SensitivitySweep:
    axis: str
    values: np.ndarray
    lambda_q_star: np.ndarray
    q_max: np.ndarray
    q_min: np.ndarray

    def rows(self):
        for x, lq, a, b in zip(self.values, self.lambda_q_star, self.q_max, self.q_min):
            yield float(x), float(lq), float(a), float(b)


def swept_spec(spec: SafetySpec, axis: str, value: float) -> SafetySpec:
    if axis == "delta_v":
        return spec.replace(delta_v=value)
    if axis == "s_theta_halfwidth":
        return spec.replace(s_theta=(-value, value))
    if axis == "s_v_width":
        mid = 0.5 * (spec.s_v[0] + spec.s_v[1])
        return spec.replace(s_v=(mid - 0.5 * value, mid + 0.5 * value))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def sensitivity_sweep(model: NetworkModel, i: int, spec: SafetySpec, axis: str, grid,
                      tol: float = DEFAULT_TOL, **envelope_kw) -> SensitivitySweep:
    """``lambda_q*`` as one uncertainty parameter varies.

    For ``s_v_width`` the grid values are widths and the voltage safe set is
    rescaled about its midpoint.
    """
    values = np.asarray(grid, dtype=float)
    if values.size == 0:
        raise ValueError("empty sweep grid")
    lq, qmax, qmin = [], [], []
    for x in values:
        sp = swept_spec(spec, axis, float(x))
        env = power_envelope(model, i, sp, tol, only=("q_max", "q_min"), **envelope_kw)
        qmax.append(env.Q_max)
        qmin.append(env.Q_min)
        lq.append(critical_droop(*sp.s_v, env.Q_max, env.Q_min, tol))
    return SensitivitySweep(axis, values, np.array(lq), np.array(qmax), np.array(qmin))


def _render(x: float):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class AdmissibleReport:
    node: int
    envelope: PowerEnvelope
    lambda_p: float
    lambda_q: float
    u_omega: AdmissibleInterval
    u_v: AdmissibleInterval
    lambda_p_star: float
    lambda_q_star: float
    notes: list[str] = field(default_factory=list)

    @property
    def nonempty(self) -> bool:
        return self.u_omega.nonempty and self.u_v.nonempty

    def to_dict(self) -> dict:
        return {
            "node": self.node,
            "lambda_p": self.lambda_p,
            "lambda_q": self.lambda_q,
            "envelope": self.envelope.to_dict(),
            "u_omega": self.u_omega.to_dict(),
            "u_v": self.u_v.to_dict(),
            "lambda_p_star": _render(self.lambda_p_star),
            "lambda_q_star": _render(self.lambda_q_star),
            "notes": list(self.notes),
        }


def verify_node(model: NetworkModel, i: int, spec: SafetySpec, lambda_p: float | None = None,
                lambda_q: float | None = None, tol: float = DEFAULT_TOL,
                **envelope_kw) -> AdmissibleReport:
    """Envelope, admissible intervals and maximal droops for one node.

    Droop gains default to the node's own parameters.
    """
    p = model.params(i)
    lp = p.lambda_p if lambda_p is None else lambda_p
    lq = p.lambda_q if lambda_q is None else lambda_q
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SafeSetWarning)
        env = power_envelope(model, i, spec, tol, **envelope_kw)
        stars = max_droop(model, i, spec, tol, envelope=env)
    notes = [str(w.message) for w in caught if issubclass(w.category, SafeSetWarning)]
    for n in notes:
        log.warning("node %s: %s", i, n)
    u_p, u_q = admissible_controls(model, i, lp, lq, spec, tol, envelope=env)
    return AdmissibleReport(i, env, lp, lq, u_p, u_q, stars[0], stars[1], notes)
