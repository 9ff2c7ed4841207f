"""Certified extrema of a node's power injection over a disturbance box.

Three engines share one box description:

* :func:`extremize_separable` - closed form, for boxes with the own voltage
  pinned (the objective then splits into independent per-neighbour terms).
* :func:`extremize_bnb` - interval branch-and-bound for any box, including a
  free own voltage and neighbour voltages coupled to it.
* :func:`grid_oracle` - brute-force tensor grid, a test oracle only.

Variables are always ordered ``[v_i, theta_k1, v_k1, theta_k2, v_k2, ...]``
with neighbours sorted by id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .interval import Iv, _down, _up
from .network import NetworkModel, SafetySpec, other_neighbors
from .powerflow import Coupling, Kind, PolynomialExpr, coupling, injection, injection_at, taylor3_power

Sense = Literal["min", "max"]

DEFAULT_TOL = 1e-6
DEFAULT_BUDGET = 10**6
_EPS = np.finfo(float).eps


class InfeasibleBoxError(ValueError):
    pass


class CoupledBoxError(ValueError):
    pass


class OracleBudgetError(ValueError):
    pass


@dataclass(frozen=True)
class DisturbanceBox:
    """Box over ``[v_i, theta_k, v_k ...]``.

    With a finite ``delta_v`` the neighbour voltages are additionally tied to
    the own voltage: ``|v_k - v_i| <= delta_v``.  The ``v_k`` intervals are
    then the outer set (usually ``S_v``) that the coupling band is cut from.
    """

    node: int
    neighbors: tuple[int, ...]
    v_i: tuple[float, float]
    theta: tuple[tuple[float, float], ...]
    v_k: tuple[tuple[float, float], ...]
    delta_v: float = math.inf

    def __post_init__(self):
        if not (len(self.neighbors) == len(self.theta) == len(self.v_k)):
            raise ValueError("neighbors, theta and v_k must have equal length")
        for name, (lo, hi) in [("v_i", self.v_i), *(("theta", t) for t in self.theta),
                               *(("v_k", v) for v in self.v_k)]:
            if not lo <= hi:
                raise InfeasibleBoxError(f"empty interval for {name}: [{lo}, {hi}]")
        if self.delta_v < 0 or math.isnan(self.delta_v):
            raise ValueError("delta_v must be >= 0")
        if self.coupled:
            lo, hi = self.v_i
            for k, (jlo, jhi) in zip(self.neighbors, self.v_k):
                # every v_i in [lo, hi] must leave a nonempty v_k band
                if jlo > lo + self.delta_v or jhi < hi - self.delta_v:
                    raise InfeasibleBoxError(
                        f"coupled interval for v_{k} is empty for some v_i in [{lo}, {hi}]"
                    )

    @classmethod
    def from_spec(cls, model: NetworkModel, i: int, spec: SafetySpec,
                  v_i: float | tuple[float, float] | None = None,
                  coupled: bool = True) -> "DisturbanceBox":
        """Standard box: angles in ``s_theta``, voltages in ``s_v``.

        ``v_i`` may pin the own voltage (a float), restrict it (an interval) or
        leave it free in ``s_v`` (None).
        """
        nb = tuple(other_neighbors(model, i))
        if v_i is None:
            vi = spec.s_v
        elif isinstance(v_i, tuple):
            vi = v_i
        else:
            vi = (float(v_i), float(v_i))
        return cls(i, nb, tuple(vi), tuple(spec.s_theta for _ in nb),
                   tuple(spec.s_v for _ in nb), spec.delta_v if coupled else math.inf)

    @property
    def m(self) -> int:
        return len(self.neighbors)

    @property
    def n(self) -> int:
        return 1 + 2 * self.m

    @property
    def coupled(self) -> bool:
        return math.isfinite(self.delta_v) and self.m > 0

    @property
    def v_i_fixed(self) -> bool:
        return self.v_i[0] == self.v_i[1]

    @property
    def is_separable(self) -> bool:
        return self.v_i_fixed

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = [self.v_i[0]]
        hi = [self.v_i[1]]
        for t, v in zip(self.theta, self.v_k):
            lo += [t[0], v[0]]
            hi += [t[1], v[1]]
        return np.array(lo), np.array(hi)

    def resolved(self) -> "DisturbanceBox":
        """With ``v_i`` pinned, fold the coupling band into plain ``v_k`` intervals."""
        if not (self.coupled and self.v_i_fixed):
            return self
        v = self.v_i[0]
        d = self.delta_v
        vk = tuple((max(lo, v - d), min(hi, v + d)) for lo, hi in self.v_k)
        return DisturbanceBox(self.node, self.neighbors, self.v_i, self.theta, vk)

    def contains(self, x, atol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        lo, hi = self.bounds()
        if np.any(x < lo - atol) or np.any(x > hi + atol):
            return False
        if self.coupled:
            return bool(np.all(np.abs(x[2::2] - x[0]) <= self.delta_v + atol))
        return True

    def with_delta(self, delta_v: float) -> "DisturbanceBox":
        return DisturbanceBox(self.node, self.neighbors, self.v_i, self.theta, self.v_k, delta_v)


@dataclass
class CertifiedBound:
    """Enclosure ``[lo, hi]`` of a global extremum plus a witness point."""

    lo: float
    hi: float
    witness: np.ndarray
    witness_value: float
    engine: str
    sense: str
    boxes: int = 0
    converged: bool = True
    var_names: list[str] = field(default_factory=list)
    message: str = ""

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def conservative(self) -> float:
        """The side that keeps downstream certificates sound."""
        return self.hi if self.sense == "max" else self.lo

    def to_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "witness": dict(zip(self.var_names, map(float, self.witness))),
            "witness_value": self.witness_value,
            "engine": self.engine,
            "sense": self.sense,
            "boxes": self.boxes,
            "converged": self.converged,
            "message": self.message,
        }


def _check_sense(sense: str) -> None:
    if sense not in ("min", "max"):
        raise ValueError(f"sense must be 'min' or 'max', got {sense!r}")


def _check_box(model: NetworkModel, i: int, box: DisturbanceBox) -> None:
    if box.node != i or tuple(box.neighbors) != tuple(other_neighbors(model, i)):
        raise ValueError(f"box does not match the neighbourhood of node {i}")


# --- closed-form engine ---------------------------------------------------------


def _angle_range(a: float, b: float, t0: float, t1: float):
    """Extremes of a cos t + b sin t on [t0, t1] with their arguments."""
    cands = [t0, t1]
    if a != 0.0 or b != 0.0:
        # a cos t + b sin t = R cos(t - phi): critical angles phi + n pi
        phi = math.atan2(b, a)
        n0 = math.ceil((t0 - phi) / math.pi)
        n1 = math.floor((t1 - phi) / math.pi)
        cands += [phi + n * math.pi for n in range(n0, n1 + 1)]
    cands = [min(max(t, t0), t1) for t in cands]
    vals = [a * math.cos(t) + b * math.sin(t) for t in cands]
    jmin = min(range(len(vals)), key=vals.__getitem__)
    jmax = max(range(len(vals)), key=vals.__getitem__)
    return (vals[jmin], cands[jmin]), (vals[jmax], cands[jmax])


def extremize_separable(model: NetworkModel, i: int, kind: Kind, box: DisturbanceBox,
                        sense: Sense) -> CertifiedBound:
    """Exact extremum when the own voltage is pinned.

    Each neighbour contributes ``V_i V_k h_k(theta_k)`` with independent
    ``(V_k, theta_k)``; its extremum is at a corner of ``[V_k] x [h_k]`` where
    ``[h_k]`` is the exact range of ``h_k`` over the angle interval.
    """
    _check_sense(sense)
    _check_box(model, i, box)
    if not box.v_i_fixed:
        raise CoupledBoxError("own voltage is not pinned; use extremize_bnb")
    box = box.resolved()
    c = coupling(model, i, kind)
    sign = 1.0 if sense == "max" else -1.0
    vi = box.v_i[0]
    Vi = c.v_nom + vi
    self_term = sign * c.self_coef * Vi * Vi
    total = self_term
    mag = abs(self_term)
    x = [vi]
    for j in range(c.m):
        (hmin, tmin), (hmax, tmax) = _angle_range(sign * c.a[j], sign * c.b[j], *box.theta[j])
        V0 = c.v_nom_k[j] + box.v_k[j][0]
        V1 = c.v_nom_k[j] + box.v_k[j][1]
        corners = [(Vi * V * h, t, V) for V in (V0, V1) for h, t in ((hmin, tmin), (hmax, tmax))]
        best, t, V = max(corners, key=lambda z: z[0])
        total += best
        mag += abs(best)
        x += [t, V - c.v_nom_k[j]]
    pad = 4.0 * (c.m + 2) * _EPS * mag + 1e-300
    witness = np.array(x)
    wval = float(injection_at(c, witness)[0])
    lo, hi = float(total - pad), float(total + pad)
    if sense == "min":
        lo, hi = -hi, -lo
    return CertifiedBound(lo, hi, witness, wval, "analytic", sense, boxes=1,
                          var_names=c.var_names)


# --- objectives for branch-and-bound ----------------------------------------------


class PowerObjective:
    """Exact trigonometric injection with interval enclosures of value and gradient."""

    def __init__(self, c: Coupling):
        self.c = c
        self.n = 1 + 2 * c.m

    def value(self, x) -> np.ndarray:
        return injection_at(self.c, x)

    def enclose(self, lo, hi, grad: bool = True):
        c = self.c
        Vi = Iv(lo[:, 0], hi[:, 0]) + c.v_nom
        inner = None
        parts = []
        for j in range(c.m):
            th = Iv(lo[:, 1 + 2 * j], hi[:, 1 + 2 * j])
            Vk = Iv(lo[:, 2 + 2 * j], hi[:, 2 + 2 * j]) + c.v_nom_k[j]
            cs, sn = th.cos(), th.sin()
            h = cs * c.a[j] + sn * c.b[j]
            term = Vk * h
            inner = term if inner is None else inner + term
            parts.append((Vk, h, cs, sn))
        f = Vi.sqr() * c.self_coef
        if inner is not None:
            f = f + Vi * inner
        if not grad:
            return f, None
        g_vi = Vi * (2.0 * c.self_coef)
        if inner is not None:
            g_vi = g_vi + inner
        g = [g_vi]
        for j, (Vk, h, cs, sn) in enumerate(parts):
            dh = sn * (-c.a[j]) + cs * c.b[j]
            g.append(Vi * Vk * dh)
            g.append(Vi * h)
        return f, g


class PolynomialObjective:
    """Polynomial objective (the cubic-angle form) with interval enclosures."""

    def __init__(self, poly: PolynomialExpr):
        self.poly = poly
        self.n = len(poly.variables)
        self.dpolys = [poly.derivative(j) for j in range(self.n)]

    def value(self, x) -> np.ndarray:
        return self.poly(x)

    @staticmethod
    def _eval(poly, X):
        N = X[0].lo.shape[0]
        total = Iv(np.zeros(N))
        for e, c in poly.terms.items():
            mono = None
            for j, p in enumerate(e):
                if p:
                    f = X[j] ** p
                    mono = f if mono is None else mono * f
            total = total + (Iv(np.full(N, c)) if mono is None else mono * c)
        return total

    def enclose(self, lo, hi, grad: bool = True):
        X = [Iv(lo[:, j], hi[:, j]) for j in range(self.n)]
        f = self._eval(self.poly, X)
        if not grad:
            return f, None
        return f, [self._eval(d, X) for d in self.dpolys]


class _Negated:
    def __init__(self, obj):
        self.obj = obj
        self.n = obj.n

    def value(self, x):
        return -self.obj.value(x)

    def enclose(self, lo, hi, grad=True):
        f, g = self.obj.enclose(lo, hi, grad)
        return -f, (None if g is None else [-gj for gj in g])


def make_objective(model: NetworkModel, i: int, kind: Kind, form: str = "exact"):
    if form == "exact":
        return PowerObjective(coupling(model, i, kind))
    if form == "taylor3":
        return PolynomialObjective(taylor3_power(model, i, kind))
    raise ValueError(f"unknown objective form {form!r}")


# --- branch-and-bound -----------------------------------------------------------


class _Coordinates:
    """Maps search coordinates ``y`` to model coordinates ``x``.

    Uncoupled boxes search ``x`` directly.  Coupled boxes search the offsets
    ``d_k = v_k - v_i`` in ``[-delta, delta]`` so the coupling becomes a box
    constraint, leaving only ``v_i + d_k`` in the outer ``v_k`` interval.
    """

    def __init__(self, box: DisturbanceBox):
        self.box = box
        self.coupled = box.coupled
        self.vidx = np.arange(2, box.n, 2)
        self.tidx = np.arange(1, box.n, 2)
        lo, hi = box.bounds()
        self.J_lo = lo[self.vidx]
        self.J_hi = hi[self.vidx]
        if self.coupled:
            d = box.delta_v
            lo = lo.copy()
            hi = hi.copy()
            lo[self.vidx] = np.maximum(-d, self.J_lo - box.v_i[1])
            hi[self.vidx] = np.minimum(d, self.J_hi - box.v_i[0])
        self.root_lo, self.root_hi = lo, hi

    def to_x(self, ylo, yhi):
        if not self.coupled:
            return ylo, yhi
        xlo, xhi = ylo.copy(), yhi.copy()
        xlo[:, self.vidx] = _down(ylo[:, self.vidx] + ylo[:, [0]])
        xhi[:, self.vidx] = _up(yhi[:, self.vidx] + yhi[:, [0]])
        return xlo, xhi

    def clip_x(self, xlo, xhi):
        """Intersect with the outer ``v_k`` intervals (sound for feasible points only)."""
        if not self.coupled:
            return xlo, xhi
        xlo, xhi = xlo.copy(), xhi.copy()
        xlo[:, self.vidx] = np.maximum(xlo[:, self.vidx], self.J_lo)
        xhi[:, self.vidx] = np.minimum(xhi[:, self.vidx], self.J_hi)
        return xlo, xhi

    def propagate(self, ylo, yhi):
        """Tighten boxes against ``v_i + d_k`` in J; returns a feasibility mask."""
        if not self.coupled:
            return ylo, yhi, np.all(ylo <= yhi, axis=1)
        ylo, yhi = ylo.copy(), yhi.copy()
        v = self.vidx
        for _ in range(2):
            ylo[:, v] = np.maximum(ylo[:, v], _down(self.J_lo - yhi[:, [0]]))
            yhi[:, v] = np.minimum(yhi[:, v], _up(self.J_hi - ylo[:, [0]]))
            ylo[:, 0] = np.maximum(ylo[:, 0], _down(self.J_lo - yhi[:, v]).max(axis=1))
            yhi[:, 0] = np.minimum(yhi[:, 0], _up(self.J_hi - ylo[:, v]).min(axis=1))
        return ylo, yhi, np.all(ylo <= yhi, axis=1)

    def fully_feasible(self, ylo, yhi):
        if not self.coupled:
            return np.ones(ylo.shape[0], dtype=bool)
        v = self.vidx
        ok_lo = _down(ylo[:, v] + ylo[:, [0]]) >= self.J_lo
        ok_hi = _up(yhi[:, v] + yhi[:, [0]]) <= self.J_hi
        return np.all(ok_lo & ok_hi, axis=1)

    def feasible_point(self, y):
        """Feasible model point near search point ``y`` (rows)."""
        if not self.coupled:
            return y.copy()
        x = y.copy()
        v = self.vidx
        d = self.box.delta_v
        vi = y[:, [0]]
        off = np.clip(y[:, v], np.maximum(-d, self.J_lo - vi), np.minimum(d, self.J_hi - vi))
        x[:, v] = np.clip(vi + off, self.J_lo, self.J_hi)
        return x

    def grad_y(self, g):
        if not self.coupled:
            return g
        g = list(g)
        gi = g[0]
        for j in self.vidx:
            gi = gi + g[j]
        g[0] = gi
        return g


def _evaluate(obj, coords: _Coordinates, ylo, yhi):
    """Upper bounds (for maximisation) and gradient enclosures in y."""
    xlo, xhi = coords.to_x(ylo, yhi)
    nat, gx = obj.enclose(xlo, xhi, grad=True)
    if coords.coupled:
        clo, chi = coords.clip_x(xlo, xhi)
        nat2, _ = obj.enclose(clo, chi, grad=False)
        nat = nat.intersect(nat2)
    gy = coords.grad_y(gx)
    yc = 0.5 * (ylo + yhi)
    xc_lo, xc_hi = coords.to_x(yc, yc)
    fc, _ = obj.enclose(xc_lo, xc_hi, grad=False)
    mv = fc
    for j in range(ylo.shape[1]):
        mv = mv + gy[j] * (Iv(ylo[:, j], yhi[:, j]) - yc[:, j])
    ub = np.minimum(nat.hi, mv.hi)
    return ub, gy


def _maximize(obj, box: DisturbanceBox, tol: float, budget: int, batch: int = 256):
    coords = _Coordinates(box)
    n = box.n
    ylo, yhi, ok = coords.propagate(coords.root_lo[None, :], coords.root_hi[None, :])
    if not ok[0]:
        raise InfeasibleBoxError("disturbance box has no feasible point")

    best_lo = -np.inf
    best_x = None
    best_val = -np.inf
    frozen_ub = -np.inf
    evaluated = 0

    def process(clo, chi, parent_ub):
        nonlocal best_lo, best_x, best_val, evaluated
        clo, chi, ok = coords.propagate(clo, chi)
        clo, chi, parent_ub = clo[ok], chi[ok], parent_ub[ok]
        if clo.shape[0] == 0:
            return clo, chi, parent_ub, np.zeros(0, dtype=int)
        evaluated += clo.shape[0]
        ub, g = _evaluate(obj, coords, clo, chi)
        # monotonicity: collapse dimensions with a strict gradient sign
        blocked = np.ones((clo.shape[0], n), dtype=bool)
        blocked[:, coords.tidx] = False
        ff = coords.fully_feasible(clo, chi)
        blocked[ff] = False
        reduced = False
        for j in range(n):
            can = ~blocked[:, j] & (chi[:, j] > clo[:, j])
            up = can & (g[j].lo > 0)
            dn = can & (g[j].hi < 0)
            if up.any() or dn.any():
                reduced = True
                clo[up, j] = chi[up, j]
                chi[dn, j] = clo[dn, j]
        if reduced:
            ub, g = _evaluate(obj, coords, clo, chi)
        ub = np.minimum(ub, parent_ub)
        # incumbent from a feasible point near each box centre
        xp = coords.feasible_point(0.5 * (clo + chi))
        fp, _ = obj.enclose(xp, xp, grad=False)
        k = int(np.argmax(fp.lo))
        if fp.lo[k] > best_lo:
            best_lo = float(fp.lo[k])
            best_x = xp[k].copy()
            best_val = float(obj.value(xp[k])[0])
        width = chi - clo
        score = width * np.stack([gj.mag for gj in g], axis=1)
        score = np.where(np.isfinite(score), score, np.inf)
        split = np.argmax(score, axis=1)
        flat = score.max(axis=1) <= 0
        split[flat] = np.argmax(width[flat], axis=1)
        return clo, chi, ub, split

    plo, phi, pub, psplit = process(ylo, yhi, np.array([np.inf]))
    converged = False
    while True:
        keep = pub >= best_lo
        plo, phi, pub, psplit = plo[keep], phi[keep], pub[keep], psplit[keep]
        # point boxes cannot be split further
        point = np.all(phi <= plo, axis=1)
        if point.any():
            frozen_ub = max(frozen_ub, float(pub[point].max()))
            plo, phi, pub, psplit = plo[~point], phi[~point], pub[~point], psplit[~point]
        gub = max(float(pub.max()) if pub.size else -np.inf, frozen_ub, best_lo)
        if gub - best_lo <= tol:
            converged = True
            break
        if evaluated >= budget:
            break
        order = np.argsort(-pub, kind="stable")
        take, rest = order[:batch], order[batch:]
        blo, bhi, bub, bs = plo[take], phi[take], pub[take], psplit[take]
        rows = np.arange(blo.shape[0])
        mid = 0.5 * (blo[rows, bs] + bhi[rows, bs])
        lo1, hi1 = blo.copy(), bhi.copy()
        hi1[rows, bs] = mid
        lo2, hi2 = blo.copy(), bhi.copy()
        lo2[rows, bs] = mid
        clo = np.concatenate([lo1, lo2])
        chi = np.concatenate([hi1, hi2])
        cub = np.concatenate([bub, bub])
        clo, chi, cub, cs = process(clo, chi, cub)
        plo = np.concatenate([plo[rest], clo])
        phi = np.concatenate([phi[rest], chi])
        pub = np.concatenate([pub[rest], cub])
        psplit = np.concatenate([psplit[rest], cs])

    return best_lo, gub, best_x, best_val, evaluated, converged


def extremize_bnb(model: NetworkModel, i: int, kind: Kind, box: DisturbanceBox, sense: Sense,
                  tol: float = DEFAULT_TOL, budget: int = DEFAULT_BUDGET,
                  form: str = "exact") -> CertifiedBound:
    """Interval branch-and-bound; the enclosure width is at most ``tol`` on success.

    ``form="taylor3"`` optimises the cubic-angle polynomial instead of the
    exact injection.  Exceeding ``budget`` boxes returns the current
    enclosure with ``converged=False``.
    """
    _check_sense(sense)
    _check_box(model, i, box)
    if not tol > 0:
        raise ValueError("tol must be positive")
    box = box.resolved()
    obj = make_objective(model, i, kind, form)
    names = coupling(model, i, kind).var_names
    run = obj if sense == "max" else _Negated(obj)
    lo, hi, x, val, boxes, ok = _maximize(run, box, tol, budget)
    if sense == "min":
        lo, hi, val = -hi, -lo, -val
    msg = "" if ok else f"budget of {budget} boxes exhausted; enclosure width {hi - lo:.3g}"
    return CertifiedBound(lo, hi, x, val, f"branch-and-bound/{form}", sense, boxes, ok, names, msg)


# --- grid oracle ----------------------------------------------------------------


def grid_oracle(model: NetworkModel, i: int, kind: Kind, box: DisturbanceBox, sense: Sense,
                points_per_dim: int, budget: int = 5_000_000):
    """Brute-force extremum over a tensor grid of the box.

    Coupled neighbour voltages are gridded across their band
    ``[max(lo, v_i - delta), min(hi, v_i + delta)]`` for each gridded ``v_i``,
    so every grid point is feasible and the corners of the feasible set are
    included.  Returns ``(value, point)``.
    """
    _check_sense(sense)
    _check_box(model, i, box)
    if points_per_dim < 2:
        raise ValueError("points_per_dim must be >= 2")
    c = coupling(model, i, kind)
    lo, hi = box.bounds()
    n = box.n
    coupled = box.coupled
    axes = []
    for j in range(n):
        if coupled and j >= 2 and j % 2 == 0:
            degenerate = box.delta_v == 0.0 or lo[j] == hi[j]
            axes.append(np.array([0.0]) if degenerate else np.linspace(0.0, 1.0, points_per_dim))
        else:
            axes.append(np.array([lo[j]]) if lo[j] == hi[j] else np.linspace(lo[j], hi[j], points_per_dim))
    total = math.prod(len(a) for a in axes)
    if total > budget:
        raise OracleBudgetError(f"grid of {total} points exceeds budget {budget}")

    sign = 1.0 if sense == "max" else -1.0
    best_val = -np.inf
    best_x = None
    grids = np.meshgrid(*axes, indexing="ij", sparse=False)
    pts = np.stack([g.ravel() for g in grids], axis=1)
    chunk = 500_000
    for s in range(0, total, chunk):
        x = pts[s:s + chunk].copy()
        if coupled:
            vi = x[:, [0]]
            vlo = np.maximum(lo[2::2], vi - box.delta_v)
            vhi = np.minimum(hi[2::2], vi + box.delta_v)
            x[:, 2::2] = vlo + x[:, 2::2] * (vhi - vlo)
        f = sign * injection(c, x[:, 0], x[:, 1::2], x[:, 2::2])
        k = int(np.argmax(f))
        if f[k] > best_val:
            best_val = float(f[k])
            best_x = x[k].copy()
    return sign * best_val, best_x
