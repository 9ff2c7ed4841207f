"""Injected active/reactive power at one node and its cubic-in-angle polynomial.

All angles are measured relative to the focal node, whose own angle is the
reference (zero).  Voltages are deviations from each node's ``v_nom``.

For node ``i`` both injections share the form::

    f = s * V_i**2 + V_i * sum_k V_k * (a_k cos(theta_k) + b_k sin(theta_k))

with ``V = v_nom + v`` and

    active:   s = G_ii,  a_k = G_ik,  b_k = -B_ik
    reactive: s = -B_ii, a_k = -B_ik, b_k = -G_ik
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np

from .network import NetworkModel, SafetySpec, neighbors, other_neighbors

Kind = Literal["active", "reactive"]

MAX_DEGREE = 5


@dataclass(frozen=True)
class NodeAssignment:
    """Own voltage deviation plus ``{k: (theta_k, v_k)}`` for every other neighbour."""

    v_i: float
    neighbors: Mapping[int, tuple[float, float]] = field(default_factory=dict)


def _check_assignment(model: NetworkModel, i: int, asg: NodeAssignment) -> None:
    expected = set(other_neighbors(model, i))
    got = set(asg.neighbors)
    if got != expected:
        raise ValueError(
            f"assignment for node {i} must cover exactly {sorted(expected)}, got {sorted(got)}"
        )


def active_power(model: NetworkModel, i: int, assignment: NodeAssignment) -> float:
    _check_assignment(model, i, assignment)
    vi = model.params(i).v_nom + assignment.v_i
    total = 0.0
    for k in sorted(neighbors(model, i)):
        g, b = model.admittance(i, k)
        theta, vk = (0.0, assignment.v_i) if k == i else assignment.neighbors[k]
        total += (model.params(k).v_nom + vk) * (g * math.cos(theta) - b * math.sin(theta))
    return vi * total


def reactive_power(model: NetworkModel, i: int, assignment: NodeAssignment) -> float:
    _check_assignment(model, i, assignment)
    vi = model.params(i).v_nom + assignment.v_i
    total = 0.0
    for k in sorted(neighbors(model, i)):
        g, b = model.admittance(i, k)
        theta, vk = (0.0, assignment.v_i) if k == i else assignment.neighbors[k]
        total += (model.params(k).v_nom + vk) * (g * math.sin(theta) + b * math.cos(theta))
    return -vi * total


@dataclass(frozen=True)
class Coupling:
    """Coefficients of the injection form above for one node and kind."""

    node: int
    kind: str
    v_nom: float
    self_coef: float
    neighbors: tuple[int, ...]
    a: np.ndarray
    b: np.ndarray
    v_nom_k: np.ndarray

    @property
    def m(self) -> int:
        return len(self.neighbors)

    def negated(self) -> "Coupling":
        return Coupling(self.node, self.kind, self.v_nom, -self.self_coef, self.neighbors,
                        -self.a, -self.b, self.v_nom_k)

    @property
    def var_names(self) -> list[str]:
        names = [f"v_{self.node}"]
        for k in self.neighbors:
            names += [f"theta_{k}", f"v_{k}"]
        return names


def coupling(model: NetworkModel, i: int, kind: Kind) -> Coupling:
    if kind not in ("active", "reactive"):
        raise ValueError(f"kind must be 'active' or 'reactive', got {kind!r}")
    nb = other_neighbors(model, i)
    gii, bii = model.admittance(i, i)
    gb = np.array([model.admittance(i, k) for k in nb], dtype=float).reshape(-1, 2)
    g, b = gb[:, 0], gb[:, 1]
    if kind == "active":
        s, a, bb = gii, g, -b
    else:
        s, a, bb = -bii, -b, -g
    vk = np.array([model.params(k).v_nom for k in nb], dtype=float)
    return Coupling(i, kind, model.params(i).v_nom, float(s), tuple(nb), a, bb, vk)


def injection(c: Coupling, v_i, theta, v_k) -> np.ndarray:
    """Vectorised injection.  ``theta`` and ``v_k`` have the neighbour axis last."""
    v_i = np.asarray(v_i, dtype=float)
    theta = np.asarray(theta, dtype=float)
    v_k = np.asarray(v_k, dtype=float)
    Vi = c.v_nom + v_i
    terms = (c.v_nom_k + v_k) * (c.a * np.cos(theta) + c.b * np.sin(theta))
    return c.self_coef * Vi * Vi + Vi * terms.sum(axis=-1)


def injection_at(c: Coupling, x) -> np.ndarray:
    """Injection at points ``x`` laid out as ``[v_i, theta_k1, v_k1, theta_k2, ...]``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return injection(c, x[:, 0], x[:, 1::2], x[:, 2::2])


# --- polynomial form ----------------------------------------------------------------


class PolynomialExpr:
    """Sparse multivariate polynomial: ``{exponent tuple: coefficient}``."""

    def __init__(self, variables, terms=None):
        self.variables = tuple(variables)
        self.terms: dict[tuple[int, ...], float] = {}
        for e, c in (terms or {}).items():
            e = tuple(int(x) for x in e)
            if len(e) != len(self.variables):
                raise ValueError("exponent length does not match variables")
            if c != 0.0:
                self.terms[e] = self.terms.get(e, 0.0) + float(c)

    @classmethod
    def constant(cls, variables, c: float) -> "PolynomialExpr":
        return cls(variables, {(0,) * len(variables): c})

    @classmethod
    def variable(cls, variables, j: int) -> "PolynomialExpr":
        e = [0] * len(variables)
        e[j] = 1
        return cls(variables, {tuple(e): 1.0})

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def _coerce(self, other) -> "PolynomialExpr":
        if isinstance(other, PolynomialExpr):
            if other.variables != self.variables:
                raise ValueError("polynomials over different variables")
            return other
        return PolynomialExpr.constant(self.variables, float(other))

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return PolynomialExpr(self.variables, out)

    __radd__ = __add__

    def __neg__(self):
        return PolynomialExpr(self.variables, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return PolynomialExpr(self.variables, out)

    __rmul__ = __mul__

    def derivative(self, j: int) -> "PolynomialExpr":
        out = {}
        for e, c in self.terms.items():
            if e[j]:
                d = list(e)
                d[j] -= 1
                out[tuple(d)] = c * e[j]
        return PolynomialExpr(self.variables, out)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        total = np.zeros(x.shape[0])
        for e, c in self.terms.items():
            mono = np.full(x.shape[0], c)
            for j, p in enumerate(e):
                if p:
                    mono = mono * x[:, j] ** p
            total += mono
        return total

    def _order(self):
        return sorted(self.terms, key=lambda e: (sum(e), tuple(-p for p in e)))

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for e in self._order():
            c = self.terms[e]
            factors = [
                name if p == 1 else f"{name}^{p}" for name, p in zip(self.variables, e) if p
            ]
            body = "*".join([repr(abs(c))] + factors)
            parts.append(("- " if c < 0 else "+ ") + body)
        s = " ".join(parts)
        return s[2:] if s.startswith("+ ") else "-" + s[2:]

    def __repr__(self) -> str:
        return f"PolynomialExpr({self})"


def taylor3_power(model: NetworkModel, i: int, kind: Kind) -> PolynomialExpr:
    """Injection with cos/sin replaced by their cubic Taylor polynomials at 0.

    Voltages are kept exact.  Variables are ordered like :func:`injection_at`.
    """
    c = coupling(model, i, kind)
    names = c.var_names
    var = lambda j: PolynomialExpr.variable(names, j)  # noqa: E731
    Vi = var(0) + c.v_nom
    inner = PolynomialExpr.constant(names, 0.0)
    for j in range(c.m):
        th = var(1 + 2 * j)
        Vk = var(2 + 2 * j) + float(c.v_nom_k[j])
        th2 = th * th
        cos3 = 1.0 - 0.5 * th2
        sin3 = th - (1.0 / 6.0) * th2 * th
        inner = inner + Vk * (float(c.a[j]) * cos3 + float(c.b[j]) * sin3)
    poly = c.self_coef * Vi * Vi + Vi * inner
    assert poly.degree <= MAX_DEGREE, poly.degree
    return poly


def taylor_remainder_bound(model: NetworkModel, i: int, spec: SafetySpec) -> float:
    """Bound on |exact - taylor3| for either injection over the safe-set box.

    Uses |cos t - (1 - t^2/2)| <= t^4/24 and |sin t - (t - t^3/6)| <= |t|^5/120,
    the latter dominated by t^4/24 while |t| <= 5 (guaranteed by s_theta).
    """
    t = spec.theta_max
    if t == 0.0:
        return 0.0
    lo, hi = spec.s_v

    def vmax(k):
        v0 = model.params(k).v_nom
        return max(abs(v0 + lo), abs(v0 + hi))

    total = 0.0
    for k in neighbors(model, i):
        g, b = model.admittance(i, k)
        total += vmax(i) * vmax(k) * (abs(g) + abs(b))
    return total * t**4 / 24.0
