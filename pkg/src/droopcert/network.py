"""Microgrid data model: inverter parameters, admittances and safe sets.

Network files are JSON documents with the layout::

    {
      "format_version": 1,
      "nodes": [{"id": 1, "tau": 0.5, "lambda_p": 2.51, "lambda_q": 0.2,
                 "v_nom": 1.0, "p_nom": 0.0, "q_nom": 0.0}, ...],
      "lines": [{"from": 1, "to": 2, "g": -1.2, "b": 2.4}, ...],
      "safety": {"s_v": [-0.4, 0.2], "s_omega_hz": [-3, 3],
                 "s_theta": [-0.5236, 0.5236],
                 "delta_v": 0.02, "delta_omega_hz": 0.12}
    }

Line entries hold admittance-matrix entries ``G[i, k]``, ``B[i, k]``.  An entry
with ``from == to`` is the self-admittance of that node; missing self entries
are zero.  Voltages are stored as deviations from ``v_nom``.  Frequencies are
read and written in Hz, the rad/s values are exposed as properties.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any

FORMAT_VERSION = 1

_NODE_KEYS = ("id", "tau", "lambda_p", "lambda_q", "v_nom", "p_nom", "q_nom")
_LINE_KEYS = ("from", "to", "g", "b")
_SAFETY_KEYS = ("s_v", "s_omega_hz", "s_theta", "delta_v", "delta_omega_hz")


class NetworkParseError(ValueError):
    """The network file is not valid JSON or does not follow the schema."""


class NetworkValidationError(ValueError):
    """The parsed network violates a model invariant."""


def hz_to_rad(x: float) -> float:
    return 2.0 * math.pi * x


@dataclass(frozen=True)
class InverterParams:
    tau: float
    lambda_p: float
    lambda_q: float
    v_nom: float = 1.0
    p_nom: float = 0.0
    q_nom: float = 0.0

    def validate(self, node_id: int | str = "?") -> None:
        if not self.tau > 0:
            raise NetworkValidationError(f"node {node_id}: time constant tau must be positive")
        if not self.lambda_p > 0:
            raise NetworkValidationError(f"node {node_id}: droop must be positive (lambda_p)")
        if not self.lambda_q > 0:
            raise NetworkValidationError(f"node {node_id}: droop must be positive (lambda_q)")
        if not self.v_nom > 0:
            raise NetworkValidationError(f"node {node_id}: v_nom must be positive")


@dataclass(frozen=True)
class Line:
    from_node: int
    to_node: int
    conductance: float
    susceptance: float

    @property
    def is_self(self) -> bool:
        return self.from_node == self.to_node


@dataclass(frozen=True)
class SafetySpec:
    """Safe sets and neighbour coupling radii.

    ``s_v`` is a voltage deviation interval in p.u., ``s_omega_hz`` a frequency
    interval in Hz and ``s_theta`` the admissible neighbour angle interval in
    rad.  A coupling radius of ``math.inf`` means the neighbours are not coupled.
    """

    s_v: tuple[float, float] = (-0.4, 0.2)
    s_omega_hz: tuple[float, float] = (-3.0, 3.0)
    s_theta: tuple[float, float] = (-math.pi / 6, math.pi / 6)
    delta_v: float = math.inf
    delta_omega_hz: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "s_v", tuple(float(x) for x in self.s_v))
        object.__setattr__(self, "s_omega_hz", tuple(float(x) for x in self.s_omega_hz))
        object.__setattr__(self, "s_theta", tuple(float(x) for x in self.s_theta))
        object.__setattr__(self, "delta_v", float(self.delta_v))
        object.__setattr__(self, "delta_omega_hz", float(self.delta_omega_hz))

    @property
    def s_omega(self) -> tuple[float, float]:
        """Frequency safe set in rad/s."""
        return (hz_to_rad(self.s_omega_hz[0]), hz_to_rad(self.s_omega_hz[1]))

    @property
    def delta_omega(self) -> float:
        return hz_to_rad(self.delta_omega_hz)

    @property
    def theta_max(self) -> float:
        return max(abs(self.s_theta[0]), abs(self.s_theta[1]))

    def validate(self) -> None:
        for name in ("s_v", "s_omega_hz", "s_theta"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise NetworkValidationError(f"safety: {name} bounds must be finite")
            if lo > hi:
                raise NetworkValidationError(f"safety: {name} is empty ({lo} > {hi})")
        lo, hi = self.s_theta
        if not (-math.pi / 2 < lo and hi < math.pi / 2):
            raise NetworkValidationError("safety: s_theta must lie inside (-pi/2, pi/2)")
        for name in ("delta_v", "delta_omega_hz"):
            d = getattr(self, name)
            if math.isnan(d) or d < 0:
                raise NetworkValidationError(f"safety: {name} must be >= 0")

    def replace(self, **changes) -> "SafetySpec":
        from dataclasses import replace

        new = replace(self, **changes)
        new.validate()
        return new


@dataclass(frozen=True)
class NetworkModel:
    nodes: tuple[tuple[int, InverterParams], ...]
    lines: tuple[Line, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple((n, p) for n, p in self.nodes))
        object.__setattr__(self, "lines", tuple(self.lines))
        self.validate()

    def validate(self) -> None:
        ids = [n for n, _ in self.nodes]
        if len(set(ids)) != len(ids):
            raise NetworkValidationError("duplicate node id")
        for n, params in self.nodes:
            params.validate(n)
        declared = set(ids)
        seen = set()
        for ln in self.lines:
            for end in (ln.from_node, ln.to_node):
                if end not in declared:
                    raise NetworkValidationError(
                        f"line {ln.from_node}-{ln.to_node} references undeclared node {end}"
                    )
            if not (math.isfinite(ln.conductance) and math.isfinite(ln.susceptance)):
                raise NetworkValidationError(f"line {ln.from_node}-{ln.to_node}: non-finite admittance")
            pair = frozenset((ln.from_node, ln.to_node))
            if pair in seen:
                raise NetworkValidationError(
                    f"line {ln.from_node}-{ln.to_node}: more than one entry for this pair"
                )
            seen.add(pair)

    @property
    def node_ids(self) -> list[int]:
        return [n for n, _ in self.nodes]

    @cached_property
    def _params(self) -> dict[int, InverterParams]:
        return dict(self.nodes)

    @cached_property
    def _admittance(self) -> dict[tuple[int, int], tuple[float, float]]:
        y = {}
        for ln in self.lines:
            y[(ln.from_node, ln.to_node)] = (ln.conductance, ln.susceptance)
            y[(ln.to_node, ln.from_node)] = (ln.conductance, ln.susceptance)
        return y

    @cached_property
    def _neighbors(self) -> dict[int, frozenset[int]]:
        nb = {n: {n} for n in self.node_ids}
        for ln in self.lines:
            nb[ln.from_node].add(ln.to_node)
            nb[ln.to_node].add(ln.from_node)
        return {n: frozenset(s) for n, s in nb.items()}

    def params(self, i: int) -> InverterParams:
        self._check(i)
        return self._params[i]

    def admittance(self, i: int, k: int) -> tuple[float, float]:
        """(G[i, k], B[i, k]); zero when no entry exists."""
        return self._admittance.get((i, k), (0.0, 0.0))

    def _check(self, i: int) -> None:
        if i not in self._params:
            raise KeyError(f"unknown node id {i!r}")

    def with_params(self, i: int, **changes) -> "NetworkModel":
        """Copy of the model with some inverter parameters of node ``i`` changed."""
        from dataclasses import replace

        self._check(i)
        nodes = tuple((n, replace(p, **changes) if n == i else p) for n, p in self.nodes)
        return NetworkModel(nodes, self.lines)


def neighbors(model: NetworkModel, i: int) -> frozenset[int]:
    """Neighbour set of node ``i``, including ``i`` itself."""
    model._check(i)
    return model._neighbors[i]


def other_neighbors(model: NetworkModel, i: int) -> list[int]:
    """Sorted neighbours of ``i`` excluding ``i``; this fixes variable order everywhere."""
    return sorted(k for k in neighbors(model, i) if k != i)


# --- file I/O -----------------------------------------------------------------


def _require_keys(obj: Any, keys: tuple[str, ...], where: str, optional=()) -> None:
    if not isinstance(obj, dict):
        raise NetworkParseError(f"{where}: expected an object")
    unknown = set(obj) - set(keys)
    if unknown:
        raise NetworkParseError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = [k for k in keys if k not in obj and k not in optional]
    if missing:
        raise NetworkParseError(f"{where}: missing field(s) {missing}")


def _number(x: Any, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise NetworkParseError(f"{where}: expected a number, got {x!r}")
    if not math.isfinite(x):
        raise NetworkParseError(f"{where}: number must be finite")
    return float(x)


def _interval(x: Any, where: str) -> tuple[float, float]:
    if not isinstance(x, list) or len(x) != 2:
        raise NetworkParseError(f"{where}: expected [lo, hi]")
    return (_number(x[0], where), _number(x[1], where))


def _radius(x: Any, where: str) -> float:
    return math.inf if x is None else _number(x, where)


def parse_network(doc: Any) -> tuple[NetworkModel, SafetySpec]:
    _require_keys(doc, ("format_version", "nodes", "lines", "safety"), "top level")
    if doc["format_version"] != FORMAT_VERSION:
        raise NetworkParseError(f"unsupported format_version {doc['format_version']!r}")
    if not isinstance(doc["nodes"], list) or not isinstance(doc["lines"], list):
        raise NetworkParseError("nodes and lines must be arrays")

    nodes = []
    for idx, nd in enumerate(doc["nodes"]):
        where = f"nodes[{idx}]"
        _require_keys(nd, _NODE_KEYS, where)
        nid = nd["id"]
        if isinstance(nid, bool) or not isinstance(nid, int):
            raise NetworkParseError(f"{where}: id must be an integer")
        params = InverterParams(
            **{k: _number(nd[k], f"{where}.{k}") for k in _NODE_KEYS if k != "id"}
        )
        nodes.append((nid, params))

    lines = []
    for idx, ln in enumerate(doc["lines"]):
        where = f"lines[{idx}]"
        _require_keys(ln, _LINE_KEYS, where)
        for end in ("from", "to"):
            if isinstance(ln[end], bool) or not isinstance(ln[end], int):
                raise NetworkParseError(f"{where}.{end}: node id must be an integer")
        lines.append(
            Line(ln["from"], ln["to"], _number(ln["g"], f"{where}.g"), _number(ln["b"], f"{where}.b"))
        )

    sf = doc["safety"]
    _require_keys(sf, _SAFETY_KEYS, "safety")
    spec = SafetySpec(
        s_v=_interval(sf["s_v"], "safety.s_v"),
        s_omega_hz=_interval(sf["s_omega_hz"], "safety.s_omega_hz"),
        s_theta=_interval(sf["s_theta"], "safety.s_theta"),
        delta_v=_radius(sf["delta_v"], "safety.delta_v"),
        delta_omega_hz=_radius(sf["delta_omega_hz"], "safety.delta_omega_hz"),
    )
    spec.validate()
    return NetworkModel(tuple(nodes), tuple(lines)), spec


def load_network(path: str | Path) -> tuple[NetworkModel, SafetySpec]:
    """Read and validate a network file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise NetworkParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkParseError(f"{path}: malformed JSON: {exc}") from exc
    return parse_network(doc)


def network_to_dict(model: NetworkModel, spec: SafetySpec) -> dict:
    def radius(d):
        return None if math.isinf(d) else d

    return {
        "format_version": FORMAT_VERSION,
        "nodes": [
            {"id": n, "tau": p.tau, "lambda_p": p.lambda_p, "lambda_q": p.lambda_q,
             "v_nom": p.v_nom, "p_nom": p.p_nom, "q_nom": p.q_nom}
            for n, p in model.nodes
        ],
        "lines": [
            {"from": ln.from_node, "to": ln.to_node, "g": ln.conductance, "b": ln.susceptance}
            for ln in model.lines
        ],
        "safety": {
            "s_v": list(spec.s_v),
            "s_omega_hz": list(spec.s_omega_hz),
            "s_theta": list(spec.s_theta),
            "delta_v": radius(spec.delta_v),
            "delta_omega_hz": radius(spec.delta_omega_hz),
        },
    }


def save_network(model: NetworkModel, spec: SafetySpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(model, spec), indent=2) + "\n")


def bundled_network_path() -> Path:
    """Path of the bundled 4-inverter ring network."""
    return Path(str(resources.files("droopcert") / "data" / "microgrid4.json"))


def load_bundled() -> tuple[NetworkModel, SafetySpec]:
    return load_network(bundled_network_path())
