"""Command-line front end: ``droopcert verify | sweep | simulate``.

Exit codes: 0 success, 1 operational or usage error, 2 empty certificate,
3 safety violation in a simulation.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .network import (
    NetworkParseError,
    NetworkValidationError,
    bundled_network_path,
    load_network,
)
from .optimize import DEFAULT_BUDGET, DEFAULT_TOL, InfeasibleBoxError
from .simulate import (
    Scenario,
    SimulationError,
    discretization_allowance,
    safety_monitor,
    simulate,
    write_trace_csv,
)
from .verify import (
    SWEEP_AXES,
    OptimizerError,
    droop_sweep,
    sensitivity_sweep,
    verify_node,
)

log = logging.getLogger("droopcert")

EXIT_OK, EXIT_ERROR, EXIT_EMPTY, EXIT_VIOLATION = 0, 1, 2, 3

DROOP_AXES = ("droop-p", "droop-q")
DEFAULT_GRIDS = {
    "droop-p": "1:40:96",
    "droop-q": "0.05:1:96",
    "delta_v": "0.005:0.05:10",
    "s_theta_halfwidth": f"0.1:{math.pi / 6!r}:10",
    "s_v_width": "0.2:0.6:10",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def parse_grid(text: str) -> np.ndarray:
    """``start:stop:num`` (inclusive linspace) or a comma-separated list."""
    text = text.strip()
    if not text:
        raise UsageError("empty grid")
    try:
        if ":" in text:
            a, b, n = text.split(":")
            n = int(n)
            if n < 1:
                raise UsageError("empty grid")
            return np.linspace(float(a), float(b), n)
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}: {exc}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", default=None,
                        help="network JSON (default: bundled 4-node microgrid)")
    common.add_argument("--node", default="all", help="node id or 'all' (default: all)")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="optimizer tolerance (default: 1e-6)")
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                        help="max boxes per extremization (default: 1e6)")
    common.add_argument("--engine", choices=("exact", "taylor3"), default="exact",
                        help="injection model for the envelope (default: exact)")
    common.add_argument("--lambda-p", type=float, default=None, help="frequency droop (default: per node, 2.51 bundled)")
    common.add_argument("--lambda-q", type=float, default=None, help="voltage droop (default: per node, 0.2 bundled)")
    common.add_argument("--delta-v", type=float, default=None,
                        help="voltage coupling radius in p.u. (default: from file, 0.02 bundled)")
    common.add_argument("--delta-omega", type=float, default=None,
                        help="frequency coupling radius in Hz (default: from file, 0.12 bundled)")
    common.add_argument("--own-voltage", choices=("free", "nominal"), default="free",
                        help="own voltage in the active-power envelope (default: free over s_v)")
    common.add_argument("--out", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers across nodes/seeds (default: 1)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="droopcert", description="Safety certificates for droop-controlled inverters.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", parents=[common], help="envelopes, admissible controls and maximal droops")
    v.add_argument("--format", choices=("json", "csv"), default="json",
                   help="json: one report per node; csv: one table (default: json)")

    s = sub.add_parser("sweep", parents=[common], help="droop or sensitivity sweep tables (CSV)")
    s.add_argument("--axis", choices=DROOP_AXES + SWEEP_AXES, default="droop-p")
    s.add_argument("--grid", default=None, help="start:stop:num or comma list (default depends on axis)")

    m = sub.add_parser("simulate", parents=[common], help="focal-node simulation against scripted neighbours")
    m.add_argument("--duration", type=float, default=20.0, help="seconds (default: 20)")
    m.add_argument("--step", type=float, default=1e-3, help="RK4 step in seconds (default: 1e-3)")
    m.add_argument("--runs", type=int, default=1, help="seeded runs: seed, seed+1, ... (default: 1)")
    m.add_argument("--control", choices=("stochastic", "constant", "switching"), default="stochastic")
    m.add_argument("--control-period", type=float, default=1.0, help="seconds (default: 1)")
    m.add_argument("--u-p", type=float, default=0.0, help="constant frequency set-point offset")
    m.add_argument("--u-q", type=float, default=0.0, help="constant voltage set-point offset")
    m.add_argument("--threshold", type=float, default=0.1, help="switching band as safe-width fraction")
    m.add_argument("--neighbors", choices=("stochastic", "worst-case"), default="stochastic")
    m.add_argument("--neighbor-period", type=float, default=0.01, help="seconds (default: 0.01)")
    m.add_argument("--theta-side", choices=("lower", "upper"), default="lower")
    m.add_argument("--v-side", choices=("lower", "upper"), default="lower")
    m.add_argument("--droop-fraction", type=float, default=None,
                   help="use this fraction of the certified maximal droops instead of --lambda-*")
    m.add_argument("--halt-margin", type=float, default=None,
                   help="stop a run once the state is this many safe-set widths outside (default: never)")
    m.add_argument("--monitor-tol", type=float, default=1e-6, help="violation tolerance (default: 1e-6)")
    return p


def _load(args):
    path = Path(args.input) if args.input else bundled_network_path()
    model, spec = load_network(path)
    changes = {}
    if args.delta_v is not None:
        changes["delta_v"] = args.delta_v
    if args.delta_omega is not None:
        changes["delta_omega_hz"] = args.delta_omega
    if changes:
        spec = spec.replace(**changes)
    if args.node == "all":
        nodes = list(model.node_ids)
    else:
        try:
            nodes = [int(args.node)]
        except ValueError:
            raise UsageError(f"--node must be an integer id or 'all', got {args.node!r}") from None
        model.params(nodes[0])
    return path, model, spec, nodes


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise OSError(f"output directory {out} is not writable")
    return out


def _config(args, path) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    cfg["input"] = str(path)
    cfg["version"] = __version__
    return cfg


def _env_kw(args) -> dict:
    return {"form": args.engine, "budget": args.budget, "own_voltage": args.own_voltage}


def _pmap(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _verify_one(job):
    model, spec, i, lp, lq, tol, kw = job
    return verify_node(model, i, spec, lp, lq, tol, **kw)


def cmd_verify(args) -> int:
    path, model, spec, nodes = _load(args)
    out = _outdir(args)
    cfg = _config(args, path)
    jobs = [(model, spec, i, args.lambda_p, args.lambda_q, args.tol, _env_kw(args)) for i in nodes]
    reports = _pmap(_verify_one, jobs, args.jobs)
    if args.format == "json":
        for r in reports:
            doc = {"config": cfg, "report": r.to_dict()}
            (out / f"report_node_{r.node}.json").write_text(json.dumps(doc, indent=2) + "\n")
    else:
        with open(out / "reports.csv", "w", newline="") as fh:
            fh.write("# config: " + json.dumps(cfg, sort_keys=True) + "\n")
            wr = csv.writer(fh)
            wr.writerow(["node", "lambda_p", "lambda_q", "P_max", "P_min", "Q_max", "Q_min",
                         "u_omega_lower", "u_omega_upper", "u_v_lower", "u_v_upper",
                         "lambda_p_star", "lambda_q_star", "nonempty"])
            for r in reports:
                e = r.envelope
                wr.writerow([r.node, r.lambda_p, r.lambda_q, e.P_max, e.P_min, e.Q_max, e.Q_min,
                             r.u_omega.lower, r.u_omega.upper, r.u_v.lower, r.u_v.upper,
                             r.lambda_p_star, r.lambda_q_star, r.nonempty])
    for r in reports:
        state = "nonempty" if r.nonempty else "EMPTY"
        print(f"node {r.node}: U_omega=[{r.u_omega.lower:.6g}, {r.u_omega.upper:.6g}] "
              f"U_v=[{r.u_v.lower:.6g}, {r.u_v.upper:.6g}] "
              f"lambda_p*={r.lambda_p_star:.6g} lambda_q*={r.lambda_q_star:.6g} {state}")
    return EXIT_OK if all(r.nonempty for r in reports) else EXIT_EMPTY


def _sweep_one(job):
    model, spec, i, axis, grid, tol, kw = job
    if axis in DROOP_AXES:
        return droop_sweep(model, i, spec, grid, channel=axis[-1], tol=tol, **kw)
    return sensitivity_sweep(model, i, spec, axis, grid, tol=tol, **kw)


def cmd_sweep(args) -> int:
    grid = parse_grid(args.grid if args.grid is not None else DEFAULT_GRIDS[args.axis])
    if grid.size == 0:
        raise UsageError("empty grid")
    path, model, spec, nodes = _load(args)
    out = _outdir(args)
    cfg = _config(args, path)
    jobs = [(model, spec, i, args.axis, grid, args.tol, _env_kw(args)) for i in nodes]
    results = _pmap(_sweep_one, jobs, args.jobs)
    for i, res in zip(nodes, results):
        name = out / f"sweep_{args.axis.replace('-', '_')}_node_{i}.csv"
        meta = dict(cfg, node=i)
        if args.axis in DROOP_AXES:
            meta.update(lambda_star=res.lambda_star, f_max=res.f_max, f_min=res.f_min, f_nom=res.f_nom)
            header = ["lambda", "u_lower", "u_upper", "nonempty"]
        else:
            header = [args.axis, "lambda_q_star", "q_max", "q_min"]
        with open(name, "w", newline="") as fh:
            fh.write("# config: " + json.dumps(meta, sort_keys=True, default=str) + "\n")
            wr = csv.writer(fh)
            wr.writerow(header)
            for row in res.rows():
                wr.writerow(row)
        print(f"wrote {name}")
    return EXIT_OK


def _simulate_one(job):
    model, spec, i, scenario, tol, allowance, trace_path, cfg = job
    trace = simulate(model, i, spec, scenario)
    rep = safety_monitor(trace, spec, tol, allowance)
    write_trace_csv(trace, trace_path, cfg)
    return rep


def cmd_simulate(args) -> int:
    path, model, spec, nodes = _load(args)
    if args.node == "all":
        nodes = nodes[:1]
    i = nodes[0]
    out = _outdir(args)
    if args.runs < 1:
        raise UsageError("--runs must be at least 1")
    lp, lq = args.lambda_p, args.lambda_q
    if args.droop_fraction is not None:
        base = verify_node(model, i, spec, tol=args.tol, **_env_kw(args))
        lp = args.droop_fraction * base.lambda_p_star
        lq = args.droop_fraction * base.lambda_q_star
    report = verify_node(model, i, spec, lp, lq, args.tol, **_env_kw(args))
    lp, lq = report.lambda_p, report.lambda_q
    if args.control == "stochastic" and not report.nonempty:
        print(f"node {i}: admissible control interval is empty at lambda_p={lp:.6g}, lambda_q={lq:.6g}",
              file=sys.stderr)
        return EXIT_EMPTY
    u_omega = (report.u_omega.lower, report.u_omega.upper)
    u_v = (report.u_v.lower, report.u_v.upper)
    base_sc = dict(duration=args.duration, step=args.step, control=args.control,
                   control_period=args.control_period, u_p=args.u_p, u_q=args.u_q,
                   u_omega=u_omega, u_v=u_v, threshold=args.threshold, neighbors=args.neighbors,
                   neighbor_period=args.neighbor_period, theta_side=args.theta_side,
                   v_side=args.v_side, lambda_p=lp, lambda_q=lq, halt_margin=args.halt_margin)
    scenarios = [Scenario(seed=args.seed + r, **base_sc) for r in range(args.runs)]
    for sc in scenarios:
        sc.validate()
    allowance = discretization_allowance(model, i, spec, scenarios[0])
    cfg = _config(args, path)
    jobs = []
    for sc in scenarios:
        c = dict(cfg, node=i, seed=sc.seed, lambda_p=lp, lambda_q=lq, u_omega=u_omega, u_v=u_v)
        jobs.append((model, spec, i, sc, args.monitor_tol, allowance,
                     out / f"trace_node_{i}_seed_{sc.seed}.csv", c))
    reports = _pmap(_simulate_one, jobs, args.jobs)
    total = sum(r.count for r in reports)
    for sc, r in zip(scenarios, reports):
        log.info("seed %d: %s", sc.seed, r.summary())
    worst_w = min(r.worst_margin_omega for r in reports)
    worst_v = min(r.worst_margin_v for r in reports)
    disc = sum(len(r.discretization_level) for r in reports)
    print(f"{total} violations")
    print(f"node {i}, {len(reports)} run(s): {disc} discretization-level excursions; "
          f"worst margins omega {worst_w / (2 * math.pi):.6g} Hz, v {worst_v:.6g} p.u.")
    return EXIT_VIOLATION if total else EXIT_OK


COMMANDS = {"verify": cmd_verify, "sweep": cmd_sweep, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if not args.tol > 0:
            raise UsageError("--tol must be positive")
        if args.budget < 1 or args.jobs < 1:
            raise UsageError("--budget and --jobs must be positive")
        return COMMANDS[args.command](args)
    except (OSError, NetworkParseError, NetworkValidationError, OptimizerError, InfeasibleBoxError,
            SimulationError, UsageError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"droopcert: error: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
