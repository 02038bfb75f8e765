"""Command-line front end.

Subcommands: ``simulate`` (replicated runs with statistics), ``analyze``
(recompute statistics from a snapshot dump), ``exact-check`` (tiny-box
agreement of the dynamics with exhaustive enumeration) and ``bench``
(steps-per-second smoke benchmark).  Exit codes: 0 ok, 1 configuration
error, 2 runtime error or failed check.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .connectivity import AdHocGraph, BoundaryCondition, ClusterIndex
from .dynamics import DynamicsParams, init_state, marginal_check
from .geometry import build_box, rotation_2d
from .harness import (
    ALL_STATISTICS,
    ConfigError,
    ExperimentConfig,
    analyze_snapshots,
    run_experiment,
)
from .measure import (
    CONDITION_TB_DISCONNECTED,
    FKParams,
    exact_distribution,
    heat_bath_close_prob,
    log_weight,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_box_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--side", type=float, default=8.0)
    p.add_argument("--tilt", type=float, default=None,
                   help="2D rotation angle in degrees")
    p.add_argument("--center", type=str, default=None,
                   help="comma-separated box center, e.g. 0.5,0.5")
    p.add_argument("--face-axis", type=int, default=None)


def _add_measure_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--p", type=float, default=None)
    group.add_argument("--beta", type=float, default=None)
    p.add_argument("--q", type=float, default=2.0)


def _box_kwargs(args) -> dict:
    rotation = None
    if args.tilt is not None:
        if args.dim != 2:
            raise ConfigError("--tilt only applies to dim 2")
        rotation = [[float(v) for v in row] for row in rotation_2d(math.radians(args.tilt))]
    center = None
    if args.center is not None:
        center = [float(v) for v in args.center.split(",")]
    return {"rotation": rotation, "center": center, "face_axis": args.face_axis}


def _cmd_simulate(args) -> int:
    doc = {}
    if args.config:
        with open(args.config, "r", encoding="ascii") as fh:
            doc = json.load(fh)
    box_kwargs = _box_kwargs(args)
    overrides = {
        "dim": args.dim,
        "side": args.side,
        "rotation": box_kwargs["rotation"],
        "center": box_kwargs["center"],
        "face_axis": box_kwargs["face_axis"],
        "p": args.p,
        "beta": args.beta,
        "q": args.q,
        "x_boundary": args.x_boundary,
        "burn_in": args.burn_in,
        "steps": args.steps,
        "stride": args.stride,
        "replicas": args.replicas,
        "seed": args.seed,
        "statistics": args.stats.split(",") if args.stats else None,
        "out_dir": args.out,
        "validate_invariants": args.validate or None,
    }
    for key, value in overrides.items():
        if value is not None:
            doc[key] = value
    if doc.get("p") is None and doc.get("beta") is None:
        doc["p"] = 0.9
    config = ExperimentConfig.from_dict(doc)
    result = run_experiment(config, write_snapshots=args.snapshots)
    n_rec = len(result.records)
    viol = result.summary["violations"]
    print(f"replicas={config.replicas} records={n_rec} violations={viol}")
    if result.out_dir:
        print(f"outputs in {result.out_dir}")
    return 0


def _cmd_analyze(args) -> int:
    with open(args.config, "r", encoding="ascii") as fh:
        config = ExperimentConfig.from_dict(json.load(fh))
    records = analyze_snapshots(config, args.snapshots)
    out = Path(args.out) if args.out else Path(args.snapshots).parent
    out.mkdir(parents=True, exist_ok=True)
    path = out / "records_recomputed.jsonl"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(json.dumps({"format": "fkcoupling-records", "version": 1}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")
    print(f"recomputed {len(records)} records -> {path}")
    return 0


def _cmd_exact_check(args) -> int:
    p = args.p if args.p is not None else 0.7
    params = FKParams(p, args.q)
    box = build_box(2, 1, center=(0.5, 0.5))
    dparams = DynamicsParams(params=params)

    table_y = exact_distribution(box, BoundaryCondition.TB, params, CONDITION_TB_DISCONNECTED)
    state = init_state(box, dparams, args.seed)
    tv_y = marginal_check(state, table_y, "Y", args.steps, burnin=args.burn_in, stride=box.n_edges)

    table_x = exact_distribution(box, BoundaryCondition.WIRED, params)
    state = init_state(box, dparams, args.seed + 1)
    tv_x = marginal_check(state, table_x, "X", args.steps, burnin=args.burn_in, stride=box.n_edges)

    # exhaustive heat-bath ratio check on a seeded random 8-edge graph
    rng = np.random.default_rng(args.seed)
    pairs = [(i, j) for i in range(6) for j in range(i + 1, 6)]
    chosen = rng.choice(len(pairs), size=8, replace=False)
    graph = AdHocGraph(6, [pairs[i] for i in chosen])
    worst = 0.0
    for mask in range(1 << 8):
        cfg = np.array([(mask >> j) & 1 for j in range(8)], dtype=np.uint8)
        index = ClusterIndex(graph, cfg, BoundaryCondition.FREE)
        for e in range(8):
            closed = cfg.copy()
            closed[e] = 0
            opened = cfg.copy()
            opened[e] = 1
            wc = log_weight(graph, closed, BoundaryCondition.FREE, params)
            wo = log_weight(graph, opened, BoundaryCondition.FREE, params)
            ratio = 1.0 / (1.0 + math.exp(wo - wc))
            worst = max(worst, abs(heat_bath_close_prob(index, e, params) - ratio))

    print(f"Y-marginal TV vs conditioned table: {tv_y:.5f}")
    print(f"X-marginal TV vs wired table:       {tv_x:.5f}")
    print(f"heat-bath vs exact ratio, max err:  {worst:.2e}")
    ok = tv_y < args.tol and tv_x < args.tol and worst < 1e-12
    print("PASS" if ok else "FAIL")
    return 0 if ok else 2


def _cmd_bench(args) -> int:
    box = build_box(args.dim, args.side, **_box_kwargs(args))
    params = FKParams(args.p if args.p is not None else 0.9, args.q)
    state = init_state(box, DynamicsParams(params=params), args.seed)
    state._advance(1000)  # trigger compilation outside the timed region
    t0 = time.perf_counter()
    state._advance(args.steps)
    dt = time.perf_counter() - t0
    print(
        f"dim={args.dim} side={args.side} edges={box.n_edges}: "
        f"{args.steps} steps in {dt:.2f}s ({args.steps / dt:,.0f} steps/s)"
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="fkcoupling", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run replicated coupled dynamics")
    _add_box_flags(p_sim)
    _add_measure_flags(p_sim)
    p_sim.add_argument("--x-boundary", choices=("wired", "free"), default=None)
    p_sim.add_argument("--steps", type=int, default=None)
    p_sim.add_argument("--burn-in", type=int, default=None)
    p_sim.add_argument("--stride", type=int, default=None)
    p_sim.add_argument("--replicas", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--stats", type=str, default=None,
                       help=f"comma list from {','.join(ALL_STATISTICS)}")
    p_sim.add_argument("--config", type=str, default=None, help="JSON config file")
    p_sim.add_argument("--out", type=str, default=None)
    p_sim.add_argument("--snapshots", action="store_true",
                       help="also dump sampled configurations")
    p_sim.add_argument("--validate", action="store_true",
                       help="check coupling invariants at every step")
    p_sim.set_defaults(func=_cmd_simulate)

    p_ana = sub.add_parser("analyze", help="recompute statistics from snapshots")
    p_ana.add_argument("--config", required=True)
    p_ana.add_argument("--snapshots", required=True)
    p_ana.add_argument("--out", type=str, default=None)
    p_ana.set_defaults(func=_cmd_analyze)

    p_chk = sub.add_parser("exact-check", help="tiny-box agreement with enumeration")
    _add_measure_flags(p_chk)
    p_chk.add_argument("--steps", type=int, default=200_000)
    p_chk.add_argument("--burn-in", type=int, default=5_000)
    p_chk.add_argument("--seed", type=int, default=0)
    p_chk.add_argument("--tol", type=float, default=0.02)
    p_chk.set_defaults(func=_cmd_exact_check)

    p_bch = sub.add_parser("bench", help="steps-per-second benchmark")
    _add_box_flags(p_bch)
    _add_measure_flags(p_bch)
    p_bch.add_argument("--steps", type=int, default=100_000)
    p_bch.add_argument("--seed", type=int, default=0)
    p_bch.set_defaults(func=_cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
