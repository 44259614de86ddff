"""Experiment command line: ``generate`` writes a reproducible instance file,
``run`` executes solver/seed grids into trace CSVs, ``compare`` summarizes
trace directories. All outputs are deterministic given the seeds (trace wall
times aside)."""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .algorithms import SOLVERS, RunTrace, SolverConfig, run
from .game import (
    BilinearParams,
    CournotParams,
    GameSpec,
    build_bilinear_game,
    build_cournot_game,
    game_from_payload,
)
from .graph import DualGraph, build_cycle_plus
from .stochastic import BatchSchedule

INSTANCE_FORMAT = "nashsplit-instance v1"
#: chords added to the dual cycle graph of the default market experiment (1-based)
DEFAULT_EXTRA_EDGES = ((2, 15), (6, 13))

DEFAULT_CONFIG = {
    "experiment": "bilinear",
    "instance": None,
    "instance_seed": 42,
    "variant": "unconstrained-monotone",
    "noise_sigma": 0.5,
    "agents": 20,
    "markets": 7,
    "solvers": ["SPRG"],
    "seeds": [0],
    "schedule": None,
    "max_iter": 2000,
    "tol": 1e-6,
    "tau": None,
    "safety": 0.99,
    "x0": None,
    "out": "runs",
}


def default_graph(game: GameSpec) -> DualGraph:
    """Dual-exchange graph used when the instance file does not pin one."""
    n = game.n_agents
    if n == 2:
        return DualGraph.from_edges(2, [(1, 2)])
    extras = [e for e in DEFAULT_EXTRA_EDGES if max(e) <= n]
    return build_cycle_plus(n, extras)


def build_instance(config: dict) -> tuple[GameSpec, DualGraph]:
    experiment = config["experiment"]
    if config.get("instance"):
        return load_instance(config["instance"])
    if experiment == "bilinear":
        game = build_bilinear_game(BilinearParams(
            variant=config.get("variant", "unconstrained-monotone"),
            noise_sigma=config.get("noise_sigma", 0.5),
        ))
    elif experiment == "cournot":
        game = build_cournot_game(CournotParams(
            n_agents=config.get("agents", 20),
            n_markets=config.get("markets", 7),
            price_sigma=config.get("noise_sigma", 0.5),
            seed=config.get("instance_seed", 42),
        ))
    else:
        raise ValueError(
            "custom experiments need an 'instance' path; "
            f"got experiment={experiment!r} without one"
        )
    return game, default_graph(game)


def save_instance(path, game: GameSpec, graph: DualGraph) -> None:
    if game.payload is None:
        raise ValueError("this game carries no serializable payload")
    doc = {
        "format": INSTANCE_FORMAT,
        "game": game.payload,
        "graph": graph.payload(),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_instance(path) -> tuple[GameSpec, DualGraph]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != INSTANCE_FORMAT:
        raise ValueError(f"{path} is not a recognized instance file")
    return game_from_payload(doc["game"]), DualGraph.from_payload(doc["graph"])


def config_hash(config: dict) -> str:
    relevant = {k: v for k, v in config.items() if k != "out"}
    canonical = json.dumps(relevant, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


# -- commands -----------------------------------------------------------------


def cmd_generate(args) -> int:
    config = _effective_config(args)
    config["instance"] = None  # always generate afresh
    game, graph = build_instance(config)
    out = Path(args.out or f"{config['experiment']}.json")
    save_instance(out, game, graph)
    print(f"wrote {out} ({game.label}, {game.n_agents} agents, m={game.m})")
    return 0


def cmd_run(args) -> int:
    config = _effective_config(args)
    game, graph = build_instance(config)
    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    schedule = None
    if config["schedule"]:
        schedule = BatchSchedule(**config["schedule"])

    x0 = config.get("x0")
    if x0 is None and config["experiment"] == "bilinear" and not config.get("instance"):
        x0 = [1.0, 1.0]  # reference start; the box midpoints degenerate to the solution

    chash = config_hash(config)
    any_diverged = False
    for solver in config["solvers"]:
        for seed in config["seeds"]:
            solver_config = SolverConfig(
                solver=solver,
                max_iter=config["max_iter"],
                tol=config["tol"],
                seed=seed,
                schedule=schedule,
                tau=config["tau"],
                safety=config["safety"],
                x0=None if x0 is None else tuple(x0),
            )
            trace = run(solver_config, game, graph)
            trace.header["config_hash"] = chash
            trace.header["experiment"] = config["experiment"]
            name = f"{config['experiment']}_{solver}_seed{seed}.csv"
            trace.to_csv(out_dir / name)
            any_diverged |= trace.status == "diverged"
            print(f"{solver} seed={seed}: {trace.status} after {len(trace)} iterations, "
                  f"residual {trace.final_residual:.3e} -> {out_dir / name}")
    if any_diverged and not args.allow_divergence:
        print("at least one run diverged", file=sys.stderr)
        return 1
    return 0


def cmd_compare(args) -> int:
    trace_dir = Path(args.traces)
    paths = sorted(trace_dir.glob("*.csv"))
    traces = []
    for p in paths:
        try:
            traces.append((p, RunTrace.from_csv(p)))
        except ValueError:
            continue  # not a trace file (e.g. a previous summary)
    if not traces:
        print(f"no trace files under {trace_dir}", file=sys.stderr)
        return 2

    rows = []
    for path, trace in traces:
        tol = float(trace.header.get("tol", "nan"))
        hit = np.nonzero(trace.residual <= tol)[0]
        rows.append({
            "solver": trace.header.get("solver", path.stem),
            "seed": trace.header.get("seed", "?"),
            "iters_to_tol": int(trace.k[hit[0]]) if hit.size else None,
            "oracle_to_tol": int(trace.oracle_calls[hit[0]]) if hit.size else None,
            "final_residual": trace.final_residual,
            "status": trace.status,
        })
    rows.sort(key=lambda r: (r["oracle_to_tol"] is None,
                             r["oracle_to_tol"] or 0, r["solver"], str(r["seed"])))

    headers = ("solver", "seed", "iters_to_tol", "oracle_to_tol", "final_residual", "status")
    widths = {h: max(len(h), *(len(_fmt(r[h])) for r in rows)) for h in headers}
    print("  ".join(h.ljust(widths[h]) for h in headers))
    for r in rows:
        print("  ".join(_fmt(r[h]).ljust(widths[h]) for h in headers))

    if args.out:
        lines = [",".join(headers)]
        lines += [",".join(_fmt(r[h]) for h in headers) for r in rows]
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.out}")
    return 0


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.3e}"
    return str(value)


# -- argument plumbing --------------------------------------------------------


def _effective_config(args) -> dict:
    config = dict(DEFAULT_CONFIG)
    if getattr(args, "config", None):
        config.update(json.loads(Path(args.config).read_text()))
    for key in ("experiment", "instance", "variant", "max_iter", "tol", "tau",
                "safety", "out", "agents", "markets", "noise_sigma"):
        value = getattr(args, key, None)
        if value is not None:
            config[key] = value
    if getattr(args, "solver", None):
        config["solvers"] = list(args.solver)
    if getattr(args, "seed", None):
        config["seeds"] = [int(s) for s in args.seed]
        config["instance_seed"] = int(args.seed[0]) if args.cmd == "generate" else config["instance_seed"]
    if getattr(args, "schedule", None):
        c, k0, a = (float(v) for v in args.schedule.split(","))
        config["schedule"] = {"c": c, "k0": k0, "a": a}
    if getattr(args, "deterministic", False):
        config["schedule"] = None
    unknown = [s for s in config["solvers"] if s not in SOLVERS]
    if unknown:
        raise ValueError(f"unknown solvers {unknown}; choose from {SOLVERS}")
    return config


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nashsplit",
        description="Distributed equilibrium-seeking experiments: generate "
                    "instances, run solvers, compare traces.",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its fields")
        p.add_argument("--experiment", choices=("bilinear", "cournot", "custom"))
        p.add_argument("--instance", help="instance JSON produced by 'generate'")
        p.add_argument("--variant", help="bilinear variant")
        p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
        p.add_argument("--agents", type=int)
        p.add_argument("--markets", type=int)
        p.add_argument("--seed", action="append", help="solver seed (repeatable)")

    gen = sub.add_parser("generate", help="write a reproducible instance file")
    common(gen)
    gen.add_argument("--out", help="output instance path (default <experiment>.json)")
    gen.set_defaults(func=cmd_generate)

    runp = sub.add_parser("run", help="run solvers and write trace CSVs")
    common(runp)
    runp.add_argument("--solver", action="append", choices=SOLVERS,
                      help="solver to run (repeatable)")
    runp.add_argument("--max-iter", dest="max_iter", type=int)
    runp.add_argument("--tol", type=float)
    runp.add_argument("--tau", type=float)
    runp.add_argument("--safety", type=float)
    runp.add_argument("--schedule", help="batch law parameters 'c,k0,a'")
    runp.add_argument("--deterministic", action="store_true",
                      help="use the mean oracle instead of sampling")
    runp.add_argument("--out", help="trace output directory")
    runp.add_argument("--allow-divergence", action="store_true",
                      help="exit 0 even when a run diverges")
    runp.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="summarize a directory of traces")
    cmp_.add_argument("--traces", required=True, help="directory of trace CSVs")
    cmp_.add_argument("--out", help="also write the summary as CSV")
    cmp_.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
