"""Command-line entry point: ``switchdiff <command> ...``.

Exit codes: 0 on success, 2 when a config, graph or switching spec fails
validation, 1 on any other runtime error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment, graph_core, metric_graph, propagator, spectral, verify
from .semi_markov import SpecError

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2

INVALID = (experiment.ConfigError, SpecError, graph_core.GraphError, metric_graph.MetricGraphError)


def _dump(obj) -> None:
    json.dump(verify._jsonable(obj), sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise experiment.ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _is_metric(obj) -> bool:
    edges = obj.get("edges") if isinstance(obj, dict) else None
    return "n" not in obj and bool(edges) and isinstance(edges[0], dict)


def _load_config(args):
    cfg = experiment.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.tol is not None:
        cfg = replace(cfg, tol=args.tol)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    summary, _ = experiment.run_experiment(cfg, out_dir=args.out_dir, threads=args.threads, h_target=args.h_target)
    _dump(summary)
    return EXIT_OK


def _spectrum_report(op, tol, k, with_matrix=False):
    spec = spectral.eigendecompose(op)
    mask = spec.kernel_mask(tol)
    out = {
        "dim": op.dim,
        "kernel_rank": int(mask.sum()),
        "eigenvalues": spec.eigenvalues[:k].tolist(),
    }
    if not mask.all():
        out["gap"] = spectral.spectral_gap(op, tol)
    if with_matrix:
        out["matrix"] = op.matrix.tolist()
        out["mass"] = op.mass.tolist()
    return out


def cmd_spectrum(args) -> int:
    obj = _read_json(args.graph)
    tol = args.tol if args.tol is not None else spectral.DEFAULT_TOL
    if _is_metric(obj):
        mg, p = metric_graph.metric_graph_from_json(obj)
        counts = metric_graph.mesh_counts(mg, args.h_target or 0.02)
        coef = None
        if p is not None:
            coef = metric_graph.EllipticCoefficient.from_function(
                mg, counts, lambda e, x: np.interp(x, np.linspace(0, mg.lengths[e], len(p[e])), p[e])
            )
        disc = metric_graph.discretize(mg, coef, counts)
        out = {"kind": "metric", "h": disc.h, "components": metric_graph.metric_components(mg)}
        out.update(_spectrum_report(disc.operator, tol, args.k, args.matrix))
        if len(out["components"]) == 1 and not metric_graph.is_lone_loop(mg):
            out["lambda2_bounds"] = list(metric_graph.lambda2_bounds(mg))
    else:
        g = graph_core.graph_from_json(obj)
        out = {"kind": "graph", "components": graph_core.connected_components(g)}
        out.update(_spectrum_report(graph_core.laplacian(g), tol, args.k, args.matrix))
    _dump(out)
    return EXIT_OK


def cmd_union(args) -> int:
    objs = [_read_json(p) for p in args.graphs]
    tol = args.tol if args.tol is not None else spectral.DEFAULT_TOL
    kinds = {_is_metric(o) for o in objs}
    if len(kinds) != 1:
        raise experiment.ConfigError("union: cannot mix combinatorial and metric graphs")
    if kinds.pop():
        graphs = [metric_graph.metric_graph_from_json(o)[0] for o in objs]
        union = metric_graph.union_metric(graphs)
        comps = metric_graph.metric_components(union)
        out = {
            "kind": "metric",
            "gluing": union.gluing(),
            "components": comps,
            "connected": len(comps) == 1,
        }
    else:
        graphs = [graph_core.graph_from_json(o) for o in objs]
        union = graph_core.union_graphs(graphs)
        comps = graph_core.connected_components(union)
        p_k = spectral.intersection_projector([graph_core.laplacian(g) for g in graphs], tol)
        p_u = spectral.kernel_projector(graph_core.laplacian(union), tol)
        out = {
            "kind": "graph",
            "union": graph_core.graph_to_json(union),
            "components": comps,
            "connected": len(comps) == 1,
            "kernel_rank": p_k.rank,
            "projector_gap": spectral.weighted_operator_norm(p_k.matrix - p_u.matrix, p_k.mass),
        }
    _dump(out)
    return EXIT_OK


def cmd_contraction(args) -> int:
    cfg = _load_config(args)
    ens = experiment.build_ensemble(cfg, args.h_target)
    sequence = list(range(len(ens)))
    norms = {str(d): propagator.covering_contraction_norm(ens, sequence, d) for d in args.delta}
    _dump({"sequence": sequence, "kernel_rank": ens.P_K.rank, "norms": norms})
    return EXIT_OK


def cmd_verify(args) -> int:
    verdicts = verify.run_suite(args.suite)
    _dump([v.to_json() for v in verdicts])
    if args.strict and not all(v.passed for v in verdicts):
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out-dir", help="directory for CSV and summary output")
    common.add_argument("--h-target", type=float, help="target mesh width for metric graphs")
    common.add_argument("--tol", type=float, help="kernel tolerance (relative)")

    parser = argparse.ArgumentParser(prog="switchdiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--threads", type=int, help="worker threads (default: SWITCHDIFF_THREADS or CPU count)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("spectrum", parents=[common], help="spectrum of a graph or metric graph")
    p.add_argument("graph")
    p.add_argument("-k", type=int, default=10, help="number of eigenvalues to print")
    p.add_argument("--matrix", action="store_true", help="include the operator matrix (row-major) and mass")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("union", parents=[common], help="union graph and common kernel")
    p.add_argument("graphs", nargs="+")
    p.set_defaults(func=cmd_union)

    p = sub.add_parser("contraction", parents=[common], help="covering-sequence contraction norms")
    p.add_argument("config")
    p.add_argument("--delta", type=float, nargs="+", default=[0.01, 0.1, 1.0])
    p.set_defaults(func=cmd_contraction)

    p = sub.add_parser("verify", parents=[common], help="run an acceptance suite")
    p.add_argument("suite", choices=sorted(verify.SUITES) + ["all"])
    p.add_argument("--strict", action="store_true", help="exit 1 when any verdict fails")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except INVALID as exc:
        messages = getattr(exc, "messages", [str(exc)])
        for msg in messages:
            print(f"error: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
