"""Command-line front end.

Every subcommand writes its result to ``--out`` (or stdout) and exits 0.
Failures print a JSON object ``{"error": ..., "message": ..., "details": ...}``
on stderr and exit with a nonzero status.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .estimands import effects_report
from .experiments import ExperimentConfig, build_network, reproduce_table, run_experiment, tables_metadata, tables_to_csv
from .fit import FitResult, fit_mle
from .graph import degree_summary, gen_erdos_renyi, gen_ring, deltas_within_unit, network_deltas
from .io import IngestError, ingest, parse_transforms, read_network, write_dataset
from .model import ConfounderSpec, ExposureShift, simulate_dataset

EXIT_USAGE = 2
EXIT_FAILURE = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _add_shift(p: argparse.ArgumentParser) -> None:
    p.add_argument("--a-from", type=int, default=0)
    p.add_argument("--a-to", type=int, default=1)
    p.add_argument("--s-from", type=float, default=0.0)
    p.add_argument("--s-to", type=float, default=1.0)


def _shift(args) -> ExposureShift:
    return ExposureShift(args.a_from, args.a_to, args.s_from, args.s_to)


def _transforms(args) -> dict:
    tr = parse_transforms(args.transform)
    if args.standardize:
        for col in ("mediator", "outcome", "confounders"):
            tr.setdefault(col, []).append("zscore")
    return tr


def cmd_simulate(args) -> None:
    cfg = ExperimentConfig.from_json(Path(args.config).read_text())
    net = build_network(cfg)
    seed = cfg.seed if args.seed is None else args.seed
    data = simulate_dataset(net, cfg.truth, ConfounderSpec(p=cfg.truth.p), seed=seed)
    edges, nodes = write_dataset(args.out, data)
    _emit(json.dumps({"edges": str(edges), "nodes": str(nodes), "n_nodes": net.n_nodes}), None)


def cmd_fit(args) -> None:
    tr = _transforms(args)
    _, data = ingest(args.edges, args.nodes, tr)
    doc = fit_mle(data).to_dict()
    doc["transforms"] = data.metadata["transforms"]
    _emit(json.dumps(doc, indent=2), args.out)


def cmd_effects(args) -> None:
    doc = json.loads(Path(args.fit).read_text())
    fit = FitResult.from_dict(doc)
    net = read_network(args.edges)
    if fit.n_nodes and fit.n_nodes != net.n_nodes:
        raise ValueError(f"fit was made on {fit.n_nodes} nodes but the edge file has {net.n_nodes}")
    report = effects_report(fit, net, _shift(args), args.method, {"transforms": doc.get("transforms", {})})
    _emit(report.to_csv() if args.format == "csv" else report.to_json(indent=2), args.out)


def cmd_replicate(args) -> None:
    if args.preset:
        sizes = tuple(int(s) for s in args.sizes.split(",")) if args.sizes else (100, 200, 800)
        results = reproduce_table(args.preset, args.scale, sizes, args.seed, args.workers)
    elif args.config:
        cfg = ExperimentConfig.from_json(Path(args.config).read_text())
        results = [run_experiment(cfg)]
    else:
        raise UsageError("replicate needs --preset or --config")
    text = tables_to_csv(results)
    _emit(text, args.out)
    if args.out:
        sidecar = Path(args.out).with_suffix(".json")
        sidecar.write_text(json.dumps(tables_metadata(results), indent=2))


def cmd_graph_stats(args) -> None:
    if args.edges:
        net = read_network(args.edges)
    elif args.ring:
        net = gen_ring(args.ring)
    elif args.erdos_renyi:
        net = gen_erdos_renyi(args.erdos_renyi, args.degree, args.seed)
    else:
        raise UsageError("graph-stats needs --edges, --ring or --erdos-renyi")
    deltas = network_deltas(net, _shift(args))
    out = degree_summary(net)
    out.update(deltas.as_dict())
    out["bounded_by_one"] = deltas_within_unit(deltas)
    _emit(json.dumps(out, indent=2), args.out)


def cmd_analyze(args) -> None:
    tr = _transforms(args)
    net, data = ingest(args.edges, args.nodes, tr)
    fit = fit_mle(data)
    report = effects_report(
        fit,
        net,
        _shift(args),
        args.method,
        metadata={"transforms": data.metadata["transforms"], "n_nodes": net.n_nodes, "mean_degree": float(net.degrees.mean())},
    )
    out = report.to_dict()
    out["fit"] = {k: v for k, v in fit.to_dict().items() if k != "info_inv"}
    _emit(json.dumps(out, indent=2), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rensem", description="Network mediation models with random effects.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="simulate one dataset from an experiment config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    def data_args(q):
        q.add_argument("--edges", required=True)
        q.add_argument("--nodes", required=True)
        q.add_argument("--transform", help="e.g. outcome=log1p+zscore,mediator=zscore")
        q.add_argument("--standardize", action="store_true", help="z-score mediator, outcome and confounders")
        q.add_argument("--out")

    s = sub.add_parser("fit", help="fit the model to edge and node files")
    data_args(s)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("effects", help="effects and intervals from a saved fit")
    s.add_argument("--edges", required=True)
    s.add_argument("--fit", required=True)
    _add_shift(s)
    s.add_argument("--method", choices=("general-delta", "closed-form"), default="general-delta")
    s.add_argument("--format", choices=("json", "csv"), default="json")
    s.add_argument("--out")
    s.set_defaults(func=cmd_effects)

    s = sub.add_parser("replicate", help="Monte-Carlo study")
    s.add_argument("--preset", choices=("table1", "tableS3"))
    s.add_argument("--config")
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--sizes", help="comma separated network sizes")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="CSV path; a JSON sidecar is written next to it")
    s.set_defaults(func=cmd_replicate)

    s = sub.add_parser("graph-stats", help="degree summary and network deltas")
    s.add_argument("--edges")
    s.add_argument("--ring", type=int)
    s.add_argument("--erdos-renyi", type=int, metavar="N")
    s.add_argument("--degree", type=float, default=10.0)
    s.add_argument("--seed", type=int, default=0)
    _add_shift(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_graph_stats)

    s = sub.add_parser("analyze", help="ingest, fit and report effects in one step")
    data_args(s)
    _add_shift(s)
    s.add_argument("--method", choices=("general-delta", "closed-form"), default="general-delta")
    s.set_defaults(func=cmd_analyze)
    return p


def _fail(kind: str, message: str, details=None, code: int = EXIT_FAILURE) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "details": details or {}}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            raise UsageError("a subcommand is required")
        args.func(args)
    except UsageError as exc:
        return _fail("usage", str(exc), code=EXIT_USAGE)
    except IngestError as exc:
        return _fail("IngestError", str(exc), exc.details)
    except OSError as exc:
        return _fail(type(exc).__name__, str(exc))
    except (ValueError, RuntimeError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
