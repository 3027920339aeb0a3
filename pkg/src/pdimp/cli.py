"""Command-line front end: reproducible runs that emit tables and plot data.

Every run writes its artifacts plus a ``manifest.json`` recording the full
configuration, seed, and tool version; no timestamps, so identical
configurations produce byte-identical outputs. Plot data is emitted as
CSV with a JSON sidecar describing the columns, ready for gnuplot or any
plotting tool.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .bridge import spawn_external
from .data import Dataset, load_csv
from .engine import GridStrategy, ICEResult, PDResult, build_grid, ice_curves, \
    joint_partial_dependence, partial_dependence
from .errors import BridgeError, ParameterError, PdimpError, UsageError
from .importance import MEASURES, ImportanceReport, importance_all
from .interaction import InteractionReport, interaction_matrix
from .models import fit_knn, fit_linear
from .serialize import load_model, save_model
from .simulate import SimulationSpec, generate
from .expressions import parse_expression
from .trees import fit_bagged_trees

SUBCOMMANDS = ("fit", "importance", "pdp", "ice", "interact", "simulate", "bridge-check")


@dataclass
class RunConfig:
    """Resolved options of one run; serialized verbatim into the manifest."""

    subcommand: str
    data: str | None = None
    target: str | None = None
    model: str | None = None
    grid: str | None = None
    measure: str | None = None
    aggregator: str | None = None
    workers: int = 1
    seed: int | None = None
    out_dir: str | None = None
    out: str | None = None
    formats: tuple[str, ...] = ("csv", "json")
    features: tuple[str, ...] | None = None
    pairs: tuple[str, ...] | None = None
    h_stat: bool = False
    sigma: float | None = None
    n: int | None = None
    kind: str | None = None
    betas: tuple[float, float, float] | None = None
    timeout: float = 30.0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _model_flags(parser: _Parser):
    group = parser.add_argument_group("model source (exactly one)")
    group.add_argument("--model", help="builtin learner: linear | knn:k=10 | "
                                       "bagged:n_trees=100,max_depth=6,min_leaf=5,seed=1")
    group.add_argument("--expr", help="closed-form prediction surface, e.g. '1 + 3*x1 - 5*x2'")
    group.add_argument("--external", help="external model command (line protocol child)")
    group.add_argument("--model-file", help="previously saved model JSON")
    parser.add_argument("--timeout", type=float, default=30.0,
                        help="external model response timeout in seconds")


def _common_flags(parser: _Parser, grid_default: str):
    parser.add_argument("--data", required=True, help="input CSV path")
    parser.add_argument("--target", help="target column (required to fit builtin learners; "
                                         "otherwise dropped from the feature set if present)")
    parser.add_argument("--grid", default=grid_default,
                        help="unique | quantile:Q | equidistant:K (default %(default)s)")
    parser.add_argument("--aggregator", default="mean",
                        help="mean | median | trimmed:ALPHA (default %(default)s)")
    parser.add_argument("--workers", type=int,
                        default=int(os.environ.get("PDIMP_WORKERS", "1")),
                        help="parallel grid workers; results do not depend on this")
    parser.add_argument("--out-dir", default=".", help="artifact directory")
    parser.add_argument("--formats", default="csv,json", help="comma list of csv,json")


def build_parser() -> _Parser:
    parser = _Parser(prog="pdimp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pdimp {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="{" + ",".join(SUBCOMMANDS) + "}")

    p = sub.add_parser("fit", help="fit a builtin learner and save it as JSON")
    p.add_argument("--data", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("importance", help="rank features by PD flatness")
    _common_flags(p, grid_default="unique")
    _model_flags(p)
    p.add_argument("--measure", default="sd", choices=MEASURES)

    p = sub.add_parser("pdp", help="partial dependence of one feature or a pair")
    _common_flags(p, grid_default="unique")
    _model_flags(p)
    p.add_argument("--features", required=True, help="one name, or two comma-separated")

    p = sub.add_parser("ice", help="individual conditional expectation curves")
    _common_flags(p, grid_default="unique")
    _model_flags(p)
    p.add_argument("--feature", required=True)

    p = sub.add_parser("interact", help="pairwise interaction statistics")
    _common_flags(p, grid_default="quantile:10")
    _model_flags(p)
    p.add_argument("--pairs", help="comma list of colon pairs, e.g. x1:x2,x3:x4 (default: all)")
    p.add_argument("--h-stat", action="store_true", help="also report Friedman's H per pair")
    p.add_argument("--top", type=int, default=10, help="rows in the printed table")

    p = sub.add_parser("simulate", help="generate a synthetic benchmark dataset")
    p.add_argument("--kind", required=True, choices=("linear", "friedman"))
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta0", type=float, default=1.0)
    p.add_argument("--beta1", type=float, default=3.0)
    p.add_argument("--beta2", type=float, default=-5.0)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("bridge-check", help="handshake an external model and probe it")
    p.add_argument("--external", required=True)
    p.add_argument("--data", help="optional CSV; its first rows become the probe batch")
    p.add_argument("--rows", type=int, default=3, help="probe rows (default %(default)s)")
    p.add_argument("--timeout", type=float, default=30.0)

    return parser


def _parse_model_params(text: str) -> tuple[str, dict]:
    kind, sep, rest = text.partition(":")
    params = {}
    if sep:
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise UsageError(f"bad model parameter {item!r} in {text!r}")
            try:
                params[key.strip()] = int(value)
            except ValueError:
                raise UsageError(f"model parameter {key!r} must be an integer") from None
    return kind, params


def _resolve_model(args, features: Dataset, full: Dataset):
    """Build the prediction model from whichever source flag was given."""
    sources = [s for s in ("model", "expr", "external", "model_file")
               if getattr(args, s.replace("-", "_"), None)]
    if len(sources) != 1:
        raise UsageError("give exactly one of --model, --expr, --external, --model-file")
    source = sources[0]
    if source == "expr":
        return parse_expression(args.expr, features.schema), f"expr:{args.expr}"
    if source == "external":
        return spawn_external(args.external, timeout=args.timeout), f"external:{args.external}"
    if source == "model_file":
        return load_model(args.model_file), f"file:{args.model_file}"
    kind, params = _parse_model_params(args.model)
    if args.target is None:
        raise UsageError(f"--target is required to fit the builtin {kind!r} model")
    if kind == "linear":
        _reject_params(params, ())
        return fit_linear(full, args.target), args.model
    if kind == "knn":
        _reject_params(params, ("k",))
        return fit_knn(full, args.target, params.get("k", 5)), args.model
    if kind == "bagged":
        _reject_params(params, ("n_trees", "max_depth", "min_leaf", "seed"))
        return fit_bagged_trees(full, args.target, **params), args.model
    raise UsageError(f"unknown builtin model kind {kind!r}")


def _reject_params(params: dict, allowed: tuple[str, ...]):
    extra = set(params) - set(allowed)
    if extra:
        raise UsageError(f"unknown model parameters {sorted(extra)}; allowed: {list(allowed)}")


def _load_features(args) -> tuple[Dataset, Dataset]:
    """(feature dataset, full dataset); the target column is excluded from features."""
    full = load_csv(args.data)
    if args.target:
        features, _ = full.split_target(args.target)
    else:
        features = full
    return features, full


def _formats(args) -> tuple[str, ...]:
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    for fmt in formats:
        if fmt not in ("csv", "json"):
            raise UsageError(f"unsupported output format {fmt!r}")
    return formats


def emit_plot_data(result, out_dir, basename: str, formats=("csv", "json")) -> list[Path]:
    """Write a result as plot data files plus a sidecar column-schema JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for fmt in formats:
        if fmt == "csv":
            path = out_dir / f"{basename}.csv"
            result.to_csv(path)
        elif fmt == "json":
            path = out_dir / f"{basename}.json"
            result.to_json(path)
        else:
            raise ParameterError(f"unsupported output format {fmt!r}")
        paths.append(path)
    sidecar = out_dir / f"{basename}.schema.json"
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(_sidecar_schema(result), fh, indent=2)
        fh.write("\n")
    paths.append(sidecar)
    return paths


def _sidecar_schema(result) -> dict:
    if isinstance(result, PDResult):
        columns = [
            {"name": axis.feature, "role": "grid", "kind": axis.kind}
            for axis in result.grid.axes
        ]
        columns.append({"name": "pd", "role": "value"})
        return {
            "columns": columns,
            "baseline": result.baseline,
            "n_train": result.n_train,
            "aggregator": result.aggregator,
            "strategy": str(result.grid.strategy),
        }
    if isinstance(result, ICEResult):
        axis = result.grid.axes[0]
        return {
            "columns": [
                {"name": "row_id", "role": "series"},
                {"name": "grid_value", "role": "grid", "kind": axis.kind},
                {"name": "prediction", "role": "value"},
            ],
            "baseline": result.baseline,
            "feature": axis.feature,
            "strategy": str(result.grid.strategy),
        }
    if isinstance(result, ImportanceReport):
        return {
            "columns": [
                {"name": "feature", "role": "label"},
                {"name": "score", "role": "value"},
            ],
            "grid_strategy": result.grid_strategy,
            "aggregator": result.aggregator,
        }
    if isinstance(result, InteractionReport):
        return {
            "columns": [
                {"name": "feature_i", "role": "label"},
                {"name": "feature_j", "role": "label"},
                {"name": "stat_pd", "role": "value"},
                {"name": "stat_h", "role": "value", "optional": True},
            ],
            "grid_strategy": result.grid_strategy,
        }
    raise ParameterError(f"{type(result).__name__} has no plot-data form")


def _write_manifest(out_dir, config: RunConfig) -> None:
    doc = {"tool": "pdimp", "version": __version__,
           "config": {k: v for k, v in asdict(config).items() if v is not None}}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _close_if_external(model) -> None:
    close = getattr(model, "close", None)
    if close is not None:
        close()


def _cmd_fit(args) -> int:
    full = load_csv(args.data)
    args.expr = args.external = args.model_file = None
    args.timeout = 30.0
    model, model_desc = _resolve_model(args, full, full)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, out_dir / "model.json")
    _write_manifest(out_dir, RunConfig(
        subcommand="fit", data=args.data, target=args.target, model=model_desc,
    ))
    print(f"saved {out_dir / 'model.json'}")
    return 0


def _cmd_importance(args) -> int:
    features, full = _load_features(args)
    model, model_desc = _resolve_model(args, features, full)
    try:
        report = importance_all(
            model, features, GridStrategy.parse(args.grid), args.measure,
            workers=args.workers, aggregator=args.aggregator,
        )
    finally:
        _close_if_external(model)
    formats = _formats(args)
    emit_plot_data(report, args.out_dir, "importance", formats)
    _write_manifest(args.out_dir, RunConfig(
        subcommand="importance", data=args.data, target=args.target, model=model_desc,
        grid=args.grid, measure=args.measure, aggregator=args.aggregator,
        workers=args.workers, out_dir=args.out_dir, formats=formats,
    ))
    print(report.to_text())
    return 0


def _cmd_pdp(args) -> int:
    features, full = _load_features(args)
    names = [n.strip() for n in args.features.split(",") if n.strip()]
    if len(names) not in (1, 2):
        raise UsageError("--features takes one name or two comma-separated names")
    model, model_desc = _resolve_model(args, features, full)
    try:
        grid = build_grid(features, names, GridStrategy.parse(args.grid))
        if len(names) == 1:
            result = partial_dependence(model, features, grid,
                                        workers=args.workers, aggregator=args.aggregator)
        else:
            result = joint_partial_dependence(model, features, grid,
                                              workers=args.workers, aggregator=args.aggregator)
    finally:
        _close_if_external(model)
    formats = _formats(args)
    emit_plot_data(result, args.out_dir, "pd", formats)
    _write_manifest(args.out_dir, RunConfig(
        subcommand="pdp", data=args.data, target=args.target, model=model_desc,
        grid=args.grid, aggregator=args.aggregator, workers=args.workers,
        out_dir=args.out_dir, formats=formats, features=tuple(names),
    ))
    print(f"pd over {' x '.join(names)}: {grid.size} grid points, "
          f"baseline {result.baseline:.6g}")
    return 0


def _cmd_ice(args) -> int:
    features, full = _load_features(args)
    model, model_desc = _resolve_model(args, features, full)
    try:
        grid = build_grid(features, [args.feature], GridStrategy.parse(args.grid))
        result = ice_curves(model, features, grid, workers=args.workers)
    finally:
        _close_if_external(model)
    formats = _formats(args)
    emit_plot_data(result, args.out_dir, "ice", formats)
    _write_manifest(args.out_dir, RunConfig(
        subcommand="ice", data=args.data, target=args.target, model=model_desc,
        grid=args.grid, workers=args.workers, out_dir=args.out_dir,
        formats=formats, features=(args.feature,),
    ))
    print(f"{result.curves.shape[0]} curves x {result.curves.shape[1]} grid points")
    return 0


def _cmd_interact(args) -> int:
    features, full = _load_features(args)
    pairs = None
    if args.pairs:
        pairs = []
        for item in args.pairs.split(","):
            a, sep, b = item.partition(":")
            if not sep:
                raise UsageError(f"bad pair {item!r}; expected a:b")
            pairs.append((a.strip(), b.strip()))
    model, model_desc = _resolve_model(args, features, full)
    try:
        report = interaction_matrix(
            model, features, pairs, GridStrategy.parse(args.grid),
            include_h=args.h_stat, workers=args.workers,
        )
    finally:
        _close_if_external(model)
    formats = _formats(args)
    emit_plot_data(report, args.out_dir, "interactions", formats)
    _write_manifest(args.out_dir, RunConfig(
        subcommand="interact", data=args.data, target=args.target, model=model_desc,
        grid=args.grid, workers=args.workers, out_dir=args.out_dir, formats=formats,
        pairs=tuple(f"{a}:{b}" for a, b in pairs) if pairs else None, h_stat=args.h_stat,
    ))
    print(report.to_text(top=args.top))
    return 0


def _cmd_simulate(args) -> int:
    spec = SimulationSpec(args.kind, args.n, args.seed, args.sigma,
                          args.beta0, args.beta1, args.beta2)
    dataset = generate(spec)
    out = Path(args.out)
    if out.parent:
        out.parent.mkdir(parents=True, exist_ok=True)
    dataset.to_csv(out)
    manifest = out.with_name(out.stem + ".manifest.json")
    doc = {"tool": "pdimp", "version": __version__,
           "config": {"subcommand": "simulate", "kind": args.kind, "n": args.n,
                      "sigma": args.sigma, "seed": args.seed,
                      "betas": [args.beta0, args.beta1, args.beta2], "out": str(out)}}
    with open(manifest, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"wrote {dataset.n_rows} rows x {len(dataset.feature_names)} columns to {out}")
    return 0


def _cmd_bridge_check(args) -> int:
    model = spawn_external(args.external, timeout=args.timeout)
    try:
        print(f"handshake ok: protocol {model.protocol}, features {list(model.feature_names)}")
        if args.data:
            full = load_csv(args.data)
            probe = full.select(model.feature_names).take(
                range(min(args.rows, full.n_rows))
            )
        else:
            probe = Dataset.from_dict(
                {name: [0.0] * args.rows for name in model.feature_names}
            )
        preds = model.predict(probe)
        print(f"probe ok: {len(preds)} predictions, first {preds[: min(3, len(preds))]}")
    finally:
        model.close()
    return 0


_DISPATCH = {
    "fit": _cmd_fit,
    "importance": _cmd_importance,
    "pdp": _cmd_pdp,
    "ice": _cmd_ice,
    "interact": _cmd_interact,
    "simulate": _cmd_simulate,
    "bridge-check": _cmd_bridge_check,
}


def run(argv=None) -> int:
    """Parse and execute; raises toolkit errors rather than exiting."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.subcommand is None:
        raise UsageError("a subcommand is required")
    if getattr(args, "workers", 1) < 1:
        raise UsageError("--workers must be at least 1")
    return _DISPATCH[args.subcommand](args)


def main(argv=None) -> int:
    try:
        return run(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except BridgeError as exc:
        print(f"bridge error: {exc}", file=sys.stderr)
        return 3
    except (PdimpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # argparse --help/--version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
