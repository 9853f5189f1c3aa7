"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation failure.
"""
from __future__ import annotations

import argparse
import glob
import json
import sys
import warnings
from pathlib import Path

from . import __version__
from .cart import TreeConfig, SYNTHESIS_TREE
from .dataset import DataError, SynthesisMask, load_csv, load_schema, schema_hash, write_csv
from .design import DesignError, DesignSpec, FormulaError, parse_formula
from .general import NULL_METHODS, NullMethodError, PropensityModelSpec, general_utility
from .glm import FitError
from .sim import SimConfig, preset, render_table, resolve_threads, run_simulation, with_overrides
from .specific import ComparisonError, compare_fits, forest_plot_svg
from .synth import METHODS, SynthesisError, SynthesisPlan, synthesize

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _csv_list(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [t.strip() for t in text.split(",") if t.strip()]


def _expand(patterns: list[str]) -> list[str]:
    files: list[str] = []
    for pat in patterns:
        hits = sorted(glob.glob(pat))
        if not hits and not any(ch in pat for ch in "*?["):
            hits = [pat]
        if not hits:
            raise UsageError(f"no files match {pat!r}")
        files.extend(hits)
    return files


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _render(obj, fmt: str) -> str:
    if fmt == "json":
        return obj.to_json() + "\n"
    if fmt == "csv":
        return obj.to_csv()
    return obj.to_markdown()


# -- subcommands --------------------------------------------------------------

def cmd_synthesize(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for synthesis")
    schema = load_schema(args.schema)
    data = load_csv(args.data, schema)
    columns = _csv_list(args.columns)
    order = _csv_list(args.order_of_visit)
    if order is not None:
        if columns is not None and set(columns) != set(order):
            raise UsageError("--order-of-visit must list the same columns as --columns")
        columns = order
    if columns is not None:
        unknown = [c for c in columns if c not in data.names]
        if unknown:
            raise UsageError(f"unknown columns {unknown}")
    cfg = TreeConfig(args.min_leaf, args.max_depth, args.cp)
    if order is not None:
        plan = SynthesisPlan(args.method, tuple(order), SynthesisMask(frozenset(order), args.m),
                             args.m, args.seed, cfg)
    else:
        plan = SynthesisPlan.default(data, args.method, args.m, args.seed, columns, tree_config=cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i, syn in enumerate(synthesize(data, plan), start=1):
        name = f"syn_{i:03d}.csv"
        write_csv(syn, out / name)
        files.append(name)
    manifest = {
        "plan": plan.to_dict(),
        "seed": args.seed,
        "schema_hash": schema_hash(schema),
        "source": Path(args.data).name,
        "files": files,
        "version": __version__,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(files)} synthetic dataset(s) and manifest.json to {out}")
    return EXIT_OK


def _load_pair(args):
    schema = load_schema(args.schema)
    original = load_csv(args.original, schema)
    synthetics = [load_csv(p, schema, role="synthetic") for p in _expand(args.synthetic)]
    return schema, original, synthetics


def _mask_from_args(args, schema, m):
    cols = _csv_list(args.synthesized)
    if cols is None and args.manifest:
        with open(args.manifest, encoding="utf-8") as fh:
            cols = json.load(fh)["plan"]["synthesized_columns"]
    if cols is None:
        return None
    return SynthesisMask(frozenset(cols), m)


def cmd_utility_general(args) -> int:
    schema, original, synthetics = _load_pair(args)
    if args.null == "permutation" and args.seed is None:
        raise UsageError("--seed is required for the permutation null")
    mask = _mask_from_args(args, schema, len(synthetics))
    if mask is not None:
        mask.validate(original.schema)
    spec = PropensityModelSpec(
        args.model,
        DesignSpec(interaction_order=args.order, include_squares=args.squares),
        TreeConfig(args.min_leaf, args.max_depth, args.cp),
        tuple(_csv_list(args.variables)) if args.variables else None,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = general_utility(original, synthetics, spec, args.null, mask, args.n_perms,
                                 args.seed if args.seed is not None else 0)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _emit(_render(report, args.format), args.out)
    print(report.summary_line())
    return EXIT_OK


def cmd_utility_specific(args) -> int:
    schema, original, synthetics = _load_pair(args)
    formula = parse_formula(args.formula, args.family)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        comp = compare_fits(original, synthetics, formula, args.level)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _emit(_render(comp, args.format), args.out)
    if args.plot:
        Path(args.plot).parent.mkdir(parents=True, exist_ok=True)
        Path(args.plot).write_text(forest_plot_svg(comp), encoding="utf-8")
    print(f"median IO={comp.median_io:.6g}, median std_diff={comp.median_std_diff:.6g}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for simulation")
    if args.reps is not None and args.reps < 1:
        raise UsageError(f"--reps must be at least 1, got {args.reps}")
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = SimConfig.from_dict(json.load(fh))
        cfg = with_overrides(cfg, reps=args.reps, seed=args.seed, n=args.n)
    else:
        cfg = with_overrides(preset(args.preset, args.full, args.seed, args.reps), n=args.n)
    threads = resolve_threads(args.threads)

    def progress(done, total):
        if args.progress and (done % 50 == 0 or done == total):
            print(f"{done}/{total} replicates", file=sys.stderr)

    rows = run_simulation(cfg, threads, progress)
    fmt = "markdown" if args.format == "md" else args.format
    _emit(render_table(rows, fmt), args.out)
    failures = sum(r.failures for r in rows)
    if failures:
        print(f"warning: {failures} replicate(s) failed and were skipped", file=sys.stderr)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _tree_flags(p, defaults: TreeConfig):
    p.add_argument("--min-leaf", type=int, default=defaults.min_leaf, help="minimum rows per leaf")
    p.add_argument("--max-depth", type=int, default=defaults.max_depth)
    p.add_argument("--cp", type=float, default=defaults.complexity,
                   help="complexity: minimum impurity gain as a share of the root impurity")


def _io_flags(p):
    p.add_argument("--original", required=True, help="original data CSV")
    p.add_argument("--schema", required=True, help="schema JSON")
    p.add_argument("--synthetic", required=True, nargs="+", help="synthetic CSV file(s) or glob(s)")
    p.add_argument("--format", choices=("json", "csv", "md"), default="json")
    p.add_argument("--out", help="report path (default: standard output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synthmetric",
                                     description="Synthesize data and measure its utility.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="generate synthetic datasets")
    p.add_argument("--data", required=True, help="original data CSV")
    p.add_argument("--schema", required=True, help="schema JSON")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--m", type=int, default=1, help="number of synthetic datasets")
    p.add_argument("--columns", help="comma-separated columns to synthesize (default: all)")
    p.add_argument("--order-of-visit", help="comma-separated visit order of synthesized columns")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    _tree_flags(p, SYNTHESIS_TREE)
    p.set_defaults(func=cmd_synthesize)

    util = sub.add_parser("utility", help="evaluate utility").add_subparsers(dest="kind", required=True)
    g = util.add_parser("general", help="propensity-score mean-squared error")
    _io_flags(g)
    g.add_argument("--model", choices=("logistic", "cart"), default="logistic")
    g.add_argument("--null", choices=NULL_METHODS, default="analytic")
    g.add_argument("--order", type=int, choices=(1, 2, 3), default=2, help="interaction order")
    g.add_argument("--squares", action="store_true", help="add squared numeric terms")
    g.add_argument("--variables", help="comma-separated columns used by the propensity model")
    g.add_argument("--synthesized", help="comma-separated synthesized columns (default: all)")
    g.add_argument("--manifest", help="manifest.json from `synthesize`, for the synthesized columns")
    g.add_argument("--n-perms", type=int, default=100)
    g.add_argument("--seed", type=int)
    _tree_flags(g, TreeConfig())
    g.set_defaults(func=cmd_utility_general)

    s = util.add_parser("specific", help="confidence-interval overlap of a fitted model")
    _io_flags(s)
    s.add_argument("--formula", required=True, help='e.g. "y ~ x1 + x2 + x1:x2"')
    s.add_argument("--family", choices=("gaussian", "binomial", "multinomial"), default="gaussian")
    s.add_argument("--level", type=float, default=0.95)
    s.add_argument("--plot", help="write an interval plot SVG to this path")
    s.set_defaults(func=cmd_utility_specific)

    sm = sub.add_parser("simulate", help="run a calibration simulation")
    sm.add_argument("--preset", default="table1-desk",
                    help="table1-desk, table2-desk, tableA1-desk or tableA3-desk")
    sm.add_argument("--full", action="store_true", help="full scale (n=5000, 1000 replicates)")
    sm.add_argument("--config", help="SimConfig JSON (overrides --preset)")
    sm.add_argument("--reps", type=int)
    sm.add_argument("--n", type=int)
    sm.add_argument("--seed", type=int)
    sm.add_argument("--threads", type=int, help="worker processes (env SYNTHMETRIC_THREADS)")
    sm.add_argument("--format", choices=("md", "csv", "json"), default="md")
    sm.add_argument("--out")
    sm.add_argument("--progress", action="store_true")
    sm.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NullMethodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, DataError, FileNotFoundError, FormulaError, DesignError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FitError, SynthesisError, ComparisonError, RuntimeError, OSError,
            ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
