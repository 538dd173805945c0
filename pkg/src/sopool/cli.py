"""``sopool`` command line: train, gradcheck, distinguish, params, inspect-data.

Exit codes: 0 success, 1 verification failure, 2 config error, 3 data error,
4 numeric divergence. Diagnostics go to stderr; tables and CSV to stdout.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from sopool import kernels
from sopool.errors import ConfigError, DataError, SopoolError

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors, which already matches the config-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _dataset_dir(args) -> Path:
    raw = args.dataset_dir or os.environ.get("SOPOOL_DATA_DIR")
    if not raw:
        raise DataError("no dataset directory: pass --dataset-dir or set SOPOOL_DATA_DIR")
    path = Path(raw)
    if not path.is_dir():
        raise DataError(f"dataset directory does not exist: {path}")
    return path


# --------------------------------------------------------------------- train


def cmd_train(args) -> int:
    from sopool.graphdata import parse_tu_dataset
    from sopool.trainer import ExperimentConfig, export_csv, grid_search, persist_result, train_cv

    config = ExperimentConfig(
        dataset=args.dataset, gnn=args.gnn, pool=args.pool.replace("-", "_"), hidden=args.hidden,
        batch_size=args.batch, f_prime=args.fprime, k=args.k, blocks=args.blocks, epochs=args.epochs,
        dropout=args.dropout, seed=args.seed, epoch_select=args.epoch_select, feature_mode=args.feature_mode,
        allow_off_grid=args.allow_off_grid,
    )
    config.validate()
    dataset = parse_tu_dataset(_dataset_dir(args), args.dataset, args.feature_mode)
    jobs = args.jobs if args.jobs else (os.cpu_count() or 1)
    print(f"{dataset.name}: {len(dataset)} graphs, {dataset.num_classes} classes, d={dataset.feature_dim} "
          f"({dataset.feature_mode}), backend={kernels.BACKEND}", file=sys.stderr)
    if config.hierarchical:
        print(f"heads per block k={config.block_sizes(dataset.avg_nodes)}", file=sys.stderr)
    if args.grid:
        result, all_results = grid_search(config, dataset, jobs=jobs)
        for r in all_results:
            cfg = r.config
            print(f"grid hidden={cfg['hidden']} batch={cfg['batch_size']}: {r.mean:.4f}±{r.std:.4f}"
                  + (" FAILED" if r.failed else ""), file=sys.stderr)
        if result is None:
            result = all_results[0]
    else:
        result = train_cv(config, dataset, jobs=jobs)
    out = Path(args.out)
    cfg = result.config
    stem = f"{dataset.name}_{result._model_label()}_h{cfg['hidden']}_b{cfg['batch_size']}_seed{cfg['seed']}"
    json_path = persist_result(result, out / f"{stem}.json")
    if result.failed:
        for line in result.diagnostics:
            print(f"divergence: {line}", file=sys.stderr)
        print(f"results (marked failed) written to {json_path}", file=sys.stderr)
        return EXIT_DIVERGED
    csv_path = export_csv(result, out / "results.csv")
    print(result.row())
    print(f"selected epoch {result.selected_epoch}, wall time {result.wall_time:.1f}s; "
          f"wrote {json_path} and {csv_path}", file=sys.stderr)
    return EXIT_OK


# ----------------------------------------------------------------- gradcheck


def cmd_gradcheck(args) -> int:
    from sopool import gradcheck
    from sopool.autograd import inject_fault

    names = args.ops or None
    if names:
        unknown = [n for n in names if n not in gradcheck.ALL_CHECKS]
        if unknown:
            raise ConfigError(f"unknown check(s) {unknown}; choose from {sorted(gradcheck.ALL_CHECKS)}")
    if args.seeds < 1:
        raise ConfigError("--seeds must be at least 1")
    if args.inject_fault:
        with inject_fault(args.inject_fault):
            result = gradcheck.run_suite(args.seeds, names)
    else:
        result = gradcheck.run_suite(args.seeds, names)
    print(result.summary())
    if not result.passed:
        failed = sorted({name for name, _, _ in result.failures})
        print(f"gradient check failed for: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


# --------------------------------------------------------------- distinguish


def _parse_alphabet(text: str | None, f: int):
    if text is None:
        return None
    rows = [[float(x) for x in part.split(",")] for part in text.split(";") if part.strip()]
    if any(len(r) != f for r in rows):
        raise ConfigError(f"--alphabet vectors must have length --f={f}")
    return np.array(rows)


def cmd_distinguish(args) -> int:
    from sopool import distinguish as ds

    if not (args.counterexamples or args.sweep):
        raise ConfigError("choose --counterexamples (alias --figure2) and/or --sweep")
    status = EXIT_OK
    if args.counterexamples:
        outcomes = ds.run_counterexamples(seed=args.seed, tol=args.tol)
        print(ds.format_counterexamples(outcomes))
        bad = [o for o in outcomes if not o.ok]
        if bad:
            for o in bad:
                print(f"unexpected verdict: {o.fixture} {o.report.pooling} gave {o.report.verdict}, "
                      f"expected {o.expected}", file=sys.stderr)
            status = EXIT_VERIFY
    if args.sweep:
        if args.max_n < 1:
            raise ConfigError(f"--max-n must be at least 1, got {args.max_n}")
        if args.f < 1:
            raise ConfigError(f"--f must be at least 1, got {args.f}")
        poolings = args.poolings.split(",") if args.poolings else None
        reports = ds.sweep_multisets(args.f, args.max_n, _parse_alphabet(args.alphabet, args.f), poolings,
                                     seed=args.seed, tol=args.tol, budget=args.budget)
        if args.csv:
            Path(args.csv).parent.mkdir(parents=True, exist_ok=True)
            with open(args.csv, "w", newline="") as fh:
                ds.reports_to_csv(reports, fh)
            print(f"wrote {len(reports)} collisions to {args.csv}", file=sys.stderr)
        else:
            sys.stdout.write(ds.reports_to_csv(reports))
        from sopool.pooling import KINDS

        print(ds.summarize_sweep(reports, poolings or KINDS), file=sys.stderr)
    return status


# -------------------------------------------------------------------- params


def cmd_params(args) -> int:
    from sopool.pooling import count_classifier_params

    c = 2 if args.c is None else args.c
    for name, v in (("--f", args.f), ("--c", c), ("--fprime", args.fprime), ("--k", args.k)):
        if v is not None and v <= 0:
            raise ConfigError(f"{name} must be positive, got {v}")
    if args.c is None:
        print("note: --c not given, using c=2 classes")
    f = args.f
    rows = [("first-order (sum/avg/max)", "f*c", count_classifier_params("sum", f, c=c)),
            ("flatten (sopool)", "f^2*c", count_classifier_params("sopool", f, c=c))]
    if args.fprime is not None:
        rows.append(("bimap (sopool_bimap)", "f*f' + f'^2*c", count_classifier_params("sopool_bimap", f, args.fprime, c)))
    rows.append(("attn (sopool_attn)", "f + f*c", count_classifier_params("sopool_attn", f, c=c)))
    if args.k is not None:
        rows.append(("mattn (sopool_mattn)", "k*f + k*f*c", count_classifier_params("sopool_mattn", f, c=c, k=args.k)))
    header = f"f={f}" + (f", f'={args.fprime}" if args.fprime is not None else "") + f", c={c}" + (
        f", k={args.k}" if args.k is not None else "")
    print(f"bias-free pooling + linear classifier parameters ({header})")
    print(f"{'pooling':<27} {'formula':<15} {'count':>12}")
    for name, formula, count in rows:
        print(f"{name:<27} {formula:<15} {count:>12,}")
    return EXIT_OK


# -------------------------------------------------------------- inspect-data


def cmd_inspect(args) -> int:
    from sopool.graphdata import parse_tu_dataset

    ds = parse_tu_dataset(_dataset_dir(args), args.dataset, args.feature_mode)
    sizes = np.array([g.n for g in ds.graphs])
    edges = np.array([len(g.edges) for g in ds.graphs])
    counts = np.bincount(ds.labels, minlength=ds.num_classes)
    print(f"dataset          {ds.name}")
    print(f"graphs           {len(ds)}")
    print(f"classes          {ds.num_classes} (raw labels {ds.label_values})")
    print(f"class counts     {counts.tolist()}")
    print(f"nodes avg/min/max {sizes.mean():.2f} / {sizes.min()} / {sizes.max()}")
    print(f"edges avg        {edges.mean():.2f}")
    print(f"feature mode     {ds.feature_mode}")
    print(f"feature dim      {ds.feature_dim}")
    return EXIT_OK


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sopool", description="Train graph classifiers with HᵀH-based poolings and run verification checks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="10-fold cross-validated training run")
    t.add_argument("--dataset-dir", help="folder holding DS/DS_A.txt etc. (default: $SOPOOL_DATA_DIR)")
    t.add_argument("--dataset", default="MUTAG")
    t.add_argument("--gnn", default="gin0", help="GIN variant, e.g. gin0, gin-eps, sum-1-layer, mean-mlp, gcn, max-mlp, sage")
    t.add_argument("--pool", default="sopool_bimap", help="pooling kind, or 'auto' for sum/avg by dataset family")
    t.add_argument("--hidden", type=_positive_int, default=32)
    t.add_argument("--batch", type=_positive_int, default=32)
    t.add_argument("--fprime", type=_positive_int, help="output width f' of the bilinear map")
    t.add_argument("--blocks", type=_positive_int, help="hierarchical blocks (uses sopool_mattn)")
    t.add_argument("--k", type=_positive_int, nargs="+", help="heads per block (one value for all blocks, or one per block)")
    t.add_argument("--epochs", type=_positive_int, default=300)
    t.add_argument("--dropout", type=float, default=0.5)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epoch-select", choices=("mean", "per-fold"), default="mean")
    t.add_argument("--feature-mode", default="auto", choices=("auto", "node-label-onehot", "degree-onehot", "constant"))
    t.add_argument("--out", default="results", help="output folder for JSON and CSV")
    t.add_argument("--jobs", type=_positive_int, help="parallel fold workers (default: all cores)")
    t.add_argument("--allow-off-grid", action="store_true", help="permit hidden/batch/blocks outside the search grid")
    t.add_argument("--grid", action="store_true", help="search hidden x batch and report the best")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    g.add_argument("--seeds", type=int, default=50)
    g.add_argument("--ops", nargs="+", help="restrict to these checks")
    g.add_argument("--inject-fault", help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)

    d = sub.add_parser("distinguish", help="pooling collision checks")
    d.add_argument("--counterexamples", "--figure2", dest="counterexamples", action="store_true",
                   help="run the shipped counterexample fixtures and check their verdicts")
    d.add_argument("--sweep", action="store_true", help="exhaustive multiset sweep, CSV to stdout")
    d.add_argument("--max-n", type=int, default=3)
    d.add_argument("--f", type=int, default=2, help="feature width for the sweep")
    d.add_argument("--alphabet", help="vectors as '1,0;0,1' (default: standard basis)")
    d.add_argument("--poolings", help="comma-separated pooling kinds (default: all)")
    d.add_argument("--tol", type=float, default=1e-9)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--budget", type=int, default=2_000_000)
    d.add_argument("--csv", help="write the sweep CSV here instead of stdout")
    d.set_defaults(func=cmd_distinguish)

    q = sub.add_parser("params", help="parameter counts of pooling + linear classifier")
    q.add_argument("--f", type=int, default=160)
    q.add_argument("--fprime", type=int)
    q.add_argument("--c", type=int)
    q.add_argument("--k", type=int)
    q.set_defaults(func=cmd_params)

    i = sub.add_parser("inspect-data", help="summarise a TUDataset folder")
    i.add_argument("--dataset-dir")
    i.add_argument("--dataset", default="MUTAG")
    i.add_argument("--feature-mode", default="auto", choices=("auto", "node-label-onehot", "degree-onehot", "constant"))
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SopoolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
