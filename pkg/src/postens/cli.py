"""Command-line surface: complete, decompose, approximate, benchmark, synth, predict.

All commands are file based and deterministic for a fixed --seed.  A JSON
config file can mirror every flag (keys use underscores); explicit flags win.
Errors are reported as one JSON record on stderr and a nonzero exit code;
exit code 0 means every requested output file was written.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, benchmark, completion, core, plots, risk, solver, synth


class CliError(Exception):
    pass


def _parse_int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v != ""]
    except ValueError as exc:
        raise CliError(f"expected a comma-separated integer list, got {text!r}") from exc


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v != ""]
    except ValueError as exc:
        raise CliError(f"expected a comma-separated number list, got {text!r}") from exc


def _parse_noise(text) -> risk.NoiseModel:
    if text is None or str(text).lower() == "none":
        return risk.NoiseModel.none()
    parts = _parse_float_list(text)
    if len(parts) != 2:
        raise CliError(f"--noise expects 'k,theta' or 'none', got {text!r}")
    return risk.NoiseModel("gamma", parts[0], parts[1])


def _load_level_map(path) -> dict[str, list[str]]:
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise CliError(f"level map {path} must map column names to level lists")
    out = {}
    for col, levels in payload.items():
        if not isinstance(levels, list) or not levels:
            raise CliError(f"level map column {col!r} needs a nonempty list of levels")
        out[str(col)] = [str(v) for v in levels]
    return out


def _read_indexed_csv(path, p, level_map, expect_y, dims=None, floor=None, allow_zero=False):
    """Shared reader for observation and query CSVs, with level-map decoding."""
    level_map = level_map or {}
    expected = [f"x{j}" for j in range(1, p + 1)] + (["y"] if expect_y else [])
    rows, vals = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CliError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if expect_y and header[: p + 1] != expected:
            missing = [c for c in expected if c not in header]
            if missing:
                raise CliError(f"{path}: missing column(s) {missing}")
            raise CliError(f"{path}: columns must be {expected}, got {header}")
        if not expect_y and header[:p] != expected:
            raise CliError(f"{path}: columns must start with {expected}, got {header[:p]}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < p + (1 if expect_y else 0):
                raise CliError(f"{path}:{lineno}: expected at least "
                               f"{p + (1 if expect_y else 0)} fields, got {len(row)}")
            idx = []
            for j in range(p):
                cell = row[j].strip()
                col = f"x{j + 1}"
                if col in level_map:
                    try:
                        idx.append(level_map[col].index(cell) + 1)
                    except ValueError:
                        raise CliError(f"{path}:{lineno}: level {cell!r} not in the "
                                       f"map for column {col}") from None
                else:
                    try:
                        idx.append(int(cell))
                    except ValueError:
                        raise CliError(f"{path}:{lineno}: column {col} needs an integer, "
                                       f"got {cell!r}") from None
            rows.append(idx)
            if expect_y:
                try:
                    y = float(row[p])
                except ValueError as exc:
                    raise CliError(f"{path}:{lineno}: {exc}") from exc
                if floor is not None:
                    y = max(y, floor)
                if y < 0 or (y == 0 and not allow_zero):
                    raise CliError(f"{path}:{lineno}: y must be positive, got {y}")
                vals.append(y)
    if not rows:
        raise CliError(f"{path}: no data rows")
    indices = np.asarray(rows, dtype=np.int64)
    if dims is None:
        raise CliError("dimensions are required (give --dims or a full level map)")
    shape = core.TensorShape(tuple(dims))
    hi = indices.max(axis=0)
    if (hi > np.asarray(dims)).any():
        bad = int(np.argmax(hi > np.asarray(dims))) + 1
        raise CliError(f"{path}: column x{bad} exceeds the declared dimension {dims[bad - 1]}")
    if expect_y:
        return risk.ObservationSet(shape, indices, np.asarray(vals), allow_zero)
    return shape, indices


def _resolve_dims(args, level_map) -> list[int]:
    dims = _parse_int_list(args.dims) if args.dims else None
    if level_map:
        p = len(level_map)
        mapped = [f"x{j}" for j in range(1, p + 1)]
        if set(level_map) == set(mapped):
            derived = [len(level_map[c]) for c in mapped]
            if dims is None:
                dims = derived
            elif dims != derived:
                raise CliError(f"--dims {dims} disagrees with the level map sizes {derived}")
    if dims is None:
        raise CliError("--dims is required unless the level map covers every column")
    return dims


def _count_columns(path) -> int:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise CliError(f"{path}: empty file")
    names = [h.strip() for h in header]
    p = sum(1 for h in names if h.startswith("x"))
    if p < 1:
        raise CliError(f"{path}: no x1..xp columns found")
    return p


def _solve_options(args) -> solver.SolveOptions:
    return solver.SolveOptions(
        epsilon=args.epsilon if args.epsilon is not None else 1e-6,
        M=args.M,
        l1_budget=getattr(args, "l1_budget", None),
        seed=args.seed if args.seed is not None else 0,
    )


def _write_json(payload, path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _load_truth(path):
    truth = core.load_tensor_file(path)
    return truth if isinstance(truth, core.DenseTensor) else truth.dense()


def cmd_complete(args) -> list[str]:
    level_map = _load_level_map(args.level_map) if args.level_map else None
    dims = _resolve_dims(args, level_map)
    obs = _read_indexed_csv(args.data, len(dims), level_map, expect_y=True,
                            dims=dims, floor=args.floor)
    opts = _solve_options(args)
    if args.threshold is not None and args.cv_grid is not None:
        raise CliError("--threshold and --cv-grid are mutually exclusive")
    if args.threshold is not None:
        config = completion.CompletionConfig(
            threshold=completion.ThresholdPolicy.with_value(args.threshold), solve=opts
        )
    else:
        grid = _parse_float_list(args.cv_grid) if args.cv_grid else list(completion.DEFAULT_THRESHOLD_GRID)
        config = completion.CompletionConfig(cv_grid=tuple(grid), solve=opts)
    result = completion.complete_tensor(obs, config)

    out = Path(args.out if args.out else "completion")
    model_path = f"{out}.model.json"
    metrics_path = f"{out}.metrics.json"
    core.save_factor_set(result.params, model_path)
    metrics = {
        "n": obs.n,
        "partition": [list(f) for f in result.partition.facets],
        "threshold": result.threshold,
        "cv_errors": (
            {repr(e.threshold): e.cv_error for e in result.cv_entries}
            if result.cv_entries is not None
            else None
        ),
        "objective": result.report.objective,
        "converged": result.report.converged,
        "under_determined": result.report.under_determined,
        "M": result.params.bound,
        "prediction_error": None,
    }
    if args.truth:
        metrics["prediction_error"] = risk.prediction_error(_load_truth(args.truth), result.params)
    _write_json(metrics, metrics_path)
    return [model_path, metrics_path]


def cmd_decompose(args) -> list[str]:
    if not args.data or not args.facets:
        raise CliError("decompose needs --data (tensor file) and --facets")
    tensor = core.load_tensor_file(args.data)
    if isinstance(tensor, core.FactorSet):
        tensor = tensor.dense()
    with open(args.facets) as fh:
        facet_lists = json.load(fh)
    complex = core.PartitionComplex.from_lists(facet_lists, core._complex_kind(facet_lists))
    M = args.M if args.M is not None else tensor.positivity_bound() * 1.0000001
    params = core.construct_exact_decomposition(tensor, complex, M)
    out = Path(args.out if args.out else "decomposition")
    model_path = f"{out}.model.json"
    core.save_factor_set(params, model_path)
    return [model_path]


def cmd_approximate(args) -> list[str]:
    level_map = _load_level_map(args.level_map) if args.level_map else None
    dims = _resolve_dims(args, level_map)
    obs = _read_indexed_csv(args.data, len(dims), level_map, expect_y=True,
                            dims=dims, floor=args.floor)
    if args.facets:
        with open(args.facets) as fh:
            facet_lists = json.load(fh)
        complex = core.PartitionComplex.from_lists(facet_lists, core._complex_kind(facet_lists))
    else:
        complex = core.PartitionComplex.singletons(len(dims))  # rank-1 fit
    opts = _solve_options(args)
    if opts.l1_budget is not None:
        report = solver.solve_sparse(obs, complex, opts)
    else:
        report = solver.solve_convex(obs, complex, opts)
    params = core.exp_reparam(report.logparams)
    out = Path(args.out if args.out else "approximation")
    model_path = f"{out}.model.json"
    metrics_path = f"{out}.metrics.json"
    core.save_factor_set(params, model_path)
    metrics = {
        "n": obs.n,
        "facets": [list(f) for f in complex.facets],
        "objective": report.objective,
        "kkt_residual": report.kkt_residual,
        "feasibility_residual": report.feasibility_residual,
        "converged": report.converged,
        "under_determined": report.under_determined,
        "prediction_error": None,
    }
    if args.truth:
        metrics["prediction_error"] = risk.prediction_error(_load_truth(args.truth), params)
    _write_json(metrics, metrics_path)
    return [model_path, metrics_path]


def cmd_benchmark(args) -> list[str]:
    truth = core.load_tensor_file(args.truth) if args.truth else synth.benchmark_tensor()
    n_grid = tuple(_parse_int_list(args.n_grid)) if args.n_grid else (100, 1000, 5000)
    cfg = benchmark.BenchmarkConfig(
        truth=truth,
        n_grid=n_grid,
        noise=_parse_noise(args.noise if args.noise is not None else "1,1"),
        trials=args.trials if args.trials is not None else 20,
        seed=args.seed if args.seed is not None else 0,
        als_ranks=(args.rank,) if args.rank else (1, 2, 3, 4),
        solve=_solve_options(args),
    )
    report = benchmark.run_benchmark(cfg)
    out_dir = Path(args.out if args.out else "benchmark_report")
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.csv"
    plot_path = out_dir / "plot_data.csv"
    fig_path = out_dir / "benchmark.png"
    benchmark.write_report_csv(report, report_path)
    benchmark.write_plot_data_csv(report, plot_path)
    plots.save_error_figure(report, fig_path)
    return [str(report_path), str(plot_path), str(fig_path)]


def cmd_synth(args) -> list[str]:
    truth = core.load_tensor_file(args.truth) if args.truth else synth.benchmark_tensor()
    if args.n is None:
        raise CliError("synth needs --n")
    spec = synth.ExperimentSpec(
        truth=truth,
        n=int(args.n),
        noise=_parse_noise(args.noise),
        seed=args.seed if args.seed is not None else 0,
    )
    obs = synth.sample_observations(spec)
    out = args.out if args.out else "observations.csv"
    risk.write_observations(obs, out)
    return [str(out)]


def cmd_predict(args) -> list[str]:
    if not args.model or not args.data:
        raise CliError("predict needs --model and --data (query CSV)")
    with open(args.model) as fh:
        payload = json.load(fh)
    if "facets" in payload and "factors" in payload:
        model = core.load_factor_set(args.model)
        dims = model.shape.dims
    elif "rank" in payload and "factors" in payload:
        model = baselines.load_cp_model(args.model)
        dims = model.shape.dims
    else:
        raise CliError(f"{args.model}: unrecognized model layout (need facets or rank)")
    level_map = _load_level_map(args.level_map) if args.level_map else None
    p = len(dims)
    shape, indices = _read_indexed_csv(args.data, p, level_map, expect_y=False, dims=list(dims))
    if isinstance(model, core.FactorSet):
        cols = core.observation_columns(indices, model.complex, model.shape)
        flat = np.concatenate([f.ravel() for f in model.factors])
        preds = flat[cols].prod(axis=1)
    else:
        preds = np.ones((indices.shape[0], model.rank))
        for i, arr in enumerate(model.factors):
            preds = preds * arr[indices[:, i] - 1, :]
        preds = preds.sum(axis=1)
    if args.floor is not None:
        preds = np.maximum(preds, args.floor)
    out = args.out if args.out else "predictions.csv"
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(1, p + 1)] + ["prediction"])
        for row, value in zip(indices, preds):
            writer.writerow([int(v) for v in row] + [repr(float(value))])
    return [str(out)]


_COMMANDS = {
    "complete": cmd_complete,
    "decompose": cmd_decompose,
    "approximate": cmd_approximate,
    "benchmark": cmd_benchmark,
    "synth": cmd_synth,
    "predict": cmd_predict,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="postens",
        description="Positive tensor decomposition, approximation, and completion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("complete", "estimate structure and fit a model from an observation CSV"),
        ("decompose", "exact construction from a fully known tensor and a facet file"),
        ("approximate", "fit a fixed facet structure (all singletons = rank-1 fit)"),
        ("benchmark", "synthetic method comparison; writes CSV report, plot data, figure"),
        ("synth", "draw seeded observations from a truth tensor"),
        ("predict", "evaluate a fitted model on a query CSV"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON file mirroring any flag")
        p.add_argument("--data", default=None, help="observation/query CSV or tensor file")
        p.add_argument("--dims", default=None, help="comma-separated dimensions, e.g. 3,3,3")
        p.add_argument("--truth", default=None, help="ground-truth tensor file (JSON)")
        p.add_argument("--facets", default=None, help="JSON file with facet lists")
        p.add_argument("--model", default=None, help="fitted model file (predict)")
        p.add_argument("--M", type=float, default=None, help="entry bound M > 1")
        p.add_argument("--epsilon", type=float, default=None, help="solve tolerance")
        p.add_argument("--threshold", type=float, default=None, help="fixed gap threshold")
        p.add_argument("--cv-grid", dest="cv_grid", default=None,
                       help="comma-separated thresholds for cross-validation")
        p.add_argument("--lambda", dest="l1_budget", type=float, default=None,
                       help="l1 budget for the sparse fit")
        p.add_argument("--rank", type=int, default=None, help="CP rank (baseline)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--noise", default=None, help="'k,theta' for gamma noise or 'none'")
        p.add_argument("--n", type=int, default=None, help="sample count (synth)")
        p.add_argument("--n-grid", dest="n_grid", default=None,
                       help="comma-separated sample counts (benchmark)")
        p.add_argument("--level-map", dest="level_map", default=None,
                       help="JSON sidecar mapping columns to ordered string levels")
        p.add_argument("--floor", type=float, default=None,
                       help="clamp measurements and predictions below this value")
        p.add_argument("--out", default=None, help="output path or prefix")
    return parser


def _apply_config(args) -> None:
    if not args.config:
        return
    with open(args.config) as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise CliError(f"{args.config}: config must be a JSON object")
    for key, value in payload.items():
        dest = str(key).replace("-", "_")
        if dest == "lambda":
            dest = "l1_budget"
        if not hasattr(args, dest):
            raise CliError(f"{args.config}: unknown option {key!r}")
        if getattr(args, dest) is None:
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            setattr(args, dest, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        outputs = _COMMANDS[args.command](args)
    except Exception as exc:  # one machine-readable record per failure
        record = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1
    for path in outputs:
        print(path)
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
