"""Command-line interface.

Subcommands mirror the pipeline stages: hardness scoring, threshold
search, final training, external evaluation, trade-off curves, the
thirteen-configuration comparison, and a one-shot run that chains
search, train, and evaluate. Every command takes --config pointing at a
versioned JSON file; --seed-list, --out, and --mode override the
corresponding config fields without editing the file.

Exit codes: 0 success, 1 configuration problem, 2 data problem,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .data import Dataset, impute_knn
from .errors import ConfigError, DataError, NumericError
from .hardness import load_scores, write_scores
from .learners import load_model, save_model
from .metrics import selective_evaluate, tradeoff_curve, write_curve
from .pipeline import (
    ACCEPT_ALL,
    ExperimentConfig,
    ExperimentRow,
    compute_hardness,
    finalize_and_test,
    load_config,
    load_manifest,
    load_test_dataset,
    load_train_dataset,
    run_comparison,
    score_batch,
    select_thresholds,
    train_final_model,
    write_manifest,
    write_results_table,
)
from .search import write_trace
from .selective import (
    CalibrationParams,
    ScoredPrediction,
    decide,
    load_ensemble,
    save_ensemble,
    write_predictions,
)

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2; this CLI reserves 2 for data
    problems, so usage errors exit 1 like every other configuration error."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="relikit",
        description="Training-data filtering plus prediction rejection for "
        "binary classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument(
            "--seed-list",
            help="comma-separated split seeds, overriding the config",
        )
        p.add_argument("--out", help="output directory, overriding the config")
        p.add_argument(
            "--mode",
            choices=("fraction", "score"),
            help="filtering threshold semantics, overriding the config",
        )

    p = sub.add_parser("hardness", help="score training instances")
    common(p)
    p.add_argument(
        "--method",
        choices=("ih", "if"),
        help="hardness estimator (default: the config's filter_method)",
    )

    p = sub.add_parser("search", help="select thresholds over seeded splits")
    common(p)

    p = sub.add_parser("train", help="fit the final model at chosen thresholds")
    common(p)
    p.add_argument("--t-f", type=float, help="filtering threshold (else from manifest)")

    p = sub.add_parser("evaluate", help="score the external test set")
    common(p)
    p.add_argument("--t-r", type=float, help="rejection threshold (else from manifest)")

    p = sub.add_parser("curve", help="trade-off curve on the test set")
    common(p)
    p.add_argument("--t-f", type=float, default=None,
                   help="filtering threshold for the fitted model (default: none)")

    p = sub.add_parser("compare", help="thirteen-configuration comparison table")
    common(p)

    p = sub.add_parser("run", help="search, train, and evaluate in one go")
    common(p)
    return parser


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "seed_list", None):
        try:
            seeds = tuple(int(s) for s in args.seed_list.split(",") if s.strip())
        except ValueError as exc:
            raise ConfigError(f"bad --seed-list: {exc}") from exc
        config = replace(config, seeds=seeds)
    if getattr(args, "out", None):
        config = replace(config, output_dir=args.out)
    if getattr(args, "mode", None):
        config = replace(config, t_f_mode=args.mode)
    return config


def _out_dir(config: ExperimentConfig) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _prepared(dataset: Dataset, name: str) -> Dataset:
    if dataset.has_missing():
        filled = impute_knn(dataset)
        print(f"{name}: imputed missing values with k-nearest neighbors")
        return filled
    return dataset


def _load_data(config: ExperimentConfig) -> tuple[Dataset, Dataset]:
    train = _prepared(load_train_dataset(config), "train")
    test = _prepared(load_test_dataset(config), "test")
    return train, test


def _single_row(config: ExperimentConfig, t_f: float, t_r: float, metrics, note: str) -> ExperimentRow:
    if config.filter_active and config.reject_active:
        setup = "both"
    elif config.filter_active:
        setup = "filter-only"
    elif config.reject_active:
        setup = "reject-only"
    else:
        setup = "standard"
    return ExperimentRow(
        index=1,
        filter_method=config.filter_method if config.filter_active else "none",
        reject_method=config.reject_method if config.reject_active else "none",
        setup=setup,
        t_f=t_f,
        t_r=t_r,
        filter_shown=config.filter_active,
        reject_shown=config.reject_active,
        metrics=metrics,
        note=note,
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_hardness(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from .report import render_hardness_histogram

    method = args.method or config.filter_method
    if method == "none":
        raise ConfigError(
            "hardness needs a method; set filter_method or pass --method"
        )
    train = _prepared(load_train_dataset(config), "train")
    scores = compute_hardness(train, config, method)
    out = _out_dir(config)
    sidecar = write_scores(out / "scores.csv", scores)
    figure = render_hardness_histogram(out / "hardness.png", scores)
    print(f"wrote {out / 'scores.csv'}, {sidecar}, {figure}")
    return 0


def _cmd_search(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from .report import render_trace

    train = _prepared(load_train_dataset(config), "train")
    outcome = select_thresholds(config, train)
    out = _out_dir(config)
    write_manifest(out / "manifest.json", outcome.manifest)
    artifacts = [out / "manifest.json"]
    if outcome.hardness is not None:
        write_scores(out / "scores.csv", outcome.hardness)
        artifacts.append(out / "scores.csv")
    if outcome.search_result is not None:
        write_trace(out / "trace.csv", outcome.search_result)
        render_trace(out / "trace.png", outcome.search_result)
        artifacts += [out / "trace.csv", out / "trace.png"]
    shown_tr = f"{outcome.t_r:.3f}" if config.reject_active else "--"
    print(
        f"selected t_f={outcome.t_f:.3f} t_r={shown_tr} "
        f"cost={outcome.breakdown.cost:.6f}"
    )
    print("wrote " + ", ".join(str(a) for a in artifacts))
    return 0


def _resolve_thresholds(
    config: ExperimentConfig, out: Path, t_f: float | None, t_r: float | None
) -> tuple[float, float]:
    manifest_path = out / "manifest.json"
    if (t_f is None or t_r is None) and manifest_path.exists():
        manifest = load_manifest(manifest_path)
        if t_f is None and manifest.t_f is not None:
            t_f = float(manifest.t_f)
        if t_r is None:
            t_r = float(manifest.t_r) if manifest.t_r is not None else ACCEPT_ALL
    if t_f is None:
        t_f = 0.0 if config.t_f_mode == "fraction" else 1.0
    if t_r is None:
        t_r = ACCEPT_ALL
    return t_f, t_r


def _cmd_train(config: ExperimentConfig, args: argparse.Namespace) -> int:
    out = _out_dir(config)
    t_f, _ = _resolve_thresholds(config, out, args.t_f, None)
    train = _prepared(load_train_dataset(config), "train")
    hardness = None
    scores_path = out / "scores.csv"
    if config.filter_active and scores_path.exists():
        hardness = load_scores(scores_path)
    model, calibration, ensemble, used = train_final_model(
        config, t_f, train, hardness
    )
    save_model(model, out / "model.json")
    artifacts = [out / "model.json"]
    if calibration is not None:
        (out / "calibration.json").write_text(
            f'{{"a": {calibration.a!r}, "b": {calibration.b!r}}}\n',
            encoding="utf-8",
        )
        artifacts.append(out / "calibration.json")
    if ensemble is not None:
        save_ensemble(out / "ensemble.json", ensemble)
        artifacts.append(out / "ensemble.json")
    n0, n1 = used.class_counts()
    print(f"trained at t_f={t_f:.3f} on {used.labels.size} instances ({n0}/{n1})")
    print("wrote " + ", ".join(str(a) for a in artifacts))
    return 0


def _cmd_evaluate(config: ExperimentConfig, args: argparse.Namespace) -> int:
    import json

    out = _out_dir(config)
    _, t_r = _resolve_thresholds(config, out, None, args.t_r)
    t_f_display, _ = _resolve_thresholds(config, out, None, None)
    model_path = out / "model.json"
    if not model_path.exists():
        raise DataError(f"no trained model at {model_path}; run `relikit train` first")
    model = load_model(model_path)
    calibration = None
    ensemble = None
    if (out / "calibration.json").exists():
        doc = json.loads((out / "calibration.json").read_text(encoding="utf-8"))
        calibration = CalibrationParams(a=float(doc["a"]), b=float(doc["b"]))
    if (out / "ensemble.json").exists():
        ensemble = load_ensemble(out / "ensemble.json")
    test = _prepared(load_test_dataset(config), "test")
    y_pred, scores, cert = score_batch(
        model, calibration, ensemble, test.features, config.score_kind
    )
    accepted = decide(scores, t_r)
    metrics = selective_evaluate(test.labels, y_pred, scores, accepted)
    predictions = [
        ScoredPrediction(iid, int(lbl), float(s), config.score_kind, bool(a), t_r)
        for iid, lbl, s, a in zip(test.instance_ids, y_pred, scores, accepted)
    ]
    # note wording must match finalize_and_test so a composed
    # search/train/evaluate run reproduces `run`'s row byte for byte
    notes = []
    if metrics.n_accepted == 0:
        notes.append("no instances accepted on the test set")
    if cert is not None and cert.degenerate:
        notes.append("certainty batch was degenerate (all entropies equal)")
    row = _single_row(config, t_f_display, t_r, metrics, "; ".join(notes))
    write_results_table(out / "row.csv", [row])
    write_predictions(out / "predictions.csv", predictions)
    print(
        f"macro_f1={metrics.macro_f1:.3f} rejection={metrics.rejection_rate:.3f} "
        f"mean_{config.score_kind}={metrics.mean_score:.3f}"
    )
    print(f"wrote {out / 'row.csv'}, {out / 'predictions.csv'}")
    return 0


def _cmd_curve(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from .report import render_curve

    train, test = _load_data(config)
    no_filter = 0.0 if config.t_f_mode == "fraction" else 1.0
    t_f = args.t_f if args.t_f is not None else no_filter
    hardness = None
    if config.filter_active and t_f != no_filter:
        hardness = compute_hardness(train, config)
    model, calibration, ensemble, _ = train_final_model(config, t_f, train, hardness)
    y_pred, scores, _ = score_batch(
        model, calibration, ensemble, test.features, config.score_kind
    )
    curve = tradeoff_curve(test.labels, y_pred, scores, config.t_r_grid)
    out = _out_dir(config)
    write_curve(out / "curve.csv", curve)
    render_curve(out / "curve.png", curve, label=f"t_f={t_f:.2f}")
    print(f"wrote {out / 'curve.csv'}, {out / 'curve.png'}")
    return 0


def _cmd_compare(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from .report import render_comparison

    train, test = _load_data(config)
    rows = run_comparison(config, train, test)
    out = _out_dir(config)
    write_results_table(out / "results.csv", rows)
    render_comparison(out / "comparison.png", rows)
    print(f"wrote {out / 'results.csv'} ({len(rows)} rows), {out / 'comparison.png'}")
    return 0


def _cmd_run(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from .report import render_trace

    train, test = _load_data(config)
    outcome = select_thresholds(config, train)
    out = _out_dir(config)
    write_manifest(out / "manifest.json", outcome.manifest)
    if outcome.hardness is not None:
        write_scores(out / "scores.csv", outcome.hardness)
    if outcome.search_result is not None:
        write_trace(out / "trace.csv", outcome.search_result)
        render_trace(out / "trace.png", outcome.search_result)
    final = finalize_and_test(
        config, outcome.t_f, outcome.t_r, train, test, outcome.hardness
    )
    save_model(final.model, out / "model.json")
    if final.calibration is not None:
        (out / "calibration.json").write_text(
            f'{{"a": {final.calibration.a!r}, "b": {final.calibration.b!r}}}\n',
            encoding="utf-8",
        )
    if final.ensemble is not None:
        save_ensemble(out / "ensemble.json", final.ensemble)
    write_manifest(out / "manifest_final.json", final.manifest)
    note = "; ".join(final.manifest.notes)
    row = _single_row(config, outcome.t_f, outcome.t_r, final.metrics, note)
    write_results_table(out / "row.csv", [row])
    write_predictions(out / "predictions.csv", final.predictions)
    shown_tr = f"{outcome.t_r:.3f}" if config.reject_active else "--"
    print(
        f"selected t_f={outcome.t_f:.3f} t_r={shown_tr}; test macro_f1="
        f"{final.metrics.macro_f1:.3f} rejection={final.metrics.rejection_rate:.3f}"
    )
    print(f"wrote artifacts under {out}")
    return 0


_COMMANDS = {
    "hardness": _cmd_hardness,
    "search": _cmd_search,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "curve": _cmd_curve,
    "compare": _cmd_compare,
    "run": _cmd_run,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles usage errors and --help
        return int(exc.code or 0)
    try:
        config = _apply_overrides(load_config(args.config), args)
        return _COMMANDS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
