"""End-to-end orchestration: threshold selection, final training, comparison.

Threshold selection repeats a stratified 70:30 split over a list of seeds.
For each candidate filtering threshold the training side of every split is
filtered by precomputed hardness scores, rebalanced if needed, and used to
fit the main classifier; the validation side is scored, a rejection-threshold
grid is swept, and cost components are averaged across splits. The search
strategies from the search module decide which filtering thresholds to try.

Once thresholds are chosen, the final model is retrained on the complete
training file (filtered at t_f) and judged once on the external test file
at t_r. The comparison runner enumerates the thirteen standard
configurations: four (hardness method, score kind) pairs, each searched
three ways (rejection only, both thresholds, filtering only), plus one
untouched baseline.

Fits are cached per removal signature: two filtering thresholds that remove
identical per-class counts produce identical downstream results, so revisits
during a search cost nothing.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from ._rng import derive_seed
from .data import (
    Dataset,
    SplitPair,
    filter_by_hardness,
    load_csv,
    maybe_undersample,
    stratified_split,
)
from .errors import ConfigError, DataError
from .hardness import (
    METHOD_CONSENSUS,
    METHOD_INFLUENCE,
    CvProtocol,
    HardnessScores,
    compute_ih,
    compute_influence,
)
from .learners import (
    LearnerSpec,
    MainModelConfig,
    TrainedModel,
    default_pool,
    fit_main_model,
)
from .metrics import SelectiveMetrics, selective_evaluate
from .search import (
    DEFAULT_TF_GRID,
    DEFAULT_TR_GRID,
    AnnealConfig,
    CostBreakdown,
    CostWeights,
    HeuristicConfig,
    SearchResult,
    TraceEntry,
    best_rejection_for,
    brute_force,
    grid_search,
    heuristic_search,
    make_breakdown,
    simulated_annealing,
)
from .selective import (
    CalibrationParams,
    CertaintyScores,
    ScoredPrediction,
    UncertaintyEnsemble,
    calibrate_with_cv,
    calibrated_proba,
    certainty_from_member_probs,
    confidence,
    decide,
    fit_uncertainty_ensemble,
)

__all__ = [
    "SCORE_CONFIDENCE",
    "SCORE_CERTAINTY",
    "ACCEPT_ALL",
    "SCHEMA_VERSION",
    "ExperimentConfig",
    "RunManifest",
    "SelectionOutcome",
    "FinalOutcome",
    "ExperimentRow",
    "load_config",
    "config_from_dict",
    "config_to_dict",
    "write_manifest",
    "load_manifest",
    "compute_hardness",
    "select_thresholds",
    "finalize_and_test",
    "run_comparison",
    "write_results_table",
    "results_table_lines",
]

SCHEMA_VERSION = 1
SCORE_CONFIDENCE = "confidence"
SCORE_CERTAINTY = "certainty"

# A confidence or certainty score never goes below 0.5, so this rejection
# threshold accepts every instance.
ACCEPT_ALL = 0.5

_FILTER_METHODS = (METHOD_CONSENSUS, METHOD_INFLUENCE, "none")
_REJECT_METHODS = (SCORE_CONFIDENCE, SCORE_CERTAINTY, "none")
_SEARCHES = ("heuristic", "grid", "annealing", "brute_force")
_MODE_NAMES = {"fraction": "fraction_per_class", "score": "score_threshold"}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; serializable to versioned JSON."""

    train_path: str
    test_path: str
    label_column: str
    positive_value: str | None = None
    filter_method: str = METHOD_CONSENSUS
    reject_method: str = SCORE_CONFIDENCE
    search: str = "heuristic"
    t_f_mode: str = "fraction"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    split_ratio: float = 0.7
    base_seed: int = 0
    output_dir: str = "out"
    weights: CostWeights = CostWeights()
    protocol: CvProtocol = CvProtocol()
    influence_l2: float = 1e-4
    pool: tuple[LearnerSpec, ...] = field(default_factory=default_pool)
    main_model: MainModelConfig = MainModelConfig()
    t_f_grid: tuple[float, ...] = DEFAULT_TF_GRID
    t_r_grid: tuple[float, ...] = DEFAULT_TR_GRID

    def __post_init__(self) -> None:
        if self.filter_method not in _FILTER_METHODS:
            raise ConfigError(
                f"filter_method must be one of {_FILTER_METHODS}, got {self.filter_method!r}"
            )
        if self.reject_method not in _REJECT_METHODS:
            raise ConfigError(
                f"reject_method must be one of {_REJECT_METHODS}, got {self.reject_method!r}"
            )
        if self.search not in _SEARCHES:
            raise ConfigError(f"search must be one of {_SEARCHES}, got {self.search!r}")
        if self.t_f_mode not in _MODE_NAMES:
            raise ConfigError(
                f"t_f_mode must be 'fraction' or 'score', got {self.t_f_mode!r}"
            )
        if len(self.seeds) < 1:
            raise ConfigError("seeds must contain at least one entry")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError("split_ratio must lie strictly inside (0, 1)")
        if not self.label_column:
            raise ConfigError("label_column is required")

    @property
    def filter_active(self) -> bool:
        return self.filter_method != "none"

    @property
    def reject_active(self) -> bool:
        return self.reject_method != "none"

    @property
    def score_kind(self) -> str:
        """Score used for mean-score terms and table score columns."""
        return (
            SCORE_CERTAINTY if self.reject_method == SCORE_CERTAINTY else SCORE_CONFIDENCE
        )


_CONFIG_KEYS = {
    "schema_version",
    "train_path",
    "test_path",
    "label_column",
    "positive_value",
    "filter_method",
    "reject_method",
    "search",
    "t_f_mode",
    "seeds",
    "split_ratio",
    "base_seed",
    "output_dir",
    "weights",
    "protocol",
    "influence_l2",
    "pool",
    "main_model",
    "t_f_grid",
    "t_r_grid",
}


def config_from_dict(doc: Mapping[str, object]) -> ExperimentConfig:
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported config schema_version {version!r} (expected {SCHEMA_VERSION})"
        )
    for key in ("train_path", "test_path", "label_column"):
        if key not in doc:
            raise ConfigError(f"config is missing required key {key!r}")

    kwargs: dict[str, object] = {}
    for key in ("train_path", "test_path", "label_column", "positive_value",
                "filter_method", "reject_method", "search", "t_f_mode",
                "output_dir"):
        if key in doc and doc[key] is not None:
            kwargs[key] = str(doc[key])
    if "seeds" in doc:
        kwargs["seeds"] = tuple(int(s) for s in doc["seeds"])  # type: ignore[union-attr]
    for key in ("split_ratio", "influence_l2"):
        if key in doc:
            kwargs[key] = float(doc[key])  # type: ignore[arg-type]
    if "base_seed" in doc:
        kwargs["base_seed"] = int(doc["base_seed"])  # type: ignore[arg-type]
    if "weights" in doc:
        kwargs["weights"] = CostWeights(**doc["weights"])  # type: ignore[arg-type]
    if "protocol" in doc:
        kwargs["protocol"] = CvProtocol(**doc["protocol"])  # type: ignore[arg-type]
    if "pool" in doc:
        kwargs["pool"] = tuple(
            LearnerSpec(entry["kind"], entry.get("params", {}))
            for entry in doc["pool"]  # type: ignore[union-attr]
        )
    if "main_model" in doc:
        kwargs["main_model"] = MainModelConfig(**doc["main_model"])  # type: ignore[arg-type]
    for key in ("t_f_grid", "t_r_grid"):
        if key in doc:
            kwargs[key] = tuple(float(v) for v in doc[key])  # type: ignore[union-attr]
    try:
        return ExperimentConfig(**kwargs)  # type: ignore[arg-type]
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "train_path": config.train_path,
        "test_path": config.test_path,
        "label_column": config.label_column,
        "positive_value": config.positive_value,
        "filter_method": config.filter_method,
        "reject_method": config.reject_method,
        "search": config.search,
        "t_f_mode": config.t_f_mode,
        "seeds": list(config.seeds),
        "split_ratio": config.split_ratio,
        "base_seed": config.base_seed,
        "output_dir": config.output_dir,
        "weights": {
            "performance": config.weights.performance,
            "rejection": config.weights.rejection,
            "confidence": config.weights.confidence,
        },
        "protocol": {
            "n_folds": config.protocol.n_folds,
            "n_repeats": config.protocol.n_repeats,
            "calibration_folds": config.protocol.calibration_folds,
            "undersample_trigger": config.protocol.undersample_trigger,
        },
        "influence_l2": config.influence_l2,
        "pool": [
            {"kind": spec.kind, "params": dict(spec.params)} for spec in config.pool
        ],
        "main_model": {
            "learning_rate": config.main_model.learning_rate,
            "n_estimators": config.main_model.n_estimators,
            "max_depth": config.main_model.max_depth,
            "min_child_weight": config.main_model.min_child_weight,
            "gamma": config.main_model.gamma,
            "subsample": config.main_model.subsample,
            "colsample_bytree": config.main_model.colsample_bytree,
            "reg_lambda": config.main_model.reg_lambda,
            "seed": config.main_model.seed,
        },
        "t_f_grid": list(config.t_f_grid),
        "t_r_grid": list(config.t_r_grid),
    }


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config_from_dict(doc)


def load_train_dataset(config: ExperimentConfig) -> Dataset:
    return load_csv(config.train_path, config.label_column, config.positive_value)


def load_test_dataset(config: ExperimentConfig) -> Dataset:
    return load_csv(config.test_path, config.label_column, config.positive_value)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    """Record of a run: inputs, resolved thresholds, per-split evidence."""

    config: dict
    stage: str
    t_f: float | None
    t_r: float | None
    score_kind: str
    breakdown: dict | None
    per_split: tuple[dict, ...]
    search: dict | None
    certainty_batches: tuple[dict, ...]
    notes: tuple[str, ...]
    package_version: str = __version__
    schema_version: int = SCHEMA_VERSION
    wall_clock_seconds: float = 0.0


def _breakdown_dict(b: CostBreakdown) -> dict:
    return {
        "t_f": b.t_f,
        "t_r": b.t_r,
        "macro_f1": b.macro_f1,
        "rejection_rate": b.rejection_rate,
        "mean_score": b.mean_score,
        "cost": b.cost,
    }


def write_manifest(path: str | Path, manifest: RunManifest) -> None:
    doc = {
        "schema_version": manifest.schema_version,
        "package_version": manifest.package_version,
        "stage": manifest.stage,
        "config": manifest.config,
        "t_f": manifest.t_f,
        "t_r": manifest.t_r,
        "score_kind": manifest.score_kind,
        "breakdown": manifest.breakdown,
        "per_split": list(manifest.per_split),
        "search": manifest.search,
        "certainty_batches": list(manifest.certainty_batches),
        "notes": list(manifest.notes),
        "wall_clock_seconds": manifest.wall_clock_seconds,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_manifest(path: str | Path) -> RunManifest:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(
            f"unsupported manifest schema_version {doc.get('schema_version')!r}"
        )
    return RunManifest(
        config=doc["config"],
        stage=doc.get("stage", "search"),
        t_f=doc["t_f"],
        t_r=doc["t_r"],
        score_kind=doc["score_kind"],
        breakdown=doc.get("breakdown"),
        per_split=tuple(doc.get("per_split", [])),
        search=doc.get("search"),
        certainty_batches=tuple(doc.get("certainty_batches", [])),
        notes=tuple(doc.get("notes", [])),
        package_version=doc.get("package_version", "unknown"),
        wall_clock_seconds=float(doc.get("wall_clock_seconds", 0.0)),
    )


# ---------------------------------------------------------------------------
# Hardness front door
# ---------------------------------------------------------------------------


def compute_hardness(
    train: Dataset, config: ExperimentConfig, method: str | None = None
) -> HardnessScores:
    """Score the training data with the configured hardness estimator."""
    method = method or config.filter_method
    seed = derive_seed(config.base_seed, "hardness")
    if method == METHOD_CONSENSUS:
        return compute_ih(train, config.pool, config.protocol, seed=seed)
    if method == METHOD_INFLUENCE:
        return compute_influence(
            train, config.protocol, seed=seed, l2=config.influence_l2
        )
    raise ConfigError(f"no hardness method named {method!r}")


# ---------------------------------------------------------------------------
# Split-level evaluation with removal-signature caching
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _SplitScores:
    """Validation-side arrays for one split at one removal signature."""

    y_true: np.ndarray
    y_pred: np.ndarray
    scores: np.ndarray
    certainty_stats: dict | None


class SplitEvaluationCache:
    """Fits per (split, removal signature); shared by every search setup.

    The removal signature of a filtering threshold is the tuple of surviving
    per-class counts on each split's training side. Equal signatures mean
    equal filtered datasets (the hardness ranking is fixed), so all model
    fits can be reused across thresholds and across search setups that share
    this cache.
    """

    def __init__(
        self,
        train: Dataset,
        scores: HardnessScores | None,
        config: ExperimentConfig,
        score_kind: str,
    ) -> None:
        if score_kind not in (SCORE_CONFIDENCE, SCORE_CERTAINTY):
            raise ConfigError(f"unknown score kind {score_kind!r}")
        self._train = train
        self._scores = scores
        self._config = config
        self._score_kind = score_kind
        self._splits: list[SplitPair] = [
            stratified_split(train, config.split_ratio, seed) for seed in config.seeds
        ]
        self._fits: dict[tuple, list[_SplitScores]] = {}
        self._filtered_counts: dict[float, tuple] = {}

    @property
    def splits(self) -> list[SplitPair]:
        return self._splits

    @property
    def no_filter_t_f(self) -> float:
        """Threshold value at which filtering keeps everything.

        Removing a zero fraction keeps all instances; in score mode no score
        exceeds 1.0, so that threshold removes nothing.
        """
        return 0.0 if self._config.t_f_mode == "fraction" else 1.0

    def _filtered_train_sides(self, t_f: float) -> list[Dataset]:
        if t_f == self.no_filter_t_f:
            return [pair.train for pair in self._splits]
        if self._scores is None:
            raise ConfigError("filtering requested but no hardness scores supplied")
        mode = _MODE_NAMES[self._config.t_f_mode]
        return [
            filter_by_hardness(pair.train, self._scores, t_f, mode)
            for pair in self._splits
        ]

    def signature(self, t_f: float) -> tuple:
        key = round(float(t_f), 12)
        if key not in self._filtered_counts:
            sides = self._filtered_train_sides(key)
            self._filtered_counts[key] = tuple(d.class_counts() for d in sides)
        return self._filtered_counts[key]

    def _fit_one(self, filtered: Dataset, pair: SplitPair) -> _SplitScores:
        config = self._config
        balanced = maybe_undersample(
            filtered,
            config.protocol.undersample_trigger,
            seed=derive_seed(pair.seed, "select-balance"),
        )
        X_tr, y_tr = balanced.features, balanced.labels
        X_val = pair.validation.features
        model = fit_main_model(X_tr, y_tr, config.main_model)
        raw_val = model.predict_proba(X_val)
        if self._score_kind == SCORE_CONFIDENCE:
            params = calibrate_with_cv(
                config.main_model.to_spec(),
                X_tr,
                y_tr,
                n_folds=config.protocol.calibration_folds,
                seed=derive_seed(pair.seed, "select-calibration"),
            )
            p_hat = calibrated_proba(params, raw_val)
            return _SplitScores(
                y_true=pair.validation.labels,
                y_pred=(p_hat >= 0.5).astype(np.int64),
                scores=confidence(p_hat),
                certainty_stats=None,
            )
        ensemble = fit_uncertainty_ensemble(X_tr, y_tr)
        cert = certainty_from_member_probs(ensemble.member_probabilities(X_val))
        stats = {
            "entropy_min": cert.entropy_min,
            "entropy_max": cert.entropy_max,
            "degenerate": cert.degenerate,
            "n": int(X_val.shape[0]),
        }
        return _SplitScores(
            y_true=pair.validation.labels,
            y_pred=(raw_val >= 0.5).astype(np.int64),
            scores=cert.values,
            certainty_stats=stats,
        )

    def _materialize(self, t_f: float) -> list[_SplitScores]:
        sig = self.signature(t_f)
        if sig not in self._fits:
            fits = []
            for filtered, pair in zip(self._filtered_train_sides(t_f), self._splits):
                try:
                    fits.append(self._fit_one(filtered, pair))
                except DataError as exc:
                    raise DataError(f"split seed {pair.seed}: {exc}") from exc
            self._fits[sig] = fits
        return self._fits[sig]

    def split_metrics(self, t_f: float, t_r: float) -> list[SelectiveMetrics]:
        return [
            selective_evaluate(s.y_true, s.y_pred, s.scores, s.scores >= t_r)
            for s in self._materialize(t_f)
        ]

    def evaluate(self, t_f: float, t_r_grid: Sequence[float]) -> list[CostBreakdown]:
        """Mean cost components across splits, one breakdown per t_r.

        The cost is linear in its components, so averaging components and
        averaging per-split costs agree exactly.
        """
        fits = self._materialize(t_f)
        out = []
        for t_r in t_r_grid:
            rows = [
                selective_evaluate(s.y_true, s.y_pred, s.scores, s.scores >= t_r)
                for s in fits
            ]
            out.append(
                make_breakdown(
                    t_f,
                    t_r,
                    float(np.mean([r.macro_f1 for r in rows])),
                    float(np.mean([r.rejection_rate for r in rows])),
                    float(np.mean([r.mean_score for r in rows])),
                    self._config.weights,
                )
            )
        return out

    def evaluator(self, t_r_grid: Sequence[float]):
        """Adapter matching the search module's evaluator contract."""
        grid = tuple(t_r_grid)

        def evaluate(t_f: float) -> list[CostBreakdown]:
            return self.evaluate(t_f, grid)

        return evaluate

    def certainty_batches(self, t_f: float) -> list[dict]:
        return [
            dict(s.certainty_stats, seed=pair.seed)
            for s, pair in zip(self._materialize(t_f), self._splits)
            if s.certainty_stats is not None
        ]


# ---------------------------------------------------------------------------
# Threshold selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SelectionOutcome:
    t_f: float
    t_r: float
    breakdown: CostBreakdown
    manifest: RunManifest
    search_result: SearchResult | None
    hardness: HardnessScores | None


def _run_search(
    config: ExperimentConfig, evaluator, t_f_grid: Sequence[float]
) -> SearchResult:
    if config.search == "grid":
        return grid_search(evaluator, t_f_grid)
    if config.search == "heuristic":
        return heuristic_search(evaluator, HeuristicConfig(t_f_grid=tuple(t_f_grid)))
    if config.search == "annealing":
        return simulated_annealing(
            evaluator, AnnealConfig(), seed=derive_seed(config.base_seed, "search")
        )
    return brute_force(evaluator)


def _search_dict(result: SearchResult | None) -> dict | None:
    if result is None:
        return None
    return {
        "method": result.method,
        "n_evaluations": result.n_evaluations,
        "n_trace_entries": len(result.trace),
        "final_temperature": result.final_temperature,
    }


def select_thresholds(
    config: ExperimentConfig,
    train: Dataset | None = None,
    hardness: HardnessScores | None = None,
    cache: SplitEvaluationCache | None = None,
    setup: str | None = None,
) -> SelectionOutcome:
    """Choose (t_f, t_r) by minimizing mean cost over the seeded splits.

    setup overrides which thresholds are searched: "reject-only" pins t_f
    at no-filtering, "filter-only" pins t_r at accept-all, "both" searches
    the pair, "standard" searches nothing. Defaults follow the config's
    filter_method / reject_method (a method of "none" pins its threshold).
    """
    started = time.monotonic()
    if train is None:
        train = load_train_dataset(config)
    if setup is None:
        if config.filter_active and config.reject_active:
            setup = "both"
        elif config.filter_active:
            setup = "filter-only"
        elif config.reject_active:
            setup = "reject-only"
        else:
            setup = "standard"
    if setup not in ("both", "filter-only", "reject-only", "standard"):
        raise ConfigError(f"unknown selection setup {setup!r}")

    filtering = setup in ("both", "filter-only")
    rejecting = setup in ("both", "reject-only")
    if filtering and hardness is None:
        if not config.filter_active:
            raise ConfigError("filtering setup needs filter_method 'ih' or 'if'")
        hardness = compute_hardness(train, config)
    if cache is None:
        cache = SplitEvaluationCache(
            train, hardness if filtering else None, config, config.score_kind
        )

    t_r_grid = tuple(config.t_r_grid) if rejecting else (ACCEPT_ALL,)
    notes: list[str] = []
    search_result: SearchResult | None = None
    if filtering:
        search_result = _run_search(config, cache.evaluator(t_r_grid), config.t_f_grid)
        best = search_result.best
    else:
        best = best_rejection_for(cache.evaluate(cache.no_filter_t_f, t_r_grid))
        trace = (TraceEntry(0, "fixed", best.t_f, best.t_r, best.cost),)
        search_result = SearchResult(
            method="fixed", best=best, trace=trace, n_evaluations=1
        )

    t_f = float(best.t_f)
    t_r = float(best.t_r if best.t_r is not None else ACCEPT_ALL)
    if filtering and rejecting and t_r == ACCEPT_ALL:
        notes.append("no rejection selected")
    if filtering and sum(_removed_counts(cache, t_f)) == 0:
        notes.append("no filtering selected")

    per_split = []
    for pair, m in zip(cache.splits, cache.split_metrics(t_f, t_r)):
        per_split.append(
            {
                "seed": pair.seed,
                "macro_f1": m.macro_f1,
                "rejection_rate": m.rejection_rate,
                "mean_score": m.mean_score,
                "n_accepted": m.n_accepted,
                "n_total": m.n_total,
                "zero_accepted": m.n_accepted == 0,
            }
        )
    if any(row["zero_accepted"] for row in per_split):
        notes.append("a split accepted no instances at the chosen thresholds")

    manifest = RunManifest(
        config=config_to_dict(config),
        stage="search",
        t_f=t_f,
        t_r=t_r if rejecting else None,
        score_kind=config.score_kind,
        breakdown=_breakdown_dict(best),
        per_split=tuple(per_split),
        search=_search_dict(search_result),
        certainty_batches=tuple(cache.certainty_batches(t_f)),
        notes=tuple(notes),
        wall_clock_seconds=time.monotonic() - started,
    )
    return SelectionOutcome(
        t_f=t_f,
        t_r=t_r,
        breakdown=best,
        manifest=manifest,
        search_result=search_result,
        hardness=hardness,
    )


def _removed_counts(cache: SplitEvaluationCache, t_f: float) -> tuple[int, ...]:
    """Instances removed per split at t_f (vs. the unfiltered training sides)."""
    full = cache.signature(cache.no_filter_t_f)
    cut = cache.signature(t_f)
    return tuple(
        (f0 + f1) - (c0 + c1) for (f0, f1), (c0, c1) in zip(full, cut)
    )


# ---------------------------------------------------------------------------
# Final training and external evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FinalOutcome:
    metrics: SelectiveMetrics
    manifest: RunManifest
    model: TrainedModel
    calibration: CalibrationParams | None
    ensemble: UncertaintyEnsemble | None
    predictions: tuple[ScoredPrediction, ...]
    certainty: CertaintyScores | None


def train_final_model(
    config: ExperimentConfig,
    t_f: float,
    train: Dataset | None = None,
    hardness: HardnessScores | None = None,
) -> tuple[TrainedModel, CalibrationParams | None, UncertaintyEnsemble | None, Dataset]:
    """Filter the full training data at t_f, rebalance, fit the deployables.

    Returns the main model, the sigmoid calibration (confidence runs), the
    committee (certainty runs), and the training data actually used.
    """
    if train is None:
        train = load_train_dataset(config)
    no_filter_t_f = 0.0 if config.t_f_mode == "fraction" else 1.0
    needs_filter = config.filter_active and t_f != no_filter_t_f
    if needs_filter:
        if hardness is None:
            hardness = compute_hardness(train, config)
        filtered = filter_by_hardness(
            train, hardness, t_f, _MODE_NAMES[config.t_f_mode]
        )
    else:
        filtered = train
    balanced = maybe_undersample(
        filtered,
        config.protocol.undersample_trigger,
        seed=derive_seed(config.base_seed, "final-balance"),
    )
    X, y = balanced.features, balanced.labels
    model = fit_main_model(X, y, config.main_model)
    # calibration is always part of the deployable artifact set; the
    # committee is fitted additionally when certainty scoring is active
    calibration = calibrate_with_cv(
        config.main_model.to_spec(),
        X,
        y,
        n_folds=config.protocol.calibration_folds,
        seed=derive_seed(config.base_seed, "final-calibration"),
    )
    ensemble = None
    if config.score_kind == SCORE_CERTAINTY:
        ensemble = fit_uncertainty_ensemble(X, y)
    return model, calibration, ensemble, balanced


def score_batch(
    model: TrainedModel,
    calibration: CalibrationParams | None,
    ensemble: UncertaintyEnsemble | None,
    X: np.ndarray,
    score_kind: str,
) -> tuple[np.ndarray, np.ndarray, CertaintyScores | None]:
    """Predicted labels and selection scores for one evaluation batch."""
    raw = model.predict_proba(X)
    if score_kind == SCORE_CONFIDENCE:
        if calibration is None:
            raise ConfigError("confidence scoring requires calibration parameters")
        p_hat = calibrated_proba(calibration, raw)
        return (p_hat >= 0.5).astype(np.int64), confidence(p_hat), None
    if score_kind == SCORE_CERTAINTY:
        if ensemble is None:
            raise ConfigError("certainty scoring requires a fitted committee")
        cert = certainty_from_member_probs(ensemble.member_probabilities(X))
        return (raw >= 0.5).astype(np.int64), cert.values, cert
    raise ConfigError(f"unknown score kind {score_kind!r}")


def finalize_and_test(
    config: ExperimentConfig,
    t_f: float,
    t_r: float,
    train: Dataset | None = None,
    test: Dataset | None = None,
    hardness: HardnessScores | None = None,
) -> FinalOutcome:
    """Retrain on the full training file at t_f; evaluate the test file at t_r."""
    started = time.monotonic()
    if train is None:
        train = load_train_dataset(config)
    if test is None:
        test = load_test_dataset(config)
    model, calibration, ensemble, used = train_final_model(
        config, t_f, train, hardness
    )
    y_pred, scores, cert = score_batch(
        model, calibration, ensemble, test.features, config.score_kind
    )
    accepted = decide(scores, t_r)
    metrics = selective_evaluate(test.labels, y_pred, scores, accepted)
    predictions = tuple(
        ScoredPrediction(
            instance_id=iid,
            predicted_label=int(lbl),
            score=float(s),
            score_kind=config.score_kind,
            accepted=bool(a),
            t_r=t_r,
        )
        for iid, lbl, s, a in zip(test.instance_ids, y_pred, scores, accepted)
    )
    notes = []
    if metrics.n_accepted == 0:
        notes.append("no instances accepted on the test set")
    if cert is not None and cert.degenerate:
        notes.append("certainty batch was degenerate (all entropies equal)")
    batches = []
    if cert is not None:
        batches.append(
            {
                "entropy_min": cert.entropy_min,
                "entropy_max": cert.entropy_max,
                "degenerate": cert.degenerate,
                "n": metrics.n_total,
                "seed": None,
            }
        )
    manifest = RunManifest(
        config=config_to_dict(config),
        stage="final",
        t_f=t_f,
        t_r=t_r,
        score_kind=config.score_kind,
        breakdown=_breakdown_dict(
            make_breakdown(
                t_f,
                t_r,
                metrics.macro_f1,
                metrics.rejection_rate,
                metrics.mean_score,
                config.weights,
            )
        ),
        per_split=(
            {
                "seed": None,
                "n_train_used": int(used.labels.size),
                "class_counts": list(used.class_counts()),
            },
        ),
        search=None,
        certainty_batches=tuple(batches),
        notes=tuple(notes),
        wall_clock_seconds=time.monotonic() - started,
    )
    return FinalOutcome(
        metrics=metrics,
        manifest=manifest,
        model=model,
        calibration=calibration,
        ensemble=ensemble,
        predictions=predictions,
        certainty=cert,
    )


# ---------------------------------------------------------------------------
# The thirteen-configuration comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentRow:
    """One line of the comparison table."""

    index: int
    filter_method: str  # "ih", "if", or "none"
    reject_method: str  # "confidence", "certainty", or "none"
    setup: str  # "reject-only", "both", "filter-only", "standard"
    t_f: float
    t_r: float
    filter_shown: bool
    reject_shown: bool
    metrics: SelectiveMetrics
    note: str


_PAIR_ORDER = (
    (METHOD_CONSENSUS, SCORE_CONFIDENCE),
    (METHOD_CONSENSUS, SCORE_CERTAINTY),
    (METHOD_INFLUENCE, SCORE_CONFIDENCE),
    (METHOD_INFLUENCE, SCORE_CERTAINTY),
)
_SETUP_ORDER = ("reject-only", "both", "filter-only")


def run_comparison(
    config: ExperimentConfig,
    train: Dataset | None = None,
    test: Dataset | None = None,
    hardness_by_method: Mapping[str, HardnessScores] | None = None,
) -> list[ExperimentRow]:
    """All thirteen configurations, thresholds searched independently.

    Four (hardness method, score kind) pairs each contribute three rows:
    rejection threshold alone, both thresholds, filtering threshold alone.
    The untouched baseline closes the table. A search that effectively
    disables one of its thresholds collapses onto a simpler setup; such
    rows are kept and annotated rather than dropped.
    """
    if train is None:
        train = load_train_dataset(config)
    if test is None:
        test = load_test_dataset(config)
    scores_cache: dict[str, HardnessScores] = dict(hardness_by_method or {})

    rows: list[ExperimentRow] = []
    index = 1
    for method, kind in _PAIR_ORDER:
        if method not in scores_cache:
            scores_cache[method] = compute_hardness(train, config, method)
        hardness = scores_cache[method]
        pair_config = replace(
            config,
            filter_method=method,
            reject_method=kind,
        )
        cache = SplitEvaluationCache(train, hardness, pair_config, kind)
        for setup in _SETUP_ORDER:
            selection = select_thresholds(
                pair_config, train, hardness, cache, setup=setup
            )
            t_f, t_r = selection.t_f, selection.t_r
            final = finalize_and_test(
                pair_config, t_f, t_r, train, test, hardness
            )
            notes = list(selection.manifest.notes) + list(final.manifest.notes)
            if setup == "both":
                if t_r == ACCEPT_ALL:
                    notes.insert(0, "collapses to filter-only")
                if "no filtering selected" in selection.manifest.notes:
                    notes.insert(0, "collapses to reject-only")
            elif setup == "reject-only" and t_r == ACCEPT_ALL:
                notes.insert(0, "collapses to standard")
            elif setup == "filter-only" and "no filtering selected" in notes:
                notes.insert(0, "collapses to standard")
            rows.append(
                ExperimentRow(
                    index=index,
                    filter_method=method,
                    reject_method=kind,
                    setup=setup,
                    t_f=t_f,
                    t_r=t_r,
                    filter_shown=setup in ("both", "filter-only"),
                    reject_shown=setup in ("both", "reject-only"),
                    metrics=final.metrics,
                    note="; ".join(dict.fromkeys(notes)),
                )
            )
            index += 1

    standard_config = replace(config, filter_method="none", reject_method="none")
    final = finalize_and_test(standard_config, 0.0, ACCEPT_ALL, train, test)
    rows.append(
        ExperimentRow(
            index=index,
            filter_method="none",
            reject_method="none",
            setup="standard",
            t_f=0.0,
            t_r=ACCEPT_ALL,
            filter_shown=False,
            reject_shown=False,
            metrics=final.metrics,
            note="; ".join(final.manifest.notes),
        )
    )
    return rows


_METHOD_LABEL = {METHOD_CONSENSUS: "IH", METHOD_INFLUENCE: "IF", "none": "--"}
_KIND_LABEL = {SCORE_CONFIDENCE: "C", SCORE_CERTAINTY: "U", "none": "--"}


def results_table_lines(rows: Sequence[ExperimentRow]) -> list[str]:
    """The comparison table as CSV lines (no trailing newline per line)."""
    header = (
        "experiment,F,R,T_f,T_r,PRC_0,PRC_1,RCL_0,RCL_1,ACP_0,ACP_1,score,note"
    )
    lines = [header]
    for row in rows:
        m = row.metrics
        cells = [
            str(row.index),
            _METHOD_LABEL[row.filter_method] if row.filter_shown else "--",
            _KIND_LABEL[row.reject_method] if row.reject_shown else "--",
            f"{row.t_f:.3f}" if row.filter_shown else "--",
            f"{row.t_r:.3f}" if row.reject_shown else "--",
            f"{m.precision[0]:.3f}",
            f"{m.precision[1]:.3f}",
            f"{m.recall[0]:.3f}",
            f"{m.recall[1]:.3f}",
            f"{m.acceptance[0]:.3f}",
            f"{m.acceptance[1]:.3f}",
            f"{m.mean_score:.3f}",
            row.note.replace(",", ";"),
        ]
        lines.append(",".join(cells))
    return lines


def write_results_table(path: str | Path, rows: Sequence[ExperimentRow]) -> None:
    Path(path).write_text(
        "\n".join(results_table_lines(rows)) + "\n", encoding="utf-8"
    )
