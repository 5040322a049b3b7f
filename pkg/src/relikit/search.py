"""Threshold-pair selection by cost minimization.

The scalar objective is

    cost = w_p * (1 - macro_f1) + w_r * rejection_rate + w_c * (1 - mean_score)

with defaults (4, 1, 1) prioritizing predictive quality. Every search here
minimizes f(t_f) = min over the rejection grid of cost(t_f, t_r): the caller
supplies an evaluator that, given a filtering threshold, returns one
CostBreakdown per rejection threshold in its grid (fitting whatever models
that requires), and the searches decide which filtering thresholds to probe.

Four strategies: exhaustive evaluation of a coarse grid; the coarse grid
followed by interval bisection around its winner (never worse than the grid
alone); simulated annealing with geometric cooling; and a fine brute force.
Cost ties always resolve to the smaller t_f, then the smaller t_r, so every
search is deterministic given its seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._rng import rng_for
from .errors import ConfigError, DataError

__all__ = [
    "CostWeights",
    "CostBreakdown",
    "HeuristicConfig",
    "AnnealConfig",
    "SearchResult",
    "TraceEntry",
    "DEFAULT_TF_GRID",
    "DEFAULT_TR_GRID",
    "cost",
    "rejection_rate",
    "make_breakdown",
    "best_rejection_for",
    "grid_search",
    "heuristic_search",
    "simulated_annealing",
    "brute_force",
    "write_trace",
]

DEFAULT_TF_GRID: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_TR_GRID: tuple[float, ...] = tuple(round(0.5 + 0.02 * i, 2) for i in range(26))


@dataclass(frozen=True)
class CostWeights:
    """Relative penalties on poor performance, rejection volume, and low scores."""

    performance: float = 4.0
    rejection: float = 1.0
    confidence: float = 1.0

    def __post_init__(self) -> None:
        if min(self.performance, self.rejection, self.confidence) < 0:
            raise ConfigError("cost weights must be non-negative")
        if self.performance == self.rejection == self.confidence == 0.0:
            raise ConfigError("at least one cost weight must be positive")


def cost(
    macro_f1: float,
    rejection: float,
    mean_score: float,
    weights: CostWeights | None = None,
) -> float:
    """The weighted three-term objective; all inputs must lie in [0, 1]."""
    weights = weights or CostWeights()
    for name, v in (
        ("macro_f1", macro_f1),
        ("rejection", rejection),
        ("mean_score", mean_score),
    ):
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"{name}={v} outside [0, 1]")
    return (
        weights.performance * (1.0 - macro_f1)
        + weights.rejection * rejection
        + weights.confidence * (1.0 - mean_score)
    )


def rejection_rate(n_accepted: int, n_total: int) -> float:
    """Fraction of scored instances that were not accepted."""
    if n_total <= 0:
        raise DataError("rejection_rate needs a positive total")
    if not 0 <= n_accepted <= n_total:
        raise DataError("accepted count must lie in [0, n_total]")
    return 1.0 - n_accepted / n_total


@dataclass(frozen=True)
class CostBreakdown:
    """One evaluated (t_f, t_r) point with its cost components.

    t_r is None for outcomes where no rejection threshold applies (pure
    filtering rows in reports); searches themselves always carry a number.
    """

    t_f: float
    t_r: float | None
    macro_f1: float
    rejection_rate: float
    mean_score: float
    cost: float


def make_breakdown(
    t_f: float,
    t_r: float | None,
    macro_f1: float,
    rejection: float,
    mean_score: float,
    weights: CostWeights | None = None,
) -> CostBreakdown:
    return CostBreakdown(
        t_f=float(t_f),
        t_r=None if t_r is None else float(t_r),
        macro_f1=float(macro_f1),
        rejection_rate=float(rejection),
        mean_score=float(mean_score),
        cost=cost(macro_f1, rejection, mean_score, weights),
    )


Evaluator = Callable[[float], Sequence[CostBreakdown]]


def best_rejection_for(breakdowns: Sequence[CostBreakdown]) -> CostBreakdown:
    """Lowest-cost breakdown; cost ties go to the smaller t_r."""
    if not breakdowns:
        raise DataError("no breakdowns to choose from")
    ordered = sorted(breakdowns, key=lambda b: (b.t_r if b.t_r is not None else -1.0))
    best = ordered[0]
    for b in ordered[1:]:
        if b.cost < best.cost:
            best = b
    return best


@dataclass(frozen=True)
class TraceEntry:
    step: int
    stage: str
    t_f: float
    t_r: float | None
    cost: float
    temperature: float | None = None
    accepted: bool | None = None


@dataclass(frozen=True)
class SearchResult:
    method: str
    best: CostBreakdown
    trace: tuple[TraceEntry, ...]
    n_evaluations: int
    final_temperature: float | None = None


class _Memo:
    """Caches evaluator calls so revisited thresholds cost nothing."""

    def __init__(self, evaluator: Evaluator) -> None:
        self._evaluator = evaluator
        self._cache: dict[float, CostBreakdown] = {}

    @staticmethod
    def _key(t_f: float) -> float:
        return round(float(t_f), 12)

    def best_at(self, t_f: float) -> CostBreakdown:
        key = self._key(t_f)
        if key not in self._cache:
            breakdowns = self._evaluator(float(t_f))
            self._cache[key] = best_rejection_for(list(breakdowns))
        return self._cache[key]

    @property
    def n_evaluations(self) -> int:
        return len(self._cache)


def _validate_tf_grid(grid: Sequence[float]) -> tuple[float, ...]:
    values = tuple(float(v) for v in grid)
    if not values:
        raise ConfigError("filtering grid must be non-empty")
    if list(values) != sorted(values):
        raise ConfigError("filtering grid must be ascending")
    if values[0] < 0.0 or values[-1] > 0.5:
        raise ConfigError("filtering grid must lie within [0, 0.5]")
    return values


def _argbest(candidates: Sequence[CostBreakdown]) -> CostBreakdown:
    """Overall winner: smallest cost, ties to smaller t_f then smaller t_r."""
    if not candidates:
        raise DataError("search evaluated no candidates")
    best = candidates[0]
    for b in candidates[1:]:
        tr_b = b.t_r if b.t_r is not None else -1.0
        tr_best = best.t_r if best.t_r is not None else -1.0
        if (b.cost, b.t_f, tr_b) < (best.cost, best.t_f, tr_best):
            best = b
    return best


# ---------------------------------------------------------------------------
# Searches
# ---------------------------------------------------------------------------


def grid_search(
    evaluator: Evaluator, t_f_grid: Sequence[float] = DEFAULT_TF_GRID
) -> SearchResult:
    """Evaluate every filtering threshold in the grid."""
    grid = _validate_tf_grid(t_f_grid)
    memo = _Memo(evaluator)
    trace: list[TraceEntry] = []
    seen: list[CostBreakdown] = []
    for step, t_f in enumerate(grid):
        b = memo.best_at(t_f)
        seen.append(b)
        trace.append(TraceEntry(step, "grid", b.t_f, b.t_r, b.cost))
    return SearchResult(
        method="grid",
        best=_argbest(seen),
        trace=tuple(trace),
        n_evaluations=memo.n_evaluations,
    )


@dataclass(frozen=True)
class HeuristicConfig:
    """Grid pass plus bisection refinement around the grid winner."""

    t_f_grid: tuple[float, ...] = DEFAULT_TF_GRID
    cost_tolerance: float = 1e-3
    min_midpoint: float = 0.01
    max_bisections: int = 10


def heuristic_search(
    evaluator: Evaluator, config: HeuristicConfig | None = None
) -> SearchResult:
    """Coarse grid, then bisect toward each neighbor of the grid winner.

    Each refinement keeps the cheaper of (current point, midpoint) and
    discards the far end, halving the bracket. Refinement stops when the
    two bracket costs agree within cost_tolerance, when the next midpoint
    would fall below min_midpoint, or after max_bisections. The result is
    the best point seen anywhere, so it is never worse than the grid pass.
    """
    config = config or HeuristicConfig()
    grid = _validate_tf_grid(config.t_f_grid)
    memo = _Memo(evaluator)
    trace: list[TraceEntry] = []
    seen: list[CostBreakdown] = []
    step = 0
    for t_f in grid:
        b = memo.best_at(t_f)
        seen.append(b)
        trace.append(TraceEntry(step, "grid", b.t_f, b.t_r, b.cost))
        step += 1

    grid_best = _argbest(seen)
    anchor_idx = grid.index(grid_best.t_f)
    neighbors = []
    if anchor_idx > 0:
        neighbors.append(grid[anchor_idx - 1])
    if anchor_idx + 1 < len(grid):
        neighbors.append(grid[anchor_idx + 1])

    for neighbor in neighbors:
        near, far = grid_best.t_f, neighbor
        near_cost = memo.best_at(near).cost
        far_cost = memo.best_at(far).cost
        if near_cost > far_cost:
            near, far = far, near
            near_cost, far_cost = far_cost, near_cost
        for _ in range(config.max_bisections):
            midpoint = (near + far) / 2.0
            if abs(near_cost - far_cost) < config.cost_tolerance:
                break
            if midpoint < config.min_midpoint:
                break
            b = memo.best_at(midpoint)
            seen.append(b)
            trace.append(TraceEntry(step, "bisect", b.t_f, b.t_r, b.cost))
            step += 1
            # keep the cheaper of (near, midpoint); the far end drops out
            if b.cost < near_cost:
                near, far = midpoint, near
                near_cost, far_cost = b.cost, near_cost
            else:
                far, far_cost = midpoint, b.cost
    return SearchResult(
        method="heuristic",
        best=_argbest(seen),
        trace=tuple(trace),
        n_evaluations=memo.n_evaluations,
    )


@dataclass(frozen=True)
class AnnealConfig:
    """Simulated annealing schedule over the filtering threshold."""

    t_f_init: float = 0.25
    temp_init: float = 100.0
    iterations: int = 25
    cooling: float = 0.95
    step_half_width: float = 0.25
    bounds: tuple[float, float] = (0.0, 0.5)


def simulated_annealing(
    evaluator: Evaluator, config: AnnealConfig | None = None, seed: int = 0
) -> SearchResult:
    """Random local search with temperature-gated uphill moves.

    Every iteration draws one step offset and one acceptance uniform (both
    are always drawn, so the random stream does not depend on outcomes),
    proposes current + offset clamped to bounds, accepts downhill moves
    always and uphill moves with probability exp(-delta / temperature),
    then cools the temperature by the multiplicative factor. At zero
    temperature only downhill moves are taken. Returns the best point seen,
    not the final position.
    """
    config = config or AnnealConfig()
    lo, hi = config.bounds
    if not 0.0 <= lo < hi <= 0.5:
        raise ConfigError("annealing bounds must nest inside [0, 0.5]")
    rng = rng_for(seed, "anneal")
    memo = _Memo(evaluator)
    trace: list[TraceEntry] = []
    seen: list[CostBreakdown] = []

    current = float(np.clip(config.t_f_init, lo, hi))
    current_best = memo.best_at(current)
    seen.append(current_best)
    trace.append(
        TraceEntry(0, "init", current_best.t_f, current_best.t_r, current_best.cost,
                   temperature=config.temp_init, accepted=True)
    )
    current_cost = current_best.cost
    temperature = config.temp_init
    for it in range(1, config.iterations + 1):
        offset = rng.uniform(-config.step_half_width, config.step_half_width)
        gate = rng.uniform(0.0, 1.0)
        candidate = float(np.clip(current + offset, lo, hi))
        b = memo.best_at(candidate)
        seen.append(b)
        delta = b.cost - current_cost
        if delta < 0.0:
            accepted = True
        elif temperature > 0.0:
            accepted = math.exp(-delta / temperature) > gate
        else:
            accepted = False
        if accepted:
            current, current_cost = candidate, b.cost
        trace.append(
            TraceEntry(it, "anneal", b.t_f, b.t_r, b.cost,
                       temperature=temperature, accepted=accepted)
        )
        temperature *= config.cooling
    return SearchResult(
        method="anneal",
        best=_argbest(seen),
        trace=tuple(trace),
        n_evaluations=memo.n_evaluations,
        final_temperature=temperature,
    )


def brute_force(
    evaluator: Evaluator,
    lower: float = 0.0,
    upper: float = 0.5,
    step: float = 0.01,
) -> SearchResult:
    """Evaluate an inclusive fine lattice over [lower, upper]."""
    if not 0.0 <= lower < upper <= 0.5 or step <= 0:
        raise ConfigError("brute force needs 0 <= lower < upper <= 0.5 and step > 0")
    n_steps = int(round((upper - lower) / step))
    grid = [round(lower + i * step, 12) for i in range(n_steps + 1)]
    memo = _Memo(evaluator)
    trace: list[TraceEntry] = []
    seen: list[CostBreakdown] = []
    for i, t_f in enumerate(grid):
        b = memo.best_at(t_f)
        seen.append(b)
        trace.append(TraceEntry(i, "brute", b.t_f, b.t_r, b.cost))
    return SearchResult(
        method="brute",
        best=_argbest(seen),
        trace=tuple(trace),
        n_evaluations=memo.n_evaluations,
    )


def write_trace(path: str | Path, result: SearchResult) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "stage", "t_f", "t_r", "cost", "temperature", "accepted"])
        for e in result.trace:
            writer.writerow(
                [
                    e.step,
                    e.stage,
                    f"{e.t_f:.6f}",
                    "" if e.t_r is None else f"{e.t_r:.6f}",
                    f"{e.cost:.6f}",
                    "" if e.temperature is None else f"{e.temperature:.6f}",
                    "" if e.accepted is None else str(e.accepted).lower(),
                ]
            )
