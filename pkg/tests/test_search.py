"""Threshold-search behavior on synthetic cost surfaces.

The surfaces are piecewise-linear interpolations of random node values on
the 0.01 lattice over [0, 0.5]. On such a surface the value at any interior
point is a convex combination of its bracketing lattice nodes, so the fine
brute-force lattice minimum is a true lower bound for every point any
search can visit. That makes the dominance chain
brute <= heuristic <= grid exactly checkable.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from relikit.errors import ConfigError, DataError
from relikit.search import (
    DEFAULT_TF_GRID,
    DEFAULT_TR_GRID,
    AnnealConfig,
    CostBreakdown,
    CostWeights,
    HeuristicConfig,
    best_rejection_for,
    brute_force,
    cost,
    grid_search,
    heuristic_search,
    make_breakdown,
    rejection_rate,
    simulated_annealing,
    write_trace,
)

LATTICE = np.round(np.arange(0.0, 0.5 + 1e-9, 0.01), 10)


def surface_evaluator(seed: int):
    """Random piecewise-linear f(t_f) plus a t_r-dependent bowl.

    The t_r term does not depend on t_f, so min-over-t_r preserves the
    piecewise linearity of the t_f profile.
    """
    rng = np.random.default_rng(seed)
    nodes = rng.uniform(0.5, 4.0, size=LATTICE.size)
    tr_center = float(rng.choice(DEFAULT_TR_GRID))

    def evaluate(t_f: float):
        base = float(np.interp(t_f, LATTICE, nodes))
        out = []
        for t_r in DEFAULT_TR_GRID:
            c = base + 2.0 * (t_r - tr_center) ** 2
            out.append(
                CostBreakdown(
                    t_f=t_f, t_r=t_r, macro_f1=0.0,
                    rejection_rate=0.0, mean_score=0.0, cost=c,
                )
            )
        return out

    return evaluate


def flat_evaluator(value: float = 1.0):
    def evaluate(t_f: float):
        return [
            CostBreakdown(t_f=t_f, t_r=t_r, macro_f1=0.0,
                          rejection_rate=0.0, mean_score=0.0, cost=value)
            for t_r in DEFAULT_TR_GRID
        ]

    return evaluate


class TestCost:
    def test_identity_on_random_tuples(self):
        rng = np.random.default_rng(11)
        w = CostWeights()
        for _ in range(100):
            f1, rr, ms = rng.uniform(0.0, 1.0, size=3)
            expected = 4.0 * (1.0 - f1) + 1.0 * rr + 1.0 * (1.0 - ms)
            assert abs(cost(f1, rr, ms, w) - expected) <= 1e-12

    def test_custom_weights(self):
        w = CostWeights(performance=2.0, rejection=0.5, confidence=3.0)
        got = cost(0.8, 0.1, 0.9, w)
        assert abs(got - (2.0 * 0.2 + 0.5 * 0.1 + 3.0 * 0.1)) <= 1e-12

    def test_perfect_point_costs_zero(self):
        assert cost(1.0, 0.0, 1.0) == 0.0

    def test_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            cost(1.2, 0.0, 0.5)
        with pytest.raises(ConfigError):
            cost(0.5, -0.1, 0.5)

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigError):
            CostWeights(performance=-1.0)

    def test_all_zero_weights_rejected(self):
        with pytest.raises(ConfigError):
            CostWeights(0.0, 0.0, 0.0)

    def test_rejection_rate(self):
        assert rejection_rate(3, 4) == 0.25
        assert rejection_rate(0, 5) == 1.0
        assert rejection_rate(5, 5) == 0.0
        with pytest.raises(DataError):
            rejection_rate(0, 0)
        with pytest.raises(DataError):
            rejection_rate(6, 5)

    def test_make_breakdown_consistent(self):
        b = make_breakdown(0.2, 0.64, 0.9, 0.1, 0.8)
        assert abs(b.cost - (4.0 * 0.1 + 0.1 + 0.2)) <= 1e-12
        assert b.t_f == 0.2 and b.t_r == 0.64


class TestBestRejection:
    def test_picks_minimum(self):
        bs = [
            make_breakdown(0.1, t_r, f1, 0.0, 1.0)
            for t_r, f1 in [(0.5, 0.7), (0.52, 0.9), (0.54, 0.8)]
        ]
        assert best_rejection_for(bs).t_r == 0.52

    def test_tie_goes_to_smaller_t_r(self):
        bs = [
            make_breakdown(0.1, 0.54, 0.8, 0.0, 1.0),
            make_breakdown(0.1, 0.5, 0.8, 0.0, 1.0),
            make_breakdown(0.1, 0.52, 0.8, 0.0, 1.0),
        ]
        assert best_rejection_for(bs).t_r == 0.5

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            best_rejection_for([])


class TestGridSearch:
    def test_finds_grid_minimum(self):
        ev = surface_evaluator(3)
        result = grid_search(ev)
        costs = {t_f: best_rejection_for(ev(t_f)).cost for t_f in DEFAULT_TF_GRID}
        assert result.best.cost == min(costs.values())
        assert result.n_evaluations == 6
        assert len(result.trace) == 6

    def test_tie_goes_to_smaller_t_f(self):
        result = grid_search(flat_evaluator())
        assert result.best.t_f == 0.0
        assert result.best.t_r == 0.5

    def test_grid_validation(self):
        ev = flat_evaluator()
        with pytest.raises(ConfigError):
            grid_search(ev, t_f_grid=())
        with pytest.raises(ConfigError):
            grid_search(ev, t_f_grid=(0.2, 0.1))
        with pytest.raises(ConfigError):
            grid_search(ev, t_f_grid=(0.0, 0.6))


class TestHeuristicSearch:
    def test_never_worse_than_grid(self):
        for seed in range(20):
            ev = surface_evaluator(seed)
            g = grid_search(ev)
            h = heuristic_search(ev)
            assert h.best.cost <= g.best.cost + 1e-12, f"seed {seed}"

    def test_bisection_cap(self):
        ev = surface_evaluator(7)
        result = heuristic_search(ev)
        # 6 grid points + at most 10 bisections in each of 2 directions
        n_bisect = sum(1 for e in result.trace if e.stage == "bisect")
        assert n_bisect <= 20
        assert result.n_evaluations <= 26

    def test_stops_when_costs_agree(self):
        # flat surface: neighbor costs equal, so no bisection happens
        result = heuristic_search(flat_evaluator())
        assert all(e.stage == "grid" for e in result.trace)
        assert result.n_evaluations == 6

    def test_midpoint_floor_respected(self):
        ev = surface_evaluator(5)
        result = heuristic_search(ev)
        for e in result.trace:
            if e.stage == "bisect":
                assert e.t_f >= 0.01

    def test_refines_between_grid_points(self):
        # V-shaped valley with minimum at 0.27, between grid points 0.2, 0.3.
        # Asymmetric on purpose: equal bracket costs would satisfy the
        # convergence tolerance before any midpoint gets evaluated.
        def ev(t_f):
            c = abs(t_f - 0.27) + 0.1
            return [
                CostBreakdown(t_f=t_f, t_r=t_r, macro_f1=0.0,
                              rejection_rate=0.0, mean_score=0.0, cost=c)
                for t_r in DEFAULT_TR_GRID
            ]

        result = heuristic_search(ev)
        grid_best = grid_search(ev).best.cost
        assert result.best.cost < grid_best
        assert abs(result.best.t_f - 0.27) < 0.05

    def test_symmetric_valley_still_matches_grid(self):
        # equal costs at both bracket ends stop refinement immediately;
        # the result must then equal the grid winner, not beat it
        def ev(t_f):
            c = abs(t_f - 0.25) + 0.1
            return [
                CostBreakdown(t_f=t_f, t_r=t_r, macro_f1=0.0,
                              rejection_rate=0.0, mean_score=0.0, cost=c)
                for t_r in DEFAULT_TR_GRID
            ]

        result = heuristic_search(ev)
        assert result.best.cost == grid_search(ev).best.cost


class TestBruteForce:
    def test_lattice_size(self):
        result = brute_force(flat_evaluator())
        assert result.n_evaluations == 51
        assert result.trace[0].t_f == 0.0
        assert result.trace[-1].t_f == 0.5

    def test_never_worse_than_heuristic_on_lattice_surfaces(self):
        for seed in range(20):
            ev = surface_evaluator(seed)
            h = heuristic_search(ev)
            b = brute_force(ev)
            assert b.best.cost <= h.best.cost + 1e-12, f"seed {seed}"

    def test_bounds_validation(self):
        with pytest.raises(ConfigError):
            brute_force(flat_evaluator(), lower=0.3, upper=0.2)
        with pytest.raises(ConfigError):
            brute_force(flat_evaluator(), step=0.0)


class TestSimulatedAnnealing:
    def test_deterministic_given_seed(self):
        ev = surface_evaluator(9)
        a = simulated_annealing(ev, seed=4)
        b = simulated_annealing(ev, seed=4)
        assert a.trace == b.trace
        assert a.best == b.best

    def test_different_seed_changes_proposals(self):
        ev = surface_evaluator(9)
        a = simulated_annealing(ev, seed=4)
        b = simulated_annealing(ev, seed=5)
        assert [e.t_f for e in a.trace] != [e.t_f for e in b.trace]

    def test_final_temperature_closed_form(self):
        result = simulated_annealing(surface_evaluator(2), seed=0)
        expected = 100.0 * 0.95**25
        assert result.final_temperature is not None
        assert abs(result.final_temperature - expected) <= 1e-9

    def test_temperature_schedule_in_trace(self):
        result = simulated_annealing(surface_evaluator(2), seed=0)
        anneal_steps = [e for e in result.trace if e.stage == "anneal"]
        assert len(anneal_steps) == 25
        for i, e in enumerate(anneal_steps):
            assert e.temperature is not None
            assert abs(e.temperature - 100.0 * 0.95**i) <= 1e-9

    def test_best_seen_not_final_position(self):
        # the returned best must equal the minimum over the whole trace
        result = simulated_annealing(surface_evaluator(13), seed=1)
        trace_min = min(e.cost for e in result.trace)
        assert result.best.cost == trace_min

    def test_proposals_stay_in_bounds(self):
        result = simulated_annealing(surface_evaluator(6), seed=2)
        for e in result.trace:
            assert 0.0 <= e.t_f <= 0.5

    def test_zero_temperature_is_greedy(self):
        # with temp 0 every uphill proposal must be refused
        ev = surface_evaluator(8)
        config = AnnealConfig(temp_init=0.0)
        result = simulated_annealing(ev, config=config, seed=3)
        current = result.trace[0].cost
        for e in result.trace[1:]:
            if e.accepted:
                assert e.cost < current
                current = e.cost
            else:
                assert e.cost >= current

    def test_downhill_always_accepted(self):
        result = simulated_annealing(surface_evaluator(10), seed=6)
        current = result.trace[0].cost
        for e in result.trace[1:]:
            if e.cost < current:
                assert e.accepted
            if e.accepted:
                current = e.cost

    def test_bounds_validation(self):
        with pytest.raises(ConfigError):
            simulated_annealing(flat_evaluator(), AnnealConfig(bounds=(0.2, 0.1)))

    def test_accept_probability_matches_gate(self):
        # replay the random stream: acceptance of uphill moves must equal
        # exp(-delta/temp) > gate with both uniforms drawn every iteration
        from relikit._rng import rng_for

        ev = surface_evaluator(21)
        seed = 17
        result = simulated_annealing(ev, seed=seed)
        rng = rng_for(seed, "anneal")
        current = 0.25
        current_cost = best_rejection_for(ev(current)).cost
        temp = 100.0
        for e in result.trace[1:]:
            offset = rng.uniform(-0.25, 0.25)
            gate = rng.uniform(0.0, 1.0)
            candidate = float(np.clip(current + offset, 0.0, 0.5))
            assert abs(candidate - e.t_f) <= 1e-12
            c = best_rejection_for(ev(candidate)).cost
            delta = c - current_cost
            expected = delta < 0.0 or math.exp(-delta / temp) > gate
            assert e.accepted == expected
            if expected:
                current, current_cost = candidate, c
            temp *= 0.95


class TestTraceOutput:
    def test_write_trace_columns(self, tmp_path):
        result = simulated_annealing(surface_evaluator(1), seed=0)
        out = tmp_path / "trace.csv"
        write_trace(out, result)
        lines = out.read_text(encoding="utf-8").strip().splitlines()
        assert lines[0] == "step,stage,t_f,t_r,cost,temperature,accepted"
        assert len(lines) == 1 + len(result.trace)
        first = lines[1].split(",")
        assert first[1] == "init"
        assert first[6] in {"true", "false"}

    def test_grid_trace_has_blank_temperature(self, tmp_path):
        result = grid_search(surface_evaluator(1))
        out = tmp_path / "trace.csv"
        write_trace(out, result)
        row = out.read_text(encoding="utf-8").strip().splitlines()[1].split(",")
        assert row[5] == "" and row[6] == ""


class TestEvaluatorCaching:
    def test_annealing_counts_unique_thresholds_once(self):
        calls: list[float] = []

        def ev(t_f):
            calls.append(t_f)
            return flat_evaluator()(t_f)

        result = simulated_annealing(ev, seed=0)
        assert len(calls) == result.n_evaluations
        assert len(set(round(c, 12) for c in calls)) == len(calls)
