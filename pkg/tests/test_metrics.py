"""Tests for selective-classification metrics.

Oracles: a hand-worked confusion table (derivation inline, frozen ahead of
the implementation) and scikit-learn's macro F1 as a second route.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import f1_score

from relikit.errors import DataError
from relikit.metrics import (
    macro_f1,
    per_class_precision_recall,
    selective_evaluate,
    tradeoff_curve,
    write_curve,
)

# Hand-worked oracle: y_true = [0,0,1,1,1], y_pred = [0,1,1,1,0].
#   class 1: TP=2 FP=1 FN=1 -> P=2/3 R=2/3 F1=2/3
#   class 0: TP=1 FP=1 FN=1 -> P=1/2 R=1/2 F1=1/2
#   macro F1 = (1/2 + 2/3) / 2 = 7/12
Y_TRUE = np.array([0, 0, 1, 1, 1])
Y_PRED = np.array([0, 1, 1, 1, 0])


class TestPrecisionRecall:
    def test_hand_worked_table(self):
        precision, recall, flagged = per_class_precision_recall(Y_TRUE, Y_PRED)
        assert precision == (0.5, 2 / 3)
        assert recall == (0.5, 2 / 3)
        assert not flagged

    def test_macro_f1_hand_value(self):
        assert macro_f1(Y_TRUE, Y_PRED) == pytest.approx(7 / 12, abs=1e-12)

    def test_empty_predicted_class_flags(self):
        precision, recall, flagged = per_class_precision_recall(
            np.array([0, 1]), np.array([1, 1])
        )
        assert precision[0] == 0.0
        assert flagged

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(2, 40))
    def test_matches_sklearn_macro_f1(self, seed, n):
        rng = np.random.default_rng(seed)
        y_true = rng.integers(0, 2, size=n)
        y_pred = rng.integers(0, 2, size=n)
        ours = macro_f1(y_true, y_pred)
        theirs = f1_score(y_true, y_pred, labels=[0, 1], average="macro", zero_division=0)
        assert ours == pytest.approx(theirs, abs=1e-12)


class TestSelectiveEvaluate:
    # scores [0.9,0.6,0.8,0.55,0.7] at t_r=0.65 accept rows {0,2,4}:
    #   accepted true [0,1,1], pred [0,1,0]
    #   class 1: P=1 R=1/2 F1=2/3; class 0: P=1/2 R=1 F1=2/3; macro 2/3
    #   rejection 2/5, mean score 0.8, ACP_0 = 1/2, ACP_1 = 2/3
    SCORES = np.array([0.9, 0.6, 0.8, 0.55, 0.7])

    def test_hand_worked_selective_case(self):
        accepted = self.SCORES >= 0.65
        m = selective_evaluate(Y_TRUE, Y_PRED, self.SCORES, accepted)
        assert m.macro_f1 == pytest.approx(2 / 3, abs=1e-12)
        assert m.rejection_rate == pytest.approx(0.4, abs=1e-12)
        assert m.mean_score == pytest.approx(0.8, abs=1e-12)
        assert m.acceptance == (0.5, pytest.approx(2 / 3))
        assert m.precision == (0.5, 1.0)
        assert m.recall == (1.0, 0.5)
        assert (m.n_total, m.n_accepted) == (5, 3)

    def test_accept_all_matches_plain_metrics(self):
        m = selective_evaluate(Y_TRUE, Y_PRED, self.SCORES, np.ones(5, bool))
        assert m.macro_f1 == pytest.approx(macro_f1(Y_TRUE, Y_PRED), abs=1e-12)
        assert m.rejection_rate == 0.0
        assert m.acceptance == (1.0, 1.0)

    def test_zero_accepted_is_flagged_zeros(self):
        m = selective_evaluate(Y_TRUE, Y_PRED, self.SCORES, np.zeros(5, bool))
        assert m.macro_f1 == 0.0
        assert m.mean_score == 0.0
        assert m.rejection_rate == 1.0
        assert m.had_zero_division

    def test_empty_batch_errors(self):
        with pytest.raises(DataError):
            selective_evaluate(np.array([]), np.array([]), np.array([]), np.array([]))

    def test_length_mismatch_errors(self):
        with pytest.raises(DataError):
            selective_evaluate(Y_TRUE, Y_PRED, self.SCORES[:3], np.ones(5, bool))


class TestTradeoffCurve:
    def test_monotone_acceptance(self):
        rng = np.random.default_rng(2)
        n = 200
        y = rng.integers(0, 2, size=n)
        pred = rng.integers(0, 2, size=n)
        scores = rng.uniform(0.5, 1.0, size=n)
        grid = np.round(np.arange(0.5, 1.0001, 0.02), 4)
        curve = tradeoff_curve(y, pred, scores, grid)
        accepted_counts = [m.n_accepted for _, m in curve]
        assert accepted_counts == sorted(accepted_counts, reverse=True)
        rejections = [m.rejection_rate for _, m in curve]
        assert rejections == sorted(rejections)

    def test_curve_csv_round_trip(self, tmp_path):
        curve = tradeoff_curve(Y_TRUE, Y_PRED, TestSelectiveEvaluate.SCORES, [0.5, 0.65, 0.95])
        path = tmp_path / "curve.csv"
        write_curve(path, curve)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("t_r,macro_f1,rejection_rate,mean_score,n_accepted")
        assert len(lines) == 4
        first = lines[1].split(",")
        assert first[0] == "0.500"
        assert first[4] == "5"
