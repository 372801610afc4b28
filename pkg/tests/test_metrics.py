from __future__ import annotations

import numpy as np
import pytest

from modcascade.core import IssueTaxonomy, ModerationLabel, QuestionTarget, ScorePair
from modcascade.errors import (
    DegenerateLabels,
    EmptySample,
    InconsistentStreams,
    NoPositives,
    OutOfRange,
)
from modcascade.metrics import (
    EvalReport,
    ScoredSample,
    evaluate_scores,
    max_f1,
    online_report,
    pr_auc,
    roc_auc,
)
from modcascade.ranker import RankerVerdict, TemplateId
from modcascade.router import RouterDecision
from oracles import quad_roc_auc, sweep_max_f1, walk_pr_auc


def samples_of(scores, labels) -> list[ScoredSample]:
    return [ScoredSample(f"i{k}", s, bool(y)) for k, (s, y) in enumerate(zip(scores, labels))]


class TestRocAuc:
    def test_perfect_ordering(self):
        samples = samples_of([0.9, 0.4, 0.6], [1, 0, 1])
        assert roc_auc(samples) == 1.0
        assert roc_auc(samples) == quad_roc_auc(samples)

    def test_one_win_one_loss(self):
        samples = samples_of([0.9, 0.8, 0.3], [1, 0, 1])
        assert roc_auc(samples) == 0.5
        assert roc_auc(samples) == quad_roc_auc(samples)

    def test_all_tied_is_half(self):
        samples = samples_of([0.5] * 6, [1, 0, 1, 0, 0, 1])
        assert roc_auc(samples) == 0.5

    def test_degenerate_labels(self):
        with pytest.raises(DegenerateLabels):
            roc_auc(samples_of([0.5, 0.6], [1, 1]))

    def test_complement_symmetry_without_ties(self):
        rng = np.random.default_rng(31)
        for _ in range(25):
            n = int(rng.integers(4, 60))
            scores = rng.permutation(np.linspace(0.01, 0.99, n))
            labels = rng.random(n) < 0.5
            if labels.all() or not labels.any():
                continue
            direct = roc_auc(samples_of(scores, labels))
            flipped = roc_auc(samples_of(scores, ~labels))
            assert direct == pytest.approx(1.0 - flipped, abs=1e-12)

    def test_random_labels_concentrate_at_half(self):
        rng = np.random.default_rng(100)
        n = 2000
        scores = rng.random(n)
        labels = rng.random(n) < 0.5
        assert abs(roc_auc(samples_of(scores, labels)) - 0.5) <= 0.05


class TestPrAuc:
    def test_hand_example(self):
        samples = samples_of([0.9, 0.8, 0.3], [1, 0, 1])
        value = pr_auc(samples)
        assert value == pytest.approx(5.0 / 6.0, abs=1e-12)
        assert value == pytest.approx(walk_pr_auc(samples), abs=1e-12)

    def test_perfect_separation(self):
        assert pr_auc(samples_of([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])) == 1.0

    def test_all_positive(self):
        assert pr_auc(samples_of([0.9, 0.4, 0.2], [1, 1, 1])) == 1.0

    def test_no_positives(self):
        with pytest.raises(NoPositives):
            pr_auc(samples_of([0.4, 0.2], [0, 0]))


class TestMaxF1:
    def test_hand_example(self):
        value, threshold = max_f1(samples_of([0.9, 0.8, 0.3], [1, 0, 1]))
        assert value == pytest.approx(0.8)
        assert threshold == 0.3
        assert (value, threshold) == sweep_max_f1(samples_of([0.9, 0.8, 0.3], [1, 0, 1]))

    def test_perfect_classifier(self):
        value, _ = max_f1(samples_of([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]))
        assert value == 1.0

    def test_predict_all_lower_bound(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n = int(rng.integers(3, 80))
            scores = rng.random(n)
            labels = rng.random(n) < 0.4
            if not labels.any():
                continue
            prevalence = labels.mean()
            value, _ = max_f1(samples_of(scores, labels))
            assert value >= 2 * prevalence / (prevalence + 1) - 1e-15

    def test_no_positives(self):
        with pytest.raises(NoPositives):
            max_f1(samples_of([0.4, 0.2], [0, 0]))

    def test_smallest_optimal_threshold_returned(self):
        # two thresholds achieve F1 = 1 when duplicates score identically
        samples = samples_of([0.9, 0.9, 0.1], [1, 1, 0])
        _, threshold = max_f1(samples)
        assert threshold == 0.9


def _random_instance(rng) -> list[ScoredSample]:
    n = int(rng.integers(2, 201))
    scores = rng.random(n)
    if rng.random() < 0.5:  # inject heavy ties
        scores = np.round(scores, decimals=int(rng.integers(1, 3)))
    labels = rng.random(n) < rng.uniform(0.1, 0.9)
    if not labels.any():
        labels[int(rng.integers(n))] = True
    if labels.all():
        labels[int(rng.integers(n))] = False
    return samples_of(scores, labels)


class TestOracleEquivalence:
    def test_sort_based_matches_brute_force(self):
        rng = np.random.default_rng(2024)
        for _ in range(500):
            samples = _random_instance(rng)
            assert roc_auc(samples) == quad_roc_auc(samples)
            assert pr_auc(samples) == pytest.approx(walk_pr_auc(samples), abs=1e-12)
            fast = max_f1(samples)
            slow = sweep_max_f1(samples)
            assert fast[0] == slow[0]
            assert fast[1] == slow[1]


class TestRankInvariance:
    def test_strictly_increasing_transform_preserves_values(self):
        rng = np.random.default_rng(55)
        for _ in range(40):
            samples = _random_instance(rng)
            transformed = [
                ScoredSample(s.item_id, s.score * 0.5 + 0.25, s.truth_actionable)
                for s in samples
            ]
            assert roc_auc(samples) == roc_auc(transformed)
            assert pr_auc(samples) == pytest.approx(pr_auc(transformed), abs=1e-12)
            base_f1, base_t = max_f1(samples)
            new_f1, new_t = max_f1(transformed)
            assert base_f1 == new_f1
            assert new_t == base_t * 0.5 + 0.25  # value invariant, threshold moves


class TestReports:
    def test_evaluate_scores_bundles_everything(self):
        samples = samples_of([0.9, 0.8, 0.3, 0.2], [1, 0, 1, 0])
        report = evaluate_scores(samples)
        assert report.n_pos == 2 and report.n_neg == 2
        assert report.roc_auc == roc_auc(samples)
        assert report.pr_auc == pr_auc(samples)
        assert (report.max_f1, report.max_f1_threshold) == max_f1(samples)

    def test_empty_and_degenerate(self):
        with pytest.raises(EmptySample):
            evaluate_scores([])
        with pytest.raises(DegenerateLabels):
            evaluate_scores(samples_of([0.5, 0.4], [1, 1]))

    def test_report_invariant(self):
        with pytest.raises(DegenerateLabels):
            EvalReport(pr_auc=1.0, roc_auc=1.0, max_f1=1.0, max_f1_threshold=0.5, n_pos=0, n_neg=3)

    def test_score_range_validated(self):
        with pytest.raises(OutOfRange):
            ScoredSample("a", 1.5, True)


def _decision(item_id: str, passed: bool) -> RouterDecision:
    return RouterDecision(item_id, 0.9 if passed else 0.1, "s1", passed)


def _verdict(item_id: str, final_score: float) -> RankerVerdict:
    return RankerVerdict(
        item_id=item_id,
        per_question={QuestionTarget.OVERALL_ACTIONABLE: ScorePair.from_p_yes(final_score)},
        final_score=final_score,
        template_id=TemplateId.P1,
        backend_name="mock",
    )


class TestOnlineReport:
    ISSUE = IssueTaxonomy.default().by_id(1)

    def test_nobody_routed(self):
        decisions = [_decision(f"i{k}", False) for k in range(10)]
        report = online_report(decisions, [], 0.5, {})
        assert report.action_volume == 0
        assert report.filter_rate == 1.0
        assert report.precision is None

    def test_zero_threshold_actions_everything_ranked(self):
        decisions = [_decision("a", True), _decision("b", True), _decision("c", False)]
        verdicts = [_verdict("a", 0.2), _verdict("b", 0.9)]
        truth = {
            "a": ModerationLabel(None, False),
            "b": ModerationLabel(self.ISSUE, True),
        }
        report = online_report(decisions, verdicts, 0.0, truth)
        assert report.action_volume == report.routed_count == 2
        assert report.precision == 0.5

    def test_filter_rate_mirrors_traffic_elimination(self):
        decisions = [_decision(f"i{k}", k < 25) for k in range(1000)]
        report = online_report(decisions, [], 0.9, {})
        assert report.filter_rate == pytest.approx(0.975, abs=1e-12)
        assert report.routed_count == 25 and report.total_count == 1000

    def test_verdict_for_unrouted_item_rejected(self):
        decisions = [_decision("a", False)]
        with pytest.raises(InconsistentStreams):
            online_report(decisions, [_verdict("a", 0.9)], 0.5, {})

    def test_missing_truth_for_actioned_rejected(self):
        decisions = [_decision("a", True)]
        with pytest.raises(InconsistentStreams):
            online_report(decisions, [_verdict("a", 0.9)], 0.5, {})
