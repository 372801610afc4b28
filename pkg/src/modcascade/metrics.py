"""Offline ranking metrics and online-analogue counts.

Conventions are pinned so results are reproducible and oracle-checkable:

* ROC-AUC: Mann-Whitney statistic; tied positive/negative pairs earn
  half credit.
* PR-AUC: average precision with step interpolation (no trapezoids,
  which are known to over-estimate PR curves); equal-score items form
  one group and each positive in the group takes the group's precision.
* Max-F1: thresholds sweep the distinct scores plus a sentinel above the
  maximum, predicting positive at ``score >= t``; the smallest optimal
  threshold is returned.

Degenerate inputs (a single class) raise instead of silently producing
0 or 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateLabels,
    EmptySample,
    InconsistentStreams,
    NoPositives,
    OutOfRange,
)

if TYPE_CHECKING:  # avoid an import cycle; these are duck-typed at runtime
    from .core import ModerationLabel
    from .ranker import RankerVerdict
    from .router import RouterDecision

CONVENTIONS = {
    "roc_tie_rule": "half_credit",
    "pr_interpolation": "step_average_precision",
    "max_f1_threshold_rule": "smallest_threshold_predict_geq",
}


@dataclass(frozen=True)
class ScoredSample:
    """One item's final score with its binary ground truth."""

    item_id: str
    score: float
    truth_actionable: bool

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise OutOfRange(f"score {self.score} outside [0, 1] for {self.item_id!r}")


@dataclass(frozen=True)
class EvalReport:
    """Offline metric bundle for one scored run."""

    pr_auc: float
    roc_auc: float
    max_f1: float
    max_f1_threshold: float
    n_pos: int
    n_neg: int

    def __post_init__(self) -> None:
        if self.n_pos < 1 or self.n_neg < 1:
            raise DegenerateLabels("report requires at least one item of each class")


@dataclass(frozen=True)
class OnlineReport:
    """Action volume, precision, and traffic-reduction counts for one run."""

    action_volume: int
    precision: float | None
    filter_rate: float
    routed_count: int
    total_count: int

    def __post_init__(self) -> None:
        if self.action_volume > self.routed_count:
            raise InconsistentStreams(
                f"action volume {self.action_volume} exceeds routed count {self.routed_count}"
            )


def _split(samples: Sequence[ScoredSample]) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray([s.score for s in samples], dtype=np.float64)
    labels = np.asarray([s.truth_actionable for s in samples], dtype=bool)
    return scores, labels


def roc_auc(samples: Sequence[ScoredSample]) -> float:
    """Probability a random positive outscores a random negative (ties: 0.5).

    Computed from midranks; matches quadratic pair counting exactly because
    every midrank is an exactly-representable half-integer.
    """
    scores, labels = _split(samples)
    n_pos = int(labels.sum())
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("roc_auc needs at least one positive and one negative")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(sorted_scores):
        j = i
        while j < len(sorted_scores) and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[i:j] = (i + 1 + j) / 2.0  # average of 1-based ranks i+1 .. j
        i = j
    rank_sum_pos = float(ranks[sorted_labels].sum())
    u_statistic = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u_statistic / (n_pos * n_neg)


def pr_auc(samples: Sequence[ScoredSample]) -> float:
    """Average precision over positives in descending-score order.

    Equal scores form one group; each positive in the group contributes the
    precision of the whole group's cut.
    """
    scores, labels = _split(samples)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoPositives("pr_auc needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]
    total = 0.0
    seen = 0
    tp = 0
    i = 0
    while i < len(scores):
        j = i
        group_pos = 0
        while j < len(scores) and scores[j] == scores[i]:
            group_pos += int(labels[j])
            j += 1
        seen += j - i
        tp += group_pos
        total += group_pos * (tp / seen)
        i = j
    return total / n_pos


def max_f1(samples: Sequence[ScoredSample]) -> tuple[float, float]:
    """Best F1 over all decision thresholds and the smallest threshold achieving it.

    Candidates are the distinct scores plus one sentinel above the maximum
    (the empty prediction); prediction is positive at ``score >= t``.
    """
    scores, labels = _split(samples)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoPositives("max_f1 needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    scores, labels = scores[order], labels[order]

    candidates: list[tuple[float, float]] = []  # (threshold, f1)
    sentinel = float(np.nextafter(scores[0], np.inf))
    candidates.append((sentinel, 0.0))  # nothing predicted: tp = 0, so F1 = 0
    tp = 0
    i = 0
    while i < len(scores):
        j = i
        while j < len(scores) and scores[j] == scores[i]:
            tp += int(labels[j])
            j += 1
        fp = j - tp
        fn = n_pos - tp
        f1 = 2.0 * tp / (2.0 * tp + fp + fn)  # == 2PR/(P+R)
        candidates.append((float(scores[i]), f1))
        i = j

    best_f1 = max(f1 for _, f1 in candidates)
    best_threshold = min(t for t, f1 in candidates if f1 == best_f1)
    return best_f1, best_threshold


def evaluate_scores(samples: Sequence[ScoredSample]) -> EvalReport:
    """Full offline report; requires both classes present."""
    if not samples:
        raise EmptySample("cannot evaluate an empty sample set")
    labels = [s.truth_actionable for s in samples]
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(
            f"evaluation needs both classes (n_pos={n_pos}, n_neg={n_neg})"
        )
    f1, threshold = max_f1(samples)
    return EvalReport(
        pr_auc=pr_auc(samples),
        roc_auc=roc_auc(samples),
        max_f1=f1,
        max_f1_threshold=threshold,
        n_pos=n_pos,
        n_neg=n_neg,
    )


def online_report(
    decisions: Sequence["RouterDecision"],
    verdicts: Sequence["RankerVerdict"],
    action_threshold: float,
    truth: Mapping[str, "ModerationLabel"],
) -> OnlineReport:
    """Desk-scale analogues of the production counters.

    ``filter_rate`` is the share of the stream the router discarded;
    ``action_volume`` counts verdicts at or above the action threshold;
    ``precision`` is their true-positive fraction, absent when nothing
    was actioned. Items the backend never decided simply have no verdict
    and are excluded from the precision denominator.
    """
    if not decisions:
        raise EmptySample("online report requires at least one routing decision")
    passed_ids = {d.item_id for d in decisions if d.passed}
    for v in verdicts:
        if v.item_id not in passed_ids:
            raise InconsistentStreams(
                f"verdict for {v.item_id!r}, which the router did not pass"
            )
    actioned = [v for v in verdicts if v.final_score >= action_threshold]
    precision: float | None = None
    if actioned:
        flags = []
        for v in actioned:
            label = truth.get(v.item_id)
            if label is None:
                raise InconsistentStreams(f"truth missing for actioned item {v.item_id!r}")
            flags.append(label.actionable)
        precision = sum(flags) / len(flags)
    total = len(decisions)
    routed = len(passed_ids)
    return OnlineReport(
        action_volume=len(actioned),
        precision=precision,
        filter_rate=1.0 - routed / total,
        routed_count=routed,
        total_count=total,
    )
