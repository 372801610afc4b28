"""Combine the fine-grained and overall question probabilities into one score.

Five combiners, named after the standard readings of each rule:

* ``original``      - overall-question probability alone (the baseline).
* ``union``         - probabilistic OR: ``a + b - a*b``.
* ``maximum``       - the larger of the two.
* ``weighted_sum``  - convex combination ``w*a + (1-w)*b``.
* ``bayesian``      - independent-likelihood-ratio fusion
  ``a*b / (a*b + (1-a)(1-b))``; the total-conflict 0/0 case is defined
  as 0.5 (contradictory evidence carries no information).

Alternate definitions can be swapped in behind the same operation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import ConfigInvalid, MissingQuestionScore, OutOfRange
from . import metrics

_DISPLAY_NAMES = {
    "original": "Original",
    "union": "Union",
    "maximum": "Maximum",
    "weighted_sum": "Weighted Sum",
    "bayesian": "Bayesian Fusion",
}


class FusionMethod(Enum):
    ORIGINAL = "original"
    UNION = "union"
    MAXIMUM = "maximum"
    WEIGHTED_SUM = "weighted_sum"
    BAYESIAN = "bayesian"

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self.value]


@dataclass(frozen=True)
class FusionConfig:
    """Method selector; ``weight`` is read only by ``weighted_sum``."""

    method: FusionMethod
    weight: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 <= self.weight <= 1.0):
            raise ConfigInvalid(f"fusion weight {self.weight} outside [0, 1]")


def _check_probability(name: str, p: float) -> float:
    if not (0.0 <= p <= 1.0):
        raise OutOfRange(f"{name}={p} outside [0, 1]")
    return float(p)


def fuse(p_fine: float, p_overall: float, cfg: FusionConfig) -> float:
    """Apply the configured combiner to the two question probabilities.

    Results are clamped against sub-ulp float drift so the documented
    ordering guarantees (union >= maximum >= weighted_sum >= minimum)
    hold exactly.
    """
    a = _check_probability("p_fine", p_fine)
    b = _check_probability("p_overall", p_overall)
    method = cfg.method
    if method is FusionMethod.ORIGINAL:
        return b
    if method is FusionMethod.UNION:
        return min(1.0, max(a + b - a * b, a, b))
    if method is FusionMethod.MAXIMUM:
        return max(a, b)
    if method is FusionMethod.WEIGHTED_SUM:
        value = cfg.weight * a + (1.0 - cfg.weight) * b
        return min(max(a, b), max(min(a, b), value))
    if method is FusionMethod.BAYESIAN:
        agree = a * b
        disagree = (1.0 - a) * (1.0 - b)
        if agree + disagree == 0.0:
            return 0.5
        return agree / (agree + disagree)
    raise ConfigInvalid(f"unknown fusion method {method!r}")


@dataclass(frozen=True)
class FusionSample:
    """Per-item question probabilities with ground truth, ready to sweep."""

    item_id: str
    p_fine: float | None
    p_overall: float | None
    truth_actionable: bool


@dataclass(frozen=True)
class FusionRow:
    """One line of the method-comparison table."""

    method: FusionMethod
    label: str
    pr_auc: float
    roc_auc: float
    max_f1: float


def fusion_sweep(
    samples: Sequence[FusionSample],
    configs: Sequence[FusionConfig],
) -> list[FusionRow]:
    """Metric table over fusion methods, one row per config in input order."""
    for s in samples:
        if s.p_fine is None or s.p_overall is None:
            raise MissingQuestionScore(
                f"item {s.item_id!r} lacks a fine-grained or overall probability"
            )
    rows: list[FusionRow] = []
    for cfg in configs:
        scored = [
            metrics.ScoredSample(s.item_id, fuse(s.p_fine, s.p_overall, cfg), s.truth_actionable)
            for s in samples
        ]
        report = metrics.evaluate_scores(scored)
        rows.append(
            FusionRow(
                method=cfg.method,
                label=cfg.method.display_name,
                pr_auc=report.pr_auc,
                roc_auc=report.roc_auc,
                max_f1=report.max_f1,
            )
        )
    return rows


def all_methods(weight: float = 0.5) -> list[FusionConfig]:
    """The five standard configurations, in presentation order."""
    return [
        FusionConfig(FusionMethod.ORIGINAL),
        FusionConfig(FusionMethod.UNION),
        FusionConfig(FusionMethod.MAXIMUM),
        FusionConfig(FusionMethod.WEIGHTED_SUM, weight=weight),
        FusionConfig(FusionMethod.BAYESIAN),
    ]
