"""Shared domain vocabulary: items, labels, embeddings, scores, taxonomy.

Everything here is immutable after construction, so values can be shared
freely across concurrent pipeline stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    DataError,
    DimensionMismatch,
    DuplicateItemId,
    EmptyId,
    NonFiniteValue,
    OutOfRange,
    UnknownIssue,
)

# Tolerance for the p_yes + p_no = 1 invariant on score pairs.
SCORE_SUM_TOLERANCE = 1e-9

DEFAULT_TAXONOMY_SIZE = 12


class QuestionTarget(Enum):
    """Which label a single ranker question asks about."""

    FINE_GRAINED_ISSUE = "fine_grained_issue"
    OVERALL_ACTIONABLE = "overall_actionable"


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-dimension real feature vector for one video.

    The vector is stored as a tuple of Python floats so equality, hashing,
    and serialization round-trips are all bit-exact.
    """

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def dim(self) -> int:
        return len(self.values)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class IssueTag:
    """One fine-grained violation category."""

    id: int
    name: str

    def __post_init__(self) -> None:
        if self.id < 0:
            raise OutOfRange(f"issue id must be non-negative, got {self.id}")
        if not self.name:
            raise DataError("issue name must be non-empty")


@dataclass(frozen=True)
class IssueTaxonomy:
    """The configured set of issue tags; lookup by id is total or fails loudly."""

    issues: tuple[IssueTag, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "issues", tuple(self.issues))
        ids = [tag.id for tag in self.issues]
        if len(set(ids)) != len(ids):
            raise DataError("issue ids must be unique within a taxonomy")

    @classmethod
    def default(cls, size: int = DEFAULT_TAXONOMY_SIZE) -> "IssueTaxonomy":
        """Anonymous numbered issues; the production categories are not public."""
        if size < 1:
            raise OutOfRange(f"taxonomy size must be >= 1, got {size}")
        return cls(tuple(IssueTag(i, f"issue_{i}") for i in range(1, size + 1)))

    def by_id(self, issue_id: int) -> IssueTag:
        for tag in self.issues:
            if tag.id == issue_id:
                return tag
        raise UnknownIssue(f"issue id {issue_id} not in taxonomy")

    def has(self, tag: IssueTag) -> bool:
        return any(t == tag for t in self.issues)

    def require(self, tag: IssueTag) -> IssueTag:
        if not self.has(tag):
            raise UnknownIssue(f"issue {tag.id} ({tag.name!r}) not in taxonomy")
        return tag

    def __len__(self) -> int:
        return len(self.issues)

    def __iter__(self) -> Iterator[IssueTag]:
        return iter(self.issues)


@dataclass(frozen=True)
class ModerationLabel:
    """Ground truth for one item.

    ``issue`` and ``actionable`` are independent dimensions: borderline
    content may carry an issue tag without warranting action.
    """

    issue: IssueTag | None
    actionable: bool


@dataclass(frozen=True)
class VideoItem:
    """One unit of moderated content with pre-extracted features."""

    id: str
    embedding: EmbeddingVector
    caption: str | None = None
    truth: ModerationLabel | None = None


@dataclass(frozen=True)
class ScorePair:
    """Two-way probability over the answer tokens, p_yes + p_no = 1."""

    p_yes: float
    p_no: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "p_yes", float(self.p_yes))
        object.__setattr__(self, "p_no", float(self.p_no))
        for name, p in (("p_yes", self.p_yes), ("p_no", self.p_no)):
            if not (0.0 <= p <= 1.0):
                raise OutOfRange(f"{name}={p} outside [0, 1]")
        if abs(self.p_yes + self.p_no - 1.0) > SCORE_SUM_TOLERANCE:
            raise OutOfRange(
                f"p_yes + p_no = {self.p_yes + self.p_no!r} deviates from 1 "
                f"beyond {SCORE_SUM_TOLERANCE}"
            )

    @classmethod
    def from_p_yes(cls, p_yes: float) -> "ScorePair":
        return cls(p_yes, 1.0 - p_yes)


def validate_item(item: VideoItem, expected_dim: int) -> VideoItem:
    """Check the item's invariants against the configured embedding dimension.

    Returns the item unchanged on success.

    Raises:
        EmptyId: the identifier is empty.
        DimensionMismatch: embedding length differs from ``expected_dim``.
        NonFiniteValue: the embedding contains NaN or infinity.
    """
    if expected_dim < 1:
        raise OutOfRange(f"expected_dim must be positive, got {expected_dim}")
    if not item.id:
        raise EmptyId("item id must be non-empty")
    if item.embedding.dim != expected_dim:
        raise DimensionMismatch(
            f"item {item.id!r}: embedding dim {item.embedding.dim} != expected {expected_dim}"
        )
    if not item.embedding.is_finite():
        raise NonFiniteValue(f"item {item.id!r}: embedding contains NaN or Inf")
    return item


def check_unique_ids(items: Iterable[VideoItem]) -> None:
    """Enforce the unique-id-within-a-stream invariant."""
    seen: set[str] = set()
    for item in items:
        if item.id in seen:
            raise DuplicateItemId(f"duplicate item id {item.id!r} in stream")
        seen.add(item.id)
