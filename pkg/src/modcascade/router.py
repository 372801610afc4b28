"""First-stage filter: a seed bank of high-risk exemplars plus similarity routing.

An item passes the router when its cosine similarity to the nearest seed
meets the threshold. Banks are immutable snapshots: every mutation returns
a new bank with the version bumped by one, so concurrent readers never see
a half-applied change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property
from typing import Sequence

import numpy as np

from .core import EmbeddingVector, IssueTag, VideoItem
from .errors import (
    CorpusTooSmall,
    DegenerateCorpus,
    DimensionMismatch,
    DuplicateSeedId,
    EmptyBank,
    EmptySample,
    OutOfRange,
    UnknownSeedId,
    ZeroVector,
)

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6


class Provenance(Enum):
    """How a seed entered the bank."""

    CENTROID_SELECTED = "centroid_selected"
    MANUAL_GOLDEN = "manual_golden"


@dataclass(frozen=True)
class SeedEntry:
    """One high-risk exemplar."""

    seed_id: str
    embedding: EmbeddingVector
    issue: IssueTag
    provenance: Provenance
    created_at: float = 0.0


@dataclass(frozen=True)
class SeedBank:
    """Versioned, immutable collection of seed entries."""

    dim: int
    entries: tuple[SeedEntry, ...] = ()
    version: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.dim < 1:
            raise OutOfRange(f"bank dim must be positive, got {self.dim}")
        seen: set[str] = set()
        for entry in self.entries:
            if entry.embedding.dim != self.dim:
                raise DimensionMismatch(
                    f"seed {entry.seed_id!r}: dim {entry.embedding.dim} != bank dim {self.dim}"
                )
            if entry.seed_id in seen:
                raise DuplicateSeedId(f"duplicate seed id {entry.seed_id!r}")
            seen.add(entry.seed_id)

    @classmethod
    def empty(cls, dim: int) -> "SeedBank":
        return cls(dim=dim)

    @classmethod
    def create(cls, dim: int, entries: Sequence[SeedEntry]) -> "SeedBank":
        """Fresh bank from a seed list; counts as one mutation of empty."""
        return cls(dim=dim, entries=tuple(entries), version=1)

    def get(self, seed_id: str) -> SeedEntry:
        for entry in self.entries:
            if entry.seed_id == seed_id:
                return entry
        raise UnknownSeedId(f"seed id {seed_id!r} not in bank")

    def __len__(self) -> int:
        return len(self.entries)

    @cached_property
    def _unit_matrix(self) -> np.ndarray:
        """Row-normalized seed embeddings, in entry order."""
        if not self.entries:
            return np.zeros((0, self.dim))
        matrix = np.stack([e.embedding.as_array() for e in self.entries])
        norms = _norms(matrix)
        if np.any(norms == 0.0):
            bad = self.entries[int(np.argmax(norms == 0.0))].seed_id
            raise ZeroVector(f"seed {bad!r} has an all-zero embedding")
        return matrix / norms[:, None]


@dataclass(frozen=True)
class RouterDecision:
    """Routing outcome for one item."""

    item_id: str
    max_similarity: float
    best_seed_id: str | None
    passed: bool


def _norms(matrix: np.ndarray) -> np.ndarray:
    """Row L2 norms via an explicit square-sum.

    ``np.linalg.norm`` reduces 1-D input through BLAS but 2-D input through
    numpy's pairwise sum; the last-ulp difference would break the bitwise
    agreement between single-item and batch similarity paths.
    """
    return np.sqrt((matrix * matrix).sum(axis=-1))


def _unit(vector: EmbeddingVector, label: str) -> np.ndarray:
    arr = vector.as_array()
    norm = float(_norms(arr))
    if norm == 0.0:
        raise ZeroVector(f"{label} is an all-zero vector")
    return arr / norm


def _unit_sims(units: np.ndarray, seed_unit: np.ndarray) -> np.ndarray:
    """Cosine between unit rows and one unit vector, via 1 - ||u - w||^2 / 2.

    The distance form makes bit-identical vectors score exactly 1.0
    (guaranteeing seed self-recall at threshold 1) and exactly matches
    between the single-item and batch paths, since the summation tree
    over the embedding axis is the same.
    """
    diff = units - seed_unit
    return 1.0 - 0.5 * (diff * diff).sum(axis=-1)


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine of the angle between two embeddings, clamped into [-1, 1].

    Raises:
        DimensionMismatch: vectors differ in length.
        ZeroVector: either vector has zero norm.
    """
    if a.dim != b.dim:
        raise DimensionMismatch(f"cosine over dims {a.dim} != {b.dim}")
    value = float(_unit_sims(_unit(a, "first argument"), _unit(b, "second argument")))
    return max(-1.0, min(1.0, value))


def max_similarities(items: Sequence[VideoItem], bank: SeedBank) -> np.ndarray:
    """Nearest-seed similarity for a batch of items.

    One vectorized pass per seed; banks are small, item batches are not.
    Arithmetic is identical to ``route``, so a threshold calibrated on
    these values reproduces the same pass set item by item.
    """
    if not bank.entries:
        raise EmptyBank("similarity scan requires a non-empty bank")
    matrix = np.stack([item.embedding.as_array() for item in items])
    if matrix.shape[1] != bank.dim:
        raise DimensionMismatch(
            f"item dim {matrix.shape[1]} != bank dim {bank.dim}"
        )
    norms = _norms(matrix)
    if np.any(norms == 0.0):
        bad = items[int(np.argmax(norms == 0.0))].id
        raise ZeroVector(f"item {bad!r} has an all-zero embedding")
    units = matrix / norms[:, None]
    best = np.full(len(items), -np.inf)
    for seed_unit in bank._unit_matrix:
        np.maximum(best, _unit_sims(units, seed_unit), out=best)
    return np.clip(best, -1.0, 1.0)


def route(item: VideoItem, bank: SeedBank, threshold: float) -> RouterDecision:
    """Score one item against every seed and decide pass/discard.

    The decision records the best similarity and the matching seed;
    similarity ties break to the lexicographically smallest seed id so
    replays are deterministic.
    """
    if not bank.entries:
        raise EmptyBank("cannot route against an empty bank")
    if item.embedding.dim != bank.dim:
        raise DimensionMismatch(
            f"item {item.id!r}: dim {item.embedding.dim} != bank dim {bank.dim}"
        )
    sims = _unit_sims(bank._unit_matrix, _unit(item.embedding, f"item {item.id!r}"))
    best = float(np.clip(sims.max(), -1.0, 1.0))
    tied = [e.seed_id for e, s in zip(bank.entries, sims) if s == sims.max()]
    return RouterDecision(
        item_id=item.id,
        max_similarity=best,
        best_seed_id=min(tied),
        passed=bool(best >= threshold),
    )


def add_manual_seed(bank: SeedBank, entry: SeedEntry) -> SeedBank:
    """Append an annotator-identified golden seed; returns the next snapshot."""
    if entry.embedding.dim != bank.dim:
        raise DimensionMismatch(
            f"seed {entry.seed_id!r}: dim {entry.embedding.dim} != bank dim {bank.dim}"
        )
    if any(e.seed_id == entry.seed_id for e in bank.entries):
        raise DuplicateSeedId(f"seed id {entry.seed_id!r} already in bank")
    golden = replace(entry, provenance=Provenance.MANUAL_GOLDEN)
    return SeedBank(bank.dim, bank.entries + (golden,), bank.version + 1)


def remove_seed(bank: SeedBank, seed_id: str) -> SeedBank:
    """Drop one seed; returns the next snapshot."""
    if all(e.seed_id != seed_id for e in bank.entries):
        raise UnknownSeedId(f"seed id {seed_id!r} not in bank")
    remaining = tuple(e for e in bank.entries if e.seed_id != seed_id)
    return SeedBank(bank.dim, remaining, bank.version + 1)


# --- centroid-proximity seed selection --------------------------------------


def _normalized_corpus(
    corpus: Sequence[tuple[EmbeddingVector, IssueTag]],
) -> np.ndarray:
    dims = {emb.dim for emb, _ in corpus}
    if len(dims) > 1:
        raise DimensionMismatch(f"corpus mixes dimensions {sorted(dims)}")
    matrix = np.stack([emb.as_array() for emb, _ in corpus])
    norms = _norms(matrix)
    if np.any(norms == 0.0):
        raise ZeroVector(f"corpus element {int(np.argmax(norms == 0.0))} is all-zero")
    return matrix / norms[:, None]


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D^2-weighted initial centroids; deterministic given the generator state."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = float(d2.sum())
        if total == 0.0:
            # remaining mass exhausted (duplicate points); take lowest unused index
            unused = [i for i in range(n) if i not in chosen]
            nxt = unused[0]
        else:
            r = float(rng.random())
            nxt = int(np.searchsorted(np.cumsum(d2 / total), r, side="right"))
            nxt = min(nxt, n - 1)
        chosen.append(nxt)
        d2 = np.minimum(d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[chosen].copy()


def _lloyd(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Lloyd iterations on the unit sphere: assign, average, re-normalize.

    Centroids are re-normalized each round so Euclidean assignment keeps the
    cosine ordering. Empty clusters keep their previous centroid.
    """
    k = centroids.shape[0]
    for _ in range(KMEANS_MAX_ITER):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d2, axis=1)
        new_centroids = centroids.copy()
        for j in range(k):
            members = points[assign == j]
            if members.shape[0] == 0:
                continue
            mean = members.mean(axis=0)
            norm = float(np.linalg.norm(mean))
            if norm > 0.0:
                new_centroids[j] = mean / norm
        movement = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if movement < KMEANS_TOL:
            break
    return centroids


def _nearest_distinct(sims: np.ndarray) -> list[int]:
    """One corpus index per cluster, all distinct.

    ``sims[e, j]`` is the cosine between element ``e`` and centroid ``j``.
    An element wanted by several clusters goes to the cluster where its
    similarity is highest; the losers re-pick their next-nearest unused
    element. Ties break to the lowest element index, then lowest cluster
    index, so the outcome is deterministic.
    """
    n, k = sims.shape
    chosen: dict[int, int] = {}
    used: set[int] = set()
    unfilled = list(range(k))
    while unfilled:
        wanted: dict[int, list[int]] = {}
        for j in unfilled:
            best_e = -1
            best_s = -np.inf
            for e in range(n):
                if e in used:
                    continue
                if sims[e, j] > best_s:
                    best_e, best_s = e, sims[e, j]
            wanted.setdefault(best_e, []).append(j)
        next_round: list[int] = []
        for e, clusters in wanted.items():
            winner = max(clusters, key=lambda j: (sims[e, j], -j))
            chosen[winner] = e
            used.add(e)
            next_round.extend(j for j in clusters if j != winner)
        unfilled = next_round
    return [chosen[j] for j in range(k)]


def select_seeds_centroid(
    corpus: Sequence[tuple[EmbeddingVector, IssueTag]],
    k: int,
    rng_seed: int,
    *,
    created_at: float = 0.0,
) -> list[SeedEntry]:
    """Cluster the corpus and return the element nearest each centroid.

    Runs k-means on L2-normalized embeddings (k-means++ initialization,
    Lloyd updates until centroid movement < 1e-6 or 100 iterations), then
    picks one distinct corpus element per cluster by cosine proximity to
    the centroid. Seed ids encode corpus positions (``seed-00042``), and
    ``created_at`` defaults to epoch zero, so output is bit-identical for
    a fixed ``rng_seed``.
    """
    if k < 1:
        raise OutOfRange(f"k must be positive, got {k}")
    if len(corpus) < k:
        raise CorpusTooSmall(f"corpus of {len(corpus)} cannot yield {k} seeds")
    raw = [emb.values for emb, _ in corpus]
    if k > 1 and all(v == raw[0] for v in raw):
        raise DegenerateCorpus("all corpus points identical; cannot form multiple clusters")

    points = _normalized_corpus(corpus)
    rng = np.random.default_rng(rng_seed)
    centroids = _lloyd(points, _kmeans_pp_init(points, k, rng))
    indices = _nearest_distinct(points @ centroids.T)
    return [
        SeedEntry(
            seed_id=f"seed-{idx:05d}",
            embedding=corpus[idx][0],
            issue=corpus[idx][1],
            provenance=Provenance.CENTROID_SELECTED,
            created_at=created_at,
        )
        for idx in indices
    ]


def calibrate_threshold(
    sample: Sequence[VideoItem],
    bank: SeedBank,
    target_pass_rate: float,
) -> float:
    """Smallest threshold whose pass rate on the sample is <= the target.

    With no ties at the cut the achieved rate is within one item (1/n) of
    the target; with ties the largest achievable rate <= target is used.
    When even the single best item exceeds the target, the returned
    threshold sits one float above the maximum similarity so nothing passes.
    """
    if not (0.0 < target_pass_rate < 1.0):
        raise OutOfRange(
            f"target_pass_rate must be in the open interval (0, 1), got {target_pass_rate}"
        )
    if len(sample) == 0:
        raise EmptySample("calibration requires a non-empty sample")
    if not bank.entries:
        raise EmptyBank("calibration requires a non-empty bank")

    sims = np.sort(max_similarities(sample, bank))[::-1]
    n = len(sims)
    # +1e-9 grace: floor() must not drop an exactly-representable target*n.
    count = int(math.floor(target_pass_rate * n + 1e-9))
    # Back off over tie groups: a cut inside a group is not achievable.
    while count > 0 and count < n and sims[count - 1] == sims[count]:
        count -= 1
    if count == 0:
        return float(np.nextafter(sims[0], np.inf))
    return float(sims[count - 1])
