"""Independent brute-force reference implementations used only by tests.

These deliberately avoid the library's code paths: quadratic pair
counting, per-threshold counting loops, exhaustive partition checks, and
arbitrary-precision softmax. Slow and obviously correct.
"""

from __future__ import annotations

import itertools
from typing import Sequence

import mpmath
import numpy as np

from modcascade.metrics import ScoredSample


def quad_roc_auc(samples: Sequence[ScoredSample]) -> float:
    """Mann-Whitney by explicit pair enumeration (ties get half credit)."""
    positives = [s.score for s in samples if s.truth_actionable]
    negatives = [s.score for s in samples if not s.truth_actionable]
    wins = 0
    ties = 0
    for p in positives:
        for n in negatives:
            if p > n:
                wins += 1
            elif p == n:
                ties += 1
    return (wins + 0.5 * ties) / (len(positives) * len(negatives))


def walk_pr_auc(samples: Sequence[ScoredSample]) -> float:
    """Average precision by walking distinct thresholds and counting from scratch."""
    n_pos = sum(s.truth_actionable for s in samples)
    thresholds = sorted({s.score for s in samples}, reverse=True)
    area = 0.0
    prev_recall = 0.0
    for t in thresholds:
        tp = sum(1 for s in samples if s.score >= t and s.truth_actionable)
        predicted = sum(1 for s in samples if s.score >= t)
        precision = tp / predicted
        recall = tp / n_pos
        area += (recall - prev_recall) * precision
        prev_recall = recall
    return area


def sweep_max_f1(samples: Sequence[ScoredSample]) -> tuple[float, float]:
    """Exhaustive threshold sweep with per-threshold counting loops."""
    n_pos = sum(s.truth_actionable for s in samples)
    scores = sorted({s.score for s in samples})
    candidates = scores + [float(np.nextafter(max(scores), np.inf))]
    best_f1 = -1.0
    best_t = None
    for t in candidates:
        tp = sum(1 for s in samples if s.score >= t and s.truth_actionable)
        fp = sum(1 for s in samples if s.score >= t and not s.truth_actionable)
        fn = n_pos - tp
        f1 = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
        if f1 > best_f1 or (f1 == best_f1 and t < best_t):
            best_f1, best_t = f1, t
    return best_f1, best_t


def softmax_p_yes(l_yes: float, l_no: float, dps: int = 50) -> float:
    """Two-way softmax at high precision, immune to overflow."""
    with mpmath.workdps(dps):
        return float(1 / (1 + mpmath.e ** (mpmath.mpf(l_no) - mpmath.mpf(l_yes))))


def two_cluster_fixed_partitions(points: np.ndarray) -> list[tuple[frozenset, frozenset]]:
    """All stable 2-partitions of unit-normalized points under Lloyd's update.

    A partition is a fixed point when assigning every point to its nearer
    (re-normalized) cluster mean reproduces the partition. Ambiguous
    boundary points (exact distance ties) are accepted in either cluster.
    """
    pts = points / np.linalg.norm(points, axis=1)[:, None]
    n = pts.shape[0]
    stable = []
    indices = list(range(n))
    for size in range(1, n // 2 + 1):
        for left in itertools.combinations(indices, size):
            left_set = frozenset(left)
            right_set = frozenset(indices) - left_set
            if not right_set or (len(left_set) == len(right_set) and min(right_set) < min(left_set)):
                continue
            centroids = []
            ok = True
            for cluster in (left_set, right_set):
                mean = pts[sorted(cluster)].mean(axis=0)
                norm = np.linalg.norm(mean)
                if norm == 0:
                    ok = False
                    break
                centroids.append(mean / norm)
            if not ok:
                continue
            for i in indices:
                d_left = np.sum((pts[i] - centroids[0]) ** 2)
                d_right = np.sum((pts[i] - centroids[1]) ** 2)
                in_left = i in left_set
                if d_left == d_right:
                    continue  # boundary tie: either side is stable
                if (d_left < d_right) != in_left:
                    ok = False
                    break
            if ok:
                stable.append((left_set, right_set))
    return stable
