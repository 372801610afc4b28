"""Backend conformance checker.

Validates any ranker backend against the wire contract with a fixed probe
battery: token coverage, finite logits, item-id echo, deterministic
repeats, sequential prior-answer acceptance, and response latency. The
bundled mock must pass every check on every release.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

from .core import EmbeddingVector, QuestionTarget
from .errors import BackendError, BackendUnavailable, Unreachable
from .ranker import (
    TOKEN_NO,
    TOKEN_YES,
    BackendRequest,
    BackendResponse,
    QuestionSpec,
    RankerBackend,
)


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ConformanceResult:
    checks: tuple[CheckOutcome, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _probe_request(dim: int, item_id: str, *, with_priors: bool = False) -> BackendRequest:
    embedding = EmbeddingVector(tuple(0.1 * (j + 1) for j in range(dim)))
    priors: tuple[tuple[QuestionSpec, str], ...] = ()
    target = QuestionTarget.OVERALL_ACTIONABLE
    if with_priors:
        priors = (
            (QuestionSpec(QuestionTarget.FINE_GRAINED_ISSUE, "fine_grained_issue"), TOKEN_YES),
        )
    return BackendRequest(
        item_id=item_id,
        embedding=embedding,
        caption=None,
        question=QuestionSpec(target, target.value),
        prior_answers=priors,
    )


def check_backend(
    backend: RankerBackend,
    *,
    dim: int,
    require_deterministic: bool = True,
    timeout_s: float = 10.0,
) -> ConformanceResult:
    """Run the probe battery and report per-check outcomes.

    Raises:
        Unreachable: the very first probe got no answer at all.
    """
    checks: list[CheckOutcome] = []

    first = _probe_request(dim, "conform-000")
    started = time.perf_counter()
    try:
        response = backend.answer(first)
    except BackendUnavailable as exc:
        raise Unreachable(f"backend {backend.name!r} did not answer the first probe") from exc
    elapsed = time.perf_counter() - started

    missing = [t for t in (TOKEN_YES, TOKEN_NO) if t not in response.logits]
    checks.append(
        CheckOutcome(
            "both_tokens_present",
            not missing,
            "logits carry Y and N" if not missing else f"missing token(s): {missing}",
        )
    )
    finite = all(
        isinstance(v, (int, float)) and math.isfinite(v) for v in response.logits.values()
    )
    checks.append(
        CheckOutcome(
            "finite_logits",
            finite,
            "all logits finite" if finite else f"non-finite logits: {response.logits}",
        )
    )
    echoed = response.item_id == first.item_id
    checks.append(
        CheckOutcome(
            "item_id_echo",
            echoed,
            "item id echoed" if echoed else f"sent {first.item_id!r}, got {response.item_id!r}",
        )
    )
    checks.append(
        CheckOutcome(
            "responds_within_timeout",
            elapsed <= timeout_s,
            f"first probe answered in {elapsed:.3f}s (limit {timeout_s}s)",
        )
    )

    if require_deterministic:
        try:
            repeat = backend.answer(_probe_request(dim, "conform-000"))
            same = repeat.logits == response.logits and repeat.item_id == response.item_id
            detail = "identical response on repeat" if same else "repeat responses differ"
        except BackendError as exc:
            same, detail = False, f"repeat probe failed: {exc}"
        checks.append(CheckOutcome("deterministic_repeat", same, detail))

    try:
        sequential: BackendResponse | None = backend.answer(
            _probe_request(dim, "conform-001", with_priors=True)
        )
        ok = sequential is not None and not [
            t for t in (TOKEN_YES, TOKEN_NO) if t not in sequential.logits
        ]
        detail = "prior answers accepted" if ok else "answer to prior-carrying request malformed"
    except BackendError as exc:
        ok, detail = False, f"prior-carrying request rejected: {exc}"
    checks.append(CheckOutcome("prior_answers_accepted", ok, detail))

    return ConformanceResult(checks=tuple(checks))


def format_result(result: ConformanceResult) -> str:
    """Human-readable pass/fail table."""
    width = max(len(c.name) for c in result.checks)
    lines = [
        f"{c.name.ljust(width)}  {'PASS' if c.passed else 'FAIL'}  {c.detail}"
        for c in result.checks
    ]
    lines.append(f"{'overall'.ljust(width)}  {'PASS' if result.passed else 'FAIL'}")
    return "\n".join(lines)
