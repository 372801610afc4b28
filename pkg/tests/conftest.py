from __future__ import annotations

from modcascade.core import (
    EmbeddingVector,
    IssueTag,
    ModerationLabel,
    QuestionTarget,
    VideoItem,
)
from modcascade.errors import BackendUnavailable
from modcascade.ranker import BackendRequest, BackendResponse


def make_item(
    item_id: str,
    values,
    issue: IssueTag | None = None,
    actionable: bool | None = None,
    caption: str | None = None,
) -> VideoItem:
    truth = None
    if actionable is not None:
        truth = ModerationLabel(issue=issue, actionable=actionable)
    return VideoItem(
        id=item_id,
        embedding=EmbeddingVector(tuple(values)),
        caption=caption,
        truth=truth,
    )


class StubBackend:
    """Answers every question of a target with fixed logits."""

    def __init__(self, logits_by_target: dict[QuestionTarget, dict[str, float]], name="stub"):
        self.logits_by_target = logits_by_target
        self.name = name
        self.requests: list[BackendRequest] = []

    def answer(self, request: BackendRequest) -> BackendResponse:
        self.requests.append(request)
        return BackendResponse(
            item_id=request.item_id,
            logits=dict(self.logits_by_target[request.question.target]),
        )


class FlakyBackend:
    """Raises BackendUnavailable for the first ``failures`` calls, then delegates."""

    def __init__(self, inner, failures: int, name="flaky"):
        self.inner = inner
        self.failures = failures
        self.calls = 0
        self.name = name

    def answer(self, request: BackendRequest) -> BackendResponse:
        self.calls += 1
        if self.calls <= self.failures:
            raise BackendUnavailable("synthetic outage")
        return self.inner.answer(request)


class CountingBackend:
    """Delegates while counting calls and capturing requests."""

    def __init__(self, inner, name=None):
        self.inner = inner
        self.calls = 0
        self.requests: list[BackendRequest] = []
        self.name = name or getattr(inner, "name", "counting")

    def answer(self, request: BackendRequest) -> BackendResponse:
        self.calls += 1
        self.requests.append(request)
        return self.inner.answer(request)
