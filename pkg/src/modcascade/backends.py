"""Ranker backends and the wire protocol they speak.

The wire contract is transport-agnostic JSON objects:

    request  {"item_id", "embedding", "caption"?, "question_target",
              "preamble"?, "prior_answers": [{"question_target", "answer"}]}
    response {"item_id", "logits": {"Y": number, "N": number}}

Requests carry the question structure, not its wording: backends own
their prompt assembly. ``MockBackend`` is the bundled deterministic test
double; ``HttpBackend`` speaks the same JSON over POST.
"""

from __future__ import annotations

import hashlib
import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field

from .core import EmbeddingVector, ModerationLabel, QuestionTarget
from .errors import BackendMalformed, BackendUnavailable, ConfigInvalid
from .ranker import (
    TOKEN_NO,
    TOKEN_YES,
    BackendRequest,
    BackendResponse,
    QuestionSpec,
)

DEFAULT_LOGIT_GAP = 4.0


def request_to_wire(request: BackendRequest) -> dict:
    wire: dict = {
        "item_id": request.item_id,
        "embedding": list(request.embedding.values),
        "question_target": request.question.target.value,
        "prior_answers": [
            {"question_target": q.target.value, "answer": answer}
            for q, answer in request.prior_answers
        ],
    }
    if request.caption is not None:
        wire["caption"] = request.caption
    if request.question.preamble is not None:
        wire["preamble"] = request.question.preamble
    return wire


def request_from_wire(wire: dict) -> BackendRequest:
    """Rebuild a request from its wire form.

    Question wording is not on the wire, so the rebuilt spec carries the
    target name as placeholder text.
    """
    try:
        target = QuestionTarget(wire["question_target"])
        priors = tuple(
            (
                QuestionSpec(
                    target=QuestionTarget(p["question_target"]),
                    text=p["question_target"],
                ),
                str(p["answer"]),
            )
            for p in wire.get("prior_answers", [])
        )
        return BackendRequest(
            item_id=str(wire["item_id"]),
            embedding=EmbeddingVector(tuple(wire["embedding"])),
            caption=wire.get("caption"),
            question=QuestionSpec(
                target=target,
                text=wire["question_target"],
                preamble=wire.get("preamble"),
            ),
            prior_answers=priors,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise BackendMalformed(f"bad wire request: {exc}") from exc


def response_to_wire(response: BackendResponse) -> dict:
    return {"item_id": response.item_id, "logits": dict(response.logits)}


def response_from_wire(wire: dict) -> BackendResponse:
    try:
        logits = wire["logits"]
        return BackendResponse(
            item_id=str(wire["item_id"]),
            logits={str(k): float(v) for k, v in logits.items()},
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise BackendMalformed(f"bad wire response: {exc}") from exc


def _hash_unit(*parts: object) -> float:
    """Uniform value in [0, 1) derived from a stable hash of the parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


@dataclass
class MockBackend:
    """Deterministic stand-in for the fine-tuned model.

    Per question it decides whether to agree with ground truth by hashing
    (noise_seed, item_id, question target), agreeing with probability
    ``accuracy``; the emitted answer token leads the alternative by
    ``gap`` logits (plus an optional deterministic jitter for less
    degenerate score distributions). Identical (item_id, noise_seed)
    always reproduce identical logits.

    ``truth`` may be a single label (every item shares it) or a per-item
    mapping; items absent from the mapping are treated as benign.
    """

    truth: ModerationLabel | dict[str, ModerationLabel]
    accuracy: float
    noise_seed: int
    gap: float = DEFAULT_LOGIT_GAP
    gap_jitter: float = 0.0
    name: str = "mock"

    def __post_init__(self) -> None:
        if not (0.5 < self.accuracy <= 1.0):
            raise ConfigInvalid(
                f"mock accuracy must be in (0.5, 1], got {self.accuracy}"
            )
        if self.gap <= 0.0 or self.gap_jitter < 0.0 or self.gap_jitter >= self.gap:
            raise ConfigInvalid("mock needs gap > 0 and 0 <= gap_jitter < gap")

    def _truth_for(self, item_id: str) -> ModerationLabel:
        if isinstance(self.truth, ModerationLabel):
            return self.truth
        label = self.truth.get(item_id)
        if label is None:
            return ModerationLabel(issue=None, actionable=False)
        return label

    def answer(self, request: BackendRequest) -> BackendResponse:
        label = self._truth_for(request.item_id)
        target = request.question.target
        if target is QuestionTarget.FINE_GRAINED_ISSUE:
            expected_yes = label.issue is not None
        else:
            expected_yes = label.actionable
        agree = _hash_unit(self.noise_seed, request.item_id, target.value, "agree") < self.accuracy
        says_yes = expected_yes if agree else not expected_yes
        gap = self.gap
        if self.gap_jitter > 0.0:
            unit = _hash_unit(self.noise_seed, request.item_id, target.value, "jitter")
            gap += (2.0 * unit - 1.0) * self.gap_jitter
        half = gap / 2.0
        logits = {TOKEN_YES: half, TOKEN_NO: -half} if says_yes else {TOKEN_YES: -half, TOKEN_NO: half}
        return BackendResponse(item_id=request.item_id, logits=logits)


@dataclass
class HttpBackend:
    """Client for a remote ranker speaking the wire protocol over POST."""

    url: str
    timeout: float = 10.0
    name: str = field(default="", init=False)

    def __post_init__(self) -> None:
        self.name = f"http:{self.url}"

    def answer(self, request: BackendRequest) -> BackendResponse:
        body = json.dumps(request_to_wire(request)).encode("utf-8")
        http_request = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(http_request, timeout=self.timeout) as reply:
                payload = reply.read()
        except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
            raise BackendUnavailable(f"backend at {self.url} unreachable: {exc}") from exc
        try:
            wire = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise BackendMalformed(f"backend at {self.url} sent invalid JSON") from exc
        return response_from_wire(wire)
