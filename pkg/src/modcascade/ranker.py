"""Second-stage scorer: prompt templates, logit transform, per-item ranking.

A backend receives one request per question and answers with logits for
the two answer tokens Y and N. The logits are renormalized over exactly
that pair (all other vocabulary is ignored), giving a calibrated
probability pair per question; the fusion module combines the pair of
questions into the final score.

Prompt wording lives in template files (see ``data/templates.json``), not
code: the four shipped templates follow the published structure (overall
only; fine-grained + overall separately; the same two sequentially; issue
definition then both) but their text is configuration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Protocol, Sequence

from .core import (
    EmbeddingVector,
    IssueTag,
    IssueTaxonomy,
    QuestionTarget,
    ScorePair,
    VideoItem,
)
from .errors import (
    BackendMalformed,
    BackendUnavailable,
    ConfigInvalid,
    MalformedRecord,
    MissingToken,
    NonFiniteLogit,
)
from .fusion import FusionConfig, fuse

TOKEN_YES = "Y"
TOKEN_NO = "N"

DEFAULT_MAX_RETRIES = 2


class TemplateId(Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"


@dataclass(frozen=True)
class QuestionSpec:
    """One single-token question; ``{issue}`` placeholders are filled at render time."""

    target: QuestionTarget
    text: str
    preamble: str | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ConfigInvalid("question text must be non-empty")


_TEMPLATE_SHAPES: dict[TemplateId, tuple[QuestionTarget, ...]] = {
    TemplateId.P1: (QuestionTarget.OVERALL_ACTIONABLE,),
    TemplateId.P2: (QuestionTarget.FINE_GRAINED_ISSUE, QuestionTarget.OVERALL_ACTIONABLE),
    TemplateId.P3: (QuestionTarget.FINE_GRAINED_ISSUE, QuestionTarget.OVERALL_ACTIONABLE),
    TemplateId.P4: (QuestionTarget.FINE_GRAINED_ISSUE, QuestionTarget.OVERALL_ACTIONABLE),
}


@dataclass(frozen=True)
class PromptTemplate:
    """A fixed arrangement of questions.

    P1 asks the overall question alone; P2 and P4 ask the fine-grained and
    overall questions independently (P4 with an issue-definition preamble);
    P3 asks them sequentially in one exchange, the second conditioned on
    the first answer.
    """

    id: TemplateId
    questions: tuple[QuestionSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "questions", tuple(self.questions))
        shape = _TEMPLATE_SHAPES[self.id]
        targets = tuple(q.target for q in self.questions)
        if targets != shape:
            raise ConfigInvalid(
                f"template {self.id.value} must ask {[t.value for t in shape]}, "
                f"got {[t.value for t in targets]}"
            )
        if self.id is TemplateId.P4 and any(q.preamble is None for q in self.questions):
            raise ConfigInvalid("template P4 questions must carry a definition preamble")

    @property
    def sequential(self) -> bool:
        return self.id is TemplateId.P3

    @property
    def arity(self) -> int:
        return len(self.questions)


def _template_from_record(template_id: TemplateId, record: dict) -> PromptTemplate:
    questions = []
    for q in record.get("questions", []):
        questions.append(
            QuestionSpec(
                target=QuestionTarget(q["target"]),
                text=q["text"],
                preamble=q.get("preamble"),
            )
        )
    return PromptTemplate(id=template_id, questions=tuple(questions))


def load_templates(path: Path | None = None) -> dict[TemplateId, PromptTemplate]:
    """Read prompt templates from a JSON file (default: the packaged set)."""
    if path is None:
        raw = resources.files("modcascade.data").joinpath("templates.json").read_text("utf-8")
    else:
        raw = Path(path).read_text("utf-8")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"template file is not valid JSON: {exc}") from exc
    templates: dict[TemplateId, PromptTemplate] = {}
    for tid in TemplateId:
        if tid.value not in data:
            raise ConfigInvalid(f"template file missing {tid.value}")
        templates[tid] = _template_from_record(tid, data[tid.value])
    return templates


_DEFAULT_TEMPLATES: dict[TemplateId, PromptTemplate] | None = None


def default_templates() -> dict[TemplateId, PromptTemplate]:
    global _DEFAULT_TEMPLATES
    if _DEFAULT_TEMPLATES is None:
        _DEFAULT_TEMPLATES = load_templates()
    return _DEFAULT_TEMPLATES


@dataclass(frozen=True)
class BackendRequest:
    """One question about one item, plus any prior answers in the exchange."""

    item_id: str
    embedding: EmbeddingVector
    caption: str | None
    question: QuestionSpec
    prior_answers: tuple[tuple[QuestionSpec, str], ...] = ()


@dataclass(frozen=True)
class BackendResponse:
    """Logits for the two answer tokens."""

    item_id: str
    logits: dict[str, float]


@dataclass(frozen=True)
class RankerVerdict:
    """Per-question probabilities and the fused final score for one item."""

    item_id: str
    per_question: dict[QuestionTarget, ScorePair]
    final_score: float
    template_id: TemplateId
    backend_name: str


class RankerBackend(Protocol):
    """Anything that can answer single-token questions about an item."""

    name: str

    def answer(self, request: BackendRequest) -> BackendResponse: ...


def transform_logits(response: BackendResponse, temperature: float = 1.0) -> ScorePair:
    """Two-way softmax over the Y/N logits, with max-logit subtraction.

    Only the two answer-token logits participate; the rest of the
    vocabulary is ignored by construction. ``temperature`` divides the
    logits before normalization (default 1.0; tuning it was reported to
    have no real effect, so nothing fancier is offered).
    """
    if temperature <= 0.0:
        raise ConfigInvalid(f"temperature must be positive, got {temperature}")
    for token in (TOKEN_YES, TOKEN_NO):
        if token not in response.logits:
            raise MissingToken(f"response for {response.item_id!r} lacks token {token}")
    l_yes = float(response.logits[TOKEN_YES]) / temperature
    l_no = float(response.logits[TOKEN_NO]) / temperature
    if not (math.isfinite(l_yes) and math.isfinite(l_no)):
        raise NonFiniteLogit(f"non-finite logit for {response.item_id!r}")
    shift = max(l_yes, l_no)
    e_yes = math.exp(l_yes - shift)
    e_no = math.exp(l_no - shift)
    denom = e_yes + e_no
    return ScorePair(e_yes / denom, e_no / denom)


def _fill(text: str, issue: IssueTag) -> str:
    return text.replace("{issue}", issue.name)


def render_prompt(
    template: PromptTemplate,
    item: VideoItem,
    issue: IssueTag,
    taxonomy: IssueTaxonomy,
    prior_answers: tuple[tuple[QuestionSpec, str], ...] = (),
) -> list[BackendRequest]:
    """Build the backend requests this template can issue right now.

    Independent templates (P1, P2, P4) return all their requests at once.
    The sequential template P3 returns only the next request: the first
    question when ``prior_answers`` is empty, the second (carrying the
    first answer) once one answer is available.
    """
    taxonomy.require(issue)
    if prior_answers and not template.sequential:
        raise ConfigInvalid(
            f"template {template.id.value} takes no prior answers (sequential only)"
        )

    def build(q: QuestionSpec, priors: tuple[tuple[QuestionSpec, str], ...]) -> BackendRequest:
        rendered = QuestionSpec(
            target=q.target,
            text=_fill(q.text, issue),
            preamble=None if q.preamble is None else _fill(q.preamble, issue),
        )
        return BackendRequest(
            item_id=item.id,
            embedding=item.embedding,
            caption=item.caption,
            question=rendered,
            prior_answers=priors,
        )

    if not template.sequential:
        return [build(q, ()) for q in template.questions]
    asked = len(prior_answers)
    if asked >= template.arity:
        raise ConfigInvalid(
            f"template {template.id.value} has only {template.arity} questions"
        )
    return [build(template.questions[asked], tuple(prior_answers))]


def answer_token(score: ScorePair) -> str:
    """The single-token label implied by the probabilities (ties answer N)."""
    return TOKEN_YES if score.p_yes > 0.5 else TOKEN_NO


def _call_with_retries(
    backend: RankerBackend, request: BackendRequest, max_retries: int
) -> BackendResponse:
    attempts = max_retries + 1
    last: BackendUnavailable | None = None
    for _ in range(attempts):
        try:
            response = backend.answer(request)
            break
        except BackendUnavailable as exc:
            last = exc
    else:
        raise BackendUnavailable(
            f"backend {backend.name!r} unavailable for item {request.item_id!r} "
            f"after {attempts} attempts"
        ) from last
    if response.item_id != request.item_id:
        raise BackendMalformed(
            f"backend echoed {response.item_id!r} for request {request.item_id!r}"
        )
    return response


def rank(
    item: VideoItem,
    template: PromptTemplate,
    backend: RankerBackend,
    fusion_cfg: FusionConfig,
    *,
    issue: IssueTag,
    taxonomy: IssueTaxonomy,
    temperature: float = 1.0,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> RankerVerdict:
    """Ask every question of the template and fuse the answers.

    Single-question templates score by the overall-question p_yes directly;
    two-question templates go through the configured fusion method. A
    backend that stays unavailable raises; no partial verdict is produced.
    """
    per_question: dict[QuestionTarget, ScorePair] = {}
    answered: list[tuple[QuestionSpec, str]] = []
    if template.sequential:
        for _ in range(template.arity):
            request = render_prompt(
                template, item, issue, taxonomy, prior_answers=tuple(answered)
            )[0]
            score = transform_logits(
                _call_with_retries(backend, request, max_retries), temperature
            )
            per_question[request.question.target] = score
            answered.append((request.question, answer_token(score)))
    else:
        for request in render_prompt(template, item, issue, taxonomy):
            score = transform_logits(
                _call_with_retries(backend, request, max_retries), temperature
            )
            per_question[request.question.target] = score

    if template.arity == 1:
        final = per_question[QuestionTarget.OVERALL_ACTIONABLE].p_yes
    else:
        final = fuse(
            per_question[QuestionTarget.FINE_GRAINED_ISSUE].p_yes,
            per_question[QuestionTarget.OVERALL_ACTIONABLE].p_yes,
            fusion_cfg,
        )
    return RankerVerdict(
        item_id=item.id,
        per_question=per_question,
        final_score=final,
        template_id=template.id,
        backend_name=backend.name,
    )
