"""End-to-end cascade orchestration: validate, route, rank, fuse, persist.

A run consumes an item stream against a seed-bank snapshot under one
``RunConfig`` and emits exactly one ``DecisionRecord`` per item, in input
order. Records carry the config fingerprint and bank version, so decision
logs are auditable and reruns with identical inputs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .backends import HttpBackend, MockBackend
from .core import (
    EmbeddingVector,
    IssueTag,
    IssueTaxonomy,
    ModerationLabel,
    VideoItem,
    check_unique_ids,
    validate_item,
)
from .errors import (
    BackendUnavailable,
    ConfigInvalid,
    EmptyBank,
    MalformedRecord,
    OutOfRange,
    StreamMismatch,
    InconsistentStreams,
)
from .fusion import FusionConfig, FusionMethod
from .ranker import (
    PromptTemplate,
    RankerBackend,
    RankerVerdict,
    TemplateId,
    default_templates,
    rank,
)
from .records import (
    _iter_records,
    decision_from_record,
    decision_to_record,
    dumps_record,
    verdict_from_record,
    verdict_to_record,
)
from .router import RouterDecision, SeedBank, calibrate_threshold, route

logger = logging.getLogger(__name__)

LOG_SCHEMA_VERSION = 1


class FinalState(Enum):
    FILTERED = "filtered"
    ACTIONED = "actioned"
    CLEARED = "cleared"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class RunConfig:
    """Everything one cascade run depends on, fingerprintable.

    Exactly one of ``router_threshold`` and ``target_pass_rate`` must be
    set; the latter triggers calibration against the input stream.
    """

    embedding_dim: int
    template_id: TemplateId
    fusion: FusionConfig
    action_threshold: float
    backend: Mapping[str, object]
    router_threshold: float | None = None
    target_pass_rate: float | None = None
    temperature: float = 1.0
    rng_seed: int = 0
    in_flight_limit: int = 8
    batch_size: int = 256

    def validate(self) -> None:
        if self.embedding_dim < 1:
            raise ConfigInvalid(f"embedding_dim must be positive, got {self.embedding_dim}")
        if (self.router_threshold is None) == (self.target_pass_rate is None):
            raise ConfigInvalid(
                "exactly one of router_threshold and target_pass_rate must be set"
            )
        if self.target_pass_rate is not None and not (0.0 < self.target_pass_rate < 1.0):
            raise ConfigInvalid(f"target_pass_rate {self.target_pass_rate} outside (0, 1)")
        if not (0.0 <= self.action_threshold <= 1.0):
            raise ConfigInvalid(f"action_threshold {self.action_threshold} outside [0, 1]")
        if self.temperature <= 0.0:
            raise ConfigInvalid(f"temperature must be positive, got {self.temperature}")
        if self.in_flight_limit < 1 or self.batch_size < 1:
            raise ConfigInvalid("in_flight_limit and batch_size must be >= 1")
        if "kind" not in self.backend:
            raise ConfigInvalid("backend spec needs a 'kind' key")

    def to_dict(self) -> dict:
        return {
            "embedding_dim": self.embedding_dim,
            "template_id": self.template_id.value,
            "fusion": {"method": self.fusion.method.value, "weight": self.fusion.weight},
            "action_threshold": self.action_threshold,
            "backend": dict(self.backend),
            "router_threshold": self.router_threshold,
            "target_pass_rate": self.target_pass_rate,
            "temperature": self.temperature,
            "rng_seed": self.rng_seed,
            "in_flight_limit": self.in_flight_limit,
            "batch_size": self.batch_size,
        }

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunConfig":
        try:
            fusion_raw = data.get("fusion", {})
            cfg = cls(
                embedding_dim=int(data["embedding_dim"]),
                template_id=TemplateId(data["template_id"]),
                fusion=FusionConfig(
                    method=FusionMethod(fusion_raw.get("method", "weighted_sum")),
                    weight=float(fusion_raw.get("weight", 0.5)),
                ),
                action_threshold=float(data["action_threshold"]),
                backend=dict(data["backend"]),
                router_threshold=(
                    None if data.get("router_threshold") is None else float(data["router_threshold"])
                ),
                target_pass_rate=(
                    None if data.get("target_pass_rate") is None else float(data["target_pass_rate"])
                ),
                temperature=float(data.get("temperature", 1.0)),
                rng_seed=int(data.get("rng_seed", 0)),
                in_flight_limit=int(data.get("in_flight_limit", 8)),
                batch_size=int(data.get("batch_size", 256)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad run config: {exc}") from exc
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class DecisionRecord:
    """The audit-log entry for one item."""

    item_id: str
    router: RouterDecision
    verdict: RankerVerdict | None
    final: FinalState
    config_fingerprint: str
    bank_version: int


def build_backend(spec: Mapping[str, object], stream: Sequence[VideoItem]) -> RankerBackend:
    """Instantiate the backend named by a config spec.

    ``{"kind": "mock", ...}`` builds the deterministic mock, taking truth
    from the stream's embedded labels; ``{"kind": "http", "url": ...}``
    builds the wire-protocol client.
    """
    kind = spec.get("kind")
    if kind == "mock":
        truth = {item.id: item.truth for item in stream if item.truth is not None}
        if not truth:
            raise ConfigInvalid("mock backend requires ground-truth labels in the stream")
        try:
            return MockBackend(
                truth=truth,
                accuracy=float(spec.get("accuracy", 0.9)),
                noise_seed=int(spec.get("noise_seed", 0)),
                gap=float(spec.get("gap", 4.0)),
                gap_jitter=float(spec.get("gap_jitter", 0.0)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad mock backend spec: {exc}") from exc
    if kind == "http":
        url = spec.get("url")
        if not isinstance(url, str) or not url:
            raise ConfigInvalid("http backend spec needs a non-empty 'url'")
        return HttpBackend(url=url, timeout=float(spec.get("timeout", 10.0)))
    raise ConfigInvalid(f"unknown backend kind {kind!r}")


def _chunks(seq: list, size: int) -> Iterator[list]:
    for start in range(0, len(seq), size):
        yield seq[start : start + size]


def run_cascade(
    stream: Sequence[VideoItem],
    bank: SeedBank,
    cfg: RunConfig,
    backend: RankerBackend | None = None,
    templates: Mapping[TemplateId, PromptTemplate] | None = None,
) -> list[DecisionRecord]:
    """Run the full cascade over a stream.

    Every input item yields exactly one record, in input order. The ranker
    runs only for router-passed items, concurrently up to the in-flight
    limit; an item whose backend stays unavailable is recorded as
    undecided and the run continues.
    """
    cfg.validate()
    if not bank.entries:
        raise EmptyBank("run requires a non-empty seed bank")
    items = [validate_item(item, cfg.embedding_dim) for item in stream]
    check_unique_ids(items)
    if backend is None:
        backend = build_backend(cfg.backend, items)
    template = (templates or default_templates())[cfg.template_id]
    fingerprint = cfg.fingerprint()

    if cfg.router_threshold is not None:
        threshold = cfg.router_threshold
    else:
        threshold = calibrate_threshold(items, bank, cfg.target_pass_rate)
        logger.info("calibrated router threshold %.6f for target %.4f",
                    threshold, cfg.target_pass_rate)

    decisions = [route(item, bank, threshold) for item in items]
    taxonomy = IssueTaxonomy(tuple(sorted({e.issue for e in bank.entries}, key=lambda t: t.id)))

    def rank_one(job: tuple[VideoItem, IssueTag]) -> RankerVerdict | None:
        item, issue = job
        try:
            return rank(
                item,
                template,
                backend,
                cfg.fusion,
                issue=issue,
                taxonomy=taxonomy,
                temperature=cfg.temperature,
            )
        except BackendUnavailable:
            logger.warning("backend unavailable for item %s; recording undecided", item.id)
            return None

    jobs = [
        (item, bank.get(decision.best_seed_id).issue)
        for item, decision in zip(items, decisions)
        if decision.passed
    ]
    verdicts: list[RankerVerdict | None] = []
    if jobs:
        with ThreadPoolExecutor(max_workers=cfg.in_flight_limit) as pool:
            for batch in _chunks(jobs, cfg.batch_size):
                verdicts.extend(pool.map(rank_one, batch))

    records: list[DecisionRecord] = []
    ranked = iter(verdicts)
    for item, decision in zip(items, decisions):
        if not decision.passed:
            records.append(
                DecisionRecord(item.id, decision, None, FinalState.FILTERED, fingerprint, bank.version)
            )
            continue
        verdict = next(ranked)
        if verdict is None:
            final = FinalState.UNDECIDED
        elif verdict.final_score >= cfg.action_threshold:
            final = FinalState.ACTIONED
        else:
            final = FinalState.CLEARED
        records.append(
            DecisionRecord(item.id, decision, verdict, final, fingerprint, bank.version)
        )
    return records


# --- synthetic traffic ---------------------------------------------------------


def simulate_stream(
    n: int,
    taxonomy: IssueTaxonomy,
    violation_rate: float,
    cluster_spread: float,
    rng_seed: int,
    *,
    dim: int,
    actionable_rate: float = 0.8,
    lookalike_rate: float = 0.05,
    corpus_per_issue: int = 8,
    center_seed: int = 0,
    id_prefix: str = "item",
) -> tuple[list[VideoItem], list[tuple[EmbeddingVector, IssueTag]]]:
    """Deterministic synthetic traffic plus a labeled high-risk corpus.

    Violating items cluster around per-issue unit-sphere centers with the
    given spread and carry an issue tag (actionable with probability
    ``actionable_rate``; the rest are borderline). Benign items are mostly
    a diffuse background, with a ``lookalike_rate`` fraction of harmless
    near-cluster lookalikes so the router sees realistic false positives.

    Issue centers depend only on ``center_seed``, so streams with
    different ``rng_seed`` but one ``center_seed`` form one family and
    thresholds calibrated on one stream transfer to the others.
    """
    if not (0.0 < violation_rate < 1.0):
        raise OutOfRange(f"violation_rate must be in (0, 1), got {violation_rate}")
    if not (0.0 <= lookalike_rate < 1.0) or not (0.0 <= actionable_rate <= 1.0):
        raise OutOfRange("actionable_rate in [0, 1] and lookalike_rate in [0, 1) required")
    if cluster_spread < 0.0:
        raise OutOfRange(f"cluster_spread must be >= 0, got {cluster_spread}")
    if dim < 2:
        raise OutOfRange(f"dim must be >= 2, got {dim}")
    if n < 0 or corpus_per_issue < 1:
        raise OutOfRange("n must be >= 0 and corpus_per_issue >= 1")

    issues = tuple(taxonomy)
    center_rng = np.random.default_rng(center_seed)
    centers = center_rng.normal(size=(len(issues), dim))
    centers /= np.linalg.norm(centers, axis=1)[:, None]

    rng = np.random.default_rng(rng_seed)
    u_class = rng.random(n)
    issue_idx = rng.integers(0, len(issues), size=n)
    u_lookalike = rng.random(n)
    u_actionable = rng.random(n)
    noise = rng.normal(size=(n, dim))

    # harmless lookalikes sit near a cluster but clearly off-center
    lookalike_spread = 3.0 * cluster_spread + 0.08

    items: list[VideoItem] = []
    for i in range(n):
        violating = u_class[i] < violation_rate
        if violating:
            raw = centers[issue_idx[i]] + cluster_spread * noise[i]
            truth = ModerationLabel(
                issue=issues[issue_idx[i]],
                actionable=bool(u_actionable[i] < actionable_rate),
            )
        elif u_lookalike[i] < lookalike_rate:
            raw = centers[issue_idx[i]] + lookalike_spread * noise[i]
            truth = ModerationLabel(issue=None, actionable=False)
        else:
            raw = noise[i]
            truth = ModerationLabel(issue=None, actionable=False)
        norm = float(np.linalg.norm(raw))
        if norm == 0.0:  # measure-zero; keep the generator total anyway
            raw = centers[issue_idx[i]]
            norm = 1.0
        items.append(
            VideoItem(
                id=f"{id_prefix}-{i:06d}",
                embedding=EmbeddingVector(tuple(float(v) for v in raw / norm)),
                truth=truth,
            )
        )

    corpus: list[tuple[EmbeddingVector, IssueTag]] = []
    corpus_noise = rng.normal(size=(len(issues) * corpus_per_issue, dim))
    row = 0
    for j, issue in enumerate(issues):
        for _ in range(corpus_per_issue):
            raw = centers[j] + cluster_spread * corpus_noise[row]
            row += 1
            norm = float(np.linalg.norm(raw))
            if norm == 0.0:
                raw, norm = centers[j], 1.0
            corpus.append((EmbeddingVector(tuple(float(v) for v in raw / norm)), issue))
    return items, corpus


# --- run comparison --------------------------------------------------------------


@dataclass(frozen=True)
class CompareReport:
    """Action-volume and precision deltas between two runs on one stream."""

    baseline_actions: int
    candidate_actions: int
    action_volume_change_pct: float | None
    baseline_precision: float | None
    candidate_precision: float | None
    precision_delta: float | None


def _actioned_ids(records: Sequence[DecisionRecord]) -> list[str]:
    return [r.item_id for r in records if r.final is FinalState.ACTIONED]


def _precision(actioned: Sequence[str], truth: Mapping[str, ModerationLabel]) -> float | None:
    if not actioned:
        return None
    flags = []
    for item_id in actioned:
        label = truth.get(item_id)
        if label is None:
            raise InconsistentStreams(f"truth missing for actioned item {item_id!r}")
        flags.append(label.actionable)
    return sum(flags) / len(flags)


def compare_runs(
    baseline: Sequence[DecisionRecord],
    candidate: Sequence[DecisionRecord],
    truth: Mapping[str, ModerationLabel],
) -> CompareReport:
    """Relative action-volume change and absolute precision change.

    Both runs must cover the same item ids. A baseline with zero actions
    reports the volume change as absent rather than infinite.
    """
    base_ids = {r.item_id for r in baseline}
    cand_ids = {r.item_id for r in candidate}
    if base_ids != cand_ids:
        raise StreamMismatch(
            f"runs cover different streams ({len(base_ids)} vs {len(cand_ids)} ids, "
            f"{len(base_ids & cand_ids)} shared)"
        )
    base_actions = _actioned_ids(baseline)
    cand_actions = _actioned_ids(candidate)
    volume_change = None
    if base_actions:
        volume_change = 100.0 * (len(cand_actions) - len(base_actions)) / len(base_actions)
    base_precision = _precision(base_actions, truth)
    cand_precision = _precision(cand_actions, truth)
    delta = None
    if base_precision is not None and cand_precision is not None:
        delta = cand_precision - base_precision
    return CompareReport(
        baseline_actions=len(base_actions),
        candidate_actions=len(cand_actions),
        action_volume_change_pct=volume_change,
        baseline_precision=base_precision,
        candidate_precision=cand_precision,
        precision_delta=delta,
    )


# --- decision-log persistence ------------------------------------------------------


def record_to_dict(record: DecisionRecord) -> dict:
    return {
        "item_id": record.item_id,
        "final": record.final.value,
        "config_fingerprint": record.config_fingerprint,
        "bank_version": record.bank_version,
        "router": decision_to_record(record.router),
        "verdict": None if record.verdict is None else verdict_to_record(record.verdict),
    }


def record_from_dict(data: dict, where: str = "") -> DecisionRecord:
    try:
        return DecisionRecord(
            item_id=str(data["item_id"]),
            router=decision_from_record(data["router"], where),
            verdict=None if data["verdict"] is None else verdict_from_record(data["verdict"], where),
            final=FinalState(data["final"]),
            config_fingerprint=str(data["config_fingerprint"]),
            bank_version=int(data["bank_version"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(f"{where}: bad decision record: {exc}") from exc


def decision_log_lines(records: Sequence[DecisionRecord]) -> Iterator[str]:
    """Serialized log lines, header first; stable bytes for stable inputs."""
    yield dumps_record({"kind": "decision_log", "schema": LOG_SCHEMA_VERSION})
    for record in records:
        yield dumps_record(record_to_dict(record))


def write_decision_log(path: Path, records: Sequence[DecisionRecord]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for line in decision_log_lines(records):
            handle.write(line)
            handle.write("\n")


def read_decision_log(path: Path) -> list[DecisionRecord]:
    rows = list(_iter_records(path))
    if not rows or rows[0][1].get("kind") != "decision_log":
        raise MalformedRecord(f"{path}: missing decision_log header record")
    return [record_from_dict(data, where=f"{path}:{lineno}") for lineno, data in rows[1:]]
