"""Line-record (JSONL) persistence for streams, corpora, banks, decisions, verdicts.

Every file is one JSON object per line. Floats are written with Python's
shortest round-trip repr, so ``parse(serialize(x)) == x`` bit-exactly.
Files that need context carry a header record as their first line.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .core import (
    EmbeddingVector,
    IssueTag,
    IssueTaxonomy,
    ModerationLabel,
    QuestionTarget,
    ScorePair,
    VideoItem,
)
from .errors import MalformedRecord, UnknownIssue
from .ranker import RankerVerdict, TemplateId
from .router import Provenance, RouterDecision, SeedBank, SeedEntry

BANK_SCHEMA_VERSION = 1
DECISIONS_SCHEMA_VERSION = 1


def dumps_record(record: Mapping) -> str:
    return json.dumps(record, sort_keys=True, allow_nan=False, separators=(",", ":"))


def _iter_records(path: Path) -> Iterator[tuple[int, dict]]:
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise MalformedRecord(f"{path}:{lineno}: record is not an object")
            yield lineno, record


def _write_lines(path: Path, records: Iterable[Mapping]) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(dumps_record(record))
            handle.write("\n")


# --- item streams ------------------------------------------------------------


def item_to_record(item: VideoItem, taxonomy: IssueTaxonomy) -> dict:
    record: dict = {"id": item.id, "embedding": list(item.embedding.values)}
    if item.caption is not None:
        record["caption"] = item.caption
    if item.truth is not None:
        if item.truth.issue is not None:
            taxonomy.require(item.truth.issue)
        record["truth"] = {
            "issue_id": None if item.truth.issue is None else item.truth.issue.id,
            "actionable": item.truth.actionable,
        }
    return record


def item_from_record(record: dict, taxonomy: IssueTaxonomy, where: str = "") -> VideoItem:
    try:
        truth = None
        if "truth" in record:
            raw = record["truth"]
            issue = None if raw["issue_id"] is None else taxonomy.by_id(int(raw["issue_id"]))
            truth = ModerationLabel(issue=issue, actionable=bool(raw["actionable"]))
        return VideoItem(
            id=str(record["id"]),
            embedding=EmbeddingVector(tuple(record["embedding"])),
            caption=record.get("caption"),
            truth=truth,
        )
    except UnknownIssue:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(f"{where}: bad item record: {exc}") from exc


def write_items(path: Path, items: Sequence[VideoItem], taxonomy: IssueTaxonomy | None = None) -> None:
    taxonomy = taxonomy or IssueTaxonomy.default()
    _write_lines(path, (item_to_record(item, taxonomy) for item in items))


def read_items(path: Path, taxonomy: IssueTaxonomy | None = None) -> list[VideoItem]:
    taxonomy = taxonomy or IssueTaxonomy.default()
    return [
        item_from_record(record, taxonomy, where=f"{path}:{lineno}")
        for lineno, record in _iter_records(path)
    ]


def truth_map_from_items(items: Sequence[VideoItem]) -> dict[str, ModerationLabel]:
    return {item.id: item.truth for item in items if item.truth is not None}


# --- seed-selection corpora ---------------------------------------------------


def write_corpus(path: Path, corpus: Sequence[tuple[EmbeddingVector, IssueTag]]) -> None:
    _write_lines(
        path,
        (
            {"embedding": list(emb.values), "issue_id": tag.id, "issue_name": tag.name}
            for emb, tag in corpus
        ),
    )


def read_corpus(path: Path) -> list[tuple[EmbeddingVector, IssueTag]]:
    corpus = []
    for lineno, record in _iter_records(path):
        try:
            corpus.append(
                (
                    EmbeddingVector(tuple(record["embedding"])),
                    IssueTag(int(record["issue_id"]), str(record["issue_name"])),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"{path}:{lineno}: bad corpus record: {exc}") from exc
    return corpus


# --- seed banks ---------------------------------------------------------------


def write_bank(path: Path, bank: SeedBank) -> None:
    def records() -> Iterator[dict]:
        yield {
            "kind": "seed_bank",
            "schema": BANK_SCHEMA_VERSION,
            "dim": bank.dim,
            "version": bank.version,
        }
        for entry in bank.entries:
            yield {
                "seed_id": entry.seed_id,
                "embedding": list(entry.embedding.values),
                "issue_id": entry.issue.id,
                "issue_name": entry.issue.name,
                "provenance": entry.provenance.value,
                "created_at": entry.created_at,
            }

    _write_lines(path, records())


def read_bank(path: Path) -> SeedBank:
    rows = list(_iter_records(path))
    if not rows or rows[0][1].get("kind") != "seed_bank":
        raise MalformedRecord(f"{path}: missing seed_bank header record")
    header = rows[0][1]
    entries = []
    for lineno, record in rows[1:]:
        try:
            entries.append(
                SeedEntry(
                    seed_id=str(record["seed_id"]),
                    embedding=EmbeddingVector(tuple(record["embedding"])),
                    issue=IssueTag(int(record["issue_id"]), str(record["issue_name"])),
                    provenance=Provenance(record["provenance"]),
                    created_at=float(record["created_at"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(f"{path}:{lineno}: bad seed record: {exc}") from exc
    try:
        return SeedBank(dim=int(header["dim"]), entries=tuple(entries), version=int(header["version"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(f"{path}: bad bank header: {exc}") from exc


# --- router decisions -----------------------------------------------------------


def decision_to_record(decision: RouterDecision) -> dict:
    return {
        "item_id": decision.item_id,
        "max_similarity": decision.max_similarity,
        "best_seed_id": decision.best_seed_id,
        "passed": decision.passed,
    }


def decision_from_record(record: dict, where: str = "") -> RouterDecision:
    try:
        return RouterDecision(
            item_id=str(record["item_id"]),
            max_similarity=float(record["max_similarity"]),
            best_seed_id=record["best_seed_id"],
            passed=bool(record["passed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecord(f"{where}: bad router decision: {exc}") from exc


def write_router_decisions(
    path: Path,
    decisions: Sequence[RouterDecision],
    *,
    threshold: float,
    bank_version: int,
) -> None:
    def records() -> Iterator[dict]:
        yield {
            "kind": "router_decisions",
            "schema": DECISIONS_SCHEMA_VERSION,
            "threshold": threshold,
            "bank_version": bank_version,
        }
        for decision in decisions:
            yield decision_to_record(decision)

    _write_lines(path, records())


def read_router_decisions(path: Path) -> tuple[dict, list[RouterDecision]]:
    rows = list(_iter_records(path))
    if not rows or rows[0][1].get("kind") != "router_decisions":
        raise MalformedRecord(f"{path}: missing router_decisions header record")
    header = rows[0][1]
    decisions = [
        decision_from_record(record, where=f"{path}:{lineno}") for lineno, record in rows[1:]
    ]
    return header, decisions


# --- ranker verdicts -------------------------------------------------------------


def verdict_to_record(verdict: RankerVerdict) -> dict:
    return {
        "item_id": verdict.item_id,
        "template_id": verdict.template_id.value,
        "backend_name": verdict.backend_name,
        "final_score": verdict.final_score,
        "per_question": {
            target.value: {"p_yes": pair.p_yes, "p_no": pair.p_no}
            for target, pair in sorted(verdict.per_question.items(), key=lambda kv: kv[0].value)
        },
    }


def verdict_from_record(record: dict, where: str = "") -> RankerVerdict:
    try:
        per_question = {
            QuestionTarget(target): ScorePair(pair["p_yes"], pair["p_no"])
            for target, pair in record["per_question"].items()
        }
        return RankerVerdict(
            item_id=str(record["item_id"]),
            per_question=per_question,
            final_score=float(record["final_score"]),
            template_id=TemplateId(record["template_id"]),
            backend_name=str(record["backend_name"]),
        )
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise MalformedRecord(f"{where}: bad verdict record: {exc}") from exc


def write_verdicts(path: Path, verdicts: Sequence[RankerVerdict]) -> None:
    _write_lines(path, (verdict_to_record(v) for v in verdicts))


def read_verdicts(path: Path) -> list[RankerVerdict]:
    return [
        verdict_from_record(record, where=f"{path}:{lineno}")
        for lineno, record in _iter_records(path)
    ]
