"""Command-line interface for the moderation cascade.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 backend
error (including failed conformance). Files are JSONL throughout; see
the records module for schemas.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import conformance, fusion, metrics, pipeline, records
from .backends import HttpBackend, MockBackend
from .core import EmbeddingVector, IssueTaxonomy, QuestionTarget
from .errors import (
    BackendError,
    CascadeError,
    ConfigInvalid,
    DataError,
    InconsistentStreams,
)
from .fusion import FusionConfig, FusionMethod, FusionSample
from .ranker import TemplateId, default_templates, load_templates, rank
from .router import (
    Provenance,
    SeedBank,
    SeedEntry,
    add_manual_seed,
    calibrate_threshold,
    remove_seed,
    route,
    select_seeds_centroid,
)

logger = logging.getLogger("modcascade")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BACKEND = 4


def _taxonomy(args: argparse.Namespace) -> IssueTaxonomy:
    return IssueTaxonomy.default(getattr(args, "taxonomy_size", 12))


def _parse_backend_spec(spec: str) -> dict:
    """Parse ``mock[:key=value,...]`` or an http(s) URL into a backend spec."""
    if spec.startswith(("http://", "https://")):
        return {"kind": "http", "url": spec}
    name, _, options = spec.partition(":")
    if name != "mock":
        raise ConfigInvalid(f"unknown backend spec {spec!r} (use 'mock[:k=v,...]' or a URL)")
    parsed: dict = {"kind": "mock"}
    if options:
        for pair in options.split(","):
            key, _, value = pair.partition("=")
            if not key or not value:
                raise ConfigInvalid(f"bad backend option {pair!r}")
            parsed[key] = value
    return parsed


# --- subcommand handlers ------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    taxonomy = _taxonomy(args)
    items, corpus = pipeline.simulate_stream(
        args.n,
        taxonomy,
        args.violation_rate,
        args.cluster_spread,
        args.seed,
        dim=args.dim,
        actionable_rate=args.actionable_rate,
        lookalike_rate=args.lookalike_rate,
        corpus_per_issue=args.corpus_per_issue,
        center_seed=args.center_seed,
    )
    records.write_items(Path(args.out_stream), items, taxonomy)
    if args.out_corpus:
        records.write_corpus(Path(args.out_corpus), corpus)
    print(f"wrote {len(items)} items to {args.out_stream}"
          + (f", {len(corpus)} corpus entries to {args.out_corpus}" if args.out_corpus else ""))
    return 0


def cmd_seed_select(args: argparse.Namespace) -> int:
    corpus = records.read_corpus(Path(args.corpus))
    seeds = select_seeds_centroid(corpus, args.k, args.seed)
    dim = corpus[0][0].dim if corpus else 0
    bank = SeedBank.create(dim=dim, entries=seeds)
    records.write_bank(Path(args.out), bank)
    print(f"selected {len(seeds)} seeds into {args.out} (bank version {bank.version})")
    return 0


def cmd_seed_add(args: argparse.Namespace) -> int:
    bank = records.read_bank(Path(args.bank))
    taxonomy = _taxonomy(args)
    entry = SeedEntry(
        seed_id=args.seed_id,
        embedding=EmbeddingVector(tuple(float(v) for v in args.embedding.split(","))),
        issue=taxonomy.by_id(args.issue_id),
        provenance=Provenance.MANUAL_GOLDEN,
        created_at=args.created_at if args.created_at is not None else time.time(),
    )
    updated = add_manual_seed(bank, entry)
    records.write_bank(Path(args.out or args.bank), updated)
    print(f"added seed {args.seed_id!r}; bank version {updated.version}")
    return 0


def cmd_seed_remove(args: argparse.Namespace) -> int:
    bank = records.read_bank(Path(args.bank))
    updated = remove_seed(bank, args.seed_id)
    records.write_bank(Path(args.out or args.bank), updated)
    print(f"removed seed {args.seed_id!r}; bank version {updated.version}")
    return 0


def cmd_route(args: argparse.Namespace) -> int:
    bank = records.read_bank(Path(args.bank))
    items = records.read_items(Path(args.stream), _taxonomy(args))
    decisions = [route(item, bank, args.threshold) for item in items]
    records.write_router_decisions(
        Path(args.out), decisions, threshold=args.threshold, bank_version=bank.version
    )
    passed = sum(d.passed for d in decisions)
    print(f"routed {len(decisions)} items; {passed} passed ({passed / max(len(decisions), 1):.4f})")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    bank = records.read_bank(Path(args.bank))
    sample = records.read_items(Path(args.sample), _taxonomy(args))
    threshold = calibrate_threshold(sample, bank, args.target_pass_rate)
    print(repr(threshold))
    return 0


def cmd_rank(args: argparse.Namespace) -> int:
    # config parsing first, so misconfiguration is reported before any file I/O
    spec = _parse_backend_spec(args.backend)
    templates = load_templates(Path(args.templates)) if args.templates else default_templates()
    template = templates[TemplateId(args.template)]
    fusion_cfg = FusionConfig(FusionMethod(args.fusion), weight=args.weight)

    taxonomy = _taxonomy(args)
    bank = records.read_bank(Path(args.bank))
    items = records.read_items(Path(args.stream), taxonomy)
    _header, decisions = records.read_router_decisions(Path(args.decisions))
    by_id = {item.id: item for item in items}
    if spec["kind"] == "mock":
        backend = MockBackend(
            truth=records.truth_map_from_items(items),
            accuracy=float(spec.get("accuracy", 0.9)),
            noise_seed=int(spec.get("noise_seed", 0)),
            gap=float(spec.get("gap", 4.0)),
            gap_jitter=float(spec.get("gap_jitter", 0.0)),
        )
    else:
        backend = HttpBackend(url=spec["url"])

    verdicts = []
    for decision in decisions:
        if not decision.passed:
            continue
        item = by_id.get(decision.item_id)
        if item is None:
            raise InconsistentStreams(f"decision for unknown item {decision.item_id!r}")
        issue = bank.get(decision.best_seed_id).issue
        verdicts.append(
            rank(item, template, backend, fusion_cfg, issue=issue, taxonomy=taxonomy)
        )
    records.write_verdicts(Path(args.out), verdicts)
    print(f"ranked {len(verdicts)} items with template {args.template} into {args.out}")
    return 0


def _truth_from_file(path: Path, taxonomy: IssueTaxonomy) -> dict:
    items = records.read_items(path, taxonomy)
    truth = records.truth_map_from_items(items)
    if not truth:
        raise DataError(f"{path} carries no ground-truth labels")
    return truth


def cmd_fuse_sweep(args: argparse.Namespace) -> int:
    taxonomy = _taxonomy(args)
    verdicts = records.read_verdicts(Path(args.verdicts))
    truth = _truth_from_file(Path(args.truth), taxonomy)
    samples = []
    for v in verdicts:
        label = truth.get(v.item_id)
        if label is None:
            raise InconsistentStreams(f"truth missing for verdict item {v.item_id!r}")
        fine = v.per_question.get(QuestionTarget.FINE_GRAINED_ISSUE)
        overall = v.per_question.get(QuestionTarget.OVERALL_ACTIONABLE)
        samples.append(
            FusionSample(
                item_id=v.item_id,
                p_fine=None if fine is None else fine.p_yes,
                p_overall=None if overall is None else overall.p_yes,
                truth_actionable=label.actionable,
            )
        )
    rows = fusion.fusion_sweep(samples, fusion.all_methods(weight=args.weight))
    print("Method\tPR-AUC\tROC-AUC\tMax-F1")
    for row in rows:
        print(f"{row.label}\t{100 * row.pr_auc:.2f}\t{100 * row.roc_auc:.2f}\t{100 * row.max_f1:.2f}")
    if args.out:
        payload = [
            {"method": row.method.value, "label": row.label, "pr_auc": row.pr_auc,
             "roc_auc": row.roc_auc, "max_f1": row.max_f1}
            for row in rows
        ]
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return 0


def _print_eval_report(report: metrics.EvalReport) -> None:
    for key, value in metrics.CONVENTIONS.items():
        print(f"# {key}={value}")
    print("PR-AUC\tROC-AUC\tMax-F1")
    print(f"{100 * report.pr_auc:.2f}\t{100 * report.roc_auc:.2f}\t{100 * report.max_f1:.2f}")
    print(f"# max_f1_threshold={report.max_f1_threshold!r} n_pos={report.n_pos} n_neg={report.n_neg}")


def cmd_evaluate(args: argparse.Namespace) -> int:
    taxonomy = _taxonomy(args)
    verdicts = records.read_verdicts(Path(args.verdicts))
    truth = _truth_from_file(Path(args.truth), taxonomy)
    samples = []
    for v in verdicts:
        label = truth.get(v.item_id)
        if label is None:
            raise InconsistentStreams(f"truth missing for verdict item {v.item_id!r}")
        samples.append(metrics.ScoredSample(v.item_id, v.final_score, label.actionable))
    report = metrics.evaluate_scores(samples)
    _print_eval_report(report)
    if args.out:
        payload = {
            "pr_auc": report.pr_auc,
            "roc_auc": report.roc_auc,
            "max_f1": report.max_f1,
            "max_f1_threshold": report.max_f1_threshold,
            "n_pos": report.n_pos,
            "n_neg": report.n_neg,
            "conventions": metrics.CONVENTIONS,
        }
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    taxonomy = _taxonomy(args)
    try:
        config_data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"config file is not valid JSON: {exc}") from exc
    cfg = pipeline.RunConfig.from_dict(config_data)
    bank = records.read_bank(Path(args.bank))
    items = records.read_items(Path(args.stream), taxonomy)
    run_records = pipeline.run_cascade(items, bank, cfg)
    pipeline.write_decision_log(Path(args.out), run_records)
    by_final = {}
    for record in run_records:
        by_final[record.final.value] = by_final.get(record.final.value, 0) + 1
    print(f"processed {len(run_records)} items into {args.out}: "
          + ", ".join(f"{k}={v}" for k, v in sorted(by_final.items())))
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    taxonomy = _taxonomy(args)
    baseline = pipeline.read_decision_log(Path(args.baseline))
    candidate = pipeline.read_decision_log(Path(args.candidate))
    truth = _truth_from_file(Path(args.truth), taxonomy)
    report = pipeline.compare_runs(baseline, candidate, truth)

    def fmt(value, pattern="{:+.2f}") -> str:
        return "n/a" if value is None else pattern.format(value)

    print(f"baseline actions:  {report.baseline_actions}")
    print(f"candidate actions: {report.candidate_actions}")
    print(f"action volume change: {fmt(report.action_volume_change_pct)}%")
    print(f"baseline precision:  {fmt(report.baseline_precision, '{:.4f}')}")
    print(f"candidate precision: {fmt(report.candidate_precision, '{:.4f}')}")
    print(f"precision delta: {fmt(report.precision_delta, '{:+.4f}')}")
    return 0


def cmd_conform(args: argparse.Namespace) -> int:
    spec = _parse_backend_spec(args.backend)
    if spec["kind"] == "mock":
        backend = MockBackend(
            truth={},
            accuracy=float(spec.get("accuracy", 0.9)),
            noise_seed=int(spec.get("noise_seed", 0)),
        )
        deterministic = True
    else:
        backend = HttpBackend(url=spec["url"], timeout=args.timeout)
        deterministic = not args.allow_nondeterministic
    result = conformance.check_backend(
        backend, dim=args.dim, require_deterministic=deterministic, timeout_s=args.timeout
    )
    print(conformance.format_result(result))
    return 0 if result.passed else EXIT_BACKEND


def cmd_demo(args: argparse.Namespace) -> int:
    """Chain simulate -> seed-select -> calibrate -> run -> evaluate -> compare."""
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    taxonomy = _taxonomy(args)

    items, corpus = pipeline.simulate_stream(
        args.n, taxonomy, args.violation_rate, args.cluster_spread, args.seed,
        dim=args.dim,
    )
    records.write_items(workdir / "stream.jsonl", items, taxonomy)
    records.write_corpus(workdir / "corpus.jsonl", corpus)

    seeds = select_seeds_centroid(corpus, args.k, args.seed)
    bank = SeedBank.create(dim=args.dim, entries=seeds)
    records.write_bank(workdir / "bank.jsonl", bank)

    base_backend = {"kind": "mock", "accuracy": args.accuracy,
                    "noise_seed": args.seed, "gap_jitter": 1.5}
    # weight 0.3: the overall question decides action, the fine-grained
    # question adjusts confidence, so issue-positive-but-unactionable
    # items do not land exactly on the action threshold
    common = dict(
        embedding_dim=args.dim,
        template_id=TemplateId(args.template),
        fusion=FusionConfig(FusionMethod.WEIGHTED_SUM, weight=0.3),
        backend=base_backend,
        target_pass_rate=args.target_pass_rate,
    )
    cascade_cfg = pipeline.RunConfig(action_threshold=0.5, **common)
    router_only_cfg = pipeline.RunConfig(action_threshold=0.0, **common)

    cascade_log = pipeline.run_cascade(items, bank, cascade_cfg)
    router_only_log = pipeline.run_cascade(items, bank, router_only_cfg)
    pipeline.write_decision_log(workdir / "log.jsonl", cascade_log)
    pipeline.write_decision_log(workdir / "baseline_log.jsonl", router_only_log)

    truth = records.truth_map_from_items(items)
    verdicts = [r.verdict for r in cascade_log if r.verdict is not None]
    records.write_verdicts(workdir / "verdicts.jsonl", verdicts)

    routed = sum(1 for r in cascade_log if r.router.passed)
    print(f"stream: {len(items)} items, {routed} routed "
          f"(filter rate {1 - routed / len(items):.4f})")
    samples = [
        metrics.ScoredSample(v.item_id, v.final_score, truth[v.item_id].actionable)
        for v in verdicts
    ]
    report = metrics.evaluate_scores(samples)
    _print_eval_report(report)
    compare = pipeline.compare_runs(router_only_log, cascade_log, truth)
    print(f"router-only precision {compare.baseline_precision:.4f} -> "
          f"cascade precision {compare.candidate_precision:.4f} "
          f"(delta {compare.precision_delta:+.4f}, "
          f"action volume change {compare.action_volume_change_pct:+.1f}%)")
    print(f"artifacts in {workdir}/")
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modcascade",
        description="Two-stage content-moderation cascade: router, ranker, fusion, metrics.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic traffic and a seed corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--violation-rate", type=float, default=0.05)
    p.add_argument("--cluster-spread", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--center-seed", type=int, default=0)
    p.add_argument("--taxonomy-size", type=int, default=12)
    p.add_argument("--actionable-rate", type=float, default=0.8)
    p.add_argument("--lookalike-rate", type=float, default=0.05)
    p.add_argument("--corpus-per-issue", type=int, default=8)
    p.add_argument("--out-stream", required=True)
    p.add_argument("--out-corpus")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("seed-select", help="centroid-proximity seed selection from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_seed_select)

    p = sub.add_parser("seed-add", help="append a manual golden seed to a bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--seed-id", required=True)
    p.add_argument("--embedding", required=True, help="comma-separated floats")
    p.add_argument("--issue-id", type=int, required=True)
    p.add_argument("--taxonomy-size", type=int, default=12)
    p.add_argument("--created-at", type=float, default=None)
    p.add_argument("--out", help="output bank file (default: in place)")
    p.set_defaults(func=cmd_seed_add)

    p = sub.add_parser("seed-remove", help="remove a seed from a bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--seed-id", required=True)
    p.add_argument("--out", help="output bank file (default: in place)")
    p.set_defaults(func=cmd_seed_remove)

    p = sub.add_parser("route", help="filter a stream against a seed bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--stream", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--taxonomy-size", type=int, default=12)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("calibrate", help="pick the router threshold for a target pass rate")
    p.add_argument("--bank", required=True)
    p.add_argument("--sample", required=True, help="stream file to calibrate against")
    p.add_argument("--target-pass-rate", type=float, required=True)
    p.add_argument("--taxonomy-size", type=int, default=12)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("rank", help="score router-passed items with a backend")
    p.add_argument("--stream", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--decisions", required=True, help="router decisions file")
    p.add_argument("--template", choices=[t.value for t in TemplateId], default="P2")
    p.add_argument("--templates", help="custom template JSON file")
    p.add_argument("--backend", default="mock", help="'mock[:k=v,...]' or an http URL")
    p.add_argument("--fusion", choices=[m.value for m in FusionMethod], default="weighted_sum")
    p.add_argument("--weight", type=float, default=0.5)
    p.add_argument("--taxonomy-size", type=int, default=12)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("fuse-sweep", help="metric table across the five fusion methods")
    p.add_argument("--verdicts", required=True)
    p.add_argument("--truth", required=True, help="stream file carrying ground truth")
    p.add_argument("--weight", type=float, default=0.5)
    p.add_argument("--taxonomy-size", type=int, default=12)
    p.add_argument("--out", help="also write rows as JSON")
    p.set_defaults(func=cmd_fuse_sweep)

    p = sub.add_parser("evaluate", help="offline metric report for a verdicts file")
    p.add_argument("--verdicts", required=True)
    p.add_argument("--truth", required=True, help="stream file carrying ground truth")
    p.add_argument("--taxonomy-size", type=int, default=12)
    p.add_argument("--out", help="also write the report as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full cascade over a stream, emitting a decision log")
    p.add_argument("--stream", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--config", required=True, help="run config JSON file")
    p.add_argument("--taxonomy-size", type=int, default=12)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="action-volume and precision deltas between two logs")
    p.add_argument("--baseline", required=True)
    p.add_argument("--candidate", required=True)
    p.add_argument("--truth", required=True, help="stream file carrying ground truth")
    p.add_argument("--taxonomy-size", type=int, default=12)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("conform", help="check a backend against the wire contract")
    p.add_argument("--backend", default="mock")
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--allow-nondeterministic", action="store_true")
    p.set_defaults(func=cmd_conform)

    p = sub.add_parser("demo", help="end-to-end walkthrough in a working directory")
    p.add_argument("--workdir", default="demo-run")
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--violation-rate", type=float, default=0.05)
    p.add_argument("--cluster-spread", type=float, default=0.1)
    p.add_argument("--target-pass-rate", type=float, default=0.05)
    p.add_argument("--accuracy", type=float, default=0.9)
    p.add_argument("--template", choices=[t.value for t in TemplateId], default="P2")
    p.add_argument("--taxonomy-size", type=int, default=12)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except CascadeError as exc:  # anything else from this package
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entrypoint()
