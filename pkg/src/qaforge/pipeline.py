"""Run orchestration: staged processing, resumability, and reporting.

A run owns a run directory holding the config snapshot, per-stage ledgers, and
the final report. Processing is at-least-once with idempotent ledgers: any
(stage, item) already logged is skipped on replay, so an interrupted run can
resume without re-spending tokens, and a completed run resumes to completion
with zero gateway calls.

Output ordering is deterministic by construction. Documents get sequence
numbers in ingest order and results are drained in that order, so the dataset
file is byte-identical across runs and across worker counts; only created_at
timestamps differ between runs.
"""

from __future__ import annotations

import json
import logging
import math
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Optional

from .classify import NoPersonasError, classify_and_assign
from .config import (
    GatewayConfig,
    PipelineConfig,
    canonical_json,
    config_from_dict,
    config_to_dict,
    load_config,
)
from .decontam import NGramIndex, build_index_from_dir, is_contaminated
from .errors import ConfigDriftError, ConfigError, StructuredParseError
from .filtering import heuristic_filter, llm_filter, truncate_for_llm
from .gateway import Gateway, HTTPProvider, MockProvider, MockScript, TokenBucket
from .generate import AnswerTooLongError, DemoLibrary, PreLeakError, distill_cot, generate_qa
from .ingest import IngestStats, dedup, sample_mixture
from .ledger import RunLedger
from .types import (
    PIPELINE_VERSION,
    CandidateQA,
    Document,
    Domain,
    Persona,
    QARecord,
    make_record_id,
)
from .verify import verify_qa

log = logging.getLogger("qaforge")

# Called after every fresh ledger append: (stage, item_id, outcome). Used for
# progress reporting; tests also use it to inject crashes at stage boundaries.
StageHook = Callable[[str, str, str], None]


def build_gateway(gcfg: GatewayConfig) -> Gateway:
    if gcfg.mock_script:
        provider = MockProvider(MockScript.load(gcfg.mock_script))
    else:
        provider = HTTPProvider(gcfg.base_url, gcfg.api_key_env)
    rate = None
    if gcfg.rate_capacity >= 1 and gcfg.rate_refill_per_s > 0:
        rate = TokenBucket(gcfg.rate_capacity, gcfg.rate_refill_per_s)
    return Gateway(
        provider,
        concurrency=gcfg.concurrency,
        rate=rate,
        max_attempts=gcfg.max_attempts,
        backoff_base=gcfg.backoff_base,
        backoff_cap=gcfg.backoff_cap,
        max_reasks=gcfg.max_reasks,
        cache=gcfg.cache,
    )


class _DatasetWriter:
    """Single-writer JSONL emitter with resume-safe dedup.

    On resume, the existing file is salvaged up to its last complete line and
    already-written record ids are skipped, so a crash mid-append never yields
    duplicates.
    """

    def __init__(self, path: str, resume: bool):
        self.path = path
        self.seen: set[str] = set()
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        if resume and os.path.exists(path):
            with open(path, "rb") as fh:
                blob = fh.read()
            cut = blob.rfind(b"\n")
            keep = blob[: cut + 1] if cut >= 0 else b""
            with open(path, "wb") as fh:
                fh.write(keep)
            for raw in keep.decode("utf-8").splitlines():
                try:
                    self.seen.add(json.loads(raw)["record_id"])
                except (json.JSONDecodeError, KeyError):
                    continue
        else:
            open(path, "w").close()
        self._fh = open(path, "a", encoding="utf-8")

    def append(self, records: list[QARecord]) -> None:
        for rec in records:
            if rec.record_id in self.seen:
                continue
            self.seen.add(rec.record_id)
            self._fh.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


@dataclass
class _RunContext:
    cfg: PipelineConfig
    gateway: Gateway
    ledger: RunLedger
    demos: DemoLibrary
    eval_index: NGramIndex
    hook: Optional[StageHook] = None

    def log(self, stage: str, item_id: str, outcome: str, reason: str = "",
            fingerprint: str = "", data: Optional[dict] = None) -> dict:
        appended = self.ledger.log(stage, item_id, outcome, reason, fingerprint, data)
        entry = self.ledger.get(stage, item_id)
        if appended and self.hook is not None:
            self.hook(stage, item_id, outcome)
        return entry  # type: ignore[return-value]


def _filter_stage(ctx: _RunContext, doc: Document, llm_text: str, truncated: bool) -> dict:
    entry = ctx.ledger.get("filter", doc.doc_id)
    if entry is not None:
        return entry
    verdict = heuristic_filter(doc, ctx.cfg.filter)
    if verdict.qualified:
        try:
            verdict = llm_filter(llm_text, ctx.gateway, ctx.cfg.filter)
        except StructuredParseError:
            return ctx.log("filter", doc.doc_id, "drop", reason="parse",
                           data={"truncated": truncated})
    outcome = "pass" if verdict.qualified else "reject"
    return ctx.log("filter", doc.doc_id, outcome, reason=verdict.reason.value,
                   data={"phase": verdict.phase, "truncated": truncated})


def _classify_stage(ctx: _RunContext, doc: Document, llm_text: str) -> dict:
    entry = ctx.ledger.get("classify", doc.doc_id)
    if entry is not None:
        return entry
    try:
        domain, personas = classify_and_assign(llm_text, ctx.gateway, ctx.cfg.classify)
    except StructuredParseError:
        return ctx.log("classify", doc.doc_id, "drop", reason="parse")
    except NoPersonasError:
        return ctx.log("classify", doc.doc_id, "drop", reason="no_persona")
    data = {
        "domain": domain.value,
        "personas": [{"label": p.label, "rank": p.rank} for p in personas],
    }
    return ctx.log("classify", doc.doc_id, "pass", data=data)


def _generate_stage(ctx: _RunContext, doc: Document, llm_text: str, domain: Domain,
                    persona: Persona, item_id: str) -> dict:
    entry = ctx.ledger.get("generate", item_id)
    if entry is not None:
        return entry
    demos = ctx.demos.sample_demos(domain, ctx.cfg.generate.k_shots, ctx.cfg.run.seed)
    try:
        qa = generate_qa(llm_text, doc, domain, persona, demos, ctx.gateway, ctx.cfg.generate)
    except StructuredParseError:
        return ctx.log("generate", item_id, "drop", reason="parse")
    except AnswerTooLongError:
        return ctx.log("generate", item_id, "drop", reason="answer_too_long")
    except PreLeakError:
        return ctx.log("generate", item_id, "drop", reason="pre_leak")
    data = {
        "question": qa.question,
        "answer": qa.answer,
        "few_shot_ids": qa.few_shot_ids,
    }
    return ctx.log("generate", item_id, "pass", fingerprint=qa.gen_fingerprint, data=data)


def _verify_stage(ctx: _RunContext, llm_text: str, qa: CandidateQA, item_id: str) -> dict:
    entry = ctx.ledger.get("verify", item_id)
    if entry is not None:
        return entry
    try:
        verdict = verify_qa(llm_text, qa, ctx.gateway, ctx.cfg.verify)
    except StructuredParseError:
        return ctx.log("verify", item_id, "drop", reason="parse")
    data = {"correct": verdict.correct, "leaked": verdict.leaked}
    if verdict.passed:
        return ctx.log("verify", item_id, "pass", data=data)
    reason = "incorrect" if not verdict.correct else "leaked"
    return ctx.log("verify", item_id, "reject", reason=reason, data=data)


def _decontaminate_stage(ctx: _RunContext, qa: CandidateQA, item_id: str) -> dict:
    entry = ctx.ledger.get("decontaminate", item_id)
    if entry is not None:
        return entry
    report = is_contaminated(qa.question, qa.answer, ctx.eval_index)
    data = {
        "matched_gram_count": report.matched_gram_count,
        "first_match_offset": report.first_match_offset,
    }
    if report.contaminated:
        return ctx.log("decontaminate", item_id, "reject", reason="contaminated", data=data)
    return ctx.log("decontaminate", item_id, "pass", data=data)


def _distill_stage(ctx: _RunContext, llm_text: str, qa: CandidateQA, item_id: str) -> dict:
    entry = ctx.ledger.get("distill", item_id)
    if entry is not None:
        return entry
    explanation = distill_cot(qa, llm_text, ctx.gateway, ctx.cfg.generate)
    reason = "explained" if explanation is not None else "omitted"
    return ctx.log("distill", item_id, "pass", reason=reason, data={"explanation": explanation})


def _process_document(ctx: _RunContext, doc: Document) -> list[QARecord]:
    cfg = ctx.cfg
    llm_text = truncate_for_llm(doc.text, cfg.filter)
    truncated = len(doc.text) > cfg.filter.max_chars

    fentry = _filter_stage(ctx, doc, llm_text, truncated)
    if fentry["outcome"] != "pass":
        return []

    centry = _classify_stage(ctx, doc, llm_text)
    if centry["outcome"] != "pass":
        return []
    domain = Domain(centry["data"]["domain"])
    personas = [Persona(label=p["label"], rank=p["rank"]) for p in centry["data"]["personas"]]

    records: list[QARecord] = []
    for persona in personas:
        item_id = f"{doc.doc_id}:p{persona.rank}"
        gentry = _generate_stage(ctx, doc, llm_text, domain, persona, item_id)
        if gentry["outcome"] != "pass":
            continue
        qa = CandidateQA(
            doc_id=doc.doc_id,
            domain=domain,
            persona=persona,
            question=gentry["data"]["question"],
            answer=gentry["data"]["answer"],
            few_shot_ids=gentry["data"]["few_shot_ids"],
            gen_fingerprint=gentry["fingerprint"],
        )
        ventry = _verify_stage(ctx, llm_text, qa, item_id)
        if ventry["outcome"] != "pass":
            continue
        dentry = _decontaminate_stage(ctx, qa, item_id)
        if dentry["outcome"] != "pass":
            continue
        explanation = None
        audit_distill = None
        if cfg.generate.sft_distill:
            tentry = _distill_stage(ctx, llm_text, qa, item_id)
            explanation = tentry["data"].get("explanation")
            audit_distill = {"outcome": "pass", "explained": explanation is not None}

        record_id = make_record_id(doc.doc_id, persona.rank, qa.question)
        wentry = ctx.ledger.get("write", record_id)
        if wentry is not None:
            records.append(QARecord.from_dict(wentry["data"]))
            continue
        audit = {
            "filter": {"outcome": "pass", "phase": fentry["data"].get("phase", "llm"),
                       "truncated": fentry["data"].get("truncated", False)},
            "classify": {"outcome": "pass", "domain": domain.value, "personas": len(personas)},
            "generate": {"outcome": "pass", "fingerprint": qa.gen_fingerprint,
                         "few_shot_ids": qa.few_shot_ids},
            "verify": {"outcome": "pass", "correct": True, "leaked": False},
            "decontaminate": {"outcome": "clean",
                              "matched_grams": dentry["data"]["matched_gram_count"]},
        }
        if audit_distill is not None:
            audit["distill"] = audit_distill
        record = QARecord(
            record_id=record_id,
            doc_id=doc.doc_id,
            source=doc.source,
            domain=domain,
            persona=persona,
            question=qa.question,
            answer=qa.answer,
            explanation=explanation,
            audit=audit,
            pipeline_version=PIPELINE_VERSION,
            created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        )
        ctx.log("write", record_id, "pass", data=record.to_dict())
        records.append(record)
    return records


def _percentile(values: list[int], q: float) -> int:
    ordered = sorted(values)
    idx = max(0, math.ceil(q * len(ordered)) - 1)
    return ordered[idx]


def dataset_stats(path: str) -> dict[str, Any]:
    """Distribution summary of a written dataset file."""
    domains: dict[str, int] = {}
    sources: dict[str, int] = {}
    answer_lengths: list[int] = []
    total = 0
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            if not raw.strip():
                continue
            rec = json.loads(raw)
            total += 1
            domains[rec["domain"]] = domains.get(rec["domain"], 0) + 1
            sources[rec["source"]] = sources.get(rec["source"], 0) + 1
            answer_lengths.append(len(rec["answer"]))
    out: dict[str, Any] = {"records": total, "domains": {}, "domain_proportions": {},
                           "sources": sources, "answer_length": {}}
    if total:
        out["domains"] = dict(sorted(domains.items()))
        out["domain_proportions"] = {d: c / total for d, c in sorted(domains.items())}
        out["answer_length"] = {
            "min": min(answer_lengths),
            "median": int(statistics.median(answer_lengths)),
            "p95": _percentile(answer_lengths, 0.95),
            "max": max(answer_lengths),
        }
    return out


def _check_funnel(ledger: RunLedger, records_written: int) -> tuple[dict, list[str]]:
    funnel = ledger.replay_funnel()
    problems: list[str] = []
    classify_pass_entries = [e for e in ledger.entries("classify") if e["outcome"] == "pass"]
    expected_candidates = sum(len(e["data"]["personas"]) for e in classify_pass_entries)
    checks = [
        ("filter.in == ingest.pass", funnel["filter"]["in"], funnel["ingest"]["pass"]),
        ("classify.in == filter.pass", funnel["classify"]["in"], funnel["filter"]["pass"]),
        ("generate.in == sum(personas)", funnel["generate"]["in"], expected_candidates),
        ("verify.in == generate.pass", funnel["verify"]["in"], funnel["generate"]["pass"]),
        ("decontaminate.in == verify.pass", funnel["decontaminate"]["in"], funnel["verify"]["pass"]),
        ("written == decontaminate.pass", records_written, funnel["decontaminate"]["pass"]),
    ]
    for label, got, want in checks:
        if got != want:
            problems.append(f"{label}: {got} != {want}")
    return funnel, problems


@dataclass
class RunReport:
    run_dir: str
    out_path: str
    records_written: int
    wall_seconds: float
    funnel: dict[str, dict[str, int]]
    funnel_consistent: bool
    funnel_problems: list[str]
    reasons: dict[str, dict[str, int]]
    ingest: dict[str, dict[str, int]]
    dataset: dict[str, Any]
    gateway: dict[str, Any]
    reasks: int = 0
    cache_hits: int = 0
    workers: int = 1
    pipeline_version: str = PIPELINE_VERSION

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_dir": self.run_dir,
            "out_path": self.out_path,
            "records_written": self.records_written,
            "wall_seconds": round(self.wall_seconds, 3),
            "funnel": self.funnel,
            "funnel_consistent": self.funnel_consistent,
            "funnel_problems": self.funnel_problems,
            "reasons": self.reasons,
            "ingest": self.ingest,
            "dataset": self.dataset,
            "gateway": self.gateway,
            "reasks": self.reasks,
            "cache_hits": self.cache_hits,
            "workers": self.workers,
            "pipeline_version": self.pipeline_version,
        }

    def summary_lines(self) -> list[str]:
        lines = [
            f"run_dir: {self.run_dir}",
            f"records written: {self.records_written} -> {self.out_path}",
            f"wall time: {self.wall_seconds:.2f}s, workers: {self.workers}",
            "funnel:",
        ]
        for stage, row in self.funnel.items():
            if row["in"] == 0:
                continue
            lines.append(
                f"  {stage:<13} in={row['in']:<6} pass={row['pass']:<6} "
                f"reject={row['reject']:<5} drop={row['drop']}"
            )
        if not self.funnel_consistent:
            lines.append(f"FUNNEL INCONSISTENT: {'; '.join(self.funnel_problems)}")
        totals = self.gateway.get("totals", {})
        lines.append(
            f"gateway: {totals.get('requests', 0)} requests, "
            f"{totals.get('retries', 0)} retries, {totals.get('failures', 0)} failures"
        )
        return lines


def run_pipeline(
    cfg: PipelineConfig,
    *,
    resume: bool = False,
    gateway: Optional[Gateway] = None,
    on_stage_logged: Optional[StageHook] = None,
) -> RunReport:
    """Execute (or continue) a full run described by cfg."""
    start = time.monotonic()
    run_dir = cfg.run.run_dir
    snapshot_path = os.path.join(run_dir, "config.json")
    if resume:
        if not os.path.exists(snapshot_path):
            raise ConfigError(f"cannot resume: no config snapshot in {run_dir}")
    else:
        if os.path.exists(snapshot_path):
            raise ConfigError(f"run_dir {run_dir} already holds a run; use resume")
        os.makedirs(run_dir, exist_ok=True)
        with open(snapshot_path, "w", encoding="utf-8") as fh:
            json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
            fh.write("\n")

    gw = gateway if gateway is not None else build_gateway(cfg.gateway)
    demos = DemoLibrary.load(cfg.generate.demo_path)
    if cfg.decontaminate.eval_dir:
        eval_index = build_index_from_dir(cfg.decontaminate.eval_dir, cfg.decontaminate.ngram)
    else:
        eval_index = NGramIndex(n=cfg.decontaminate.ngram)

    ledger = RunLedger(run_dir)
    writer = _DatasetWriter(cfg.run.out, resume=resume)
    ctx = _RunContext(cfg=cfg, gateway=gw, ledger=ledger, demos=demos,
                      eval_index=eval_index, hook=on_stage_logged)
    ingest_stats: dict[str, IngestStats] = {}

    def ingest_drop(source: str, key: str, reason: str) -> None:
        if ledger.log("ingest", key, "drop", reason=reason) and on_stage_logged is not None:
            on_stage_logged("ingest", key, "drop")

    try:
        docs = dedup(
            sample_mixture(cfg.sources, ingest_stats, ingest_drop),
            ingest_stats,
            ingest_drop,
        )
        futures = []
        with ThreadPoolExecutor(max_workers=cfg.run.workers) as pool:
            try:
                for doc in docs:
                    if ledger.log("ingest", doc.doc_id, "pass") and on_stage_logged is not None:
                        on_stage_logged("ingest", doc.doc_id, "pass")
                    futures.append(pool.submit(_process_document, ctx, doc))
                # Drain in submission order: output order never depends on
                # which worker finished first.
                for fut in futures:
                    writer.append(fut.result())
            except BaseException:
                pool.shutdown(wait=True, cancel_futures=True)
                raise
    finally:
        writer.close()
        ledger.close()

    records_written = len(writer.seen)
    funnel, problems = _check_funnel(ledger, records_written)
    reasons = {
        stage: {f"{o}:{r}" if r else o: c for (o, r), c in sorted(ledger.outcome_counts(stage).items())}
        for stage in funnel
        if funnel[stage]["in"]
    }
    report = RunReport(
        run_dir=run_dir,
        out_path=cfg.run.out,
        records_written=records_written,
        wall_seconds=time.monotonic() - start,
        funnel=funnel,
        funnel_consistent=not problems,
        funnel_problems=problems,
        reasons=reasons,
        ingest={src: st.to_dict() for src, st in sorted(ingest_stats.items())},
        dataset=dataset_stats(cfg.run.out),
        gateway=gw.ledger.snapshot(cfg.gateway.pricing or None),
        reasks=gw.reasks,
        cache_hits=gw.cache_hits,
        workers=cfg.run.workers,
    )
    with open(os.path.join(run_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for line in report.summary_lines():
        log.info(line)
    return report


def resume_run(
    run_dir: str,
    config_path: Optional[str] = None,
    *,
    gateway: Optional[Gateway] = None,
    on_stage_logged: Optional[StageHook] = None,
) -> RunReport:
    """Continue an interrupted run from its own config snapshot.

    When a config file is supplied it must match the snapshot exactly;
    anything else would silently mix two runs' semantics in one run_dir.
    """
    snapshot_path = os.path.join(run_dir, "config.json")
    if not os.path.exists(snapshot_path):
        raise ConfigError(f"cannot resume: no config snapshot in {run_dir}")
    with open(snapshot_path, "r", encoding="utf-8") as fh:
        snap_cfg = config_from_dict(json.load(fh))
    if config_path is not None:
        current = load_config(config_path)
        if canonical_json(current) != canonical_json(snap_cfg):
            raise ConfigDriftError(
                f"config drift: {config_path} does not match the snapshot in {run_dir}"
            )
    snap_cfg.run.run_dir = run_dir
    return run_pipeline(snap_cfg, resume=True, gateway=gateway, on_stage_logged=on_stage_logged)
