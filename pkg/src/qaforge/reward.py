"""Binary reward scoring for RL rollouts against short reference answers.

Reward is always 0 or 1. Cheap normalized exact matching runs first; an
optional LLM judge is consulted only on an exact miss, and any judge failure
scores 0. Training must never stall or crash on a reward call, and a dead
judge must never hand out free reward.
"""

from __future__ import annotations

import json
import re
import sys
from dataclasses import dataclass, field
from typing import IO, Optional

from . import prompts
from .config import RewardConfig
from .errors import GatewayError
from .gateway import ChatRequest, Gateway, StageTag, parse_yes_no


@dataclass
class RewardRequest:
    question: str
    gold_answer: str
    rollout: str


@dataclass
class RewardResult:
    reward: int
    method: str  # "exact" or "judge"
    extracted_answer: str


@dataclass
class RewardCounters:
    exact_hits: int = 0
    judge_calls: int = 0
    judge_failures: int = 0


def _find_boxed(text: str) -> Optional[tuple[int, str]]:
    """Last \\boxed{...} span with balanced braces; returns (position, content)."""
    marker = r"\boxed{"
    start = text.rfind(marker)
    if start < 0:
        return None
    depth = 1
    i = start + len(marker)
    while i < len(text) and depth:
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
        i += 1
    if depth:
        return start, text[start + len(marker) :].strip()
    return start, text[start + len(marker) : i - 1].strip()


def extract_final_answer(rollout: str, cfg: Optional[RewardConfig] = None) -> str:
    """Pull the model's final answer out of a free-form rollout.

    Recognized markers (configurable): a boxed answer and lines starting with
    an answer prefix. When several markers appear, the one latest in the text
    wins, since rollouts state their final answer last. With no marker at all,
    the last non-empty line is taken.
    """
    cfg = cfg or RewardConfig()
    candidates: list[tuple[int, str]] = []
    if cfg.use_boxed:
        boxed = _find_boxed(rollout)
        if boxed:
            candidates.append(boxed)
    pos = 0
    for line in rollout.splitlines(keepends=True):
        stripped = line.strip().lower()
        for prefix in cfg.marker_prefixes:
            if stripped.startswith(prefix):
                value = line.strip()[len(prefix) :].strip()
                if value:
                    candidates.append((pos, value))
                break
        pos += len(line)
    if candidates:
        return max(candidates, key=lambda c: c[0])[1]
    lines = [ln.strip() for ln in rollout.splitlines() if ln.strip()]
    return lines[-1] if lines else ""


_PLAIN_NUMBER_RE = re.compile(r"^-?\d{1,3}(?:,\d{3})+(?:\.\d+)?$|^-?\d+(?:\.\d+)?$")


def _canon_number(token: str) -> str:
    if not _PLAIN_NUMBER_RE.match(token):
        return token
    token = token.replace(",", "")
    if "." in token:
        token = token.rstrip("0").rstrip(".")
    return token


def normalize_answer(text: str) -> str:
    """Case, whitespace, terminal punctuation, and plain-decimal canonicalization.

    "1,000" and "1000.0" normalize identically; so do "Paris." and "paris".
    Applied to both sides of every comparison, never to one. casefold rather
    than lower so case variants like the micro sign match under round-trips.
    """
    out = text.strip().casefold()
    out = re.sub(r"\s+", " ", out)
    out = out.rstrip(".,;:!? ")
    return " ".join(_canon_number(tok) for tok in out.split(" ") if tok)


def exact_reward(req: RewardRequest, cfg: Optional[RewardConfig] = None) -> RewardResult:
    extracted = extract_final_answer(req.rollout, cfg)
    hit = normalize_answer(extracted) == normalize_answer(req.gold_answer) and req.gold_answer.strip() != ""
    return RewardResult(reward=1 if hit else 0, method="exact", extracted_answer=extracted)


def judge_reward(
    req: RewardRequest,
    gateway: Gateway,
    cfg: Optional[RewardConfig] = None,
    counters: Optional[RewardCounters] = None,
) -> RewardResult:
    """Semantic-equivalence fallback. Fail-closed: any failure scores 0."""
    cfg = cfg or RewardConfig()
    extracted = extract_final_answer(req.rollout, cfg)
    system, user = prompts.render_judge(req.question, req.gold_answer, extracted)
    chat = ChatRequest(
        model=cfg.judge_model,
        system=system,
        user=user,
        stage_tag=StageTag.JUDGE,
        max_output_tokens=64,
        temperature=cfg.judge_temperature,
    )
    if counters is not None:
        counters.judge_calls += 1
    try:
        fields = gateway.complete_structured(chat, ["MATCH"])
        match = parse_yes_no(fields["MATCH"])
        if match is None:
            raise GatewayError(f"unparseable MATCH value: {fields['MATCH']!r}")
    except GatewayError:
        if counters is not None:
            counters.judge_failures += 1
        return RewardResult(reward=0, method="judge", extracted_answer=extracted)
    return RewardResult(reward=1 if match else 0, method="judge", extracted_answer=extracted)


@dataclass
class RewardVerifier:
    """Exact-first scorer with optional judge escalation."""

    cfg: RewardConfig = field(default_factory=RewardConfig)
    gateway: Optional[Gateway] = None
    counters: RewardCounters = field(default_factory=RewardCounters)

    def score(self, req: RewardRequest) -> RewardResult:
        result = exact_reward(req, self.cfg)
        if result.reward == 1:
            self.counters.exact_hits += 1
            return result
        if self.cfg.judge and self.gateway is not None:
            return judge_reward(req, self.gateway, self.cfg, self.counters)
        return result


def score_rollout_files(
    dataset_path: str,
    rollouts_path: str,
    out_fh: IO[str],
    verifier: RewardVerifier,
) -> dict[str, int]:
    """Join rollouts to gold records on record_id and score each one."""
    gold: dict[str, tuple[str, str]] = {}
    with open(dataset_path, "r", encoding="utf-8") as fh:
        for raw in fh:
            if not raw.strip():
                continue
            rec = json.loads(raw)
            gold[rec["record_id"]] = (rec["question"], rec["answer"])
    scored = 0
    unmatched = 0
    with open(rollouts_path, "r", encoding="utf-8") as fh:
        for raw in fh:
            if not raw.strip():
                continue
            roll = json.loads(raw)
            record_id = roll.get("record_id", "")
            if record_id not in gold:
                unmatched += 1
                continue
            question, answer = gold[record_id]
            result = verifier.score(
                RewardRequest(question=question, gold_answer=answer, rollout=roll.get("rollout", ""))
            )
            out_fh.write(
                json.dumps(
                    {
                        "record_id": record_id,
                        "reward": result.reward,
                        "method": result.method,
                        "extracted_answer": result.extracted_answer,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )
            scored += 1
    return {"scored": scored, "unmatched": unmatched}


def serve_stdin(verifier: RewardVerifier, in_fh: IO[str] = sys.stdin, out_fh: IO[str] = sys.stdout) -> int:
    """Line-delimited request/response loop for long-running reward serving.

    Input lines: {"question", "gold_answer", "rollout"}. One result line out
    per request, flushed immediately so a training loop can pipe through us.
    """
    served = 0
    for raw in in_fh:
        if not raw.strip():
            continue
        try:
            req = json.loads(raw)
            request = RewardRequest(
                question=req.get("question", ""),
                gold_answer=req["gold_answer"],
                rollout=req.get("rollout", ""),
            )
        except (json.JSONDecodeError, KeyError) as exc:
            out_fh.write(json.dumps({"error": f"bad request: {exc}"}) + "\n")
            out_fh.flush()
            continue
        result = verifier.score(request)
        out_fh.write(
            json.dumps(
                {
                    "reward": result.reward,
                    "method": result.method,
                    "extracted_answer": result.extracted_answer,
                },
                ensure_ascii=False,
            )
            + "\n"
        )
        out_fh.flush()
        served += 1
    return served
