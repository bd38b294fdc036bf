"""Model-based QA checking: answer correctness and question-to-answer leakage.

Both checks ride in one request because they read the same material; the
verdict only passes when the answer is correct and nothing leaked.
"""

from __future__ import annotations

from . import prompts
from .config import VerifyConfig
from .errors import StructuredParseError
from .gateway import ChatRequest, Gateway, StageTag, parse_yes_no
from .types import CandidateQA, VerifyVerdict


def build_verify_request(llm_text: str, qa: CandidateQA, cfg: VerifyConfig) -> ChatRequest:
    system, user = prompts.render_verify(llm_text, qa.question, qa.answer)
    return ChatRequest(
        model=cfg.model,
        system=system,
        user=user,
        stage_tag=StageTag.VERIFY,
        max_output_tokens=cfg.max_output_tokens,
        temperature=cfg.temperature,
    )


def verify_qa(llm_text: str, qa: CandidateQA, gateway: Gateway, cfg: VerifyConfig) -> VerifyVerdict:
    """Check one candidate against its source. Parse errors propagate as drops."""
    req = build_verify_request(llm_text, qa, cfg)
    fields = gateway.complete_structured(req, ["CORRECT", "LEAKAGE", "RATIONALE"])
    correct = parse_yes_no(fields["CORRECT"])
    leaked = parse_yes_no(fields["LEAKAGE"])
    if correct is None or leaked is None:
        raise StructuredParseError(
            f"unparseable verdict: CORRECT={fields['CORRECT']!r} LEAKAGE={fields['LEAKAGE']!r}"
        )
    return VerifyVerdict(correct=correct, leaked=leaked)
