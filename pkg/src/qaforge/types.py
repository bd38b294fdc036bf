"""Shared record types for the document-to-QA pipeline."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

PIPELINE_VERSION = "0.1.0"


def content_hash(*parts: str, bits: int = 128) -> str:
    """Stable hex digest over an ordered tuple of strings.

    Each part is length-framed before hashing so ("ab", "c") and ("a", "bc")
    cannot collide.
    """
    h = hashlib.blake2b(digest_size=bits // 8)
    for part in parts:
        data = part.encode("utf-8")
        h.update(len(data).to_bytes(8, "big"))
        h.update(data)
    return h.hexdigest()


def make_doc_id(source: str, text: str) -> str:
    # Outer whitespace is not identity: "  x  " and "x" are the same document.
    return content_hash(source, text.strip())


class Domain(str, Enum):
    MATH = "math"
    SCIENCE = "science"
    CODE = "code"
    HEALTHCARE = "healthcare"
    COMMERCE = "commerce"
    LIFESTYLE = "lifestyle"
    SOCIAL_SCIENCE = "social_science"
    EDUCATION = "education"
    ARTS_ENTERTAINMENT = "arts_entertainment"
    GENERAL = "general"
    OTHER = "other"


# Human-readable labels injected into the classification prompt, in enum order.
DOMAIN_LABELS = {
    Domain.MATH: "math",
    Domain.SCIENCE: "science",
    Domain.CODE: "code",
    Domain.HEALTHCARE: "healthcare",
    Domain.COMMERCE: "commerce",
    Domain.LIFESTYLE: "lifestyle",
    Domain.SOCIAL_SCIENCE: "social science",
    Domain.EDUCATION: "education",
    Domain.ARTS_ENTERTAINMENT: "arts & entertainment",
    Domain.GENERAL: "general",
    Domain.OTHER: "other",
}


def _fold_label(label: str) -> str:
    out = []
    for ch in label.lower().replace("&", " and "):
        out.append(ch if ch.isalnum() else " ")
    return "_".join("".join(out).split())


_DOMAIN_BY_FOLDED = {_fold_label(lbl): dom for dom, lbl in DOMAIN_LABELS.items()}
_DOMAIN_BY_FOLDED.update({_fold_label(d.value): d for d in Domain})


def snap_domain(label: str) -> Domain:
    """Map a free-form domain label onto the closed enum; unknown labels become OTHER."""
    return _DOMAIN_BY_FOLDED.get(_fold_label(label), Domain.OTHER)


@dataclass
class Document:
    doc_id: str
    source: str
    text: str
    meta: dict[str, Any] = field(default_factory=dict)


@dataclass
class SourceSpec:
    source: str
    path: str
    quota: Optional[int] = None
    weight_seed: int = 0


class FilterReason(str, Enum):
    NONE = ""
    TOO_SHORT = "too_short"
    TOO_LONG = "too_long"
    LOW_ALPHA = "low_alpha"
    BOILERPLATE_HEAVY = "boilerplate_heavy"
    LLM_NON_INFORMATIVE = "llm_non_informative"
    LLM_NOT_SELF_CONTAINED = "llm_not_self_contained"
    LLM_OTHER = "llm_other"


@dataclass
class FilterVerdict:
    qualified: bool
    reason: FilterReason = FilterReason.NONE
    phase: str = "heuristic"  # "heuristic" or "llm"


@dataclass
class Persona:
    label: str
    rank: int  # 1-based and unique within a document


@dataclass
class DemoExample:
    demo_id: str
    domain: Domain
    question: str
    answer: str
    note: str = ""


@dataclass
class CandidateQA:
    doc_id: str
    domain: Domain
    persona: Persona
    question: str
    answer: str
    few_shot_ids: list[str] = field(default_factory=list)
    gen_fingerprint: str = ""


@dataclass
class VerifyVerdict:
    correct: bool
    leaked: bool

    @property
    def passed(self) -> bool:
        return self.correct and not self.leaked


@dataclass
class QARecord:
    record_id: str
    doc_id: str
    source: str
    domain: Domain
    persona: Persona
    question: str
    answer: str
    explanation: Optional[str] = None
    audit: dict[str, Any] = field(default_factory=dict)
    pipeline_version: str = ""
    created_at: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "record_id": self.record_id,
            "doc_id": self.doc_id,
            "source": self.source,
            "domain": self.domain.value,
            "persona": {"label": self.persona.label, "rank": self.persona.rank},
            "question": self.question,
            "answer": self.answer,
            "explanation": self.explanation,
            "audit": self.audit,
            "pipeline_version": self.pipeline_version,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "QARecord":
        return cls(
            record_id=d["record_id"],
            doc_id=d["doc_id"],
            source=d["source"],
            domain=Domain(d["domain"]),
            persona=Persona(label=d["persona"]["label"], rank=d["persona"]["rank"]),
            question=d["question"],
            answer=d["answer"],
            explanation=d.get("explanation"),
            audit=d.get("audit", {}),
            pipeline_version=d.get("pipeline_version", ""),
            created_at=d.get("created_at", ""),
        )


def make_record_id(doc_id: str, persona_rank: int, question: str) -> str:
    return content_hash(doc_id, str(persona_rank), question)
