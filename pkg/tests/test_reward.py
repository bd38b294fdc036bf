"""Binary reward scoring: extraction, normalization, judge escalation."""

import io
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qaforge.config import RewardConfig
from qaforge.errors import TransientProviderError
from qaforge.gateway import MockScript, StageTag
from qaforge.reward import (
    RewardRequest,
    RewardVerifier,
    exact_reward,
    extract_final_answer,
    judge_reward,
    normalize_answer,
    score_rollout_files,
    serve_stdin,
)

# (gold, rollout, expected reward) across markers, case, punctuation, numerals.
SCORE_TABLE = [
    ("Paris", "The capital is France's largest city.\nAnswer: Paris", 1),
    ("paris", "Answer: Paris.", 1),
    ("1,000", "Computing the total step by step.\n1000.0", 1),
    ("1000.0", "Answer: 1,000", 1),
    ("42", "The answer is clear.\n\\boxed{42}", 1),
    ("42", "\\boxed{42.0}", 1),
    ("Yes", "answer: yes", 1),
    ("  3.50 ", "Final Answer: 3.5", 1),
    ("x = 5", "Answer:   x  =  5", 1),
    ("The Eiffel Tower", "ANSWER: the eiffel tower!", 1),
    ("7", "Reasoning through it.\nanswer: 7\nThat settles it.", 1),
    ("-5", "Answer: -5.0", 1),
    ("0.5", "\\boxed{0.50}", 1),
    ("A", "After much deliberation.\nA", 1),
    ("blue", "ANSWER: Blue.", 1),
    ("1234567", "Answer: 1,234,567", 1),
    ("3", "Answer: 2\nWait, that is wrong.\nAnswer: 3", 1),
    ("10", "\\boxed{5}\nAnswer: 10", 1),
    ("5", "Answer: 10\nso finally \\boxed{5}", 1),
    ("alpha", "ANSWER: ALPHA", 1),
    ("100", "The total comes to\n100.", 1),
    ("Mount Everest", "One line of context.\nMount Everest", 1),
    ("½", "Answer: ½", 1),
    ("Paris", "Answer: London", 0),
    ("42", "Answer: 24", 0),
    ("1000", "Answer: 100", 0),
    ("yes", "Answer: no", 0),
    ("3.14", "Answer: 3.1415", 0),
    ("Paris", "I cannot determine the answer.", 0),
    ("7", "", 0),
    ("December 25", "Answer: December 24", 0),
    ("cat", "catalogue", 0),
    ("5", "Answer:", 0),
    ("1,000", "Answer: 1000.5", 0),
    ("x = 5", "Answer: x = 6", 0),
    ("no", "Answer: No, definitely not", 0),
]


@pytest.mark.parametrize("gold,rollout,expected", SCORE_TABLE)
def test_exact_reward_table(gold, rollout, expected):
    result = exact_reward(RewardRequest(question="q", gold_answer=gold, rollout=rollout))
    assert result.reward == expected
    assert result.method == "exact"


def test_table_is_large_enough():
    assert len(SCORE_TABLE) >= 30


# ---------------------------------------------------------------------------
# Extraction
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "rollout,expected",
    [
        ("Answer: 42", "42"),
        ("final answer: forty two", "forty two"),
        ("Work:\n\\boxed{x+1}", "x+1"),
        ("\\boxed{\\frac{1}{2}}", "\\frac{1}{2}"),
        ("no markers here\nlast line", "last line"),
        ("", ""),
        ("   \n  \n", ""),
        ("Answer: first\nmore text\nAnswer: second", "second"),
        ("\\boxed{old}\ntext\nAnswer: new", "new"),
        ("Answer: old\ntext \\boxed{new}", "new"),
    ],
)
def test_extract_final_answer(rollout, expected):
    assert extract_final_answer(rollout) == expected


def test_marker_list_is_configuration():
    cfg = RewardConfig(marker_prefixes=["result:"], use_boxed=False)
    assert extract_final_answer("Result: 9\nAnswer: 8", cfg) == "9\nAnswer: 8".splitlines()[0]
    # boxed disabled: falls back to the last non-empty line
    assert extract_final_answer("\\boxed{3}", cfg) == "\\boxed{3}"


@pytest.mark.parametrize(
    "raw,normalized",
    [
        ("  Paris.  ", "paris"),
        ("1,000", "1000"),
        ("1000.0", "1000"),
        ("1,234.50", "1234.5"),
        ("YES!", "yes"),
        ("a  b\tc", "a b c"),
        ("-3.10", "-3.1"),
        ("version 2.0 of 3,000 units", "version 2 of 3000 units"),
        ("12,34", "12,34"),
    ],
)
def test_normalize_answer(raw, normalized):
    assert normalize_answer(raw) == normalized


@settings(max_examples=150, deadline=None)
@given(st.text(max_size=200), st.text(min_size=1, max_size=50))
def test_reward_is_binary_and_deterministic(rollout, gold):
    first = exact_reward(RewardRequest(question="q", gold_answer=gold, rollout=rollout))
    second = exact_reward(RewardRequest(question="q", gold_answer=gold, rollout=rollout))
    assert first.reward in (0, 1)
    assert (first.reward, first.method, first.extracted_answer) == (
        second.reward,
        second.method,
        second.extracted_answer,
    )


@settings(max_examples=100, deadline=None)
@given(st.text(min_size=1, max_size=60))
def test_normalization_symmetry(answer):
    """A value always matches itself, however the surface form is perturbed."""
    perturbed = "  " + answer.upper() + ".  "
    req = RewardRequest(question="q", gold_answer=answer, rollout="Answer: " + perturbed)
    got = exact_reward(req)
    if normalize_answer(answer):
        if extract_final_answer(req.rollout) == perturbed.strip():
            assert got.reward == 1


# ---------------------------------------------------------------------------
# Judge escalation
# ---------------------------------------------------------------------------


def _judge_script(reply):
    script = MockScript()
    script.set_default(StageTag.JUDGE, reply)
    return script


def test_exact_hit_skips_judge(gw_factory):
    gateway = gw_factory(_judge_script("MATCH: yes"))
    verifier = RewardVerifier(cfg=RewardConfig(judge=True), gateway=gateway)
    result = verifier.score(RewardRequest(question="q", gold_answer="7", rollout="Answer: 7"))
    assert result.reward == 1 and result.method == "exact"
    assert gateway.ledger.stage_requests(StageTag.JUDGE) == 0
    assert verifier.counters.judge_calls == 0


def test_judge_accepts_semantic_match(gw_factory):
    gateway = gw_factory(_judge_script("MATCH: yes"))
    verifier = RewardVerifier(cfg=RewardConfig(judge=True), gateway=gateway)
    req = RewardRequest(
        question="What is the capital of France?",
        gold_answer="Paris",
        rollout="Answer: The city of Paris, France",
    )
    result = verifier.score(req)
    assert result.reward == 1 and result.method == "judge"
    assert gateway.ledger.stage_requests(StageTag.JUDGE) == 1


def test_judge_rejects_mismatch(gw_factory):
    gateway = gw_factory(_judge_script("MATCH: no"))
    verifier = RewardVerifier(cfg=RewardConfig(judge=True), gateway=gateway)
    result = verifier.score(RewardRequest(question="q", gold_answer="Paris", rollout="Answer: Lyon"))
    assert result.reward == 0 and result.method == "judge"


class _DeadProvider:
    def send(self, req):
        raise TransientProviderError("socket reset")


def test_judge_transport_failure_fails_closed(gw_factory):
    gateway = gw_factory(provider=_DeadProvider(), max_attempts=3)
    verifier = RewardVerifier(cfg=RewardConfig(judge=True), gateway=gateway)
    result = verifier.score(RewardRequest(question="q", gold_answer="Paris", rollout="Answer: Lyon"))
    assert result.reward == 0 and result.method == "judge"
    assert verifier.counters.judge_failures == 1


def test_judge_parse_garbage_fails_closed(gw_factory):
    gateway = gw_factory(_judge_script("I refuse to use the format"))
    verifier = RewardVerifier(cfg=RewardConfig(judge=True), gateway=gateway)
    result = verifier.score(RewardRequest(question="q", gold_answer="Paris", rollout="Answer: Lyon"))
    assert result.reward == 0
    assert verifier.counters.judge_failures == 1


def test_judge_never_raises_and_degrades_to_exact_without_gateway():
    verifier = RewardVerifier(cfg=RewardConfig(judge=True), gateway=None)
    result = verifier.score(RewardRequest(question="q", gold_answer="Paris", rollout="Answer: Lyon"))
    assert result.reward == 0 and result.method == "exact"


def test_judge_reward_uses_extracted_answer(gw_factory):
    gateway = gw_factory(_judge_script("MATCH: yes"))
    req = RewardRequest(question="q", gold_answer="Paris", rollout="blah\nAnswer: Lutetia")
    result = judge_reward(req, gateway)
    assert result.extracted_answer == "Lutetia"


# ---------------------------------------------------------------------------
# Batch and stdin interfaces
# ---------------------------------------------------------------------------


def test_score_rollout_files(tmp_path):
    dataset = tmp_path / "qa.jsonl"
    rollouts = tmp_path / "rollouts.jsonl"
    dataset.write_text(
        json.dumps({"record_id": "r1", "question": "Q1", "answer": "7"})
        + "\n"
        + json.dumps({"record_id": "r2", "question": "Q2", "answer": "blue"})
        + "\n"
    )
    rollouts.write_text(
        json.dumps({"record_id": "r1", "rollout": "Answer: 7"})
        + "\n"
        + json.dumps({"record_id": "r2", "rollout": "Answer: red"})
        + "\n"
        + json.dumps({"record_id": "missing", "rollout": "Answer: x"})
        + "\n"
    )
    out = io.StringIO()
    summary = score_rollout_files(str(dataset), str(rollouts), out, RewardVerifier())
    assert summary == {"scored": 2, "unmatched": 1}
    lines = [json.loads(l) for l in out.getvalue().splitlines()]
    assert [l["reward"] for l in lines] == [1, 0]
    assert lines[0]["record_id"] == "r1"


def test_serve_stdin_line_protocol():
    requests = [
        {"question": "q", "gold_answer": "7", "rollout": "Answer: 7"},
        {"question": "q", "gold_answer": "7", "rollout": "Answer: 8"},
        {"gold_answer_missing": True},
    ]
    in_fh = io.StringIO("\n".join(json.dumps(r) for r in requests) + "\n")
    out_fh = io.StringIO()
    served = serve_stdin(RewardVerifier(), in_fh, out_fh)
    lines = [json.loads(l) for l in out_fh.getvalue().splitlines()]
    assert served == 2
    assert lines[0]["reward"] == 1 and lines[1]["reward"] == 0
    assert "error" in lines[2]


def test_empty_gold_never_rewards():
    result = exact_reward(RewardRequest(question="q", gold_answer="  ", rollout="\n\n"))
    assert result.reward == 0
