"""Domain snapping and persona-list parsing."""

import pytest

from qaforge.classify import NoPersonasError, classify_and_assign, parse_personas
from qaforge.config import ClassifyConfig
from qaforge.gateway import MockScript, StageTag
from qaforge.types import Domain, snap_domain

CFG = ClassifyConfig()


# ---------------------------------------------------------------- domains


@pytest.mark.parametrize(
    "label,expected",
    [
        ("math", Domain.MATH),
        ("Science", Domain.SCIENCE),
        ("CODE", Domain.CODE),
        ("arts_entertainment", Domain.ARTS_ENTERTAINMENT),
        ("Arts & Entertainment", Domain.ARTS_ENTERTAINMENT),
        ("arts and entertainment", Domain.ARTS_ENTERTAINMENT),
        ("social science", Domain.SOCIAL_SCIENCE),
        ("Social_Science", Domain.SOCIAL_SCIENCE),
        ("  healthcare  ", Domain.HEALTHCARE),
        ("underwater basket weaving", Domain.OTHER),
        ("", Domain.OTHER),
    ],
)
def test_snap_domain(label, expected):
    assert snap_domain(label) is expected


def test_domain_enum_is_closed():
    assert len(Domain) == 11
    assert {d.value for d in Domain} == {
        "math", "science", "code", "healthcare", "commerce", "lifestyle",
        "social_science", "education", "arts_entertainment", "general", "other",
    }


# ---------------------------------------------------------------- personas


def labels(personas):
    return [p.label for p in personas]


def test_semicolon_list():
    out = parse_personas("civil engineer; local historian; student")
    assert labels(out) == ["civil engineer", "local historian", "student"]
    assert [p.rank for p in out] == [1, 2, 3]


def test_newline_list():
    assert labels(parse_personas("nurse\npharmacist")) == ["nurse", "pharmacist"]


def test_bulleted_and_numbered_lines():
    assert labels(parse_personas("- nurse\n* pharmacist\n1. surgeon")) == [
        "nurse", "pharmacist", "surgeon",
    ]
    assert labels(parse_personas("1) a teacher\n2) a parent")) == ["a teacher", "a parent"]


def test_comma_fallback_only_for_single_part():
    assert labels(parse_personas("nurse, pharmacist, surgeon")) == [
        "nurse", "pharmacist", "surgeon",
    ]
    # With semicolons present, commas stay inside labels.
    assert labels(parse_personas("director, board of health; patient")) == [
        "director, board of health", "patient",
    ]


def test_cap_at_max():
    out = parse_personas("a; b; c; d; e", max_personas=3)
    assert labels(out) == ["a", "b", "c"]


def test_case_folded_dedup_keeps_first():
    out = parse_personas("Engineer; engineer; ENGINEER; chemist")
    assert labels(out) == ["Engineer", "chemist"]
    assert [p.rank for p in out] == [1, 2]


def test_overlong_labels_skipped():
    long_label = "a person who happens to live near the plant today"
    out = parse_personas(f"{long_label}; chemist")
    assert labels(out) == ["chemist"]
    assert out[0].rank == 1


def test_trailing_period_stripped():
    assert labels(parse_personas("local historian.")) == ["local historian"]


def test_empty_input_gives_no_personas():
    assert parse_personas(";;;\n\n") == []


# ---------------------------------------------------------------- e2e stage


def scripted_gateway(gw_factory, response):
    script = MockScript()
    script.set_default(StageTag.CLASSIFY, response)
    return gw_factory(script=script)


def test_classify_and_assign(gw_factory):
    gw = scripted_gateway(gw_factory, "DOMAIN: science\nPERSONAS: chemist; plant operator")
    domain, personas = classify_and_assign("doc text", gw, CFG)
    assert domain is Domain.SCIENCE
    assert labels(personas) == ["chemist", "plant operator"]
    assert [p.rank for p in personas] == [1, 2]


def test_offlist_domain_snaps_to_other(gw_factory):
    gw = scripted_gateway(gw_factory, "DOMAIN: numismatics\nPERSONAS: coin collector")
    domain, personas = classify_and_assign("doc text", gw, CFG)
    assert domain is Domain.OTHER
    assert labels(personas) == ["coin collector"]


def test_no_usable_personas_raises(gw_factory):
    gw = scripted_gateway(
        gw_factory,
        "DOMAIN: general\nPERSONAS: someone whose description runs far too many words to ever keep",
    )
    with pytest.raises(NoPersonasError):
        classify_and_assign("doc text", gw, CFG)


def test_persona_cap_applies_end_to_end(gw_factory):
    gw = scripted_gateway(gw_factory, "DOMAIN: commerce\nPERSONAS: a; b; c; d; e; f")
    _, personas = classify_and_assign("doc text", gw, ClassifyConfig(max_personas=3))
    assert len(personas) == 3
