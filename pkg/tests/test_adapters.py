from __future__ import annotations

import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cryptorisk.adapters import (
    load_report,
    map_finding,
    merge_and_dedup,
    parse_report,
    registered_parsers,
    validate_chain,
)
from cryptorisk.appir import Loc
from cryptorisk.errors import DomainError, ParseError
from cryptorisk.misuse import MisuseTuple, dumps_jsonl, loads_jsonl
from cryptorisk.synth import simulated_reports, synthetic_app

GET = "javax.crypto.Cipher.getInstance(java.lang.String)"
P = "com.example.SecureSender.encrypt(java.lang.String)"


def _doc(det, *findings):
    return {"detector": det, "format_version": "1", "findings": list(findings)}


def test_cg_codes():
    assert map_finding("CG", GET, "", "vul.11") == 12
    assert map_finding("CG", GET, "", "vul.7") == 7
    assert map_finding("CG", GET, "", "vul.99") is None


def test_cc_rules_use_class_and_description():
    assert map_finding("CC", "javax.crypto.spec.IvParameterSpec.<init>(byte[])", "", "RequiredPredicateError") == 13
    assert map_finding("CC", "javax.crypto.spec.SecretKeySpec.<init>(byte[],java.lang.String)", "", "RequiredPredicateError") == 1
    assert map_finding("CC", GET, "transformation selects ECB mode", "ConstraintError") == 12


def test_bs_rules():
    assert map_finding("BS", GET, "", "Rule1") == 12
    assert map_finding("BS", GET, "", "Rule6") == 9


def test_parse_with_and_without_location(motivating):
    doc = _doc(
        "CG",
        {"err": "vul.11", "m": GET, "p": P, "d": "ecb", "loc": {"method": P, "stmt": 7}},
        {"err": "vul.11", "m": GET, "p": P},
        {"err": "vul.11", "m": GET, "p": "com.example.SecureSender.save(byte[])"},
        {"err": "bogus", "m": GET, "p": P},
        {"err": "vul.11", "m": "not a sig", "p": P},
    )
    out = parse_report("CG", doc, program=motivating)
    assert [(t.id, t.loc) for t in out.tuples] == [(12, Loc(P, 7)), (12, Loc(P, 7))]
    assert len(out.unmapped) == 3
    assert out.total == 5
    # without a program the location-less finding cannot be placed
    assert len(parse_report("CG", doc).unmapped) == 4


def test_malformed_reports():
    with pytest.raises(ParseError):
        parse_report("CG", "{oops")
    with pytest.raises(ParseError):
        parse_report("CG", {"detector": "CG", "findings": {}})
    with pytest.raises(ParseError) as info:
        parse_report("CG", _doc("CG", {"err": 3, "m": GET}, "x"))
    assert len(info.value.errors) == 3
    with pytest.raises(ParseError):
        parse_report("CG", _doc("CC"))


def test_unregistered_detector():
    with pytest.raises(DomainError):
        parse_report("XYZ", _doc("XYZ"))
    with pytest.raises(DomainError):
        validate_chain({"CG", "XYZ"})


def test_registered_and_chain():
    assert {"CG", "CC", "BS", "BI"} <= registered_parsers()
    assert validate_chain({"BI"}).valid
    v = validate_chain({"BS"})
    assert not v and v.missing == set(range(1, 22)) - {1, 9, 11, 12, 13, 14}
    assert str(v).startswith("MissingIds({2,3,4,")


def test_load_report_reads_detector(tmp_path, motivating):
    path = tmp_path / "r.json"
    path.write_text(json.dumps(_doc("CC", {"err": "ConstraintError", "m": GET, "p": P, "d": "selects ECB mode"})))
    out = load_report(path, program=motivating)
    assert out.detector == "CC" and [t.id for t in out.tuples] == [12]
    path.write_text(json.dumps({"findings": []}))
    with pytest.raises(ParseError):
        load_report(path)


def test_simulated_reports_agree_with_builtin():
    rng = random.Random(2)
    for k in range(10):
        p = synthetic_app(f"a{k}", rng)
        for det, doc in simulated_reports(p, rng).items():
            parsed = parse_report(det, doc, program=p)
            assert all(t.t == det for t in parsed.tuples)
            assert parsed.total == len(doc["findings"])


# ---------------------------------------------------------------- merge


def _tuples():
    ids = st.integers(1, 21)
    dets = st.sampled_from(["CG", "CC", "BS", "BI"])
    cats = st.lists(st.sampled_from(["FILE", "NETWORK", "LOG"]), max_size=3).map(tuple)
    return st.lists(
        st.builds(
            lambda i, t, s, stmt, d: MisuseTuple(GET, i, P, d, t, Loc(P, stmt), s),
            ids,
            dets,
            cats,
            st.integers(0, 3),
            st.sampled_from(["", "x", "y"]),
        ),
        max_size=25,
    )


@given(_tuples(), st.randoms())
def test_merge_is_order_free_and_idempotent(tuples, rnd):
    merged = merge_and_dedup(tuples)
    shuffled = list(tuples)
    rnd.shuffle(shuffled)
    assert merge_and_dedup(shuffled) == merged
    assert merge_and_dedup(merged) == merged
    assert len({t.key for t in merged}) == len(merged) == len({t.key for t in tuples})
    for t in merged:
        assert t.reporters == {u.t for u in tuples if u.key == t.key}


@given(_tuples())
def test_jsonl_round_trip(tuples):
    assert loads_jsonl(dumps_jsonl(tuples)) == tuples


def test_jsonl_errors():
    with pytest.raises(ParseError):
        loads_jsonl('{"m": 1}\n')
