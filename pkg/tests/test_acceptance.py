"""The ten acceptance criteria, each at its stated tolerance.

A PASS/FAIL line per criterion is printed at the end of the pytest run.
"""

from __future__ import annotations

import itertools
import random
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

import oracles
from cryptorisk.adapters import validate_chain
from cryptorisk.appir import Loc, load_program
from cryptorisk.cli import main as cli_main
from cryptorisk.dataflow import TaintConfig, annotate, taint_connect
from cryptorisk.detector import detect
from cryptorisk.fleet import (
    DEFAULT_MIN_CONF,
    DEFAULT_MIN_SUPPORT_APPS,
    FEATURE_DIM,
    dbi,
    extract_features,
    flatten,
    frequent_itemsets,
    kmeans,
    mine_rules,
    unflatten,
)
from cryptorisk.misuse import MisuseTuple
from cryptorisk.risk import AppRiskReport, accepts, risk_value, vote, vote_ratio
from cryptorisk.synth import RANDOM_RECEIVER_SOURCES, RANDOM_SINKS, RANDOM_SOURCES, random_program
from cryptorisk.taxonomy import SINK_CATEGORIES, VULN_IDS, default_taxonomy, risk_weight, severity_weight

FIXTURES = Path(__file__).parent / "fixtures"
DETECTORS = ("CG", "CC", "BS", "BI")

# which vulnerability ids each detector can report, written out independently
CAPABLE = {
    "CG": set(range(1, 22)) - {8, 18, 19, 20, 21},
    "CC": set(range(1, 22)) - {4, 5, 6, 7},
    "BS": {1, 9, 11, 12, 13, 14},
    "BI": set(range(1, 22)),
}


def _t(vid, t="CG", S=(), reporters=(), stmt=0, m="javax.crypto.Cipher.getInstance(java.lang.String)", p="a.A.f()"):
    return MisuseTuple(m, vid, p, "", t, Loc(p, stmt), tuple(S), frozenset(reporters) | {t})


# ---------------------------------------------------------------- 1


@pytest.mark.criterion(1, "Motivating example: one id=12 misuse in encrypt, S = {NETWORK, FILE}, < 1 s")
def test_c1_motivating_example(record_property):
    t0 = time.perf_counter()
    program = load_program(FIXTURES / "motivating.json")
    found = detect(program)
    elapsed_detect = time.perf_counter() - t0
    encrypt = [t for t in found if t.p.endswith(".encrypt(java.lang.String)")]
    assert [t.id for t in encrypt] == [12]
    annotated = annotate(encrypt, program)
    elapsed = time.perf_counter() - t0
    assert len(annotated) == 1
    assert sorted(annotated[0].S) == ["FILE", "NETWORK"]
    record_property("detail", f"S={sorted(annotated[0].S)}, {elapsed:.3f}s (detect {elapsed_detect:.3f}s)")
    assert elapsed < 1.0


# ---------------------------------------------------------------- 2


def _risk_cases():
    net, fil, log = "NETWORK", "FILE", "LOG"
    return [
        ("single ECB misuse with NETWORK and FILE flows", [_t(12, S=(net, fil))], ("CG", "CC")),
        ("misuse with no flows (R_x = 0)", [_t(12), _t(17, t="CC", stmt=1)], ("CG", "CC")),
        ("no misuses at all", [], ("CG",)),
        ("reporter outside the chain gates the id off", [_t(1, t="BS", S=(net,))], ("CG", "CC")),
        ("two ids, several categories", [_t(1, S=(net, net, log)), _t(17, t="CC", S=(fil,), stmt=3)], ("CG", "CC")),
        ("same id twice sums flows", [_t(13, S=(net,)), _t(13, S=("NC_ICC",), stmt=2)], ("CG",)),
        ("every category on one low-severity id", [_t(20, t="CC", S=SINK_CATEGORIES)], ("CC",)),
        ("merged reporter inside chain", [_t(9, t="BS", reporters=("CC",), S=("SYNC", "SMS_MMS"))], ("CC",)),
        ("ids across all severity levels", [_t(i, t="BI", S=(net,), stmt=i) for i in VULN_IDS], ("BI",)),
        (
            "mix of gated and ungated ids",
            [_t(5, t="CG", S=("NC_STORAGE",)), _t(6, t="BS", S=(net,), stmt=1), _t(21, t="CC", S=("NC_OUT_STREAM", log), stmt=2)],
            ("CG", "CC"),
        ),
    ]


@pytest.mark.criterion(2, "R_x formula suite matches the independent oracle exactly (10 cases)")
def test_c2_risk_formula_suite(record_property):
    cases = _risk_cases()
    assert len(cases) == 10
    values = []
    for name, tuples, chain in cases:
        got = risk_value(tuples, chain)
        want = oracles.risk_oracle(tuples, chain)
        assert isinstance(got, Fraction)
        assert got == want, name
        values.append(got)
    assert Fraction(0) in values  # the zero-flow case
    record_property("detail", "R_x = " + ",".join(str(v) for v in values))


# ---------------------------------------------------------------- 3


@pytest.mark.criterion(3, "Taint engine is a superset of the path-enumeration oracle on 200 random programs, < 60 s")
def test_c3_taint_oracle_equivalence(record_property):
    rng = random.Random(20240601)
    t0 = time.perf_counter()
    misses = surplus = found = 0
    for _ in range(200):
        program = random_program(rng, max_methods=8, max_statements=40)
        assert len(list(program.iter_statements())) <= 40
        cfg = TaintConfig(RANDOM_SOURCES, RANDOM_SINKS, depth=max(1, len(program.methods)), receiver_sources=RANDOM_RECEIVER_SOURCES)
        got = {(f.source, f.sink) for f in taint_connect(program, cfg)}
        want = oracles.taint_oracle(program, RANDOM_SOURCES, RANDOM_SINKS, RANDOM_RECEIVER_SOURCES)
        misses += len(want - got)
        surplus += len(got - want)
        found += len(want)
    elapsed = time.perf_counter() - t0
    record_property("detail", f"oracle flows={found}, misses={misses}, surplus={surplus}, {elapsed:.1f}s")
    assert misses == 0
    assert elapsed < 60


# ---------------------------------------------------------------- 4


@pytest.mark.criterion(4, "Voting: strict majority over every reporter subset, worked ratios exact")
def test_c4_voting(record_property):
    tax = default_taxonomy()
    checked = 0
    sizes = set()
    for r in range(1, len(DETECTORS) + 1):
        for chain in itertools.combinations(DETECTORS, r):
            for vid in VULN_IDS:
                capable = {d for d in chain if vid in CAPABLE[d]}
                assert tax.capable_detectors(vid, chain) == capable
                sizes.add(len(capable))
                for k in range(len(chain) + 1):
                    for reporters in itertools.combinations(chain, k):
                        if not reporters:
                            continue
                        want = oracles.vote_oracle(reporters, capable)
                        ratio = vote_ratio(reporters, vid, chain, tax)
                        assert accepts(ratio) == want
                        by_det = {d: [_t(vid, t=d)] for d in reporters}
                        res = vote(by_det, chain, tax)
                        assert (len(res.expected) == 1) == want
                        checked += 1
    assert {1, 2, 3, 4} <= sizes

    # 12 is reportable by CG, CC and BS; two of three agree
    assert vote_ratio({"CG", "CC"}, 12, ("CG", "CC", "BS")) == Fraction(2, 3)
    assert accepts(Fraction(2, 3))
    # 4 is reportable by CG and BI but not CC; one of two agrees
    assert vote_ratio({"CG"}, 4, ("CG", "CC", "BI")) == Fraction(1, 2)
    assert not accepts(Fraction(1, 2))
    # 8 is reportable only by CC within {CG, CC}
    assert vote_ratio({"CC"}, 8, ("CG", "CC")) == Fraction(1, 1)
    assert accepts(Fraction(1))
    record_property("detail", f"{checked} (chain, id, reporters) combinations")


# ---------------------------------------------------------------- 5


@pytest.mark.criterion(5, "Chain validity: {CG,CC} valid, {CG} misses {8,18,19,20,21}, {CC} misses {4,5,6,7}")
def test_c5_chain_validity(record_property):
    both = validate_chain({"CG", "CC"})
    cg = validate_chain({"CG"})
    cc = validate_chain({"CC"})
    assert both.valid and str(both) == "Valid"
    assert cg.missing == {8, 18, 19, 20, 21}
    assert cc.missing == {4, 5, 6, 7}
    record_property("detail", f"CG: {cg}, CC: {cc}")


# ---------------------------------------------------------------- 6


@pytest.mark.criterion(6, "Feature vectors are 231-dimensional and flatten/unflatten is lossless")
def test_c6_feature_dimensionality(record_property):
    rng = random.Random(6)
    for k in range(200):
        b = {(d, i): 1 for d in ("CG", "CC") for i in VULN_IDS if rng.random() < 0.2}
        n = {(sc, i): rng.randint(1, 9) for sc in SINK_CATEGORIES for i in VULN_IDS if rng.random() < 0.1}
        report = AppRiskReport(f"a{k}", ("CG", "CC"), ("CG", "CC"), b, n, Fraction(0))
        vec = extract_features(report).values
        assert vec.shape == (FEATURE_DIM,) == (231,)
        b2, n2 = unflatten(vec)
        assert (b2, n2) == (b, n)
        assert np.array_equal(flatten(b2, n2), vec)
    record_property("detail", "200 random reports")


# ---------------------------------------------------------------- 7


@pytest.mark.criterion(7, "FP-growth equals brute force on 100 random DBs; confidences exact; default thresholds, < 30 s")
def test_c7_fp_growth(record_property):
    rng = random.Random(7)
    t0 = time.perf_counter()
    n_rules = 0
    for _ in range(100):
        labels = [(i, "NETWORK") for i in range(1, rng.randint(1, 12) + 1)]
        db = [frozenset(x for x in labels if rng.random() < rng.uniform(0.2, 0.8)) for _ in range(rng.randint(1, 30))]
        min_count = rng.randint(1, 6)
        assert frequent_itemsets(db, min_count) == oracles.brute_itemsets(db, min_count)
        support = rng.randint(0, 5)
        conf = rng.choice([0.3, 0.5, 0.8])
        for r in mine_rules(db, support, conf):
            ante = sum(1 for t in db if r.antecedent in t)
            joint = sum(1 for t in db if r.antecedent in t and r.consequent in t)
            assert (r.antecedent_apps, r.joint_apps) == (ante, joint)
            assert r.confidence == Fraction(joint, ante)
            assert joint > support and Fraction(joint, ante) > Fraction(conf).limit_denominator(10**9)
            n_rules += 1
    elapsed = time.perf_counter() - t0
    assert DEFAULT_MIN_SUPPORT_APPS == 500 and DEFAULT_MIN_CONF == 0.8
    # the defaults apply when no thresholds are passed: 501 apps needed
    db = [frozenset({(3, "NETWORK"), (8, "NETWORK")})] * 501
    assert len(mine_rules(db)) == 2
    assert mine_rules(db[:500]) == []
    record_property("detail", f"{n_rules} rules rechecked, {elapsed:.2f}s")
    assert elapsed < 30


# ---------------------------------------------------------------- 8


@pytest.mark.criterion(8, "k-means: monotone objective, planted clusters recovered, DBI to 1e-9, seed-stable")
def test_c8_clustering(record_property):
    rng = np.random.default_rng(8)
    runs = 0
    for _ in range(50):
        X = rng.normal(size=(rng.integers(5, 60), rng.integers(1, 6))) * rng.uniform(0.5, 5)
        for k in range(1, min(6, len(X)) + 1):
            res = kmeans(X, k, seed=int(rng.integers(1000)))
            obj = res.objective
            assert all(b <= a + 1e-9 * max(1.0, a) for a, b in zip(obj, obj[1:]))
            runs += 1

    a = rng.normal(0.0, 0.3, size=(20, 4))
    b = rng.normal(10.0, 0.3, size=(15, 4))
    X = np.vstack([a, b])
    planted = np.array([0] * 20 + [1] * 15)
    for seed in range(10):
        labels = kmeans(X, 2, seed=seed).labels
        assert np.array_equal(labels, planted) or np.array_equal(labels, 1 - planted)

    H = np.array([[0, 0], [0, 2], [2, 0], [9, 9], [9, 11], [12, 9], [30, 0]], dtype=float)
    hl = np.array([0, 0, 0, 1, 1, 1, 2])
    assert abs(dbi(H, hl) - oracles.dbi_oracle(H, hl)) <= 1e-9

    first = kmeans(X, 3, seed=42)
    for _ in range(5):
        again = kmeans(X, 3, seed=42)
        assert np.array_equal(again.labels, first.labels)
        assert np.array_equal(again.centroids, first.centroids)
    record_property("detail", f"{runs} monotonicity runs, DBI={dbi(H, hl):.12f}")


# ---------------------------------------------------------------- 9

SEVERITY_TABLE = {
    1: 10, 2: 10, 3: 10, 4: 10, 5: 10, 6: 10, 7: 10, 8: 10, 9: 7, 10: 7, 11: 7,
    12: 7, 13: 7, 14: 4, 15: 4, 16: 4, 17: 10, 18: 4, 19: 7, 20: 1, 21: 1,
}  # fmt: skip
SINK_TABLE = {
    "SMS_MMS": 1, "NC_OTHER": 1, "LOG": 3, "SYNC": 4, "NC_STORAGE": 4,
    "FILE": 5, "NC_OUT_STREAM": 5, "NC_ICC": 7, "NETWORK": 10,
}  # fmt: skip


@pytest.mark.criterion(9, "Severity and sink weights match the published tables for all 21 ids and 9 categories")
def test_c9_weight_tables(record_property):
    assert {i: severity_weight(i) for i in VULN_IDS} == SEVERITY_TABLE
    assert {sc: risk_weight(sc) for sc in SINK_CATEGORIES} == SINK_TABLE
    assert len(SEVERITY_TABLE) == 21 and len(SINK_TABLE) == 9
    record_property("detail", "21 ids, 9 categories")


# ---------------------------------------------------------------- 10


def _pipeline(root: Path) -> dict[str, bytes]:
    corpus, det, risk, fleet = root / "corpus", root / "det", root / "risk", root / "fleet"
    steps = [
        ["synth", str(corpus), "--apps", "25", "--seed", "3"],
        ["detect", str(corpus / "programs"), "--reports", str(corpus / "reports"), "-o", str(det), "--jobs", "2"],
        ["assess", str(corpus / "programs"), str(det), "-o", str(risk), "--jobs", "2"],
        ["fleet", "cluster", str(risk), "-o", str(fleet), "--k", "4", "--k-range", "2-8", "--seed", "5"],
        ["fleet", "mine", str(risk), "-o", str(fleet), "--min-support-apps", "2", "--min-conf", "0.5"],
    ]
    for argv in steps:
        assert cli_main(argv) == 0, argv
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.criterion(10, "detect -> assess -> fleet on 25 synthetic apps is byte-identical across runs, < 2 min")
def test_c10_pipeline_determinism(tmp_path, record_property):
    t0 = time.perf_counter()
    first = _pipeline(tmp_path / "run1")
    second = _pipeline(tmp_path / "run2")
    elapsed = time.perf_counter() - t0
    assert first.keys() == second.keys()
    differing = [k for k in first if first[k] != second[k]]
    assert differing == []
    assert any(k.endswith(".risk.json") for k in first) and "fleet/clusters.csv" in first
    record_property("detail", f"{len(first)} files compared, {elapsed:.1f}s for both runs")
    assert elapsed < 120
