from __future__ import annotations

import random
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cryptorisk.appir import Loc, ProgramBuilder, call_sites_of
from cryptorisk.dataflow import (
    TaintConfig,
    annotate,
    annotate_with_flows,
    ds_track,
    refine_sources,
    taint_connect,
)
from cryptorisk.detector import detect
from cryptorisk.errors import DomainError
from cryptorisk.misuse import MisuseTuple
from cryptorisk.synth import RANDOM_RECEIVER_SOURCES, RANDOM_SINKS, RANDOM_SOURCES, random_program
from cryptorisk.taxonomy import default_taxonomy

MAIN = "com.example.SecureSender"
GET = "javax.crypto.Cipher.getInstance(java.lang.String)"


def _sink(program, name):
    return call_sites_of(program, name)[0]


def test_motivating_flows(motivating):
    tax = default_taxonomy()
    sources = refine_sources(GET, motivating)
    assert "javax.crypto.Cipher.doFinal(byte[])" in sources
    flows = taint_connect(motivating, TaintConfig(sources, tax.sink_signatures))
    sinks = {f.sink for f in flows if f.source.method.startswith(f"{MAIN}.encrypt")}
    assert sinks == {
        _sink(motivating, "java.io.DataOutputStream.write(byte[])"),
        _sink(motivating, "java.io.FileOutputStream.write(byte[])"),
    }


def test_ds_track_categories(motivating):
    net = _sink(motivating, "java.io.DataOutputStream.write(byte[])")
    fil = _sink(motivating, "java.io.FileOutputStream.write(byte[])")
    assert ds_track(motivating, net) == "NETWORK"
    assert ds_track(motivating, fil) == "FILE"
    with pytest.raises(DomainError):
        ds_track(motivating, Loc(f"{MAIN}.encrypt(java.lang.String)", 0))
    with pytest.raises(DomainError):
        ds_track(motivating, Loc("x.Y.z()", 0))


def test_refine_sources_kinds(motivating):
    assert refine_sources("javax.crypto.Cipher.doFinal(byte[])", motivating) == {"javax.crypto.Cipher.doFinal(byte[])"}
    with pytest.raises(DomainError):
        refine_sources("com.acme.Foo.bar()", motivating)


def test_annotation_with_flow_records(motivating):
    tuples = [t for t in detect(motivating) if t.id == 12]
    ann = annotate_with_flows(tuples, motivating)
    assert sorted(ann.tuples[0].S) == ["FILE", "NETWORK"]
    assert {r.category for r in ann.flows} == {"FILE", "NETWORK"}
    assert all(r.misuse == tuples[0].key for r in ann.flows)


def test_unlocatable_and_unknown_api(motivating):
    p = f"{MAIN}.save(byte[])"
    t = MisuseTuple(GET, 12, p, "", "CG", Loc(p, 0))
    (out,) = annotate([t], motivating)
    assert out.unlocatable and out.S == ()
    # an API outside the catalog is tracked as its own source, with a warning
    u = MisuseTuple("java.lang.String.getBytes()", 21, f"{MAIN}.encrypt(java.lang.String)", "", "CC", Loc(f"{MAIN}.encrypt(java.lang.String)", 0))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        (res,) = annotate([u], motivating)
    assert any("not in the API catalog" in str(w.message) for w in caught)
    assert not res.unlocatable


def test_depth_validation():
    with pytest.raises(DomainError):
        TaintConfig(frozenset(), frozenset(), depth=0)


def _chain_program(length):
    """m0 reads a source and passes it down a chain of ``length`` calls to a sink."""
    obj = "java.lang.Object"
    pb = ProgramBuilder("chain")
    cb = pb.add_class("c.C")
    for k in range(length + 1):
        mb = cb.method(f"m{k}", [("x", obj)], static=True)
        if k == 0:
            mb.call("v", next(iter(sorted(RANDOM_SOURCES))), ["x"], type=obj)
        else:
            mb.assign("v", "x")
        if k < length:
            mb.call(None, f"c.C.m{k + 1}({obj})", ["v"])
        else:
            mb.call(None, next(iter(sorted(RANDOM_SINKS))), ["v"])
        mb.ret()
    return pb.build()


def test_depth_bound_cuts_long_chains():
    p = _chain_program(4)
    entry_only = lambda flows: {f for f in flows if f.source.method == "c.C.m0(java.lang.Object)"}  # noqa: E731
    shallow = taint_connect(p, TaintConfig(RANDOM_SOURCES, RANDOM_SINKS, depth=3))
    deep = taint_connect(p, TaintConfig(RANDOM_SOURCES, RANDOM_SINKS, depth=4))
    assert entry_only(shallow) == set()
    assert len(entry_only(deep)) == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**9), st.integers(1, 4))
def test_more_depth_never_loses_flows(seed, k):
    p = random_program(random.Random(seed))
    cfg = lambda d: TaintConfig(RANDOM_SOURCES, RANDOM_SINKS, d, RANDOM_RECEIVER_SOURCES)  # noqa: E731
    assert taint_connect(p, cfg(k)) <= taint_connect(p, cfg(k + 1))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**9))
def test_sound_against_path_oracle(seed):
    p = random_program(random.Random(seed))
    cfg = TaintConfig(RANDOM_SOURCES, RANDOM_SINKS, max(1, len(p.methods)), RANDOM_RECEIVER_SOURCES)
    got = {(f.source, f.sink) for f in taint_connect(p, cfg)}
    assert oracles.taint_oracle(p, RANDOM_SOURCES, RANDOM_SINKS, RANDOM_RECEIVER_SOURCES) <= got


def test_malformed_signatures_warn():
    p = _chain_program(1)
    with pytest.warns(UserWarning):
        taint_connect(p, TaintConfig({"not a signature"}, RANDOM_SINKS))
