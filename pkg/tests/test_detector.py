from __future__ import annotations

import random

import pytest

from cryptorisk.appir import ProgramBuilder, parse_program, dump_program
from cryptorisk.detector import RULES, detect, parse_transformation, rule_for
from cryptorisk.synth import SNIPPETS, synthetic_app
from cryptorisk.taxonomy import VULN_IDS

S = "java.lang.String"
CIPHER = "javax.crypto.Cipher"
HTTPS = "javax.net.ssl.HttpsURLConnection"


def _one(build, cls="t.App"):
    pb = ProgramBuilder("t")
    cb = pb.add_class(cls)
    mb = cb.method("f", [("input", S)])
    build(mb, pb)
    mb.ret()
    return pb.build()


def _ids(program):
    return sorted(t.id for t in detect(program))


def _cipher(tr):
    def build(mb, _):
        mb.const("tr", tr).call("c", f"{CIPHER}.getInstance({S})", ["tr"], type=CIPHER)
        mb.const("one", 1).const("k", None, type="java.security.Key")
        mb.call(None, f"{CIPHER}.init(int,java.security.Key)", ["one", "k"], receiver="c")
        mb.call("o", f"{CIPHER}.doFinal(byte[])", ["k"], receiver="c", type="byte[]")

    return _one(build)


@pytest.mark.parametrize(
    "tr, want",
    [
        ("AES", [12]),
        ("AES/ECB/PKCS5Padding", [12]),
        ("AES/GCM/NoPadding", []),
        ("AES/CBC/PKCS5Padding", []),
        ("DES", [12, 15]),
        ("DES/CBC/PKCS5Padding", [15]),
        ("RSA/ECB/PKCS1Padding", [16]),
        ("RSA/ECB/OAEPWithSHA-256AndMGF1Padding", []),
    ],
)
def test_cipher_transformations(tr, want):
    assert _ids(_cipher(tr)) == want


def test_parse_transformation():
    assert parse_transformation("AES") == ("AES", None, None)
    assert parse_transformation("AES/CBC/PKCS5Padding") == ("AES", "CBC", "PKCS5Padding")


def test_non_constant_transformation_is_21():
    def build(mb, _):
        mb.call("c", f"{CIPHER}.getInstance({S})", ["input"], type=CIPHER)

    ids = _ids(_one(build))
    assert 21 in ids and 12 not in ids


@pytest.mark.parametrize("alg, want", [("MD5", [17]), ("SHA-1", [17]), ("SHA-256", [])])
def test_digests(alg, want):
    def build(mb, _):
        mb.const("a", alg).call("md", f"java.security.MessageDigest.getInstance({S})", ["a"], type="java.security.MessageDigest")
        mb.call("o", "java.security.MessageDigest.digest(byte[])", ["a"], receiver="md", type="byte[]")

    assert _ids(_one(build)) == want


def test_http_url_and_expired_tls():
    def build(mb, _):
        mb.const("u", "http://example.com").new("url", "java.net.URL", ["u"], [S])
        mb.const("p", "SSLv3").call("ctx", f"javax.net.ssl.SSLContext.getInstance({S})", ["p"], type="javax.net.ssl.SSLContext")

    assert _ids(_one(build)) == [7, 8]


def test_https_url_is_fine():
    def build(mb, _):
        mb.const("u", "https://example.com").new("url", "java.net.URL", ["u"], [S])

    assert _ids(_one(build)) == []


def test_short_rsa_key():
    def build(mb, _):
        mb.const("a", "RSA").call("g", f"java.security.KeyPairGenerator.getInstance({S})", ["a"], type="java.security.KeyPairGenerator")
        mb.const("n", 1024).call(None, "java.security.KeyPairGenerator.initialize(int)", ["n"], receiver="g")

    assert _ids(_one(build)) == [16]


def test_typestate_and_incomplete_usage():
    def build(mb, _):
        mb.const("tr", "AES/GCM/NoPadding").call("c", f"{CIPHER}.getInstance({S})", ["tr"], type=CIPHER)
        mb.const("b", None, type="byte[]")
        mb.call("o", f"{CIPHER}.update(byte[])", ["b"], receiver="c", type="byte[]")

    # update before init (18) and never finalised (20)
    assert _ids(_one(build)) == [18, 20]


def _ssl_program(verifier_returns):
    pb = ProgramBuilder("ssl")
    hv = pb.add_class("t.AllowAll", interfaces=["javax.net.ssl.HostnameVerifier"])
    vm = hv.method("verify", [("h", S), ("s", "javax.net.ssl.SSLSession")])
    vm.const("r", verifier_returns).ret("r")
    tm = pb.add_class("t.TrustAll", interfaces=["javax.net.ssl.X509TrustManager"])
    tm.method("checkServerTrusted", [("c", "java.security.cert.X509Certificate[]"), ("a", S)]).ret()
    main = pb.add_class("t.Main")
    mb = main.method("setup", [("conn", HTTPS)])
    mb.new("v", "t.AllowAll")
    mb.call(None, f"{HTTPS}.setHostnameVerifier(javax.net.ssl.HostnameVerifier)", ["v"], receiver="conn")
    mb.new("t", "t.TrustAll")
    mb.const("p", "TLSv1.2").call("ctx", f"javax.net.ssl.SSLContext.getInstance({S})", ["p"], type="javax.net.ssl.SSLContext")
    mb.const("none", None, type="java.lang.Object")
    mb.call(
        None,
        "javax.net.ssl.SSLContext.init(javax.net.ssl.KeyManager[],javax.net.ssl.TrustManager[],java.security.SecureRandom)",
        ["none", "t", "none"],
        receiver="ctx",
    )
    mb.ret()
    return pb.build()


def test_structural_ssl_rules():
    assert _ids(_ssl_program(True)) == [4, 5]
    assert _ids(_ssl_program(False)) == [5]


@pytest.mark.parametrize(
    "snippet, expected",
    [("constkey", {1}), ("seed", {9}), ("pbe", {11, 14}), ("iv", {13}), ("random", {10}), ("tls", {8})],
)
def test_snippets(snippet, expected):
    p = synthetic_app("s", random.Random(1), [snippet])
    assert set(_ids(p)) == expected


def test_rule_table_covers_taxonomy():
    assert sorted({r.vuln_id for r in RULES}) == list(VULN_IDS)
    assert [r.rule_id for r in rule_for(12)] == ["BI-12"]


def test_detect_is_deterministic_and_sorted(motivating):
    a = detect(motivating)
    b = detect(parse_program(dump_program(motivating)))
    assert a == b
    assert all(t.t == "BI" and t.S == () for t in a)


def test_every_snippet_detected():
    for name in sorted(SNIPPETS):
        p = synthetic_app("s", random.Random(5), [name])
        if name != "hash":  # SHA-256 is a legitimate choice for some seeds
            assert detect(p), name
