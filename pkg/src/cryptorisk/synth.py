"""Seeded generators for test programs and demo corpora.

:func:`random_program` makes small loop-free programs over made-up source,
sink and library APIs, for checking the taint engine against exhaustive
path enumeration. :func:`make_corpus` assembles realistic apps from misuse
and leak snippets, and writes external detector reports for them.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from cryptorisk.appir.builder import MethodBuilder, ProgramBuilder
from cryptorisk.appir.ceir import dump_program
from cryptorisk.appir.model import Call, Loc, Program, split_signature
from cryptorisk.detector import detect
from cryptorisk.misuse import MisuseTuple
from cryptorisk.taxonomy import ApiKind, Taxonomy, default_taxonomy

OBJ = "java.lang.Object"
SRC = f"test.Source.read({OBJ})"
SRC0 = "test.Source.fresh()"
SRC_RECV = f"test.Source.fill({OBJ})"  # taints its receiver
SINK = f"test.Sink.put({OBJ})"
SINK2 = f"test.Sink.send({OBJ},{OBJ})"
LIB = f"test.Lib.mix({OBJ},{OBJ})"
LIB1 = "test.Lib.copy()"
RANDOM_SOURCES = frozenset({SRC, SRC0, SRC_RECV})
RANDOM_SINKS = frozenset({SINK, SINK2})
RANDOM_RECEIVER_SOURCES = frozenset({SRC_RECV})


def random_program(rng: random.Random, max_methods: int = 8, max_statements: int = 40) -> Program:
    """A loop-free program whose methods only call methods declared after them.

    Branches jump forward, so every method body is a DAG and every call
    chain is finite; total statement count stays within ``max_statements``.
    """
    n_methods = rng.randint(1, max_methods)
    budget = max_statements
    pb = ProgramBuilder(f"rand{rng.randrange(10**6)}")
    cls = "r.C"
    cb = pb.add_class(cls).field("f0", OBJ).field("f1", OBJ)
    fields = [f"{cls}.f0", f"{cls}.f1"]
    shapes = []
    for k in range(n_methods):
        n_params = rng.randint(0, 2)
        static = rng.random() < 0.3
        shapes.append((f"m{k}", n_params, static))
    sigs = [f"{cls}.{name}({','.join([OBJ] * n)})" for name, n, _ in shapes]

    per_method = [1] * n_methods
    for _ in range(max(0, budget - n_methods - rng.randint(0, budget // 3))):
        per_method[rng.randrange(n_methods)] += 1

    for k, (name, n_params, static) in enumerate(shapes):
        params = [(f"p{i}", OBJ) for i in range(n_params)]
        mb = cb.method(name, params, static=static)
        names = [p for p, _ in params] + [f"v{i}" for i in range(4)]
        if not static:
            names.append("this")
        for v in range(4):
            mb.declare(f"v{v}", OBJ)
        n_stmts = per_method[k]
        labels = 0
        pending: list[str] = []
        for pos in range(n_stmts - 1):
            for lab in [l for l in pending if rng.random() < 0.5]:
                pending.remove(lab)
                mb.mark(lab)
            dst = f"v{rng.randrange(4)}"
            pick = lambda: rng.choice(names)  # noqa: E731
            r = rng.random()
            if r < 0.12:
                mb.const(dst, rng.randrange(5), type=OBJ)
            elif r < 0.24:
                mb.assign(dst, pick())
            elif r < 0.36:
                if rng.random() < 0.5:
                    mb.call(dst, SRC, [pick()], type=OBJ)
                else:
                    mb.call(dst, SRC0, [], type=OBJ)
            elif r < 0.42:
                mb.call(None, SRC_RECV, [pick()], receiver=pick())
            elif r < 0.54:
                if rng.random() < 0.5:
                    mb.call(None, SINK, [pick()], receiver=pick() if rng.random() < 0.5 else None)
                else:
                    mb.call(None, SINK2, [pick(), pick()])
            elif r < 0.62:
                if rng.random() < 0.5:
                    mb.call(dst, LIB, [pick(), pick()], type=OBJ)
                else:
                    mb.call(dst, LIB1, [], receiver=pick(), type=OBJ)
            elif r < 0.70:
                mb.load(dst, rng.choice(fields), type=OBJ)
            elif r < 0.78:
                mb.store(rng.choice(fields), pick())
            elif r < 0.88 and k + 1 < n_methods:
                j = rng.randrange(k + 1, n_methods)
                _, nj, sj = shapes[j]
                args = [pick() for _ in range(nj)]
                recv = None if sj else pick()
                mb.call(dst if rng.random() < 0.7 else None, sigs[j], args, receiver=recv, type=OBJ)
            elif pos < n_stmts - 2:
                lab = f"L{labels}"
                labels += 1
                pending.append(lab)
                if rng.random() < 0.7:
                    mb.branch(lab)
                else:
                    mb.goto(lab)
            else:
                mb.const(dst, None, type=OBJ)
        for lab in pending:
            mb.mark(lab)
        mb.ret(rng.choice(names) if rng.random() < 0.7 else None)
    return pb.build()


# ---------------------------------------------------------------------------
# realistic corpus

S = "java.lang.String"
CIPHER = "javax.crypto.Cipher"


def _keygen(mb: MethodBuilder, key: str, bits: int = 128) -> None:
    mb.const("kgAlg", "AES").call("kg", "javax.crypto.KeyGenerator.getInstance(java.lang.String)", ["kgAlg"], type="javax.crypto.KeyGenerator")
    mb.const("kbits", bits).call(None, "javax.crypto.KeyGenerator.init(int)", ["kbits"], receiver="kg")
    mb.call(key, "javax.crypto.KeyGenerator.generateKey()", receiver="kg", type="javax.crypto.SecretKey")


def _encrypt(mb: MethodBuilder, transformation: str, key: str, spec: str | None = None, out: str = "out") -> None:
    mb.const("tr", transformation).call("c", f"{CIPHER}.getInstance({S})", ["tr"], type=CIPHER)
    mb.const("encMode", 1)
    if spec is None:
        mb.call(None, f"{CIPHER}.init(int,java.security.Key)", ["encMode", key], receiver="c")
    else:
        mb.call(None, f"{CIPHER}.init(int,java.security.Key,java.security.spec.AlgorithmParameterSpec)", ["encMode", key, spec], receiver="c")
    mb.call("plain", f"{S}.getBytes()", receiver="input", type="byte[]")
    mb.call(out, f"{CIPHER}.doFinal(byte[])", ["plain"], receiver="c", type="byte[]")


def _snip_ecb(mb: MethodBuilder, rng: random.Random) -> None:
    _keygen(mb, "key")
    _encrypt(mb, rng.choice(["AES", "AES/ECB/PKCS5Padding", "DES", "DESede/ECB/NoPadding", "Blowfish"]), "key")
    mb.ret("out")


def _snip_hash(mb: MethodBuilder, rng: random.Random) -> None:
    mb.const("h", rng.choice(["MD5", "SHA-1", "MD5", "SHA-256"]))
    mb.call("md", "java.security.MessageDigest.getInstance(java.lang.String)", ["h"], type="java.security.MessageDigest")
    mb.call("raw", f"{S}.getBytes()", receiver="input", type="byte[]")
    mb.call("out", "java.security.MessageDigest.digest(byte[])", ["raw"], receiver="md", type="byte[]")
    mb.ret("out")


def _snip_const_key(mb: MethodBuilder, rng: random.Random) -> None:
    mb.const("kb", [rng.randrange(256) for _ in range(16)], type="byte[]").const("ka", "AES")
    mb.new("key", "javax.crypto.spec.SecretKeySpec", ["kb", "ka"], ["byte[]", S])
    _encrypt(mb, "AES/GCM/NoPadding", "key")
    mb.ret("out")


def _snip_seed(mb: MethodBuilder, rng: random.Random) -> None:
    mb.new("sr", "java.security.SecureRandom")
    mb.const("seed", rng.randrange(1, 10**6), type="long")
    mb.call(None, "java.security.SecureRandom.setSeed(long)", ["seed"], receiver="sr")
    mb.const("kgAlg", "AES").call("kg", "javax.crypto.KeyGenerator.getInstance(java.lang.String)", ["kgAlg"], type="javax.crypto.KeyGenerator")
    mb.const("kbits", 256).call(None, "javax.crypto.KeyGenerator.init(int,java.security.SecureRandom)", ["kbits", "sr"], receiver="kg")
    mb.call("key", "javax.crypto.KeyGenerator.generateKey()", receiver="kg", type="javax.crypto.SecretKey")
    _encrypt(mb, "AES/CBC/PKCS5Padding", "key")
    mb.ret("out")


def _snip_pbe(mb: MethodBuilder, rng: random.Random) -> None:
    mb.const("salt", [rng.randrange(256) for _ in range(8)], type="byte[]").const("iters", rng.choice([20, 100, 500]))
    mb.new("ps", "javax.crypto.spec.PBEParameterSpec", ["salt", "iters"], ["byte[]", "int"])
    _keygen(mb, "key")
    _encrypt(mb, "PBEWithHmacSHA256AndAES_128", "key", spec="ps")
    mb.ret("out")


def _snip_iv(mb: MethodBuilder, rng: random.Random) -> None:
    mb.const("ivb", [0] * 16, type="byte[]")
    mb.new("ivs", "javax.crypto.spec.IvParameterSpec", ["ivb"], ["byte[]"])
    _keygen(mb, "key")
    _encrypt(mb, "AES/CBC/PKCS5Padding", "key", spec="ivs")
    mb.ret("out")


def _snip_random(mb: MethodBuilder, rng: random.Random) -> None:
    mb.new("rnd", "java.util.Random")
    mb.call("token", "java.util.Random.nextLong()", receiver="rnd", type="long")
    mb.call("out", f"{S}.valueOf(long)", ["token"], type=S)
    mb.ret("out")


def _snip_tls(mb: MethodBuilder, rng: random.Random) -> None:
    mb.const("proto", rng.choice(["TLSv1", "SSLv3", "TLSv1.1"]))
    mb.call("ctx", "javax.net.ssl.SSLContext.getInstance(java.lang.String)", ["proto"], type="javax.net.ssl.SSLContext")
    mb.const("none", None, type=OBJ)
    mb.call(
        None,
        "javax.net.ssl.SSLContext.init(javax.net.ssl.KeyManager[],javax.net.ssl.TrustManager[],java.security.SecureRandom)",
        ["none", "none", "none"],
        receiver="ctx",
    )
    mb.call("out", "javax.net.ssl.SSLContext.getSocketFactory()", receiver="ctx", type="javax.net.ssl.SSLSocketFactory")
    mb.ret("out")


SNIPPETS: dict[str, Callable[[MethodBuilder, random.Random], None]] = {
    "ecb": _snip_ecb,
    "hash": _snip_hash,
    "constkey": _snip_const_key,
    "seed": _snip_seed,
    "pbe": _snip_pbe,
    "iv": _snip_iv,
    "random": _snip_random,
    "tls": _snip_tls,
}


def _leak_network(mb: MethodBuilder) -> None:
    mb.const("spec", "https://api.example.com/v1/upload").new("url", "java.net.URL", ["spec"], [S])
    mb.call("conn", "java.net.URL.openConnection()", receiver="url", type="java.net.URLConnection")
    mb.assign("http", "conn", type="java.net.HttpURLConnection")
    mb.call("os", "java.net.HttpURLConnection.getOutputStream()", receiver="http", type="java.io.OutputStream")
    mb.new("dos", "java.io.DataOutputStream", ["os"], ["java.io.OutputStream"])
    mb.call(None, "java.io.DataOutputStream.write(byte[])", ["data"], receiver="dos")


def _leak_file(mb: MethodBuilder) -> None:
    mb.const("path", "/data/data/app/cache.bin").new("fos", "java.io.FileOutputStream", ["path"], [S])
    mb.call(None, "java.io.FileOutputStream.write(byte[])", ["data"], receiver="fos")


def _leak_log(mb: MethodBuilder) -> None:
    mb.const("tag", "DEBUG").call("msg", f"{OBJ}.toString()", receiver="data", type=S)
    mb.call(None, f"android.util.Log.d({S},{S})", ["tag", "msg"])


def _leak_prefs(mb: MethodBuilder) -> None:
    mb.load("ed", "android.app.Prefs.editor", type="android.content.SharedPreferences$Editor")
    mb.const("k", "token").call("msg", f"{OBJ}.toString()", receiver="data", type=S)
    mb.call(None, f"android.content.SharedPreferences$Editor.putString({S},{S})", ["k", "msg"], receiver="ed")


def _leak_intent(mb: MethodBuilder) -> None:
    mb.new("it", "android.content.Intent").const("k", "payload")
    mb.call(None, f"android.content.Intent.putExtra({S},byte[])", ["k", "data"], receiver="it")


def _leak_stream(mb: MethodBuilder) -> None:
    mb.new("bos", "java.io.ByteArrayOutputStream")
    mb.call(None, "java.io.OutputStream.write(byte[])", ["data"], receiver="bos")


LEAKS: dict[str, Callable[[MethodBuilder], None]] = {
    "network": _leak_network,
    "file": _leak_file,
    "log": _leak_log,
    "prefs": _leak_prefs,
    "intent": _leak_intent,
    "stream": _leak_stream,
}


def synthetic_app(app_id: str, rng: random.Random, snippets: list[str] | None = None) -> Program:
    """One app: misuse snippets whose outputs are handed to randomly chosen leak methods."""
    if snippets is None:
        snippets = rng.sample(sorted(SNIPPETS), rng.choice([0, 1, 1, 2, 2, 3, 4]))
    pkg = f"com.synth.{app_id.replace('-', '_')}"
    main = f"{pkg}.Main"
    pb = ProgramBuilder(app_id)
    cb = pb.add_class(main)
    leaks_used: set[str] = set()
    plan = []
    for name in snippets:
        mb = cb.method(f"use_{name}", [("input", S)])
        SNIPPETS[name](mb, rng)
        chosen = rng.sample(sorted(LEAKS), rng.choice([0, 1, 1, 2, 3]))
        leaks_used.update(chosen)
        plan.append((name, chosen))
    for leak in sorted(leaks_used):
        mb = cb.method(f"leak_{leak}", [("data", "byte[]")])
        LEAKS[leak](mb)
        mb.ret()
    run = cb.method("run", [("msg", S)])
    for n, (name, chosen) in enumerate(plan):
        res = f"r{n}"
        run.call(res, f"{main}.use_{name}({S})", ["msg"], receiver="this", type="byte[]")
        for leak in chosen:
            run.call(None, f"{main}.leak_{leak}(byte[])", [res], receiver="this")
    run.const("greeting", "hello").call("len", f"{S}.length()", receiver="greeting", type="int")
    run.ret()
    pb.entry(f"{main}.run({S})")
    return pb.build()


# detector-specific tags and descriptions for simulated external reports
_CC_TAGS = {
    1: ("RequiredPredicateError", "key material is not randomized"),
    2: ("NeverTypeOfError", "password held in a String-derived char[]"),
    3: ("NeverTypeOfError", "keystore password is hard-coded"),
    8: ("ConstraintError", "protocol version is outside the allowed set"),
    9: ("TypestateError", "setSeed called with a predictable seed"),
    10: ("RequiredPredicateError", "value not produced by a secure random generator"),
    11: ("RequiredPredicateError", "salt is not randomized"),
    12: ("ConstraintError", "transformation selects ECB mode"),
    13: ("RequiredPredicateError", "initialization vector is not randomized"),
    14: ("ConstraintError", "iteration count below the required minimum"),
    15: ("ConstraintError", "algorithm DES uses a 64-bit block"),
    16: ("ConstraintError", "RSA used without OAEP"),
    17: ("ConstraintError", "digest algorithm is broken"),
    18: ("TypestateError", "operation called in an unexpected state"),
    19: ("ForbiddenMethodError", "call to a forbidden method"),
    20: ("IncompleteOperationError", "object never completes its protocol"),
    21: ("ImpreciseValueExtractionError", "parameter value cannot be determined"),
}


def _cg_tag(vuln_id: int) -> str:
    return f"vul.{vuln_id if vuln_id <= 7 else vuln_id - 1}"


def simulated_reports(
    program: Program, rng: random.Random, taxonomy: Taxonomy | None = None, recall: float = 0.85, noise: float = 0.15
) -> dict[str, dict]:
    """CG and CC report documents that partially agree with the built-in detector.

    Each built-in finding is echoed by each capable tool with probability
    ``recall``; with probability ``noise`` a tool adds one spurious finding
    at a random crypto call site, and occasionally an unmappable one.
    """
    tax = taxonomy or default_taxonomy()
    truth = detect(program, tax)
    calls = sorted(
        {
            (s.callee, m.signature, s.id)
            for m, s in program.iter_statements()
            if isinstance(s, Call) and tax.classify_api(s.callee) is not ApiKind.UNKNOWN
        }
    )
    docs: dict[str, dict] = {}
    for det in ("CG", "CC"):
        cap = tax.capability(det)
        findings = []
        for t in truth:
            if t.id in cap and rng.random() < recall:
                findings.append(_finding(det, t))
        if calls and rng.random() < noise:
            m, p, stmt = rng.choice(calls)
            vid = rng.choice(sorted(cap))
            fake = MisuseTuple(m, vid, p, "spurious", det, Loc(p, stmt))
            findings.append(_finding(det, fake))
        if rng.random() < noise / 3 and calls:
            m, p, stmt = rng.choice(calls)
            findings.append({"err": "UnknownCheck" if det == "CC" else "vul.99", "m": m, "p": p, "d": "unclassified", "loc": {"method": p, "stmt": stmt}})
        docs[det] = {"detector": det, "format_version": "1", "app_id": program.app_id, "findings": findings}
    return docs


def _finding(det: str, t: MisuseTuple) -> dict:
    if det == "CG":
        err, d = _cg_tag(t.id), f"{split_signature(t.m)[1]}: {t.d}"
    else:
        err, d = _CC_TAGS[t.id]
    return {"err": err, "m": t.m, "p": t.p, "d": d, "loc": t.loc.to_json()}


@dataclass(frozen=True)
class CorpusLayout:
    root: Path

    @property
    def programs(self) -> Path:
        return self.root / "programs"

    @property
    def reports(self) -> Path:
        return self.root / "reports"


def make_corpus(root: str | Path, n_apps: int = 25, seed: int = 0, taxonomy: Taxonomy | None = None) -> CorpusLayout:
    """Write ``n_apps`` CEIR programs and their CG/CC reports under ``root``."""
    rng = random.Random(seed)
    layout = CorpusLayout(Path(root))
    layout.programs.mkdir(parents=True, exist_ok=True)
    layout.reports.mkdir(parents=True, exist_ok=True)
    width = len(str(max(n_apps - 1, 0)))
    for k in range(n_apps):
        app_id = f"app{k:0{width}d}"
        prog = synthetic_app(app_id, rng)
        (layout.programs / f"{app_id}.json").write_text(dump_program(prog), encoding="utf-8")
        if rng.random() < 0.9:
            for det, doc in simulated_reports(prog, rng, taxonomy).items():
                (layout.reports / f"{app_id}.{det}.json").write_text(
                    json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8"
                )
    return layout
