"""Built-in rule-based misuse detector (detector id ``BI``).

Each rule checks one row of the vulnerability table against CEIR:

* constant-argument rules ask :func:`~cryptorisk.appir.constant_arg` whether a
  key, password, salt, IV, seed or iteration count is a compile-time literal;
* algorithm-string rules parse ``alg/mode/padding`` transformations, with a
  missing mode meaning ECB;
* structural rules (ids 4, 5, 6) look for program classes overriding
  verifier, trust-manager or socket-factory types that get installed;
* the sequence and incomplete-usage rules (18, 20) follow each
  ``getInstance`` object through the method's statement list;
* id 21 marks algorithm or iteration arguments that are not constants, so the
  misuse cannot be decided statically.

Known imprecision: everything is intra-procedural, arrays are not modelled,
and statement order (not control flow) drives the typestate rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterator

from cryptorisk.appir.analysis import (
    NON_CONSTANT,
    ConstantPropagation,
    ReachingDefinitions,
)
from cryptorisk.appir.model import (
    Assign,
    Call,
    FieldStore,
    Loc,
    MethodDef,
    Program,
    Return,
    split_signature,
)
from cryptorisk.misuse import MisuseTuple, sort_key
from cryptorisk.taxonomy import Taxonomy, default_taxonomy

DETECTOR_ID = "BI"

S = "java.lang.String"
CIPHER = "javax.crypto.Cipher"
MAC = "javax.crypto.Mac"
DIGEST = "java.security.MessageDigest"
SIGNATURE = "java.security.Signature"
HTTPS = "javax.net.ssl.HttpsURLConnection"

CIPHER_GET_INSTANCE = frozenset(
    {f"{CIPHER}.getInstance({S})", f"{CIPHER}.getInstance({S},{S})", f"{CIPHER}.getInstance({S},java.security.Provider)"}
)
DIGEST_GET_INSTANCE = frozenset({f"{DIGEST}.getInstance({S})", f"{DIGEST}.getInstance({S},{S})"})
SSL_GET_INSTANCE = f"javax.net.ssl.SSLContext.getInstance({S})"
KPG_GET_INSTANCE = f"java.security.KeyPairGenerator.getInstance({S})"

SYMMETRIC_BLOCK = frozenset(
    {"AES", "DES", "DESEDE", "TRIPLEDES", "3DES", "BLOWFISH", "IDEA", "RC2", "RC5", "CAMELLIA", "SEED", "TWOFISH", "CAST5", "CAST6", "SKIPJACK", "ARIA"}
)
BLOCK_64_BIT = frozenset({"DES", "DESEDE", "TRIPLEDES", "3DES", "IDEA", "BLOWFISH", "RC2", "RC4", "ARCFOUR", "CAST5", "SKIPJACK"})
ASYMMETRIC = frozenset({"RSA", "EC", "ECIES", "ELGAMAL"})
WEAK_DIGESTS = frozenset({"MD2", "MD4", "MD5", "SHA", "SHA1", "SHA-1"})
EXPIRED_PROTOCOLS = frozenset({"SSL", "SSLV2", "SSLV3", "TLSV1", "TLSV1.1"})
MIN_PBE_ITERATIONS = 1000
MIN_KEY_BITS = {"RSA": 2048, "DSA": 2048, "DH": 2048, "DIFFIEHELLMAN": 2048, "EC": 224}

# (constructor or method, argument index, vuln id, what the argument is)
CONSTANT_ARG_RULES: tuple[tuple[str, int, int, str], ...] = (
    (f"javax.crypto.spec.SecretKeySpec.<init>(byte[],{S})", 0, 1, "key material"),
    (f"javax.crypto.spec.SecretKeySpec.<init>(byte[],int,int,{S})", 0, 1, "key material"),
    ("javax.crypto.spec.PBEKeySpec.<init>(char[])", 0, 2, "PBE password"),
    ("javax.crypto.spec.PBEKeySpec.<init>(char[],byte[],int)", 0, 2, "PBE password"),
    ("javax.crypto.spec.PBEKeySpec.<init>(char[],byte[],int,int)", 0, 2, "PBE password"),
    ("java.security.KeyStore.load(java.io.InputStream,char[])", 1, 3, "KeyStore password"),
    (f"java.security.KeyStore.getKey({S},char[])", 1, 3, "KeyStore password"),
    ("java.security.KeyStore.store(java.io.OutputStream,char[])", 1, 3, "KeyStore password"),
    (f"java.security.KeyStore.setKeyEntry({S},java.security.Key,char[],java.security.cert.Certificate[])", 2, 3, "KeyStore password"),
    ("java.security.SecureRandom.setSeed(byte[])", 0, 9, "PRNG seed"),
    ("java.security.SecureRandom.setSeed(long)", 0, 9, "PRNG seed"),
    ("java.security.SecureRandom.<init>(byte[])", 0, 9, "PRNG seed"),
    ("javax.crypto.spec.PBEParameterSpec.<init>(byte[],int)", 0, 11, "PBE salt"),
    ("javax.crypto.spec.PBEKeySpec.<init>(char[],byte[],int)", 1, 11, "PBE salt"),
    ("javax.crypto.spec.PBEKeySpec.<init>(char[],byte[],int,int)", 1, 11, "PBE salt"),
    ("javax.crypto.spec.IvParameterSpec.<init>(byte[])", 0, 13, "IV"),
    ("javax.crypto.spec.IvParameterSpec.<init>(byte[],int,int)", 0, 13, "IV"),
)

ITERATION_ARGS = {
    "javax.crypto.spec.PBEParameterSpec.<init>(byte[],int)": 1,
    "javax.crypto.spec.PBEKeySpec.<init>(char[],byte[],int)": 2,
    "javax.crypto.spec.PBEKeySpec.<init>(char[],byte[],int,int)": 2,
}

INSECURE_PRNG = frozenset({"java.util.Random.<init>()", "java.util.Random.<init>(long)", "java.lang.Math.random()"})

KEYPAIR_INIT = frozenset(
    {"java.security.KeyPairGenerator.initialize(int)", "java.security.KeyPairGenerator.initialize(int,java.security.SecureRandom)"}
)

# getInstance -> (initialising methods, working methods, finalising methods)
TYPESTATE = {
    CIPHER: ({"init"}, {"update", "doFinal", "wrap", "unwrap"}, {"doFinal", "wrap", "unwrap"}),
    MAC: ({"init"}, {"update", "doFinal"}, {"doFinal"}),
    SIGNATURE: ({"initSign", "initVerify"}, {"update", "sign", "verify"}, {"sign", "verify"}),
    DIGEST: (set(), {"update", "digest"}, {"digest"}),
}

HOSTNAME_VERIFIER = "javax.net.ssl.HostnameVerifier"
TRUST_MANAGERS = frozenset({"javax.net.ssl.X509TrustManager", "javax.net.ssl.TrustManager"})
SOCKET_FACTORY = "javax.net.ssl.SSLSocketFactory"
SET_VERIFIER = frozenset(
    {f"{HTTPS}.setHostnameVerifier({HOSTNAME_VERIFIER})", f"{HTTPS}.setDefaultHostnameVerifier({HOSTNAME_VERIFIER})"}
)
SET_FACTORY = frozenset({f"{HTTPS}.setSSLSocketFactory({SOCKET_FACTORY})", f"{HTTPS}.setDefaultSSLSocketFactory({SOCKET_FACTORY})"})
SSL_CONTEXT_INIT = "javax.net.ssl.SSLContext.init(javax.net.ssl.KeyManager[],javax.net.ssl.TrustManager[],java.security.SecureRandom)"
VERIFY_CALL = f"{HOSTNAME_VERIFIER}.verify({S},javax.net.ssl.SSLSession)"


@dataclass(frozen=True)
class Rule:
    """Documentation record for one built-in rule."""

    rule_id: str
    target: str
    vuln_id: int
    description: str


RULES: tuple[Rule, ...] = (
    Rule("BI-01", "SecretKeySpec.<init>", 1, "key bytes are a constant"),
    Rule("BI-02", "PBEKeySpec.<init>", 2, "PBE password is a constant"),
    Rule("BI-03", "KeyStore.load/getKey/store/setKeyEntry", 3, "KeyStore password is a constant"),
    Rule("BI-04", "HttpsURLConnection.set(Default)HostnameVerifier", 4, "installed verifier always returns true"),
    Rule("BI-05", "SSLContext.init", 5, "installed trust manager's checkServerTrusted validates nothing"),
    Rule("BI-06", "HttpsURLConnection.set(Default)SSLSocketFactory", 6, "custom socket factory, no hostname verification anywhere"),
    Rule("BI-07", "URL.<init>", 7, "constant URL uses http://"),
    Rule("BI-08", "SSLContext.getInstance", 8, "expired SSL/TLS protocol version"),
    Rule("BI-09", "SecureRandom.setSeed / SecureRandom.<init>(byte[])", 9, "seed is a constant"),
    Rule("BI-10", "java.util.Random / Math.random", 10, "non-cryptographic PRNG"),
    Rule("BI-11", "PBEParameterSpec / PBEKeySpec", 11, "salt is a constant"),
    Rule("BI-12", "Cipher.getInstance", 12, "ECB mode, explicit or by default"),
    Rule("BI-13", "IvParameterSpec.<init>", 13, "IV is a constant"),
    Rule("BI-14", "PBEParameterSpec / PBEKeySpec", 14, "fewer than 1000 iterations"),
    Rule("BI-15", "Cipher.getInstance", 15, "64-bit block cipher"),
    Rule("BI-16", "Cipher.getInstance / KeyPairGenerator.initialize", 16, "RSA/EC without OAEP, or short key"),
    Rule("BI-17", "MessageDigest.getInstance", 17, "broken hash function"),
    Rule("BI-18", "Cipher/Mac/Signature/MessageDigest object", 18, "operation before initialisation"),
    Rule("BI-19", "catalog entries marked forbidden", 19, "forbidden API"),
    Rule("BI-20", "Cipher/Mac/Signature/MessageDigest object", 20, "object never finalised"),
    Rule("BI-21", "algorithm / iteration arguments", 21, "argument not statically resolvable"),
)


def parse_transformation(text: str) -> tuple[str, str | None, str | None]:
    """``"AES/CBC/PKCS5Padding"`` -> ``("AES", "CBC", "PKCS5Padding")``; missing parts are None."""
    parts = [p.strip() for p in text.split("/")]
    alg = parts[0]
    mode = parts[1] if len(parts) > 1 and parts[1] else None
    pad = parts[2] if len(parts) > 2 and parts[2] else None
    return alg, mode, pad


def _fmt(value: Any) -> str:
    if isinstance(value, tuple):
        if all(isinstance(v, str) for v in value):
            return repr("".join(value))
        return "[" + ",".join(str(v) for v in value[:8]) + (",..." if len(value) > 8 else "") + "]"
    return repr(value)


class _MethodFacts:
    def __init__(self, method: MethodDef):
        self.method = method
        self.consts = ConstantPropagation(method)
        self.rd = ReachingDefinitions(method)

    def const(self, index: int, local: str) -> Any:
        return self.consts.value_before(index, local)

    def allocations(self, index: int, local: str) -> set[str]:
        """Classes whose constructors may produce the value of ``local`` at ``index``.

        Walks copies and call operands backwards, so values wrapped by a call
        (``tms = wrap(tm)``) still count.
        """
        out: set[str] = set()
        seen: set[tuple[int, str]] = set()
        work = [(index, local)]
        while work:
            at, var = work.pop()
            if (at, var) in seen:
                continue
            seen.add((at, var))
            for d in self.rd.defs_of(at, var):
                if d < 0:
                    continue
                s = self.method.body[d]
                if isinstance(s, Assign):
                    work.append((d, s.src))
                elif isinstance(s, Call):
                    owner, name, _ = split_signature(s.callee)
                    if name == "<init>":
                        out.add(owner)
                    work.extend((d, u) for u in s.uses)
        return out


class BuiltinDetector:
    def __init__(self, taxonomy: Taxonomy | None = None):
        self.taxonomy = taxonomy or default_taxonomy()

    def detect(self, program: Program) -> list[MisuseTuple]:
        found: dict[tuple[int, Loc], MisuseTuple] = {}
        ctx = _ProgramContext(program)
        for method in program.methods.values():
            facts = _MethodFacts(method)
            for index, stmt in enumerate(method.body):
                if not isinstance(stmt, Call):
                    continue
                for vid, d in self._call_rules(ctx, facts, index, stmt):
                    loc = Loc(method.signature, stmt.id)
                    found.setdefault((vid, loc), MisuseTuple(stmt.callee, vid, method.signature, d, DETECTOR_ID, loc))
            for vid, call, d in _object_rules(method):
                loc = Loc(method.signature, call.id)
                found.setdefault((vid, loc), MisuseTuple(call.callee, vid, method.signature, d, DETECTOR_ID, loc))
        return sorted(found.values(), key=sort_key)

    def _call_rules(self, ctx: _ProgramContext, f: _MethodFacts, index: int, s: Call) -> Iterator[tuple[int, str]]:
        callee = s.callee
        arg = lambda i: f.const(index, s.args[i])  # noqa: E731

        for sig, i, vid, what in CONSTANT_ARG_RULES:
            if callee == sig:
                v = arg(i)
                if v is not NON_CONSTANT and v is not None:
                    yield vid, f"{what} is the constant {_fmt(v)} (argument {i} of {callee})"

        if callee in CIPHER_GET_INSTANCE:
            v = arg(0)
            if isinstance(v, str):
                yield from _cipher_transformation(v)
            elif v is NON_CONSTANT:
                yield 21, f"Cipher transformation could not be resolved to a constant (argument 0 of {callee})"
        elif callee in DIGEST_GET_INSTANCE:
            v = arg(0)
            if isinstance(v, str) and v.upper() in WEAK_DIGESTS:
                yield 17, f"insecure hash algorithm {v!r} passed to {callee}"
            elif v is NON_CONSTANT:
                yield 21, f"digest algorithm could not be resolved to a constant (argument 0 of {callee})"
        elif callee == SSL_GET_INSTANCE:
            v = arg(0)
            if isinstance(v, str) and v.upper() in EXPIRED_PROTOCOLS:
                yield 8, f"expired protocol {v!r} requested from SSLContext.getInstance"
            elif v is NON_CONSTANT:
                yield 21, "SSLContext protocol could not be resolved to a constant"
        elif callee == f"java.net.URL.<init>({S})":
            v = arg(0)
            if isinstance(v, str) and v.lower().startswith("http://"):
                yield 7, f"plain HTTP URL {v!r}"
        elif callee in INSECURE_PRNG:
            yield 10, f"{split_signature(callee)[0]} is not a cryptographically secure PRNG ({callee})"
        elif callee in KEYPAIR_INIT:
            v = arg(0)
            if isinstance(v, int) and not isinstance(v, bool):
                algs = {a.upper() for a in ctx.origin_algorithms(f, index, s.receiver, KPG_GET_INSTANCE)}
                limit = min((MIN_KEY_BITS.get(a, 2048) for a in algs), default=2048)
                if v < limit:
                    shown = "/".join(sorted(algs)) or "asymmetric"
                    yield 16, f"{shown} key size {v} below {limit} bits"

        if callee in ITERATION_ARGS:
            v = arg(ITERATION_ARGS[callee])
            if isinstance(v, int) and not isinstance(v, bool) and v < MIN_PBE_ITERATIONS:
                yield 14, f"PBE iteration count {v} is below {MIN_PBE_ITERATIONS} ({callee})"
            elif v is NON_CONSTANT:
                yield 21, f"PBE iteration count could not be resolved to a constant ({callee})"

        if self.taxonomy.is_forbidden(callee):
            yield 19, f"forbidden API {callee}"

        if callee in SET_VERIFIER:
            bad = f.allocations(index, s.args[0]) & ctx.accept_all_verifiers
            for cls in sorted(bad):
                yield 4, f"HostnameVerifier {cls} accepts every host; installed via {callee}"
        elif callee == SSL_CONTEXT_INIT:
            bad = f.allocations(index, s.args[1]) & ctx.trust_all_managers
            for cls in sorted(bad):
                yield 5, f"TrustManager {cls} trusts every certificate; installed via SSLContext.init"
        elif callee in SET_FACTORY and not ctx.verifies_hostnames:
            custom = f.allocations(index, s.args[0]) & ctx.custom_socket_factories
            for cls in sorted(custom):
                yield 6, f"custom SSLSocketFactory {cls} installed via {callee} without hostname verification"


def _cipher_transformation(text: str) -> Iterator[tuple[int, str]]:
    alg, mode, pad = parse_transformation(text)
    a = alg.upper()
    if a in SYMMETRIC_BLOCK and (mode is None or mode.upper() == "ECB"):
        why = "no mode given, so the provider defaults to ECB" if mode is None else "ECB mode requested"
        yield 12, f"Cipher.getInstance({text!r}): {why}"
    if a in BLOCK_64_BIT:
        yield 15, f"Cipher.getInstance({text!r}): {alg} has a 64-bit block"
    if a in ASYMMETRIC and (pad is None or "OAEP" not in pad.upper()):
        yield 16, f"Cipher.getInstance({text!r}): {alg} without OAEP padding"


class _ProgramContext:
    """Class-hierarchy facts shared by the structural rules."""

    def __init__(self, program: Program):
        self.program = program
        self.accept_all_verifiers: set[str] = set()
        self.trust_all_managers: set[str] = set()
        self.custom_socket_factories: set[str] = set()
        for cls in program.classes:
            sups = program.supertypes(cls.name)
            if HOSTNAME_VERIFIER in sups:
                m = program.methods.get(f"{cls.name}.verify({S},javax.net.ssl.SSLSession)")
                if m is not None and _always_returns_true(m):
                    self.accept_all_verifiers.add(cls.name)
            if sups & TRUST_MANAGERS:
                m = program.methods.get(f"{cls.name}.checkServerTrusted(java.security.cert.X509Certificate[],{S})")
                if m is not None and not any(isinstance(s, Call) for s in m.body):
                    self.trust_all_managers.add(cls.name)
            if SOCKET_FACTORY in sups:
                self.custom_socket_factories.add(cls.name)
        self.verifies_hostnames = any(isinstance(s, Call) and s.callee == VERIFY_CALL for _, s in program.iter_statements())

    def origin_algorithms(self, f: _MethodFacts, index: int, local: str | None, factory: str) -> list[str]:
        if local is None:
            return []
        algs = []
        work, seen = [(index, local)], set()
        while work:
            at, var = work.pop()
            if (at, var) in seen:
                continue
            seen.add((at, var))
            for d in f.rd.defs_of(at, var):
                if d < 0:
                    continue
                s = f.method.body[d]
                if isinstance(s, Assign):
                    work.append((d, s.src))
                elif isinstance(s, Call) and s.callee == factory:
                    v = f.const(d, s.args[0])
                    if isinstance(v, str):
                        algs.append(v)
        return algs


def _always_returns_true(m: MethodDef) -> bool:
    cp = ConstantPropagation(m)
    rets = [(i, s) for i, s in enumerate(m.body) if isinstance(s, Return)]
    return bool(rets) and all(s.value is not None and cp.value_before(i, s.value) is True for i, s in rets)


def _object_rules(method: MethodDef) -> Iterator[tuple[int, Call, str]]:
    """Typestate (18) and incomplete-usage (20) checks over the statement list."""
    objects: dict[str, int] = {}  # local -> object number
    info: dict[int, dict[str, Any]] = {}
    for s in method.body:
        if isinstance(s, Call):
            owner, name, _ = split_signature(s.callee)
            recv_obj = objects.get(s.receiver) if s.receiver else None
            if recv_obj is not None:
                o = info[recv_obj]
                inits, work, finals = TYPESTATE[o["type"]]
                if name in inits:
                    o["initialised"] = True
                elif name in work:
                    if not o["initialised"] and not o["reported"]:
                        o["reported"] = True
                        yield 18, s, f"{owner}.{name} called before {'/'.join(sorted(inits))} on object from {o['created'].callee}"
                    if name in finals:
                        o["finalised"] = True
            for a in s.args:
                if a in objects:
                    info[objects[a]]["escaped"] = True
            if s.dst:
                objects.pop(s.dst, None)
                if name == "getInstance" and owner in TYPESTATE and s.receiver is None:
                    n = len(info)
                    info[n] = {
                        "type": owner,
                        "created": s,
                        "initialised": not TYPESTATE[owner][0],
                        "finalised": False,
                        "escaped": False,
                        "reported": False,
                    }
                    objects[s.dst] = n
        elif isinstance(s, Assign):
            if s.src in objects:
                objects[s.dst] = objects[s.src]
            else:
                objects.pop(s.dst, None)
        elif isinstance(s, FieldStore):
            if s.src in objects:
                info[objects[s.src]]["escaped"] = True
        elif isinstance(s, Return):
            if s.value in objects:
                info[objects[s.value]]["escaped"] = True
        else:
            for d in s.defs:
                objects.pop(d, None)
    for o in info.values():
        if not o["finalised"] and not o["escaped"]:
            c = o["created"]
            yield 20, c, f"{split_signature(c.callee)[0]} object from {c.callee} is never finalised"


def detect(program: Program, taxonomy: Taxonomy | None = None) -> list[MisuseTuple]:
    """Run every built-in rule over ``program``; tuples come back sorted and with empty S."""
    return BuiltinDetector(taxonomy).detect(program)


def rule_for(vuln_id: int) -> list[Rule]:
    return [r for r in RULES if r.vuln_id == vuln_id]

