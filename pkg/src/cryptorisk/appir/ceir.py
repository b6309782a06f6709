"""Reading and writing CEIR JSON documents (schema in ``docs/formats.md``)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from cryptorisk.appir.model import (
    Assign,
    Branch,
    Call,
    ClassDef,
    Const,
    FieldLoad,
    FieldStore,
    Goto,
    Local,
    MethodDef,
    Program,
    Return,
    Statement,
    is_signature,
    split_signature,
)
from cryptorisk.errors import ParseError

CEIR_VERSION = "1.0"
SUPPORTED_MAJOR = "1"

_OPS = ("const", "assign", "call", "load", "store", "branch", "goto", "return")


def _literal(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_literal(v) for v in value)
    return value


def _literal_json(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_literal_json(v) for v in value]
    return value


class _Reader:
    def __init__(self, strict: bool):
        self.strict = strict
        self.errors: list[str] = []

    def err(self, where: str, msg: str) -> None:
        self.errors.append(f"{where}: {msg}")

    def locals_(self, items: Any, where: str) -> tuple[Local, ...]:
        out = []
        if not isinstance(items, list):
            self.err(where, "expected a list of {name, type}")
            return ()
        for i, it in enumerate(items):
            if not isinstance(it, Mapping) or not isinstance(it.get("name"), str) or not isinstance(it.get("type"), str):
                self.err(f"{where}[{i}]", "expected {name: str, type: str}")
                continue
            out.append(Local(it["name"], it["type"]))
        return tuple(out)

    def statement(self, doc: Any, where: str) -> Statement | None:
        if not isinstance(doc, Mapping):
            self.err(where, "statement must be an object")
            return None
        sid = doc.get("id")
        if not isinstance(sid, int) or isinstance(sid, bool):
            self.err(where, "statement id must be an integer")
            return None
        where = f"{where.rsplit('[', 1)[0]}#{sid}"
        op = doc.get("op")

        def need(key: str, kind: type | tuple = str) -> Any:
            val = doc.get(key)
            if not isinstance(val, kind):
                self.err(where, f"'{op}' needs '{key}'")
                raise _Skip
            return val

        def opt(key: str) -> str | None:
            val = doc.get(key)
            if val is not None and not isinstance(val, str):
                self.err(where, f"'{key}' must be a string or null")
                raise _Skip
            return val

        try:
            if op == "const":
                if "value" not in doc:
                    self.err(where, "'const' needs 'value'")
                    return None
                return Const(sid, need("dst"), _literal(doc["value"]), need("type"))
            if op == "assign":
                return Assign(sid, need("dst"), need("src"))
            if op == "call":
                args = doc.get("args", [])
                if not isinstance(args, list) or not all(isinstance(a, str) for a in args):
                    self.err(where, "'args' must be a list of local names")
                    return None
                return Call(sid, need("callee"), tuple(args), opt("dst"), opt("receiver"))
            if op == "load":
                return FieldLoad(sid, need("dst"), need("field"), opt("obj"))
            if op == "store":
                return FieldStore(sid, need("field"), need("src"), opt("obj"))
            if op == "branch":
                return Branch(sid, need("target", int), opt("cond"))
            if op == "goto":
                return Goto(sid, need("target", int))
            if op == "return":
                return Return(sid, opt("value"))
        except _Skip:
            return None
        self.err(where, f"unknown op {op!r} (expected one of {', '.join(_OPS)})")
        return None

    def method(self, doc: Any, where: str, owner: str) -> MethodDef | None:
        if not isinstance(doc, Mapping):
            self.err(where, "method must be an object")
            return None
        sig = doc.get("signature")
        if not isinstance(sig, str) or not is_signature(sig):
            self.err(where, f"bad method signature {sig!r}")
            return None
        where = sig
        if split_signature(sig)[0] != owner:
            self.err(where, f"signature owner does not match class {owner}")
        params = self.locals_(doc.get("params", []), f"{where} params")
        locals_ = self.locals_(doc.get("locals", []), f"{where} locals")
        body_doc = doc.get("body", [])
        if not isinstance(body_doc, list):
            self.err(where, "'body' must be a list")
            body_doc = []
        body = []
        for i, s in enumerate(body_doc):
            st = self.statement(s, f"{where}[{i}]")
            if st is not None:
                body.append(st)
        return MethodDef(sig, params, locals_, tuple(body), bool(doc.get("static", False)))

    def check_method(self, m: MethodDef, program_methods: set[str], externals: set[str]) -> None:
        names = [p.name for p in m.params + m.locals]
        for n in sorted({n for n in names if names.count(n) > 1}):
            self.err(m.signature, f"variable {n!r} declared more than once")
        if not m.static and "this" in names:
            self.err(m.signature, "'this' is implicit in instance methods")
        declared = set(m.variables)
        seen_ids: set[int] = set()
        for s in m.body:
            where = f"{m.signature}#{s.id}"
            if s.id in seen_ids:
                self.err(where, "duplicate statement id")
            seen_ids.add(s.id)
        ids = {s.id for s in m.body}
        for s in m.body:
            where = f"{m.signature}#{s.id}"
            for v in s.uses + s.defs:
                if v not in declared:
                    self.err(where, f"operand {v!r} is not a declared local or parameter")
            if isinstance(s, (Branch, Goto)) and s.target not in ids:
                self.err(where, f"jump target {s.target} is not a statement of this method")
            if isinstance(s, (FieldLoad, FieldStore)) and "." not in s.field:
                self.err(where, f"field {s.field!r} must be qualified as Class.name")
            if isinstance(s, Call):
                if not is_signature(s.callee):
                    self.err(where, f"malformed callee signature {s.callee!r}")
                    continue
                arity = len(split_signature(s.callee)[2])
                if arity != len(s.args):
                    self.err(where, f"{s.callee} takes {arity} argument(s), got {len(s.args)}")
                if self.strict and s.callee not in program_methods and s.callee not in externals:
                    self.err(where, f"callee {s.callee} is neither defined nor declared external")


class _Skip(Exception):
    pass


def parse_program(source: str | bytes | Mapping[str, Any], *, strict: bool = True, origin: str | None = None) -> Program:
    """Parse and validate a CEIR document.

    ``source`` may be JSON text or an already-decoded mapping. All schema
    violations are collected and raised together as one :class:`ParseError`.
    With ``strict`` set, every callee must be defined in the program or listed
    under ``externals``.
    """
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", origin) from None
    else:
        doc = source
    if not isinstance(doc, Mapping):
        raise ParseError("top level must be an object", origin)

    r = _Reader(strict)
    version = doc.get("ceir_version")
    if not isinstance(version, str) or version.split(".")[0] != SUPPORTED_MAJOR:
        r.err("ceir_version", f"unsupported or missing version {version!r}")

    classes = []
    class_docs = doc.get("classes", [])
    if not isinstance(class_docs, list):
        r.err("classes", "must be a list")
        class_docs = []
    for ci, cd in enumerate(class_docs):
        where = f"classes[{ci}]"
        if not isinstance(cd, Mapping) or not isinstance(cd.get("name"), str):
            r.err(where, "class needs a 'name'")
            continue
        name = cd["name"]
        methods = []
        for mi, md in enumerate(cd.get("methods", [])):
            m = r.method(md, f"{name}.methods[{mi}]", name)
            if m is not None:
                methods.append(m)
        interfaces = cd.get("interfaces", [])
        classes.append(
            ClassDef(
                name=name,
                superclass=cd.get("super"),
                interfaces=tuple(interfaces) if isinstance(interfaces, list) else (),
                fields=r.locals_(cd.get("fields", []), f"{name} fields"),
                methods=tuple(methods),
            )
        )

    externals = doc.get("externals", [])
    if not isinstance(externals, list) or not all(isinstance(e, str) for e in externals):
        r.err("externals", "must be a list of method signatures")
        externals = []
    for e in externals:
        if not is_signature(e):
            r.err("externals", f"malformed signature {e!r}")

    all_methods: dict[str, MethodDef] = {}
    for c in classes:
        for m in c.methods:
            if m.signature in all_methods:
                r.err(m.signature, "method defined more than once")
            all_methods[m.signature] = m
    for m in all_methods.values():
        r.check_method(m, set(all_methods), set(externals))

    entries = doc.get("entry_methods", [])
    if not isinstance(entries, list):
        r.err("entry_methods", "must be a list")
        entries = []
    for e in entries:
        if e not in all_methods:
            r.err("entry_methods", f"{e!r} is not defined")

    app_id = doc.get("app_id", "app")
    if not isinstance(app_id, str) or not app_id:
        r.err("app_id", "must be a non-empty string")

    if r.errors:
        raise ParseError(r.errors, origin)
    return Program(
        app_id=app_id,
        classes=tuple(classes),
        entry_methods=tuple(entries),
        externals=tuple(externals),
        ceir_version=version,
    )


def load_program(path: str | Path, *, strict: bool = True) -> Program:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(str(exc), str(path)) from None
    return parse_program(text, strict=strict, origin=str(path))


def _stmt_json(s: Statement) -> dict[str, Any]:
    if isinstance(s, Const):
        return {"id": s.id, "op": "const", "dst": s.dst, "value": _literal_json(s.value), "type": s.type}
    if isinstance(s, Assign):
        return {"id": s.id, "op": "assign", "dst": s.dst, "src": s.src}
    if isinstance(s, Call):
        out: dict[str, Any] = {"id": s.id, "op": "call", "callee": s.callee, "args": list(s.args)}
        if s.dst is not None:
            out["dst"] = s.dst
        if s.receiver is not None:
            out["receiver"] = s.receiver
        return out
    if isinstance(s, FieldLoad):
        out = {"id": s.id, "op": "load", "dst": s.dst, "field": s.field}
        if s.obj is not None:
            out["obj"] = s.obj
        return out
    if isinstance(s, FieldStore):
        out = {"id": s.id, "op": "store", "field": s.field, "src": s.src}
        if s.obj is not None:
            out["obj"] = s.obj
        return out
    if isinstance(s, Branch):
        out = {"id": s.id, "op": "branch", "target": s.target}
        if s.cond is not None:
            out["cond"] = s.cond
        return out
    if isinstance(s, Goto):
        return {"id": s.id, "op": "goto", "target": s.target}
    out = {"id": s.id, "op": "return"}
    if s.value is not None:
        out["value"] = s.value
    return out


def program_to_json(p: Program) -> dict[str, Any]:
    def locs(items):
        return [{"name": v.name, "type": v.type} for v in items]

    classes = []
    for c in p.classes:
        cd: dict[str, Any] = {"name": c.name}
        if c.superclass:
            cd["super"] = c.superclass
        if c.interfaces:
            cd["interfaces"] = list(c.interfaces)
        if c.fields:
            cd["fields"] = locs(c.fields)
        cd["methods"] = [
            {
                "signature": m.signature,
                **({"static": True} if m.static else {}),
                "params": locs(m.params),
                "locals": locs(m.locals),
                "body": [_stmt_json(s) for s in m.body],
            }
            for m in c.methods
        ]
        classes.append(cd)
    return {
        "ceir_version": p.ceir_version,
        "app_id": p.app_id,
        "entry_methods": list(p.entry_methods),
        "externals": list(p.externals),
        "classes": classes,
    }


def dump_program(p: Program, indent: int | None = 1) -> str:
    return json.dumps(program_to_json(p), indent=indent) + "\n"
