"""Fluent construction of CEIR programs from Python.

>>> pb = ProgramBuilder("demo")
>>> m = pb.add_class("com.ex.Main").method("run")
>>> _ = m.const("alg", "MD5").call("md", "java.security.MessageDigest.getInstance(java.lang.String)",
...                                ["alg"], type="java.security.MessageDigest").ret()
>>> prog = pb.build()
>>> [s.id for s in prog.method("com.ex.Main.run()").body]
[1, 2, 3]
"""

from __future__ import annotations

from typing import Any, Sequence

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
)


def literal_type(value: Any) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "double"
    if isinstance(value, str):
        return "java.lang.String"
    if isinstance(value, (tuple, list)):
        if all(isinstance(v, str) and len(v) == 1 for v in value) and value:
            return "char[]"
        return "byte[]"
    return "java.lang.Object"


class MethodBuilder:
    def __init__(self, owner: ClassBuilder, name: str, params: Sequence[tuple[str, str]], static: bool):
        self.owner = owner
        self.signature = f"{owner.name}.{name}({','.join(t for _, t in params)})"
        self.params = tuple(Local(n, t) for n, t in params)
        self.static = static
        self._locals: dict[str, str] = {}
        self._body: list[Any] = []
        self._labels: dict[str, int] = {}
        self._pending: list[tuple[int, str, str | None, str]] = []  # (index, label, cond, kind)

    def _next_id(self) -> int:
        return len(self._body) + 1

    def _declare(self, name: str | None, type_: str) -> None:
        if name is None or name == "this" or any(p.name == name for p in self.params):
            return
        self._locals.setdefault(name, type_)

    def declare(self, name: str, type_: str) -> MethodBuilder:
        self._locals[name] = type_
        return self

    def mark(self, label: str) -> MethodBuilder:
        """Name the id of the next statement so jumps can target it."""
        self._labels[label] = self._next_id()
        return self

    def const(self, dst: str, value: Any, type: str | None = None) -> MethodBuilder:
        if isinstance(value, list):
            value = tuple(value)
        t = type or literal_type(value)
        self._declare(dst, t)
        self._body.append(Const(self._next_id(), dst, value, t))
        return self

    def assign(self, dst: str, src: str, type: str | None = None) -> MethodBuilder:
        src_t = self._locals.get(src) or next((p.type for p in self.params if p.name == src), "java.lang.Object")
        self._declare(dst, type or src_t)
        self._body.append(Assign(self._next_id(), dst, src))
        return self

    def call(
        self,
        dst: str | None,
        callee: str,
        args: Sequence[str] = (),
        receiver: str | None = None,
        type: str = "java.lang.Object",
    ) -> MethodBuilder:
        self._declare(dst, type)
        self._body.append(Call(self._next_id(), callee, tuple(args), dst, receiver))
        return self

    def new(self, dst: str, cls: str, args: Sequence[str] = (), arg_types: Sequence[str] = ()) -> MethodBuilder:
        """Constructor call ``dst = new cls(args)``; ``arg_types`` builds the signature."""
        return self.call(dst, f"{cls}.<init>({','.join(arg_types)})", args, type=cls)

    def load(self, dst: str, field: str, obj: str | None = None, type: str = "java.lang.Object") -> MethodBuilder:
        self._declare(dst, type)
        self._body.append(FieldLoad(self._next_id(), dst, field, obj))
        return self

    def store(self, field: str, src: str, obj: str | None = None) -> MethodBuilder:
        self._body.append(FieldStore(self._next_id(), field, src, obj))
        return self

    def branch(self, to: str, cond: str | None = None) -> MethodBuilder:
        self._pending.append((len(self._body), to, cond, "branch"))
        self._body.append(None)
        return self

    def goto(self, to: str) -> MethodBuilder:
        self._pending.append((len(self._body), to, None, "goto"))
        self._body.append(None)
        return self

    def ret(self, value: str | None = None) -> MethodBuilder:
        self._body.append(Return(self._next_id(), value))
        return self

    def build(self) -> MethodDef:
        body = list(self._body)
        for index, label, cond, kind in self._pending:
            target = self._labels[label]
            body[index] = Branch(index + 1, target, cond) if kind == "branch" else Goto(index + 1, target)
        return MethodDef(
            signature=self.signature,
            params=self.params,
            locals=tuple(Local(n, t) for n, t in self._locals.items()),
            body=tuple(body),
            static=self.static,
        )


class ClassBuilder:
    def __init__(self, name: str, superclass: str | None, interfaces: Sequence[str]):
        self.name = name
        self.superclass = superclass
        self.interfaces = tuple(interfaces)
        self.fields: list[Local] = []
        self.methods: list[MethodBuilder] = []

    def field(self, name: str, type_: str) -> ClassBuilder:
        self.fields.append(Local(name, type_))
        return self

    def method(self, name: str, params: Sequence[tuple[str, str]] = (), static: bool = False) -> MethodBuilder:
        mb = MethodBuilder(self, name, params, static)
        self.methods.append(mb)
        return mb

    def build(self) -> ClassDef:
        return ClassDef(
            self.name,
            self.superclass,
            self.interfaces,
            tuple(self.fields),
            tuple(m.build() for m in self.methods),
        )


class ProgramBuilder:
    def __init__(self, app_id: str = "app"):
        self.app_id = app_id
        self.classes: list[ClassBuilder] = []
        self.entries: list[str] = []

    def add_class(self, name: str, superclass: str | None = None, interfaces: Sequence[str] = ()) -> ClassBuilder:
        cb = ClassBuilder(name, superclass, interfaces)
        self.classes.append(cb)
        return cb

    def entry(self, signature: str) -> ProgramBuilder:
        self.entries.append(signature)
        return self

    def build(self) -> Program:
        classes = tuple(c.build() for c in self.classes)
        defined = {m.signature for c in classes for m in c.methods}
        externals = sorted(
            {s.callee for c in classes for m in c.methods for s in m.body if isinstance(s, Call)} - defined
        )
        return Program(
            app_id=self.app_id,
            classes=classes,
            entry_methods=tuple(self.entries),
            externals=tuple(externals),
        )
