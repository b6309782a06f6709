"""In-memory form of CEIR programs.

A program is a list of classes, each holding methods whose bodies are flat
lists of three-address statements. Operands are always local names; literals
enter through :class:`Const`. Control flow is the statement order plus
:class:`Branch` (two successors) and :class:`Goto` (one).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Union

_SIG_RE = re.compile(r"^(?P<owner>[\w$.]+)\.(?P<name>[\w$<>]+)\((?P<params>[^()]*)\)$")


def split_signature(signature: str) -> tuple[str, str, tuple[str, ...]]:
    """``"a.B.m(int,byte[])"`` -> ``("a.B", "m", ("int", "byte[]"))``."""
    m = _SIG_RE.match(signature)
    if m is None:
        raise ValueError(f"malformed method signature {signature!r}")
    params = tuple(p.strip() for p in m["params"].split(",") if p.strip())
    return m["owner"], m["name"], params


def is_signature(text: str) -> bool:
    return _SIG_RE.match(text) is not None


@dataclass(frozen=True, order=True)
class Loc:
    method: str
    stmt: int

    def to_json(self) -> dict[str, Any]:
        return {"method": self.method, "stmt": self.stmt}

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> Loc:
        return cls(str(doc["method"]), int(doc["stmt"]))

    def __str__(self) -> str:
        return f"{self.method}#{self.stmt}"


@dataclass(frozen=True)
class Local:
    name: str
    type: str


@dataclass(frozen=True)
class Const:
    id: int
    dst: str
    value: Any  # str | int | float | bool | None | tuple
    type: str

    @property
    def defs(self) -> tuple[str, ...]:
        return (self.dst,)

    @property
    def uses(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class Assign:
    id: int
    dst: str
    src: str

    @property
    def defs(self) -> tuple[str, ...]:
        return (self.dst,)

    @property
    def uses(self) -> tuple[str, ...]:
        return (self.src,)


@dataclass(frozen=True)
class Call:
    id: int
    callee: str
    args: tuple[str, ...] = ()
    dst: str | None = None
    receiver: str | None = None

    @property
    def defs(self) -> tuple[str, ...]:
        return (self.dst,) if self.dst else ()

    @property
    def uses(self) -> tuple[str, ...]:
        head = (self.receiver,) if self.receiver else ()
        return head + self.args


@dataclass(frozen=True)
class FieldLoad:
    id: int
    dst: str
    field: str  # "pkg.Class.name"
    obj: str | None = None  # None for static fields

    @property
    def defs(self) -> tuple[str, ...]:
        return (self.dst,)

    @property
    def uses(self) -> tuple[str, ...]:
        return (self.obj,) if self.obj else ()


@dataclass(frozen=True)
class FieldStore:
    id: int
    field: str
    src: str
    obj: str | None = None

    @property
    def defs(self) -> tuple[str, ...]:
        return ()

    @property
    def uses(self) -> tuple[str, ...]:
        return ((self.obj,) if self.obj else ()) + (self.src,)


@dataclass(frozen=True)
class Branch:
    """Conditional jump; the condition is opaque, both successors are feasible."""

    id: int
    target: int
    cond: str | None = None

    @property
    def defs(self) -> tuple[str, ...]:
        return ()

    @property
    def uses(self) -> tuple[str, ...]:
        return (self.cond,) if self.cond else ()


@dataclass(frozen=True)
class Goto:
    id: int
    target: int

    @property
    def defs(self) -> tuple[str, ...]:
        return ()

    @property
    def uses(self) -> tuple[str, ...]:
        return ()


@dataclass(frozen=True)
class Return:
    id: int
    value: str | None = None

    @property
    def defs(self) -> tuple[str, ...]:
        return ()

    @property
    def uses(self) -> tuple[str, ...]:
        return (self.value,) if self.value else ()


Statement = Union[Const, Assign, Call, FieldLoad, FieldStore, Branch, Goto, Return]


@dataclass(frozen=True)
class MethodDef:
    signature: str
    params: tuple[Local, ...] = ()
    locals: tuple[Local, ...] = ()
    body: tuple[Statement, ...] = ()
    static: bool = False

    @property
    def owner(self) -> str:
        return split_signature(self.signature)[0]

    @property
    def name(self) -> str:
        return split_signature(self.signature)[1]

    @cached_property
    def variables(self) -> dict[str, str]:
        """All names usable as operands, mapped to their declared type."""
        out: dict[str, str] = {}
        if not self.static:
            out["this"] = self.owner
        for v in self.params + self.locals:
            out[v.name] = v.type
        return out

    @cached_property
    def _index(self) -> dict[int, int]:
        return {s.id: i for i, s in enumerate(self.body)}

    def index_of(self, stmt_id: int) -> int:
        return self._index[stmt_id]

    def statement(self, stmt_id: int) -> Statement:
        return self.body[self._index[stmt_id]]

    @property
    def param_names(self) -> tuple[str, ...]:
        head = () if self.static else ("this",)
        return head + tuple(p.name for p in self.params)

    def successors(self, index: int) -> tuple[int, ...]:
        """Indices of the statements that may execute after ``body[index]``."""
        stmt = self.body[index]
        nxt = (index + 1,) if index + 1 < len(self.body) else ()
        if isinstance(stmt, Return):
            return ()
        if isinstance(stmt, Goto):
            return (self._index[stmt.target],)
        if isinstance(stmt, Branch):
            tgt = self._index[stmt.target]
            return tuple(dict.fromkeys(nxt + (tgt,)))
        return nxt


@dataclass(frozen=True)
class ClassDef:
    name: str
    superclass: str | None = None
    interfaces: tuple[str, ...] = ()
    fields: tuple[Local, ...] = ()
    methods: tuple[MethodDef, ...] = ()


@dataclass(frozen=True)
class Program:
    app_id: str = "app"
    classes: tuple[ClassDef, ...] = ()
    entry_methods: tuple[str, ...] = ()
    externals: tuple[str, ...] = ()
    ceir_version: str = "1.0"

    @cached_property
    def methods(self) -> dict[str, MethodDef]:
        return {m.signature: m for c in self.classes for m in c.methods}

    @cached_property
    def class_map(self) -> dict[str, ClassDef]:
        return {c.name: c for c in self.classes}

    def method(self, signature: str) -> MethodDef:
        return self.methods[signature]

    def is_internal(self, signature: str) -> bool:
        return signature in self.methods

    def statement_at(self, loc: Loc) -> Statement:
        return self.methods[loc.method].statement(loc.stmt)

    def supertypes(self, class_name: str) -> set[str]:
        """Transitive superclasses and interfaces, as far as the program declares them."""
        seen: set[str] = set()
        todo = [class_name]
        while todo:
            cur = self.class_map.get(todo.pop())
            if cur is None:
                continue
            for sup in ((cur.superclass,) if cur.superclass else ()) + cur.interfaces:
                if sup not in seen:
                    seen.add(sup)
                    todo.append(sup)
        return seen

    def iter_statements(self):
        """Yield ``(method, statement)`` in class, method, statement order."""
        for c in self.classes:
            for m in c.methods:
                for s in m.body:
                    yield m, s
