"""Intra-procedural analyses over CEIR method bodies."""

from __future__ import annotations

from collections import deque
from typing import Any, Iterable

from cryptorisk.appir.model import (
    Assign,
    Call,
    Const,
    FieldLoad,
    Loc,
    MethodDef,
    Program,
)
from cryptorisk.errors import DomainError


class NonConstant:
    """Lattice bottom: the value is not a single compile-time literal."""

    _instance: NonConstant | None = None

    def __new__(cls) -> NonConstant:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NonConstant"

    def __reduce__(self):
        return (NonConstant, ())


NON_CONSTANT = NonConstant()

PARAM_DEF = -1  # pseudo definition site of parameters in reaching-definition sets


def call_sites_of(program: Program, signature: str) -> list[Loc]:
    """Every call of ``signature``, in class/method/statement order."""
    return [
        Loc(m.signature, s.id)
        for m, s in program.iter_statements()
        if isinstance(s, Call) and s.callee == signature
    ]


def predecessors(method: MethodDef) -> list[list[int]]:
    preds: list[list[int]] = [[] for _ in method.body]
    for i in range(len(method.body)):
        for j in method.successors(i):
            preds[j].append(i)
    return preds


def _same(a: Any, b: Any) -> bool:
    # 1 == True == 1.0 in Python; literals only agree if their types do too
    if type(a) is not type(b):
        return False
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return a == b


def _fold_call(stmt: Call, env: dict[str, Any]) -> Any:
    recv = env.get(stmt.receiver, NON_CONSTANT) if stmt.receiver else NON_CONSTANT
    if not isinstance(recv, str):
        return NON_CONSTANT
    if stmt.callee == "java.lang.String.getBytes()":
        return tuple(recv.encode("utf-8"))
    if stmt.callee == "java.lang.String.getBytes(java.lang.String)":
        charset = env.get(stmt.args[0], NON_CONSTANT)
        if not isinstance(charset, str):
            return NON_CONSTANT
        try:
            return tuple(recv.encode(charset))
        except LookupError:
            return NON_CONSTANT
    if stmt.callee == "java.lang.String.toCharArray()":
        return tuple(recv)
    return NON_CONSTANT


class ConstantPropagation:
    """Forward constant propagation over one method.

    Each local maps to a literal or :data:`NON_CONSTANT`; a local with no
    definition yet is simply absent. Joining two different literals yields
    NON_CONSTANT, so the lattice has height three and loops terminate after at
    most two visits per statement.
    """

    def __init__(self, method: MethodDef):
        self.method = method
        self.in_states: list[dict[str, Any] | None] = [None] * len(method.body)
        self._solve()

    def _transfer(self, index: int, env: dict[str, Any]) -> dict[str, Any]:
        s = self.method.body[index]
        out = dict(env)
        if isinstance(s, Const):
            out[s.dst] = s.value
        elif isinstance(s, Assign):
            if s.src in env:
                out[s.dst] = env[s.src]
            else:
                out.pop(s.dst, None)
        elif isinstance(s, Call):
            if s.dst:
                out[s.dst] = _fold_call(s, env)
        elif isinstance(s, FieldLoad):
            out[s.dst] = NON_CONSTANT
        return out

    @staticmethod
    def _join(a: dict[str, Any], b: dict[str, Any]) -> dict[str, Any]:
        out = dict(a)
        for k, v in b.items():
            if k not in out:
                out[k] = v
            elif not _same(out[k], v):
                out[k] = NON_CONSTANT
        return out

    def _solve(self) -> None:
        if not self.method.body:
            return
        entry = {p: NON_CONSTANT for p in self.method.param_names}
        self.in_states[0] = entry
        work = deque([0])
        while work:
            i = work.popleft()
            out = self._transfer(i, self.in_states[i])
            for j in self.method.successors(i):
                old = self.in_states[j]
                new = out if old is None else self._join(old, out)
                if old is None or new.keys() != old.keys() or any(not _same(new[k], old[k]) for k in new):
                    self.in_states[j] = new
                    work.append(j)

    def value_before(self, index: int, local: str) -> Any:
        env = self.in_states[index]
        if env is None:  # unreachable statement
            return NON_CONSTANT
        return env.get(local, NON_CONSTANT)


def constant_arg(program: Program, call: Loc, index: int, *, facts: ConstantPropagation | None = None) -> Any:
    """Literal value of argument ``index`` at ``call``, or :data:`NON_CONSTANT`."""
    try:
        method = program.method(call.method)
        stmt = method.statement(call.stmt)
    except KeyError:
        raise DomainError(f"no statement at {call}") from None
    if not isinstance(stmt, Call):
        raise DomainError(f"{call} is not a call")
    if not 0 <= index < len(stmt.args):
        raise DomainError(f"{call} has {len(stmt.args)} argument(s), index {index} out of range")
    if facts is None or facts.method is not method:
        facts = ConstantPropagation(method)
    return facts.value_before(method.index_of(call.stmt), stmt.args[index])


class ReachingDefinitions:
    """For each statement, which definition sites of each local may reach it."""

    def __init__(self, method: MethodDef):
        self.method = method
        n = len(method.body)
        self.in_sets: list[dict[str, frozenset[int]]] = [{} for _ in range(n)]
        if n == 0:
            return
        self.in_sets[0] = {p: frozenset([PARAM_DEF]) for p in method.param_names}
        visited = [False] * n
        visited[0] = True
        work = deque([0])
        while work:
            i = work.popleft()
            out = dict(self.in_sets[i])
            for d in method.body[i].defs:
                out[d] = frozenset([i])
            for j in method.successors(i):
                cur = self.in_sets[j]
                changed = not visited[j]
                visited[j] = True
                for k, v in out.items():
                    merged = cur.get(k, frozenset()) | v
                    if merged != cur.get(k):
                        cur[k] = merged
                        changed = True
                if changed:
                    work.append(j)

    def defs_of(self, index: int, local: str) -> frozenset[int]:
        return self.in_sets[index].get(local, frozenset())


def backward_slice(method: MethodDef, index: int, seeds: Iterable[str], rd: ReachingDefinitions | None = None) -> set[str]:
    """Locals whose values may flow into ``seeds`` as used at ``body[index]``.

    Follows def-use edges backwards through assignments, call receivers and
    arguments, and the base object of field loads. The seeds are included.
    """
    rd = rd or ReachingDefinitions(method)
    seen_vars: set[str] = set()
    seen: set[tuple[int, str]] = set()
    work = deque((index, v) for v in seeds)
    while work:
        at, var = work.popleft()
        if (at, var) in seen:
            continue
        seen.add((at, var))
        seen_vars.add(var)
        for d in rd.defs_of(at, var):
            if d == PARAM_DEF:
                continue
            s = method.body[d]
            if isinstance(s, Assign):
                work.append((d, s.src))
            elif isinstance(s, Call):
                work.extend((d, u) for u in s.uses)
            elif isinstance(s, FieldLoad) and s.obj:
                work.append((d, s.obj))
    return seen_vars
