"""Misuse-originating data-flow analysis.

The taint engine tracks, for every local, the set of source call sites
(:class:`Loc`) whose values may have reached it:

* a call to a source API adds its own call site to the result (and to the
  receiver for catalog entries marked ``taints_receiver``, e.g. ``init``);
* external calls pass receiver and argument taint to the result and to the
  receiver;
* internal calls are analysed in their callee up to ``depth`` nested calls,
  binding the receiver to ``this`` and arguments to parameters; parameter
  taint at the callee's exits flows back to the actual arguments;
* fields are one global slot per ``Class.field``, shared by all objects;
* a sink call with a tainted receiver or argument yields one
  :class:`TaintFlow` per label.

Every method is also analysed as a root with untainted parameters, so sources
inside deeply nested callees are never missed. A call beyond the depth bound
returns an untainted value; raising the bound therefore only adds flows.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable

from cryptorisk.appir.analysis import ReachingDefinitions, backward_slice, call_sites_of
from cryptorisk.appir.model import (
    Assign,
    Call,
    Const,
    FieldLoad,
    FieldStore,
    Loc,
    MethodDef,
    Program,
    Return,
    is_signature,
)
from cryptorisk.errors import DomainError
from cryptorisk.misuse import MisuseTuple
from cryptorisk.taxonomy import ApiKind, Taxonomy, default_taxonomy

DEFAULT_DEPTH = 3

_EMPTY: frozenset[Loc] = frozenset()


@dataclass(frozen=True)
class TaintConfig:
    sources: frozenset[str]
    sinks: frozenset[str]
    depth: int = DEFAULT_DEPTH
    receiver_sources: frozenset[str] | None = None  # None: ask the catalog

    def __post_init__(self) -> None:
        object.__setattr__(self, "sources", frozenset(self.sources))
        object.__setattr__(self, "sinks", frozenset(self.sinks))
        if self.receiver_sources is not None:
            object.__setattr__(self, "receiver_sources", frozenset(self.receiver_sources))
        if not isinstance(self.depth, int) or self.depth < 1:
            raise DomainError(f"call depth must be an integer >= 1, got {self.depth!r}")


@dataclass(frozen=True, order=True)
class TaintFlow:
    source: Loc
    sink: Loc

    def to_json(self) -> dict[str, Any]:
        return {"source": self.source.to_json(), "sink": self.sink.to_json()}


@dataclass(frozen=True)
class _Summary:
    ret: frozenset[Loc]
    params: tuple[frozenset[Loc], ...]  # taint of each param name at exit
    flows: frozenset[TaintFlow]


def _clean(sigs: Iterable[str], what: str) -> frozenset[str]:
    good = set()
    for s in sigs:
        if isinstance(s, str) and is_signature(s):
            good.add(s)
        else:
            warnings.warn(f"ignoring malformed {what} signature {s!r}", stacklevel=3)
    return frozenset(good)


class _Engine:
    def __init__(self, program: Program, cfg: TaintConfig, taxonomy: Taxonomy):
        self.p = program
        self.depth = cfg.depth
        self.sources = _clean(cfg.sources, "source")
        self.sinks = _clean(cfg.sinks, "sink")
        if cfg.receiver_sources is not None:
            self.recv_sources = cfg.receiver_sources & self.sources
        else:
            self.recv_sources = frozenset(s for s in self.sources if taxonomy.taints_receiver(s))
        self.fields: dict[str, frozenset[Loc]] = {}
        self.memo: dict[tuple, _Summary] = {}
        self.changed = False

    def run(self) -> set[TaintFlow]:
        if not self.sources or not self.sinks:
            return set()
        while True:
            self.memo = {}
            self.changed = False
            flows: set[TaintFlow] = set()
            for m in self.p.methods.values():
                entry = tuple(_EMPTY for _ in m.param_names)
                flows |= self.analyze(m, entry, 0).flows
            if not self.changed:
                return flows

    def store_field(self, name: str, labels: frozenset[Loc]) -> None:
        old = self.fields.get(name, _EMPTY)
        if not labels <= old:
            self.fields[name] = old | labels
            self.changed = True

    def analyze(self, m: MethodDef, entry: tuple[frozenset[Loc], ...], depth: int) -> _Summary:
        key = (m.signature, entry, depth)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        n = len(m.body)
        params = m.param_names
        states: list[dict[str, frozenset[Loc]] | None] = [None] * n
        flows: set[TaintFlow] = set()
        ret: frozenset[Loc] = _EMPTY
        exit_params = [_EMPTY] * len(params)
        if n:
            states[0] = {p: t for p, t in zip(params, entry) if t}
            work = deque([0])
            queued = {0}
            while work:
                i = work.popleft()
                queued.discard(i)
                out = self.transfer(m, i, dict(states[i]), depth, flows)
                succ = m.successors(i)
                s = m.body[i]
                if not succ:
                    if isinstance(s, Return) and s.value:
                        ret |= out.get(s.value, _EMPTY)
                    for k, p in enumerate(params):
                        exit_params[k] |= out.get(p, _EMPTY)
                for j in succ:
                    cur = states[j]
                    if cur is None:
                        states[j] = dict(out)
                        grew = True
                    else:
                        grew = False
                        for v, t in out.items():
                            old = cur.get(v, _EMPTY)
                            if not t <= old:
                                cur[v] = old | t
                                grew = True
                    if grew and j not in queued:
                        work.append(j)
                        queued.add(j)
        summary = _Summary(ret, tuple(exit_params), frozenset(flows))
        self.memo[key] = summary
        return summary

    def transfer(
        self, m: MethodDef, i: int, env: dict[str, frozenset[Loc]], depth: int, flows: set[TaintFlow]
    ) -> dict[str, frozenset[Loc]]:
        s = m.body[i]

        def get(v: str | None) -> frozenset[Loc]:
            return env.get(v, _EMPTY) if v else _EMPTY

        def put(v: str, t: frozenset[Loc]) -> None:
            if t:
                env[v] = t
            else:
                env.pop(v, None)

        if isinstance(s, Const):
            put(s.dst, _EMPTY)
        elif isinstance(s, Assign):
            put(s.dst, get(s.src))
        elif isinstance(s, FieldLoad):
            put(s.dst, self.fields.get(s.field, _EMPTY))
        elif isinstance(s, FieldStore):
            self.store_field(s.field, get(s.src))
        elif isinstance(s, Call):
            here = Loc(m.signature, s.id)
            if s.callee in self.sinks:
                reaching = get(s.receiver).union(*(get(a) for a in s.args))
                flows.update(TaintFlow(src, here) for src in reaching)
            callee = self.p.methods.get(s.callee)
            if callee is not None:
                result = self.internal_call(callee, s, get, put, depth, flows)
            else:
                incoming = get(s.receiver).union(*(get(a) for a in s.args))
                result = incoming
                if s.receiver:
                    put(s.receiver, incoming)
            if s.callee in self.sources:
                result = result | {here}
                if s.receiver and s.callee in self.recv_sources:
                    put(s.receiver, get(s.receiver) | {here})
            if s.dst:
                put(s.dst, result)
        return env

    def internal_call(self, callee: MethodDef, s: Call, get, put, depth: int, flows: set[TaintFlow]) -> frozenset[Loc]:
        if depth >= self.depth:
            return _EMPTY
        actuals = ([] if callee.static else [s.receiver]) + list(s.args)
        entry = tuple(get(a) for a in actuals)
        summ = self.analyze(callee, entry, depth + 1)
        flows |= summ.flows
        for a, t in zip(actuals, summ.params):
            if a and t:
                put(a, get(a) | t)
        return summ.ret


def taint_connect(program: Program, cfg: TaintConfig, taxonomy: Taxonomy | None = None) -> set[TaintFlow]:
    """All (source call site, sink call site) pairs connected by taint."""
    return _Engine(program, cfg, taxonomy or default_taxonomy()).run()


def refine_sources(
    m: str, program: Program, cfg: TaintConfig | None = None, taxonomy: Taxonomy | None = None
) -> frozenset[str]:
    """The APIs whose results a misuse of ``m`` may affect.

    A data-related API stands for itself. A parameter-related one also pulls
    in every data-related API whose call site (receiver or argument) is
    tainted from a call of ``m``.
    """
    tax = taxonomy or default_taxonomy()
    kind = tax.classify_api(m)
    if kind is ApiKind.UNKNOWN:
        raise DomainError(f"{m} is not a catalogued cryptographic API")
    if kind is ApiKind.DAPI:
        return frozenset({m})
    dapis = tax.signatures_of_kind(ApiKind.DAPI)
    depth = cfg.depth if cfg is not None else DEFAULT_DEPTH
    probe = TaintConfig(frozenset({m}), dapis, depth, cfg.receiver_sources if cfg is not None else None)
    reached = {program.statement_at(f.sink).callee for f in taint_connect(program, probe, tax)}
    return frozenset({m}) | reached


def ds_track(program: Program, sink: Loc, taxonomy: Taxonomy | None = None) -> str:
    """Most sensitive category among the sink's default and the types its operands derive from."""
    tax = taxonomy or default_taxonomy()
    try:
        method = program.method(sink.method)
        stmt = method.statement(sink.stmt)
    except KeyError:
        raise DomainError(f"no statement at {sink}") from None
    if not isinstance(stmt, Call) or not tax.is_sink(stmt.callee):
        raise DomainError(f"{sink} is not a call to a catalogued sink")
    found = {tax.sink_category(stmt.callee)}
    for t in slice_types(method, method.index_of(sink.stmt), stmt.uses):
        cat = tax.type_category(t)
        if cat is not None:
            found.add(cat)
    return tax.most_sensitive(found)


def slice_types(method: MethodDef, index: int, seeds: Iterable[str]) -> set[str]:
    """Declared types of every local reached walking def-use edges back from ``seeds``."""
    rd = ReachingDefinitions(method)
    names = backward_slice(method, index, seeds, rd)
    types = method.variables
    return {types[n] for n in names if n in types}


@dataclass(frozen=True)
class FlowRecord:
    """One sidecar line: which misuse a flow belongs to and how its sink was categorised."""

    misuse: tuple[str, int, str, Loc]
    source: Loc
    sink: Loc
    category: str

    def to_json(self) -> dict[str, Any]:
        m, vid, p, loc = self.misuse
        return {
            "misuse": {"m": m, "id": vid, "p": p, "loc": loc.to_json()},
            "source": self.source.to_json(),
            "sink": self.sink.to_json(),
            "category": self.category,
        }


@dataclass
class Annotation:
    tuples: list[MisuseTuple]
    flows: list[FlowRecord] = field(default_factory=list)


def annotate_with_flows(
    tuples: Iterable[MisuseTuple],
    program: Program,
    cfg: TaintConfig | None = None,
    taxonomy: Taxonomy | None = None,
) -> Annotation:
    """Fill each tuple's ``S`` and return the per-flow records alongside.

    ``cfg.sources`` is ignored (sources come from each tuple's ``m``); its
    sinks default to every catalogued sink API when ``cfg`` is None.
    """
    tax = taxonomy or default_taxonomy()
    sinks = cfg.sinks if cfg is not None else tax.sink_signatures
    depth = cfg.depth if cfg is not None else DEFAULT_DEPTH
    recv = cfg.receiver_sources if cfg is not None else None
    cache: dict[tuple[str, str], list[TaintFlow]] = {}
    categories: dict[Loc, str] = {}
    out: list[MisuseTuple] = []
    records: list[FlowRecord] = []
    for g in tuples:
        if not any(loc.method == g.p for loc in call_sites_of(program, g.m)):
            out.append(MisuseTuple(g.m, g.id, g.p, g.d, g.t, g.loc, (), g.reporters, True))
            continue
        key = (g.m, g.p)
        if key not in cache:
            try:
                sources = refine_sources(g.m, program, TaintConfig({g.m}, sinks, depth, recv), tax)
            except DomainError:
                warnings.warn(f"{g.m} is not in the API catalog; tracking it as its own only source", stacklevel=2)
                sources = frozenset({g.m})
            flows = taint_connect(program, TaintConfig(sources, sinks, depth, recv), tax)
            cache[key] = sorted(f for f in flows if f.source.method == g.p)
        flows = cache[key]
        reached: dict[Loc, list[TaintFlow]] = {}
        for f in flows:
            reached.setdefault(f.sink, []).append(f)
        S = []
        for sink in sorted(reached):
            if sink not in categories:
                categories[sink] = ds_track(program, sink, tax)
            S.append(categories[sink])
            records.extend(FlowRecord(g.key, f.source, sink, categories[sink]) for f in reached[sink])
        out.append(g.with_sinks(S))
    return Annotation(out, records)


def annotate(
    tuples: Iterable[MisuseTuple],
    program: Program,
    cfg: TaintConfig | None = None,
    taxonomy: Taxonomy | None = None,
) -> list[MisuseTuple]:
    """Fill ``S`` with one sink category per sink call site reached from each misuse."""
    return annotate_with_flows(tuples, program, cfg, taxonomy).tuples


def default_config(taxonomy: Taxonomy | None = None, depth: int = DEFAULT_DEPTH, sources: Iterable[str] = ()) -> TaintConfig:
    tax = taxonomy or default_taxonomy()
    return TaintConfig(frozenset(sources), tax.sink_signatures, depth)

