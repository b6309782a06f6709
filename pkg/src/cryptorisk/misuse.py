"""The unified misuse record and its JSONL encoding."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator

from cryptorisk.appir.model import Loc
from cryptorisk.errors import ParseError


@dataclass(frozen=True)
class MisuseTuple:
    """One detected misuse: API ``m`` causing vulnerability ``id`` inside method ``p``.

    ``S`` stays empty until data-flow annotation fills it with one sink
    category per reached sink call site. ``reporters`` is the set of
    detectors that agree on this misuse after merging; it always contains ``t``.
    """

    m: str
    id: int
    p: str
    d: str
    t: str
    loc: Loc
    S: tuple[str, ...] = ()
    reporters: frozenset[str] = field(default=frozenset())
    unlocatable: bool = False

    def __post_init__(self) -> None:
        if not self.reporters:
            object.__setattr__(self, "reporters", frozenset({self.t}))

    @property
    def key(self) -> tuple[str, int, str, Loc]:
        return (self.m, self.id, self.p, self.loc)

    def with_sinks(self, sinks: Iterable[str]) -> MisuseTuple:
        return replace(self, S=tuple(sinks))

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "m": self.m,
            "id": self.id,
            "p": self.p,
            "d": self.d,
            "t": self.t,
            "S": list(self.S),
            "loc": self.loc.to_json(),
            "reporters": sorted(self.reporters),
        }
        if self.unlocatable:
            out["unlocatable"] = True
        return out

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> MisuseTuple:
        return cls(
            m=str(doc["m"]),
            id=int(doc["id"]),
            p=str(doc["p"]),
            d=str(doc.get("d", "")),
            t=str(doc["t"]),
            loc=Loc.from_json(doc["loc"]),
            S=tuple(doc.get("S", ())),
            reporters=frozenset(doc.get("reporters", ())),
            unlocatable=bool(doc.get("unlocatable", False)),
        )


def sort_key(t: MisuseTuple) -> tuple:
    return (t.p, t.loc.method, t.loc.stmt, t.id, t.m, t.t, t.d)


def dumps_jsonl(tuples: Iterable[MisuseTuple]) -> str:
    return "".join(json.dumps(t.to_json(), sort_keys=True) + "\n" for t in tuples)


def iter_jsonl(text: str, origin: str | None = None) -> Iterator[dict[str, Any]]:
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            yield json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {n}: {exc}", origin) from None


def loads_jsonl(text: str, origin: str | None = None) -> list[MisuseTuple]:
    out = []
    for n, doc in enumerate(iter_jsonl(text, origin), 1):
        try:
            out.append(MisuseTuple.from_json(doc))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"record {n}: {exc!r}", origin) from None
    return out


def read_jsonl(path: str | Path) -> list[MisuseTuple]:
    path = Path(path)
    return loads_jsonl(path.read_text(encoding="utf-8"), str(path))
