"""External detector reports -> unified misuse tuples.

Each external detector writes a small JSON envelope::

    {"detector": "CC", "format_version": "1",
     "findings": [{"err": "ConstraintError", "m": "...", "p": "...",
                   "d": "...", "loc": {"method": "...", "stmt": 7}}]}

``err`` is the tool's own rule or error tag. The shipped mapping table
(``data/mapping_rules.json``) turns ``(m, d, err)`` into a vulnerability id
with an ordered first-match rule list per detector. Findings no rule accepts
are kept aside as :class:`UnmappedFinding` records.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from cryptorisk.appir.analysis import call_sites_of
from cryptorisk.appir.model import Loc, Program, is_signature, split_signature
from cryptorisk.detector import RULES
from cryptorisk.errors import DomainError, ParseError
from cryptorisk.misuse import MisuseTuple, sort_key
from cryptorisk.taxonomy import VULN_IDS, Taxonomy, default_taxonomy

REPORT_FORMAT_VERSION = "1"

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*")


@dataclass(frozen=True)
class MappingRule:
    """One row of a detector's ``(m, d, err) -> id`` table."""

    detector: str
    err: str
    vuln_id: int
    owner: str | None = None
    keywords: tuple[str, ...] = ()

    def matches(self, m: str, d: str, err: str) -> bool:
        if err != self.err:
            return False
        if self.owner is not None and _owner(m) != self.owner:
            return False
        if self.keywords:
            text = d.lower()
            tokens = set(_TOKEN_RE.findall(text))
            return any((k in text) if " " in k else (k in tokens) for k in self.keywords)
        return True


@dataclass(frozen=True)
class UnmappedFinding:
    detector: str
    index: int
    finding: Mapping[str, Any]
    reason: str

    def to_json(self) -> dict[str, Any]:
        return {"unmapped": True, "detector": self.detector, "index": self.index, "reason": self.reason, "finding": dict(self.finding)}


@dataclass
class ParsedReport:
    detector: str
    tuples: list[MisuseTuple] = field(default_factory=list)
    unmapped: list[UnmappedFinding] = field(default_factory=list)

    @property
    def total(self) -> int:
        return len(self.tuples) + len(self.unmapped)


@dataclass(frozen=True)
class ChainValidation:
    """Outcome of :func:`validate_chain`; ``missing`` lists uncovered vulnerability ids."""

    detectors: frozenset[str]
    missing: frozenset[int]
    unparsed: frozenset[str] = frozenset()

    @property
    def valid(self) -> bool:
        return not self.missing and not self.unparsed

    def __bool__(self) -> bool:
        return self.valid

    def __str__(self) -> str:
        if self.valid:
            return "Valid"
        parts = []
        if self.missing:
            parts.append(f"MissingIds({{{','.join(map(str, sorted(self.missing)))}}})")
        if self.unparsed:
            parts.append(f"NoParser({{{','.join(sorted(self.unparsed))}}})")
        return " ".join(parts)


def _owner(signature: str) -> str:
    try:
        return split_signature(signature)[0]
    except ValueError:
        return ""


def _rules_from_doc(doc: Mapping[str, Any], source: str) -> dict[str, tuple[MappingRule, ...]]:
    out: dict[str, tuple[MappingRule, ...]] = {}
    try:
        for det, rows in doc["detectors"].items():
            rules = []
            for row in rows:
                vid = int(row["id"])
                if vid not in VULN_IDS:
                    raise ParseError(f"{det}: rule for {row['err']!r} maps to unknown id {vid}", source)
                rules.append(
                    MappingRule(det, str(row["err"]), vid, row.get("class"), tuple(k.lower() for k in row.get("d_any", ())))
                )
            out[det] = tuple(rules)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ParseError(f"bad mapping table: {exc!r}", source) from None
    # the built-in detector's own rule ids are also accepted as err tags
    out["BI"] = tuple(MappingRule("BI", r.rule_id, r.vuln_id) for r in RULES)
    return out


@lru_cache(maxsize=1)
def default_mapping() -> dict[str, tuple[MappingRule, ...]]:
    text = resources.files("cryptorisk.data").joinpath("mapping_rules.json").read_text(encoding="utf-8")
    return _rules_from_doc(json.loads(text), "mapping_rules.json")


def load_mapping(path: str | Path) -> dict[str, tuple[MappingRule, ...]]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(str(exc), str(path)) from None
    return _rules_from_doc(doc, str(path))


def registered_parsers(mapping: Mapping[str, Sequence[MappingRule]] | None = None) -> frozenset[str]:
    return frozenset(mapping if mapping is not None else default_mapping())


def map_finding(
    detector: str, m: str, d: str, err: str, mapping: Mapping[str, Sequence[MappingRule]] | None = None
) -> int | None:
    """Vulnerability id for one finding, or None when no rule applies."""
    for rule in (mapping or default_mapping()).get(detector, ()):
        if rule.matches(m, d, err):
            return rule.vuln_id
    return None


def parse_report(
    detector: str,
    doc: str | bytes | Mapping[str, Any],
    *,
    program: Program | None = None,
    taxonomy: Taxonomy | None = None,
    mapping: Mapping[str, Sequence[MappingRule]] | None = None,
    origin: str | None = None,
) -> ParsedReport:
    """Turn one detector report into tuples plus the findings that could not be mapped.

    A finding without ``loc`` is placed at the first call site of ``m`` inside
    ``p`` when ``program`` is given; otherwise it is unmapped.
    """
    tax = taxonomy or default_taxonomy()
    if detector not in tax.detectors:
        raise DomainError(f"detector {detector!r} is not registered (known: {', '.join(tax.detectors)})")
    mapping = mapping if mapping is not None else default_mapping()
    if detector not in mapping:
        raise DomainError(f"no report parser registered for detector {detector!r}")

    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", origin) from None
    if not isinstance(doc, Mapping):
        raise ParseError("report must be a JSON object", origin)
    declared = doc.get("detector", detector)
    if declared != detector:
        raise ParseError(f"report is for detector {declared!r}, expected {detector!r}", origin)
    version = str(doc.get("format_version", REPORT_FORMAT_VERSION))
    if version.split(".")[0] != REPORT_FORMAT_VERSION:
        raise ParseError(f"unsupported report format_version {version!r}", origin)
    findings = doc.get("findings")
    if not isinstance(findings, list):
        raise ParseError("'findings' must be a list", origin)

    errors: list[str] = []
    for i, f in enumerate(findings):
        if not isinstance(f, Mapping):
            errors.append(f"findings[{i}]: must be an object")
            continue
        for key in ("err", "m", "p"):
            if not isinstance(f.get(key), str):
                errors.append(f"findings[{i}]: '{key}' must be a string")
        if "d" in f and not isinstance(f["d"], str):
            errors.append(f"findings[{i}]: 'd' must be a string")
        loc = f.get("loc")
        if loc is not None and (
            not isinstance(loc, Mapping) or not isinstance(loc.get("method"), str) or not isinstance(loc.get("stmt"), int)
        ):
            errors.append(f"findings[{i}]: 'loc' must be {{method: str, stmt: int}}")
    if errors:
        raise ParseError(errors, origin)

    out = ParsedReport(detector)
    for i, f in enumerate(findings):
        m, p, d, err = f["m"], f["p"], f.get("d", ""), f["err"]
        if not is_signature(m) or not is_signature(p):
            out.unmapped.append(UnmappedFinding(detector, i, f, "malformed signature in m or p"))
            continue
        vid = map_finding(detector, m, d, err, mapping)
        if vid is None:
            out.unmapped.append(UnmappedFinding(detector, i, f, f"no mapping rule for err={err!r}"))
            continue
        if f.get("loc") is not None:
            loc = Loc.from_json(f["loc"])
        else:
            sites = [s for s in call_sites_of(program, m) if s.method == p] if program is not None else []
            if not sites:
                out.unmapped.append(UnmappedFinding(detector, i, f, "no location given and none could be resolved"))
                continue
            loc = sites[0]
        out.tuples.append(MisuseTuple(m=m, id=vid, p=p, d=d, t=detector, loc=loc))
    return out


def load_report(path: str | Path, **kwargs: Any) -> ParsedReport:
    """Parse a report file; the detector id is read from the envelope."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(str(exc), str(path)) from None
    if not isinstance(doc, Mapping) or not isinstance(doc.get("detector"), str):
        raise ParseError("report needs a 'detector' field", str(path))
    return parse_report(doc["detector"], doc, origin=str(path), **kwargs)


def validate_chain(
    detectors: Iterable[str],
    taxonomy: Taxonomy | None = None,
    mapping: Mapping[str, Sequence[MappingRule]] | None = None,
) -> ChainValidation:
    """Is the union of the detectors' capabilities the whole taxonomy?"""
    tax = taxonomy or default_taxonomy()
    dets = frozenset(detectors)
    unknown = sorted(dets - set(tax.detectors))
    if unknown:
        raise DomainError(f"unregistered detector(s): {', '.join(unknown)}")
    covered: set[int] = set()
    for det in dets:
        covered |= tax.capability(det)
    return ChainValidation(
        detectors=dets,
        missing=frozenset(VULN_IDS) - covered,
        unparsed=dets - registered_parsers(mapping),
    )


def merge_and_dedup(tuples: Iterable[MisuseTuple]) -> list[MisuseTuple]:
    """Collapse tuples sharing ``(m, id, p, loc)`` into one record per misuse.

    The surviving record is the one with the smallest ``(t, d, S)``; its
    ``reporters`` become the union over the group. The result does not depend
    on input order, and merging twice changes nothing.
    """
    groups: dict[tuple, list[MisuseTuple]] = {}
    for t in tuples:
        groups.setdefault(t.key, []).append(t)
    out = []
    for group in groups.values():
        best = min(group, key=lambda t: (t.t, t.d, t.S))
        reporters = frozenset().union(*(t.reporters for t in group))
        unlocatable = any(t.unlocatable for t in group)
        out.append(
            MisuseTuple(best.m, best.id, best.p, best.d, best.t, best.loc, best.S, reporters, unlocatable)
        )
    return sorted(out, key=sort_key)
