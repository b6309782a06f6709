"""Vulnerability taxonomy, weight tables, crypto-API catalog and detector capabilities.

Everything here is loaded from a JSON catalog (``data/catalog.json`` by default,
see ``docs/formats.md`` for the schema) and is immutable once loaded, so one
:class:`Taxonomy` instance can be shared by any number of analyses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping

from cryptorisk.errors import DomainError, ParseError

VULN_IDS = tuple(range(1, 22))

# Column order of the sink dimensions in flow matrices and feature vectors.
SINK_CATEGORIES = (
    "FILE",
    "LOG",
    "NETWORK",
    "SMS_MMS",
    "SYNC",
    "NC_STORAGE",
    "NC_ICC",
    "NC_OUT_STREAM",
    "NC_OTHER",
)

SEVERITY_LEVELS = (10, 7, 4, 1)


class ApiKind(str, Enum):
    DAPI = "DAPI"
    PAPI = "PAPI"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class VulnType:
    id: int
    description: str
    severity_weight: int


@dataclass(frozen=True)
class SinkCategory:
    name: str
    risk_weight: int


@dataclass(frozen=True)
class ApiCatalogEntry:
    signature: str
    kind: ApiKind | None = None
    sink_category: str | None = None
    # void calls that configure their receiver: as taint sources they taint it
    taints_receiver: bool = False
    forbidden: bool = False

    @property
    def is_sink(self) -> bool:
        return self.sink_category is not None


@dataclass(frozen=True)
class Taxonomy:
    vulns: Mapping[int, VulnType]
    sinks: Mapping[str, SinkCategory]
    apis: Mapping[str, ApiCatalogEntry]
    type_tags: Mapping[str, str]
    capabilities: Mapping[str, frozenset[int]]
    native_detectors: frozenset[str] = field(default=frozenset({"BI"}))

    # -- weights ---------------------------------------------------------
    def severity_weight(self, vuln_id: int) -> int:
        try:
            return self.vulns[vuln_id].severity_weight
        except (KeyError, TypeError):
            raise DomainError(f"vulnerability id must be in 1..21, got {vuln_id!r}") from None

    def risk_weight(self, category: str) -> int:
        try:
            return self.sinks[category].risk_weight
        except (KeyError, TypeError):
            raise DomainError(f"unknown sink category {category!r}") from None

    def most_sensitive(self, categories: Iterable[str]) -> str:
        """Pick the category with the largest risk weight.

        Ties go to the lexicographically smallest name.
        """
        cats = sorted(set(categories))
        if not cats:
            raise DomainError("no candidate sink categories")
        return min(cats, key=lambda c: (-self.risk_weight(c), c))

    # -- API catalog -----------------------------------------------------
    def classify_api(self, signature: str) -> ApiKind:
        entry = self.apis.get(signature)
        if entry is None or entry.kind is None:
            return ApiKind.UNKNOWN
        return entry.kind

    def sink_category(self, signature: str) -> str | None:
        entry = self.apis.get(signature)
        return entry.sink_category if entry else None

    def is_sink(self, signature: str) -> bool:
        return self.sink_category(signature) is not None

    def taints_receiver(self, signature: str) -> bool:
        entry = self.apis.get(signature)
        return bool(entry and entry.taints_receiver)

    def is_forbidden(self, signature: str) -> bool:
        entry = self.apis.get(signature)
        return bool(entry and entry.forbidden)

    @property
    def sink_signatures(self) -> frozenset[str]:
        return frozenset(s for s, e in self.apis.items() if e.is_sink)

    def signatures_of_kind(self, kind: ApiKind) -> frozenset[str]:
        return frozenset(s for s, e in self.apis.items() if e.kind is kind)

    def type_category(self, type_name: str) -> str | None:
        return self.type_tags.get(type_name)

    # -- detector capabilities --------------------------------------------
    @property
    def detectors(self) -> tuple[str, ...]:
        return tuple(sorted(self.capabilities))

    def capability(self, detector: str) -> frozenset[int]:
        try:
            return self.capabilities[detector]
        except KeyError:
            raise DomainError(f"detector {detector!r} is not registered") from None

    def capable_detectors(self, vuln_id: int, among: Iterable[str] | None = None) -> frozenset[str]:
        if vuln_id not in self.vulns:
            raise DomainError(f"vulnerability id must be in 1..21, got {vuln_id!r}")
        pool = self.capabilities if among is None else among
        return frozenset(t for t in pool if vuln_id in self.capability(t))

    def with_overrides(
        self,
        severity: Mapping[int, int] | None = None,
        risk: Mapping[str, int] | None = None,
    ) -> Taxonomy:
        """Return a copy with some weights replaced."""
        vulns = dict(self.vulns)
        for vid, w in (severity or {}).items():
            self.severity_weight(vid)
            vulns[vid] = VulnType(vid, vulns[vid].description, int(w))
        sinks = dict(self.sinks)
        for name, w in (risk or {}).items():
            self.risk_weight(name)
            sinks[name] = SinkCategory(name, w)
        return Taxonomy(
            vulns=MappingProxyType(vulns),
            sinks=MappingProxyType(sinks),
            apis=self.apis,
            type_tags=self.type_tags,
            capabilities=self.capabilities,
            native_detectors=self.native_detectors,
        )


def _build(doc: Mapping[str, Any], source: str) -> Taxonomy:
    errors: list[str] = []

    vulns: dict[int, VulnType] = {}
    for i, v in enumerate(doc.get("vulnerabilities", [])):
        try:
            vt = VulnType(int(v["id"]), str(v["description"]), int(v["severity_weight"]))
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"vulnerabilities[{i}]: {exc}")
            continue
        if vt.id in vulns:
            errors.append(f"vulnerabilities[{i}]: duplicate id {vt.id}")
        vulns[vt.id] = vt
    if sorted(vulns) != list(VULN_IDS):
        errors.append("vulnerabilities: ids must be exactly 1..21")

    sinks: dict[str, SinkCategory] = {}
    for i, s in enumerate(doc.get("sink_categories", [])):
        try:
            sinks[s["name"]] = SinkCategory(str(s["name"]), int(s["risk_weight"]))
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"sink_categories[{i}]: {exc}")
    if set(sinks) != set(SINK_CATEGORIES):
        errors.append(f"sink_categories: must be exactly {', '.join(SINK_CATEGORIES)}")

    apis: dict[str, ApiCatalogEntry] = {}
    for i, a in enumerate(doc.get("apis", [])):
        sig = a.get("signature")
        if not isinstance(sig, str) or "(" not in sig:
            errors.append(f"apis[{i}]: bad signature {sig!r}")
            continue
        if sig in apis:
            errors.append(f"apis[{i}]: duplicate signature {sig}")
        kind = a.get("kind")
        if kind is not None and kind not in ("DAPI", "PAPI"):
            errors.append(f"apis[{i}]: kind must be DAPI or PAPI")
            continue
        cat = a.get("sink_category")
        if cat is not None and cat not in SINK_CATEGORIES:
            errors.append(f"apis[{i}]: unknown sink category {cat!r}")
        apis[sig] = ApiCatalogEntry(
            signature=sig,
            kind=ApiKind(kind) if kind else None,
            sink_category=cat,
            taints_receiver=bool(a.get("taints_receiver", False)),
            forbidden=bool(a.get("forbidden", False)),
        )

    tags = dict(doc.get("type_tags", {}))
    for t, cat in tags.items():
        if cat not in SINK_CATEGORIES:
            errors.append(f"type_tags[{t}]: unknown sink category {cat!r}")

    caps: dict[str, frozenset[int]] = {}
    for det, ids in doc.get("capabilities", {}).items():
        ids = frozenset(int(x) for x in ids)
        if not ids:
            errors.append(f"capabilities[{det}]: empty capability set")
        if not ids <= set(VULN_IDS):
            errors.append(f"capabilities[{det}]: ids outside 1..21")
        caps[det] = ids

    if errors:
        raise ParseError(errors, source)
    return Taxonomy(
        vulns=MappingProxyType(vulns),
        sinks=MappingProxyType(sinks),
        apis=MappingProxyType(apis),
        type_tags=MappingProxyType(tags),
        capabilities=MappingProxyType(caps),
        native_detectors=frozenset(doc.get("native_detectors", ["BI"])),
    )


def _default_doc() -> dict[str, Any]:
    text = resources.files("cryptorisk.data").joinpath("catalog.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_taxonomy(path: str | Path | None = None) -> Taxonomy:
    """Load a catalog file.

    A user file is merged over the shipped defaults: top-level keys it
    provides replace the default ones, except ``apis`` and ``type_tags``
    which extend them (same signature/type replaces the default entry).
    """
    if path is None:
        return default_taxonomy()
    doc = _default_doc()
    try:
        user = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(str(exc), str(path)) from None
    for key, value in user.items():
        if key == "apis":
            merged = {a["signature"]: a for a in doc["apis"]}
            merged.update({a["signature"]: a for a in value})
            doc["apis"] = list(merged.values())
        elif key == "type_tags":
            doc["type_tags"] = {**doc["type_tags"], **value}
        else:
            doc[key] = value
    return _build(doc, str(path))


@lru_cache(maxsize=1)
def default_taxonomy() -> Taxonomy:
    return _build(_default_doc(), "catalog.json")


def _tax(taxonomy: Taxonomy | None) -> Taxonomy:
    return taxonomy if taxonomy is not None else default_taxonomy()


def severity_weight(vuln_id: int, taxonomy: Taxonomy | None = None) -> int:
    return _tax(taxonomy).severity_weight(vuln_id)


def risk_weight(category: str, taxonomy: Taxonomy | None = None) -> int:
    return _tax(taxonomy).risk_weight(category)


def classify_api(signature: str, taxonomy: Taxonomy | None = None) -> ApiKind:
    return _tax(taxonomy).classify_api(signature)


def capable_detectors(
    vuln_id: int,
    detectors: Iterable[str] | None = None,
    taxonomy: Taxonomy | None = None,
) -> frozenset[str]:
    """Detectors (optionally restricted to ``detectors``) able to report ``vuln_id``."""
    return _tax(taxonomy).capable_detectors(vuln_id, detectors)
