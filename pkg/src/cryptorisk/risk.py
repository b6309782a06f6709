"""Per-app risk scoring and detector voting.

The risk value of an app sums, over vulnerability ids ``i``::

    w_i * OR(b[tool, i] for tool in chain) * sum(w_sc * n[sc, i] for sc)

where ``b[tool, i]`` says whether ``tool`` reported some misuse of type ``i``
and ``n[sc, i]`` counts the flows from type-``i`` misuses into sinks of
category ``sc``. Everything is computed with :class:`fractions.Fraction`, so
results compare exactly.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from cryptorisk.adapters import merge_and_dedup
from cryptorisk.errors import DomainError, InvariantViolation, ParseError
from cryptorisk.misuse import MisuseTuple
from cryptorisk.taxonomy import SINK_CATEGORIES, VULN_IDS, Taxonomy, default_taxonomy

REPORT_FORMAT_VERSION = "1"
DEFAULT_RISK_CHAIN = ("CG", "CC", "BI")


def detectability(tuples: Iterable[MisuseTuple], tool: str, vuln_id: int) -> int:
    """1 if ``tool`` reported (alone or among merged reporters) a misuse of type ``vuln_id``."""
    return int(any(t.id == vuln_id and (t.t == tool or tool in t.reporters) for t in tuples))


def flow_count(tuples: Iterable[MisuseTuple], category: str, vuln_id: int) -> int:
    """How many times ``category`` occurs in the ``S`` of type-``vuln_id`` tuples."""
    return sum(t.S.count(category) for t in tuples if t.id == vuln_id)


def detect_matrix(tuples: Iterable[MisuseTuple], detectors: Iterable[str]) -> dict[tuple[str, int], int]:
    """Sparse ``b``: only the (detector, id) pairs equal to 1."""
    dets = set(detectors)
    out: dict[tuple[str, int], int] = {}
    for t in tuples:
        for r in t.reporters | {t.t}:
            if r in dets:
                out[(r, t.id)] = 1
    return out


def flow_matrix(tuples: Iterable[MisuseTuple]) -> dict[tuple[str, int], int]:
    """Sparse ``n``: only the (category, id) pairs with a positive count."""
    out: dict[tuple[str, int], int] = {}
    for t in tuples:
        for sc in t.S:
            out[(sc, t.id)] = out.get((sc, t.id), 0) + 1
    return out


def risk_from_matrices(
    b: Mapping[tuple[str, int], int],
    n: Mapping[tuple[str, int], int],
    chain: Iterable[str],
    taxonomy: Taxonomy | None = None,
) -> Fraction:
    tax = taxonomy or default_taxonomy()
    chain = tuple(chain)
    if not chain:
        raise DomainError("the risk chain needs at least one detector")
    total = Fraction(0)
    for i in VULN_IDS:
        if not any(b.get((tool, i), 0) for tool in chain):
            continue
        flows = sum(Fraction(tax.risk_weight(sc)) * n.get((sc, i), 0) for sc in SINK_CATEGORIES)
        total += Fraction(tax.severity_weight(i)) * flows
    return total


def risk_value(tuples: Iterable[MisuseTuple], chain: Iterable[str], taxonomy: Taxonomy | None = None) -> Fraction:
    """R_x of a deduplicated tuple list under the detector ``chain``."""
    tuples = list(tuples)
    chain = tuple(chain)
    return risk_from_matrices(detect_matrix(tuples, chain), flow_matrix(tuples), chain, taxonomy)


@dataclass(frozen=True)
class VoteResult:
    expected: tuple[MisuseTuple, ...]
    rejected: tuple[MisuseTuple, ...]
    ratios: Mapping[tuple, Fraction] = field(default_factory=dict)  # keyed by MisuseTuple.key


def vote_ratio(reporters: Iterable[str], vuln_id: int, chain: Iterable[str], taxonomy: Taxonomy | None = None) -> Fraction | None:
    """Share of chain detectors able to find ``vuln_id`` that reported it; None if none is able."""
    tax = taxonomy or default_taxonomy()
    capable = tax.capable_detectors(vuln_id, chain)
    if not capable:
        return None
    return Fraction(len(capable & set(reporters)), len(capable))


def accepts(ratio: Fraction | None, threshold: Fraction = Fraction(1, 2), strict: bool = True) -> bool:
    if ratio is None:
        return False
    return ratio > threshold if strict else ratio >= threshold


def vote(
    misuses_by_detector: Mapping[str, Iterable[MisuseTuple]],
    chain: Iterable[str] | None = None,
    taxonomy: Taxonomy | None = None,
    *,
    threshold: Fraction = Fraction(1, 2),
    strict: bool = True,
) -> VoteResult:
    """Majority vote among the detectors able to report each misuse's type.

    ``chain`` defaults to the detectors present in ``misuses_by_detector``.
    A misuse is an expected true positive when the share of capable chain
    detectors reporting it is above ``threshold`` (or at least, with
    ``strict=False``).
    """
    tax = taxonomy or default_taxonomy()
    chain = tuple(misuses_by_detector) if chain is None else tuple(chain)
    unknown = sorted(set(chain) - set(tax.detectors))
    if unknown:
        raise DomainError(f"unregistered detector(s): {', '.join(unknown)}")
    pooled = [t for ts in misuses_by_detector.values() for t in ts]
    expected, rejected, ratios = [], [], {}
    for t in merge_and_dedup(pooled):
        r = vote_ratio(t.reporters, t.id, chain, tax)
        if r is not None:
            ratios[t.key] = r
        (expected if accepts(r, threshold, strict) else rejected).append(t)
    return VoteResult(tuple(expected), tuple(rejected), ratios)


def vote_merged(
    tuples: Iterable[MisuseTuple], chain: Iterable[str], taxonomy: Taxonomy | None = None, **kwargs: Any
) -> VoteResult:
    """:func:`vote` over tuples that already carry their ``reporters``."""
    by_det: dict[str, list[MisuseTuple]] = {}
    for t in tuples:
        by_det.setdefault(t.t, []).append(t)
    return vote(by_det, chain, taxonomy, **kwargs)


def chain_precision(detected: Iterable[Any], expected: Iterable[Any]) -> Fraction:
    """|detected ∩ expected| / |detected|, with 1 for an empty detection set."""

    def keys(items: Iterable[Any]) -> set:
        return {x.key if isinstance(x, MisuseTuple) else x for x in items}

    det, exp = keys(detected), keys(expected)
    if not det:
        return Fraction(1)
    return Fraction(len(det & exp), len(det))


def _fraction_text(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


@dataclass
class AppRiskReport:
    """Risk verdict for one app; ``b`` and ``n`` are sparse (absent means 0)."""

    app_id: str
    chain: tuple[str, ...]
    vote_chain: tuple[str, ...]
    b: dict[tuple[str, int], int]
    n: dict[tuple[str, int], int]
    R_x: Fraction
    counts: dict[str, int] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        app_id: str,
        tuples: Iterable[MisuseTuple],
        chain: Sequence[str],
        vote_chain: Sequence[str],
        taxonomy: Taxonomy | None = None,
        **meta: Any,
    ) -> AppRiskReport:
        """Vote over ``tuples`` (annotated, possibly unmerged) and score the expected ones."""
        tax = taxonomy or default_taxonomy()
        merged = merge_and_dedup(tuples)
        verdict = vote_merged(merged, vote_chain, tax)
        kept = list(verdict.expected)
        b = detect_matrix(kept, tax.detectors)
        n = flow_matrix(kept)
        report = cls(
            app_id=app_id,
            chain=tuple(chain),
            vote_chain=tuple(vote_chain),
            b=b,
            n=n,
            R_x=risk_from_matrices(b, n, chain, tax),
            counts={
                "misuses": len(merged),
                "expected": len(verdict.expected),
                "rejected": len(verdict.rejected),
                "flows": sum(n.values()),
                "unlocatable": sum(t.unlocatable for t in merged),
            },
            meta=dict(meta),
        )
        report.check(tax)
        return report

    def recompute(self, taxonomy: Taxonomy | None = None) -> Fraction:
        return risk_from_matrices(self.b, self.n, self.chain, taxonomy)

    def check(self, taxonomy: Taxonomy | None = None) -> None:
        if self.recompute(taxonomy) != self.R_x:
            raise InvariantViolation(f"{self.app_id}: stored R_x does not match its b and n")

    def to_json(self) -> dict[str, Any]:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "app_id": self.app_id,
            "chain": list(self.chain),
            "vote_chain": list(self.vote_chain),
            "R_x": _fraction_text(self.R_x),
            "R_x_float": float(self.R_x),
            "b": [{"detector": d, "id": i, "value": v} for (d, i), v in sorted(self.b.items()) if v],
            "n": [
                {"category": sc, "id": i, "count": c}
                for (sc, i), c in sorted(self.n.items(), key=lambda kv: (kv[0][1], SINK_CATEGORIES.index(kv[0][0])))
                if c
            ],
            "counts": dict(self.counts),
            "meta": dict(self.meta),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, doc: Mapping[str, Any], origin: str | None = None) -> AppRiskReport:
        try:
            if str(doc.get("format_version", "1")).split(".")[0] != REPORT_FORMAT_VERSION:
                raise ParseError(f"unsupported format_version {doc.get('format_version')!r}", origin)
            return cls(
                app_id=str(doc["app_id"]),
                chain=tuple(doc["chain"]),
                vote_chain=tuple(doc.get("vote_chain", doc["chain"])),
                b={(e["detector"], int(e["id"])): int(e["value"]) for e in doc.get("b", [])},
                n={(e["category"], int(e["id"])): int(e["count"]) for e in doc.get("n", [])},
                R_x=Fraction(doc["R_x"]),
                counts=dict(doc.get("counts", {})),
                meta=dict(doc.get("meta", {})),
            )
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise ParseError(f"bad risk report: {exc!r}", origin) from None


def load_report(path: str | Path) -> AppRiskReport:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(str(exc), str(path)) from None
    return AppRiskReport.from_json(doc, str(path))


def csv_header(taxonomy: Taxonomy | None = None) -> list[str]:
    tax = taxonomy or default_taxonomy()
    cols = ["app_id", "R_x"]
    cols += [f"b_{d}_{i}" for d in tax.detectors for i in VULN_IDS]
    cols += [f"n_{sc}_{i}" for sc in SINK_CATEGORIES for i in VULN_IDS]
    return cols


def csv_row(report: AppRiskReport, taxonomy: Taxonomy | None = None) -> list[str]:
    tax = taxonomy or default_taxonomy()
    row = [report.app_id, _fraction_text(report.R_x)]
    row += [str(report.b.get((d, i), 0)) for d in tax.detectors for i in VULN_IDS]
    row += [str(report.n.get((sc, i), 0)) for sc in SINK_CATEGORIES for i in VULN_IDS]
    return row


def reports_to_csv(reports: Iterable[AppRiskReport], taxonomy: Taxonomy | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(taxonomy))
    for r in sorted(reports, key=lambda r: r.app_id):
        w.writerow(csv_row(r, taxonomy))
    return buf.getvalue()


def reports_from_csv(text: str, chain: Sequence[str] = ("CG", "CC"), origin: str | None = None) -> list[AppRiskReport]:
    """Read reports back from the dense CSV; ``chain`` is not stored there and must be given."""
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for k, row in enumerate(rows, 2):
        try:
            b, n = {}, {}
            for col, val in row.items():
                if col.startswith("b_") and int(val):
                    det, i = col[2:].rsplit("_", 1)
                    b[(det, int(i))] = int(val)
                elif col.startswith("n_") and int(val):
                    sc, i = col[2:].rsplit("_", 1)
                    n[(sc, int(i))] = int(val)
            out.append(AppRiskReport(row["app_id"], tuple(chain), tuple(chain), b, n, Fraction(row["R_x"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"row {k}: {exc!r}", origin) from None
    return out
