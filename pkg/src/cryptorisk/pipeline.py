"""File-to-file pipeline stages behind the command line.

Every stage reads the previous stage's files and writes its own, so runs can
be resumed and each stage inspected on its own:

``detect``
    CEIR programs (+ optional external reports) -> ``<app>.tuples.jsonl`` and
    ``<app>.detect.json`` (detectors run, unmapped findings).
``assess``
    programs + detect output -> ``<app>.annotated.jsonl``,
    ``<app>.flows.jsonl``, ``<app>.risk.json`` and a combined ``risk.csv``.
``fleet``
    risk reports -> cluster assignment, cluster summaries, DBI-by-k table and
    association rules.

All JSON is written with sorted keys and every file is replaced atomically.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

from cryptorisk.adapters import load_report, merge_and_dedup, validate_chain
from cryptorisk.appir.ceir import load_program
from cryptorisk.appir.model import Program
from cryptorisk.dataflow import DEFAULT_DEPTH, TaintConfig, annotate_with_flows
from cryptorisk.detector import detect
from cryptorisk.errors import CryptoRiskError, DomainError, ParseError
from cryptorisk.fleet.clustering import cluster_apps, sweep_k
from cryptorisk.fleet.features import feature_matrix
from cryptorisk.fleet.mining import DEFAULT_MIN_CONF, DEFAULT_MIN_SUPPORT_APPS, mine_rules, transactions_from_nu
from cryptorisk.misuse import dumps_jsonl, read_jsonl
from cryptorisk.risk import DEFAULT_RISK_CHAIN, AppRiskReport, load_report as load_risk, reports_to_csv
from cryptorisk.taxonomy import load_taxonomy

META_VERSION = "1"


class InputError(CryptoRiskError):
    """Missing or unusable input paths."""


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _files(path: Path, pattern: str) -> list[Path]:
    if not path.exists():
        raise InputError(f"{path}: no such file or directory")
    if path.is_file():
        return [path]
    return sorted(p for p in path.glob(pattern) if p.is_file())


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def load_programs(path: str | Path, strict: bool = True) -> list[tuple[Path, Program]]:
    """Parse one CEIR file or every ``*.json`` in a directory; all failures are reported together."""
    out, errors = [], []
    for f in _files(Path(path), "*.json"):
        try:
            out.append((f, load_program(f, strict=strict)))
        except ParseError as exc:
            errors.extend(f"{f.name}: {e}" for e in exc.errors)
    if errors:
        raise ParseError(errors)
    ids = [p.app_id for _, p in out]
    dup = sorted({a for a in ids if ids.count(a) > 1})
    if dup:
        raise ParseError([f"app id {a!r} used by more than one program" for a in dup])
    return sorted(out, key=lambda fp: fp[1].app_id)


def _report_app_id(path: Path) -> str:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(str(exc), str(path)) from None
    if isinstance(doc, dict) and isinstance(doc.get("app_id"), str):
        return doc["app_id"]
    return path.name.split(".")[0]


# ---------------------------------------------------------------- detect


@dataclass
class DetectOutcome:
    app_id: str
    detectors: list[str]
    tuples: int
    unmapped: int


def _detect_one(job: tuple[str, str, list[str], str | None, bool]) -> DetectOutcome:
    program_path, out_dir, report_paths, catalog, builtin = job
    tax = load_taxonomy(catalog)
    program = load_program(program_path)
    pooled = list(detect(program, tax)) if builtin else []
    detectors = {"BI"} if builtin else set()
    unmapped = []
    for rp in report_paths:
        parsed = load_report(rp, program=program, taxonomy=tax)
        detectors.add(parsed.detector)
        pooled.extend(parsed.tuples)
        unmapped.extend({**u.to_json(), "source": Path(rp).name} for u in parsed.unmapped)
    merged = merge_and_dedup(pooled)
    out = Path(out_dir)
    write_atomic(out / f"{program.app_id}.tuples.jsonl", dumps_jsonl(merged))
    meta = {
        "format_version": META_VERSION,
        "app_id": program.app_id,
        "program": Path(program_path).name,
        "detectors": sorted(detectors),
        "reports": sorted(Path(r).name for r in report_paths),
        "counts": {"tuples": len(merged), "unmapped": len(unmapped)},
        "unmapped": unmapped,
    }
    write_atomic(out / f"{program.app_id}.detect.json", dumps_json(meta))
    return DetectOutcome(program.app_id, sorted(detectors), len(merged), len(unmapped))


def run_detect(
    programs: str | Path,
    out_dir: str | Path,
    reports: str | Path | None = None,
    *,
    catalog: str | None = None,
    builtin: bool = True,
    jobs: int = 1,
) -> list[DetectOutcome]:
    progs = load_programs(programs)
    by_app: dict[str, list[str]] = {}
    if reports is not None:
        for rp in _files(Path(reports), "*.json"):
            by_app.setdefault(_report_app_id(rp), []).append(str(rp))
    known = {p.app_id for _, p in progs}
    stray = sorted(set(by_app) - known)
    if stray:
        raise InputError(f"reports for unknown app id(s): {', '.join(stray)}")
    jobs_in = [(str(f), str(out_dir), sorted(by_app.get(p.app_id, [])), catalog, builtin) for f, p in progs]
    return _map(_detect_one, jobs_in, jobs)


# ---------------------------------------------------------------- assess


def _assess_one(job: tuple) -> AppRiskReport:
    program_path, detect_dir, out_dir, chain, vote_chain, depth, catalog = job
    tax = load_taxonomy(catalog)
    program = load_program(program_path)
    d = Path(detect_dir)
    tuples_path = d / f"{program.app_id}.tuples.jsonl"
    meta_path = d / f"{program.app_id}.detect.json"
    if not tuples_path.exists():
        raise InputError(f"{tuples_path}: missing; run detect first")
    tuples = read_jsonl(tuples_path)
    detectors = ["BI"]
    if meta_path.exists():
        detectors = json.loads(meta_path.read_text(encoding="utf-8")).get("detectors", detectors)
    votes = tuple(vote_chain) if vote_chain else tuple(detectors)
    cfg = TaintConfig(frozenset(), tax.sink_signatures, depth)
    ann = annotate_with_flows(tuples, program, cfg, tax)
    report = AppRiskReport.build(program.app_id, ann.tuples, chain, votes, tax, depth=depth)
    out = Path(out_dir)
    write_atomic(out / f"{program.app_id}.annotated.jsonl", dumps_jsonl(ann.tuples))
    write_atomic(
        out / f"{program.app_id}.flows.jsonl",
        "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in ann.flows),
    )
    write_atomic(out / f"{program.app_id}.risk.json", report.dumps())
    return report


def run_assess(
    programs: str | Path,
    detect_dir: str | Path,
    out_dir: str | Path,
    *,
    chain: Sequence[str] = DEFAULT_RISK_CHAIN,
    vote_chain: Sequence[str] | None = None,
    depth: int = DEFAULT_DEPTH,
    catalog: str | None = None,
    require_valid_chain: bool = False,
    jobs: int = 1,
) -> list[AppRiskReport]:
    tax = load_taxonomy(catalog)
    for name, ch in (("--chain", chain), ("--vote-chain", vote_chain or ())):
        unknown = sorted(set(ch) - set(tax.detectors))
        if unknown:
            raise DomainError(f"{name}: unregistered detector(s) {', '.join(unknown)}")
    if not chain:
        raise DomainError("--chain needs at least one detector")
    if require_valid_chain:
        v = validate_chain(vote_chain or chain, tax)
        if not v.valid:
            raise DomainError(f"detector chain does not cover the taxonomy: {v}")
    if not Path(detect_dir).is_dir():
        raise InputError(f"{detect_dir}: not a directory")
    progs = load_programs(programs)
    jobs_in = [
        (str(f), str(detect_dir), str(out_dir), tuple(chain), tuple(vote_chain) if vote_chain else None, depth, catalog)
        for f, _ in progs
    ]
    reports = _map(_assess_one, jobs_in, jobs)
    write_atomic(Path(out_dir) / "risk.csv", reports_to_csv(reports, tax))
    return reports


# ---------------------------------------------------------------- fleet


def load_risk_reports(path: str | Path) -> list[AppRiskReport]:
    files = _files(Path(path), "*.risk.json")
    if not files:
        raise InputError(f"{path}: no *.risk.json reports found")
    reports = [load_risk(f) for f in files]
    return sorted(reports, key=lambda r: r.app_id)


def _csv(rows: Iterable[Sequence[Any]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


@dataclass
class FleetOutcome:
    k: int
    dbi: float | None
    sizes: list[int]
    sweep: list[dict] = field(default_factory=list)


def run_cluster(
    reports_dir: str | Path,
    out_dir: str | Path,
    *,
    k: int,
    k_range: Sequence[int] = (),
    seed: int = 0,
    top_n: int = 3,
    nu_only: bool = False,
) -> FleetOutcome:
    reports = load_risk_reports(reports_dir)
    if k > len(reports):
        raise DomainError(f"k={k} but only {len(reports)} app report(s) were found")
    res = cluster_apps(reports, k, seed, top_n=top_n, nu_only=nu_only)
    out = Path(out_dir)
    write_atomic(out / "clusters.csv", _csv(sorted(res.assignment.items()), ["app_id", "cluster"]))
    summary = {
        "format_version": META_VERSION,
        "k": k,
        "seed": seed,
        "nu_only": nu_only,
        "apps": len(reports),
        "dbi": res.dbi,
        "kmeans": {"iterations": res.kmeans.n_iter, "converged": res.kmeans.converged, "inertia": res.kmeans.inertia},
        "clusters": [s.to_json() for s in res.summaries],
    }
    write_atomic(out / "summaries.json", dumps_json(summary))
    label_rows = [
        [s.cluster_id, len(s.members), rank + 1, f"{l.vuln_id}->{l.category}", l.apps_with_label, f"{l.avg_per_app:.4f}", f"{l.percent:.2f}"]
        for s in res.summaries
        for rank, l in enumerate(s.labels)
    ]
    write_atomic(
        out / "top_labels.csv",
        _csv(label_rows, ["cluster", "apps", "rank", "label", "apps_with_label", "avg_per_app", "percent_of_labels"]),
    )
    sweep = []
    ks = [kk for kk in k_range if 1 <= kk <= len(reports)]
    if ks:
        sweep = sweep_k(reports, ks, seed, top_n=top_n, nu_only=nu_only)
        write_atomic(
            out / "dbi_by_k.csv",
            _csv(
                [[r["k"], "" if r["dbi"] is None else f"{r['dbi']:.10g}", f"{r['inertia']:.10g}", r["distinct_top_labels"], r["smallest_cluster"]] for r in sweep],
                ["k", "dbi", "inertia", "distinct_top_labels", "smallest_cluster"],
            ),
        )
    return FleetOutcome(k, res.dbi, [len(s.members) for s in res.summaries], sweep)


def run_mine(
    reports_dir: str | Path,
    out_dir: str | Path,
    *,
    min_support_apps: int = DEFAULT_MIN_SUPPORT_APPS,
    min_conf: float = DEFAULT_MIN_CONF,
) -> int:
    reports = load_risk_reports(reports_dir)
    _, X = feature_matrix(reports)
    rules = mine_rules(transactions_from_nu(X), min_support_apps, min_conf)
    rows = [[r.to_row()[c] for c in ("antecedent", "antecedent_apps", "consequent", "joint_apps", "confidence")] for r in rules]
    write_atomic(
        Path(out_dir) / "rules.csv",
        _csv(rows, ["antecedent", "antecedent_apps", "consequent", "joint_apps", "confidence"]),
    )
    return len(rules)


def summarize(reports: Sequence[AppRiskReport]) -> str:
    """Plain-text table of apps by risk."""
    lines = [f"{'app':<24} {'R_x':>12} {'misuses':>8} {'expected':>9} {'flows':>6}"]
    for r in sorted(reports, key=lambda r: (-r.R_x, r.app_id)):
        c = r.counts
        lines.append(
            f"{r.app_id:<24} {float(r.R_x):>12.2f} {c.get('misuses', 0):>8} {c.get('expected', 0):>9} {c.get('flows', 0):>6}"
        )
    zero = sum(1 for r in reports if r.R_x == 0)
    lines.append(f"{len(reports)} app(s), {zero} with R_x = 0")
    return "\n".join(lines) + "\n"

