"""k-means, the Davies-Bouldin index and per-cluster threat labels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from cryptorisk.errors import DomainError
from cryptorisk.fleet.features import MU_DIM, FEATURE_DETECTORS, feature_matrix, nu_label
from cryptorisk.risk import AppRiskReport

MAX_ITER = 300


@dataclass
class KMeansResult:
    labels: np.ndarray  # (n,) cluster index per point
    centroids: np.ndarray  # (k, d)
    n_iter: int
    converged: bool
    objective: list[float] = field(default_factory=list)  # within-cluster SSE after each update

    @property
    def inertia(self) -> float:
        return self.objective[-1] if self.objective else 0.0


def _sse(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    return float(((X - centroids[labels]) ** 2).sum())


def _assign(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d.argmin(axis=1)  # ties go to the lowest cluster index


def _update(X: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> None:
    k = len(centroids)
    for c in range(k):
        members = labels == c
        if members.any():
            centroids[c] = X[members].mean(axis=0)
    for c in range(k):
        if not (labels == c).any():
            sizes = np.bincount(labels, minlength=k)
            dist = ((X - centroids[labels]) ** 2).sum(axis=1)
            dist[sizes[labels] < 2] = -1.0  # never empty another cluster
            far = int(dist.argmax())
            labels[far] = c
            centroids[c] = X[far]


def kmeans(X: np.ndarray, k: int, seed: int = 0, max_iter: int = MAX_ITER) -> KMeansResult:
    """Lloyd's algorithm from ``k`` distinct points chosen with a seeded generator.

    A cluster that loses all its points is reseeded with the point farthest
    from its current centroid, which never increases the objective.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DomainError("expected a 2-D array of points")
    n = X.shape[0]
    if not isinstance(k, (int, np.integer)) or k < 1 or k > n:
        raise DomainError(f"k must lie in 1..{n}, got {k!r}")
    rng = np.random.default_rng(seed)
    _, first = np.unique(X, axis=0, return_index=True)
    if len(first) >= k:
        # distinct coordinates, so no two initial centroids coincide
        first = np.sort(first)
        start = np.sort(rng.choice(first, size=k, replace=False))
    else:
        start = np.sort(rng.choice(n, size=k, replace=False))
    centroids = X[start].copy()
    labels = _assign(X, centroids)
    history: list[float] = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        _update(X, labels, centroids)
        history.append(_sse(X, labels, centroids))
        new = _assign(X, centroids)
        if np.array_equal(new, labels):
            converged = True
            break
        labels = new
    else:
        # leave centroids consistent with the final assignment
        _update(X, labels, centroids)
        history.append(_sse(X, labels, centroids))
    return KMeansResult(labels=labels, centroids=centroids, n_iter=it, converged=converged, objective=history)


def dbi(X: np.ndarray, labels: Sequence[int]) -> float:
    """Davies-Bouldin index: mean over clusters of the worst (s_i + s_j) / d(c_i, c_j).

    ``s_i`` is the mean Euclidean distance of cluster ``i``'s points to its
    centroid. Two clusters with coinciding centroids score 0 if both are
    point-like and infinity otherwise.
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    ids = np.unique(labels)
    if len(ids) < 2:
        raise DomainError("the Davies-Bouldin index needs at least two non-empty clusters")
    cents = np.stack([X[labels == c].mean(axis=0) for c in ids])
    scatter = np.array([np.linalg.norm(X[labels == c] - cents[i], axis=1).mean() for i, c in enumerate(ids)])
    worst = np.zeros(len(ids))
    for i in range(len(ids)):
        best = 0.0
        for j in range(len(ids)):
            if i == j:
                continue
            s = scatter[i] + scatter[j]
            m = float(np.linalg.norm(cents[i] - cents[j]))
            r = (0.0 if s == 0 else np.inf) if m == 0 else s / m
            best = max(best, r)
        worst[i] = best
    return float(worst.mean())


@dataclass(frozen=True)
class ThreatLabel:
    vuln_id: int
    category: str
    apps_with_label: int
    total: int
    avg_per_app: float
    percent: float

    def to_json(self) -> dict:
        return {
            "id": self.vuln_id,
            "category": self.category,
            "apps_with_label": self.apps_with_label,
            "total_flows": self.total,
            "avg_per_app": self.avg_per_app,
            "percent_of_labels": self.percent,
        }


def top_labels(nu: np.ndarray, top_n: int | None = 3) -> list[ThreatLabel]:
    """Rank (id, category) labels of one cluster by average flows per app.

    ``nu`` is the ``(members, 189)`` block of flow counts. Only labels with at
    least one flow are returned; ties in the average go to the smaller
    ``(id, category name)``.
    """
    nu = np.atleast_2d(np.asarray(nu))
    if nu.shape[0] == 0:
        raise DomainError("top_labels needs a non-empty cluster")
    totals = nu.sum(axis=0)
    grand = int(totals.sum())
    members = nu.shape[0]
    out = []
    for off in np.flatnonzero(totals):
        vid, sc = nu_label(int(off))
        t = int(totals[off])
        out.append(ThreatLabel(vid, sc, int((nu[:, off] > 0).sum()), t, t / members, 100.0 * t / grand))
    out.sort(key=lambda l: (-l.avg_per_app, l.vuln_id, l.category))
    return out if top_n is None else out[:top_n]


@dataclass
class ClusterSummary:
    cluster_id: int
    members: list[str]
    centroid: np.ndarray
    labels: list[ThreatLabel]
    risk: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "cluster": self.cluster_id,
            "size": len(self.members),
            "members": list(self.members),
            "top_labels": [l.to_json() for l in self.labels],
            "risk": dict(self.risk),
            "centroid_nonzero": {str(i): float(v) for i, v in enumerate(self.centroid) if v},
        }


@dataclass
class ClusteringResult:
    k: int
    seed: int
    app_ids: list[str]
    assignment: dict[str, int]
    summaries: list[ClusterSummary]
    dbi: float | None
    kmeans: KMeansResult


def cluster_apps(
    reports: Iterable[AppRiskReport],
    k: int,
    seed: int = 0,
    *,
    top_n: int = 3,
    nu_only: bool = False,
    detectors: Sequence[str] = FEATURE_DETECTORS,
    max_iter: int = MAX_ITER,
) -> ClusteringResult:
    """Cluster apps on their feature vectors and describe every cluster.

    Clusters are renumbered by their smallest member app id so the output
    does not depend on the internal cluster order.
    """
    reports = list(reports)
    risk_of = {r.app_id: float(r.R_x) for r in reports}
    ids, X = feature_matrix(reports, detectors)
    if len(ids) != len(set(ids)):
        raise DomainError("duplicate app ids among the reports")
    if not 1 <= k <= len(ids):
        raise DomainError(f"k={k} needs at least k reports, got {len(ids)}")
    data = X[:, MU_DIM:] if nu_only else X
    res = kmeans(data, k, seed, max_iter)
    order = sorted(range(k), key=lambda c: min(ids[i] for i in np.flatnonzero(res.labels == c)))
    renum = {old: new for new, old in enumerate(order)}
    labels = np.array([renum[int(c)] for c in res.labels])
    summaries = []
    for new, old in enumerate(order):
        idx = np.flatnonzero(labels == new)
        names = [ids[i] for i in idx]
        risks = np.array([risk_of[a] for a in names])
        summaries.append(
            ClusterSummary(
                cluster_id=new,
                members=names,
                centroid=res.centroids[old],
                labels=top_labels(X[idx, MU_DIM:], top_n),
                risk={
                    "min": float(risks.min()),
                    "median": float(np.median(risks)),
                    "mean": float(risks.mean()),
                    "max": float(risks.max()),
                    "zero_risk_apps": int((risks == 0).sum()),
                },
            )
        )
    score = dbi(data, labels) if len(np.unique(labels)) >= 2 else None
    return ClusteringResult(k, seed, ids, dict(zip(ids, map(int, labels))), summaries, score, res)


def sweep_k(reports: Iterable[AppRiskReport], ks: Iterable[int], seed: int = 0, **kwargs) -> list[dict]:
    """DBI and label diagnostics for each k (k=1 has no DBI)."""
    reports = list(reports)
    rows = []
    for k in ks:
        r = cluster_apps(reports, k, seed, **kwargs)
        tops = {(s.labels[0].vuln_id, s.labels[0].category) for s in r.summaries if s.labels}
        rows.append(
            {
                "k": k,
                "dbi": r.dbi,
                "inertia": r.kmeans.inertia,
                "distinct_top_labels": len(tops),
                "smallest_cluster": min(len(s.members) for s in r.summaries),
            }
        )
    return rows
