"""Fixed-layout feature vectors built from per-app risk reports.

Layout (0-based), for vulnerability id ``i`` in 1..21:

* ``mu``: index ``2*(i-1) + j`` holds ``b[detector_j, i]`` for the two
  feature detectors (default CG then CC) -> 42 entries;
* ``nu``: index ``42 + 9*(i-1) + k`` holds ``n[sc_k, i]`` with ``sc_k`` in
  :data:`~cryptorisk.taxonomy.SINK_CATEGORIES` order -> 189 entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from cryptorisk.errors import DomainError
from cryptorisk.risk import AppRiskReport
from cryptorisk.taxonomy import SINK_CATEGORIES, VULN_IDS

FEATURE_DETECTORS = ("CG", "CC")
N_VULNS = len(VULN_IDS)
N_SINKS = len(SINK_CATEGORIES)
MU_DIM = len(FEATURE_DETECTORS) * N_VULNS
NU_DIM = N_SINKS * N_VULNS
FEATURE_DIM = MU_DIM + NU_DIM


def mu_index(vuln_id: int, j: int) -> int:
    return len(FEATURE_DETECTORS) * (vuln_id - 1) + j


def nu_index(vuln_id: int, category: str) -> int:
    return MU_DIM + N_SINKS * (vuln_id - 1) + SINK_CATEGORIES.index(category)


def nu_label(offset: int) -> tuple[int, str]:
    """(vuln id, category) of position ``offset`` inside the nu block."""
    i, k = divmod(offset, N_SINKS)
    return i + 1, SINK_CATEGORIES[k]


@dataclass(frozen=True)
class FeatureVector:
    app_id: str
    values: np.ndarray  # shape (231,), int64

    @property
    def mu(self) -> np.ndarray:
        return self.values[:MU_DIM]

    @property
    def nu(self) -> np.ndarray:
        return self.values[MU_DIM:]


def _check_detectors(detectors: Sequence[str]) -> tuple[str, ...]:
    detectors = tuple(detectors)
    if len(detectors) != len(FEATURE_DETECTORS) or len(set(detectors)) != len(detectors):
        raise DomainError(f"feature vectors take exactly two distinct detectors, got {detectors}")
    return detectors


def flatten(
    b: dict[tuple[str, int], int], n: dict[tuple[str, int], int], detectors: Sequence[str] = FEATURE_DETECTORS
) -> np.ndarray:
    detectors = _check_detectors(detectors)
    out = np.zeros(FEATURE_DIM, dtype=np.int64)
    for (det, i), v in b.items():
        if det in detectors and v:
            out[mu_index(i, detectors.index(det))] = 1
    for (sc, i), c in n.items():
        if c < 0:
            raise DomainError(f"negative flow count for ({sc}, {i})")
        out[nu_index(i, sc)] = c
    return out


def unflatten(
    vec: np.ndarray, detectors: Sequence[str] = FEATURE_DETECTORS
) -> tuple[dict[tuple[str, int], int], dict[tuple[str, int], int]]:
    """Inverse of :func:`flatten`: sparse ``b`` (feature detectors only) and ``n``."""
    detectors = _check_detectors(detectors)
    vec = np.asarray(vec)
    if vec.shape != (FEATURE_DIM,):
        raise DomainError(f"expected a vector of length {FEATURE_DIM}, got shape {vec.shape}")
    b, n = {}, {}
    for i in VULN_IDS:
        for j, det in enumerate(detectors):
            if vec[mu_index(i, j)]:
                b[(det, i)] = int(vec[mu_index(i, j)])
        for sc in SINK_CATEGORIES:
            c = int(vec[nu_index(i, sc)])
            if c:
                n[(sc, i)] = c
    return b, n


def extract_features(report: AppRiskReport, detectors: Sequence[str] = FEATURE_DETECTORS) -> FeatureVector:
    return FeatureVector(report.app_id, flatten(report.b, report.n, detectors))


def feature_matrix(
    reports: Iterable[AppRiskReport], detectors: Sequence[str] = FEATURE_DETECTORS
) -> tuple[list[str], np.ndarray]:
    """App ids (sorted) and the matching ``(n_apps, 231)`` matrix."""
    vecs = sorted((extract_features(r, detectors) for r in reports), key=lambda v: v.app_id)
    if not vecs:
        return [], np.zeros((0, FEATURE_DIM), dtype=np.int64)
    return [v.app_id for v in vecs], np.stack([v.values for v in vecs])
