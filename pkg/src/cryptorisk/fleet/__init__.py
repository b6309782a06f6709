"""Fleet-scale summaries: feature vectors, clustering and association rules."""

from cryptorisk.fleet.clustering import (
    ClusteringResult,
    ClusterSummary,
    KMeansResult,
    ThreatLabel,
    cluster_apps,
    dbi,
    kmeans,
    sweep_k,
    top_labels,
)
from cryptorisk.fleet.features import (
    FEATURE_DETECTORS,
    FEATURE_DIM,
    FeatureVector,
    extract_features,
    feature_matrix,
    flatten,
    mu_index,
    nu_index,
    nu_label,
    unflatten,
)
from cryptorisk.fleet.mining import (
    DEFAULT_MIN_CONF,
    DEFAULT_MIN_SUPPORT_APPS,
    AssociationRule,
    frequent_itemsets,
    mine_rules,
    transactions_from_nu,
)

__all__ = [
    "AssociationRule",
    "ClusterSummary",
    "ClusteringResult",
    "DEFAULT_MIN_CONF",
    "DEFAULT_MIN_SUPPORT_APPS",
    "FEATURE_DETECTORS",
    "FEATURE_DIM",
    "FeatureVector",
    "KMeansResult",
    "ThreatLabel",
    "cluster_apps",
    "dbi",
    "extract_features",
    "feature_matrix",
    "flatten",
    "frequent_itemsets",
    "kmeans",
    "mine_rules",
    "mu_index",
    "nu_index",
    "nu_label",
    "sweep_k",
    "top_labels",
    "transactions_from_nu",
    "unflatten",
]
