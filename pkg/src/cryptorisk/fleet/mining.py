"""FP-growth frequent itemsets and single-item association rules over threat labels.

A transaction is the set of ``(vuln id, sink category)`` labels an app has at
least one flow for. Rule thresholds count apps: a rule ``A => C`` is kept when
more than ``min_support_apps`` apps carry both labels and more than
``min_conf`` of the apps carrying ``A`` also carry ``C``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import numpy as np

from cryptorisk.errors import DomainError
from cryptorisk.fleet.features import MU_DIM, nu_label

DEFAULT_MIN_SUPPORT_APPS = 500
DEFAULT_MIN_CONF = 0.8

Label = tuple[int, str]


class _Node:
    __slots__ = ("item", "count", "parent", "children")

    def __init__(self, item: Hashable | None, parent: _Node | None):
        self.item = item
        self.count = 0
        self.parent = parent
        self.children: dict[Hashable, _Node] = {}


def _build_tree(weighted: Iterable[tuple[Sequence[Hashable], int]], min_count: int):
    counts: dict[Hashable, int] = defaultdict(int)
    weighted = list(weighted)
    for items, w in weighted:
        for it in items:
            counts[it] += w
    frequent = {it: c for it, c in counts.items() if c >= min_count}
    # global order: descending count, then item, so the tree shape is deterministic
    rank = {it: r for r, it in enumerate(sorted(frequent, key=lambda it: (-frequent[it], it)))}
    root = _Node(None, None)
    heads: dict[Hashable, list[_Node]] = defaultdict(list)
    for items, w in weighted:
        path = sorted((it for it in set(items) if it in rank), key=rank.__getitem__)
        node = root
        for it in path:
            child = node.children.get(it)
            if child is None:
                child = node.children[it] = _Node(it, node)
                heads[it].append(child)
            child.count += w
            node = child
    return frequent, heads, rank


def _mine(weighted, min_count: int, suffix: frozenset, out: dict[frozenset, int]) -> None:
    frequent, heads, rank = _build_tree(weighted, min_count)
    for it in sorted(frequent, key=lambda it: -rank[it]):  # least frequent first
        itemset = suffix | {it}
        out[itemset] = frequent[it]
        base = []
        for node in heads[it]:
            path = []
            p = node.parent
            while p is not None and p.item is not None:
                path.append(p.item)
                p = p.parent
            if path:
                base.append((path, node.count))
        if base:
            _mine(base, min_count, itemset, out)


def frequent_itemsets(transactions: Iterable[Iterable[Hashable]], min_count: int) -> dict[frozenset, int]:
    """Every itemset contained in at least ``min_count`` transactions, with its count."""
    if min_count < 1:
        raise DomainError(f"min_count must be >= 1, got {min_count}")
    out: dict[frozenset, int] = {}
    _mine([(list(set(t)), 1) for t in transactions], min_count, frozenset(), out)
    return out


@dataclass(frozen=True)
class AssociationRule:
    antecedent: Label
    consequent: Label
    antecedent_apps: int
    joint_apps: int

    @property
    def confidence(self) -> Fraction:
        return Fraction(self.joint_apps, self.antecedent_apps)

    def to_row(self) -> dict:
        a, c = self.antecedent, self.consequent
        return {
            "antecedent": f"{a[0]}->{a[1]}",
            "antecedent_apps": self.antecedent_apps,
            "consequent": f"{c[0]}->{c[1]}",
            "joint_apps": self.joint_apps,
            "confidence": f"{float(self.confidence):.4f}",
        }


def transactions_from_nu(nu: np.ndarray) -> list[frozenset[Label]]:
    """One label set per row of a ``(apps, 189)`` count block (or full 231-wide rows)."""
    nu = np.atleast_2d(np.asarray(nu))
    if nu.shape[1] != 189:
        nu = nu[:, MU_DIM:]
    return [frozenset(nu_label(int(j)) for j in np.flatnonzero(row > 0)) for row in nu]


def mine_rules(
    transactions: Iterable[Iterable[Label]],
    min_support_apps: int = DEFAULT_MIN_SUPPORT_APPS,
    min_conf: float = DEFAULT_MIN_CONF,
) -> list[AssociationRule]:
    """Single-antecedent, single-consequent rules above both thresholds.

    Sorted by confidence (highest first), then by antecedent and consequent.
    """
    if not isinstance(min_support_apps, int) or min_support_apps < 0:
        raise DomainError(f"min_support_apps must be a non-negative integer, got {min_support_apps!r}")
    if not 0 < min_conf <= 1:
        raise DomainError(f"min_conf must lie in (0, 1], got {min_conf!r}")
    sets = frequent_itemsets(transactions, min_support_apps + 1)
    conf = Fraction(min_conf).limit_denominator(10**9)
    rules = []
    for itemset, joint in sets.items():
        if len(itemset) != 2:
            continue
        x, y = sorted(itemset)
        for a, c in ((x, y), (y, x)):
            r = AssociationRule(a, c, sets[frozenset({a})], joint)
            if r.confidence > conf:
                rules.append(r)
    rules.sort(key=lambda r: (-r.confidence, r.antecedent, r.consequent))
    return rules
