"""Hierarchy-aware inter-annotator agreement.

Wu-Palmer similarity generalized to a DAG: every common ancestor ``c`` of
``a`` and ``b`` is a candidate, each node's depth is measured through ``c``
(depth of ``c`` plus the shortest descent from ``c``), and the candidate
with the highest similarity wins.
"""

from __future__ import annotations

import math
from collections import Counter, deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Mapping, Sequence

import numpy as np

from .ontology import ActivitySnapshot


@dataclass(frozen=True)
class AnnotationSet:
    annotator: str
    items: Mapping[str, str]  # item id -> node id

    def check(self, snapshot: ActivitySnapshot) -> None:
        for item, node in self.items.items():
            snapshot.require(node)


@dataclass(frozen=True)
class WupComputation:
    ancestor: str
    N: int
    N1: int
    N2: int

    @property
    def S(self) -> float:
        return 2 * self.N / (self.N1 + self.N2)


def _up_distances(snapshot: ActivitySnapshot, node: str) -> dict[str, int]:
    """Shortest upward edge distance from ``node`` to each ancestor-or-self."""
    cache = snapshot.__dict__.setdefault("_up_distance_cache", {})
    hit = cache.get(node)
    if hit is not None:
        return hit
    snapshot.require(node)
    dist = {node: 0}
    queue = deque([node])
    while queue:
        cur = queue.popleft()
        for p in snapshot.parents_of(cur):
            if p not in dist:
                dist[p] = dist[cur] + 1
                queue.append(p)
    cache[node] = dist
    return dist


def wup(snapshot: ActivitySnapshot, a: str, b: str) -> WupComputation:
    da, db = _up_distances(snapshot, a), _up_distances(snapshot, b)
    depths = snapshot.depths
    best = None
    best_key = None
    for c in da.keys() & db.keys():
        n = depths[c]
        n1, n2 = n + da[c], n + db[c]
        # maximize 2n/(n1+n2); compare exactly by cross-multiplication
        key = (n, n1 + n2)
        if best is None or key[0] * best_key[1] > best_key[0] * key[1] or (
                key[0] * best_key[1] == best_key[0] * key[1] and c < best.ancestor):
            best, best_key = WupComputation(c, n, n1, n2), key
    if best is None:
        raise ValueError(f"{a!r} and {b!r} share no ancestor; is the snapshot single-rooted?")
    return best


def wup_similarity(snapshot: ActivitySnapshot, a: str, b: str) -> float:
    return 1.0 if a == b else wup(snapshot, a, b).S


def _pairs(sets: Sequence[AnnotationSet], mode: str):
    if mode == "pairwise_all":
        return list(combinations(sets, 2))
    if mode == "versus_reference":
        return [(sets[0], s) for s in sets[1:]]
    raise ValueError(f"mode must be 'pairwise_all' or 'versus_reference', got {mode!r}")


@dataclass(frozen=True)
class MeanWup:
    value: float
    compared: int  # (annotator pair, item) comparisons used
    missing: int  # comparisons skipped because one side lacked the item


def mean_wup(snapshot: ActivitySnapshot, sets: Sequence[AnnotationSet],
             mode: str = "pairwise_all", return_coverage: bool = False) -> float | MeanWup:
    """Mean similarity over annotator pairs x shared items. In
    ``versus_reference`` mode the first set is the reference."""
    if len(sets) < 2:
        raise ValueError("need at least two annotation sets")
    universe = set().union(*(s.items.keys() for s in sets))
    pairs = _pairs(sets, mode)
    total, used, missing = 0.0, 0, 0
    for x, y in pairs:
        shared = x.items.keys() & y.items.keys()
        missing += len(universe) - len(shared)
        for item in sorted(shared):
            total += wup_similarity(snapshot, x.items[item], y.items[item])
            used += 1
    if used == 0:
        raise ValueError("annotation sets share no items")
    result = MeanWup(total / used, used, missing)
    return result if return_coverage else result.value


def weighted_kappa(snapshot: ActivitySnapshot, set_a: AnnotationSet, set_b: AnnotationSet) -> float:
    """Cohen's kappa with Wu-Palmer similarity as the agreement weight."""
    shared = sorted(set_a.items.keys() & set_b.items.keys())
    if not shared:
        raise ValueError("annotation sets share no items")
    if len(shared) < 2:
        raise ValueError("weighted kappa needs at least two shared items")
    la = [set_a.items[i] for i in shared]
    lb = [set_b.items[i] for i in shared]
    n = len(shared)

    labels = sorted(set(la) | set(lb))
    pos = {lab: i for i, lab in enumerate(labels)}
    w = np.empty((len(labels), len(labels)))
    for i, x in enumerate(labels):
        w[i, i] = 1.0
        for j in range(i + 1, len(labels)):
            w[i, j] = w[j, i] = wup_similarity(snapshot, x, labels[j])

    p_o = sum(w[pos[x], pos[y]] for x, y in zip(la, lb)) / n
    ma = np.zeros(len(labels))
    mb = np.zeros(len(labels))
    for lab, c in Counter(la).items():
        ma[pos[lab]] = c / n
    for lab, c in Counter(lb).items():
        mb[pos[lab]] = c / n
    p_e = float(ma @ w @ mb)
    if p_e >= 1.0:
        return 1.0
    return float((p_o - p_e) / (1.0 - p_e))


def mean_pairwise_kappa(snapshot: ActivitySnapshot, sets: Sequence[AnnotationSet],
                        mode: str = "pairwise_all") -> float:
    if len(sets) < 2:
        raise ValueError("need at least two annotation sets")
    values = [weighted_kappa(snapshot, x, y) for x, y in _pairs(sets, mode)]
    return float(np.mean(values))


@dataclass(frozen=True)
class BootstrapInterval:
    low: float
    high: float
    level: float
    resamples: int
    skipped: int = 0
    estimates: tuple[float, ...] = field(default=(), repr=False)

    def __iter__(self):
        return iter((self.low, self.high))


def nearest_rank_bounds(n: int, level: float) -> tuple[int, int]:
    """1-based order statistics for a two-sided nearest-rank interval with
    equal tail counts: ``ceil(n * alpha / 2)`` and its mirror."""
    alpha = (1.0 - level) / 2.0
    lo = max(1, math.ceil(round(n * alpha, 9)))
    return lo, n + 1 - lo


def resample_sets(sets: Sequence[AnnotationSet], picks: Sequence[str]) -> list[AnnotationSet]:
    """Apply one resampled item list to every set. Repeated draws get
    distinct ids (``item#k``) so multiplicity survives the mapping."""
    out = []
    for s in sets:
        items = {f"{item}#{k}": s.items[item] for k, item in enumerate(picks) if item in s.items}
        out.append(AnnotationSet(s.annotator, items))
    return out


def bootstrap_ci(metric: Callable[[list[AnnotationSet]], float], sets: Sequence[AnnotationSet],
                 resamples: int = 1000, level: float = 0.95, seed: int = 0) -> BootstrapInterval:
    """Percentile bootstrap over items. Each resample draws its indices from
    its own child seed, so results do not depend on evaluation order.
    Resamples where the metric raises are skipped and counted."""
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    universe = sorted(set().union(*(s.items.keys() for s in sets)))
    if not universe:
        raise ValueError("no items to resample")
    children = np.random.SeedSequence(seed).spawn(resamples)
    estimates = []
    skipped = 0
    for child in children:
        idx = np.random.default_rng(child).integers(0, len(universe), size=len(universe))
        try:
            estimates.append(float(metric(resample_sets(sets, [universe[i] for i in idx]))))
        except (ValueError, ZeroDivisionError, FloatingPointError):
            skipped += 1
    if not estimates:
        raise ValueError(f"metric failed on all {resamples} resamples")
    estimates.sort()
    lo, hi = nearest_rank_bounds(len(estimates), level)
    return BootstrapInterval(estimates[lo - 1], estimates[hi - 1], level, resamples, skipped,
                             tuple(estimates))
