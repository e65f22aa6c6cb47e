"""Per-node direct and aggregated tallies with multiple-inheritance
de-duplication, percentages, coverage, year slices and rankings."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .ontology import ACTIVITY_KINDS, ActivitySnapshot


@dataclass(frozen=True)
class Assignment:
    item: str
    node: str
    weight: float = 1.0
    year: int | None = None


@dataclass(frozen=True)
class NodeTally:
    node: str
    title: str
    direct: float
    aggregated: float
    item_set_size: int


def assignments_from_results(results, weights: Mapping[str, float] | None = None,
                             years: Mapping[str, int] | None = None) -> list[Assignment]:
    """Turn classification results into assignments, dropping hallucinations."""
    out = []
    for r in results:
        if r.hallucinated or r.node is None:
            continue
        w = 1.0 if weights is None else float(weights.get(r.record, 0.0))
        out.append(Assignment(r.record, r.node, w, None if years is None else years.get(r.record)))
    return out


def tally(snapshot: ActivitySnapshot, assignments: Iterable[Assignment]) -> dict[str, NodeTally]:
    """Direct weight lands on the assigned node only. Aggregated weight at a
    node counts each distinct item once, however many of its assignments
    (or inheritance paths) reach that node.

    If one item carries different weights on different assignments, each
    node takes the largest weight among that item's assignments reaching it.
    """
    direct: dict[str, float] = defaultdict(float)
    direct_items: dict[str, set] = defaultdict(set)
    # item -> node -> weight reaching that node (dedup per item)
    reach: dict[str, dict[str, float]] = defaultdict(dict)

    for a in assignments:
        snapshot.require(a.node)
        if not (a.weight >= 0) or a.weight == float("inf"):
            raise ValueError(f"assignment weight must be finite and non-negative: {a}")
        if a.item not in direct_items[a.node]:
            direct_items[a.node].add(a.item)
            direct[a.node] += a.weight
        cone = reach[a.item]
        for n in (a.node, *snapshot.ancestors_of(a.node)):
            if cone.get(n, -1.0) < a.weight:
                cone[n] = a.weight

    agg: dict[str, float] = defaultdict(float)
    count: dict[str, int] = defaultdict(int)
    for cone in reach.values():
        for n, w in cone.items():
            agg[n] += w
            count[n] += 1

    return {
        nid: NodeTally(nid, node.title, direct.get(nid, 0.0), agg.get(nid, 0.0), count.get(nid, 0))
        for nid, node in snapshot.nodes.items()
    }


def percentages(tallies: Mapping[str, NodeTally], total: float) -> dict[str, float]:
    if not total > 0:
        raise ValueError("total must be positive")
    return {nid: t.aggregated / total for nid, t in tallies.items()}


def coverage(snapshot: ActivitySnapshot, assignments: Iterable[Assignment]) -> float:
    """Share of activity nodes (generic + atomic) holding at least one
    directly assigned item."""
    activities = {nid for nid, n in snapshot.nodes.items() if n.kind in ACTIVITY_KINDS}
    if not activities:
        return 0.0
    hit = {a.node for a in assignments if a.node in activities}
    return len(hit) / len(activities)


def slice_by_year(assignments: Sequence[Assignment], cumulative: bool = False) -> dict[int, list[Assignment]]:
    missing = [a for a in assignments if a.year is None]
    if missing:
        raise ValueError(f"{len(missing)} assignment(s) lack a year, e.g. item {missing[0].item!r}")
    buckets: dict[int, list[Assignment]] = defaultdict(list)
    for a in assignments:
        buckets[a.year].append(a)
    years = sorted(buckets)
    if not cumulative:
        return {y: buckets[y] for y in years}
    out, running = {}, []
    for y in years:
        running = running + buckets[y]
        out[y] = running
    return out


def top_activities(tallies: Mapping[str, NodeTally], n: int, by: str = "direct",
                   exclude: Iterable[str] = ()) -> list[NodeTally]:
    if n < 1:
        raise ValueError("n must be >= 1")
    if by not in ("direct", "aggregated"):
        raise ValueError("by must be 'direct' or 'aggregated'")
    skip = set(exclude)
    rows = [t for t in tallies.values() if t.node not in skip]
    rows.sort(key=lambda t: (-getattr(t, by), t.title))
    return rows[:n]


TALLY_COLUMNS = ("node_id", "title", "direct", "aggregated", "percent")


def export_tallies(tallies: Mapping[str, NodeTally], total: float | None = None) -> str:
    """CSV export. ``percent`` is aggregated / total (root aggregated by default)."""
    if total is None:
        total = max((t.aggregated for t in tallies.values()), default=0.0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TALLY_COLUMNS)
    for nid in sorted(tallies):
        t = tallies[nid]
        pct = 100.0 * t.aggregated / total if total > 0 else 0.0
        w.writerow([nid, t.title, repr(float(t.direct)), repr(float(t.aggregated)), f"{pct:.6f}"])
    return buf.getvalue()


def import_tallies(data: str | bytes) -> dict[str, NodeTally]:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != TALLY_COLUMNS:
        raise ValueError(f"tally header must be {','.join(TALLY_COLUMNS)}")
    out = {}
    for row in reader:
        out[row["node_id"]] = NodeTally(row["node_id"], row["title"], float(row["direct"]),
                                        float(row["aggregated"]), 0)
    return out
