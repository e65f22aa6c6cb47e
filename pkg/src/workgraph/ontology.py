"""Activity DAG: node/edge types, structural validation, closure, depth and
property inheritance.

Snapshots are immutable. Derived indices (parents, children, depths,
ancestor cones) are built lazily on first use and cached on the instance.
"""

from __future__ import annotations

import enum
import statistics
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Mapping, Union

PropertyScalar = Union[int, float, str]


class NodeKind(str, enum.Enum):
    GENERIC = "generic"
    ATOMIC = "atomic"
    SOURCE_TASK = "source_task"


ACTIVITY_KINDS = frozenset({NodeKind.GENERIC, NodeKind.ATOMIC})


class UnknownNodeError(KeyError):
    """Raised when a node id is not part of the snapshot."""

    def __init__(self, node_id: str):
        super().__init__(node_id)
        self.node_id = node_id

    def __str__(self) -> str:
        return f"unknown node id: {self.node_id!r}"


class InvalidSnapshotError(ValueError):
    """Raised when an operation needs a structurally valid snapshot."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        head = "; ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"invalid snapshot: {head}{more}")


@dataclass(frozen=True)
class ActivityNode:
    id: str
    title: str
    kind: NodeKind = NodeKind.GENERIC
    definition: str | None = None
    synonyms: tuple[str, ...] = ()
    properties: Mapping[str, PropertyScalar] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", NodeKind(self.kind))
        object.__setattr__(self, "synonyms", tuple(self.synonyms))
        object.__setattr__(self, "properties", MappingProxyType(dict(self.properties)))

    def __hash__(self):
        return hash(self.id)


@dataclass(frozen=True, order=True)
class SpecializationEdge:
    parent: str
    child: str
    collection: str | None = None

    def sort_key(self) -> tuple[str, str, str]:
        return (self.parent, self.child, self.collection or "")


@dataclass(frozen=True)
class PropertyValue:
    key: str
    value: PropertyScalar
    origin: str  # "assigned" | "inherited"
    source: str  # node id carrying the assignment


@dataclass(frozen=True)
class PropertyConflict:
    """Equidistant ancestors assign different values; nothing is chosen."""

    key: str
    candidates: tuple[PropertyValue, ...]


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    message: str = ""

    def __str__(self) -> str:
        return f"{self.rule}: {self.subject}" + (f" ({self.message})" if self.message else "")


@dataclass(frozen=True)
class DepthStats:
    counts: dict[str, int]
    paths: int
    median_path: float
    min_path: int
    max_path: int
    multiple_inheritance: int


@dataclass(frozen=True, eq=False)
class ActivitySnapshot:
    """A versioned DAG of activities.

    ``nodes`` is keyed by node id. Edges are kept in canonical order so two
    snapshots built from the same content compare (and serialize) equal.
    """

    version: str
    root: str
    nodes: Mapping[str, ActivityNode]
    edges: tuple[SpecializationEdge, ...] = ()

    def __post_init__(self):
        nodes = self.nodes
        if not isinstance(nodes, Mapping):
            nodes = {n.id: n for n in nodes}
        object.__setattr__(self, "nodes", MappingProxyType(dict(sorted(nodes.items()))))
        object.__setattr__(self, "edges", tuple(sorted(set(self.edges), key=SpecializationEdge.sort_key)))

    @classmethod
    def build(cls, version: str, root: str, nodes: Iterable[ActivityNode],
              edges: Iterable[SpecializationEdge | tuple]) -> ActivitySnapshot:
        edge_objs = [e if isinstance(e, SpecializationEdge) else SpecializationEdge(*e) for e in edges]
        return cls(version=version, root=root, nodes={n.id: n for n in nodes}, edges=tuple(edge_objs))

    def __eq__(self, other):
        if not isinstance(other, ActivitySnapshot):
            return NotImplemented
        return (self.version, self.root, dict(self.nodes), self.edges) == (
            other.version, other.root, dict(other.nodes), other.edges)

    __hash__ = None

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node_id) -> bool:
        return node_id in self.nodes

    def node(self, node_id: str) -> ActivityNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def require(self, node_id: str) -> None:
        if node_id not in self.nodes:
            raise UnknownNodeError(node_id)

    # -- indices -------------------------------------------------------

    @cached_property
    def parents(self) -> Mapping[str, tuple[str, ...]]:
        out: dict[str, list[str]] = defaultdict(list)
        for e in self.edges:
            out[e.child].append(e.parent)
        return {k: tuple(sorted(set(v))) for k, v in out.items()}

    @cached_property
    def children(self) -> Mapping[str, tuple[str, ...]]:
        out: dict[str, list[str]] = defaultdict(list)
        for e in self.edges:
            out[e.parent].append(e.child)
        return {k: tuple(sorted(set(v))) for k, v in out.items()}

    @cached_property
    def by_title(self) -> Mapping[str, str]:
        """Title -> node id. On duplicate titles the first id (sorted) wins."""
        out: dict[str, str] = {}
        for nid, n in self.nodes.items():
            out.setdefault(n.title, nid)
        return out

    def parents_of(self, node_id: str) -> tuple[str, ...]:
        return self.parents.get(node_id, ())

    def children_of(self, node_id: str) -> tuple[str, ...]:
        return self.children.get(node_id, ())

    def title(self, node_id: str) -> str:
        return self.node(node_id).title

    def id_for(self, title_or_id: str) -> str:
        """Resolve an id, falling back to an exact title match."""
        if title_or_id in self.nodes:
            return title_or_id
        try:
            return self.by_title[title_or_id]
        except KeyError:
            raise UnknownNodeError(title_or_id) from None

    @cached_property
    def topological_order(self) -> tuple[str, ...]:
        order = _kahn(self.nodes, self.children, self.parents)
        if len(order) != len(self.nodes):
            raise InvalidSnapshotError(validate(self))
        return tuple(order)

    @cached_property
    def depths(self) -> Mapping[str, int]:
        """Longest root path in nodes, for every node reachable from the root."""
        out: dict[str, int] = {}
        for nid in self.topological_order:
            if nid == self.root:
                out[nid] = 1
                continue
            ds = [out[p] for p in self.parents_of(nid) if p in out]
            if ds:
                out[nid] = max(ds) + 1
        return out

    @cached_property
    def _ancestor_cache(self) -> dict[str, frozenset[str]]:
        return {}

    def ancestors_of(self, node_id: str) -> frozenset[str]:
        """Memoized ancestor set (excluding the node itself)."""
        cache = self._ancestor_cache
        hit = cache.get(node_id)
        if hit is not None:
            return hit
        self.require(node_id)
        result = frozenset(_bfs(node_id, self.parents))
        cache[node_id] = result
        return result


def _kahn(nodes, children, parents) -> list[str]:
    indeg = {nid: len(parents.get(nid, ())) for nid in nodes}
    ready = deque(sorted(nid for nid, d in indeg.items() if d == 0))
    order = []
    while ready:
        nid = ready.popleft()
        order.append(nid)
        for c in children.get(nid, ()):
            if c not in indeg:
                continue
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return order


def _bfs(start: str, adjacency: Mapping[str, Iterable[str]]) -> set[str]:
    seen: set[str] = set()
    queue = deque(adjacency.get(start, ()))
    while queue:
        nid = queue.popleft()
        if nid in seen:
            continue
        seen.add(nid)
        queue.extend(adjacency.get(nid, ()))
    seen.discard(start)
    return seen


def validate(snapshot: ActivitySnapshot) -> list[Violation]:
    """Check every structural invariant. Returns violations, never raises."""
    out: list[Violation] = []
    nodes = snapshot.nodes

    if snapshot.root not in nodes:
        out.append(Violation("missing-root", snapshot.root, "root id is not a node"))

    seen_titles: dict[str, str] = {}
    for nid, node in nodes.items():
        if nid != node.id:
            out.append(Violation("id-mismatch", nid, f"keyed as {nid!r} but node id is {node.id!r}"))
        if not node.title or not node.title.strip():
            out.append(Violation("empty-title", nid))
        elif node.title in seen_titles:
            out.append(Violation("duplicate-title", nid, f"{node.title!r} also used by {seen_titles[node.title]}"))
        else:
            seen_titles[node.title] = nid

    edge_pairs: Counter = Counter()
    for e in snapshot.edges:
        edge_pairs[(e.parent, e.child)] += 1
        label = f"{e.parent}->{e.child}"
        if e.parent not in nodes or e.child not in nodes:
            out.append(Violation("dangling-edge", label, "endpoint is not a node"))
            continue
        if e.parent == e.child:
            out.append(Violation("cycle", label, "self-loop"))
        pkind, ckind = nodes[e.parent].kind, nodes[e.child].kind
        if pkind is NodeKind.SOURCE_TASK:
            out.append(Violation("source-task-has-children", label))
        elif pkind is NodeKind.ATOMIC and ckind is not NodeKind.SOURCE_TASK:
            out.append(Violation("atomic-activity-child", label, f"child kind {ckind.value}"))
        if e.collection is not None and not e.collection.strip():
            out.append(Violation("empty-collection-label", label))
    for (p, c), n in sorted(edge_pairs.items()):
        if n > 1:
            out.append(Violation("duplicate-edge", f"{p}->{c}", "same pair under several collections"))

    parents = snapshot.parents
    if snapshot.root in parents:
        out.append(Violation("root-has-parent", snapshot.root))
    for nid in nodes:
        if nid != snapshot.root and not parents.get(nid):
            out.append(Violation("orphan", nid))

    order = _kahn(nodes, snapshot.children, parents)
    if len(order) != len(nodes):
        stuck = sorted(set(nodes) - set(order))
        out.append(Violation("cycle", ", ".join(stuck[:10]) + (" ..." if len(stuck) > 10 else ""),
                             f"{len(stuck)} nodes on or below a cycle"))

    if snapshot.root in nodes:
        reachable = _bfs(snapshot.root, snapshot.children) | {snapshot.root}
        for nid in nodes:
            if nid not in reachable and parents.get(nid):
                out.append(Violation("unreachable", nid, "not reachable from root"))
    return out


def check_valid(snapshot: ActivitySnapshot) -> ActivitySnapshot:
    violations = validate(snapshot)
    if violations:
        raise InvalidSnapshotError(violations)
    return snapshot


def closure(snapshot: ActivitySnapshot, node: str, direction: str = "ancestors") -> set[str]:
    snapshot.require(node)
    if direction == "ancestors":
        return set(snapshot.ancestors_of(node))
    if direction == "descendants":
        return _bfs(node, snapshot.children)
    raise ValueError(f"direction must be 'ancestors' or 'descendants', got {direction!r}")


def depth(snapshot: ActivitySnapshot, node: str) -> int:
    snapshot.require(node)
    try:
        return snapshot.depths[node]
    except KeyError:
        raise InvalidSnapshotError([Violation("unreachable", node)]) from None


def resolve_property(snapshot: ActivitySnapshot, node: str,
                     key: str) -> PropertyValue | PropertyConflict | None:
    """Own value if assigned, else the value held by the nearest ancestors.

    Ancestors are visited level by level (minimum edge distance). When the
    nearest level holds more than one distinct value the result is a
    :class:`PropertyConflict` listing every candidate.
    """
    if not key:
        raise ValueError("property key must be non-empty")
    own = snapshot.node(node).properties
    if key in own:
        return PropertyValue(key, own[key], "assigned", node)

    seen = {node}
    frontier = list(snapshot.parents_of(node))
    while frontier:
        level = sorted(set(frontier) - seen)
        seen.update(level)
        found = [PropertyValue(key, snapshot.nodes[a].properties[key], "inherited", a)
                 for a in level if key in snapshot.nodes[a].properties]
        if found:
            if len({repr(f.value) for f in found}) == 1:
                return found[0]
            return PropertyConflict(key, tuple(found))
        frontier = [p for a in level for p in snapshot.parents_of(a)]
    return None


def snapshot_stats(snapshot: ActivitySnapshot) -> DepthStats:
    """Counts by kind plus exact path-length statistics over every maximal
    root-to-sink path. Sinks are source tasks when the snapshot has any,
    otherwise childless nodes. Paths are counted, not enumerated."""
    check_valid(snapshot)
    counts = Counter(n.kind.value for n in snapshot.nodes.values())
    has_tasks = counts.get(NodeKind.SOURCE_TASK.value, 0) > 0

    # per node: histogram of root-path lengths (in nodes) -> number of paths
    hist: dict[str, Counter] = {}
    for nid in snapshot.topological_order:
        if nid == snapshot.root:
            hist[nid] = Counter({1: 1})
            continue
        h: Counter = Counter()
        for p in snapshot.parents_of(nid):
            for length, n in hist[p].items():
                h[length + 1] += n
        hist[nid] = h

    total: Counter = Counter()
    for nid, node in snapshot.nodes.items():
        is_sink = node.kind is NodeKind.SOURCE_TASK if has_tasks else not snapshot.children_of(nid)
        if is_sink:
            total.update(hist[nid])

    lengths = sorted(total)
    npaths = sum(total.values())
    median = _counted_median(total, npaths)
    multi = sum(1 for nid in snapshot.nodes if len(snapshot.parents_of(nid)) >= 2)
    return DepthStats(
        counts=dict(sorted(counts.items())),
        paths=npaths,
        median_path=median,
        min_path=lengths[0],
        max_path=lengths[-1],
        multiple_inheritance=multi,
    )


def _counted_median(hist: Counter, n: int) -> float:
    if n <= 200_000:
        return float(statistics.median(sorted(hist.elements())))
    # too many paths to expand: walk the cumulative histogram instead
    targets = [(n - 1) // 2, n // 2]
    vals = []
    for t in targets:
        acc = 0
        for length in sorted(hist):
            acc += hist[length]
            if acc > t:
                vals.append(length)
                break
    return (vals[0] + vals[1]) / 2
