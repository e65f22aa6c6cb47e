"""File formats: snapshot JSON, nested prompt ontology, record tables, and the
rule-based compound-task splitter."""

from __future__ import annotations

import csv
import enum
import io
import json
import re
from dataclasses import dataclass
from datetime import date, datetime
from decimal import Decimal, InvalidOperation
from typing import Any

from .ontology import (
    ActivityNode,
    ActivitySnapshot,
    InvalidSnapshotError,
    NodeKind,
    SpecializationEdge,
    validate,
)

SNAPSHOT_SCHEMA = "workgraph-snapshot/1"


class SchemaError(ValueError):
    """Snapshot document does not follow the schema."""


# -- snapshots ---------------------------------------------------------------

def snapshot_to_dict(snapshot: ActivitySnapshot) -> dict[str, Any]:
    nodes = []
    for nid, n in snapshot.nodes.items():
        doc: dict[str, Any] = {
            "id": nid,
            "title": n.title,
            "kind": n.kind.value,
            "synonyms": list(n.synonyms),
            "properties": dict(sorted(n.properties.items())),
        }
        if n.definition is not None:
            doc["definition"] = n.definition
        nodes.append(doc)
    edges = []
    for e in snapshot.edges:
        doc = {"parent": e.parent, "child": e.child}
        if e.collection is not None:
            doc["collection"] = e.collection
        edges.append(doc)
    return {
        "schema": SNAPSHOT_SCHEMA,
        "version": snapshot.version,
        "root": snapshot.root,
        "nodes": nodes,
        "edges": edges,
    }


def save_snapshot(snapshot: ActivitySnapshot) -> bytes:
    text = json.dumps(snapshot_to_dict(snapshot), sort_keys=True, ensure_ascii=False, indent=1)
    return (text + "\n").encode("utf-8")


def _require(doc: dict, key: str, kind: type | tuple, where: str):
    if key not in doc:
        raise SchemaError(f"{where}: missing required field {key!r}")
    val = doc[key]
    if not isinstance(val, kind):
        raise SchemaError(f"{where}: field {key!r} has wrong type {type(val).__name__}")
    return val


def snapshot_from_dict(doc: Any, check: bool = True) -> ActivitySnapshot:
    if not isinstance(doc, dict):
        raise SchemaError("snapshot document must be an object")
    schema = doc.get("schema", SNAPSHOT_SCHEMA)
    if schema != SNAPSHOT_SCHEMA:
        raise SchemaError(f"schema version mismatch: expected {SNAPSHOT_SCHEMA!r}, got {schema!r}")
    version = _require(doc, "version", str, "snapshot")
    root = _require(doc, "root", str, "snapshot")
    raw_nodes = _require(doc, "nodes", list, "snapshot")
    raw_edges = _require(doc, "edges", list, "snapshot")

    nodes: dict[str, ActivityNode] = {}
    for i, nd in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        if not isinstance(nd, dict):
            raise SchemaError(f"{where}: must be an object")
        nid = _require(nd, "id", str, where)
        if nid in nodes:
            raise SchemaError(f"{where}: duplicate node id {nid!r}")
        kind = nd.get("kind", "generic")
        try:
            kind = NodeKind(kind)
        except ValueError:
            raise SchemaError(f"{where}: unknown kind {kind!r}") from None
        props = nd.get("properties", {})
        if not isinstance(props, dict) or any(
                isinstance(v, bool) or not isinstance(v, (int, float, str)) for v in props.values()):
            raise SchemaError(f"{where}: properties must map keys to numbers or tags")
        synonyms = nd.get("synonyms", [])
        if not isinstance(synonyms, list) or not all(isinstance(s, str) for s in synonyms):
            raise SchemaError(f"{where}: synonyms must be a list of text")
        definition = nd.get("definition")
        if definition is not None and not isinstance(definition, str):
            raise SchemaError(f"{where}: definition must be text")
        nodes[nid] = ActivityNode(
            id=nid, title=_require(nd, "title", str, where), kind=kind,
            definition=definition, synonyms=tuple(synonyms), properties=props)

    edges = []
    for i, ed in enumerate(raw_edges):
        where = f"edges[{i}]"
        if not isinstance(ed, dict):
            raise SchemaError(f"{where}: must be an object")
        coll = ed.get("collection")
        if coll is not None and not isinstance(coll, str):
            raise SchemaError(f"{where}: collection must be text")
        edges.append(SpecializationEdge(_require(ed, "parent", str, where),
                                        _require(ed, "child", str, where), coll))

    snapshot = ActivitySnapshot(version=version, root=root, nodes=nodes, edges=tuple(edges))
    if check:
        violations = validate(snapshot)
        if violations:
            raise InvalidSnapshotError(violations)
    return snapshot


def load_snapshot(data: bytes | str, check: bool = True) -> ActivitySnapshot:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed snapshot document: {exc}") from None
    return snapshot_from_dict(doc, check=check)


# -- prompt ontology ---------------------------------------------------------

def prompt_ontology(snapshot: ActivitySnapshot) -> dict:
    """Nested title-keyed mapping. Collections become ``[label]`` keys and
    multiply-inherited nodes are repeated under every parent. Source tasks
    are provenance, not activities, and are left out."""
    memo: dict[str, dict] = {}
    nodes = snapshot.nodes

    for nid in reversed(snapshot.topological_order):
        sub: dict[str, dict] = {}
        grouped: dict[str, dict] = {}
        for e in _edges_by_parent(snapshot).get(nid, ()):
            child = nodes[e.child]
            if child.kind is NodeKind.SOURCE_TASK:
                continue
            target = sub if e.collection is None else grouped.setdefault(f"[{e.collection}]", {})
            target[child.title] = memo[e.child]
        sub.update(grouped)
        memo[nid] = sub
    return {nodes[snapshot.root].title: memo[snapshot.root]}


def _edges_by_parent(snapshot: ActivitySnapshot) -> dict[str, list[SpecializationEdge]]:
    cached = snapshot.__dict__.get("_edges_by_parent")
    if cached is None:
        cached = {}
        for e in snapshot.edges:
            cached.setdefault(e.parent, []).append(e)
        snapshot.__dict__["_edges_by_parent"] = cached
    return cached


def emit_prompt_ontology(snapshot: ActivitySnapshot) -> bytes:
    cached = snapshot.__dict__.get("_prompt_ontology")
    if cached is None:
        cached = json.dumps(prompt_ontology(snapshot), sort_keys=True, ensure_ascii=False,
                            separators=(",", ":")).encode("utf-8")
        snapshot.__dict__["_prompt_ontology"] = cached
    return cached


# -- record tables -----------------------------------------------------------

class Billing(str, enum.Enum):
    ONE_TIME = "one_time"
    MONTHLY = "monthly"
    YEARLY = "yearly"
    FREE_ONLY = "free_only"
    UNKNOWN = "unknown"


_BILLING_ALIASES = {
    "one_time": Billing.ONE_TIME, "one-time": Billing.ONE_TIME, "onetime": Billing.ONE_TIME,
    "one time": Billing.ONE_TIME, "lifetime": Billing.ONE_TIME,
    "monthly": Billing.MONTHLY, "month": Billing.MONTHLY,
    "yearly": Billing.YEARLY, "annual": Billing.YEARLY, "annually": Billing.YEARLY, "year": Billing.YEARLY,
    "free_only": Billing.FREE_ONLY, "free": Billing.FREE_ONLY, "free-only": Billing.FREE_ONLY,
}


def parse_billing(raw: str) -> Billing:
    return _BILLING_ALIASES.get(raw.strip().lower(), Billing.UNKNOWN)


@dataclass(frozen=True)
class AppRecord:
    name: str
    tagline: str = ""
    description: str = ""
    price: Decimal = Decimal(0)
    billing: Billing = Billing.UNKNOWN
    saves: int = 0
    launch_date: date | None = None
    platform_tags: tuple[str, ...] = ()
    billing_raw: str = ""

    @property
    def text(self) -> str:
        return " ".join(p for p in (self.name, self.tagline, self.description) if p)


@dataclass(frozen=True)
class RobotSubclass:
    name: str
    units: int
    price_low: Decimal
    price_high: Decimal
    segments: tuple[str, ...]
    ontology_node: str

    @property
    def midpoint(self) -> Decimal:
        return (self.price_low + self.price_high) / 2


@dataclass(frozen=True)
class SegmentShare:
    segment: str
    share: float


@dataclass(frozen=True)
class SegmentLink:
    segment: str
    subclass: str


@dataclass(frozen=True)
class RecordIssue:
    row: int  # 1-based data row; 0 for the header
    column: str
    message: str

    def __str__(self) -> str:
        where = "header" if self.row == 0 else f"row {self.row}"
        col = f", column {self.column!r}" if self.column else ""
        return f"{where}{col}: {self.message}"


class RecordError(ValueError):
    """Loading a table produced issues. ``records`` keeps the rows that parsed,
    so ``len(records) + len(issues)`` accounts for every data row (plus any
    header issue)."""

    def __init__(self, issues: list[RecordIssue], records: list):
        self.issues = issues
        self.records = records
        head = "; ".join(str(i) for i in issues[:5])
        super().__init__(head + (f" (+{len(issues) - 5} more)" if len(issues) > 5 else ""))


COLUMNS = {
    "apps": ("name", "tagline", "description", "price", "billing", "saves", "launch_date", "tags"),
    "robots": ("name", "units", "price_low", "price_high", "segments", "ontology_node"),
    "segments": ("segment", "share"),
    "segment_mapping": ("segment", "subclass"),
}

LIST_SEP = ";"


def parse_currency(raw: str) -> Decimal:
    s = raw.strip()
    if s.startswith("$"):
        s = s[1:]
    if not s or not re.fullmatch(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?", s):
        raise ValueError(f"not a plain currency amount: {raw!r}")
    try:
        val = Decimal(s)
    except InvalidOperation:
        raise ValueError(f"not a currency amount: {raw!r}") from None
    if val < 0:
        raise ValueError(f"negative amount: {raw!r}")
    return val


def parse_count(raw: str) -> int:
    s = raw.strip()
    if not re.fullmatch(r"\d+", s):
        raise ValueError(f"not a non-negative integer: {raw!r}")
    return int(s)


_DATE_FORMATS = ("%Y-%m-%d", "%d-%b-%y", "%d-%b-%Y", "%Y/%m/%d")


def parse_date(raw: str) -> date:
    s = raw.strip()
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(s, fmt).date()
        except ValueError:
            continue
    raise ValueError(f"unrecognized date: {raw!r}")


def parse_share(raw: str) -> float:
    s = raw.strip()
    pct = s.endswith("%")
    if pct:
        s = s[:-1]
    try:
        val = float(s)
    except ValueError:
        raise ValueError(f"not a fraction: {raw!r}") from None
    if pct:
        val /= 100
    if not 0 <= val <= 1:
        raise ValueError(f"share outside [0, 1]: {raw!r}")
    return val


def _split_list(raw: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in raw.split(LIST_SEP) if p.strip())


def _build_app(row: dict[str, str]) -> AppRecord:
    billing = parse_billing(row["billing"])
    price = _cell("price", parse_currency, row) if row["price"].strip() else Decimal(0)
    if billing is Billing.FREE_ONLY and price != 0:
        raise _CellError("price", "free_only billing requires price 0")
    return AppRecord(
        name=row["name"].strip(),
        tagline=row["tagline"].strip(),
        description=row["description"].strip(),
        price=price,
        billing=billing,
        saves=_cell("saves", parse_count, row),
        launch_date=_cell("launch_date", parse_date, row),
        platform_tags=_split_list(row["tags"]),
        billing_raw=row["billing"].strip(),
    )


def _build_robot(row: dict[str, str]) -> RobotSubclass:
    low = _cell("price_low", parse_currency, row)
    high = _cell("price_high", parse_currency, row)
    if low > high:
        raise _CellError("price_high", "price_low exceeds price_high")
    segments = _split_list(row["segments"])
    if not segments:
        raise _CellError("segments", "at least one segment required")
    node = row["ontology_node"].strip()
    if not node:
        raise _CellError("ontology_node", "empty node title")
    return RobotSubclass(row["name"].strip(), _cell("units", parse_count, row), low, high, segments, node)


def _build_segment(row: dict[str, str]) -> SegmentShare:
    return SegmentShare(row["segment"].strip(), _cell("share", parse_share, row))


def _build_link(row: dict[str, str]) -> SegmentLink:
    return SegmentLink(row["segment"].strip(), row["subclass"].strip())


class _CellError(ValueError):
    def __init__(self, column: str, message: str):
        super().__init__(message)
        self.column = column


def _cell(column: str, parser, row: dict[str, str]):
    try:
        return parser(row[column])
    except _CellError:
        raise
    except ValueError as exc:
        raise _CellError(column, str(exc)) from None


_BUILDERS = {
    "apps": (_build_app, lambda r: r.name),
    "robots": (_build_robot, lambda r: r.name),
    "segments": (_build_segment, lambda r: r.segment),
    "segment_mapping": (_build_link, lambda r: (r.segment, r.subclass)),
}


def load_records(data: bytes | str, kind: str) -> list:
    """Parse a header-first delimited table into typed records.

    Raises :class:`RecordError` if any row fails; the error carries both the
    issues and the rows that did parse.
    """
    if kind not in COLUMNS:
        raise ValueError(f"unknown record kind {kind!r}; expected one of {sorted(COLUMNS)}")
    text = data.decode("utf-8-sig") if isinstance(data, bytes) else data
    reader = csv.reader(io.StringIO(text), skipinitialspace=True)
    header = next(reader, None)
    if header is None:
        return []
    header = [h.strip() for h in header]
    expected = COLUMNS[kind]
    issues: list[RecordIssue] = []
    unknown = [h for h in header if h not in expected]
    missing = [c for c in expected if c not in header]
    for h in unknown:
        issues.append(RecordIssue(0, h, "unknown column"))
    for c in missing:
        issues.append(RecordIssue(0, c, "missing column"))
    if issues:
        raise RecordError(issues, [])

    build, key = _BUILDERS[kind]
    records = []
    seen: dict[Any, int] = {}
    for rownum, cells in enumerate(reader, start=1):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != len(header):
            issues.append(RecordIssue(rownum, "", f"expected {len(header)} cells, got {len(cells)}"))
            continue
        row = dict(zip(header, cells))
        try:
            rec = build(row)
        except _CellError as exc:
            issues.append(RecordIssue(rownum, exc.column, str(exc)))
            continue
        k = key(rec)
        if k in seen:
            issues.append(RecordIssue(rownum, header[0], f"duplicate record {k!r} (first at row {seen[k]})"))
            continue
        if isinstance(k, str) and not k:
            issues.append(RecordIssue(rownum, header[0], "empty name"))
            continue
        seen[k] = rownum
        records.append(rec)
    if issues:
        raise RecordError(issues, records)
    return records


def attach_segments(subclasses: list[RobotSubclass], links: list[SegmentLink]) -> list[RobotSubclass]:
    """Replace each subclass's segment list with the one given by a
    segment_mapping table (subclasses absent from the table keep theirs)."""
    by_sub: dict[str, list[str]] = {}
    for link in links:
        by_sub.setdefault(link.subclass, []).append(link.segment)
    out = []
    for sc in subclasses:
        segs = by_sub.get(sc.name)
        out.append(sc if segs is None else RobotSubclass(
            sc.name, sc.units, sc.price_low, sc.price_high, tuple(segs), sc.ontology_node))
    return out


def dump_records(records: list, kind: str) -> str:
    """Inverse of :func:`load_records` for the fields the tables carry."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS[kind])
    for r in records:
        if kind == "apps":
            w.writerow([r.name, r.tagline, r.description, r.price, r.billing_raw or r.billing.value,
                        r.saves, r.launch_date.isoformat() if r.launch_date else "",
                        LIST_SEP.join(r.platform_tags)])
        elif kind == "robots":
            w.writerow([r.name, r.units, r.price_low, r.price_high, LIST_SEP.join(r.segments), r.ontology_node])
        elif kind == "segments":
            w.writerow([r.segment, r.share])
        else:
            w.writerow([r.segment, r.subclass])
    return buf.getvalue()


# -- compound task splitting -------------------------------------------------

@dataclass(frozen=True)
class VerbObject:
    verb: str
    object: str = ""

    def __str__(self) -> str:
        return f"{self.verb} {self.object}".strip()


_COORD = re.compile(r"\s*,\s*(?:and\s+|or\s+)?|\s+(?:and|or)\s+", re.IGNORECASE)


def decompose_task(text: str) -> list[VerbObject]:
    """Split a coordinated task into verb-object pairs.

    Two shapes are split: a run of bare verbs sharing one trailing object
    ("Acquire, distribute and store supplies") and coordinated clauses that
    all carry the same object ("write code, and test code"). Anything else
    comes back as one pair: first token as the verb, the rest as the object.
    """
    text = " ".join(text.split())
    if not text:
        raise ValueError("task text must be non-empty")
    parts = [p for p in _COORD.split(text) if p]
    if len(parts) >= 2:
        head, last = parts[:-1], parts[-1].split(" ", 1)
        if all(" " not in p for p in head) and len(last) == 2:
            verbs = head + [last[0]]
            return [VerbObject(v.lower(), last[1]) for v in verbs]
        split = [p.split(" ", 1) for p in parts]
        if all(len(s) == 2 for s in split) and len({s[1] for s in split}) == 1:
            return [VerbObject(s[0].lower(), s[1]) for s in split]
    first, _, rest = text.partition(" ")
    return [VerbObject(first.lower(), rest)]
