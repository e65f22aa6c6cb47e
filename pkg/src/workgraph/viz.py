"""Sunburst layout from node tallies, plus SVG and JSON renderings.

The DAG is unrolled into a tree from the root: a node with several
rendered parents gets one arc under each of them, and those arcs are
drawn dashed. Angular width is structural (descendant activity count),
color intensity encodes the tally.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping
from xml.sax.saxutils import escape

from .aggregation import NodeTally
from .ontology import ACTIVITY_KINDS, ActivitySnapshot

DOC_SCHEMA = "workgraph-sunburst/1"
LABEL_MIN_DEGREES = 3.0


@dataclass(frozen=True)
class Arc:
    index: int
    parent: int | None
    node: str
    title: str
    ring: int
    start: float
    end: float
    percent: float
    intensity: float
    dashed: bool
    gray: bool
    collection: str | None = None

    @property
    def span(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class CollectionBand:
    """Thin separator drawn under a run of siblings sharing a collection."""

    parent: int
    label: str
    ring: int
    start: float
    end: float


@dataclass(frozen=True)
class SunburstModel:
    arcs: tuple[Arc, ...]
    max_depth: int
    legend: Mapping = field(default_factory=dict)
    bands: tuple[CollectionBand, ...] = ()

    def children(self, index: int) -> list[Arc]:
        return [a for a in self.arcs if a.parent == index]


def _structure_weights(snapshot: ActivitySnapshot, mode: str) -> dict[str, int]:
    key = f"_sunburst_weights_{mode}"
    cached = snapshot.__dict__.get(key)
    if cached is not None:
        return cached
    nodes = snapshot.nodes
    desc: dict[str, frozenset] = {}
    for nid in reversed(snapshot.topological_order):
        acc: set = set()
        for c in snapshot.children_of(nid):
            if nodes[c].kind in ACTIVITY_KINDS:
                acc.add(c)
                acc |= desc[c]
        desc[nid] = frozenset(acc)
    if mode == "descendants":
        weights = {nid: len(d) + 1 for nid, d in desc.items()}
    elif mode == "leaves":
        leaves = {nid for nid, d in desc.items() if not d}
        weights = {nid: len(d & leaves) or 1 for nid, d in desc.items()}
    else:
        raise ValueError("weighting must be 'descendants' or 'leaves'")
    snapshot.__dict__[key] = weights
    return weights


def build_sunburst(snapshot: ActivitySnapshot, tallies: Mapping[str, NodeTally], max_depth: int = 5,
                   color_scale_max: float | None = None, total: float | None = None,
                   weighting: str = "descendants") -> SunburstModel:
    """Lay out rings 0..max_depth-1. Percent is aggregated / total (root
    aggregated by default); intensity is ``min(percent / color_scale_max, 1)``
    with the ceiling defaulting to the largest non-root percent."""
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    weights = _structure_weights(snapshot, weighting)
    edges_by_parent: dict[str, list] = {}
    for e in snapshot.edges:
        if snapshot.nodes[e.child].kind in ACTIVITY_KINDS:
            edges_by_parent.setdefault(e.parent, []).append(e)
    for lst in edges_by_parent.values():
        lst.sort(key=lambda e: snapshot.nodes[e.child].title)

    root = snapshot.root
    if total is None:
        t = tallies.get(root)
        total = t.aggregated if t else 0.0

    def pct(nid):
        t = tallies.get(nid)
        return (t.aggregated / total) if (t and total > 0) else 0.0

    # (index, parent index, node, ring, start, end, collection)
    raw: list[tuple] = [(0, None, root, 0, 0.0, 360.0, None)]
    bands: list[CollectionBand] = []
    stack = [0]
    while stack:
        idx = stack.pop()
        _, _, nid, ring, start, end, _ = raw[idx]
        if ring + 1 >= max_depth:
            continue
        kids = edges_by_parent.get(nid, [])
        if not kids:
            continue
        wsum = sum(weights[e.child] for e in kids)
        span = end - start
        acc = 0
        run_label, run_start = None, None
        new = []
        for i, e in enumerate(kids):
            a = start + span * acc / wsum
            acc += weights[e.child]
            b = end if i == len(kids) - 1 else start + span * acc / wsum
            if e.collection != run_label:
                if run_label is not None:
                    bands.append(CollectionBand(idx, run_label, ring + 1, run_start, a))
                run_label, run_start = e.collection, a
            new.append(len(raw))
            raw.append((len(raw), idx, e.child, ring + 1, a, b, e.collection))
        if run_label is not None:
            bands.append(CollectionBand(idx, run_label, ring + 1, run_start, end))
        stack.extend(reversed(new))

    parents_seen: dict[str, set] = {}
    for _, pidx, nid, *_ in raw:
        if pidx is not None:
            parents_seen.setdefault(nid, set()).add(raw[pidx][2])

    percents = {nid: pct(nid) for nid in {r[2] for r in raw}}
    if color_scale_max is None:
        others = [percents[r[2]] for r in raw[1:]]
        color_scale_max = max(others) if others and max(others) > 0 else 1.0
    if not color_scale_max > 0:
        raise ValueError("color_scale_max must be positive")

    arcs = []
    for idx, pidx, nid, ring, a, b, coll in raw:
        p = percents[nid]
        arcs.append(Arc(
            index=idx, parent=pidx, node=nid, title=snapshot.nodes[nid].title, ring=ring,
            start=a, end=b, percent=p, intensity=min(p / color_scale_max, 1.0),
            dashed=len(parents_seen.get(nid, ())) >= 2, gray=p == 0.0, collection=coll))
    legend = {"color_scale_max": color_scale_max, "total": total, "weighting": weighting,
              "measure": "aggregated"}
    return SunburstModel(tuple(arcs), max_depth, legend, tuple(bands))


# -- SVG ---------------------------------------------------------------------

BASE_RGB = (178, 24, 43)
GRAY_FILL = "#d9d9d9"


def _fmt(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _polar(cx, cy, r, deg):
    rad = math.radians(deg - 90.0)
    return cx + r * math.cos(rad), cy + r * math.sin(rad)


def _sector_path(cx, cy, r0, r1, a0, a1) -> str:
    if a1 - a0 >= 360.0 - 1e-9:
        # full ring: two half-circle arcs per edge
        pts = []
        for r in (r1,) + ((r0,) if r0 > 0 else ()):
            x0, y0 = _polar(cx, cy, r, 0)
            x1, y1 = _polar(cx, cy, r, 180)
            pts.append(f"M{_fmt(x0)},{_fmt(y0)} A{_fmt(r)},{_fmt(r)} 0 1 1 {_fmt(x1)},{_fmt(y1)} "
                       f"A{_fmt(r)},{_fmt(r)} 0 1 1 {_fmt(x0)},{_fmt(y0)} Z")
        return " ".join(pts)
    large = 1 if a1 - a0 > 180 else 0
    ox0, oy0 = _polar(cx, cy, r1, a0)
    ox1, oy1 = _polar(cx, cy, r1, a1)
    parts = [f"M{_fmt(ox0)},{_fmt(oy0)}", f"A{_fmt(r1)},{_fmt(r1)} 0 {large} 1 {_fmt(ox1)},{_fmt(oy1)}"]
    if r0 > 0:
        ix1, iy1 = _polar(cx, cy, r0, a1)
        ix0, iy0 = _polar(cx, cy, r0, a0)
        parts += [f"L{_fmt(ix1)},{_fmt(iy1)}", f"A{_fmt(r0)},{_fmt(r0)} 0 {large} 0 {_fmt(ix0)},{_fmt(iy0)}"]
    else:
        parts.append(f"L{_fmt(cx)},{_fmt(cy)}")
    return " ".join(parts) + " Z"


def _fill(arc: Arc) -> str:
    if arc.gray:
        return GRAY_FILL
    t = arc.intensity
    r, g, b = (round(255 + (c - 255) * t) for c in BASE_RGB)
    return f"#{r:02x}{g:02x}{b:02x}"


def emit_svg(model: SunburstModel, size: int = 800, label_min_degrees: float = LABEL_MIN_DEGREES) -> bytes:
    cx = cy = size / 2
    ring_w = (size / 2 - 4) / max(model.max_depth, 1)
    band_w = max(ring_w * 0.06, 1.0)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        '<g class="arcs">',
    ]
    for a in model.arcs:
        r0 = a.ring * ring_w
        r1 = r0 + ring_w
        stroke = ' stroke="#808080" stroke-dasharray="4 2"' if a.dashed else ' stroke="#ffffff"'
        out.append(f'<path d="{_sector_path(cx, cy, r0, r1, a.start, a.end)}" fill="{_fill(a)}" fill-rule="evenodd"{stroke} '
                   f'stroke-width="0.5" data-node="{escape(a.node, {chr(34): "&quot;"})}">'
                   f'<title>{escape(a.title)} {100 * a.percent:.1f}%</title></path>')
    out.append("</g>")
    if model.bands:
        out.append('<g class="collections">')
        for band in model.bands:
            r0 = band.ring * ring_w
            out.append(f'<path d="{_sector_path(cx, cy, r0, r0 + band_w, band.start, band.end)}" '
                       f'fill="#404040" stroke="none" class="collection"/>')
        out.append("</g>")
    out.append('<g class="labels" font-family="sans-serif" font-size="9" text-anchor="middle">')
    for a in model.arcs:
        if a.span < label_min_degrees:
            continue
        if a.ring == 0:
            x, y = cx, cy
        else:
            x, y = _polar(cx, cy, (a.ring + 0.5) * ring_w, (a.start + a.end) / 2)
        out.append(f'<text x="{_fmt(x)}" y="{_fmt(y)}">{escape(a.title)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode("utf-8")


# -- structured document -----------------------------------------------------

def model_to_doc(model: SunburstModel) -> dict:
    kids: dict[int | None, list[Arc]] = {}
    for a in model.arcs:
        kids.setdefault(a.parent, []).append(a)

    def node(a: Arc) -> dict:
        d = asdict(a)
        del d["parent"]
        d["children"] = [node(c) for c in kids.get(a.index, [])]
        return d

    roots = kids.get(None, [])
    return {
        "schema": DOC_SCHEMA,
        "max_depth": model.max_depth,
        "legend": dict(model.legend),
        "tree": node(roots[0]) if roots else None,
        "bands": [asdict(b) for b in model.bands],
    }


def emit_doc(model: SunburstModel) -> bytes:
    text = json.dumps(model_to_doc(model), sort_keys=True, ensure_ascii=False, indent=1)
    return (text + "\n").encode("utf-8")


def load_doc(data: bytes | str) -> SunburstModel:
    doc = json.loads(data)
    if doc.get("schema") != DOC_SCHEMA:
        raise ValueError(f"expected schema {DOC_SCHEMA!r}, got {doc.get('schema')!r}")
    arcs: list[Arc] = []
    if doc["tree"] is not None:
        stack = [(doc["tree"], None)]
        while stack:
            d, parent = stack.pop()
            arcs.append(Arc(parent=parent, **{k: v for k, v in d.items() if k != "children"}))
            stack.extend((c, d["index"]) for c in reversed(d["children"]))
    arcs.sort(key=lambda a: a.index)
    bands = tuple(CollectionBand(**b) for b in doc.get("bands", []))
    return SunburstModel(tuple(arcs), doc["max_depth"], doc["legend"], bands)
