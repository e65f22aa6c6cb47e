import random
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build
from workgraph.aggregation import Assignment, tally
from workgraph.ontology import ActivityNode, ActivitySnapshot, NodeKind
from workgraph.synthetic import random_dag
from workgraph.viz import build_sunburst, emit_doc, emit_svg, load_doc


def descendants(s, nid):
    out, stack = set(), [nid]
    while stack:
        for c in s.children_of(stack.pop()):
            if c not in out and s.nodes[c].kind is not NodeKind.SOURCE_TASK:
                out.add(c)
                stack.append(c)
    return out


def model_for(s, assignments=(), **kw):
    return build_sunburst(s, tally(s, list(assignments)), **kw)


def test_root_only():
    s = ActivitySnapshot.build("v", "act", [ActivityNode("act", "Act")], [])
    m = model_for(s, [Assignment("x", "act")])
    [arc] = m.arcs
    assert (arc.start, arc.end, arc.percent, arc.ring) == (0.0, 360.0, 1.0, 0)
    svg = emit_svg(m).decode()
    assert svg.count("<path ") == 1


def test_three_vs_one():
    s = build([("act", "a"), ("act", "b"), ("a", "a1"), ("a", "a2"), ("a", "a3"), ("b", "b1")])
    m = model_for(s)
    spans = {a.node: a.span for a in m.arcs if a.ring == 1}
    # a: 3 descendants + itself = 4; b: 1 + 1 = 2 -> 240/120. Without the +1: 270/90
    assert spans == {"a": pytest.approx(240.0), "b": pytest.approx(120.0)}
    leaves = build_sunburst(s, tally(s, []), weighting="leaves")
    assert {a.node: a.span for a in leaves.arcs if a.ring == 1} == \
        {"a": pytest.approx(270.0), "b": pytest.approx(90.0)}
    with pytest.raises(ValueError):
        build_sunburst(s, tally(s, []), weighting="area")


def test_diamond_two_dashed(diamond):
    m = model_for(diamond, [Assignment("x", "d")])
    dashed = [a for a in m.arcs if a.dashed]
    assert [a.node for a in dashed] == ["d", "d"]
    assert {m.arcs[a.parent].node for a in dashed} == {"b", "c"}
    assert all(a.percent == 1.0 for a in m.arcs)
    assert emit_svg(m).decode().count('stroke-dasharray') == 2


def test_dashed_only_when_both_parents_rendered(diamond):
    m = model_for(diamond, max_depth=2)
    assert not any(a.dashed for a in m.arcs)
    assert {a.node for a in m.arcs} == {"act", "b", "c"}
    with pytest.raises(ValueError):
        model_for(diamond, max_depth=0)


def test_gray_and_intensity(activities):
    asg = [Assignment(f"i{k}", "weld-metal") for k in range(3)] + [Assignment("w", "write-report")]
    m = model_for(activities, asg)
    by = {a.node: a for a in m.arcs}
    assert by["think"].percent == 0.25 and by["do"].percent == 0.75
    assert by["do"].intensity == 1.0
    assert by["think"].intensity == pytest.approx(0.25 / 0.75)
    assert by["interact"].gray and by["interact"].intensity == 0
    pinned = model_for(activities, asg, color_scale_max=0.5)
    assert {a.node: a for a in pinned.arcs}["think"].intensity == 0.5
    with pytest.raises(ValueError):
        model_for(activities, asg, color_scale_max=0)


def test_children_sorted_by_title(activities):
    m = model_for(activities)
    for arc in m.arcs:
        kids = m.children(arc.index)
        assert [k.title for k in kids] == sorted(k.title for k in kids)
        assert [k.start for k in kids] == sorted(k.start for k in kids)


def test_source_tasks_never_drawn(activities):
    m = model_for(activities, max_depth=12)
    assert not any(activities.nodes[a.node].kind is NodeKind.SOURCE_TASK for a in m.arcs)


def test_collection_bands(activities):
    m = model_for(activities)
    labels = {b.label for b in m.bands}
    assert {"Act on what?", "Decide how?", "Decide what?"} <= labels
    assert '<g class="collections">' in emit_svg(m).decode()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 40), st.integers(1, 7))
def test_conservation_and_width_rule(seed, n, depth):
    r = random.Random(seed)
    s = random_dag(n, r, multi=0.4)
    m = model_for(s, [Assignment(f"i{k}", r.choice(sorted(s.nodes))) for k in range(10)], max_depth=depth)
    assert m.arcs[0].span == 360.0
    rendered_parents = {}
    for a in m.arcs:
        kids = m.children(a.index)
        if a.parent is not None:
            p = m.arcs[a.parent]
            assert p.start - 1e-9 <= a.start <= a.end <= p.end + 1e-9
            rendered_parents.setdefault(a.node, set()).add(p.node)
        if kids:
            assert sum(k.span for k in kids) == pytest.approx(a.span, abs=1e-6)
            w = {k.node: len(descendants(s, k.node)) + 1 for k in kids}
            tot = sum(w.values())
            for k in kids:
                assert k.span == pytest.approx(a.span * w[k.node] / tot, abs=1e-6)
        assert 0.0 <= a.intensity <= 1.0
    for a in m.arcs:
        assert a.dashed == (len(rendered_parents.get(a.node, ())) >= 2)


def test_svg_deterministic_and_labels(activities):
    m = model_for(activities, [Assignment("x", "weld-metal")])
    a, b = emit_svg(m), emit_svg(model_for(activities, [Assignment("x", "weld-metal")]))
    assert a == b
    text = a.decode()
    wide = [x for x in m.arcs if x.span >= 3.0]
    assert len(re.findall(r"<text ", text)) == len(wide)
    assert len(re.findall(r"<text ", emit_svg(m, label_min_degrees=400).decode())) == 0
    assert text.startswith('<?xml version="1.0"') and text.rstrip().endswith("</svg>")


def test_svg_escapes_titles():
    s = build([("act", "a")], titles={"act": "Act", "a": 'R&D <"fast">'})
    text = emit_svg(model_for(s)).decode()
    assert "R&amp;D &lt;" in text and 'R&D <' not in text


def test_doc_round_trip(activities, diamond):
    for snap in (activities, diamond):
        m = model_for(snap, [Assignment("x", sorted(snap.nodes)[-1])])
        blob = emit_doc(m)
        back = load_doc(blob)
        assert back.arcs == m.arcs and back.bands == m.bands
        assert emit_doc(back) == blob
    with pytest.raises(ValueError):
        load_doc('{"schema": "other"}')
