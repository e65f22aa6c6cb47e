import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build
from workgraph.agreement import (
    AnnotationSet,
    bootstrap_ci,
    mean_pairwise_kappa,
    mean_wup,
    nearest_rank_bounds,
    resample_sets,
    weighted_kappa,
    wup,
    wup_similarity,
)
from workgraph.ontology import UnknownNodeError
from workgraph.synthetic import random_dag, random_tree


def root_paths(s, node):
    if node == s.root:
        return [[node]]
    return [p + [node] for par in s.parents_of(node) for p in root_paths(s, par)]


def wup_oracle(s, a, b):
    """Best S over common ancestors, from explicit root-path enumeration,
    computed in exact fractions."""
    pa, pb = root_paths(s, a), root_paths(s, b)
    depth = {n: max(len(q) for q in root_paths(s, n)) for p in pa + pb for n in p}

    def descent(paths, c):
        return min(len(p) - 1 - p.index(c) for p in paths if c in p)

    common = {n for p in pa for n in p} & {n for p in pb for n in p}
    return max(Fraction(2 * depth[c], 2 * depth[c] + descent(pa, c) + descent(pb, c)) for c in common)


def sets(**named):
    return [AnnotationSet(k, v) for k, v in named.items()]


# -- Wu-Palmer ---------------------------------------------------------------

def test_identical_is_one(activities):
    for n in activities.nodes:
        assert wup(activities, n, n).S == wup_similarity(activities, n, n) == 1.0


def test_chain():
    s = build([("act", "a"), ("a", "b")])
    w = wup(s, "a", "b")
    assert (w.ancestor, w.N, w.N1, w.N2) == ("a", 2, 2, 3)
    assert w.S == pytest.approx(0.8)


def test_siblings():
    s = build([("act", "a"), ("a", "b"), ("a", "c")])
    assert wup(s, "b", "c").S == pytest.approx(2 / 3)


def test_unknown_node(diamond):
    with pytest.raises(UnknownNodeError):
        wup(diamond, "d", "nope")


def test_diamond_picks_deepest_route(diamond):
    w = wup(diamond, "b", "d")
    assert (w.ancestor, w.N, w.N1, w.N2) == ("b", 2, 2, 3)


def test_shallower_ancestor_lowers_score():
    # chain of depth 8; pair hangs below progressively shallower ancestors
    edges = [(f"n{i}", f"n{i + 1}") for i in range(7)]
    scores = []
    for k in range(7, 0, -1):
        s = build(edges + [(f"n{k}", "x"), (f"n{k}", "y")], root="n0")
        scores.append(wup(s, "x", "y").S)
    assert all(a > b for a, b in zip(scores, scores[1:]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 50))
def test_tree_matches_oracle(seed, n):
    r = random.Random(seed)
    s = random_tree(n, r)
    ids = sorted(s.nodes)
    for _ in range(15):
        a, b = r.choice(ids), r.choice(ids)
        assert Fraction(wup(s, a, b).S).limit_denominator(10**6) == wup_oracle(s, a, b)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 25))
def test_dag_matches_oracle_and_symmetric(seed, n):
    r = random.Random(seed)
    s = random_dag(n, r, multi=0.5)
    ids = sorted(s.nodes)
    for _ in range(15):
        a, b = r.choice(ids), r.choice(ids)
        w, v = wup(s, a, b), wup(s, b, a)
        assert w.S == v.S
        assert Fraction(2 * w.N, w.N1 + w.N2) == wup_oracle(s, a, b)
        assert 0 < w.S <= 1 and (w.S == 1) == (a == b)


# -- mean WuP ----------------------------------------------------------------

def test_mean_wup_examples():
    s = build([("act", "a"), ("a", "b")])
    x = AnnotationSet("x", {"i1": "a", "i2": "a"})
    y = AnnotationSet("y", {"i1": "a", "i2": "b"})
    assert mean_wup(s, [x, x]) == 1.0
    assert mean_wup(s, [x, y]) == pytest.approx(0.9)
    assert mean_wup(s, [x, x, x]) == 1.0


def test_mean_wup_modes_and_coverage():
    s = build([("act", "a"), ("a", "b"), ("act", "c")])
    ref = AnnotationSet("ref", {"i1": "a", "i2": "b"})
    p = AnnotationSet("p", {"i1": "a", "i2": "a"})
    q = AnnotationSet("q", {"i1": "c"})
    vs = mean_wup(s, [ref, p, q], mode="versus_reference", return_coverage=True)
    # ref-p: 1.0, 0.8; ref-q: wup(a, c) = 2/(2+2)
    assert vs.value == pytest.approx((1.0 + 0.8 + 0.5) / 3)
    assert (vs.compared, vs.missing) == (3, 1)
    allp = mean_wup(s, [ref, p, q], return_coverage=True)
    assert allp.compared == 4 and allp.missing == 2
    with pytest.raises(ValueError):
        mean_wup(s, [ref], mode="pairwise_all")
    with pytest.raises(ValueError):
        mean_wup(s, [ref, p], mode="round_robin")
    with pytest.raises(ValueError):
        mean_wup(s, [AnnotationSet("u", {"z": "a"}), AnnotationSet("v", {"w": "a"})])


# -- weighted kappa ----------------------------------------------------------

def kappa_oracle(s, la, lb):
    """Direct double sum over every label pair, exact fractions."""
    n = len(la)
    labels = sorted(set(la) | set(lb))
    w = {(x, y): Fraction(1) if x == y else Fraction(wup(s, x, y).S).limit_denominator(10**6)
         for x in labels for y in labels}
    po = sum(w[x, y] for x, y in zip(la, lb)) / n
    pe = sum(Fraction(la.count(x), n) * Fraction(lb.count(y), n) * w[x, y] for x in labels for y in labels)
    return 1.0 if pe == 1 else float((po - pe) / (1 - pe))


def test_kappa_zero_case():
    s = build([("act", "l1"), ("act", "l2")])
    assert wup(s, "l1", "l2").S == 0.5
    a = AnnotationSet("a", {"i1": "l1", "i2": "l2"})
    b = AnnotationSet("b", {"i1": "l1", "i2": "l1"})
    assert weighted_kappa(s, a, b) == pytest.approx(0.0, abs=1e-12)


def test_kappa_perfect_and_constant(activities):
    a = AnnotationSet("a", {"i1": "weld-metal", "i2": "write-report", "i3": "decide"})
    assert weighted_kappa(activities, a, a) == pytest.approx(1.0)
    c = AnnotationSet("c", {"i1": "decide", "i2": "decide"})
    assert weighted_kappa(activities, c, c) == 1.0
    assert mean_pairwise_kappa(activities, [a, a, a]) == pytest.approx(1.0)


def test_kappa_errors(activities):
    a = AnnotationSet("a", {"i1": "decide"})
    with pytest.raises(ValueError):
        weighted_kappa(activities, a, AnnotationSet("b", {"i2": "decide"}))
    with pytest.raises(ValueError):
        weighted_kappa(activities, a, a)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 30))
def test_kappa_matches_oracle(seed, n_items):
    r = random.Random(seed)
    s = random_dag(12, r, multi=0.4)
    ids = sorted(s.nodes)
    la = [r.choice(ids) for _ in range(n_items)]
    lb = [r.choice(ids) for _ in range(n_items)]
    a = AnnotationSet("a", {f"i{k}": v for k, v in enumerate(la)})
    b = AnnotationSet("b", {f"i{k}": v for k, v in enumerate(lb)})
    assert weighted_kappa(s, a, b) == pytest.approx(kappa_oracle(s, la, lb), abs=1e-9)


def test_independent_uniform_kappa_near_zero(activities):
    r = np.random.default_rng(4)
    labels = ["weld-metal", "write-report", "analyze-market", "provide-rehab", "send-message"]
    a = AnnotationSet("a", {f"i{k}": labels[j] for k, j in enumerate(r.integers(0, 5, 600))})
    b = AnnotationSet("b", {f"i{k}": labels[j] for k, j in enumerate(r.integers(0, 5, 600))})
    assert abs(weighted_kappa(activities, a, b)) < 0.05


# -- bootstrap ---------------------------------------------------------------

def test_nearest_rank_bounds():
    assert nearest_rank_bounds(1000, 0.95) == (25, 976)
    assert nearest_rank_bounds(1, 0.95) == (1, 1)
    assert nearest_rank_bounds(100, 0.9) == (5, 96)


def test_constant_metric():
    data = sets(a={"i1": "x", "i2": "y"}, b={"i1": "x", "i2": "y"})
    ci = bootstrap_ci(lambda ss: 0.7, data, resamples=50)
    assert (ci.low, ci.high) == (0.7, 0.7)


def test_bounds_are_order_statistics_and_deterministic(activities):
    r = random.Random(1)
    labels = ["weld-metal", "write-report", "analyze-market", "decide"]
    a = AnnotationSet("a", {f"i{k}": r.choice(labels) for k in range(40)})
    b = AnnotationSet("b", {f"i{k}": r.choice(labels) for k in range(40)})
    metric = lambda ss: mean_wup(activities, ss)  # noqa: E731
    ci = bootstrap_ci(metric, [a, b], resamples=1000, seed=11)
    assert len(ci.estimates) == 1000
    assert ci.estimates == tuple(sorted(ci.estimates))
    assert (ci.low, ci.high) == (ci.estimates[24], ci.estimates[975])
    again = bootstrap_ci(metric, [a, b], resamples=1000, seed=11)
    assert (again.low, again.high) == (ci.low, ci.high)
    assert ci.low <= metric([a, b]) <= ci.high
    low, high = ci
    assert (low, high) == (ci.low, ci.high)


def test_resamples_match_independent_child_seeds():
    universe = [f"i{k}" for k in range(7)]
    data = [AnnotationSet("a", {i: "n" for i in universe})]
    ci = bootstrap_ci(lambda ss: len(set(k.split("#")[0] for k in ss[0].items)), data, resamples=30, seed=5)
    expected = []
    for child in np.random.SeedSequence(5).spawn(30):
        idx = np.random.default_rng(child).integers(0, 7, size=7)
        expected.append(len(set(idx)))
    assert list(ci.estimates) == sorted(expected)


def test_resample_keeps_multiplicity():
    s = AnnotationSet("a", {"i1": "x", "i2": "y"})
    [out] = resample_sets([s], ["i1", "i1", "i2"])
    assert sorted(out.items.values()) == ["x", "x", "y"]


def test_skipped_resamples_counted():
    data = sets(a={"i1": "x", "i2": "y"})
    calls = iter(range(10**6))

    def flaky(ss):
        if next(calls) % 2:
            raise ValueError("nope")
        return 1.0
    ci = bootstrap_ci(flaky, data, resamples=10)
    assert (ci.skipped, len(ci.estimates)) == (5, 5)
    with pytest.raises(ValueError):
        bootstrap_ci(lambda ss: 1 / 0, data, resamples=3)


@pytest.mark.parametrize("kw", [{"resamples": 0}, {"level": 1.0}, {"level": 0}])
def test_bootstrap_argument_checks(kw):
    with pytest.raises(ValueError):
        bootstrap_ci(lambda ss: 0.0, sets(a={"i": "x"}), **kw)
