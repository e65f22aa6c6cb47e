from __future__ import annotations

import random
from collections import defaultdict
from importlib import resources

import pytest

from workgraph.ingest import load_snapshot
from workgraph.ontology import ActivityNode, ActivitySnapshot, NodeKind, SpecializationEdge

FIXTURES = resources.files("workgraph") / "fixtures"


def fixture_bytes(name: str) -> bytes:
    return (FIXTURES / name).read_bytes()


def fixture_path(name: str) -> str:
    return str(FIXTURES / name)


def build(edges, root="act", kinds=None, titles=None, props=None, version="t"):
    """Snapshot from ``(parent, child[, collection])`` tuples; titles default to ids."""
    ids = {root}
    for e in edges:
        ids.update(e[:2])
    kinds = kinds or {}
    titles = titles or {}
    props = props or {}
    nodes = [ActivityNode(i, titles.get(i, i), kinds.get(i, NodeKind.GENERIC), properties=props.get(i, {}))
             for i in sorted(ids)]
    return ActivitySnapshot.build(version, root, nodes,
                                  [SpecializationEdge(*e) for e in edges])


@pytest.fixture
def diamond():
    return load_snapshot(fixture_bytes("diamond.json"))


@pytest.fixture
def activities():
    return load_snapshot(fixture_bytes("activities.json"))


@pytest.fixture
def rng():
    return random.Random(20240611)


# -- acceptance summary ------------------------------------------------------

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion this test checks")
    config._criteria = defaultdict(lambda: {"title": "", "tests": []})


def pytest_collection_modifyitems(config, items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            n, title = m.args
            entry = config._criteria[n]
            entry["title"] = title
            entry["tests"].append([item.nodeid, None])


def pytest_runtest_logreport(report):
    config = pytest_runtest_logreport.config
    if config is None:
        return
    for entry in config._criteria.values():
        for t in entry["tests"]:
            if t[0] == report.nodeid:
                if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
                    t[1] = report.outcome if t[1] in (None, "passed") else t[1]


pytest_runtest_logreport.config = None


@pytest.hookimpl(tryfirst=True)
def pytest_sessionstart(session):
    pytest_runtest_logreport.config = session.config


def pytest_terminal_summary(terminalreporter, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(criteria):
        entry = criteria[n]
        outcomes = [o for _, o in entry["tests"]]
        if any(o is None for o in outcomes):
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        else:
            status = "FAIL"
        tr.write_line(f"criterion {n:>2}: {status:<7} {entry['title']}")
        if status == "FAIL":
            for nodeid, o in entry["tests"]:
                if o != "passed":
                    tr.write_line(f"               {o}: {nodeid.split('::', 1)[-1]}")
