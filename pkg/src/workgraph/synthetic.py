"""Seeded synthetic ontologies and usage records.

The real occupational and application datasets are licensed, so tests and
benchmarks run on these generators instead.
"""

from __future__ import annotations

import json
import random
from datetime import date, timedelta
from decimal import Decimal

from .ingest import AppRecord, Billing
from .ontology import ActivityNode, ActivitySnapshot, NodeKind, SpecializationEdge

VERBS = ("analyze", "create", "write", "plan", "select", "transfer", "clean", "inspect", "assemble",
         "weld", "design", "review", "schedule", "translate", "record", "measure", "teach", "repair")
OBJECTS = ("report", "market", "video", "image", "code", "route", "floor", "metal", "budget", "data",
           "schedule", "contract", "lesson", "part", "signal", "document", "survey", "inventory")


def random_dag(n: int, rng: random.Random, multi: float = 0.3, max_parents: int = 3,
               collections: bool = False) -> ActivitySnapshot:
    """Single-rooted DAG on ``n`` nodes. Node i > 0 picks parents among
    nodes < i, so it is acyclic by construction; with probability ``multi``
    a node gets extra parents."""
    nodes = [ActivityNode(f"n{i:03d}", f"Node {i}") for i in range(n)]
    edges = set()
    for i in range(1, n):
        k = 1
        if rng.random() < multi:
            k = rng.randint(2, max_parents)
        for p in rng.sample(range(i), min(k, i)):
            coll = rng.choice([None, "how?", "what?"]) if collections else None
            edges.add(SpecializationEdge(f"n{p:03d}", f"n{i:03d}", coll))
    return ActivitySnapshot.build("synthetic", "n000", nodes, edges)


def random_tree(n: int, rng: random.Random) -> ActivitySnapshot:
    return random_dag(n, rng, multi=0.0)


def large_snapshot(n_generic: int = 4000, n_atomic: int = 16000, n_tasks: int = 20000,
                   multi_rate: float = 0.01, max_generic_depth: int = 10,
                   seed: int = 7) -> ActivitySnapshot:
    """Layered snapshot shaped like a work-activity ontology: a generic tree
    under the root, atomic activities on generic nodes, source tasks under
    atomic ones."""
    rng = random.Random(seed)
    nodes = [ActivityNode("g00000", "Act")]
    edges: list[SpecializationEdge] = []
    generic = ["g00000"]
    open_parents = ["g00000"]
    gdepth = {"g00000": 1}
    for i in range(1, n_generic):
        nid = f"g{i:05d}"
        parent = rng.choice(open_parents)
        gdepth[nid] = gdepth[parent] + 1
        if gdepth[nid] < max_generic_depth:
            open_parents.append(nid)
        verb = VERBS[i % len(VERBS)]
        nodes.append(ActivityNode(nid, f"{verb.title()} {i}", NodeKind.GENERIC,
                                  definition=f"{verb} activities of family {i}"))
        coll = f"{verb.title()} how?" if rng.random() < 0.2 else None
        edges.append(SpecializationEdge(parent, nid, coll))
        generic.append(nid)
    atomic = []
    for i in range(n_atomic):
        nid = f"a{i:05d}"
        verb, obj = rng.choice(VERBS), rng.choice(OBJECTS)
        nodes.append(ActivityNode(nid, f"{verb.title()} {obj} {i}", NodeKind.ATOMIC,
                                  synonyms=(f"{verb} the {obj}",)))
        parents = {rng.choice(generic[1:])}
        if rng.random() < multi_rate:
            parents.add(rng.choice(generic[1:]))
        edges.extend(SpecializationEdge(p, nid) for p in parents)
        atomic.append(nid)
    for i in range(n_tasks):
        nid = f"t{i:05d}"
        nodes.append(ActivityNode(nid, f"Task {i}", NodeKind.SOURCE_TASK))
        for p in {rng.choice(atomic) for _ in range(rng.choice((1, 1, 2)))}:
            edges.append(SpecializationEdge(p, nid))
    return ActivitySnapshot.build("synthetic-large", "g00000", nodes, edges)


def synthetic_apps(n: int, seed: int = 11, start: date = date(2016, 1, 1)) -> list[AppRecord]:
    rng = random.Random(seed)
    billings = list(Billing)
    out = []
    for i in range(n):
        verb, obj = rng.choice(VERBS), rng.choice(OBJECTS)
        billing = rng.choice(billings)
        price = Decimal(0) if billing is Billing.FREE_ONLY else Decimal(rng.choice((5, 9, 19, 49, 199)))
        out.append(AppRecord(
            name=f"app-{i:05d}",
            tagline=f"{verb.title()} {obj} with AI.",
            description=f"A tool that helps people {verb} {obj} faster.",
            price=price, billing=billing, saves=rng.randint(0, 500),
            launch_date=start + timedelta(days=rng.randint(0, 3500)),
            billing_raw=billing.value,
        ))
    return out


def scripted_replies(snapshot: ActivitySnapshot, records, seed: int = 3,
                     hallucination_rate: float = 0.02) -> dict[str, str]:
    """One canned JSON reply per record, naming a random activity node (or,
    occasionally, a title that does not exist)."""
    rng = random.Random(seed)
    titles = sorted(n.title for n in snapshot.nodes.values() if n.kind is not NodeKind.SOURCE_TASK)
    out = {}
    for r in records:
        title = rng.choice(titles)
        if rng.random() < hallucination_rate:
            title = title + "s"
        out[r.name] = json.dumps({
            "main_activity": r.tagline.rstrip(".").lower().replace(" with ai", ""),
            "reasoning_main_activity": "taken from the tagline",
            "most_appropriate_node": title,
            "most_appropriate_node_rationale": "closest covering node",
        })
    return out
