"""Hybrid keyword + semantic retrieval over ontology nodes and lexical
near-duplicate flagging."""

from __future__ import annotations

import hashlib
import re
from collections import defaultdict
from dataclasses import dataclass
from itertools import combinations
from typing import Protocol, runtime_checkable

import numpy as np

from .ontology import ActivitySnapshot

_TOKEN = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@runtime_checkable
class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingEmbedder:
    """Deterministic bag-of-words embedder: each lowercase token adds 1 to a
    bucket chosen by a stable hash. No network, no state."""

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension

    def bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for tok in tokenize(text):
            vec[self.bucket(tok)] += 1.0
        return vec

    def __repr__(self) -> str:
        return f"HashingEmbedder(dimension={self.dimension})"


@dataclass(frozen=True)
class SearchHit:
    node: str
    score: float
    channel: str  # "keyword" | "semantic"


def node_text(snapshot: ActivitySnapshot, node_id: str) -> str:
    n = snapshot.nodes[node_id]
    return " ".join([n.title, n.definition or "", *n.synonyms]).strip()


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


class SemanticIndex:
    """Unit-normalized node embeddings for one snapshot/embedder pair."""

    def __init__(self, snapshot: ActivitySnapshot, embedder: Embedder, nodes=None):
        self.snapshot = snapshot
        self.embedder = embedder
        self.dimension = embedder.dimension
        ids = sorted(snapshot.nodes if nodes is None else nodes)
        self.node_ids = ids
        mat = np.zeros((len(ids), self.dimension), dtype=np.float64)
        for i, nid in enumerate(ids):
            vec = np.asarray(embedder.embed(node_text(snapshot, nid)), dtype=np.float64)
            if vec.shape != (self.dimension,):
                raise ValueError(f"embedder returned shape {vec.shape}, expected ({self.dimension},)")
            mat[i] = _unit(vec)
        self.matrix = mat
        self._titles = np.array([snapshot.nodes[n].title for n in ids], dtype=str)

    def query(self, query: str, embedder: Embedder, limit: int) -> list[SearchHit]:
        if not query or not query.strip():
            raise ValueError("query must be non-empty")
        if embedder.dimension != self.dimension:
            raise ValueError(f"embedder dimension {embedder.dimension} does not match index {self.dimension}")
        q = np.asarray(embedder.embed(query), dtype=np.float64)
        if q.shape != (self.dimension,):
            raise ValueError(f"query embedding has shape {q.shape}, expected ({self.dimension},)")
        scores = self.matrix @ _unit(q)
        # descending score, then title; lexsort keys are last-major
        order = np.lexsort((self._titles, -scores))[:max(limit, 0)]
        return [SearchHit(self.node_ids[i], float(scores[i]), "semantic") for i in order]


def keyword_search(snapshot: ActivitySnapshot, query: str, limit: int = 10) -> list[SearchHit]:
    """Token match over title + synonyms. Exact (case-insensitive) title
    matches first, then by number of distinct query tokens matched."""
    q_tokens = set(tokenize(query))
    if not q_tokens:
        raise ValueError("query must be non-empty")
    q_norm = " ".join(query.lower().split())
    ranked = []
    for nid, node in snapshot.nodes.items():
        toks = set(tokenize(" ".join([node.title, *node.synonyms])))
        matched = len(q_tokens & toks)
        if not matched:
            continue
        exact = " ".join(node.title.lower().split()) == q_norm
        ranked.append((not exact, -matched, node.title, nid, matched))
    ranked.sort()
    return [SearchHit(nid, float(m), "keyword") for *_, nid, m in ranked[:limit]]


def semantic_search(snapshot: ActivitySnapshot, query: str, embedder: Embedder, limit: int = 10,
                    index: SemanticIndex | None = None) -> list[SearchHit]:
    if index is None:
        index = SemanticIndex(snapshot, embedder)
    elif index.snapshot is not snapshot:
        raise ValueError("index was built for a different snapshot")
    return index.query(query, embedder, limit)


def interleave(keyword: list[str], semantic: list[str], limit: int) -> list[str]:
    """Alternate channels, keyword first. On its turn a channel contributes
    its next id not already taken, so [A,B] and [A,C] give [A,C,B]. An
    exhausted channel yields to the other."""
    out: list[str] = []
    seen: set[str] = set()
    pos = [0, 0]
    channels = (keyword, semantic)
    turn = 0
    while len(out) < limit:
        for _ in range(2):
            ch = channels[turn]
            while pos[turn] < len(ch) and ch[pos[turn]] in seen:
                pos[turn] += 1
            if pos[turn] < len(ch):
                break
            turn ^= 1
        else:
            break
        item = channels[turn][pos[turn]]
        pos[turn] += 1
        seen.add(item)
        out.append(item)
        turn ^= 1
    return out


def hybrid_search(snapshot: ActivitySnapshot, query: str, embedder: Embedder, limit: int = 10,
                  index: SemanticIndex | None = None) -> list[str]:
    kw = [h.node for h in keyword_search(snapshot, query, limit)]
    sem = [h.node for h in semantic_search(snapshot, query, embedder, limit, index=index)]
    return interleave(kw, sem, limit)


def jaccard(a: set, b: set) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def near_duplicates(snapshot: ActivitySnapshot, threshold: float) -> list[tuple[str, str, float]]:
    """Pairs (a, b, score) with token Jaccard over title + synonyms at or above
    ``threshold``, highest first. Candidates come from an inverted token
    index, so pairs sharing no token are never scored."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    tokens = {nid: frozenset(tokenize(" ".join([n.title, *n.synonyms])))
              for nid, n in snapshot.nodes.items()}
    postings: dict[str, list[str]] = defaultdict(list)
    for nid in sorted(tokens):
        for t in tokens[nid]:
            postings[t].append(nid)
    candidates: set[tuple[str, str]] = set()
    for ids in postings.values():
        candidates.update(combinations(ids, 2))
    out = []
    for a, b in candidates:
        score = jaccard(tokens[a], tokens[b])
        if score >= threshold:
            out.append((a, b, score))
    titles = snapshot.nodes
    out.sort(key=lambda t: (-t[2], titles[t[0]].title, titles[t[1]].title))
    return out
