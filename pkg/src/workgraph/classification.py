"""Mapping usage records onto ontology nodes through a model client.

Three pipeline shapes are supported:

* ``SPPO``: retrieve a shortlist with the application text, one call both
  extracts the verb-object activity and selects a node.
* ``MPPO``: one call extracts the activity, retrieval runs on that phrase,
  a second call selects from the shortlist.
* ``SPFO``: no retrieval; the whole nested ontology goes into the system
  prompt and one call does everything.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import os
import re
import socket
import threading
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from string import Template
from typing import Iterable, Mapping, Protocol, Sequence

from .ingest import AppRecord, emit_prompt_ontology
from .ontology import ACTIVITY_KINDS, ActivitySnapshot, NodeKind
from .search import Embedder, SemanticIndex

log = logging.getLogger(__name__)

ALLOWED_K = (20, 50, 100)
DEFAULT_K = 100
PROMPT_VERSION = "v1"

BASE_KEYS = ("main_activity", "reasoning_main_activity",
             "most_appropriate_node", "most_appropriate_node_rationale")
EXTRACT_KEYS = ("main_activity", "reasoning_main_activity")
SELECT_KEYS = ("most_appropriate_node", "most_appropriate_node_rationale")

ONTOLOGY_MARKER = "### Ontology Nodes:"


class Strategy(str, enum.Enum):
    SPPO = "SPPO"
    MPPO = "MPPO"
    SPFO = "SPFO"

    @classmethod
    def parse(cls, value) -> Strategy:
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())


class Specificity(str, enum.Enum):
    LEAF = "leaf"
    NEAR_LEAF = "near_leaf"
    INTERNAL = "internal"


class ModelTimeout(TimeoutError):
    pass


class ClassificationError(RuntimeError):
    """A record could not be classified. ``raw`` holds model replies, if any."""

    def __init__(self, message: str, raw: Sequence[str] = ()):
        super().__init__(message)
        self.raw = tuple(raw)


class ReplyParseError(ClassificationError):
    pass


class NoCandidatesError(ClassificationError):
    pass


class ModelClient(Protocol):
    def complete(self, system_prompt: str, user_prompt: str, timeout: float | None = None) -> str: ...


# -- prompts -----------------------------------------------------------------

def _template(name: str) -> Template:
    text = resources.files("workgraph.prompts").joinpath(f"{name}.{PROMPT_VERSION}.txt").read_text("utf-8")
    return Template(text)


def _keys_block(keys: Iterable[str]) -> str:
    return "\n".join(f'- "{k}"' for k in keys)


def application_prompt(record: AppRecord) -> str:
    return _template("application").substitute(
        name=record.name, tagline=record.tagline, description=record.description)


def classify_system_prompt(ontology_json: str, keys: Sequence[str] = BASE_KEYS) -> str:
    return _template("classify").substitute(output_keys=_keys_block(keys), ontology=ontology_json)


def extract_system_prompt() -> str:
    return _template("extract").substitute(output_keys=_keys_block(EXTRACT_KEYS))


def shortlist_ontology(snapshot: ActivitySnapshot, node_ids: Iterable[str]) -> str:
    return json.dumps({snapshot.nodes[n].title: {} for n in node_ids}, sort_keys=True,
                      ensure_ascii=False, separators=(",", ":"))


def _full_system_prompt(snapshot: ActivitySnapshot) -> str:
    key = f"_spfo_prompt_{PROMPT_VERSION}"
    cached = snapshot.__dict__.get(key)
    if cached is None:
        cached = classify_system_prompt(emit_prompt_ontology(snapshot).decode("utf-8"))
        snapshot.__dict__[key] = cached
    return cached


def parse_reply(text: str, keys: Sequence[str]) -> dict[str, str]:
    """Strict parse: one JSON object, exactly ``keys``, string values."""
    try:
        doc = json.loads(text.strip())
    except (json.JSONDecodeError, AttributeError) as exc:
        raise ReplyParseError(f"reply is not JSON: {exc}", [text]) from None
    if not isinstance(doc, dict):
        raise ReplyParseError("reply is not a JSON object", [text])
    if set(doc) != set(keys):
        raise ReplyParseError(f"reply keys {sorted(doc)} != expected {sorted(keys)}", [text])
    bad = [k for k, v in doc.items() if not isinstance(v, str)]
    if bad:
        raise ReplyParseError(f"non-string values for {bad}", [text])
    return doc


_REASK = ("\n\nYour previous reply could not be used: {error}. Reply again with only "
          "one JSON object containing exactly these keys: {keys}.")


def _ask(model: ModelClient, system: str, user: str, keys: Sequence[str],
         timeout: float | None) -> dict[str, str]:
    first = model.complete(system, user, timeout=timeout)
    try:
        return parse_reply(first, keys)
    except ReplyParseError as exc:
        log.info("re-asking after unparseable reply: %s", exc)
        second = model.complete(system, user + _REASK.format(error=exc, keys=", ".join(keys)),
                                timeout=timeout)
        try:
            return parse_reply(second, keys)
        except ReplyParseError as exc2:
            raise ReplyParseError(f"unparseable reply after re-ask: {exc2}", [first, second]) from None


# -- results -----------------------------------------------------------------

@dataclass(frozen=True)
class ClassificationResult:
    record: str
    main_activity: str
    main_activity_rationale: str
    node_title: str
    node_rationale: str
    strategy: Strategy
    k: int | None
    hallucinated: bool
    specificity: Specificity | None
    node: str | None = None
    candidates: tuple[str, ...] | None = None

    @property
    def in_candidates(self) -> bool | None:
        if self.candidates is None:
            return None
        return self.node_title in self.candidates

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = self.strategy.value
        d["specificity"] = self.specificity.value if self.specificity else None
        d["candidates"] = list(self.candidates) if self.candidates is not None else None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)


def detect_hallucination(snapshot: ActivitySnapshot, node_title: str) -> bool:
    return not node_title or node_title not in snapshot.by_title


def specificity(snapshot: ActivitySnapshot, node: str) -> Specificity:
    """Leaf: no activity children. Near-leaf: every activity child is a leaf.
    Source-task children are provenance and never count."""
    snapshot.require(node)

    def kids(nid):
        return [c for c in snapshot.children_of(nid)
                if snapshot.nodes[c].kind is not NodeKind.SOURCE_TASK]

    children = kids(node)
    if not children:
        return Specificity.LEAF
    if all(not kids(c) for c in children):
        return Specificity.NEAR_LEAF
    return Specificity.INTERNAL


def candidate_index(snapshot: ActivitySnapshot, embedder: Embedder) -> SemanticIndex:
    """Retrieval index over activity nodes. Source tasks are provenance and
    never offered as classification targets."""
    ids = [nid for nid, n in snapshot.nodes.items() if n.kind in ACTIVITY_KINDS]
    return SemanticIndex(snapshot, embedder, nodes=ids)


def _retrieve(snapshot, query, embedder, k, index) -> tuple[str, ...]:
    if embedder is None:
        raise ValueError("SPPO/MPPO need an embedder for retrieval")
    if index is None:
        index = candidate_index(snapshot, embedder)
    hits = index.query(query, embedder, k)
    if not hits:
        raise NoCandidatesError("retrieval returned zero candidates")
    return tuple(h.node for h in hits)


def classify(snapshot: ActivitySnapshot, record: AppRecord, strategy, model: ModelClient,
             embedder: Embedder | None = None, k: int | None = DEFAULT_K, *,
             timeout: float | None = None, index: SemanticIndex | None = None) -> ClassificationResult:
    strategy = Strategy.parse(strategy)
    candidates = None
    if strategy is Strategy.SPFO:
        k = None
        reply = _ask(model, _full_system_prompt(snapshot), application_prompt(record), BASE_KEYS, timeout)
    else:
        if k not in ALLOWED_K:
            raise ValueError(f"k must be one of {ALLOWED_K} for {strategy.value}, got {k}")
        user = application_prompt(record)
        if strategy is Strategy.SPPO:
            ids = _retrieve(snapshot, record.text, embedder, k, index)
            system = classify_system_prompt(shortlist_ontology(snapshot, ids))
            reply = _ask(model, system, user, BASE_KEYS, timeout)
        else:
            extracted = _ask(model, extract_system_prompt(), user, EXTRACT_KEYS, timeout)
            ids = _retrieve(snapshot, extracted["main_activity"], embedder, k, index)
            system = classify_system_prompt(shortlist_ontology(snapshot, ids), SELECT_KEYS)
            user += _template("activity").substitute(
                activity=extracted["main_activity"],
                activity_reasoning=extracted["reasoning_main_activity"])
            reply = {**extracted, **_ask(model, system, user, SELECT_KEYS, timeout)}
        candidates = tuple(snapshot.nodes[i].title for i in ids)

    title = reply["most_appropriate_node"]
    hallucinated = detect_hallucination(snapshot, title)
    node = None if hallucinated else snapshot.by_title[title]
    return ClassificationResult(
        record=record.name,
        main_activity=reply["main_activity"],
        main_activity_rationale=reply["reasoning_main_activity"],
        node_title=title,
        node_rationale=reply["most_appropriate_node_rationale"],
        strategy=strategy,
        k=k,
        hallucinated=hallucinated,
        specificity=None if node is None else specificity(snapshot, node),
        node=node,
        candidates=candidates,
    )


@dataclass(frozen=True)
class BatchError:
    index: int
    record: str
    error: str
    raw: tuple[str, ...] = ()


@dataclass
class BatchResult:
    results: list[ClassificationResult] = field(default_factory=list)
    errors: list[BatchError] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.results)


def batch_classify(snapshot: ActivitySnapshot, records: Sequence[AppRecord], strategy,
                   model: ModelClient, embedder: Embedder | None = None, k: int | None = DEFAULT_K,
                   parallelism: int = 1, *, timeout: float | None = None) -> BatchResult:
    """Classify records independently. Output order follows input order;
    per-record failures go to ``errors`` and never stop the batch."""
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    strategy = Strategy.parse(strategy)
    if strategy is not Strategy.SPFO and k not in ALLOWED_K:
        raise ValueError(f"k must be one of {ALLOWED_K} for {strategy.value}, got {k}")
    index = None
    if strategy is not Strategy.SPFO:
        if embedder is None:
            raise ValueError("SPPO/MPPO need an embedder for retrieval")
        index = candidate_index(snapshot, embedder)
    else:
        _full_system_prompt(snapshot)  # build once before fanning out
    if not getattr(model, "concurrent_safe", True):
        parallelism = 1

    def one(rec):
        try:
            return classify(snapshot, rec, strategy, model, embedder, k, timeout=timeout, index=index)
        except ClassificationError as exc:
            return exc
        except (ModelTimeout, KeyError, ValueError, OSError) as exc:
            return exc

    if parallelism == 1:
        outcomes = [one(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(one, records))

    batch = BatchResult()
    for i, (rec, out) in enumerate(zip(records, outcomes)):
        if isinstance(out, ClassificationResult):
            batch.results.append(out)
        else:
            msg = f"{type(out).__name__}: {out}"
            batch.errors.append(BatchError(i, rec.name, msg, getattr(out, "raw", ())))
    return batch


# -- model clients -----------------------------------------------------------

_TITLE_LINE = re.compile(r"### Application Title:\n(.*)\n")

TIMEOUT_REPLY = "!timeout"


class ScriptedModel:
    """Deterministic stand-in for a model: canned replies keyed by record name.

    A record may have several replies; they are served in order and the last
    one repeats. The reply ``!timeout`` raises :class:`ModelTimeout`. When a
    canned reply is a JSON object, only the keys the current prompt asks for
    are returned, so one document can script every pipeline shape.
    """

    concurrent_safe = True

    def __init__(self, replies: Mapping[str, str | Sequence[str]], default: str | None = None):
        self.replies = {k: [v] if isinstance(v, str) else list(v) for k, v in replies.items()}
        self.default = default
        self._served: dict[str, int] = {}
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_tsv(cls, data: str | bytes, default: str | None = None) -> ScriptedModel:
        text = data.decode("utf-8") if isinstance(data, bytes) else data
        replies: dict[str, list[str]] = {}
        for lineno, row in enumerate(csv.reader(io.StringIO(text), delimiter="\t",
                                                quoting=csv.QUOTE_NONE), start=1):
            if not row or (lineno == 1 and row == ["name", "reply"]):
                continue
            if len(row) != 2:
                raise ValueError(f"line {lineno}: expected 'name<TAB>reply', got {len(row)} fields")
            replies.setdefault(row[0], []).append(row[1])
        return cls(replies, default=default)

    def complete(self, system_prompt: str, user_prompt: str, timeout: float | None = None) -> str:
        m = _TITLE_LINE.search(user_prompt)
        name = m.group(1) if m else ""
        with self._lock:
            self.calls += 1
            if name in self.replies:
                seq = self.replies[name]
                i = self._served.get(name, 0)
                self._served[name] = i + 1
                reply = seq[min(i, len(seq) - 1)]
            elif self.default is not None:
                reply = self.default
            else:
                raise KeyError(f"no scripted reply for record {name!r}")
        if reply == TIMEOUT_REPLY:
            raise ModelTimeout(f"scripted timeout for {name!r}")
        return self._project(reply, system_prompt)

    @staticmethod
    def _project(reply: str, system_prompt: str) -> str:
        try:
            doc = json.loads(reply)
        except json.JSONDecodeError:
            return reply
        if not isinstance(doc, dict):
            return reply
        cut = system_prompt.find(ONTOLOGY_MARKER)
        head = system_prompt if cut < 0 else system_prompt[:cut]
        wanted = {k: v for k, v in doc.items() if f'"{k}"' in head}
        return json.dumps(wanted or doc, ensure_ascii=False)


class HttpModelClient:
    """POSTs ``{"system": ..., "user": ...}`` as JSON and reads
    ``{"completion": ...}`` back. A bearer token is taken from the
    environment variable named by ``token_env`` when set."""

    concurrent_safe = True

    def __init__(self, endpoint: str, token_env: str = "WORKGRAPH_MODEL_TOKEN",
                 default_timeout: float = 120.0):
        self.endpoint = endpoint
        self.token_env = token_env
        self.default_timeout = default_timeout

    def complete(self, system_prompt: str, user_prompt: str, timeout: float | None = None) -> str:
        body = json.dumps({"system": system_prompt, "user": user_prompt}).encode("utf-8")
        req = urllib.request.Request(self.endpoint, data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        token = os.environ.get(self.token_env)
        if token:
            req.add_header("Authorization", f"Bearer {token}")
        try:
            with urllib.request.urlopen(req, timeout=timeout or self.default_timeout) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (socket.timeout, TimeoutError) as exc:
            raise ModelTimeout(f"model endpoint timed out: {exc}") from None
        except urllib.error.URLError as exc:
            if isinstance(exc.reason, (socket.timeout, TimeoutError)):
                raise ModelTimeout(f"model endpoint timed out: {exc.reason}") from None
            raise
        if not isinstance(payload, dict) or not isinstance(payload.get("completion"), str):
            raise ClassificationError("endpoint reply lacks a 'completion' string")
        return payload["completion"]
