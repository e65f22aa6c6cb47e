"""``workgraph`` command line.

Exit status: 0 on success, 1 when an input file is malformed or a run
fails on data, 2 on usage errors (argparse's own convention).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .aggregation import (
    Assignment,
    TALLY_COLUMNS,
    export_tallies,
    import_tallies,
    slice_by_year,
    tally,
)
from .agreement import AnnotationSet, bootstrap_ci, mean_pairwise_kappa, mean_wup
from .classification import ALLOWED_K, DEFAULT_K, HttpModelClient, ScriptedModel, Strategy, batch_classify
from .ingest import RecordError, SchemaError, attach_segments, decompose_task, load_records, load_snapshot
from .market import (
    MarketConfig,
    app_market_shares,
    combine,
    global_split,
    load_config,
    robot_revenue_pipeline,
    scale_shares,
    segment_dict,
    segment_table,
    to_cents,
)
from .ontology import ActivitySnapshot, InvalidSnapshotError, UnknownNodeError, snapshot_stats, validate
from .search import HashingEmbedder, hybrid_search, keyword_search, semantic_search
from .viz import build_sunburst, emit_doc, emit_svg

MANIFEST_SUFFIX = ".manifest.json"


class DataError(Exception):
    """Bad input data; the message names the file (and row when known)."""


# -- manifests ---------------------------------------------------------------

def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the clock for reproducible builds
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = (datetime.fromtimestamp(int(epoch), timezone.utc) if epoch
              else datetime.now(timezone.utc))
    return moment.replace(microsecond=0).isoformat().replace("+00:00", "Z")


@dataclass
class RunManifest:
    command: list[str]
    inputs: dict[str, str]  # path -> sha256
    outputs: list[str]
    snapshot_version: str | None = None
    config: dict[str, Any] = field(default_factory=dict)
    tool_version: str = __version__
    timestamp: str = field(default_factory=_timestamp)

    def to_json(self) -> str:
        doc = {
            "command": self.command, "inputs": self.inputs, "outputs": self.outputs,
            "snapshot_version": self.snapshot_version, "config": self.config,
            "tool_version": self.tool_version, "timestamp": self.timestamp,
        }
        return json.dumps(doc, sort_keys=True, indent=1, ensure_ascii=False) + "\n"


def manifest_path(output: str | Path) -> Path:
    return Path(str(output) + MANIFEST_SUFFIX)


def write_manifest(args, outputs: Sequence[str], snapshot: ActivitySnapshot | None = None,
                   config: dict | None = None) -> Path:
    inputs = {p: sha256_file(p) for p in args._inputs}
    m = RunManifest(list(args._argv), inputs, [str(o) for o in outputs],
                    snapshot.version if snapshot is not None else None, config or {})
    path = manifest_path(outputs[0])
    path.write_text(m.to_json(), encoding="utf-8")
    return path


# -- input helpers -----------------------------------------------------------

def _read(args, path: str) -> bytes:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None
    if path not in args._inputs:
        args._inputs.append(path)
    return data


def _snapshot(args, path: str, check: bool = True) -> ActivitySnapshot:
    data = _read(args, path)
    try:
        return load_snapshot(data, check=check)
    except InvalidSnapshotError as exc:
        lines = "; ".join(f"{v.rule} {v.subject}" for v in exc.violations[:5])
        raise DataError(f"{path}: invalid snapshot ({len(exc.violations)} violations): {lines}") from None
    except (SchemaError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _records(args, path: str, kind: str) -> list:
    try:
        return load_records(_read(args, path), kind)
    except RecordError as exc:
        raise DataError(f"{path}: {exc}") from None
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not UTF-8 text ({exc.reason})") from None


def _csv_rows(args, path: str, required: Sequence[str], optional: Sequence[str] = ()) -> list[tuple[int, dict]]:
    try:
        text = _read(args, path).decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not UTF-8 text ({exc.reason})") from None
    reader = csv.DictReader(io.StringIO(text))
    header = [h.strip() for h in reader.fieldnames or ()]
    missing = [c for c in required if c not in header]
    unknown = [h for h in header if h not in required and h not in optional]
    if missing or unknown:
        raise DataError(f"{path}: header must have {','.join(required)}"
                        + (f" (optional {','.join(optional)})" if optional else "")
                        + f"; missing {missing}, unknown {unknown}")
    reader.fieldnames = header
    return [(i, {k: (v or "").strip() for k, v in row.items()}) for i, row in enumerate(reader, start=1)]


def _node_id(snapshot: ActivitySnapshot, ref: str, where: str) -> str:
    try:
        return snapshot.id_for(ref)
    except UnknownNodeError:
        raise DataError(f"{where}: unknown node {ref!r}") from None


def _write(path: str, data: bytes | str) -> None:
    blob = data.encode("utf-8") if isinstance(data, str) else data
    try:
        Path(path).write_bytes(blob)
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror or exc}") from None


def _emit(args, text: str, snapshot=None, config=None) -> None:
    """Write ``text`` to ``--out`` (with a manifest) or to stdout."""
    if args.out:
        _write(args.out, text)
        write_manifest(args, [args.out], snapshot, config)
    else:
        sys.stdout.write(text)


# -- subcommands -------------------------------------------------------------

def cmd_validate(args) -> int:
    snap = _snapshot(args, args.snapshot, check=False)
    violations = validate(snap)
    for v in violations:
        print(f"{v.rule}\t{v.subject}\t{v.message}")
    print(f"{len(violations)} violations")
    return 1 if violations else 0


def cmd_stats(args) -> int:
    s = snapshot_stats(_snapshot(args, args.snapshot))
    doc = {
        "counts": dict(sorted(s.counts.items())), "paths": s.paths, "median_path": s.median_path,
        "min_path": s.min_path, "max_path": s.max_path, "multiple_inheritance": s.multiple_inheritance,
    }
    if args.json:
        print(json.dumps(doc, sort_keys=True))
    else:
        for k, v in doc.items():
            print(f"{k}\t{json.dumps(v, sort_keys=True) if isinstance(v, dict) else v}")
    return 0


def cmd_search(args) -> int:
    snap = _snapshot(args, args.snapshot)
    if args.mode == "keyword":
        hits = keyword_search(snap, args.query, args.limit)
    elif args.mode == "semantic":
        hits = semantic_search(snap, args.query, HashingEmbedder(args.dims), args.limit)
    else:
        ids = hybrid_search(snap, args.query, HashingEmbedder(args.dims), args.limit)
        # alternation order is the ranking; report which channel contributed each id
        kw = {h.node: h for h in keyword_search(snap, args.query, args.limit)}
        sem = {h.node: h for h in semantic_search(snap, args.query, HashingEmbedder(args.dims), args.limit)}
        hits = [kw[i] if i in kw else sem[i] for i in ids]
    for rank, h in enumerate(hits, start=1):
        print(f"{rank}\t{h.node}\t{snap.title(h.node)}\t{h.score:.6f}\t{h.channel}")
    return 0


def _model(spec: str):
    kind, _, rest = spec.partition(":")
    if kind == "stub":
        return ("stub", rest)
    if kind in ("http", "https"):
        if rest.startswith("//"):
            endpoint = f"{kind}:{rest}"
        elif rest.startswith(("http://", "https://")):
            endpoint = rest
        else:
            endpoint = f"{kind}://{rest}"
        return ("http", endpoint)
    raise argparse.ArgumentTypeError("expected stub:<replies.tsv> or http:<endpoint>")


def cmd_classify(args) -> int:
    snap = _snapshot(args, args.snapshot)
    records = _records(args, args.apps, "apps")
    kind, target = args.model
    if kind == "stub":
        try:
            model = ScriptedModel.from_tsv(_read(args, target))
        except ValueError as exc:
            raise DataError(f"{target}: {exc}") from None
    else:
        model = HttpModelClient(target)
    strategy = Strategy.parse(args.strategy)
    embedder = HashingEmbedder(args.dims)
    batch = batch_classify(snap, records, strategy, model, embedder, args.k, args.parallel,
                           timeout=args.timeout)
    config = {"strategy": strategy.value, "k": None if strategy is Strategy.SPFO else args.k,
              "model": kind, "embedder": f"hashing-{args.dims}", "parallel": args.parallel}
    _emit(args, batch.to_jsonl(), snap, config)
    if batch.errors:
        lines = [json.dumps({"index": e.index, "record": e.record, "error": e.error, "raw": list(e.raw)},
                            sort_keys=True) + "\n" for e in batch.errors]
        if args.out:
            _write(args.out + ".errors.jsonl", "".join(lines))
        for e in batch.errors:
            print(f"{args.apps}: row {e.index + 1} ({e.record}): {e.error}", file=sys.stderr)
        return 1
    return 0


def _annotations(args, snap, path: str) -> AnnotationSet:
    items = {}
    for row, rec in _csv_rows(args, path, ("item", "node")):
        where = f"{path}: row {row}"
        if not rec["item"]:
            raise DataError(f"{where}: empty item")
        if rec["item"] in items:
            raise DataError(f"{where}: duplicate item {rec['item']!r}")
        items[rec["item"]] = _node_id(snap, rec["node"], where)
    return AnnotationSet(Path(path).stem, items)


def cmd_iaa(args) -> int:
    snap = _snapshot(args, args.snapshot)
    sets = [_annotations(args, snap, p) for p in args.annotations]
    if len(sets) < 2:
        raise DataError("iaa needs at least two annotation files")

    if args.metric == "wup":
        def metric(s):
            return mean_wup(snap, s, args.mode)
    else:
        def metric(s):
            return mean_pairwise_kappa(snap, s, args.mode)

    try:
        value = metric(sets)
    except ValueError as exc:
        raise DataError(f"{', '.join(args.annotations)}: {exc}") from None
    doc: dict[str, Any] = {"metric": args.metric, "mode": args.mode, "value": value,
                           "annotators": [s.annotator for s in sets]}
    if args.metric == "wup":
        cov = mean_wup(snap, sets, args.mode, return_coverage=True)
        doc.update(compared=cov.compared, missing=cov.missing)
    if args.bootstrap:
        ci = bootstrap_ci(metric, sets, args.bootstrap, args.level, args.seed)
        doc["ci"] = {"low": ci.low, "high": ci.high, "level": ci.level, "resamples": ci.resamples,
                     "skipped": ci.skipped, "seed": args.seed}
    text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    _emit(args, text, snap, {"metric": args.metric, "mode": args.mode, "bootstrap": args.bootstrap,
                             "seed": args.seed, "level": args.level})
    return 0


def _assignments(args, snap, path: str) -> list[Assignment]:
    if path.endswith(".jsonl"):
        results = []
        for lineno, line in enumerate(_read(args, path).decode("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                results.append(Assignment(doc["record"], doc["node"], 1.0) if not doc["hallucinated"]
                               and doc["node"] else None)
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}: line {lineno}: not a classification result ({exc})") from None
        out = [a for a in results if a is not None]
        for a in out:
            if a.node not in snap.nodes:
                raise DataError(f"{path}: record {a.item!r} names unknown node {a.node!r}")
        return out
    out = []
    for row, rec in _csv_rows(args, path, ("item", "node"), ("weight", "year")):
        where = f"{path}: row {row}"
        try:
            weight = float(rec["weight"]) if rec.get("weight") else 1.0
            year = int(rec["year"]) if rec.get("year") else None
        except ValueError as exc:
            raise DataError(f"{where}: {exc}") from None
        if not rec["item"]:
            raise DataError(f"{where}: empty item")
        if not (weight >= 0) or weight == float("inf"):
            raise DataError(f"{where}: weight must be finite and non-negative")
        out.append(Assignment(rec["item"], _node_id(snap, rec["node"], where), weight, year))
    return out


def cmd_tally(args) -> int:
    snap = _snapshot(args, args.snapshot)
    assignments = _assignments(args, snap, args.assignments)
    if args.mode == "count":
        assignments = [Assignment(a.item, a.node, 1.0, a.year) for a in assignments]
    config = {"mode": args.mode, "by_year": args.by_year, "cumulative": args.cumulative}
    if not args.by_year:
        if args.cumulative:
            raise DataError("--cumulative only applies with --by-year")
        tallies = tally(snap, assignments)
        _emit(args, export_tallies(tallies, tallies[snap.root].aggregated), snap, config)
        return 0
    try:
        slices = slice_by_year(assignments, args.cumulative)
    except ValueError as exc:
        raise DataError(f"{args.assignments}: {exc}") from None
    buf = io.StringIO()
    buf.write("year," + ",".join(TALLY_COLUMNS) + "\n")
    for year, chunk in slices.items():
        t = tally(snap, chunk)
        body = export_tallies(t, t[snap.root].aggregated).split("\n", 1)[1]
        for line in body.splitlines():
            buf.write(f"{year},{line}\n")
    _emit(args, buf.getvalue(), snap, config)
    return 0


def _segment_revenue(text: str) -> tuple[str, int]:
    seg, sep, amount = text.rpartition("=")
    if not sep or not seg:
        raise argparse.ArgumentTypeError(f"expected SEGMENT=AMOUNT, got {text!r}")
    try:
        cents = to_cents(Decimal(amount))
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not an amount: {amount!r}") from None
    if cents < 0:
        raise argparse.ArgumentTypeError("segment revenue must be non-negative")
    return seg, cents


def _money(cents: int) -> str:
    return f"{Decimal(cents) / 100:.2f}"


def _config(args) -> MarketConfig:
    if not args.config:
        return MarketConfig()
    try:
        return load_config(_read(args, args.config))
    except (ValueError, TypeError) as exc:
        raise DataError(f"{args.config}: {exc}") from None


NODE_VALUE_COLUMNS = ("node_id", "title", "value")


def cmd_market_apps(args, config: MarketConfig) -> int:
    if len(args.inputs) != 3:
        raise DataError("market apps expects <snapshot> <apps.csv> <classified.jsonl>")
    snap_path, apps_path, results_path = args.inputs
    snap = _snapshot(args, snap_path)
    records = _records(args, apps_path, "apps")
    try:
        shares = app_market_shares(records, config)
    except ValueError as exc:
        raise DataError(f"{apps_path}: {exc}") from None
    values = scale_shares(shares, config.software_market)
    assigned = _assignments(args, snap, results_path)
    by_name = {r.name: r for r in records}
    unknown = sorted({a.item for a in assigned} - by_name.keys())
    if unknown:
        raise DataError(f"{results_path}: records {unknown[:5]} are absent from {apps_path}")
    per_node: dict[str, int] = {}
    for a in assigned:
        per_node[a.node] = per_node.get(a.node, 0) + values[a.item]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(NODE_VALUE_COLUMNS)
    for nid in sorted(per_node):
        w.writerow([nid, snap.title(nid), _money(per_node[nid])])
    if args.assignments_out:
        abuf = io.StringIO()
        aw = csv.writer(abuf, lineterminator="\n")
        aw.writerow(("item", "node", "weight", "year"))
        for a in assigned:
            rec = by_name[a.item]
            aw.writerow([a.item, a.node, _money(values[a.item]),
                         rec.launch_date.year if rec.launch_date else ""])
        _write(args.assignments_out, abuf.getvalue())
    unassigned = sum(values.values()) - sum(per_node.values())
    if unassigned:
        print(f"{results_path}: {_money(unassigned)} of application value has no usable node",
              file=sys.stderr)
    _emit(args, buf.getvalue(), snap, {"market": config.to_dict()})
    return 0


def cmd_market_robots(args, config: MarketConfig) -> int:
    if len(args.inputs) not in (2, 3):
        raise DataError("market robots expects <robots.csv> <segments.csv> [<segment_mapping.csv>]")
    subclasses = _records(args, args.inputs[0], "robots")
    shares = _records(args, args.inputs[1], "segments")
    if len(args.inputs) == 3:
        subclasses = attach_segments(subclasses, _records(args, args.inputs[2], "segment_mapping"))
    overrides = dict(args.segment_revenue or ())
    try:
        result = robot_revenue_pipeline(config, shares, subclasses, overrides)
    except (ValueError, ZeroDivisionError) as exc:
        raise DataError(f"{args.inputs[0]}: {exc}") from None
    for p in result.problems:
        print(f"warning: {p}", file=sys.stderr)
    for name, comp in result.segments.items():
        sys.stdout.write(f"# {name}\n{segment_table(comp)}")
    if args.out:
        doc = {
            "config": config.to_dict(),
            "segments": [segment_dict(c) for c in result.segments.values()],
            "unallocated": float(_money(result.unallocated)),
        }
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(NODE_VALUE_COLUMNS)
        for title, cents in result.node_revenue.items():
            w.writerow(["", title, _money(cents)])
        _write(args.out, buf.getvalue())
        _write(args.out + ".segments.json", json.dumps(doc, sort_keys=True, indent=1) + "\n")
        write_manifest(args, [args.out, args.out + ".segments.json"], None,
                       {"market": config.to_dict(),
                        "segment_revenue": {k: _money(v) for k, v in sorted(overrides.items())}})
    return 0


def _node_values(args, snap, path: str) -> dict[str, int]:
    out: dict[str, int] = {}
    for row, rec in _csv_rows(args, path, NODE_VALUE_COLUMNS):
        where = f"{path}: row {row}"
        nid = _node_id(snap, rec["node_id"] or rec["title"], where)
        try:
            out[nid] = out.get(nid, 0) + to_cents(Decimal(rec["value"]))
        except InvalidOperation:
            raise DataError(f"{where}: not an amount: {rec['value']!r}") from None
    return out


def cmd_market_combined(args, config: MarketConfig) -> int:
    if len(args.inputs) != 3:
        raise DataError("market combined expects <snapshot> <software_values.csv> <robot_values.csv>")
    snap = _snapshot(args, args.inputs[0])
    software = _node_values(args, snap, args.inputs[1])
    robot = _node_values(args, snap, args.inputs[2])
    rows = combine(snap, software, robot)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("node_id", "title", "software", "robot", "total", "software_fraction"))
    for nid, v in rows.items():
        w.writerow([nid, snap.title(nid), _money(v.software), _money(v.robot), _money(v.total),
                    f"{v.software_fraction:.6f}"])
    sw, rb = global_split(config)
    print(f"global split: software {round(100 * sw)}% / robots {round(100 * rb)}%", file=sys.stderr)
    _emit(args, buf.getvalue(), snap, {"market": config.to_dict()})
    return 0


def cmd_market(args) -> int:
    config = _config(args)
    handler = {"apps": cmd_market_apps, "robots": cmd_market_robots,
               "combined": cmd_market_combined}[args.kind]
    return handler(args, config)


def cmd_sunburst(args) -> int:
    if not (args.svg or args.json):
        raise DataError("sunburst needs --svg and/or --json")
    snap = _snapshot(args, args.snapshot)
    try:
        tallies = import_tallies(_read(args, args.tally))
    except (ValueError, KeyError) as exc:
        raise DataError(f"{args.tally}: {exc}") from None
    absent = sorted(set(tallies) - snap.nodes.keys())
    if absent:
        raise DataError(f"{args.tally}: nodes {absent[:5]} are absent from {args.snapshot}")
    model = build_sunburst(snap, tallies, args.depth, args.scale_max, weighting=args.weighting)
    outputs = []
    if args.svg:
        _write(args.svg, emit_svg(model))
        outputs.append(args.svg)
    if args.json:
        _write(args.json, emit_doc(model))
        outputs.append(args.json)
    write_manifest(args, outputs, snap, {"depth": args.depth, "weighting": args.weighting,
                                         "color_scale_max": model.legend["color_scale_max"]})
    return 0


def cmd_decompose(args) -> int:
    if os.path.isfile(args.task):
        lines = _read(args, args.task).decode("utf-8").splitlines()
        for i, line in enumerate(lines, start=1):
            if line.strip():
                for vo in decompose_task(line):
                    print(f"{i}\t{vo.verb}\t{vo.object}")
        return 0
    try:
        pairs = decompose_task(args.task)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    for vo in pairs:
        print(f"{vo.verb}\t{vo.object}")
    return 0


# -- parser ------------------------------------------------------------------

def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _non_negative(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0 or v == float("inf"):
        raise argparse.ArgumentTypeError("must be a positive finite number")
    return v


def _level(text: str) -> float:
    v = _positive_float(text)
    if not v < 1:
        raise argparse.ArgumentTypeError("must be in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="workgraph", allow_abbrev=False,
                                description="Work-activity ontology tooling.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_, allow_abbrev=False)
        sp.set_defaults(func=func)
        return sp

    sp = add("validate", cmd_validate, "Check a snapshot against the structural rules.")
    sp.add_argument("snapshot")

    sp = add("stats", cmd_stats, "Node counts and root-to-leaf path lengths.")
    sp.add_argument("snapshot")
    sp.add_argument("--json", action="store_true", help="one JSON object instead of key/value lines")

    sp = add("search", cmd_search, "Find nodes by keyword, embedding or both.")
    sp.add_argument("snapshot")
    sp.add_argument("--query", required=True)
    sp.add_argument("--limit", type=_positive, default=10)
    sp.add_argument("--mode", choices=("keyword", "semantic", "hybrid"), default="hybrid")
    sp.add_argument("--dims", type=_positive, default=256, help="hashing embedder width")

    sp = add("classify", cmd_classify, "Classify application records into the ontology.")
    sp.add_argument("snapshot")
    sp.add_argument("apps")
    sp.add_argument("--strategy", choices=("sppo", "mppo", "spfo"), default="spfo", type=str.lower)
    sp.add_argument("--k", type=int, choices=ALLOWED_K, default=DEFAULT_K,
                    help="retrieved candidates for sppo/mppo")
    sp.add_argument("--model", type=_model, required=True, metavar="stub:PATH|http:ENDPOINT")
    sp.add_argument("--parallel", type=_positive, default=1)
    sp.add_argument("--timeout", type=_positive_float, default=None, help="per-call deadline, seconds")
    sp.add_argument("--dims", type=_positive, default=256, help="hashing embedder width")
    sp.add_argument("--out", help="JSONL results (stdout when omitted)")

    sp = add("iaa", cmd_iaa, "Inter-annotator agreement with a bootstrap interval.")
    sp.add_argument("snapshot")
    sp.add_argument("annotations", nargs="+", help="CSV files with columns item,node")
    sp.add_argument("--metric", choices=("wup", "kappa"), default="wup")
    sp.add_argument("--mode", choices=("pairwise_all", "versus_reference"), default="pairwise_all")
    sp.add_argument("--bootstrap", type=_non_negative, default=1000, help="resamples; 0 disables")
    sp.add_argument("--seed", type=_non_negative, default=0)
    sp.add_argument("--level", type=_level, default=0.95)
    sp.add_argument("--out")

    sp = add("tally", cmd_tally, "Roll assignments up the hierarchy.")
    sp.add_argument("snapshot")
    sp.add_argument("assignments", help="CSV item,node[,weight,year] or classify JSONL")
    sp.add_argument("--mode", choices=("count", "value"), default="count")
    sp.add_argument("--by-year", action="store_true")
    sp.add_argument("--cumulative", action="store_true")
    sp.add_argument("--out")

    sp = add("market", cmd_market, "Market value for applications, robots or both.")
    sp.add_argument("kind", choices=("apps", "robots", "combined"))
    sp.add_argument("inputs", nargs="+")
    sp.add_argument("--config", help="JSON with total_ai_market, robotics_market, annualization")
    sp.add_argument("--segment-revenue", type=_segment_revenue, action="append", metavar="SEG=AMOUNT",
                    help="fix a segment's revenue in dollars (robots only)")
    sp.add_argument("--assignments-out", help="apps only: item,node,weight,year CSV for tally --mode value")
    sp.add_argument("--out")

    sp = add("sunburst", cmd_sunburst, "Render tallies as a sunburst.")
    sp.add_argument("snapshot")
    sp.add_argument("tally", help="CSV written by the tally command")
    sp.add_argument("--depth", type=_positive, default=5)
    sp.add_argument("--scale-max", type=_positive_float, default=None,
                    help="fraction that maps to full color (default: largest non-root)")
    sp.add_argument("--weighting", choices=("descendants", "leaves"), default="descendants")
    sp.add_argument("--svg")
    sp.add_argument("--json")

    sp = add("decompose", cmd_decompose, "Split a compound task into verb-object pairs.")
    sp.add_argument("task", help="task text, or a file with one task per line")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    args._inputs = []
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (UnknownNodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
