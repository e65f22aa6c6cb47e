import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import fixture_bytes, fixture_path
from workgraph.cli import build_parser, main

GOLDEN = Path(__file__).parent / "golden"
SUBCOMMANDS = ["validate", "stats", "search", "classify", "iaa", "tally", "market", "sunburst", "decompose"]


@pytest.fixture(autouse=True)
def _epoch(monkeypatch, tmp_path):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    monkeypatch.chdir(tmp_path)


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def classify_fixture(capsys, out="out.jsonl", *extra):
    return run(capsys, "classify", fixture_path("activities.json"), fixture_path("apps.csv"),
               "--model", f"stub:{fixture_path('replies.tsv')}", "--out", out, *extra)


# -- usage -------------------------------------------------------------------

@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_help_exits_zero(cmd, capsys):
    with pytest.raises(SystemExit) as ei:
        main([cmd, "--help"])
    assert ei.value.code == 0
    assert "usage: workgraph " + cmd in capsys.readouterr().out


@pytest.mark.parametrize("cmd", SUBCOMMANDS)
def test_unknown_flag_exits_two(cmd, capsys):
    with pytest.raises(SystemExit) as ei:
        main([cmd, "x", "--no-such-flag"])
    assert ei.value.code == 2


def test_no_command_and_bad_choice(capsys):
    with pytest.raises(SystemExit) as ei:
        main([])
    assert ei.value.code == 2
    with pytest.raises(SystemExit) as ei:
        main(["classify", "s", "a", "--model", "stub:x", "--k", "30"])
    assert ei.value.code == 2
    with pytest.raises(SystemExit) as ei:
        main(["classify", "s", "a", "--model", "gpt:x"])
    assert ei.value.code == 2


def test_parser_covers_every_subcommand():
    p = build_parser()
    choices = next(a for a in p._actions if a.dest == "command").choices
    assert sorted(choices) == sorted(SUBCOMMANDS)


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "workgraph.cli", "validate", fixture_path("diamond.json")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0 violations"


# -- validate / stats / search ----------------------------------------------

def test_validate(capsys, tmp_path):
    code, out, _ = run(capsys, "validate", fixture_path("activities.json"))
    assert (code, out) == (0, "0 violations\n")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": "1", "root": "a", "nodes": [
        {"id": "a", "title": "A"}, {"id": "b", "title": "B"}], "edges": []}))
    code, out, _ = run(capsys, "validate", bad)
    assert code == 1 and "orphan" in out and out.endswith("1 violations\n")


def test_missing_file_is_data_error(capsys):
    code, _, err = run(capsys, "validate", "nope.json")
    assert code == 1 and "error" in err


def test_stats(capsys):
    code, out, _ = run(capsys, "stats", fixture_path("activities.json"), "--json")
    doc = json.loads(out)
    assert code == 0
    assert (doc["min_path"], doc["max_path"], doc["paths"]) == (5, 7, 2)
    code, out, _ = run(capsys, "stats", fixture_path("activities.json"))
    assert "multiple_inheritance" in out


@pytest.mark.parametrize("mode", ["keyword", "semantic", "hybrid"])
def test_search(capsys, mode):
    code, out, _ = run(capsys, "search", fixture_path("activities.json"), "--query", "create video",
                       "--mode", mode, "--limit", "3")
    assert code == 0
    lines = out.strip().splitlines()
    assert 1 <= len(lines) <= 3 and "Create video" in lines[0]


# -- classify ----------------------------------------------------------------

def test_classify_matches_golden(capsys, tmp_path):
    code, _, err = classify_fixture(capsys)
    assert code == 0, err
    got = (tmp_path / "out.jsonl").read_bytes()
    assert got == (GOLDEN / "classify_spfo.jsonl").read_bytes()
    manifest = json.loads((tmp_path / "out.jsonl.manifest.json").read_text())
    assert manifest["snapshot_version"] == "activities-demo-1"
    assert manifest["timestamp"] == "2023-11-14T22:13:20Z"
    assert set(manifest["inputs"]) == {fixture_path(n) for n in ("activities.json", "apps.csv", "replies.tsv")}


def test_golden_agrees_with_script():
    """The golden rows must say exactly what the scripted replies say."""
    rows = [json.loads(line) for line in (GOLDEN / "classify_spfo.jsonl").read_text().splitlines()]
    script = {}
    for line in fixture_bytes("replies.tsv").decode().splitlines()[1:]:
        name, reply = line.split("\t")
        script[name] = json.loads(reply)
    assert len(rows) == 3
    for row in rows:
        want = script[row["record"]]
        assert row["node_title"] == want["most_appropriate_node"]
        assert row["main_activity"] == want["main_activity"]
        assert row["node_rationale"] == want["most_appropriate_node_rationale"]
        assert row["hallucinated"] is False and row["strategy"] == "SPFO"


def test_classify_byte_identical_reruns(capsys, tmp_path):
    classify_fixture(capsys, "a.jsonl")
    classify_fixture(capsys, "a2.jsonl")
    a, b = (tmp_path / "a.jsonl"), (tmp_path / "a2.jsonl")
    assert a.read_bytes() == b.read_bytes()
    ma = json.loads((tmp_path / "a.jsonl.manifest.json").read_text())
    mb = json.loads((tmp_path / "a2.jsonl.manifest.json").read_text())
    ma.pop("command"), mb.pop("command"), ma.pop("outputs"), mb.pop("outputs")
    assert ma == mb
    classify_fixture(capsys, "a.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == b.read_bytes()


def test_classify_parallel_and_retrieval(capsys, tmp_path):
    classify_fixture(capsys, "p1.jsonl", "--strategy", "sppo", "--k", "20")
    classify_fixture(capsys, "p8.jsonl", "--strategy", "sppo", "--k", "20", "--parallel", "8")
    assert (tmp_path / "p1.jsonl").read_bytes() == (tmp_path / "p8.jsonl").read_bytes()
    rows = [json.loads(x) for x in (tmp_path / "p1.jsonl").read_text().splitlines()]
    assert all(r["k"] == 20 and r["node_title"] in r["candidates"] for r in rows)


def test_classify_errors_exit_one(capsys, tmp_path):
    script = tmp_path / "replies.tsv"
    script.write_text(fixture_bytes("replies.tsv").decode().replace(
        "ClipForge\t{", "ClipForge\t!timeout\nIgnored\t{"))
    code, _, err = run(capsys, "classify", fixture_path("activities.json"), fixture_path("apps.csv"),
                       "--model", f"stub:{script}", "--out", "o.jsonl")
    assert code == 1 and "ClipForge" in err
    assert len((tmp_path / "o.jsonl").read_text().splitlines()) == 2
    [e] = [json.loads(x) for x in (tmp_path / "o.jsonl.errors.jsonl").read_text().splitlines()]
    assert e["record"] == "ClipForge"


# -- iaa / tally / market / sunburst ----------------------------------------

def test_iaa(capsys):
    code, out, _ = run(capsys, "iaa", fixture_path("activities.json"), fixture_path("annotator_a.csv"),
                       fixture_path("annotator_b.csv"), "--bootstrap", "200", "--seed", "3")
    doc = json.loads(out)
    assert code == 0 and doc["metric"] == "wup"
    assert doc["ci"]["low"] <= doc["value"] <= doc["ci"]["high"]
    code, out2, _ = run(capsys, "iaa", fixture_path("activities.json"), fixture_path("annotator_a.csv"),
                        fixture_path("annotator_b.csv"), "--bootstrap", "200", "--seed", "3")
    assert out2 == out
    code, out, _ = run(capsys, "iaa", fixture_path("activities.json"), fixture_path("annotator_a.csv"),
                       fixture_path("annotator_b.csv"), "--metric", "kappa", "--bootstrap", "0")
    assert code == 0 and json.loads(out)["metric"] == "kappa"


def test_pipeline_classify_market_tally_sunburst(capsys, tmp_path):
    assert classify_fixture(capsys)[0] == 0
    snap = fixture_path("activities.json")
    code, _, err = run(capsys, "market", "apps", snap, fixture_path("apps.csv"), "out.jsonl",
                       "--out", "values.csv", "--assignments-out", "asg.csv")
    assert code == 0, err
    rows = list(csv.DictReader(io.StringIO((tmp_path / "asg.csv").read_text())))
    weights = {r["item"]: float(r["weight"]) for r in rows}
    assert weights["Weldsight"] == 0.0
    assert weights["&facts"] + weights["ClipForge"] == pytest.approx(140.29e9, abs=0.01)
    assert weights["&facts"] / weights["ClipForge"] == pytest.approx(597 / 5904)

    code, _, err = run(capsys, "tally", snap, "asg.csv", "--mode", "value", "--out", "tally.csv")
    assert code == 0, err
    t = {r["node_id"]: r for r in csv.DictReader(io.StringIO((tmp_path / "tally.csv").read_text()))}
    assert float(t["act"]["aggregated"]) == pytest.approx(140.29e9, abs=0.01)
    assert (tmp_path / "tally.csv.manifest.json").exists()

    code, _, err = run(capsys, "sunburst", snap, "tally.csv", "--svg", "s.svg", "--json", "s.json")
    assert code == 0, err
    svg = (tmp_path / "s.svg").read_bytes()
    assert svg.startswith(b"<?xml") and b"Analyze Market" in svg
    run(capsys, "sunburst", snap, "tally.csv", "--svg", "s2.svg")
    assert (tmp_path / "s2.svg").read_bytes() == svg


def test_tally_counts_by_year(capsys, tmp_path):
    (tmp_path / "a.csv").write_text("item,node,weight,year\nx,weld-metal,1,2020\ny,write-report,1,2022\n")
    code, out, err = run(capsys, "tally", fixture_path("activities.json"), "a.csv", "--by-year", "--cumulative")
    assert code == 0, err
    rows = list(csv.DictReader(io.StringIO(out)))
    root = {r["year"]: float(r["aggregated"]) for r in rows if r["node_id"] == "act"}
    assert root == {"2020": 1.0, "2022": 2.0}
    (tmp_path / "b.csv").write_text("item,node\nx,ghost\n")
    assert run(capsys, "tally", fixture_path("activities.json"), "b.csv")[0] == 1


def test_market_robots_medical_table(capsys, tmp_path):
    code, out, err = run(capsys, "market", "robots", fixture_path("robots_medical.csv"),
                         fixture_path("segments_medical.csv"), "--segment-revenue", "Medical=13.2e9",
                         "--out", "robots.csv")
    assert code == 0, err
    lines = out.splitlines()
    assert lines[0] == "# Medical"
    assert lines[1] == "subclass,units,price_range,midpoint,relative,adjusted,revenue"
    cells = [next(csv.reader([x])) for x in lines[2:6]]
    assert [c[0] for c in cells] == ["Diagnostics/Lab analysis", "Surgical", "Rehab/non-invasive therapy", "Other"]
    assert [c[4] for c in cells] == ["1.3", "16.4", "1.0", "1.3"]
    assert [c[6] for c in cells[:3]] == ["0.5 bn", "11.9 bn", "0.6 bn"]
    assert lines[6] == "Total,,,,,,13.2 bn"
    seg = json.loads((tmp_path / "robots.csv.segments.json").read_text())
    [medical] = seg["segments"]
    assert medical["factor"] == pytest.approx(110_108.5, rel=1e-4)
    values = {r["title"]: float(r["value"]) for r in csv.DictReader(io.StringIO((tmp_path / "robots.csv").read_text()))}
    assert sum(values.values()) == pytest.approx(13.2e9, rel=1e-3)


def test_market_combined(capsys, tmp_path):
    snap = fixture_path("activities.json")
    (tmp_path / "sw.csv").write_text("node_id,title,value\nweld-metal,Weld metal,300\n")
    (tmp_path / "rb.csv").write_text("node_id,title,value\n,Weld metal,100\n,Perform Surgery,50\n")
    code, out, err = run(capsys, "market", "combined", snap, "sw.csv", "rb.csv")
    assert code == 0, err
    assert "software 75% / robots 25%" in err
    rows = {r["node_id"]: r for r in csv.DictReader(io.StringIO(out))}
    assert float(rows["weld-metal"]["software_fraction"]) == 0.75
    assert float(rows["perform-surgery"]["software_fraction"]) == 0.0


def test_decompose(capsys, tmp_path):
    code, out, _ = run(capsys, "decompose", "Acquire, distribute and store supplies")
    assert code == 0
    assert out.splitlines() == ["acquire\tsupplies", "distribute\tsupplies", "store\tsupplies"]
    (tmp_path / "tasks.txt").write_text("Weld metal\nPlan and develop instructional methods\n")
    code, out, _ = run(capsys, "decompose", "tasks.txt")
    assert out.splitlines() == ["1\tweld\tmetal", "2\tplan\tinstructional methods",
                                "2\tdevelop\tinstructional methods"]
