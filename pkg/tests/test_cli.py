import json
import subprocess
import sys

import pytest

from qbnet import __version__
from qbnet.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bound_upper_star(capsys):
    code, out, _ = run_cli(capsys, "bound-upper", "--network", "star", "--family", "ABC")
    assert code == 0
    doc = json.loads(out)
    assert doc["version"] == __version__ and doc["seed"] == 0
    assert len(doc["input_digest"]) == 64
    fam = doc["result"]["families"][0]
    assert fam["bound"] == pytest.approx(1.0)
    assert fam["partition"] == [["s", "A", "B"], ["C"]]


def test_bound_upper_all_families_and_epsilon(capsys):
    code, out, _ = run_cli(capsys, "bound-upper", "--network", "three_families",
                           "--all-families", "--epsilon", "0.1", "--b", "1", "--g", "0.5")
    assert code == 0
    fams = json.loads(out)["result"]["families"]
    assert [f["family"] for f in fams] == ["S1", "S2", "S3"]
    assert all("epsilon_terms" in f["report"] for f in fams)


def test_epsilon_flags_must_come_together(capsys):
    code, _, err = run_cli(capsys, "bound-upper", "--network", "star", "--epsilon", "0.1")
    assert code == 2 and "together" in err


def test_unbounded_epsilon_is_a_validation_error(capsys):
    code, _, err = run_cli(capsys, "bound-upper", "--network", "star",
                           "--epsilon", "0.5", "--b", "2", "--g", "0")
    assert code == 2


def test_bound_lower_star_exact(capsys):
    code, out, _ = run_cli(capsys, "bound-lower", "--network", "star", "--family", "ABC",
                           "--method", "exact")
    assert code == 0
    fam = json.loads(out)["result"]["families"][0]
    assert fam["ghz_count"] == 1
    assert fam["packing"]["trees"][0]["hyperedges"] == ["bc#0"]
    assert fam["cut"]["value"] == 1


def test_bound_lower_uniform_copies(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "bound-lower", "--network", "chain", "--copies", "uniform:3")
    assert json.loads(out)["result"]["families"][0]["ghz_count"] == 3
    copies = tmp_path / "copies.json"
    copies.write_text(json.dumps({"ab": 2}))
    code, out, _ = run_cli(capsys, "bound-lower", "--network", "chain", "--copies", str(copies))
    assert json.loads(out)["result"]["families"][0]["ghz_count"] == 2
    copies.write_text(json.dumps({"zz": 2}))
    code, _, err = run_cli(capsys, "bound-lower", "--network", "chain", "--copies", str(copies))
    assert code == 2


def test_bad_network_file(capsys, tmp_path):
    bad = tmp_path / "net.json"
    bad.write_text('{"vertices": ["a"], "edges": [{"id": "e", "tail": "a", "heads": ["b"]}]}')
    code, _, err = run_cli(capsys, "bound-upper", "--network", str(bad))
    assert code == 2 and "undeclared" in err
    code, _, err = run_cli(capsys, "bound-upper", "--network", str(tmp_path / "missing.json"))
    assert code == 2


def test_unknown_family(capsys):
    code, _, err = run_cli(capsys, "bound-upper", "--network", "star", "--family", "nope")
    assert code == 2


def test_verify_suites(capsys):
    code, out, _ = run_cli(capsys, "verify", "--suite", "entropic", "--seed", "7")
    assert code == 0
    doc = json.loads(out)
    names = [c["name"] for c in doc["result"]["suites"]["entropic"]]
    assert "cmi-chain" in names and "reduction-property" in names
    assert all(c["ok"] for c in doc["result"]["suites"]["entropic"])


def test_simulate_tree_extraction(capsys):
    code, out, _ = run_cli(capsys, "simulate", "--network", "three_families", "--family", "S1")
    assert code == 0
    ext = json.loads(out)["result"]["families"][0]["extractions"]
    assert ext and all(e["fidelity"] == pytest.approx(1.0) for e in ext)


def test_simulate_script(capsys, tmp_path):
    net = tmp_path / "fork.json"
    net.write_text(json.dumps({"vertices": ["s", "A", "B"],
                               "edges": [{"id": "e", "tail": "s", "heads": ["A", "B"]}]}))
    script = tmp_path / "script.json"
    script.write_text(json.dumps({"steps": [
        {"op": "prepare", "vertex": "s", "labels": ["k", "x"]},
        {"op": "channel", "edge": "e", "input": "x", "outputs": ["a", "b"]}]}))
    code, out, _ = run_cli(capsys, "simulate", "--network", str(net), "--script", str(script))
    assert code == 0
    trace = json.loads(out)["result"]["trace"]
    assert trace["final_value"] == pytest.approx(3.0) and trace["budget"] == pytest.approx(3.0)


def test_export_dot(capsys, tmp_path):
    part = tmp_path / "p.json"
    part.write_text(json.dumps({"classes": [["s", "A"], ["B"], ["C"]]}))
    target = tmp_path / "star.dot"
    code, _, _ = run_cli(capsys, "export-dot", "--network", "star", "--partition", str(part),
                         "--output", str(target))
    assert code == 0
    assert target.read_text().startswith("digraph")


def test_report_file_and_threads_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("QBNET_THREADS", "2")
    target = tmp_path / "r.json"
    code, out, _ = run_cli(capsys, "bound-upper", "--network", "star", "--report", str(target))
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["result"]["families"][0]["bound"] == 1.0
    monkeypatch.setenv("QBNET_THREADS", "many")
    code, _, _ = run_cli(capsys, "bound-upper", "--network", "star")
    assert code == 2


def test_reports_are_byte_identical(tmp_path):
    outputs = []
    for k in range(2):
        target = tmp_path / f"r{k}.json"
        subprocess.run([sys.executable, "-m", "qbnet.cli", "verify", "--seed", "11",
                        "--report", str(target)], check=True)
        outputs.append(target.read_bytes())
    assert outputs[0] == outputs[1]


def test_fig1_alias(capsys):
    code, out, _ = run_cli(capsys, "bound-upper", "--network", "fig1", "--family", "S1",
                           "--strategy", "exhaustive")
    assert code == 0
    fam = json.loads(out)["result"]["families"][0]
    assert fam["family"] == "S1" and fam["bound"] == pytest.approx(2.0)
    assert "partition" in fam
