import json

import pytest

from gddlink.cli import main
from gddlink.gdd import load_rules, save_rules
from gddlink.graph import read_graph_files

from fixtures import toy_config_text


@pytest.fixture
def workspace(tmp_path, rules):
    assert main(["synth", "--dataset", "video", "--label", "user", "--rate", "0",
                 "--nodes-out", str(tmp_path / "nodes.jsonl"), "--edges-out", str(tmp_path / "edges.jsonl")]) == 0
    (tmp_path / "toy.conf").write_text(toy_config_text())
    save_rules(rules, tmp_path / "rules.json")
    return tmp_path


def _graph_args(ws):
    return ["--nodes", str(ws / "nodes.jsonl"), "--edges", str(ws / "edges.jsonl")]


def test_synth_writes_the_toy_graph(workspace, toy):
    assert read_graph_files(workspace / "nodes.jsonl", workspace / "edges.jsonl") == toy


def test_run_and_eval(workspace, capsys):
    out = workspace / "run"
    code = main(["run", *_graph_args(workspace), "--config", str(workspace / "toy.conf"),
                 "--rules", str(workspace / "rules.json"), "--output", str(out)])
    assert code == 0
    assert (out / "links.tsv").read_text() == "v3\tv4\nv10\tv11\n"
    assert "f1" in capsys.readouterr().out
    code = main(["eval", *_graph_args(workspace), "--links", str(out / "links.tsv"), "--label", "user",
                 "--blocks", str(out / "blocks.tsv"), "--json", str(workspace / "m.json")])
    assert code == 0
    metrics = json.loads((workspace / "m.json").read_text())
    assert metrics["f1"] == 1.0 and "purity_blocks" in metrics


def test_stages_reproduce_the_run(workspace):
    conf = ["--config", str(workspace / "toy.conf")]
    g = _graph_args(workspace)
    r = ["--rules", str(workspace / "rules.json")]
    run = workspace / "run"
    assert main(["run", *g, *conf, *r, "--output", str(run)]) == 0
    assert main(["embed", *g, *conf, *r, "--kind", "structural", "--out", str(workspace / "s.bin")]) == 0
    assert main(["embed", *g, *conf, *r, "--kind", "attribute", "--out", str(workspace / "a.bin")]) == 0
    assert (workspace / "s.bin").read_bytes() == (run / "struct_emb.bin").read_bytes()
    assert (workspace / "a.bin").read_bytes() == (run / "attr_emb.bin").read_bytes()
    assert main(["block", *g, *conf, "--struct-emb", str(workspace / "s.bin"), "--attr-emb", str(workspace / "a.bin"),
                 "--out", str(workspace / "blocks.tsv")]) == 0
    assert (workspace / "blocks.tsv").read_text() == (run / "blocks.tsv").read_text()
    assert main(["prune", *g, *conf, *r, "--blocks", str(workspace / "blocks.tsv"),
                 "--out", str(workspace / "pairs.csv")]) == 0
    assert (workspace / "pairs.csv").read_text() == (run / "pruned_pairs.csv").read_text()
    assert main(["match", *g, *conf, *r, "--candidates", str(workspace / "pairs.csv"),
                 "--out", str(workspace / "m")]) == 0
    assert (workspace / "m" / "links.tsv").read_text() == (run / "links.tsv").read_text()
    assert (workspace / "m" / "match_report.jsonl").read_text() == (run / "match_report.jsonl").read_text()


def test_discover_command(workspace):
    out = workspace / "found.json"
    assert main(["discover", *_graph_args(workspace), "--label", "user", "--out", str(out)]) == 0
    found = load_rules(out)
    assert len(found) == 1 and found[0].support == 2


def test_convert_command(tmp_path):
    (tmp_path / "schema.ini").write_text("[table:t]\nlabel = item\nid = id\nattrs = name\n")
    (tmp_path / "t.csv").write_text("id,name\n1,a\n2,b\n")
    code = main(["convert", "--schema", str(tmp_path / "schema.ini"), "--table", f"t={tmp_path / 't.csv'}",
                 "--nodes-out", str(tmp_path / "n.jsonl"), "--edges-out", str(tmp_path / "e.jsonl")])
    assert code == 0
    assert len(read_graph_files(tmp_path / "n.jsonl", tmp_path / "e.jsonl").nodes) == 2


def test_exit_codes(workspace, capsys):
    g = _graph_args(workspace)
    r = ["--rules", str(workspace / "rules.json")]
    conf = ["--config", str(workspace / "toy.conf")]
    out = ["--output", str(workspace / "x")]
    assert main(["run", *g, *conf, *r, *out, "--set", "block.nope=1"]) == 2
    assert main(["run", *g, *conf, *out]) == 2  # full mode without rules
    assert main(["run", "--nodes", str(workspace / "missing.jsonl"), "--edges", str(workspace / "edges.jsonl"),
                 *conf, *r, *out]) == 3
    assert main(["run", *g, *conf, *r, *out, "--set", "block.cap=0"]) == 4
    assert "status incomplete" in (workspace / "x" / "MANIFEST").read_text()
    assert main(["eval", "--nodes", str(workspace / "missing.jsonl"), "--edges", str(workspace / "edges.jsonl"),
                 "--links", "nothing"]) == 3
    err = capsys.readouterr().err
    assert "configuration error" in err and "data error" in err
