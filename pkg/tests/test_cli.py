"""End-to-end CLI runs on a scaled-down toy workspace."""

import hashlib
import json
import os

import pytest

from rtlfuse.cli import main
from rtlfuse.config import PipelineConfig


def sha(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def shrink_config(path):
    """Make the toy config fast enough for CI."""
    cfg = PipelineConfig.load(path)
    cfg.positives_per_anchor = 2
    cfg.encoder.d_model = 16
    cfg.encoder.graph_layers = 1
    cfg.encoder.summary_layers = 1
    cfg.encoder.code_layers = 1
    cfg.encoder.fusion_layers = 1
    cfg.encoder.heads = 2
    cfg.encoder.netlist_hidden = 8
    cfg.encoder.mgm_hidden = 8
    cfg.train.steps = 4
    cfg.train.batch_size = 3
    cfg.train.netlist_steps = 2
    cfg.train.warmup_iters = 2
    cfg.train.lr_peak = 1e-3
    cfg.save(path)
    return cfg


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    work = tmp_path_factory.mktemp("toy_ws")
    assert main(["init-toy", str(work), "--seed", "0"]) == 0
    config = str(work / "config.json")
    shrink_config(config)
    return work, config


def test_parse_command(workspace, capsys):
    work, _config = workspace
    out = str(work / "alu.json")
    assert main(["parse", str(work / "alu_lite.v"), "--out", out]) == 0
    with open(out, "r", encoding="utf-8") as fh:
        graph = json.load(fh)
    assert {"nodes", "edges"} == set(graph)


def test_split_two_register_fixture(workspace, tmp_path):
    work, _config = workspace
    out = str(tmp_path / "alu_bundles.jsonl")
    assert main(["split", str(work / "alu_lite.v"), "--out", out]) == 0
    with open(out, "r", encoding="utf-8") as fh:
        lines = [json.loads(l) for l in fh if l.strip()]
    assert len(lines) == 2  # one bundle per register
    required = {"id", "design", "register", "code", "rtl_graph", "netlist_graph",
                "summary", "labels", "is_augmented", "equivalence_class"}
    assert all(required == set(l) for l in lines)


def test_full_pipeline(workspace, capsys):
    work, config = workspace
    assert main(["build-corpus", "--config", config]) == 0
    corpus = PipelineConfig.load(config).path("corpus_path")
    assert os.path.exists(corpus)
    assert main(["pretrain", "--config", config]) == 0
    assert main(["index", "--config", config, "--which", "train"]) == 0
    assert main(["evaluate", "--config", config]) == 0
    report = PipelineConfig.load(config).path("report_path")
    with open(report, "r", encoding="utf-8") as fh:
        content = fh.read()
    assert content.startswith("task,ablation,r,mape")
    assert "slack" in content
    capsys.readouterr()


def test_retrieve_and_finetune(workspace, capsys):
    work, config = workspace
    from rtlfuse.corpus import read_corpus

    cfg = PipelineConfig.load(config)
    anchor = read_corpus(cfg.path("corpus_path"))[0]
    assert main(["retrieve", "--config", config, "--id", anchor.id, "--k", "3"]) == 0
    out = capsys.readouterr().out
    assert "sim=" in out
    assert main(["finetune", "--config", config]) == 0
    assert os.path.exists(cfg.path("heads_path"))


def test_zero_shot_self_indexed_store_gives_mape_zero(workspace, capsys):
    work, config = workspace
    # index the evaluation set itself, then predict on it
    assert main(["index", "--config", config, "--which", "test"]) == 0
    out_csv = str(work / "zero_shot.csv")
    assert main(["predict", "--config", config, "--zero-shot",
                 "--out", out_csv]) == 0
    text = capsys.readouterr().out
    with open(out_csv, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    summary_rows = [l for l in lines[lines.index("task,mape") + 1:]]
    assert summary_rows
    for row in summary_rows:
        task, value = row.split(",")
        assert float(value) == 0.0, (task, value)


def test_ablate_writes_rows(workspace):
    work, config = workspace
    out_csv = str(work / "ablate.csv")
    assert main(["ablate", "--config", config, "--out", out_csv]) == 0
    with open(out_csv, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    ablations = {line.split(",")[1] for line in lines[1:]}
    assert {"none", "drop_graph", "drop_code", "drop_summary",
            "drop_retrieval"} <= ablations


def test_evaluate_with_ablation_flag(workspace):
    work, config = workspace
    out_csv = str(work / "eval_ablate.csv")
    assert main(["evaluate", "--config", config, "--ablate", "retrieval",
                 "--out", out_csv]) == 0
    with open(out_csv, "r", encoding="utf-8") as fh:
        assert "drop_retrieval" in fh.read()


def test_error_paths(workspace, capsys, tmp_path):
    work, config = workspace
    bad = str(tmp_path / "bad.v")
    with open(bad, "w", encoding="utf-8") as fh:
        fh.write("module m(input a); initial a = 0; endmodule")
    assert main(["parse", bad]) == 1
    err = capsys.readouterr().err
    assert "error in stage 'parse'" in err
    assert main(["retrieve", "--config", config, "--id", "nope"]) == 1
    err = capsys.readouterr().err
    assert "error in stage 'retrieve'" in err


def test_build_corpus_idempotent(workspace):
    work, config = workspace
    cfg = PipelineConfig.load(config)
    corpus = cfg.path("corpus_path")
    first = sha(corpus)
    assert main(["build-corpus", "--config", config]) == 0
    assert sha(corpus) == first
