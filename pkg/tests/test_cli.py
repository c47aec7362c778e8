import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from fallacylab.cli import main
from fallacylab.corpus import Argument, write_split, DatasetSplit

from conftest import FILLERS, KEYWORDS, make_keyword_sentence


def _binary_rows(n=80, seed=5):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        label = "fallacious" if i % 2 == 0 else "not_fallacious"
        rows.append(
            {"id": f"b{i}", "text": make_keyword_sentence(rng, KEYWORDS[label]), "label": label}
        )
    return rows


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


@pytest.fixture()
def workspace(tmp_path):
    data = tmp_path / "raw.jsonl"
    _write_jsonl(data, _binary_rows())
    synonyms = tmp_path / "synonyms.tsv"
    synonyms.write_text(
        "\n".join(f"{w}\t{w}y,{w}ish" for w in FILLERS) + "\n", encoding="utf-8"
    )
    kg = tmp_path / "kg.tsv"
    kg.write_text("river\tIsA\twaterway\n", encoding="utf-8")
    cfg = {
        "task": "binary",
        "method": "baseline",
        "output_dir": str(tmp_path / "out"),
        "seeds": [1],
        "epochs": 2,
        "batch_size": 16,
        "learning_rate": 0.003,
        "data": {"binary": {"path": str(data), "source": "binary_bench"}},
        "encoder": {"dim": 16, "heads": 2, "layers": 1, "ffn_dim": 32, "max_len": 32, "seed": 3},
        "retriever": {"checkpoint_id": "hash", "embedding_dim": 128, "pooling": "mean"},
        "ibr": {"k_cases": 2, "num_attention_heads": 2},
        "pbr": {"num_positive_prototypes": 4, "num_negative_prototypes": 1},
        "ki": {"kg_path": str(kg), "branching_factor": 2},
        "augment": {
            "strategy": "ress",
            "synonyms_path": str(synonyms),
            "class_quota": {"fallacious": 45},
        },
    }
    cfg_path = tmp_path / "config.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return tmp_path, cfg_path, cfg


def test_prepare_writes_splits_and_provenance(workspace, capsys):
    tmp, cfg_path, cfg = workspace
    assert main(["prepare", "--config", str(cfg_path), "--seed", "7"]) == 0
    out = Path(cfg["output_dir"]) / "prepared"
    assert (out / "binary_train.jsonl").exists()
    assert (out / "provenance.jsonl").exists()
    train_rows = (out / "binary_train.jsonl").read_text().splitlines()
    labels = [json.loads(r)["label"] for r in train_rows]
    assert labels.count("fallacious") == 45  # quota fill applied


def test_prepare_rerun_byte_identical(workspace):
    tmp, cfg_path, cfg = workspace
    out = Path(cfg["output_dir"]) / "prepared"
    assert main(["prepare", "--config", str(cfg_path), "--seed", "7"]) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert main(["prepare", "--config", str(cfg_path), "--seed", "7"]) == 0
    second = {p.name: p.read_bytes() for p in out.iterdir()}
    assert first == second


def test_prepare_missing_path_exit_2(workspace):
    tmp, cfg_path, cfg = workspace
    cfg["data"]["binary"]["path"] = str(tmp / "nope.jsonl")
    bad = tmp / "bad.yaml"
    bad.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    assert main(["prepare", "--config", str(bad)]) == 2


def test_train_single_seed_std_zero(workspace):
    tmp, cfg_path, cfg = workspace
    assert main(["train", "--config", str(cfg_path)]) == 0
    out = Path(cfg["output_dir"])
    report = json.loads((out / "baseline-binary-report.json").read_text())
    assert report["summary"]["f1"]["std"] == 0.0
    assert (out / "baseline-binary-seed1.pt").exists()
    assert (out / "baseline-binary-runtime.txt").exists()


def test_train_missing_method_key(workspace, tmp_path):
    tmp, cfg_path, cfg = workspace
    del cfg["method"]
    p = tmp / "nomethod.yaml"
    p.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    assert main(["train", "--config", str(p)]) == 2


def test_ki_without_kg_path_exit_2(workspace):
    tmp, cfg_path, cfg = workspace
    del cfg["ki"]["kg_path"]
    p = tmp / "noki.yaml"
    p.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    assert main(["train", "--config", str(p), "--method", "ki"]) == 2


def test_explain_ibr_schema(workspace, capsys):
    tmp, cfg_path, cfg = workspace
    assert main(["train", "--config", str(cfg_path), "--method", "ibr"]) == 0
    capsys.readouterr()
    ckpt = str(Path(cfg["output_dir"]) / "ibr-binary-seed1.pt")
    assert main(["explain", "--checkpoint", ckpt, "--text", "the river certainly floods"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert set(record) == {"prediction", "neighbors"}
    for n in record["neighbors"]:
        assert {"id", "text", "similarity"} <= set(n)


def test_explain_pbr_two_exemplars(workspace, capsys):
    tmp, cfg_path, cfg = workspace
    assert main(["train", "--config", str(cfg_path), "--method", "pbr"]) == 0
    capsys.readouterr()
    ckpt = str(Path(cfg["output_dir"]) / "pbr-binary-seed1.pt")
    assert main(["explain", "--checkpoint", ckpt, "--text", "the river certainly floods"]) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["prototypes"][0]["exemplars"]
    assert len(record["prototypes"][0]["exemplars"]) == 2


def test_explain_baseline_unsupported(workspace, capsys):
    tmp, cfg_path, cfg = workspace
    assert main(["train", "--config", str(cfg_path)]) == 0
    ckpt = str(Path(cfg["output_dir"]) / "baseline-binary-seed1.pt")
    assert main(["explain", "--checkpoint", ckpt, "--text", "anything"]) == 2


def test_eval_zero_shot(workspace, capsys):
    tmp, cfg_path, cfg = workspace
    assert main(["train", "--config", str(cfg_path)]) == 0
    capsys.readouterr()
    ckpt = str(Path(cfg["output_dir"]) / "baseline-binary-seed1.pt")
    data = tmp / "ood.jsonl"
    _write_jsonl(data, _binary_rows(20, seed=99))
    assert main(["eval", "--checkpoint", ckpt, "--data", str(data), "--zero-shot"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["out_of_domain"] is True


def test_sweep_cardinality_and_summary(workspace):
    tmp, cfg_path, cfg = workspace
    assert (
        main(["sweep", "--config", str(cfg_path), "--method", "ibr", "--set", "k_cases=0,2"])
        == 0
    )
    out = Path(cfg["output_dir"])
    reports = list(out.glob("sweep-ibr-binary-k_cases=*.json"))
    assert len(reports) == 2
    summary = (out / "sweep-ibr-binary-summary.tsv").read_text().splitlines()
    assert len(summary) == 3  # header + 2 rows


def test_sweep_unknown_knob_exit_2(workspace):
    tmp, cfg_path, cfg = workspace
    assert main(["sweep", "--config", str(cfg_path), "--set", "k_caes=1,2"]) == 2


def test_report_render(workspace, capsys, tmp_path):
    tmp, cfg_path, cfg = workspace
    assert main(["train", "--config", str(cfg_path)]) == 0
    capsys.readouterr()
    report = str(Path(cfg["output_dir"]) / "baseline-binary-report.json")
    assert main(["report", "render", "--inputs", report]) == 0
    text = capsys.readouterr().out
    assert "baseline" in text and "F1" in text
    assert main(["report", "render", "--inputs", report, "--format", "csv"]) == 0
    assert capsys.readouterr().out.startswith("method,task")
