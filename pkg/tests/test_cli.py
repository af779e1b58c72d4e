import json
import shutil
import subprocess
import sys

import pytest

from geoforge.annotations import load_corpus
from geoforge.attributes import compute_size_thresholds
from geoforge.cli import load_run_config, main


@pytest.fixture(scope="module")
def generated(fixture_corpus, tmp_path_factory):
    root, _ = fixture_corpus
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "--config", str(root / "forge.yaml"), "--offline", "--seed", "7",
                 "--output", str(out)]) == 0
    return root, out


def _rows(path):
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def test_generate_outputs(generated):
    _, out = generated
    stats = json.loads((out / "stats.json").read_text())
    assert stats["seed"] == 7 and len(stats["config_hash"]) == 64
    assert sum(stats["per_task"].values()) == stats["total"]
    for name in ("grounding", "grounded_description", "region_caption", "vqa", "classification"):
        assert (out / "benchmark" / f"{name}.jsonl").exists()


def test_tasks_filter(fixture_corpus, tmp_path):
    root, _ = fixture_corpus
    assert main(["generate", "--config", str(root / "forge.yaml"), "--offline", "--tasks", "refer",
                 "--output", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "train.jsonl") + _rows(tmp_path / "test.jsonl")
    assert rows and {r["task"] for r in rows} == {"referring_expression"}


def test_validate(generated, tmp_path, capsys):
    root, out = generated
    assert main(["validate", str(out / "train.jsonl")]) == 0
    assert main(["validate", str(root / "manifest.jsonl")]) == 0
    lines = (root / "manifest.jsonl").read_text().splitlines()
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines[:3] + [lines[3][: len(lines[3]) // 2]]) + "\n")
    capsys.readouterr()
    assert main(["validate", str(bad)]) == 1
    assert "line 4" in capsys.readouterr().err


def test_validate_bad_shard_record(tmp_path, capsys):
    p = tmp_path / "s.jsonl"
    good = {"id": "r", "image": "i.png", "task": "vqa",
            "conversations": [{"from": "human", "value": "q\n<image>"}, {"from": "gpt", "value": "a"}]}
    bad = dict(good, conversations=[{"from": "gpt", "value": "a"}, {"from": "human", "value": "q\n<image>"}])
    p.write_text(json.dumps(good) + "\n" + json.dumps(bad) + "\n")
    assert main(["validate", str(p)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_stats_matches_thresholds(fixture_corpus, tmp_path):
    root, _ = fixture_corpus
    report = tmp_path / "stats.json"
    assert main(["stats", str(root / "manifest.jsonl"), "--output", str(report)]) == 0
    got = json.loads(report.read_text())
    th = compute_size_thresholds(load_corpus(root / "manifest.jsonl"))
    assert got["area_percentiles"] == {c: {"p20": a, "p80": b} for c, (a, b) in th.per_class.items()}
    assert sum(got["classes"].values()) == got["instances"] == 102


def test_eval_perfect_and_missing(generated, tmp_path, capsys):
    _, out = generated
    truth = out / "benchmark" / "grounding.jsonl"
    pred = tmp_path / "pred.jsonl"
    rows = _rows(truth)
    pred.write_text("".join(json.dumps({"id": r["id"], "output": r["answer"]}) + "\n" for r in rows))
    card_path = tmp_path / "card.json"
    assert main(["eval", "ground", "--pred", str(pred), "--truth", str(truth), "--output", str(card_path)]) == 0
    card = json.loads(card_path.read_text())
    assert card["scorecard"]["overall"] == 100.0 and card["missing_fraction"] == 0.0
    assert "config_hash" in card
    pred.write_text(json.dumps({"id": rows[0]["id"], "output": ""}) + "\n")
    assert main(["eval", "ground", "--pred", str(pred), "--truth", str(truth), "--output", str(card_path)]) == 1
    assert main(["eval", "ground", "--pred", str(pred), "--truth", str(truth), "--output", str(card_path),
                 "--max-missing", "1.0"]) == 0
    assert main(["eval", "ground", "--pred", str(pred), "--truth", str(truth), "--output", str(card_path),
                 "--max-missing", "1.0", "--strict"]) == 1


def test_eval_classify_prints_per_class(generated, tmp_path, capsys):
    _, out = generated
    truth = out / "benchmark" / "classification.jsonl"
    pred = tmp_path / "p.jsonl"
    pred.write_text("".join(json.dumps({"id": r["id"], "output": f"It is an {r['answer']}."}) + "\n"
                            for r in _rows(truth)))
    assert main(["eval", "classify", "--pred", str(pred), "--truth", str(truth)]) == 0
    text = capsys.readouterr().out
    assert "accuracy" in text and "per_category." in text


def test_missing_files_give_structured_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "nope.jsonl")]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "CliError"
    cfg = tmp_path / "c.yaml"
    cfg.write_text("manifest: missing.jsonl\n")
    assert main(["generate", "--config", str(cfg), "--offline"]) == 1


def test_config_paths_relative_to_file(tmp_path):
    cfg = tmp_path / "sub" / "run.yaml"
    cfg.parent.mkdir()
    cfg.write_text("manifest: m.jsonl\nseed: 3\ntasks: {refer: 5}\nchat: {model: m}\n")
    rc = load_run_config(cfg)
    assert rc.manifest == str(tmp_path / "sub" / "m.jsonl")
    assert rc.forge.seed == 3 and sum(rc.forge.task_counts.values()) == 5
    cfg.write_text("manifest: m.jsonl\ntasks: {bogus: 1}\n")
    with pytest.raises(Exception, match="bogus"):
        load_run_config(cfg)


@pytest.mark.skipif(shutil.which("forge") is None, reason="console script not installed")
def test_console_script(fixture_corpus):
    root, _ = fixture_corpus
    r = subprocess.run(["forge", "validate", str(root / "manifest.jsonl")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    r = subprocess.run([sys.executable, "-m", "geoforge.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "generate" in r.stdout
