"""CLI behaviour: exit codes, config precedence, end-to-end flows."""
import json
import zlib
from io import BytesIO
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from PIL import Image

from episplit.cli import cli
from episplit.dataio import fold_spec, load_manifest, load_pack_manifest, write_prediction_set
from episplit.metrics import sample_test_tasks
from helpers import write_dataset

GEN_FLAGS = ["--out-size", "64", "--min-side", "20", "--min-image-fg", "50", "--prob", "1.0"]


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def dataset(tmp_path):
    return write_dataset(tmp_path / "data", 6, classes=[1, 2], size=(80, 96))


def _generate(runner, manifest, out, *extra):
    args = ["generate", "--manifest", str(manifest), "--out", str(out),
            "--seed", "3", *GEN_FLAGS, *extra]
    return runner.invoke(cli, args)


def test_generate_and_verify(runner, dataset, tmp_path):
    pack = tmp_path / "pack"
    result = _generate(runner, dataset, pack)
    assert result.exit_code == 0, result.output
    stats = json.loads(result.output)
    assert stats["generated"] == 6
    assert (pack / "pack_manifest.json").is_file()

    verified = runner.invoke(cli, ["verify", str(pack)])
    assert verified.exit_code == 0
    assert "OK: 6 episode(s)" in verified.output


def test_generate_missing_manifest_is_usage_error(runner, tmp_path):
    result = runner.invoke(cli, ["generate", "--manifest", str(tmp_path / "no.json"),
                                 "--out", str(tmp_path / "pack")])
    assert result.exit_code == 2


def test_generate_bad_prob_fails_before_io(runner, dataset, tmp_path):
    pack = tmp_path / "pack"
    result = runner.invoke(cli, ["generate", "--manifest", str(dataset),
                                 "--out", str(pack), "--prob", "1.5"])
    assert result.exit_code == 2
    assert not pack.exists()  # nothing was touched


def test_generate_config_file_and_flag_precedence(runner, dataset, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "out_size": 48,
        "min_image_fg": 50,
        "split": {"prob": 1.0, "min_side_pixels": 20},
    }))
    pack_a = tmp_path / "pack_a"
    result = runner.invoke(cli, ["generate", "--manifest", str(dataset),
                                 "--out", str(pack_a), "--seed", "1", "--config", str(cfg)])
    assert result.exit_code == 0, result.output
    assert load_pack_manifest(pack_a)["out_size"] == 48

    pack_b = tmp_path / "pack_b"
    result = runner.invoke(cli, ["generate", "--manifest", str(dataset),
                                 "--out", str(pack_b), "--seed", "1", "--config", str(cfg),
                                 "--out-size", "32"])
    assert result.exit_code == 0, result.output
    assert load_pack_manifest(pack_b)["out_size"] == 32  # flag beats file


def test_strict_repro_requires_seed(runner, dataset, tmp_path):
    result = runner.invoke(cli, ["--strict-repro", "generate",
                                 "--manifest", str(dataset),
                                 "--out", str(tmp_path / "pack"), *GEN_FLAGS])
    assert result.exit_code == 2
    assert "--seed" in result.output

    ok = runner.invoke(cli, ["--strict-repro", "generate", "--manifest", str(dataset),
                             "--out", str(tmp_path / "pack"), "--seed", "0", *GEN_FLAGS])
    assert ok.exit_code == 0, ok.output


def test_verify_detects_corruption(runner, dataset, tmp_path):
    pack = tmp_path / "pack"
    assert _generate(runner, dataset, pack).exit_code == 0
    doc = load_pack_manifest(pack)
    victim = pack / doc["episodes"][0]["files"]["support"]
    data = bytearray(victim.read_bytes())
    data[-4] ^= 0x55
    victim.write_bytes(bytes(data))
    result = runner.invoke(cli, ["verify", str(pack)])
    assert result.exit_code == 1
    assert doc["episodes"][0]["id"] in result.output


def test_verify_detects_label_alphabet(runner, dataset, tmp_path):
    pack = tmp_path / "pack"
    assert _generate(runner, dataset, pack).exit_code == 0
    manifest_path = pack / "pack_manifest.json"
    doc = json.loads(manifest_path.read_text())
    entry = doc["episodes"][0]
    bad = np.full((64, 64), 9, dtype=np.uint8)
    buf = BytesIO()
    Image.fromarray(bad, "L").save(buf, format="PNG")
    (pack / entry["files"]["query_label"]).write_bytes(buf.getvalue())
    entry["crc32"]["query_label"] = zlib.crc32(buf.getvalue())  # keep CRC honest
    manifest_path.write_text(json.dumps(doc))
    result = runner.invoke(cli, ["verify", str(pack)])
    assert result.exit_code == 1
    assert "9" in result.output


def test_inspect_writes_composites(runner, dataset, tmp_path):
    pack = tmp_path / "pack"
    assert _generate(runner, dataset, pack).exit_code == 0
    result = runner.invoke(cli, ["inspect", str(pack), "--limit", "2"])
    assert result.exit_code == 0, result.output
    files = sorted((pack / "inspect").glob("*_inspect.png"))
    assert len(files) == 2
    img = np.asarray(Image.open(files[0]))
    assert img.shape == (64, 64 + 8 + 64, 3)  # side-by-side with a gap


def test_inspect_unknown_id(runner, dataset, tmp_path):
    pack = tmp_path / "pack"
    assert _generate(runner, dataset, pack).exit_code == 0
    result = runner.invoke(cli, ["inspect", str(pack), "--ids", "nope_e000"])
    assert result.exit_code == 1


@pytest.fixture()
def eval_dataset(tmp_path):
    return write_dataset(tmp_path / "eval", 10, classes=[1, 2, 3, 4, 5], size=(40, 48))


def test_evaluate_baseline(runner, eval_dataset):
    result = runner.invoke(cli, ["evaluate", "--manifest", str(eval_dataset),
                                 "--dataset", "pascal", "--fold", "0",
                                 "--runs", "2", "--tasks", "20", "--seed", "1",
                                 "--baseline-saliency"])
    assert result.exit_code == 0, result.output
    assert "1.0000" in result.output
    assert "fold0" in result.output and "avg" in result.output


def test_evaluate_requires_a_method(runner, eval_dataset):
    result = runner.invoke(cli, ["evaluate", "--manifest", str(eval_dataset),
                                 "--dataset", "pascal", "--fold", "0"])
    assert result.exit_code == 2


def test_evaluate_predictions_need_single_run(runner, eval_dataset, tmp_path):
    (tmp_path / "p").mkdir()
    result = runner.invoke(cli, ["evaluate", "--manifest", str(eval_dataset),
                                 "--dataset", "pascal", "--fold", "0", "--runs", "2",
                                 "--predictions", str(tmp_path / "p")])
    assert result.exit_code == 2


def test_evaluate_json_report(runner, eval_dataset, tmp_path):
    out = tmp_path / "report.json"
    result = runner.invoke(cli, ["evaluate", "--manifest", str(eval_dataset),
                                 "--dataset", "pascal", "--fold", "0",
                                 "--runs", "2", "--tasks", "10", "--seed", "0",
                                 "--baseline-saliency", "--json", str(out)])
    assert result.exit_code == 0, result.output
    report = json.loads(out.read_text())
    assert report["mean_over_folds"] == 1.0
    assert report["folds"][0]["runs"][0]["seed"] == 0
    assert report["folds"][0]["runs"][1]["seed"] == 1
    assert report["folds"][0]["classes"] == [1, 2, 3, 4, 5]


def test_export_tasks_then_score_predictions(runner, eval_dataset, tmp_path):
    tasks_dir = tmp_path / "tasks"
    result = runner.invoke(cli, ["export-tasks", "--manifest", str(eval_dataset),
                                 "--dataset", "pascal", "--fold", "0",
                                 "--tasks", "8", "--seed", "2", "--out", str(tasks_dir),
                                 "--out-size", "48"])
    assert result.exit_code == 0, result.output
    assert runner.invoke(cli, ["verify", str(tasks_dir)]).exit_code == 0

    # fabricate perfect predictions straight from the ground truth
    manifest = load_manifest(eval_dataset)
    tasks = sample_test_tasks(manifest, fold_spec("pascal").folds[0], 8,
                              np.random.default_rng(2))
    write_prediction_set(tmp_path / "preds",
                         {t.task_id: t.query_mask.astype(np.uint8) for t in tasks})
    result = runner.invoke(cli, ["evaluate", "--manifest", str(eval_dataset),
                                 "--dataset", "pascal", "--fold", "0",
                                 "--runs", "1", "--tasks", "8", "--seed", "2",
                                 "--predictions", str(tmp_path / "preds")])
    assert result.exit_code == 0, result.output
    assert "1.0000" in result.output


def test_evaluate_missing_prediction_names_task(runner, eval_dataset, tmp_path):
    manifest = load_manifest(eval_dataset)
    tasks = sample_test_tasks(manifest, fold_spec("pascal").folds[0], 4,
                              np.random.default_rng(0))
    write_prediction_set(tmp_path / "preds", {
        t.task_id: t.query_mask.astype(np.uint8) for t in tasks[:-1]})
    result = runner.invoke(cli, ["evaluate", "--manifest", str(eval_dataset),
                                 "--dataset", "pascal", "--fold", "0",
                                 "--runs", "1", "--tasks", "4", "--seed", "0",
                                 "--predictions", str(tmp_path / "preds")])
    assert result.exit_code == 1
    assert tasks[-1].task_id in result.output


def test_workers_flag_produces_identical_pack(runner, dataset, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _generate(runner, dataset, a).exit_code == 0
    assert _generate(runner, dataset, b, "--workers", "4").exit_code == 0
    from helpers import dir_digest
    assert dir_digest(a) == dir_digest(b)
