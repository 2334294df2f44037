import json

import pytest

from kfae.cli import main

SMALL_TRAIN = ["--image-size", "8", "--encoder-widths", "32,16", "--tokens", "4",
               "--token-dim", "4", "--decoder-widths", "16,32", "--epochs", "3",
               "--batch-size", "8"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    frames = root / "frames"
    assert main(["synth", "--scenes", "3", "--frames-per-scene", "8", "--seed", "4",
                 "--out", str(frames)]) == 0
    model = root / "model.kfae"
    assert main(["train", "--frames", str(frames), "--out", str(model), "--seed", "1",
                 *SMALL_TRAIN]) == 0
    return root, frames, model


def test_synth_outputs(workspace):
    _, frames, _ = workspace
    assert len(list(frames.glob("frame_*.png"))) == 24
    manifest = json.loads((frames / "manifest.json").read_text())
    assert manifest["total_frames"] == 24 and manifest["seed"] == 4
    truth = json.loads((frames / "truth.json").read_text())
    assert sum(iv["label"] for iv in truth["intervals"]) == 3


def test_train_log(workspace):
    _, _, model = workspace
    log = json.loads(model.with_name("model.kfae.log.json").read_text())
    assert len(log["epochs"]) == 3
    assert log["initial_train_loss"] > 0


def test_extract_and_eval(workspace, capsys):
    root, frames, model = workspace
    report = root / "report.json"
    sheet = root / "sheet.png"
    kept = root / "kept"
    assert main(["extract", "--frames", str(frames), "--model", str(model), "-k", "3",
                 "--out", str(report), "--sheet", str(sheet), "--save-frames", str(kept)]) == 0
    doc = json.loads(report.read_text())
    assert doc["requested_k"] == 3 and doc["oversampled_k"] == 5
    assert len(doc["keyframes"]) <= 3
    assert sheet.exists()
    assert len(list(kept.glob("frame_*.png"))) == len(doc["keyframes"])
    scores = root / "scores.json"
    capsys.readouterr()
    assert main(["eval", "--report", str(report), "--truth", str(frames / "truth.json"),
                 "--out", str(scores)]) == 0
    out = capsys.readouterr().out
    assert "precision" in out
    result = json.loads(scores.read_text())
    assert result["confusion"]["tp"] + result["confusion"]["fn"] == 3


def test_extract_is_byte_identical(workspace):
    root, frames, model = workspace
    paths = [root / "r1.json", root / "r2.json"]
    for p in paths:
        assert main(["extract", "--frames", str(frames), "--model", str(model), "-k", "2",
                     "--seed", "7", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_extract_too_few_frames(tmp_path, workspace, capsys):
    _, _, model = workspace
    frames = tmp_path / "few"
    assert main(["synth", "--scenes", "1", "--frames-per-scene", "6", "--out", str(frames)]) == 0
    code = main(["extract", "--frames", str(frames), "--model", str(model), "-k", "5",
                 "--out", str(tmp_path / "r.json")])
    assert code == 1
    assert "smaller k" in capsys.readouterr().err


def test_eval_confusion_debug(capsys):
    assert main(["eval", "--confusion", "43,12,14,330"]) == 0
    out = capsys.readouterr().out
    assert "0.78" in out and "0.75" in out and "0.77" in out


def test_eval_bad_truth(tmp_path, capsys):
    truth = tmp_path / "t.json"
    truth.write_text(json.dumps({"total_frames": 10, "intervals": [
        {"start": 0, "end": 6, "label": 1}, {"start": 4, "end": 10, "label": 0}]}))
    report = tmp_path / "r.json"
    report.write_text(json.dumps({"keyframes": [{"frame": 1}]}))
    assert main(["eval", "--report", str(report), "--truth", str(truth)]) == 1
    assert "intervals overlap" in capsys.readouterr().err


def test_eval_requires_inputs():
    assert main(["eval"]) == 2


def test_train_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    code = main(["train", "--frames", str(tmp_path / "empty"), "--out", str(tmp_path / "m")])
    assert code == 1
    assert "no frames found" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["train", "--frames", "x", "--out", "y", "--epochs", "0"],
    ["extract", "--frames", "x", "--model", "m", "-k", "0", "--out", "r"],
    ["eval", "--confusion", "1,2,3"],
    ["synth", "--scenes", "0", "--frames-per-scene", "3", "--out", "o"],
    ["bogus"],
])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
