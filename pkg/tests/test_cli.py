"""Command-line interface: exit codes, artifacts, and the full pipeline."""

import json
from pathlib import Path

import pytest

from textspot.cli import build_parser, run_cli
from textspot.config import ModelConfig, RunConfig, TrainConfig, dump_run_config
from textspot.synth import load_png


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One tiny dataset + config + trained model shared by the module."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert run_cli(["synth", "--out", str(data), "--count", "5",
                    "--seed", "11"]) == 0
    cfg_path = root / "run.json"
    dump_run_config(RunConfig(
        model=ModelConfig(embed_dim=16, n_queries=3, layers=1, heads=2,
                          refine_r=1, conv_channels=(4, 8)),
        train=TrainConfig(batch_size=2, cycle_count=2, base_lr=1e-3),
    ), cfg_path)
    model = root / "model.echo"
    assert run_cli(["train", "--data", str(data), "--config", str(cfg_path),
                    "--out", str(model)]) == 0
    return {"root": root, "data": data, "config": cfg_path, "model": model}


class TestParser:
    def test_missing_subcommand_exits_2(self, capsys):
        assert run_cli([]) == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_flag_exits_2(self, capsys):
        assert run_cli(["synth", "--out", "x", "--count", "1",
                        "--seed", "0", "--frobnicate"]) == 2

    def test_size_choices_enforced(self):
        assert run_cli(["synth", "--out", "x", "--count", "1",
                        "--seed", "0", "--size", "96"]) == 2

    def test_every_subcommand_has_a_handler(self):
        parser = build_parser()
        for cmd in (["synth", "--out", "x", "--count", "1", "--seed", "0"],
                    ["eval", "--data", "d", "--model", "m"],
                    ["infer", "--image", "i", "--model", "m", "--out", "o"]):
            args = parser.parse_args(cmd)
            assert callable(args.func)


class TestSynthCommand:
    def test_writes_dataset(self, workspace):
        data = workspace["data"]
        assert sorted(p.name for p in data.iterdir()) == [
            "annotations.jsonl", "gt.jsonl", "images", "meta.json"]
        assert len(list((data / "images").glob("*.png"))) == 5


class TestTrainCommand:
    def test_model_and_loss_log_written(self, workspace):
        assert workspace["model"].exists()
        assert workspace["model"].with_suffix(".echo.loss.csv").exists()

    def test_paths_section_supplies_data_and_out(self, workspace, tmp_path):
        cfg = RunConfig(
            model=ModelConfig(embed_dim=16, n_queries=3, layers=1, heads=2,
                              refine_r=0, conv_channels=(4, 8)),
            train=TrainConfig(batch_size=2, cycle_count=1, base_lr=1e-3),
        )
        cfg.paths.data = str(workspace["data"])
        cfg.paths.model = str(tmp_path / "from_paths.echo")
        cfg_path = tmp_path / "run.json"
        dump_run_config(cfg, cfg_path)
        assert run_cli(["train", "--config", str(cfg_path)]) == 0
        assert (tmp_path / "from_paths.echo").exists()

    def test_no_data_anywhere_is_usage_error(self, workspace, capsys, tmp_path):
        cfg_path = tmp_path / "run.json"
        dump_run_config(RunConfig(), cfg_path)
        assert run_cli(["train", "--config", str(cfg_path)]) == 2
        assert "--data" in capsys.readouterr().err

    def test_missing_dataset_exits_1(self, workspace, tmp_path, capsys):
        assert run_cli(["train", "--data", str(tmp_path / "nope"),
                        "--config", str(workspace["config"]),
                        "--out", str(tmp_path / "m.echo")]) == 1

    def test_bad_config_exits_1(self, workspace, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"train": {"lr": 1}}))
        assert run_cli(["train", "--data", str(workspace["data"]),
                        "--config", str(bad),
                        "--out", str(tmp_path / "m.echo")]) == 1
        assert "unknown key" in capsys.readouterr().err


class TestEvalCommand:
    def test_prints_report_json(self, workspace, capsys):
        assert run_cli(["eval", "--data", str(workspace["data"]),
                        "--model", str(workspace["model"])]) == 0
        report = json.loads(capsys.readouterr().out)
        assert set(report) >= {"precision", "recall", "fscore"}
        for key in ("precision", "recall", "fscore"):
            assert 0.0 <= report[key] <= 1.0

    def test_polygon_metric_and_full_lexicon(self, workspace, capsys):
        assert run_cli(["eval", "--data", str(workspace["data"]),
                        "--model", str(workspace["model"]),
                        "--metric", "polygon", "--lexicon", "full"]) == 0
        json.loads(capsys.readouterr().out)

    def test_lexicon_file_requires_full_mode(self, workspace, capsys):
        assert run_cli(["eval", "--data", str(workspace["data"]),
                        "--model", str(workspace["model"]),
                        "--lexicon-file", "words.txt"]) == 2
        assert "--lexicon-file" in capsys.readouterr().err


class TestInferCommand:
    def test_writes_predictions_and_overlay(self, workspace, tmp_path):
        image = sorted((workspace["data"] / "images").glob("*.png"))[0]
        out = tmp_path / "preds.jsonl"
        overlay = tmp_path / "overlay.png"
        assert run_cli(["infer", "--image", str(image),
                        "--model", str(workspace["model"]),
                        "--out", str(out), "--overlay", str(overlay)]) == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert lines, "expected at least one prediction"
        for rec in lines:
            assert set(rec) == {"image_id", "query_id", "text", "confidence",
                                "point", "polygon"}
        assert overlay.exists()
        rgb = load_png(overlay)
        assert rgb.shape[0] == 64

    def test_min_confidence_filters(self, workspace, tmp_path):
        image = sorted((workspace["data"] / "images").glob("*.png"))[0]
        out = tmp_path / "none.jsonl"
        assert run_cli(["infer", "--image", str(image),
                        "--model", str(workspace["model"]),
                        "--out", str(out), "--min-confidence", "1.1"]) == 0
        assert out.read_text() == ""


class TestAnnotateCommand:
    def test_mock_stt_requires_fixtures(self, capsys):
        assert run_cli(["annotate", "audio", "--audio", "a", "--mode", "word",
                        "--stt", "mock", "--out", "o.jsonl"]) == 2
        assert "--fixtures" in capsys.readouterr().err

    def test_http_stt_requires_endpoint(self, capsys):
        assert run_cli(["annotate", "audio", "--audio", "a", "--mode", "char",
                        "--stt", "http", "--out", "o.jsonl"]) == 2
        assert "--endpoint" in capsys.readouterr().err

    def test_audio_pipeline_via_cli(self, tmp_path, capsys):
        audio = tmp_path / "audio"
        audio.mkdir()
        (audio / "0000.wav").write_bytes(b"RIFFxxxx")
        fixtures = tmp_path / "stt.jsonl"
        fixtures.write_text(json.dumps(
            {"audio": "0000.wav", "tokens": ["cat"]}) + "\n")
        out = tmp_path / "ann.jsonl"
        assert run_cli(["annotate", "audio", "--audio", str(audio),
                        "--mode", "word", "--stt", "mock",
                        "--fixtures", str(fixtures),
                        "--out", str(out)]) == 0
        rec = json.loads(out.read_text().splitlines()[0])
        assert rec["texts"] == ["CAT"]
        assert rec["source"] == "audio-word"
