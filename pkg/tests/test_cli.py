"""
Testes da CLI `amalgam`: códigos de saída, separação entre nuvem e segredo
local e o pipeline completo em um modelo pequeno.
"""

import json

import pandas as pd
import pytest

from src.augment.data_augmenter import load_dataset
from src.augment.secret import load_secret
from src.run import COMMANDS, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, build_parser, run


@pytest.fixture
def workspace(tmp_path):
    cloud, local = tmp_path / "cloud", tmp_path / "local"
    assert run(["make-dataset", "--model", "tiny_cnn", "--n", "32", "--seed", "0",
                "--out", str(cloud / "data.amlg")]) == EXIT_OK
    assert run(["init-model", "--model", "tiny_cnn", "--seed", "0", "--out", str(cloud / "model.json")]) == EXIT_OK
    return cloud, local


def _read_result(path):
    return json.loads(path.read_text(encoding="utf-8"))["result"]


def _not_a_secret(path):
    """True se o arquivo não é um segredo local (flag 0x4C)"""
    return path.suffix != ".amlg" or path.read_bytes()[6:7] != b"\x4c"


class TestUsage:

    def test_help(self):
        assert run(["--help"]) == EXIT_OK

    @pytest.mark.parametrize("argv", [
        [],
        ["bogus"],
        ["train", "--unknown-flag"],
        ["train", "--epochs", "many"],
        ["train"],
        ["report"],
        ["init-model", "--model", "resnet", "--out", "m.json"],
    ])
    def test_usage_errors(self, argv):
        assert run(argv) == EXIT_USAGE

    def test_missing_input_file(self, tmp_path):
        assert run(["evaluate", "--model", str(tmp_path / "none.json"), "--data", str(tmp_path / "none.amlg")]) \
            == EXIT_USAGE

    def test_corrupt_model_file(self, workspace):
        cloud, _ = workspace
        (cloud / "broken.json").write_text("{not json", encoding="utf-8")
        assert run(["evaluate", "--model", str(cloud / "broken.json"), "--data", str(cloud / "data.amlg")]) \
            == EXIT_RUNTIME

    def test_model_file_that_is_a_json_list(self, workspace):
        cloud, _ = workspace
        (cloud / "list.json").write_text("[1, 2, 3]", encoding="utf-8")
        assert run(["evaluate", "--model", str(cloud / "list.json"), "--data", str(cloud / "data.amlg")]) \
            == EXIT_RUNTIME

    @pytest.mark.parametrize("error", [ValueError("valor"), KeyError("chave")])
    def test_plain_errors_inside_a_stage(self, monkeypatch, error):
        def failing(args, cfg):
            raise error
        monkeypatch.setitem(COMMANDS, "report", failing)
        assert run(["report", "--shape", "28x28x1"]) == EXIT_RUNTIME

    def test_every_stage_is_a_choice(self):
        parser = build_parser()
        for command in ("make-dataset", "init-model", "augment-data", "augment-model", "train", "extract",
                        "evaluate", "report", "attack"):
            assert parser.parse_args([command]).command == command


class TestSecretLocation:

    def test_secret_inside_cloud_dir(self, workspace):
        cloud, _ = workspace
        code = run(["augment-data", "--data", str(cloud / "data.amlg"), "--secret", str(cloud / "secret.amlg"),
                    "--cloud-dir", str(cloud), "--out", str(cloud / "aug.amlg")])
        assert code == EXIT_USAGE
        assert not (cloud / "secret.amlg").exists()
        assert not (cloud / "aug.amlg").exists()

    def test_alpha_zero_is_byte_identical(self, workspace):
        cloud, local = workspace
        assert run(["augment-data", "--alpha", "0", "--data", str(cloud / "data.amlg"),
                    "--secret", str(local / "secret.amlg"), "--out", str(cloud / "aug.amlg")]) == EXIT_OK
        assert (cloud / "aug.amlg").read_bytes() == (cloud / "data.amlg").read_bytes()

    def test_reuse_secret_for_test_split(self, workspace):
        cloud, local = workspace
        secret = local / "secret.amlg"
        assert run(["augment-data", "--alpha", "0.5", "--data", str(cloud / "data.amlg"), "--secret", str(secret),
                    "--out", str(cloud / "train.amlg")]) == EXIT_OK
        before = secret.read_bytes()
        assert run(["make-dataset", "--model", "tiny_cnn", "--n", "8", "--seed", "9",
                    "--out", str(cloud / "test.amlg")]) == EXIT_OK
        assert run(["augment-data", "--reuse-secret", "--data", str(cloud / "test.amlg"), "--secret", str(secret),
                    "--out", str(cloud / "test_aug.amlg")]) == EXIT_OK
        assert secret.read_bytes() == before
        train_shape = load_dataset(cloud / "train.amlg").samples.shape
        test_shape = load_dataset(cloud / "test_aug.amlg").samples.shape
        assert train_shape[1:] == test_shape[1:] == (1, 21, 21)


def test_report_prints_losses(tmp_path, capsys):
    curve = tmp_path / "curve.csv"
    assert run(["report", "--shape", "28x28x1", "--alpha", "0.5", "--curve", str(curve)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "0.6667" in out and "0.3333" in out
    assert len(pd.read_csv(curve)) == 5


def test_full_pipeline(workspace):
    cloud, local = workspace
    secret = local / "secret.amlg"
    report = local / "report.json"

    assert run(["augment-data", "--alpha", "0.5", "--data", str(cloud / "data.amlg"), "--secret", str(secret),
                "--cloud-dir", str(cloud), "--out", str(cloud / "aug.amlg")]) == EXIT_OK
    assert run(["augment-model", "--model", str(cloud / "model.json"), "--secret", str(secret), "--subnets", "2",
                "--cloud-dir", str(cloud), "--out", str(cloud / "aug.json"),
                "--plan-tree", str(local / "plan.txt")]) == EXIT_OK
    assert load_secret(secret).layer_map
    assert (local / "plan.txt").exists()
    # nada do segredo dentro da nuvem
    assert all(_not_a_secret(p) for p in cloud.iterdir())

    assert run(["train", "--model", str(cloud / "aug.json"), "--data", str(cloud / "aug.amlg"), "--epochs", "1",
                "--lr", "0.05", "--batch", "16", "--out", str(cloud / "trained.json")]) == EXIT_OK
    assert (cloud / "trained.metrics.csv").exists()

    assert run(["extract", "--model", str(cloud / "trained.json"), "--original", str(cloud / "model.json"),
                "--secret", str(secret), "--out", str(local / "extracted.json"), "--json-out", str(report)]) \
        == EXIT_OK
    assert _read_result(report)["checksum_match"]

    assert run(["evaluate", "--model", str(cloud / "trained.json"), "--data", str(cloud / "aug.amlg"),
                "--original", str(local / "extracted.json"), "--secret", str(secret),
                "--json-out", str(report)]) == EXIT_OK
    assert _read_result(report)["accuracy_difference"] == 0.0


def test_attack_recovers_label(workspace, tmp_path):
    cloud, _ = workspace
    report = tmp_path / "attack.json"
    assert run(["attack", "--model", str(cloud / "model.json"), "--data", str(cloud / "data.amlg"), "--index", "3",
                "--iterations", "2", "--json-out", str(report)]) == EXIT_OK
    result = _read_result(report)
    assert result["label_correct"]
    assert result["iterations"] == 2
