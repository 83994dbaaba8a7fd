import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from ghostgan.cli import main
from ghostgan.config import load_config_snapshot, load_run_config
from ghostgan.data import load_cache
from ghostgan.errors import ConfigurationError

from test_data import write_mnist_dir


@pytest.fixture()
def workspace(tmp_path):
    mnist = tmp_path / "mnist"
    mnist.mkdir()
    write_mnist_dir(mnist, n_train=24, n_test=8)
    config = {
        "workspace": str(tmp_path / "ws"),
        "data": {"path": str(mnist), "seed": 5},
        "simulate": {
            "m_values": [98],
            "bank_seed": 3,
            "master_m": 784,
            "max_train_ghosts": 12,
            "max_test_ghosts": 8,
        },
        "train": {
            "m": 98,
            "epochs": 1,
            "batch_size": 4,
            "critic_iters": 1,
            "eval_subset_size": 8,
            "checkpoint_interval": 1,
            "max_train_images": 8,
            "sample_grid_size": 4,
        },
        "eval": {
            "test_betas": [0.125],
            "classifier_epochs": 1,
            "min_accuracy": None,
            "min_inception": None,
            "n_splits": 2,
            "max_images": 8,
        },
        "ablate": {
            "lambda_pairs": [[10.0, 10.0], [0.0, 0.0]],
            "m": 98,
            "epochs": 1,
            "max_train_images": 8,
        },
    }
    config_path = tmp_path / "config.yaml"
    config_path.write_text(yaml.safe_dump(config))
    return tmp_path, config_path


def invoke(config_path, *args):
    return CliRunner().invoke(main, ["--config", str(config_path), *args])


class TestConfig:
    def test_profiles_load(self):
        for profile in ("smoke", "paper"):
            config = load_run_config(profile)
            assert config.train.learning_rate == pytest.approx(1e-4)
            assert config.train.batch_size in (32, 256)

    def test_unknown_keys_rejected(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text(yaml.safe_dump({"train": {"lerning_rate": 0.1}}))
        with pytest.raises(ConfigurationError, match="lerning_rate"):
            load_run_config("smoke", bad)
        bad.write_text(yaml.safe_dump({"trian": {}}))
        with pytest.raises(ConfigurationError, match="trian"):
            load_run_config("smoke", bad)

    def test_seed_override_funnels_all_seeds(self):
        config = load_run_config("smoke", seed=42)
        assert config.data.seed == 42
        assert config.simulate.bank_seed == 43
        assert config.train.seed == 44
        assert config.eval.classifier_seed == 45

    def test_snapshot_roundtrip(self, tmp_path):
        config = load_run_config("smoke", workspace=tmp_path / "w")
        snapshot = tmp_path / "snap.yaml"
        snapshot.write_text(config.to_yaml())
        assert load_config_snapshot(snapshot) == config


class TestPrepareData:
    def test_creates_caches_and_is_idempotent(self, workspace):
        tmp_path, config_path = workspace
        result = invoke(config_path, "prepare-data")
        assert result.exit_code == 0, result.output
        prepared = tmp_path / "ws" / "prepared"
        subset_a = load_cache(prepared / "subset_a.npz")
        subset_b = load_cache(prepared / "subset_b.npz")
        assert len(subset_a) == len(subset_b) == 12
        assert np.intersect1d(subset_a.source_indices, subset_b.source_indices).size == 0

        again = invoke(config_path, "prepare-data")
        assert again.exit_code == 0
        assert "up to date" in again.output

    def test_bad_path_fails_with_named_file(self, workspace, tmp_path):
        _, config_path = workspace
        override = tmp_path / "bad.yaml"
        payload = yaml.safe_load(config_path.read_text())
        payload["data"]["path"] = str(tmp_path / "missing")
        override.write_text(yaml.safe_dump(payload))
        result = invoke(override, "prepare-data")
        assert result.exit_code != 0
        assert "train-images" in result.output


class TestSimulate:
    def test_writes_ghost_caches_with_beta(self, workspace):
        tmp_path, config_path = workspace
        assert invoke(config_path, "prepare-data").exit_code == 0
        result = invoke(config_path, "simulate")
        assert result.exit_code == 0, result.output
        ghosts = load_cache(tmp_path / "ws" / "ghosts" / "train_m98.npz")
        assert ghosts.beta == pytest.approx(98 / 784)
        assert len(ghosts) == 12
        test_ghosts = load_cache(tmp_path / "ws" / "ghosts" / "test_m98.npz")
        assert len(test_ghosts) == 8

        again = invoke(config_path, "simulate")
        assert "up to date" in again.output

    def test_missing_prepared_names_producer(self, workspace):
        _, config_path = workspace
        result = invoke(config_path, "simulate")
        assert result.exit_code != 0
        assert "prepare-data" in result.output

    def test_empty_m_list_succeeds(self, workspace, tmp_path):
        _, config_path = workspace
        payload = yaml.safe_load(config_path.read_text())
        payload["simulate"]["m_values"] = []
        override = tmp_path / "empty.yaml"
        override.write_text(yaml.safe_dump(payload))
        result = invoke(override, "simulate")
        assert result.exit_code == 0
        assert "nothing to simulate" in result.output


class TestTrainEvalPlot:
    @pytest.fixture()
    def pipeline(self, workspace):
        tmp_path, config_path = workspace
        assert invoke(config_path, "prepare-data").exit_code == 0
        assert invoke(config_path, "simulate").exit_code == 0
        return tmp_path, config_path

    def test_train_eval_plot_chain(self, pipeline, tmp_path):
        ws_root, config_path = pipeline
        result = invoke(config_path, "train")
        assert result.exit_code == 0, result.output
        run_dir = ws_root / "ws" / "runs" / "m98_l110_l210"
        assert (run_dir / "metrics.jsonl").exists()
        assert (run_dir / "checkpoints" / "epoch_0001.pt").exists()
        assert (run_dir / "samples" / "epoch_0001.png").exists()

        # Snapshot in the run directory reloads to the active config.
        snapshot = load_config_snapshot(run_dir / "config.yaml")
        assert snapshot == load_run_config("smoke", config_path)

        # Point eval at the produced checkpoint.
        payload = yaml.safe_load(config_path.read_text())
        payload["eval"]["checkpoints"] = {
            "0.125": str(run_dir / "checkpoints" / "epoch_0001.pt")
        }
        eval_config = tmp_path / "eval.yaml"
        eval_config.write_text(yaml.safe_dump(payload))
        result = invoke(eval_config, "eval")
        assert result.exit_code == 0, result.output
        report = json.loads((ws_root / "ws" / "reports" / "cross_beta" / "report.json").read_text())
        assert len(report) == 1
        assert report[0]["test_beta"] == 0.125

        result = invoke(config_path, "plot")
        assert result.exit_code == 0, result.output
        plot_dir = ws_root / "ws" / "plots" / "m98_l110_l210"
        for name in (
            "generator_loss",
            "critic_loss",
            "inception_score",
            "regularized_inception_score",
        ):
            assert (plot_dir / f"{name}.png").exists()

    def test_eval_with_no_checkpoints_writes_empty_report(self, pipeline):
        ws_root, config_path = pipeline
        result = invoke(config_path, "eval")
        assert result.exit_code == 0, result.output
        report = json.loads((ws_root / "ws" / "reports" / "cross_beta" / "report.json").read_text())
        assert report == []

    def test_plot_without_run_names_train(self, pipeline):
        _, config_path = pipeline
        result = invoke(config_path, "plot")
        assert result.exit_code != 0
        assert "train" in result.output

    def test_train_resume_flag(self, pipeline):
        _, config_path = pipeline
        assert invoke(config_path, "train").exit_code == 0
        result = invoke(config_path, "train", "--resume")
        assert result.exit_code == 0, result.output


class TestAblate:
    def test_ablation_table(self, workspace):
        tmp_path, config_path = workspace
        assert invoke(config_path, "prepare-data").exit_code == 0
        assert invoke(config_path, "simulate").exit_code == 0
        result = invoke(config_path, "ablate")
        assert result.exit_code == 0, result.output
        report = json.loads(
            (tmp_path / "ws" / "reports" / "ablation" / "report.json").read_text()
        )
        assert len(report) == 2  # two lambda pairs, one test beta
        keys = {entry["row_key"] for entry in report}
        assert keys == {"l1=10, l2=10", "l1=0, l2=0"}
