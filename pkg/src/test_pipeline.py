# src/test_pipeline.py
"""End-to-end runs: a tiny smoke pipeline, and the desk preset (marked slow)."""

from dataclasses import replace

import pytest

from src.harness.config import ExperimentConfig
from src.harness.dataset_store import generate_dataset
from src.harness.evaluation import ESTIMATOR_COLUMNS, run_experiment, sweep_n_ici
from src.icinet.predn import PreDnnConfig
from src.icinet.training import train_end_to_end, train_sequential

TINY = {
    "sizes": {"train": 8, "val": 4, "test_per_snr": 2, "calibration": 16},
    "snr_grid_db": [10, 20],
    "training": {"epochs": 1, "batch_size": 4},
    "seed": 5,
}


# ------------------------------
# 1. Smoke run with checkpoint reuse
# ------------------------------
def test_tiny_pipeline(tmp_path, capsys):
    config = ExperimentConfig.from_dict(TINY)
    first = run_experiment(config, checkpoint_dir=str(tmp_path), verbose=False)
    assert list(first.columns) == list(ESTIMATOR_COLUMNS)
    assert first.snr_db == [10.0, 20.0]
    assert first.metadata["config_hash"] == config.config_hash()
    assert set(first.metadata["datasets"]) == {"train", "val", "test", "calib"}
    assert len(list(tmp_path.glob("*.iciw"))) == 3

    second = run_experiment(config, checkpoint_dir=str(tmp_path), verbose=True)
    assert "Reusing" in capsys.readouterr().out
    assert second.to_csv() == first.to_csv()


# ------------------------------
# 2. Desk preset
# ------------------------------
@pytest.fixture(scope="module")
def desk_report():
    return run_experiment(ExperimentConfig.desk(seed=0), verbose=False)


@pytest.mark.slow
@pytest.mark.parametrize("snr", [10, 20])
def test_sequential_icinet_beats_ls(desk_report, snr):
    assert desk_report.mse("icinet_seq", snr) < desk_report.mse("ls", snr)


@pytest.mark.slow
@pytest.mark.parametrize("snr", [10, 20])
def test_predn_alone_beats_ls(desk_report, snr):
    assert desk_report.mse("predn", snr) < desk_report.mse("ls", snr)


@pytest.fixture(scope="module")
def desk_training_sets():
    config = ExperimentConfig.desk(seed=0)
    return (
        config,
        generate_dataset(config, "train", verbose=False).training_set(),
        generate_dataset(config, "val", verbose=False).training_set(),
    )


@pytest.mark.slow
def test_neighbouring_subcarriers_help(desk_training_sets):
    config, train_set, val_set = desk_training_sets
    result = sweep_n_ici([0, 2], config, train_set, val_set, verbose=False)
    assert result.mse(2) < result.mse(0) < result.ls_mse


@pytest.mark.slow
def test_sequential_converges_faster_than_end_to_end(desk_training_sets):
    config, train_set, val_set = desk_training_sets
    training = replace(config.training, epochs=5)
    predn_config = PreDnnConfig(n_ici=config.n_ici)
    sequential = train_sequential(train_set, val_set, training, predn_config, verbose=False)
    joint = train_end_to_end(train_set, val_set, training, predn_config, verbose=False)
    assert sequential.traces["casresnet"].validation[4] <= joint.traces["e2e"].validation[4]
