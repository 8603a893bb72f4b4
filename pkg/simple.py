from dataclasses import replace

from src.harness.config import DatasetSizes, ExperimentConfig
from src.harness.evaluation import emit_complexity_table, run_experiment

if __name__ == "__main__":
    # For a fast check, shrink the desk preset to a few hundred subframes and epochs
    config = ExperimentConfig.desk(seed=7)
    config = replace(
        config,
        sizes=DatasetSizes(train=400, val=100, test_per_snr=50, calibration=200),
        training=replace(config.training, epochs=3),
        snr_grid_db=(10.0, 20.0, 30.0),
    )

    print(emit_complexity_table().to_text())
    report = run_experiment(config, checkpoint_dir=None)
    print(report.to_csv())
