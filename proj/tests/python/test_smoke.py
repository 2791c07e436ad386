import math

import numpy as np
import pytest

import mcgae

SMALL = {
    "synthetic": {"n_runs": 4, "frames_min": 120, "frames_max": 160, "feature_dim": 8},
    "train": {
        "epochs": 3,
        "hidden": [8],
        "latent_dim": 3,
        "batches": {"batches_per_epoch": 4, "runs_per_batch": 3,
                    "labeled_points_per_run": 10, "unlabeled_points_per_run": 5},
    },
}


def test_generate_shapes_and_determinism():
    a = mcgae.generate(n_runs=3, feature_dim=5, seed=4)
    b = mcgae.generate(n_runs=3, feature_dim=5, seed=4)
    assert len(a) == 3
    for ra, rb in zip(a, b):
        assert ra["frames"].shape == (len(ra["timestamps"]), 5)
        assert np.array_equal(ra["frames"], rb["frames"])
        assert 0 < ra["p_h"] <= ra["p_f"] <= len(ra["timestamps"])


def test_bad_config_raises():
    with pytest.raises(mcgae.ConfigError):
        mcgae.generate(cutoff_h=0.9, cutoff_f=0.5)
    with pytest.raises(ValueError):
        mcgae.generate(unknown_key=1)


def test_metrics_and_thresholds():
    assert mcgae.spearman([1, 2, 3], [0, 1, 2]) == pytest.approx(1.0)
    assert math.isnan(mcgae.spearman([3, 3, 3], [0, 1, 2]))
    assert mcgae.trivial_balanced_accuracy([1, -1, -1]) == 0.5
    assert mcgae.t_fixed(1.0, 2.0, 40, 40) == 1.5
    t, ba = mcgae.t_opt([0.1, 0.2, 0.8, 0.9], [-1, -1, 1, 1])
    assert t == pytest.approx(0.5) and ba == 1.0
    assert mcgae.t_diff(2.0, 0.0) == 1.0
    assert mcgae.t_train([0.0, 2.0]) == 4.0


def test_directions():
    d = mcgae.normal_direction(np.array([3.0, 4.0]), 1.0, 2.0)
    assert np.allclose(d, [0.6, 0.8])
    assert np.allclose(mcgae.anomalous_direction(np.array([3.0, 4.0]), 1.0, 10.0), [-0.6, -0.8])
    c = mcgae.monotonicity_coefficients([0.25, 0.04, 0.81])
    assert c == pytest.approx([2 ** -0.5, -(2 ** -0.5), 0.0])


def test_train_one_job():
    r = mcgae.train(SMALL, method="MCGAE", n_anomalous=1, fold=0, seed=0)
    assert len(r["history"]) == 3
    assert 0.0 <= r["ba"]["T_opt"] <= 1.0
    assert r["method"] == "MCGAE"


def test_sweep_report(tmp_path):
    spec = dict(SMALL, methods=["CGAE"], anomalous_run_counts=[1], folds=[0], seeds=[0])
    report = mcgae.sweep(spec, tmp_path)
    assert len(report["jobs"]) == 1
    assert (tmp_path / "report.json").exists()
