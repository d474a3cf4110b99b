import json
import math

import numpy as np
import pytest

from markov_w1 import experiments as ex
from markov_w1.kernels import GaussianAR, UniformContraction
from markov_w1.measures import EmpiricalMeasure


def test_rate_sweep_deterministic_single_rep():
    kernel = GaussianAR(a=0.5)
    a = ex.rate_sweep(kernel, [64, 128, 256], 1, "exact_1d", ref_size=5000, seed=3)
    b = ex.rate_sweep(kernel, [64, 128, 256], 1, "exact_1d", ref_size=5000, seed=3)
    assert a.mean_w1 == b.mean_w1 and a.slope == b.slope
    assert np.array_equal(a.w1, b.w1)


def test_rate_fit_fields():
    fit = ex.rate_sweep(GaussianAR(a=0.5), [64, 128, 256, 512], 12, "exact_1d", ref_size=20_000, seed=1,
                        bootstrap=300)
    assert all(m > 0 for m in fit.mean_w1)
    assert fit.theory_exponent == pytest.approx(0.5 * 0.9)
    assert fit.slope_ci[0] <= fit.slope <= fit.slope_ci[1]
    # nonincreasing up to two bootstrap standard errors
    for i in range(len(fit.mean_w1) - 1):
        gap = 2 * math.hypot(fit.bootstrap_se[i], fit.bootstrap_se[i + 1])
        assert fit.mean_w1[i + 1] <= fit.mean_w1[i] + gap
    assert fit.bound_curve[0] == pytest.approx(fit.mean_w1[0])
    assert ex.theory_exponent(3, 10) == pytest.approx(0.3)


def test_rate_sweep_fallback_flag():
    fit = ex.rate_sweep(GaussianAR(a=0.5), [16, 32], 2, "network_simplex", ref_size=64, seed=2, cap=32,
                        bootstrap=10)
    assert fit.fallback


def test_rate_sweep_validation():
    with pytest.raises(ValueError):
        ex.rate_sweep(GaussianAR(), [128, 64], 2)
    with pytest.raises(ValueError):
        ex.rate_sweep(GaussianAR(dim=2), [64, 128], 2, "exact_1d")
    with pytest.raises(ValueError):
        ex.rate_sweep(GaussianAR(), [64, 128], 2, "magic")


def test_concentration_report_properties():
    rep = ex.concentration_sweep(UniformContraction(kappa=0.5), 200, 300, [0.0, 0.01, 0.02, 0.05], seed=4)
    assert rep.theoretical_bound[0] == 1.0
    assert all(b < a for a, b in zip(rep.theoretical_bound, rep.theoretical_bound[1:]))
    assert all(0 <= e <= 1 for e in rep.empirical_exceedance)
    assert all(b <= a for a, b in zip(rep.empirical_exceedance, rep.empirical_exceedance[1:]))
    assert rep.theoretical_bound == pytest.approx(list(np.exp(-2 * 0.25 * 200 * np.array(rep.t_grid) ** 2)))
    assert "plug-in" in rep.note


def test_concentration_metric_scaling_and_modes():
    rep = ex.concentration_sweep(UniformContraction(kappa=0.5, dim=2), 50, 20, [0.0, 0.05], seed=1,
                                 ref_size=500)
    assert rep.metric_scale == pytest.approx(1 / math.sqrt(2))
    t1 = ex.concentration_sweep(GaussianAR(a=0.5, sigma=2.0), 100, 50, [0.0, 0.1], seed=1, mode="t1")
    assert t1.c == 4.0
    assert t1.theoretical_bound[1] == pytest.approx(math.exp(-100 * 0.01 * 0.25 / 8))
    with pytest.raises(ValueError):
        ex.concentration_sweep(GaussianAR(), 100, 50, [0.0], mode="bounded")
    with pytest.raises(ValueError):
        ex.concentration_sweep(UniformContraction(), 100, 50, [0.0], mode="t1")
    with pytest.raises(ValueError):
        ex.concentration_sweep(UniformContraction(init="point:3"), 100, 50, [0.0])


def test_contraction_zero_noise_exact():
    est = ex.estimate_contraction(GaussianAR(a=0.5, sigma=0.0), [(0.0, 4.0), (-1.0, 2.0)], 6, 1000)
    assert est.kappa_hat == pytest.approx(0.5, abs=1e-12)
    assert est.big_d_hat == pytest.approx(1.0, abs=1e-12)
    assert all(r == pytest.approx(0.5, abs=1e-15) for row in est.per_step_ratios for r in row)
    assert not est.degenerate


def test_contraction_degenerate_flag():
    est = ex.estimate_contraction(GaussianAR(a=0.0, sigma=0.0), [(0.0, 4.0)], 3, 1000)
    assert est.degenerate


def test_contraction_validation():
    with pytest.raises(ValueError):
        ex.estimate_contraction(GaussianAR(), [(1.0, 1.0)], 3, 1000)
    with pytest.raises(ValueError):
        ex.estimate_contraction(GaussianAR(), [(0.0, 1.0)], 3, 10)


def test_synchronous_coupling_is_exact():
    est = ex.estimate_contraction(GaussianAR(a=0.5, sigma=1.0), [(-2.0, 2.0)], 4, 1000, coupling="synchronous")
    assert est.kappa_hat == pytest.approx(0.5, rel=1e-9)


def test_decay_examples():
    d0, d4 = EmpiricalMeasure.dirac([0.0]), EmpiricalMeasure.dirac([4.0])
    exact = ex.decay_check(GaussianAR(a=0.5, sigma=0.0), d0, d4, 8, 1000)
    assert np.array_equal(exact.w1, 4 * 0.5 ** np.arange(1, 9))
    assert exact.passed
    same = ex.decay_check(GaussianAR(a=0.5, sigma=1.0), d0, d0, 3, 1000, seed=1)
    assert np.all(same.w1 <= 3 * same.sampling_error + 1e-12)
    assert same.initial_w1 == 0


def test_record_round_trip_and_replay(tmp_path):
    config = {"kernel": GaussianAR(a=0.5), "n_grid": [32, 64], "reps": 3, "w1_method": "exact_1d",
              "ref_size": 2000, "seed": 5, "bootstrap": 20}
    fit, record = ex.run_experiment("rate", config)
    json_path, csv_path = record.save(tmp_path / "rate")
    loaded = ex.ExperimentRecord.load(json_path)
    assert loaded.rows == record.rows and loaded.config == record.config
    assert ex.reproduces(loaded)
    assert csv_path.read_text().splitlines()[0] == "n,rep,w1"
    assert json.loads(json_path.read_text())["kind"] == "rate"


def test_atomic_write_leaves_no_partial_file(tmp_path, monkeypatch):
    target = tmp_path / "out.json"
    target.write_text("old")

    def boom(*args, **kwargs):
        raise OSError("disk full")

    monkeypatch.setattr(ex.os, "replace", boom)
    with pytest.raises(OSError):
        ex.atomic_write(target, "new")
    assert target.read_text() == "old"
    assert list(tmp_path.iterdir()) == [target]


def test_worker_cap(monkeypatch):
    monkeypatch.setenv(ex.WORKERS_ENV, "1")
    assert ex.worker_count() == 1
    assert ex.parallel_map(abs, [-1, 2, -3]) == [1, 2, 3]
