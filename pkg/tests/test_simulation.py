import csv
import math

import numpy as np
import pytest
from scipy.special import expit

from smoothdml.data import Family
from smoothdml.errors import InvalidArgumentError, ReportIOError
from smoothdml.features import get_preset
from smoothdml.simulation import (TRUE_THETA, DgpConfig, EstimatorKind, McResults, draw_dataset,
                                  emit_sampling_distribution, replication_rng, run_mc,
                                  run_replications, summarize, true_cate)


def test_cate_is_standard_logistic():
    ds = draw_dataset(DgpConfig(n=1_000_000, seed=0))
    tau = np.sort(true_cate(ds.z))
    n = len(tau)
    cdf = expit(tau)
    sup = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
    assert sup <= 0.005


def test_minimum_of_half_block_is_unit_exponential():
    ds = draw_dataset(DgpConfig(n=1_000_000, seed=1))
    assert ds.z[:, :3].min(axis=1).mean() == pytest.approx(1.0, abs=0.005)
    assert ds.z[:, 3:6].min(axis=1).mean() == pytest.approx(1.0, abs=0.005)


def test_truth_and_outcomes():
    assert TRUE_THETA == math.log(2)
    cfg = DgpConfig(n=50_000, noise_sd=0.0, extra_covariates=2, seed=3)
    ds = draw_dataset(cfg)
    assert ds.q == 8
    tau = true_cate(ds.z)
    assert np.array_equal(ds.y[ds.d == 1], tau[ds.d == 1])
    assert np.all(ds.y[ds.d == 0] == 0)
    assert ds.d.mean() == pytest.approx(0.5, abs=0.01)
    assert np.mean(np.maximum(tau, 0)) == pytest.approx(TRUE_THETA, abs=0.01)


def test_dgp_validation():
    for bad in (dict(p0=5), dict(n=1), dict(propensity=1.0), dict(noise_sd=-1)):
        with pytest.raises(InvalidArgumentError):
            DgpConfig(**bad)


def test_summary_identity():
    v = np.array([0.6, 0.7, 0.8, 0.65])
    s = summarize(v, "dml", "sim1", "sigmoid", covered=[1, 1, 0, 1])
    assert s.bias == pytest.approx(v.mean() - TRUE_THETA, abs=1e-15)
    assert s.rmse ** 2 == pytest.approx(s.bias ** 2 + s.se ** 2, rel=1e-12)
    assert s.rmse == pytest.approx(np.sqrt(np.mean((v - TRUE_THETA) ** 2)), rel=1e-12)
    assert s.coverage == 0.75 and s.reps == 4
    assert s.estimator_kind is EstimatorKind.DML and s.smoothing_family is Family.SIGMOID


def test_replication_streams_are_distinct():
    a = replication_rng(7, 0).random(5)
    b = replication_rng(7, 1).random(5)
    c = replication_rng(7, 0).random(5)
    assert not np.array_equal(a, b) and np.array_equal(a, c)


@pytest.fixture(scope="module")
def small_mc():
    return run_replications(DgpConfig(n=500), get_preset("sim1"), 6, 42, spec_name="sim1")


def test_replications_are_deterministic(small_mc):
    again = run_replications(DgpConfig(n=500), get_preset("sim1"), 6, 42, spec_name="sim1")
    for kind in EstimatorKind:
        assert np.array_equal(small_mc.estimates[kind], again.estimates[kind])
    assert np.array_equal(small_mc.covered, again.covered)
    assert small_mc.seeds == tuple((42, r) for r in range(6))


def test_parallel_matches_serial(small_mc):
    par = run_replications(DgpConfig(n=500), get_preset("sim1"), 6, 42, spec_name="sim1",
                           workers=2)
    for kind in EstimatorKind:
        assert np.array_equal(small_mc.estimates[kind], par.estimates[kind])


def test_run_mc_summaries():
    out = run_mc(DgpConfig(n=400), get_preset("sim1"), reps=3, seed=1, spec_name="sim1")
    assert set(out) == set(EstimatorKind)
    assert out[EstimatorKind.DML].coverage is not None
    assert out[EstimatorKind.NAIVE].coverage is None
    with pytest.raises(InvalidArgumentError):
        run_mc(DgpConfig(n=400), get_preset("sim1"), reps=1)


def test_sampling_distribution_file(small_mc, tmp_path):
    three = McResults({k: v[:3] for k, v in small_mc.estimates.items()}, small_mc.covered[:3],
                      small_mc.seeds[:3], "sim1", Family.SIGMOID)
    path = emit_sampling_distribution(three, tmp_path / "dist.csv")
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["kind", "rep", "value", "qq_sample", "qq_theory", "truth"]
    assert len(rows) == 9
    for kind in EstimatorKind:
        mine = [r for r in rows if r["kind"] == kind.value]
        assert len(mine) == 3
        assert [float(r["value"]) for r in mine] == list(three.estimates[kind])
        theory = [float(r["qq_theory"]) for r in mine]
        assert theory == pytest.approx([-0.967422, 0.0, 0.967422], abs=1e-6)
        assert float(mine[0]["truth"]) == TRUE_THETA


def test_sampling_distribution_errors(small_mc, tmp_path):
    empty = McResults({}, np.zeros(0, dtype=bool), (), "x", Family.SIGMOID)
    target = tmp_path / "none.csv"
    with pytest.raises(InvalidArgumentError):
        emit_sampling_distribution(empty, target)
    assert not target.exists()
    with pytest.raises(ReportIOError):
        emit_sampling_distribution(small_mc, tmp_path / "missing" / "dir" / "x.csv")
