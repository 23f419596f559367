"""Synthetic design with a Logistic(0, 1) CATE, Monte Carlo runner and summaries.

Covariates X_1..X_p0 are Exp(rate 2/p0). Treated outcomes are
log(min of the first half / min of the second half) plus noise; control
outcomes are pure noise. The CATE is therefore Logistic(0, 1) and the target
E[max(tau, 0)] equals log 2.
"""
from __future__ import annotations

import csv
import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import ndtri

from .data import Dataset, Family, SmoothingConfig
from .errors import InvalidArgumentError, ReportIOError
from .estimator import EstimatorConfig, estimate
from .features import DictionarySpec, draw_noise
from .tuning import CateMoments

TRUE_THETA = math.log(2.0)


@dataclass(frozen=True)
class DgpConfig:
    n: int = 2000
    p0: int = 6
    extra_covariates: int = 0
    noise_sd: float = 0.1
    propensity: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.p0 < 2 or self.p0 % 2:
            raise InvalidArgumentError(f"p0 must be even and at least 2, got {self.p0}")
        if self.n < 2:
            raise InvalidArgumentError(f"n must be at least 2, got {self.n}")
        if not 0 < self.propensity < 1:
            raise InvalidArgumentError(f"propensity must lie in (0, 1), got {self.propensity}")
        if self.noise_sd < 0 or self.extra_covariates < 0:
            raise InvalidArgumentError("noise_sd and extra_covariates must be nonnegative")


def draw_dataset(cfg: DgpConfig, rng: Optional[np.random.Generator] = None) -> Dataset:
    """One draw of the design; ``rng`` overrides ``cfg.seed`` when given."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    half = cfg.p0 // 2
    scale = cfg.p0 / 2.0
    x = rng.exponential(scale, size=(cfg.n, cfg.p0 + cfg.extra_covariates))
    tau = np.log(x[:, :half].min(axis=1) / x[:, half:cfg.p0].min(axis=1))
    y1 = tau + rng.normal(0.0, cfg.noise_sd, cfg.n)
    y0 = rng.normal(0.0, cfg.noise_sd, cfg.n)
    d = (rng.random(cfg.n) < cfg.propensity).astype(np.int8)
    y = np.where(d == 1, y1, y0)
    return Dataset(y, d, x)


def true_cate(z, p0: int = 6) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=float))
    half = p0 // 2
    return np.log(z[:, :half].min(axis=1) / z[:, half:p0].min(axis=1))


class EstimatorKind(str, enum.Enum):
    NAIVE = "naive"
    DML = "dml"
    MBDML = "mbdml"


@dataclass(frozen=True)
class McSummary:
    bias: float
    se: float
    rmse: float
    coverage: Optional[float]
    reps: int
    estimator_kind: EstimatorKind
    spec_name: str
    smoothing_family: Family
    mean: float = float("nan")


@dataclass(frozen=True, eq=False)
class McResults:
    """Per-replication estimates and CI hits, indexed by replication."""

    estimates: dict
    covered: np.ndarray
    seeds: tuple
    spec_name: str
    smoothing_family: Family
    s_used: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def reps(self) -> int:
        return len(self.covered)


def summarize(values, kind: EstimatorKind, spec_name: str, family: Family,
              covered=None, truth: float = TRUE_THETA) -> McSummary:
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    bias = mean - truth
    se = float(v.std())
    cov = None if covered is None else float(np.mean(covered))
    return McSummary(bias, se, math.sqrt(bias * bias + se * se), cov, len(v), EstimatorKind(kind),
                     spec_name, Family(family), mean)


def replication_rng(master_seed: int, rep: int) -> np.random.Generator:
    """Independent stream for replication ``rep``: default_rng([master_seed, rep])."""
    return np.random.default_rng([int(master_seed), int(rep)])


def _one_rep(args):
    cfg, spec, est_cfg, master_seed, rep = args
    rng = replication_rng(master_seed, rep)
    ds = draw_dataset(cfg, rng)
    noise = draw_noise(spec, ds.n, rng) if spec.noise_columns else None
    fold_seed = int(rng.integers(2 ** 63 - 1))
    rep_cfg = replace(est_cfg, seed=fold_seed)
    rep_report = estimate(ds, spec, rep_cfg, noise=noise)
    hit = rep_report.ci.contains(TRUE_THETA) if rep_report.ci is not None else False
    return (rep_report.theta_naive, rep_report.theta_sig, rep_report.theta_mbdml, hit,
            rep_report.s_used if rep_report.s_used is not None else float("nan"))


def default_mc_config(smoothing: Optional[SmoothingConfig] = None) -> EstimatorConfig:
    """Estimator settings for the synthetic design: known Logistic(0, 1) moments."""
    smoothing = smoothing or SmoothingConfig()
    c4 = smoothing.c4 if smoothing.c4 is not None else 0.25
    return EstimatorConfig(smoothing=replace(smoothing, c4=c4),
                           known_moments=CateMoments.known_truth())


def run_replications(cfg: DgpConfig, spec: DictionarySpec, reps: int, seed: int,
                     est_cfg: Optional[EstimatorConfig] = None, spec_name: str = "custom",
                     workers: int = 1) -> McResults:
    if reps < 2:
        raise InvalidArgumentError(f"need at least 2 replications, got {reps}")
    est_cfg = est_cfg or default_mc_config()
    jobs = [(cfg, spec, est_cfg, seed, r) for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_one_rep, jobs, chunksize=max(1, reps // (4 * workers))))
    else:
        out = [_one_rep(j) for j in jobs]
    arr = np.array([o[:3] for o in out], dtype=float)
    return McResults(
        estimates={EstimatorKind.NAIVE: arr[:, 0], EstimatorKind.DML: arr[:, 1],
                   EstimatorKind.MBDML: arr[:, 2]},
        covered=np.array([o[3] for o in out], dtype=bool),
        seeds=tuple((seed, r) for r in range(reps)),
        spec_name=spec_name,
        smoothing_family=est_cfg.smoothing.family,
        s_used=np.array([o[4] for o in out]),
    )


def summaries(results: McResults) -> dict:
    out = {}
    for kind, values in results.estimates.items():
        covered = results.covered if kind is EstimatorKind.DML else None
        out[kind] = summarize(values, kind, results.spec_name, results.smoothing_family, covered)
    return out


def run_mc(cfg: DgpConfig, spec: DictionarySpec, smoothing: Optional[SmoothingConfig] = None,
           reps: int = 200, seed: int = 0, spec_name: str = "custom", workers: int = 1,
           est_cfg: Optional[EstimatorConfig] = None) -> dict:
    """McSummary per estimator kind; deterministic given ``seed``."""
    est_cfg = est_cfg or default_mc_config(smoothing)
    return summaries(run_replications(cfg, spec, reps, seed, est_cfg, spec_name, workers))


def emit_sampling_distribution(results: McResults, path) -> str:
    """Write per-replication estimates with normal Q-Q coordinates as CSV.

    Columns: kind, rep, value, qq_sample (sorted standardized value),
    qq_theory (normal quantile at (k - 0.5)/reps), truth.
    """
    if results is None or results.reps < 2:
        raise InvalidArgumentError("need at least 2 replications to write a sampling distribution")
    path = os.fspath(path)
    reps = results.reps
    theory = ndtri((np.arange(1, reps + 1) - 0.5) / reps)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "rep", "value", "qq_sample", "qq_theory", "truth"])
            for kind, values in results.estimates.items():
                v = np.asarray(values, dtype=float)
                sd = v.std()
                z = np.sort((v - v.mean()) / sd) if sd > 0 else np.zeros(reps)
                for r in range(reps):
                    w.writerow([kind.value, r, repr(float(v[r])), repr(float(z[r])),
                                repr(float(theory[r])), repr(TRUE_THETA)])
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}") from exc
    return path
