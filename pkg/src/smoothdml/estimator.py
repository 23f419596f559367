"""Cross-fitted debiased estimation of E[max(tau(X), 0)] with sigmoid smoothing.

Per fold l the outcome regressions are fit off-fold, one per arm. The Riesz
representer for arm k is b(z)'rho_k, where rho_k solves a Lasso problem whose
Gram matrix uses arm-k rows outside l and whose moment vector averages
b(z) * A_k(tau(z), s) over the other folds l'. The CATE inside A_k comes from a
regression fit on rows outside both l and l', so no row enters its own weight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import smoothing as sm
from .bias import BiasAwareCI, BiasBound, bias_bound, bias_bound_no_margin, build_ci
from .data import DEFAULT_FOLDS, Dataset, Family, FoldPlan, SmoothingConfig, make_fold_plan, \
    validate_dataset
from .errors import ConfigError, DegenerateDesignError, NumericError
from .features import DictionarySpec, draw_noise, expand, standardization
from .lasso import LassoFit, SolverOptions, lasso_regression, riesz_lasso
from .tuning import CateMoments, SmoothingChoice, choose_smoothing, estimate_cate_moments


@dataclass(frozen=True)
class Penalties:
    """Multipliers on lambda = sqrt(log(p)/n) and r = n^(-1/4), p the dictionary width."""

    regression: float = 1.0
    riesz: float = 1.0

    def __post_init__(self):
        if not (self.regression >= 0 and self.riesz >= 0):
            raise ConfigError("penalty multipliers must be nonnegative")

    def regression_penalty(self, p: int, n: int) -> float:
        return self.regression * math.sqrt(math.log(max(p, 2)) / n)

    def riesz_penalty(self, n: int) -> float:
        return self.riesz * n ** -0.25


@dataclass(frozen=True)
class EstimatorConfig:
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    n_folds: int = DEFAULT_FOLDS
    seed: int = 0
    design_seed: int = 0
    penalties: Penalties = field(default_factory=Penalties)
    solver: SolverOptions = field(default_factory=SolverOptions)
    level: float = 0.95
    known_moments: Optional[CateMoments] = None
    compute_naive: bool = True

    def __post_init__(self):
        if self.n_folds < 3:
            raise ConfigError(f"cross-fitting with two-level Riesz moments needs at least 3 folds, "
                              f"got {self.n_folds}")
        if not 0 < self.level < 1:
            raise ConfigError(f"level must lie in (0, 1), got {self.level}")


@dataclass(frozen=True, eq=False)
class Transform:
    """Frozen column means and sds; raw dictionary rows map to (raw - mean) / sd."""

    means: np.ndarray
    sds: np.ndarray

    def apply(self, raw):
        return (raw - self.means) / self.sds


@dataclass(frozen=True, eq=False)
class FoldFit:
    gamma1: np.ndarray
    gamma2: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    transform: Transform
    solves: tuple = ()

    @property
    def converged(self) -> bool:
        return all(f.converged for f in self.solves)


@dataclass(frozen=True, eq=False)
class ScoreSet:
    psi: np.ndarray
    plugin: np.ndarray
    correction: np.ndarray
    tau_hat: np.ndarray
    alpha: np.ndarray


@dataclass(frozen=True, eq=False)
class EstimateReport:
    theta_sig: float
    theta_naive: Optional[float]
    theta_mbdml: float
    se_formula: Optional[float]
    se_empirical: float
    bias_bound: float
    ci: Optional[BiasAwareCI]
    share_positive: float
    s_used: Optional[float]
    smoothing: SmoothingConfig
    moments: CateMoments
    fold_count: int
    seed: int
    n: int
    p: int
    choice: Optional[SmoothingChoice] = None
    bound: Optional[BiasBound] = None
    max_abs_alpha: float = 0.0
    all_converged: bool = True
    scores: Optional[ScoreSet] = None
    fits: tuple = ()
    plan: Optional[FoldPlan] = None


class _CrossFit:
    """Shared state for one dataset: raw dictionary, fold plan and cached fits."""

    def __init__(self, ds: Dataset, plan: FoldPlan, spec: DictionarySpec, penalties: Penalties,
                 opts: SolverOptions, design_seed=0, noise=None):
        if plan.n != ds.n:
            raise ConfigError(f"fold plan covers {plan.n} rows, dataset has {ds.n}")
        spec.check(ds.q)
        self.ds = ds
        self.plan = plan
        self.spec = spec
        self.opts = opts
        if noise is None:
            noise = draw_noise(spec, ds.n, design_seed)
        self.raw = expand(spec, ds.z, noise)
        self.p = self.raw.shape[1]
        self.lam = penalties.regression_penalty(self.p, ds.n)
        self.r = penalties.riesz_penalty(ds.n)
        self.unpenalized = (0,) if spec.include_intercept else ()
        self.treated = ds.d == 1
        self._fold_fits = {}
        self._pair_tau = {}
        self._folds = plan.folds()

    def transform(self, rows) -> Transform:
        means, sds = standardization(self.spec, self.raw[rows])
        return Transform(means, sds)

    def _arm_fits(self, rows_mask, X):
        fits = []
        for arm in (self.treated, ~self.treated):
            sel = rows_mask & arm
            if not sel.any():
                raise DegenerateDesignError("an arm has no observations in a fitting subsample")
            fits.append(lasso_regression(X[sel], self.ds.y[sel], self.lam, self.opts,
                                         unpenalized=self.unpenalized))
        return fits

    def regression_fold(self, ell):
        """(transform, X on all rows, gamma1 fit, gamma2 fit) fit outside fold ``ell``."""
        if ell not in self._fold_fits:
            out = self.plan.assignments != ell
            tr = self.transform(out)
            X = tr.apply(self.raw)
            f1, f2 = self._arm_fits(out, X)
            self._fold_fits[ell] = (tr, X, f1, f2)
        return self._fold_fits[ell]

    def pair_tau(self, a, b):
        """CATE on folds a and b from regressions fit outside both; NaN elsewhere."""
        key = (min(a, b), max(a, b))
        if key not in self._pair_tau:
            a_rows, b_rows = self._folds[key[0]], self._folds[key[1]]
            outside = np.ones(self.ds.n, dtype=bool)
            outside[a_rows] = False
            outside[b_rows] = False
            X = self.transform(outside).apply(self.raw)
            f1, f2 = self._arm_fits(outside, X)
            tau = np.full(self.ds.n, np.nan)
            rows = np.concatenate([a_rows, b_rows])
            tau[rows] = X[rows] @ (f1.coefficients - f2.coefficients)
            self._pair_tau[key] = tau
        return self._pair_tau[key]

    def riesz_moments(self, ell, s, family):
        _, X, _, _ = self.regression_fold(ell)
        out = self.plan.assignments != ell
        n_out = int(out.sum())
        M1 = np.zeros(self.p)
        for other in range(self.plan.n_folds):
            if other == ell:
                continue
            rows = self._folds[other]
            w = np.atleast_1d(sm.weight(self.pair_tau(ell, other)[rows], s, family))
            M1 += X[rows].T @ w
        M1 /= n_out
        X1 = X[out & self.treated]
        X2 = X[out & ~self.treated]
        G1 = X1.T @ X1 / n_out
        G2 = X2.T @ X2 / n_out
        return G1, M1, G2, -M1

    def fold_fit(self, ell, s, family) -> FoldFit:
        tr, _, f1, f2 = self.regression_fold(ell)
        G1, M1, G2, M2 = self.riesz_moments(ell, s, family)
        r1 = riesz_lasso(G1, M1, self.r, self.opts)
        r2 = riesz_lasso(G2, M2, self.r, self.opts)
        return FoldFit(f1.coefficients, f2.coefficients, r1.coefficients, r2.coefficients, tr,
                       (f1, f2, r1, r2))

    def cate(self) -> np.ndarray:
        tau = np.empty(self.ds.n)
        for ell, rows in enumerate(self._folds):
            _, X, f1, f2 = self.regression_fold(ell)
            tau[rows] = X[rows] @ (f1.coefficients - f2.coefficients)
        return tau


def _check_folds(plan: FoldPlan):
    if plan.n_folds < 3:
        raise ConfigError(f"two-level Riesz moments need at least 3 folds, got {plan.n_folds}")


def fit_fold(ds: Dataset, plan: FoldPlan, ell: int, spec: DictionarySpec, s: float,
             penalties: Penalties = Penalties(), family=Family.SIGMOID,
             opts: SolverOptions = SolverOptions(), design_seed=0) -> FoldFit:
    _check_folds(plan)
    return _CrossFit(ds, plan, spec, penalties, opts, design_seed).fold_fit(ell, s, Family(family))


def build_riesz_moments(ds: Dataset, plan: FoldPlan, ell: int, spec: DictionarySpec, s: float,
                        penalties: Penalties = Penalties(), family=Family.SIGMOID,
                        opts: SolverOptions = SolverOptions(), design_seed=0):
    """(G1, M1, G2, M2) for fold ``ell``, in that fold's standardized basis."""
    _check_folds(plan)
    cf = _CrossFit(ds, plan, spec, penalties, opts, design_seed)
    return cf.riesz_moments(ell, s, Family(family))


def cate_plugins(ds: Dataset, plan: FoldPlan, spec: DictionarySpec,
                 penalties: Penalties = Penalties(), opts: SolverOptions = SolverOptions(),
                 design_seed=0) -> np.ndarray:
    """tau_hat(z_i) from the regressions fit outside observation i's fold."""
    return _CrossFit(ds, plan, spec, penalties, opts, design_seed).cate()


def naive_estimate(ds: Dataset, spec: DictionarySpec, penalties: Penalties = Penalties(),
                   opts: SolverOptions = SolverOptions(), design_seed=0, noise=None) -> float:
    """Full-sample Lasso plug-in mean of max(tau_hat, 0); no cross-fitting, no correction."""
    if noise is None:
        noise = draw_noise(spec, ds.n, design_seed)
    raw = expand(spec, ds.z, noise)
    means, sds = standardization(spec, raw)
    X = (raw - means) / sds
    lam = penalties.regression_penalty(X.shape[1], ds.n)
    unpen = (0,) if spec.include_intercept else ()
    t = ds.d == 1
    g1 = lasso_regression(X[t], ds.y[t], lam, opts, unpenalized=unpen).coefficients
    g2 = lasso_regression(X[~t], ds.y[~t], lam, opts, unpenalized=unpen).coefficients
    return float(np.mean(sm.m_indicator(X @ (g1 - g2))))


def aipw_ate(ds: Dataset, plan: FoldPlan, spec: DictionarySpec,
             penalties: Penalties = Penalties(), opts: SolverOptions = SolverOptions(),
             design_seed=0) -> float:
    """Cross-fitted AIPW average treatment effect.

    Uses the same fold regressions as the main estimator and, for each fold,
    the treated share outside that fold as the propensity.
    """
    cf = _CrossFit(ds, plan, spec, penalties, opts, design_seed)
    psi = np.empty(ds.n)
    for ell, rows in enumerate(plan.folds()):
        _, X, f1, f2 = cf.regression_fold(ell)
        pi = float(ds.d[plan.assignments != ell].mean())
        g1 = X[rows] @ f1.coefficients
        g2 = X[rows] @ f2.coefficients
        d, y = ds.d[rows], ds.y[rows]
        psi[rows] = g1 - g2 + d * (y - g1) / pi - (1 - d) * (y - g2) / (1 - pi)
    return float(psi.mean())


def _resolve_smoothing(smoothing: SmoothingConfig, moments: CateMoments, n: int):
    if smoothing.family is Family.INDICATOR:
        return None, None
    if smoothing.s is not None:
        return float(smoothing.s), None
    choice = choose_smoothing(moments, n, smoothing.alpha4, smoothing.c4, smoothing.margin_assumed)
    return choice.s_star, choice


def _bound(smoothing: SmoothingConfig, moments: CateMoments, s: float) -> BiasBound:
    if not smoothing.margin_assumed:
        return bias_bound_no_margin(s)
    c4 = moments.p_tau if smoothing.c4 is None else smoothing.c4
    return bias_bound(c4, smoothing.alpha4, s, smoothing.c6, smoothing.c8)


def estimate(ds: Dataset, spec: DictionarySpec, config: EstimatorConfig = EstimatorConfig(),
             noise=None) -> EstimateReport:
    """Debiased smoothed estimate plus the naive and max-bias-shifted comparators."""
    validate_dataset(ds, config.n_folds)
    plan = make_fold_plan(ds.n, config.n_folds, config.seed)
    cf = _CrossFit(ds, plan, spec, config.penalties, config.solver, config.design_seed, noise)
    family = config.smoothing.family

    tau = cf.cate()
    moments = config.known_moments or estimate_cate_moments(tau)
    s, choice = _resolve_smoothing(config.smoothing, moments, ds.n)

    plugin = np.empty(ds.n)
    correction = np.empty(ds.n)
    alpha = np.empty(ds.n)
    fits = []
    for ell, rows in enumerate(plan.folds()):
        fit = cf.fold_fit(ell, s, family)
        fits.append(fit)
        _, X, _, _ = cf.regression_fold(ell)
        Xr = X[rows]
        d = ds.d[rows].astype(float)
        y = ds.y[rows]
        a1 = d * (Xr @ fit.rho1)
        a2 = (1.0 - d) * (Xr @ fit.rho2)
        plugin[rows] = sm.moment(tau[rows], s, family)
        correction[rows] = a1 * (y - Xr @ fit.gamma1) + a2 * (y - Xr @ fit.gamma2)
        alpha[rows] = a1 + a2
    psi = plugin + correction
    if not np.isfinite(psi).all():
        raise NumericError("non-finite debiased scores")

    theta = float(psi.mean())
    se_emp = float(psi.std() / math.sqrt(ds.n))
    if s is None:
        bound, ci, se_formula, bias_up = None, None, None, 0.0
    else:
        bound = _bound(config.smoothing, moments, s)
        ci = build_ci(theta, s, ds.n, moments, bound, config.level)
        se_formula, bias_up = ci.se, bound.upper

    naive = None
    if config.compute_naive:
        naive = naive_estimate(ds, spec, config.penalties, config.solver, config.design_seed,
                               noise)
    return EstimateReport(
        theta_sig=theta,
        theta_naive=naive,
        theta_mbdml=theta + bias_up,
        se_formula=se_formula,
        se_empirical=se_emp,
        bias_bound=bias_up,
        ci=ci,
        share_positive=float(np.mean(psi > 0)),
        s_used=s,
        smoothing=config.smoothing,
        moments=moments,
        fold_count=plan.n_folds,
        seed=config.seed,
        n=ds.n,
        p=cf.p,
        choice=choice,
        bound=bound,
        max_abs_alpha=float(np.abs(alpha).max()),
        all_converged=all(f.converged for f in fits),
        scores=ScoreSet(psi, plugin, correction, tau, alpha),
        fits=tuple(fits),
        plan=plan,
    )
