import numpy as np
import pytest
from scipy.special import expit

from smoothdml import smoothing as sm
from smoothdml.data import Dataset, Family, FoldPlan, SmoothingConfig, make_fold_plan
from smoothdml.errors import ConfigError, DegenerateDesignError
from smoothdml.estimator import (EstimatorConfig, Penalties, aipw_ate, build_riesz_moments,
                                 cate_plugins, estimate, fit_fold, naive_estimate)
from smoothdml.features import DictionarySpec, expand, get_preset
from smoothdml.lasso import SolverOptions
from smoothdml.simulation import DgpConfig, default_mc_config, draw_dataset, true_cate

SIM1 = get_preset("sim1")


@pytest.fixture(scope="module")
def sim_draw():
    return draw_dataset(DgpConfig(n=2000, seed=1))


@pytest.fixture(scope="module")
def sim_report(sim_draw):
    return estimate(sim_draw, SIM1, default_mc_config())


def test_score_decomposition_is_exact(sim_report):
    sc = sim_report.scores
    assert np.array_equal(sc.psi, sc.plugin + sc.correction)
    assert sim_report.theta_mbdml == sim_report.theta_sig + sim_report.bias_bound
    assert sim_report.share_positive == np.count_nonzero(sc.psi > 0) / sim_report.n
    assert sim_report.theta_sig == pytest.approx(sc.psi.mean(), abs=1e-15)
    assert sim_report.se_empirical == pytest.approx(sc.psi.std() / np.sqrt(2000), rel=1e-12)


def test_fold_fits_are_finite_and_converged(sim_report):
    assert sim_report.all_converged
    assert len(sim_report.fits) == sim_report.fold_count == 5
    for fit in sim_report.fits:
        for v in (fit.gamma1, fit.gamma2, fit.rho1, fit.rho2):
            assert v.shape == (sim_report.p,) and np.isfinite(v).all()
        assert fit.converged


def test_report_fields(sim_report):
    r = sim_report
    assert r.s_used == pytest.approx(0.924655 * 2000 ** (1 / 6), rel=1e-5)
    assert r.ci.lo < r.theta_sig < r.ci.hi
    assert r.se_formula == r.ci.se
    assert 0 <= r.share_positive <= 1
    assert r.theta_naive is not None and np.isfinite(r.theta_naive)
    assert r.max_abs_alpha > 0


def test_plugin_sandwich(sim_report):
    tau, s = sim_report.scores.tau_hat, sim_report.s_used
    assert np.all(sm.m_sig(tau, s) <= sm.m_indicator(tau))
    assert np.all(sm.m_indicator(tau) <= sm.m_lse(tau, s))


def test_gram_matrices_are_psd(sim_draw):
    plan = make_fold_plan(sim_draw.n, 5, 0)
    G1, M1, G2, M2 = build_riesz_moments(sim_draw, plan, 2, SIM1, 3.0)
    for G in (G1, G2):
        assert np.array_equal(G, G.T)
        assert np.linalg.eigvalsh(G).min() > -1e-10
    assert np.array_equal(M2, -M1)


def test_constant_dictionary_hand_oracle():
    rng = np.random.default_rng(4)
    n, s = 300, 2.0
    z = rng.normal(size=(n, 1))
    d = (rng.random(n) < 0.4).astype(int)
    y = 0.7 * d + rng.normal(size=n)
    ds = Dataset(y, d, z)
    plan = make_fold_plan(n, 3, 9)
    spec = DictionarySpec(include_intercept=True)
    pen = Penalties(regression=1.0, riesz=0.0)
    ell = 0
    out = plan.assignments != ell
    # pair CATE with an intercept-only model: difference of arm means outside both folds
    weights = []
    for other in (1, 2):
        both_out = (plan.assignments != ell) & (plan.assignments != other)
        tau = y[both_out & (d == 1)].mean() - y[both_out & (d == 0)].mean()
        h = s * tau
        a1 = expit(h) + h * expit(h) * expit(-h)
        weights.append(np.full(np.count_nonzero(plan.assignments == other), a1))
    mean_a1 = np.concatenate(weights).sum() / out.sum()
    share = np.mean(d[out] == 1)
    G1, M1, G2, M2 = build_riesz_moments(ds, plan, ell, spec, s, pen)
    assert G1[0, 0] == pytest.approx(share, abs=1e-14)
    assert M1[0] == pytest.approx(mean_a1, abs=1e-14)
    fit = fit_fold(ds, plan, ell, spec, s, pen)
    assert fit.rho1[0] == pytest.approx(mean_a1 / share, rel=1e-8)
    assert fit.rho2[0] == pytest.approx(-mean_a1 / (1 - share), rel=1e-8)


def test_small_s_gives_half_column_means(sim_draw):
    s = 1e-8
    plan = make_fold_plan(sim_draw.n, 5, 0)
    G1, M1, _, M2 = build_riesz_moments(sim_draw, plan, 0, SIM1, s)
    fit = fit_fold(sim_draw, plan, 0, SIM1, s)
    out = plan.assignments != 0
    X = fit.transform.apply(expand(SIM1, sim_draw.z))[out]
    half = 0.5 * X.mean(axis=0)
    # |A1(h) - 1/2| <= |h| / 2, and the pair CATEs stay well below 50 in magnitude
    bound = s / 2 * 50 * np.abs(X).mean(axis=0)
    assert np.all(np.abs(M1 - half) <= bound)
    assert np.all(np.abs(M2 + half) <= bound)


def test_tall_dictionary_still_solves(tiny_dataset):
    spec = DictionarySpec(power_terms=((0, 10), (1, 10)), interactions=((0, 1),),
                          noise_columns=50)
    assert spec.dimension > tiny_dataset.n
    rep = estimate(tiny_dataset, spec, EstimatorConfig(smoothing=SmoothingConfig(s=1.0), n_folds=3))
    assert np.isfinite(rep.theta_sig) and np.isfinite(rep.scores.psi).all()


def test_identical_arms_give_null_cate():
    rng = np.random.default_rng(8)
    n = 600
    z = rng.normal(size=(n, 2))
    d = np.tile([0, 1], n // 2)
    ds = Dataset(z[:, 0].copy(), d, z)
    spec = DictionarySpec(power_terms=((0, 1), (1, 1)))
    pen = Penalties(regression=0.01)
    plan = make_fold_plan(n, 5, 1)
    fit = fit_fold(ds, plan, 0, spec, 1.0, pen)
    sd = fit.transform.sds[1]
    assert fit.gamma1[1] / sd == pytest.approx(1.0, abs=0.02)
    assert fit.gamma2[1] / sd == pytest.approx(1.0, abs=0.02)
    tau = cate_plugins(ds, plan, spec, pen)
    assert np.abs(tau).max() < 0.02


def test_within_fold_permutation_leaves_cate_unchanged(sim_small):
    plan = make_fold_plan(sim_small.n, 5, 3)
    tau = cate_plugins(sim_small, plan, SIM1)
    perm = np.random.default_rng(0).permutation(sim_small.n)
    ds_p = Dataset(sim_small.y[perm], sim_small.d[perm], sim_small.z[perm])
    plan_p = FoldPlan(plan.assignments[perm], plan.n_folds, plan.seed)
    assert np.allclose(cate_plugins(ds_p, plan_p, SIM1), tau[perm], atol=1e-9, rtol=0)


def test_cate_tracks_truth(sim_report, sim_draw):
    tau = sim_report.scores.tau_hat
    assert np.corrcoef(tau, true_cate(sim_draw.z))[0, 1] > 0.4
    # a low-order dictionary shrinks the logistic spread well below its population sd
    assert tau.std() < np.pi / np.sqrt(3)


def test_null_effect_coverage():
    # moderate fixed s; the rule-of-thumb s blows up when the CATE estimates are near zero
    hits, thetas = [], []
    for r in range(50):
        rng = np.random.default_rng([5, r])
        n = 1000
        z = rng.exponential(3.0, size=(n, 6))
        d = (rng.random(n) < 0.5).astype(int)
        y = np.log(z[:, 0]) + rng.normal(0, 1, n)
        rep = estimate(Dataset(y, d, z), SIM1, EstimatorConfig(
            smoothing=SmoothingConfig(s=1.0), seed=r, compute_naive=False))
        hits.append(rep.ci.contains(0.0))
        thetas.append(rep.theta_sig)
    assert np.mean(hits) >= 0.9
    assert abs(np.mean(thetas)) < 3 * np.std(thetas) / np.sqrt(50)


def test_orthogonality_signature():
    tstats = []
    for r in range(20):
        ds = draw_dataset(DgpConfig(n=1000, seed=100 + r))
        rep = estimate(ds, SIM1, default_mc_config())
        c = rep.scores.correction
        tstats.append(c.mean() / (c.std() / np.sqrt(ds.n)))
    assert np.all(np.abs(tstats) < 3)


def test_half_ate_limit_with_empirical_se():
    ds = draw_dataset(DgpConfig(n=5000, seed=2))
    cfg = EstimatorConfig(smoothing=SmoothingConfig(s=1e-8), seed=4, compute_naive=False)
    rep = estimate(ds, SIM1, cfg)
    ate = aipw_ate(ds, rep.plan, SIM1)
    assert abs(rep.theta_sig - ate / 2) < 3 * rep.se_empirical


def test_determinism(sim_small):
    cfg = default_mc_config()
    a = estimate(sim_small, SIM1, cfg)
    b = estimate(sim_small, SIM1, cfg)
    assert np.array_equal(a.scores.psi, b.scores.psi)
    assert a.theta_naive == b.theta_naive


def test_indicator_family_has_no_interval(sim_small):
    rep = estimate(sim_small, SIM1, EstimatorConfig(smoothing=SmoothingConfig(family="indicator")))
    assert rep.s_used is None and rep.ci is None and rep.se_formula is None
    assert rep.bias_bound == 0.0 and rep.theta_mbdml == rep.theta_sig


def test_lse_plugins_dominate_sigmoid(sim_small):
    s = 3.0
    sig = estimate(sim_small, SIM1, EstimatorConfig(smoothing=SmoothingConfig(s=s)))
    lse = estimate(sim_small, SIM1, EstimatorConfig(smoothing=SmoothingConfig(family="lse", s=s)))
    assert np.all(lse.scores.plugin >= sig.scores.plugin)


def test_naive_uses_full_sample(sim_small):
    v = naive_estimate(sim_small, SIM1)
    assert v >= 0 and np.isfinite(v)


def test_fold_errors(sim_small):
    with pytest.raises(ConfigError):
        EstimatorConfig(n_folds=2)
    plan2 = make_fold_plan(sim_small.n, 2, 0)
    with pytest.raises(ConfigError):
        build_riesz_moments(sim_small, plan2, 0, SIM1, 1.0)
    with pytest.raises(ConfigError):
        Penalties(regression=-1)


def test_arm_empty_outside_fold():
    n = 90
    rng = np.random.default_rng(0)
    plan = make_fold_plan(n, 3, 0)
    d = (plan.assignments == 0).astype(int)
    ds = Dataset(rng.normal(size=n), d, rng.normal(size=(n, 1)))
    with pytest.raises(DegenerateDesignError):
        fit_fold(ds, plan, 0, DictionarySpec(power_terms=((0, 1),)), 1.0)
