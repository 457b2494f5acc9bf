"""Oracle tests: quadrature posteriors, SNIS, ABC, and nested-quadrature EIG."""

import math

import numpy as np
import pytest

from voed.estimators import generate_pool
from voed.flows import build_flow, flow_sample
from voed.models import (
    ExplicitModel,
    Normal,
    PriorSpec,
    _gauss_loglik,
    case1_model,
    case4_model,
    lingauss_eig,
    lingauss_model,
    lingauss_posterior,
    sample_prior,
)
from voed.optimize import TrainConfig, train_lower
from voed.reference import (
    abc_rejection,
    check_grid_coverage,
    eig_quadrature,
    expected_kl_quadrature,
    flow_posterior_log_density,
    grid_posterior,
    lower_bound_quadrature,
    snis_posterior_samples,
)

T_GRID = (-8.0, 8.0, 1601)
Y_GRID = (-8.0, 8.0, 801)


def flat_model(n_y=1):
    """Likelihood independent of theta."""
    return ExplicitModel(
        n_y=n_y,
        g=lambda theta, d: np.zeros(np.asarray(theta).shape[:-1] + (n_y,)),
        noise_logpdf=lambda y, mean, theta: _gauss_loglik(y, mean, 1.0),
        noise_sample=lambda mean, theta, rng: mean + rng.standard_normal(mean.shape),
        name="flat",
    )


def gaussian_q(mean_fn, std):
    def log_q_fn(theta_vals, y_val):
        return _gauss_loglik(
            np.asarray(theta_vals)[:, None], mean_fn(float(np.atleast_1d(y_val)[0])), std
        )

    return log_q_fn


# -- grid posterior ----------------------------------------------------------------


def test_grid_posterior_matches_conjugate_closed_form():
    prior, model = lingauss_model()
    y = 0.7
    pg = grid_posterior(model, prior, np.array([1.0]), [y], [(-8.0, 8.0, 801)])
    mean, var = pg.mean_var(0)
    m_true, s_true = lingauss_posterior(1.0, 1.0, 1.0, y)
    assert mean == pytest.approx(m_true, abs=1e-3)
    assert math.sqrt(var) == pytest.approx(s_true, abs=1e-3)


def test_grid_posterior_flat_likelihood_returns_prior():
    prior = PriorSpec([Normal(0.3, 0.9)])
    pg = grid_posterior(flat_model(), prior, np.array([0.0]), [0.1], [(-7.0, 7.6, 1201)])
    ax = pg.axes[0]
    prior_pdf = np.exp(-0.5 * ((ax - 0.3) / 0.9) ** 2) / (0.9 * math.sqrt(2 * math.pi))
    np.testing.assert_allclose(pg.density, prior_pdf, atol=1e-8)


def test_grid_posterior_case1_theta3_marginal_is_bimodal():
    # theta3 enters the mean through |theta3|, so informative draws split the
    # marginal into two modes
    prior, model = case1_model()
    r = np.random.default_rng(0)
    th = sample_prior(prior, 1, r)
    y = model.simulate(th, np.array([1.0]), r)[0]
    spec = [(-1.1, 2.1, 49), (-3.4, 4.0, 49), (-4.0, 5.0, 161)]
    pg = grid_posterior(model, prior, np.array([1.0]), y, spec)
    ax, dens = pg.marginal(2)
    inner = dens[1:-1]
    peaks = (
        np.flatnonzero((inner > dens[:-2]) & (inner > dens[2:]) & (inner > 0.05 * dens.max())) + 1
    )
    assert len(peaks) == 2
    assert ax[peaks[0]] < 0 < ax[peaks[1]]


def test_grid_posterior_marginal_normalized():
    prior, model = lingauss_model()
    pg = grid_posterior(model, prior, np.array([1.0]), [0.2], [(-8.0, 8.0, 401)])
    ax, dens = pg.marginal(0)
    assert np.trapezoid(dens, ax) == pytest.approx(1.0, abs=1e-9)


def test_grid_posterior_dimension_and_coverage_errors():
    prior, model = lingauss_model()
    with pytest.raises(ValueError, match="at most 3"):
        grid_posterior(model, prior, 1.0, [0.0], [(-5, 5, 11)] * 4)
    with pytest.raises(ValueError, match="one \\(lo, hi, n\\)"):
        grid_posterior(model, prior, 1.0, [0.0], [(-5, 5, 11), (-5, 5, 11)])
    with pytest.raises(ValueError, match="prior mass"):
        grid_posterior(model, prior, 1.0, [0.0], [(-2.0, 2.0, 101)])
    with pytest.raises(ValueError, match="prior mass"):
        check_grid_coverage(PriorSpec(mvn_mean=[0.0], mvn_cov=[[1.0]]), [-2.0], [2.0])


# -- SNIS --------------------------------------------------------------------------


def test_snis_flat_likelihood_uniform_weights():
    prior = PriorSpec([Normal(0.0, 1.0)])
    res = snis_posterior_samples(flat_model(), prior, np.array([0.0]), [0.0], 400, seed=1)
    np.testing.assert_allclose(res.weights, 1.0 / 400, atol=1e-15)
    assert res.ess == pytest.approx(400.0)
    assert not res.low_ess


def test_snis_conjugate_posterior_mean():
    prior, model = lingauss_model()
    y = 0.9
    res = snis_posterior_samples(model, prior, np.array([1.0]), [y], 20000, seed=2)
    m_true, _ = lingauss_posterior(1.0, 1.0, 1.0, y)
    wmean = float(res.mean()[0])
    wstd = float(np.sqrt(res.weights @ (res.theta[:, 0] - wmean) ** 2))
    assert abs(wmean - m_true) <= 4 * wstd / math.sqrt(res.ess)


def test_snis_low_ess_flagged():
    prior, model = lingauss_model(1.0, 0.001)
    res = snis_posterior_samples(model, prior, np.array([1.0]), [0.5], 5000, seed=3)
    assert res.low_ess
    assert res.ess < 50


def test_snis_agrees_with_grid_marginals_on_case1():
    prior, model = case1_model()
    r = np.random.default_rng(0)
    th = sample_prior(prior, 1, r)
    y = model.simulate(th, np.array([1.0]), r)[0]
    spec = [(-1.1, 2.1, 61), (-3.4, 4.0, 61), (-4.0, 5.0, 61)]
    pg = grid_posterior(model, prior, np.array([1.0]), y, spec)
    res = snis_posterior_samples(model, prior, np.array([1.0]), y, 100_000, seed=4)
    for dim in range(3):
        ax, dens = pg.marginal(dim)
        cell = ax[1] - ax[0]
        cdf_grid = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * cell)])
        cdf_grid /= cdf_grid[-1]
        order = np.argsort(res.theta[:, dim])
        sorted_theta = res.theta[order, dim]
        cum_w = np.cumsum(res.weights[order])
        cdf_snis = cum_w[np.clip(np.searchsorted(sorted_theta, ax, side="right") - 1, 0, None)]
        cdf_snis = np.where(np.searchsorted(sorted_theta, ax, side="right") == 0, 0.0, cdf_snis)
        w1 = np.trapezoid(np.abs(cdf_grid - cdf_snis), ax)
        assert w1 < 2 * cell


# -- ABC rejection -----------------------------------------------------------------


def shift_simulator(theta, d, rng):
    return theta + 0.2 * rng.standard_normal(theta.shape)


def test_abc_infinite_tolerance_returns_prior():
    prior = PriorSpec([Normal(0.4, 1.1)])
    res = abc_rejection(shift_simulator, prior, None, [0.0], 1e9, 4000, seed=5)
    assert res.acceptance_rate == 1.0
    assert abs(res.theta.mean() - 0.4) <= 4 * 1.1 / math.sqrt(4000)


def test_abc_variance_tightens_with_tolerance():
    prior = PriorSpec([Normal(0.0, 1.0)])
    spreads = []
    for eps in (3.0, 1.0, 0.3):
        res = abc_rejection(
            shift_simulator, prior, None, [0.0], eps, 600, seed=6, max_proposals=400_000
        )
        spreads.append(res.theta.std())
    assert spreads[0] > spreads[1] > spreads[2]


def test_abc_zero_acceptance_raises():
    prior = PriorSpec([Normal(0.0, 1.0)])
    with pytest.raises(RuntimeError, match="tolerance"):
        abc_rejection(shift_simulator, prior, None, [100.0], 1e-9, 10, seed=7, max_proposals=5000)
    with pytest.raises(ValueError):
        abc_rejection(shift_simulator, prior, None, [0.0], -1.0, 10, seed=7)


def test_abc_cloud_overlaps_flow_posterior_on_population_model():
    # integration check: simulator-only posterior from a trained flow against
    # ABC rejection at the four-observation optimal schedule
    d_star = np.array([13.7, 19.2, 24.8, 32.7])
    prior, model = case4_model(4)
    pool = generate_pool(model, prior, d_star, 8000, 3000, seed=51)
    flow = build_flow(2, 4, T=4, widths=[16, 16], seed=3)
    cfg = TrainConfig(
        n_opt=8000, n_eval=3000, n_batch=2048, epochs=51, lr0=1e-2, T=4, widths=(16, 16)
    )
    train_lower(pool, flow, prior, cfg)

    rng = np.random.default_rng(99)
    y_obs = model.simulate(np.array([[0.246, 0.000136]]), d_star, rng)[0]
    cloud_flow = flow_sample(flow, y_obs, 2000, np.random.default_rng(7))

    eps = float(np.quantile(np.sqrt(((pool.y - y_obs) ** 2).sum(axis=1)), 0.03))
    abc = abc_rejection(model, prior, d_star, y_obs, eps, 800, seed=13, max_proposals=40_000)
    pooled = np.sqrt(0.5 * (cloud_flow.std(axis=0) ** 2 + abc.theta.std(axis=0) ** 2))
    diff = np.abs(cloud_flow.mean(axis=0) - abc.theta.mean(axis=0)) / pooled
    assert np.all(diff < 0.5)


# -- nested quadrature -------------------------------------------------------------


def test_expected_kl_zero_for_true_posterior():
    prior, model = lingauss_model()

    def true_post(theta_vals, y_val):
        m, s = lingauss_posterior(1.0, 1.0, 1.0, float(np.atleast_1d(y_val)[0]))
        return _gauss_loglik(np.asarray(theta_vals)[:, None], m, s)

    val = expected_kl_quadrature(true_post, model, prior, np.array([1.0]), T_GRID, Y_GRID)
    assert abs(val) < 1e-6


def test_eig_quadrature_matches_closed_form():
    prior, model = lingauss_model()
    val = eig_quadrature(model, prior, np.array([1.0]), T_GRID, Y_GRID)
    assert val == pytest.approx(lingauss_eig(1.0, 1.0, 1.0), abs=1e-6)


def test_gap_identity_bound_plus_kl_equals_eig():
    # EIG - U_L = expected KL, checked with a deliberately misfit q
    prior, model = lingauss_model()

    def mean_fn(y):
        return lingauss_posterior(1.0, 1.0, 1.0, y)[0]

    q = gaussian_q(mean_fn, 1.2 * lingauss_posterior(1.0, 1.0, 1.0, 0.0)[1])
    d = np.array([1.0])
    eig = eig_quadrature(model, prior, d, T_GRID, Y_GRID)
    u_l = lower_bound_quadrature(q, model, prior, d, T_GRID, Y_GRID)
    e_kl = expected_kl_quadrature(q, model, prior, d, T_GRID, Y_GRID)
    assert e_kl >= 0
    assert (eig - u_l) == pytest.approx(e_kl, abs=1e-4)


def test_bound_ordering_anti_monotone_with_kl():
    prior, model = lingauss_model()
    s_post = lingauss_posterior(1.0, 1.0, 1.0, 0.0)[1]

    def mean_fn(y):
        return lingauss_posterior(1.0, 1.0, 1.0, y)[0]

    d = np.array([1.0])
    q_good = gaussian_q(mean_fn, 1.05 * s_post)
    q_bad = gaussian_q(mean_fn, 1.5 * s_post)
    kl_good = expected_kl_quadrature(q_good, model, prior, d, T_GRID, Y_GRID)
    kl_bad = expected_kl_quadrature(q_bad, model, prior, d, T_GRID, Y_GRID)
    ul_good = lower_bound_quadrature(q_good, model, prior, d, T_GRID, Y_GRID)
    ul_bad = lower_bound_quadrature(q_bad, model, prior, d, T_GRID, Y_GRID)
    assert kl_good < kl_bad
    assert ul_good > ul_bad


def test_expected_kl_nonnegative_for_misfit_families():
    prior, model = lingauss_model()
    d = np.array([1.0])

    def mean_fn(y):
        return lingauss_posterior(1.0, 1.0, 1.0, y)[0]

    s_post = lingauss_posterior(1.0, 1.0, 1.0, 0.0)[1]
    for shift, scale in [(0.0, 0.7), (0.3, 1.0), (-0.5, 1.4), (0.1, 0.9), (0.0, 2.0)]:
        q = gaussian_q(lambda y, s=shift: mean_fn(y) + s, scale * s_post)
        assert expected_kl_quadrature(q, model, prior, d, T_GRID, Y_GRID) >= -1e-10


def test_flow_posterior_log_density_adapter():
    # identity-init flow over (theta, aux): marginal over aux is standard normal
    flow = build_flow(2, 1, T=2, widths=[8], seed=0)
    log_q_fn = flow_posterior_log_density(flow)
    t = np.linspace(-3.0, 3.0, 61)
    got = log_q_fn(t, 0.4)
    expect = -0.5 * t**2 - 0.5 * math.log(2 * math.pi)
    np.testing.assert_allclose(got, expect, atol=1e-6)
    with pytest.raises(ValueError, match="n_theta = 2"):
        flow_posterior_log_density(build_flow(3, 1, T=1, widths=[4], seed=0))
