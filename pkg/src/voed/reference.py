"""Validation oracles independent of the estimator stack.

Grid-quadrature posteriors for up to three parameters, self-normalized
importance sampling, ABC rejection for simulator-only models, and nested
quadrature for expected information gain, the posterior lower bound, and the
expected posterior KL divergence on one-dimensional problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .flows import ConditionalFlow, flow_log_prob
from .models import (
    Exponential,
    Laplace,
    Normal,
    PriorSpec,
    TruncNormal,
    log_prior,
    sample_prior,
)

MASS_TOL = 1e-6


def _component_interval_mass(comp, lo: float, hi: float) -> float:
    if isinstance(comp, Normal):
        return float(stats.norm.cdf(hi, comp.mu, comp.sigma) - stats.norm.cdf(lo, comp.mu, comp.sigma))
    if isinstance(comp, TruncNormal):
        a = max(lo, comp.lower)
        b = min(hi, comp.upper)
        if b <= a:
            return 0.0
        z = stats.norm.cdf(comp.upper, comp.mu, comp.sigma) - stats.norm.cdf(
            comp.lower, comp.mu, comp.sigma
        )
        return float(
            (stats.norm.cdf(b, comp.mu, comp.sigma) - stats.norm.cdf(a, comp.mu, comp.sigma)) / z
        )
    if isinstance(comp, Laplace):
        return float(
            stats.laplace.cdf(hi, comp.loc, comp.scale) - stats.laplace.cdf(lo, comp.loc, comp.scale)
        )
    if isinstance(comp, Exponential):
        return float(stats.expon.cdf(hi, scale=1 / comp.rate) - stats.expon.cdf(lo, scale=1 / comp.rate))
    raise TypeError(f"no interval mass for component {type(comp).__name__}")


def check_grid_coverage(prior: PriorSpec, lows, highs) -> None:
    """Union-bound check that the box keeps all but MASS_TOL of the prior."""
    lows = np.asarray(lows, float)
    highs = np.asarray(highs, float)
    if prior.components is not None:
        missing = sum(
            1.0 - _component_interval_mass(c, lo, hi)
            for c, lo, hi in zip(prior.components, lows, highs)
        )
    else:
        sd = np.sqrt(np.diag(prior.mvn_cov))
        missing = float(
            sum(
                1.0 - (stats.norm.cdf(hi, m, s) - stats.norm.cdf(lo, m, s))
                for m, s, lo, hi in zip(prior.mvn_mean, sd, lows, highs)
            )
        )
    if missing > MASS_TOL:
        raise ValueError(f"grid box misses about {missing:.2e} prior mass (> {MASS_TOL:g})")


def _axes_from_spec(grid_spec) -> list[np.ndarray]:
    axes = []
    for lo, hi, n in grid_spec:
        if n < 2 or hi <= lo:
            raise ValueError("each grid dimension needs lo < hi and n >= 2")
        axes.append(np.linspace(float(lo), float(hi), int(n)))
    return axes


def _trapz_nd(values: np.ndarray, axes: list[np.ndarray]) -> float:
    out = values
    for ax in reversed(axes):
        out = np.trapezoid(out, ax, axis=-1)
    return float(out)


@dataclass
class PosteriorGrid:
    """Normalized posterior density tabulated on a rectangular grid."""

    axes: list[np.ndarray]
    density: np.ndarray
    log_evidence_shift: float  # ln of the max unnormalized log-posterior

    def marginal(self, dim: int) -> tuple[np.ndarray, np.ndarray]:
        dens = self.density
        for other in reversed(range(len(self.axes))):
            if other != dim:
                dens = np.trapezoid(dens, self.axes[other], axis=other)
        return self.axes[dim], dens

    def mean_var(self, dim: int) -> tuple[float, float]:
        ax, dens = self.marginal(dim)
        z = np.trapezoid(dens, ax)
        mean = np.trapezoid(ax * dens, ax) / z
        var = np.trapezoid((ax - mean) ** 2 * dens, ax) / z
        return float(mean), float(var)


def grid_posterior(model, prior: PriorSpec, d, y, grid_spec) -> PosteriorGrid:
    """Tabulate p(theta | y, d) by trapezoid quadrature on a box grid."""
    if len(grid_spec) > 3:
        raise ValueError("grid posterior supports at most 3 parameter dimensions")
    if len(grid_spec) != prior.n_theta:
        raise ValueError("grid_spec must give one (lo, hi, n) per parameter")
    axes = _axes_from_spec(grid_spec)
    check_grid_coverage(prior, [a[0] for a in axes], [a[-1] for a in axes])
    mesh = np.meshgrid(*axes, indexing="ij")
    theta = np.stack([m.ravel() for m in mesh], axis=-1)
    y_row = np.atleast_1d(np.asarray(y, float))[None, :]
    log_post = log_prior(prior, theta) + model.loglik(y_row, theta, d)
    shift = float(log_post.max())
    unnorm = np.exp(log_post - shift).reshape([a.size for a in axes])
    z = _trapz_nd(unnorm, axes)
    if not np.isfinite(z) or z <= 0:
        raise FloatingPointError("posterior normalization failed on this grid")
    return PosteriorGrid(axes, unnorm / z, shift)


@dataclass
class SnisResult:
    theta: np.ndarray
    weights: np.ndarray
    ess: float
    low_ess: bool  # fewer than 50 effective samples

    def mean(self) -> np.ndarray:
        return self.weights @ self.theta


def snis_posterior_samples(model, prior: PriorSpec, d, y, n: int, seed) -> SnisResult:
    """Prior-proposal self-normalized importance sampling."""
    rng = np.random.default_rng(seed)
    theta = sample_prior(prior, n, rng)
    y_row = np.atleast_1d(np.asarray(y, float))[None, :]
    log_w = model.loglik(y_row, theta, d)
    log_w = log_w - log_w.max()
    w = np.exp(log_w)
    w /= w.sum()
    ess = float(1.0 / np.sum(w**2))
    return SnisResult(theta, w, ess, ess < 50.0)


@dataclass
class AbcResult:
    theta: np.ndarray
    n_proposals: int
    acceptance_rate: float


def abc_rejection(
    simulator,
    prior: PriorSpec,
    d,
    y_obs,
    eps_tol: float,
    n: int,
    seed,
    max_proposals: int = 1_000_000,
    chunk: int = 4096,
) -> AbcResult:
    """Accept prior draws whose simulated outcome lies within eps_tol of y_obs.

    Distance is Euclidean on the observed outcome vector. Raises when the
    proposal cap is hit with nothing accepted.
    """
    if eps_tol <= 0:
        raise ValueError("eps_tol must be positive")
    rng = np.random.default_rng(seed)
    y_obs = np.atleast_1d(np.asarray(y_obs, float))
    sim = simulator.simulate if hasattr(simulator, "simulate") else simulator
    accepted = []
    n_acc = 0
    used = 0
    while n_acc < n and used < max_proposals:
        m = min(chunk, max_proposals - used)
        theta = sample_prior(prior, m, rng)
        y_sim = np.asarray(sim(theta, d, rng), float)
        if y_sim.ndim == 1:
            y_sim = y_sim[:, None]
        dist = np.sqrt(np.sum((y_sim - y_obs[None, :]) ** 2, axis=1))
        keep = dist <= eps_tol
        if np.any(keep):
            accepted.append(theta[keep])
            n_acc += int(keep.sum())
        used += m
    if n_acc == 0:
        raise RuntimeError(
            f"no acceptances in {used} proposals at eps_tol={eps_tol:g}; widen the tolerance"
        )
    theta_acc = np.concatenate(accepted, axis=0)[:n]
    return AbcResult(theta_acc, used, n_acc / used)


# -- one-dimensional nested quadrature -------------------------------------------


def _posterior_table(model, prior: PriorSpec, d, theta_grid, y_grid):
    """Joint tables over (y_i, theta_j) for 1-D nested quadrature."""
    if prior.n_theta != 1:
        raise ValueError("nested quadrature supports one parameter dimension")
    t_ax = _axes_from_spec([theta_grid])[0]
    y_ax = _axes_from_spec([y_grid])[0]
    check_grid_coverage(prior, [t_ax[0]], [t_ax[-1]])
    prior_pdf = np.exp(log_prior(prior, t_ax[:, None]))
    ll = model.loglik(
        y_ax[:, None, None], np.broadcast_to(t_ax[None, :, None], (y_ax.size, t_ax.size, 1)), d
    )
    joint = prior_pdf[None, :] * np.exp(ll)
    evidence = np.trapezoid(joint, t_ax, axis=1)
    return t_ax, y_ax, joint, evidence


def eig_quadrature(model, prior: PriorSpec, d, theta_grid, y_grid) -> float:
    """EIG by nested quadrature: E_y of KL(posterior || prior)."""
    t_ax, y_ax, joint, evidence = _posterior_table(model, prior, d, theta_grid, y_grid)
    prior_pdf = np.exp(log_prior(prior, t_ax[:, None]))
    post = joint / evidence[:, None]
    integrand = np.where(post > 0, post * np.log(np.where(post > 0, post, 1.0) / prior_pdf[None, :]), 0.0)
    kl = np.trapezoid(integrand, t_ax, axis=1)
    return float(np.trapezoid(evidence * kl, y_ax))


def lower_bound_quadrature(log_q_fn, model, prior: PriorSpec, d, theta_grid, y_grid) -> float:
    """Exact-expectation posterior bound E_{theta,y}[ln q(theta|y) - ln p(theta)]."""
    t_ax, y_ax, joint, _ = _posterior_table(model, prior, d, theta_grid, y_grid)
    log_p = log_prior(prior, t_ax[:, None])
    log_q = np.stack([log_q_fn(t_ax, y_val) for y_val in y_ax])
    inner = np.trapezoid(joint * (log_q - log_p[None, :]), t_ax, axis=1)
    return float(np.trapezoid(inner, y_ax))


def expected_kl_quadrature(log_q_fn, model, prior: PriorSpec, d, theta_grid, y_grid) -> float:
    """E_{Y|d}[ KL( p(theta|y,d) || q(theta|y) ) ] by nested quadrature.

    log_q_fn(theta_values, y_value) must return ln q on the theta grid for one
    y; use flow_posterior_log_density to adapt a flow with one auxiliary
    dimension.
    """
    t_ax, y_ax, joint, evidence = _posterior_table(model, prior, d, theta_grid, y_grid)
    post = joint / evidence[:, None]
    log_q = np.stack([log_q_fn(t_ax, y_val) for y_val in y_ax])
    log_post = np.where(post > 0, np.log(np.where(post > 0, post, 1.0)), -np.inf)
    integrand = np.where(post > 0, post * (log_post - log_q), 0.0)
    kl = np.trapezoid(integrand, t_ax, axis=1)
    return float(np.trapezoid(evidence * kl, y_ax))


def flow_posterior_log_density(flow: ConditionalFlow, aux_grid=(-8.0, 8.0, 257)):
    """Adapt an augmented flow to a 1-D log_q_fn by integrating out the aux.

    The flow must model (theta, aux) given y with exactly one auxiliary
    standard-normal dimension appended.
    """
    if flow.n_theta != 2:
        raise ValueError("expected a flow over (theta, aux) with n_theta = 2")
    a_ax = _axes_from_spec([aux_grid])[0]

    def log_q_fn(theta_vals, y_val):
        t = np.asarray(theta_vals, float)
        pairs = np.stack(
            [np.repeat(t, a_ax.size), np.tile(a_ax, t.size)], axis=-1
        )
        y_rep = np.broadcast_to(np.atleast_1d(y_val), (pairs.shape[0], flow.n_y))
        lq = flow_log_prob(flow, pairs, y_rep).log_q.reshape(t.size, a_ax.size)
        m = lq.max(axis=1)
        dens = np.trapezoid(np.exp(lq - m[:, None]), a_ax, axis=1)
        return m + np.log(dens)

    return log_q_fn
