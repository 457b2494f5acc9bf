"""Monte Carlo estimators for expected information gain.

Nested Monte Carlo (plain and sample-reuse variants) for explicit-likelihood
models, and the variational lower/upper bound estimators with their gradient
estimators. Cross likelihood tables p(y_i | theta_j, d) are computed from one
sweep of the mean function g, chunked over rows to bound memory.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .diffcore import Tensor, as_tensor
from .flows import ConditionalFlow, flow_grad_lambda, flow_log_prob
from .models import ExplicitModel, log_prior, sample_prior

DEFAULT_CHUNK_ELEMS = 1 << 22  # target elements per cross-likelihood block


class CapabilityError(TypeError):
    """Raised when an estimator needs model features that are not available."""


@dataclass
class EstimateReport:
    value: float
    std_error: float
    n_used: int
    seed: int | None = None
    runtime_s: float = 0.0
    estimator: str = ""

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("std_error must be nonnegative")


@dataclass
class SamplePool:
    """Joint (theta, y) draws at one design, the first n_opt rows for training."""

    d: Tensor
    theta: Tensor
    y: Tensor
    n_opt: int
    n_eval: int
    seed: int | None

    def __post_init__(self):
        if self.theta.shape[0] != self.n_opt + self.n_eval:
            raise ValueError("pool rows do not match n_opt + n_eval")
        if self.y.shape[0] != self.theta.shape[0]:
            raise ValueError("theta and y row counts differ")

    @property
    def theta_opt(self) -> Tensor:
        return self.theta[: self.n_opt]

    @property
    def y_opt(self) -> Tensor:
        return self.y[: self.n_opt]

    @property
    def theta_eval(self) -> Tensor:
        return self.theta[self.n_opt :]

    @property
    def y_eval(self) -> Tensor:
        return self.y[self.n_opt :]

    def select(self, partition: str) -> tuple[Tensor, Tensor]:
        if partition == "eval":
            return self.theta_eval, self.y_eval
        if partition == "opt":
            return self.theta_opt, self.y_opt
        if partition == "all":
            return self.theta, self.y
        raise ValueError(f"unknown partition {partition!r}")


def generate_pool(model, prior, d, n_opt: int, n_eval: int, seed, sim_chunk: int = 8192) -> SamplePool:
    """Draw n_opt + n_eval joint (theta, y) pairs at design d."""
    if n_opt < 1 or n_eval < 0:
        raise ValueError("need n_opt >= 1 and n_eval >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_total = n_opt + n_eval
    theta = sample_prior(prior, n_total, rng)
    d_vals = d.values if hasattr(d, "values") else np.atleast_1d(as_tensor(d))
    chunks = []
    for i0 in range(0, n_total, sim_chunk):
        i1 = min(i0 + sim_chunk, n_total)
        try:
            chunks.append(model.simulate(theta[i0:i1], d_vals, rng))
        except Exception as e:
            raise RuntimeError(f"simulation failed for pool samples {i0}..{i1 - 1}: {e}") from e
    y = np.concatenate(chunks, axis=0)
    if y.ndim == 1:
        y = y[:, None]
    return SamplePool(
        d_vals, theta, y, n_opt, n_eval, seed if isinstance(seed, (int, np.integer)) else None
    )


def _require_explicit(model, op: str) -> None:
    if not isinstance(model, ExplicitModel):
        raise CapabilityError(f"{op} needs an explicit likelihood; {type(model).__name__} has none")


def _design_values(d):
    return d.values if hasattr(d, "values") else np.atleast_1d(as_tensor(d))


def nmc_estimate(
    model,
    prior,
    d,
    n_out: int,
    n_in: int,
    seed,
    chunk_elems: int = DEFAULT_CHUNK_ELEMS,
) -> EstimateReport:
    """Nested Monte Carlo EIG with fresh inner prior draws per outer sample."""
    _require_explicit(model, "nmc_estimate")
    if n_out < 1 or n_in < 1:
        raise ValueError("need n_out, n_in >= 1")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    d_vals = _design_values(d)
    pool = generate_pool(model, prior, d_vals, n_out, 0, rng)
    ll_diag = model.loglik(pool.y, pool.theta, d_vals)

    rows = max(1, chunk_elems // max(n_in, 1))
    inner_cols = max(1, min(n_in, chunk_elems // rows))
    terms = np.empty(n_out)
    for i0 in range(0, n_out, rows):
        i1 = min(i0 + rows, n_out)
        y_blk = pool.y[i0:i1, None, :]
        run_max = np.full(i1 - i0, -np.inf)
        run_sum = np.zeros(i1 - i0)
        done = 0
        while done < n_in:
            c = min(inner_cols, n_in - done)
            th_in = sample_prior(prior, (i1 - i0) * c, rng).reshape(i1 - i0, c, -1)
            ll = model.noise_logpdf(y_blk, model.g(th_in, d_vals), th_in)
            m = np.maximum(run_max, ll.max(axis=1))
            run_sum = run_sum * np.exp(run_max - m) + np.exp(ll - m[:, None]).sum(axis=1)
            run_max = m
            done += c
        # grouped so the max cancels the diagonal first; a theta-independent
        # mean function then yields exactly zero
        terms[i0:i1] = (ll_diag[i0:i1] - run_max) - (np.log(run_sum) - np.log(n_in))
    return EstimateReport(
        float(terms.mean()),
        float(terms.std(ddof=1) / np.sqrt(n_out)) if n_out > 1 else 0.0,
        n_out,
        seed if isinstance(seed, (int, np.integer)) else None,
        time.perf_counter() - t0,
        "nmc",
    )


def nmc_reuse_estimate(
    model,
    prior,
    d,
    n: int,
    seed,
    chunk_elems: int = DEFAULT_CHUNK_ELEMS,
) -> EstimateReport:
    """NMC with one pool reused for the inner sum (N simulations, N^2 evals).

    The inner average includes the i=j term, so for a mean function constant
    in theta every inner likelihood equals the outer one and the estimate is
    exactly zero.
    """
    _require_explicit(model, "nmc_reuse_estimate")
    if n < 1:
        raise ValueError("need n >= 1")
    t0 = time.perf_counter()
    d_vals = _design_values(d)
    pool = generate_pool(model, prior, d_vals, n, 0, np.random.default_rng(seed))
    g_all = model.g(pool.theta, d_vals)
    rows = max(1, chunk_elems // n)
    terms = np.empty(n)
    for i0 in range(0, n, rows):
        i1 = min(i0 + rows, n)
        ll = model.noise_logpdf(
            pool.y[i0:i1, None, :], g_all[None, :, :], pool.theta[None, :, :]
        )
        m = ll.max(axis=1)
        lse = np.log(np.exp(ll - m[:, None]).sum(axis=1))
        diag = ll[np.arange(i1 - i0), np.arange(i0, i1)]
        # grouped so the max cancels the diagonal first; a theta-independent
        # mean function then yields exactly zero
        terms[i0:i1] = (diag - m) - (lse - np.log(n))
    return EstimateReport(
        float(terms.mean()),
        float(terms.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        n,
        seed if isinstance(seed, (int, np.integer)) else None,
        time.perf_counter() - t0,
        "nmc_reuse",
    )


def _bound_terms_finite(terms: Tensor, what: str) -> None:
    bad = np.flatnonzero(~np.isfinite(terms))
    if bad.size:
        raise FloatingPointError(f"non-finite {what} at sample index {int(bad[0])}")


def lower_bound_estimate(
    flow: ConditionalFlow,
    prior,
    pool: SamplePool,
    partition: str = "eval",
    log_q_fn=None,
) -> EstimateReport:
    """Posterior-bound estimate (1/N) sum[ln q(theta_i|y_i) - ln p(theta_i)].

    Reported values use the eval partition; evaluating on the training
    partition is possible but overstates the bound once the flow overfits.
    """
    t0 = time.perf_counter()
    theta, y = pool.select(partition)
    if theta.shape[0] < 1:
        raise ValueError("empty partition")
    log_q = log_q_fn(theta, y) if log_q_fn is not None else flow_log_prob(flow, theta, y).log_q
    terms = log_q - log_prior(prior, theta)
    _bound_terms_finite(terms, "lower-bound term")
    n = terms.size
    return EstimateReport(
        float(terms.mean()),
        float(terms.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        n,
        pool.seed,
        time.perf_counter() - t0,
        "lower_bound",
    )


def upper_bound_estimate(
    model,
    flow_y: ConditionalFlow,
    pool: SamplePool,
    partition: str = "eval",
    log_q_fn=None,
) -> EstimateReport:
    """Marginal-bound estimate (1/N) sum[ln p(y_i|theta_i,d) - ln q(y_i)]."""
    _require_explicit(model, "upper_bound_estimate")
    t0 = time.perf_counter()
    theta, y = pool.select(partition)
    if theta.shape[0] < 1:
        raise ValueError("empty partition")
    log_q = log_q_fn(y) if log_q_fn is not None else flow_log_prob(flow_y, y, None).log_q
    terms = model.loglik(y, theta, pool.d) - log_q
    _bound_terms_finite(terms, "upper-bound term")
    n = terms.size
    return EstimateReport(
        float(terms.mean()),
        float(terms.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0,
        n,
        pool.seed,
        time.perf_counter() - t0,
        "upper_bound",
    )


def grad_lambda_lower(flow: ConditionalFlow, theta: Tensor, y: Tensor) -> Tensor:
    """Gradient of the lower bound in the variational parameters: mean grad ln q."""
    return flow_grad_lambda(flow, theta, y)


def grad_lambda_upper(flow_y: ConditionalFlow, y: Tensor) -> Tensor:
    """Gradient of the upper bound in lambda: -mean grad ln q(y)."""
    return -flow_grad_lambda(flow_y, y, None)


def grad_d_lower(
    flow: ConditionalFlow,
    model,
    theta: Tensor,
    y: Tensor,
    d,
    center: bool = False,
    clip_q: float | None = None,
) -> Tensor:
    """Score-function design gradient: mean of ln q(theta|y) * d/dd ln p(y|theta,d).

    The plain estimator is unbiased but can be unusable when the likelihood
    score is heavy-tailed (a noise-scale parameter with prior mass near zero
    gives it infinite variance). center=True subtracts the batch mean of the
    weight, which is also unbiased: the expected score at the sampling design
    vanishes. clip_q winsorizes per-sample gradient norms at that batch
    quantile, trading a small bias for finite variance.
    """
    if getattr(model, "design_score", None) is None:
        raise CapabilityError("grad_d_lower needs a model design-score")
    theta = as_tensor(theta)
    y = as_tensor(y)
    d_vals = _design_values(d)
    w = flow_log_prob(flow, theta, y).log_q
    if center:
        w = w - w.mean()
    score = model.design_score(y, theta, d_vals)
    flat = score.reshape(score.shape[0], -1)
    per = w[:, None] * flat
    if clip_q is not None:
        nrm = np.linalg.norm(per, axis=1)
        cap = np.percentile(nrm, 100.0 * clip_q)
        per = per * np.minimum(1.0, cap / (nrm + 1e-300))[:, None]
    grad = per.mean(axis=0)
    return grad.reshape(d_vals.shape) if d_vals.ndim > 1 else grad.reshape(score.shape[1:])
