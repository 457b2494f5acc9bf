"""Priors, benchmark forward models, and a conjugate linear-Gaussian test model.

Explicit models decompose into a mean function g(theta, d), a noise log
density, and a noise sampler, all vectorized over leading batch dimensions.
That decomposition lets the estimators evaluate cross likelihoods
p(y_i | theta_j, d) without rerunning the forward model. The aphid model is
implicit: it only exposes a stochastic simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import ndtr, ndtri

from .diffcore import Tensor, as_tensor

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap if not (args and callable(args[0])) else args[0]


LOG_2PI = math.log(2.0 * math.pi)


# -- priors ------------------------------------------------------------------

@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class TruncNormal:
    mu: float
    sigma: float
    lower: float
    upper: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not self.lower < self.upper:
            raise ValueError("need lower < upper")


@dataclass(frozen=True)
class Laplace:
    loc: float
    scale: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("rate must be positive")


@dataclass
class PriorSpec:
    """Independent 1-D components, or a full multivariate normal."""

    components: list | None = None
    mvn_mean: Tensor | None = None
    mvn_cov: Tensor | None = None

    def __post_init__(self):
        if (self.components is None) == (self.mvn_mean is None):
            raise ValueError("give either components or an MVN, not both")
        if self.mvn_mean is not None:
            self.mvn_mean = as_tensor(self.mvn_mean)
            self.mvn_cov = as_tensor(self.mvn_cov)
            if self.mvn_cov.shape != (self.mvn_mean.size, self.mvn_mean.size):
                raise ValueError("covariance shape does not match mean")
            if not np.allclose(self.mvn_cov, self.mvn_cov.T):
                raise ValueError("covariance must be symmetric")
            # cholesky doubles as the SPD check and the sampling factor
            self._chol = np.linalg.cholesky(self.mvn_cov)

    @property
    def n_theta(self) -> int:
        if self.components is not None:
            return len(self.components)
        return self.mvn_mean.size


def _tn_bounds(comp: TruncNormal):
    """Standardized bounds and truncation mass, stable when both sit in a tail.

    When the interval lies in the upper tail, work with the reflected interval
    so the CDF differences stay far from the 1.0 rounding plateau.
    """
    a = (comp.lower - comp.mu) / comp.sigma
    b = (comp.upper - comp.mu) / comp.sigma
    flip = a > 0
    if flip:
        a, b = -b, -a
    z = ndtr(b) - ndtr(a)
    if z <= 0.0:
        raise ValueError(
            f"truncation interval [{comp.lower}, {comp.upper}] has no representable mass"
        )
    return a, b, z, flip


def sample_prior(prior: PriorSpec, n: int, rng) -> Tensor:
    """n i.i.d. draws, shape (n, n_theta)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if prior.mvn_mean is not None:
        z = rng.standard_normal((n, prior.n_theta))
        return prior.mvn_mean + z @ prior._chol.T
    cols = []
    for comp in prior.components:
        if isinstance(comp, Normal):
            cols.append(rng.normal(comp.mu, comp.sigma, n))
        elif isinstance(comp, TruncNormal):
            # inverse-CDF restricted to [l, u]
            a, b, _, flip = _tn_bounds(comp)
            u = rng.uniform(ndtr(a), ndtr(b), n)
            x = ndtri(u)
            if flip:
                x = -x
            x = comp.mu + comp.sigma * x
            cols.append(np.clip(x, comp.lower, comp.upper))
        elif isinstance(comp, Laplace):
            cols.append(rng.laplace(comp.loc, comp.scale, n))
        elif isinstance(comp, Exponential):
            cols.append(rng.exponential(1.0 / comp.rate, n))
        else:
            raise TypeError(f"unknown prior component {comp!r}")
    return np.column_stack(cols)


def log_prior(prior: PriorSpec, theta: Tensor) -> Tensor:
    """Sum of component log densities; -inf outside truncation bounds."""
    theta = as_tensor(theta)
    single = theta.ndim == 1
    th = theta[None, :] if single else theta
    if th.shape[1] != prior.n_theta:
        raise ValueError(f"theta has {th.shape[1]} dims, prior has {prior.n_theta}")
    if prior.mvn_mean is not None:
        diff = th - prior.mvn_mean
        sol = np.linalg.solve(prior._chol, diff.T)
        maha = np.sum(sol * sol, axis=0)
        log_det = 2.0 * np.sum(np.log(np.diag(prior._chol)))
        out = -0.5 * (prior.n_theta * LOG_2PI + log_det + maha)
        return out[0] if single else out
    out = np.zeros(th.shape[0])
    for j, comp in enumerate(prior.components):
        x = th[:, j]
        if isinstance(comp, Normal):
            out += -0.5 * LOG_2PI - math.log(comp.sigma) - 0.5 * ((x - comp.mu) / comp.sigma) ** 2
        elif isinstance(comp, TruncNormal):
            _, _, z, _ = _tn_bounds(comp)
            lp = (
                -0.5 * LOG_2PI
                - math.log(comp.sigma)
                - 0.5 * ((x - comp.mu) / comp.sigma) ** 2
                - math.log(z)
            )
            out += np.where((x >= comp.lower) & (x <= comp.upper), lp, -np.inf)
        elif isinstance(comp, Laplace):
            out += -math.log(2.0 * comp.scale) - np.abs(x - comp.loc) / comp.scale
        elif isinstance(comp, Exponential):
            out += np.where(x >= 0.0, math.log(comp.rate) - comp.rate * x, -np.inf)
        else:
            raise TypeError(f"unknown prior component {comp!r}")
    return out[0] if single else out


# -- model containers --------------------------------------------------------

@dataclass
class ExplicitModel:
    """Forward model with tractable likelihood.

    g maps (theta, d) to the observation mean; noise_logpdf(y, mean, theta)
    returns the log likelihood summed over observation dims; noise_sample
    draws y around a mean. All broadcast over leading batch dimensions, which
    is what lets cross evaluations p(y_i | theta_j) reuse one g sweep.
    """

    n_y: int
    g: Callable
    noise_logpdf: Callable
    noise_sample: Callable
    design_score: Callable | None = None
    name: str = ""

    def simulate(self, theta: Tensor, d, rng) -> Tensor:
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        return self.noise_sample(self.g(theta, d), theta, rng)

    def loglik(self, y: Tensor, theta: Tensor, d) -> Tensor:
        return self.noise_logpdf(y, self.g(theta, d), theta)


@dataclass
class ImplicitModel:
    """Sample-only simulator; no likelihood evaluations available."""

    n_y: int
    simulate: Callable  # (theta, d, rng) -> y
    name: str = ""


@dataclass
class Design:
    """Design values plus a feasible-set descriptor.

    kind 'box' clips to [lower, upper]; 'l1_rows' rescales each row of a
    matrix design to unit L1 norm; 'ordered_box' clips then sorts (ordered
    measurement times).
    """

    values: Tensor
    kind: str = "box"
    lower: float | None = None
    upper: float | None = None
    name: str = ""

    def __post_init__(self):
        self.values = np.atleast_1d(as_tensor(self.values))
        if self.kind not in ("box", "l1_rows", "ordered_box"):
            raise ValueError(f"unknown feasible-set kind {self.kind!r}")

    def project(self) -> "Design":
        v = self.values.copy()
        if self.kind == "l1_rows":
            norms = np.sum(np.abs(v), axis=-1, keepdims=True)
            # a fully zeroed row has no L1 direction; reset it to uniform
            bad = norms[..., 0] < 1e-12
            if np.any(bad):
                v[bad] = 1.0 / v.shape[-1]
                norms = np.sum(np.abs(v), axis=-1, keepdims=True)
            v = v / norms
        else:
            if self.lower is not None or self.upper is not None:
                v = np.clip(v, self.lower, self.upper)
            if self.kind == "ordered_box":
                v = np.sort(v)
        return Design(v, self.kind, self.lower, self.upper, self.name)

    def check(self) -> bool:
        v = self.values
        if self.kind == "l1_rows":
            return bool(np.all(np.abs(np.sum(np.abs(v), axis=-1) - 1.0) < 1e-9))
        ok = True
        if self.lower is not None:
            ok = ok and bool(np.all(v >= self.lower - 1e-12))
        if self.upper is not None:
            ok = ok and bool(np.all(v <= self.upper + 1e-12))
        if self.kind == "ordered_box":
            ok = ok and bool(np.all(np.diff(v) >= 0))
        return ok


# -- case 1: nonlinear model, Gaussian-mixture noise -------------------------

MIX_MU1, MIX_MU2, MIX_SIGMA = 0.1, -0.1, 0.05


def _case1_g(theta: Tensor, d) -> Tensor:
    th = as_tensor(theta)
    d = float(np.asarray(d).reshape(-1)[0])
    out = (
        th[..., 0] ** 3 * d**2
        + th[..., 1] * math.exp(-abs(0.2 - d))
        + np.sqrt(th[..., 2] ** 2 * d**2)
    )
    return out[..., None]


def case1_noise_logpdf(eps: Tensor) -> Tensor:
    """Two-component mixture density, equal weights, evaluated in log space."""
    eps = as_tensor(eps)
    lc = -0.5 * LOG_2PI - math.log(MIX_SIGMA)
    a = lc - 0.5 * ((eps - MIX_MU1) / MIX_SIGMA) ** 2
    b = lc - 0.5 * ((eps - MIX_MU2) / MIX_SIGMA) ** 2
    return np.logaddexp(a, b) + math.log(0.5)


def case1_noise_sample(n, rng) -> Tensor:
    pick = rng.random(n) < 0.5
    mu = np.where(pick, MIX_MU1, MIX_MU2)
    return rng.normal(mu, MIX_SIGMA)


def case1_simulate(theta: Tensor, d, rng) -> Tensor:
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    mean = _case1_g(theta, d)
    return mean + case1_noise_sample(mean.shape, rng)


def case1_loglik(y: Tensor, theta: Tensor, d) -> Tensor:
    return case1_noise_logpdf(as_tensor(y)[..., 0] - _case1_g(theta, d)[..., 0])


def case1_model() -> tuple[PriorSpec, ExplicitModel]:
    prior = PriorSpec([Normal(0.5, 0.3), Normal(0.3, 0.7), Normal(0.5, 0.8)])
    model = ExplicitModel(
        n_y=1,
        g=_case1_g,
        noise_logpdf=lambda y, mean, theta: case1_noise_logpdf(y[..., 0] - mean[..., 0]),
        noise_sample=lambda mean, theta, rng: mean + case1_noise_sample(mean.shape, rng),
        name="case1",
    )
    return prior, model


def case1_designs(n_grid: int = 11) -> list[Design]:
    return [Design(np.array([d]), "box", 0.0, 1.0) for d in np.linspace(0.0, 1.0, n_grid)]


# -- case 2: linear regression, unknown noise scale --------------------------

def _case2_split(theta: Tensor):
    th = as_tensor(theta)
    return th[..., :-1], th[..., -1]


def _case2_g(theta: Tensor, d) -> Tensor:
    w, _ = _case2_split(theta)
    dm = as_tensor(d)
    return w @ dm.T


def case2_simulate(theta: Tensor, d, rng) -> Tensor:
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    w, sigma = _case2_split(theta)
    if np.any(sigma <= 0):
        raise ValueError("noise scale must be positive")
    mean = _case2_g(theta, d)
    return mean + sigma[..., None] * rng.standard_normal(mean.shape)


def case2_loglik(y: Tensor, theta: Tensor, d) -> Tensor:
    _, sigma = _case2_split(theta)
    mean = _case2_g(theta, d)
    return _gauss_loglik(as_tensor(y), mean, sigma[..., None])


def case2_design_score(y: Tensor, theta: Tensor, d) -> Tensor:
    """d/dD of log p(y | theta, D), shape (..., n, p)."""
    w, sigma = _case2_split(theta)
    resid = (as_tensor(y) - _case2_g(theta, d)) / sigma[..., None] ** 2
    return resid[..., :, None] * w[..., None, :]


def case2_model(p: int = 20, n: int = 20) -> tuple[PriorSpec, ExplicitModel]:
    prior = PriorSpec([Laplace(0.0, 1.0)] * p + [Exponential(1.0)])

    def noise_logpdf(y, mean, theta):
        return _gauss_loglik(y, mean, _case2_split(theta)[1][..., None])

    def noise_sample(mean, theta, rng):
        _, sigma = _case2_split(theta)
        return mean + sigma[..., None] * rng.standard_normal(mean.shape)

    model = ExplicitModel(
        n_y=n,
        g=_case2_g,
        noise_logpdf=noise_logpdf,
        noise_sample=noise_sample,
        design_score=case2_design_score,
        name=f"case2_p{p}_n{n}",
    )
    return prior, model


def case2_initial_design(p: int, n: int, rng) -> Design:
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    d = Design(rng.uniform(-1.0, 1.0, (n, p)), "l1_rows")
    return d.project()


def _gauss_loglik(y: Tensor, mean: Tensor, sigma) -> Tensor:
    return np.sum(
        -0.5 * LOG_2PI - np.log(sigma) - 0.5 * ((y - mean) / sigma) ** 2, axis=-1
    )


# -- case 3: e-coat film deposition, 0-D surrogate ---------------------------

# documented surrogate constant: film growth attenuates the measured current
# as j(t) = j0 * exp(-h/H_REF); keeps onset + deposition-rate sensitivity
H_REF = 2500.0
ECOAT_NOISE = 0.1


def ecoat_qmin(k: float, j0: float) -> float:
    """Minimum-charge constant for a given bath: Q_min = K^2 / j0."""
    return k**2 / j0


def ecoat_current(theta: Tensor, j0: float, times: Tensor) -> Tensor:
    """Noise-free observed current at the requested times, shape (..., len(times))."""
    th = as_tensor(theta)
    times = as_tensor(times)
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    if j0 <= 0:
        raise ValueError("j0 must be positive")
    c_v, j_min, q_min = th[..., 0], th[..., 1], th[..., 2]
    # onset: never deposits if j0 <= j_min, else when accumulated charge j0*t
    # reaches Q_min
    t_on = np.where(j0 > j_min, q_min / j0, np.inf)
    h = c_v[..., None] * j0 * np.maximum(0.0, times - t_on[..., None])
    return j0 * np.exp(-h / H_REF)


def ecoat0d_simulate(theta: Tensor, j0: float, times: Tensor, rng) -> Tensor:
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    j = ecoat_current(theta, j0, times)
    return j * (1.0 + ECOAT_NOISE * rng.standard_normal(j.shape))


def case3_model(j0: float, times) -> tuple[PriorSpec, ExplicitModel]:
    times = as_tensor(times)
    prior = PriorSpec(
        [
            TruncNormal(7.0, 0.5, 6.0, 8.0),
            TruncNormal(1.0, 0.5, 0.0, 2.0),
            TruncNormal(50.0, 25.0, 0.0, 100.0),
        ]
    )
    model = ExplicitModel(
        n_y=times.size,
        g=lambda theta, d: ecoat_current(theta, float(np.asarray(d).reshape(-1)[0]), times),
        noise_logpdf=lambda y, mean, theta: _gauss_loglik(y, mean, ECOAT_NOISE * mean),
        noise_sample=lambda mean, theta, rng: mean
        * (1.0 + ECOAT_NOISE * rng.standard_normal(mean.shape)),
        name=f"case3_j{j0}",
    )
    return prior, model


def case3_designs() -> list[tuple[float, Tensor]]:
    """The three candidate schedules: (j0, measurement times)."""
    return [
        (10.0, np.arange(10.0, 101.0, 10.0)),
        (7.5, np.arange(20.0, 201.0, 20.0)),
        (5.0, np.arange(30.0, 301.0, 30.0)),
    ]


# -- case 4: aphid population, implicit likelihood ---------------------------

APHID_M0 = 28
APHID_C0 = 28

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / float(1 << 53)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX2
    return z ^ (z >> np.uint64(31))


if HAVE_NUMBA:

    @njit(cache=True)
    def _aphid_kernel(alpha, beta, n_steps, obs_idx, seed, dt, clamp, out):
        golden = np.uint64(0x9E3779B97F4A7C15)
        k1 = np.uint64(0xBF58476D1CE4E5B9)
        k2 = np.uint64(0x94D049BB133111EB)
        n_paths = alpha.shape[0]
        n_obs = obs_idx.shape[0]
        for i in range(n_paths):
            s = np.uint64(seed) + np.uint64(i + 1) * golden
            s = s ^ (s >> np.uint64(30))
            s = s * k1
            s = s ^ (s >> np.uint64(27))
            s = s * k2
            s = s ^ (s >> np.uint64(31))
            m = APHID_M0
            c = APHID_C0
            obs_pos = 0
            while obs_pos < n_obs and obs_idx[obs_pos] == 0:
                out[i, obs_pos] = m
                obs_pos += 1
            a_i = alpha[i]
            b_i = beta[i]
            for step in range(1, n_steps + 1):
                pb = a_i * m * dt
                pd = b_i * m * c * dt
                tot = pb + pd
                if tot > 1.0:
                    if clamp == 0:
                        return 1
                    pb = pb / tot
                    pd = pd / tot
                s = s + golden
                z = s
                z = z ^ (z >> np.uint64(30))
                z = z * k1
                z = z ^ (z >> np.uint64(27))
                z = z * k2
                z = z ^ (z >> np.uint64(31))
                u = (z >> np.uint64(11)) * 1.1102230246251565e-16
                if u < pb:
                    m += 1
                    c += 1
                elif u < pb + pd:
                    m -= 1
                while obs_pos < n_obs and obs_idx[obs_pos] == step:
                    out[i, obs_pos] = m
                    obs_pos += 1
        return 0


def _aphid_numpy(alpha, beta, n_steps, obs_idx, seed, dt, clamp, out):
    n_paths = alpha.shape[0]
    s = np.uint64(seed) + (np.arange(1, n_paths + 1, dtype=np.uint64)) * _GOLDEN
    s = _mix64_np(s)
    m = np.full(n_paths, APHID_M0, dtype=np.int64)
    c = np.full(n_paths, APHID_C0, dtype=np.int64)
    obs_pos = 0
    while obs_pos < obs_idx.size and obs_idx[obs_pos] == 0:
        out[:, obs_pos] = m
        obs_pos += 1
    for step in range(1, n_steps + 1):
        pb = alpha * m * dt
        pd = beta * m * c * dt
        tot = pb + pd
        over = tot > 1.0
        if np.any(over):
            if clamp == 0:
                return 1
            scale = np.where(over, 1.0 / np.maximum(tot, 1.0), 1.0)
            pb = pb * scale
            pd = pd * scale
        s = s + _GOLDEN
        u = (_mix64_np(s) >> np.uint64(11)) * _U53
        birth = u < pb
        death = (~birth) & (u < pb + pd)
        m += birth.astype(np.int64) - death.astype(np.int64)
        c += birth.astype(np.int64)
        while obs_pos < obs_idx.size and obs_idx[obs_pos] == step:
            out[:, obs_pos] = m
            obs_pos += 1
    return 0


def aphid_simulate(
    theta: Tensor,
    times,
    rng,
    dt: float = 0.05,
    backend: str = "auto",
    overflow: str = "error",
) -> Tensor:
    """Simulate M at the requested times for each (alpha, beta) row.

    Per-path counter-based streams keep trajectories reproducible and identical
    across the compiled and plain NumPy backends. When a step's total event
    probability would exceed 1, overflow='error' raises a step-size error;
    overflow='clamp' rescales the two probabilities to sum to 1 for that step,
    which keeps long-horizon simulations defined on rare fast-growth paths.
    """
    th = as_tensor(theta)
    single = th.ndim == 1
    if single:
        th = th[None, :]
    times = np.atleast_1d(as_tensor(times))
    if dt <= 0:
        raise ValueError("dt must be positive")
    if np.any(th < 0):
        raise ValueError("alpha and beta must be nonnegative")
    if np.any(times < 0):
        raise ValueError("observation times must be nonnegative")
    order = np.argsort(times, kind="stable")
    obs_idx = np.rint(times[order] / dt).astype(np.int64)
    n_steps = int(obs_idx.max(initial=0))
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(0, 2**63 - 1))
    else:
        seed = int(rng)
    if overflow not in ("error", "clamp"):
        raise ValueError(f"unknown overflow mode {overflow!r}")
    clamp = 1 if overflow == "clamp" else 0
    alpha = np.ascontiguousarray(th[:, 0])
    beta = np.ascontiguousarray(th[:, 1])
    out_sorted = np.zeros((th.shape[0], times.size), dtype=np.int64)
    if backend == "auto":
        backend = "numba" if HAVE_NUMBA else "numpy"
    if backend == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is unavailable")
        rc = _aphid_kernel(alpha, beta, n_steps, obs_idx, seed, dt, clamp, out_sorted)
    elif backend == "numpy":
        rc = _aphid_numpy(alpha, beta, n_steps, obs_idx, seed, dt, clamp, out_sorted)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if rc != 0:
        raise RuntimeError(
            f"event probability exceeded 1 at dt={dt}; reduce the step size"
        )
    out = np.empty_like(out_sorted)
    out[:, order] = out_sorted
    y = out.astype(np.float64)
    return y[0] if single else y


def case4_model(
    n_times: int, dt: float = 1e-3, overflow: str = "clamp"
) -> tuple[PriorSpec, ImplicitModel]:
    """Aphid design problem with k = n_times observation times.

    Long horizons (t up to 50) visit populations around 10^3, so the default
    step size is small and rare over-fast steps are clamped rather than fatal.
    """
    prior = PriorSpec(
        mvn_mean=np.array([0.246, 0.000136]),
        mvn_cov=np.array([[0.0079**2, 5.8e-8], [5.8e-8, 0.00002**2]]),
    )
    model = ImplicitModel(
        n_y=n_times,
        simulate=lambda theta, d, rng: aphid_simulate(
            theta, d, rng, dt=dt, overflow=overflow
        ),
        name=f"case4_k{n_times}",
    )
    return prior, model


# -- linear-Gaussian conjugate test model ------------------------------------

def lingauss_eig(sigma_theta: float, sigma_eps: float, d: float) -> float:
    """Closed-form EIG for y = d*theta + eps with normal prior and noise."""
    if sigma_theta <= 0 or sigma_eps <= 0:
        raise ValueError("scales must be positive")
    return 0.5 * math.log1p(d**2 * sigma_theta**2 / sigma_eps**2)


def lingauss_model(sigma_theta: float = 1.0, sigma_eps: float = 1.0):
    prior = PriorSpec([Normal(0.0, sigma_theta)])

    def g(theta, d):
        dv = float(np.asarray(d).reshape(-1)[0])
        return as_tensor(theta)[..., :1] * dv

    def design_score(y, theta, d):
        th = as_tensor(theta)[..., 0]
        dv = float(np.asarray(d).reshape(-1)[0])
        return ((as_tensor(y)[..., 0] - th * dv) / sigma_eps**2 * th)[..., None]

    model = ExplicitModel(
        n_y=1,
        g=g,
        noise_logpdf=lambda y, mean, theta: _gauss_loglik(y, mean, sigma_eps),
        noise_sample=lambda mean, theta, rng: mean
        + sigma_eps * rng.standard_normal(mean.shape),
        design_score=design_score,
        name="lingauss",
    )
    return prior, model


def lingauss_posterior(sigma_theta: float, sigma_eps: float, d: float, y: float):
    """Exact posterior (mean, std) for the conjugate test model."""
    prec = 1.0 / sigma_theta**2 + d**2 / sigma_eps**2
    var = 1.0 / prec
    return var * d * y / sigma_eps**2, math.sqrt(var)


# -- scalar augmentation ------------------------------------------------------

def augment_prior(prior: PriorSpec, n_aug: int = 1) -> PriorSpec:
    """Append independent standard-normal auxiliary components."""
    if prior.components is not None:
        return PriorSpec(list(prior.components) + [Normal(0.0, 1.0)] * n_aug)
    p = prior.n_theta
    mean = np.concatenate([prior.mvn_mean, np.zeros(n_aug)])
    cov = np.zeros((p + n_aug, p + n_aug))
    cov[:p, :p] = prior.mvn_cov
    cov[p:, p:] = np.eye(n_aug)
    return PriorSpec(mvn_mean=mean, mvn_cov=cov)


def augment_model_theta(model, n_aug: int = 1):
    """Model on augmented theta that ignores the trailing auxiliary columns."""
    strip = lambda th: as_tensor(th)[..., :-n_aug]
    if isinstance(model, ImplicitModel):
        return ImplicitModel(
            n_y=model.n_y,
            simulate=lambda th, d, rng: model.simulate(strip(th), d, rng),
            name=model.name + "+aug",
        )
    return ExplicitModel(
        n_y=model.n_y,
        g=lambda th, d: model.g(strip(th), d),
        noise_logpdf=lambda y, mean, th: model.noise_logpdf(y, mean, strip(th)),
        noise_sample=lambda mean, th, rng: model.noise_sample(mean, strip(th), rng),
        design_score=None
        if model.design_score is None
        else lambda y, th, d: model.design_score(y, strip(th), d),
        name=model.name + "+aug",
    )


def augment_model_y(model: ExplicitModel, n_aug: int = 1) -> ExplicitModel:
    """Append standard-normal auxiliary observation channels.

    The auxiliaries are independent of everything else, so the information in
    y is unchanged; they only give a one-dimensional y the width a coupling
    flow needs.
    """

    def g(theta, d):
        mean = model.g(theta, d)
        return np.concatenate([mean, np.zeros(mean.shape[:-1] + (n_aug,))], axis=-1)

    def noise_logpdf(y, mean, theta):
        y = as_tensor(y)
        base = model.noise_logpdf(y[..., : model.n_y], mean[..., : model.n_y], theta)
        aux = y[..., model.n_y :]
        return base + np.sum(-0.5 * LOG_2PI - 0.5 * aux**2, axis=-1)

    def noise_sample(mean, theta, rng):
        y = model.noise_sample(mean[..., : model.n_y], theta, rng)
        aux = rng.standard_normal(y.shape[:-1] + (n_aug,))
        return np.concatenate([y, aux], axis=-1)

    return ExplicitModel(
        n_y=model.n_y + n_aug,
        g=g,
        noise_logpdf=noise_logpdf,
        noise_sample=noise_sample,
        name=model.name + "+yaug",
    )
