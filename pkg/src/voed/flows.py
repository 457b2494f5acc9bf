"""Conditional coupling-layer normalizing flow.

One complete transformation maps theta~ = [x1, x2] (x1 the first ceil(n/2)
coordinates) to z = [z1, z2] in the normalizing direction:

    z2 = x2 * exp(s1(x1, cond)) + t1(x1, cond)
    z1 = x1 * exp(s2(z2, cond)) + t2(z2, cond)

with log-determinant sum(s1) + sum(s2). T such transformations are stacked
with no extra permutations; every s/t input is concatenated with the
conditioning vector (the summary of y). Scale outputs are soft-clamped via
c*tanh(s/c) to keep exp() bounded.

The flow standardizes theta and y by pool mean/std before transforming, and
adds the constant Jacobian term -sum(ln std_theta) so log_q is a density in
original units.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .diffcore import (
    Mlp,
    ParamBuilder,
    ParamVector,
    Tensor,
    as_tensor,
    init_params,
    mlp_backward,
    mlp_forward,
    mlp_param_count,
)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class LogDensityResult:
    """log_q per sample plus each transformation's log-det contribution."""

    log_q: Tensor
    per_layer: list[Tensor]


@dataclass
class SummarySpec:
    """Configuration of the observation encoder.

    variant 'identity' passes the (standardized) y through; 'mlp' applies a
    feedforward embedding; 'sequence' runs a gated recurrent cell over the
    time steps in both directions, concatenates the two final hidden states
    and embeds them down to n_out.
    """

    variant: str = "identity"
    n_out: int | None = None
    widths: list[int] = field(default_factory=list)  # mlp variant hidden widths
    n_feature: int = 1
    hidden: int = 20
    emb_widths: list[int] = field(default_factory=lambda: [40, 20])

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "n_out": self.n_out,
            "widths": list(self.widths),
            "n_feature": self.n_feature,
            "hidden": self.hidden,
            "emb_widths": list(self.emb_widths),
        }

    @staticmethod
    def from_dict(d: dict) -> "SummarySpec":
        return SummarySpec(
            variant=d["variant"],
            n_out=d["n_out"],
            widths=list(d["widths"]),
            n_feature=d["n_feature"],
            hidden=d["hidden"],
            emb_widths=list(d["emb_widths"]),
        )


class SummaryNet:
    """Encoder from raw (standardized) y to the conditioning vector y'."""

    def __init__(self, spec: SummarySpec, n_in: int):
        self.spec = spec
        self.n_in = n_in
        if spec.variant == "identity":
            self.n_out = n_in if spec.n_out is None else spec.n_out
            if self.n_out != n_in:
                raise ValueError("identity summary requires n_out == n_y")
            self.emb = None
            self.n_cell = 0
        elif spec.variant == "mlp":
            if spec.n_out is None:
                raise ValueError("mlp summary needs n_out")
            self.n_out = spec.n_out
            self.emb = Mlp([n_in, *spec.widths, spec.n_out], "elu")
            self.n_cell = 0
        elif spec.variant == "sequence":
            if spec.n_out is None:
                raise ValueError("sequence summary needs n_out")
            if n_in % spec.n_feature != 0:
                raise ValueError(
                    f"y length {n_in} is not a multiple of n_feature {spec.n_feature}"
                )
            self.n_out = spec.n_out
            self.n_steps = n_in // spec.n_feature
            f, h = spec.n_feature, spec.hidden
            # per direction: W_u (f,h), U_u (h,h), b_u, W_h (f,h), U_h (h,h), b_h
            self.n_cell = 2 * (2 * f * h + 2 * h * h + 2 * h)
            self.emb = Mlp([2 * h, *spec.emb_widths, spec.n_out], "elu")
        else:
            raise ValueError(f"unknown summary variant {spec.variant!r}")
        self.cell_params: Tensor | None = None  # set by build_flow (flat view)

    @property
    def n_params(self) -> int:
        n = self.n_cell
        if self.emb is not None:
            n += self.emb.n_params
        return n

    def _dir_views(self, direction: int):
        f, h = self.spec.n_feature, self.spec.hidden
        per_dir = 2 * f * h + 2 * h * h + 2 * h
        p = self.cell_params[direction * per_dir : (direction + 1) * per_dir]
        pos = 0

        def take(shape):
            nonlocal pos
            n = int(np.prod(shape))
            v = p[pos : pos + n].reshape(shape)
            pos += n
            return v

        w_u = take((f, h))
        u_u = take((h, h))
        b_u = take((h,))
        w_h = take((f, h))
        u_h = take((h, h))
        b_h = take((h,))
        return w_u, u_u, b_u, w_h, u_h, b_h

    def init(self, rng: np.random.Generator) -> None:
        if self.spec.variant == "sequence":
            f, h = self.spec.n_feature, self.spec.hidden
            for direction in range(2):
                w_u, u_u, b_u, w_h, u_h, b_h = self._dir_views(direction)
                a_in = math.sqrt(6.0 / (f + h))
                a_rec = math.sqrt(6.0 / (2 * h))
                w_u[:] = rng.uniform(-a_in, a_in, size=(f, h))
                w_h[:] = rng.uniform(-a_in, a_in, size=(f, h))
                u_u[:] = rng.uniform(-a_rec, a_rec, size=(h, h))
                u_h[:] = rng.uniform(-a_rec, a_rec, size=(h, h))
                b_u[:] = 0.0
                b_h[:] = 0.0
        if self.emb is not None:
            init_params(self.emb, rng)

    def _run_direction(self, x_steps: list[Tensor], direction: int, cache: list | None):
        # x_steps already ordered for this direction
        w_u, u_u, b_u, w_h, u_h, b_h = self._dir_views(direction)
        batch = x_steps[0].shape[0]
        h = np.zeros((batch, self.spec.hidden))
        for x_t in x_steps:
            u_pre = x_t @ w_u + h @ u_u + b_u
            u = 1.0 / (1.0 + np.exp(-u_pre))
            c_pre = x_t @ w_h + h @ u_h + b_h
            cand = np.tanh(c_pre)
            h_new = (1.0 - u) * h + u * cand
            if cache is not None:
                cache.append((x_t, h, u, cand))
            h = h_new
        return h

    def forward(self, y: Tensor, cache: dict | None = None) -> Tensor:
        y = as_tensor(y)
        if y.shape[-1] != self.n_in:
            raise ValueError(f"y length {y.shape[-1]} != declared {self.n_in}")
        if self.spec.variant == "identity":
            return y
        if self.spec.variant == "mlp":
            mc = [] if cache is not None else None
            out = mlp_forward(self.emb, y, cache=mc)
            if cache is not None:
                cache["emb"] = mc
            return out
        f = self.spec.n_feature
        steps = [y[:, t * f : (t + 1) * f] for t in range(self.n_steps)]
        cf = [] if cache is not None else None
        cb = [] if cache is not None else None
        h_fwd = self._run_direction(steps, 0, cf)
        h_bwd = self._run_direction(steps[::-1], 1, cb)
        ctx = np.concatenate([h_fwd, h_bwd], axis=1)
        mc = [] if cache is not None else None
        out = mlp_forward(self.emb, ctx, cache=mc)
        if cache is not None:
            cache.update({"fwd": cf, "bwd": cb, "ctx": ctx, "emb": mc})
        return out

    def _backward_direction(self, direction: int, cache: list, g_h: Tensor, grads: Tensor):
        f, h_dim = self.spec.n_feature, self.spec.hidden
        per_dir = 2 * f * h_dim + 2 * h_dim * h_dim + 2 * h_dim
        w_u, u_u, b_u, w_h, u_h, b_h = self._dir_views(direction)
        g = grads[direction * per_dir : (direction + 1) * per_dir]
        pos = 0

        def gview(shape):
            nonlocal pos
            n = int(np.prod(shape))
            v = g[pos : pos + n].reshape(shape)
            pos += n
            return v

        g_wu, g_uu, g_bu = gview((f, h_dim)), gview((h_dim, h_dim)), gview((h_dim,))
        g_wh, g_uh, g_bh = gview((f, h_dim)), gview((h_dim, h_dim)), gview((h_dim,))
        for x_t, h_prev, u, cand in reversed(cache):
            g_u = g_h * (cand - h_prev)
            g_cand = g_h * u
            g_hprev = g_h * (1.0 - u)
            g_cpre = g_cand * (1.0 - cand * cand)
            g_upre = g_u * u * (1.0 - u)
            g_wh += x_t.T @ g_cpre
            g_uh += h_prev.T @ g_cpre
            g_bh += g_cpre.sum(axis=0)
            g_wu += x_t.T @ g_upre
            g_uu += h_prev.T @ g_upre
            g_bu += g_upre.sum(axis=0)
            g_h = g_hprev + g_cpre @ u_h.T + g_upre @ u_u.T

    def backward(self, g_out: Tensor, cache: dict) -> Tensor:
        """Gradient of sum(g_out * forward(y)) w.r.t. this net's flat params."""
        grads = np.zeros(self.n_params)
        if self.spec.variant == "identity":
            return grads
        if self.spec.variant == "mlp":
            pg, _ = mlp_backward(self.emb, None, g_out, cache=cache["emb"])
            grads[:] = pg
            return grads
        pg, g_ctx = mlp_backward(self.emb, None, g_out, cache=cache["emb"])
        grads[self.n_cell :] = pg
        h_dim = self.spec.hidden
        self._backward_direction(0, cache["fwd"], g_ctx[:, :h_dim], grads)
        self._backward_direction(1, cache["bwd"], g_ctx[:, h_dim:], grads)
        return grads


def summary_forward(net: SummaryNet, y_raw: Tensor) -> Tensor:
    """Spec op: apply the summary network (no standardization here)."""
    y = as_tensor(y_raw)
    single = y.ndim == 1
    out = net.forward(y[None, :] if single else y)
    return out[0] if single else out


@dataclass
class CouplingPair:
    """One complete transformation: four conditioner nets and the partition."""

    n1: int
    n2: int
    s1: Mlp
    t1: Mlp
    s2: Mlp
    t2: Mlp
    clamp: float = 5.0


def _clamped(raw: Tensor, c: float) -> tuple[Tensor, Tensor]:
    th = np.tanh(raw / c)
    return c * th, th


def _concat_cond(x: Tensor, cond: Tensor | None) -> Tensor:
    if cond is None or cond.shape[-1] == 0:
        return x
    return np.concatenate([x, cond], axis=1)


def coupling_forward(
    pair: CouplingPair, theta_t: Tensor, cond: Tensor | None, cache: dict | None = None
) -> tuple[Tensor, Tensor]:
    """Normalizing direction. Returns (z, per-sample log_det)."""
    x = as_tensor(theta_t)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        cond = None if cond is None else as_tensor(cond)[None, :]
    x1, x2 = x[:, : pair.n1], x[:, pair.n1 :]
    a1 = _concat_cond(x1, cond)
    c_s1 = [] if cache is not None else None
    c_t1 = [] if cache is not None else None
    s1_raw = mlp_forward(pair.s1, a1, cache=c_s1)
    s1_hat, th1 = _clamped(s1_raw, pair.clamp)
    t1_val = mlp_forward(pair.t1, a1, cache=c_t1)
    z2 = x2 * np.exp(s1_hat) + t1_val
    a2 = _concat_cond(z2, cond)
    c_s2 = [] if cache is not None else None
    c_t2 = [] if cache is not None else None
    s2_raw = mlp_forward(pair.s2, a2, cache=c_s2)
    s2_hat, th2 = _clamped(s2_raw, pair.clamp)
    t2_val = mlp_forward(pair.t2, a2, cache=c_t2)
    z1 = x1 * np.exp(s2_hat) + t2_val
    z = np.concatenate([z1, z2], axis=1)
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("non-finite value in coupling_forward")
    log_det = s1_hat.sum(axis=1) + s2_hat.sum(axis=1)
    if cache is not None:
        cache.update(
            x1=x1, x2=x2,
            s1=c_s1, t1=c_t1, s2=c_s2, t2=c_t2,
            th1=th1, th2=th2,
            e1=np.exp(s1_hat), e2=np.exp(s2_hat),
        )
    if single:
        return z[0], float(log_det[0])
    return z, log_det


def coupling_inverse(pair: CouplingPair, z: Tensor, cond: Tensor | None) -> Tensor:
    """Generative direction, exact algebraic inverse of coupling_forward."""
    zz = as_tensor(z)
    single = zz.ndim == 1
    if single:
        zz = zz[None, :]
        cond = None if cond is None else as_tensor(cond)[None, :]
    z1, z2 = zz[:, : pair.n1], zz[:, pair.n1 :]
    a2 = _concat_cond(z2, cond)
    s2_hat, _ = _clamped(mlp_forward(pair.s2, a2), pair.clamp)
    x1 = (z1 - mlp_forward(pair.t2, a2)) * np.exp(-s2_hat)
    a1 = _concat_cond(x1, cond)
    s1_hat, _ = _clamped(mlp_forward(pair.s1, a1), pair.clamp)
    x2 = (z2 - mlp_forward(pair.t1, a1)) * np.exp(-s1_hat)
    x = np.concatenate([x1, x2], axis=1)
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite value in coupling_inverse")
    return x[0] if single else x


class ConditionalFlow:
    """Stack of T complete coupling transformations with optional summary net.

    Owns the flat variational parameter vector lam; every conditioner net and
    the summary net hold live views into it.
    """

    def __init__(
        self,
        n_theta: int,
        n_y: int,
        T: int,
        widths: list[int],
        activation: str = "elu",
        summary: SummarySpec | None = None,
        clamp: float = 5.0,
    ):
        if n_theta < 2:
            raise ValueError(
                "coupling layers need n_theta >= 2; augment scalar targets upstream"
            )
        if T < 1:
            raise ValueError("T must be >= 1")
        self.n_theta = n_theta
        self.n_y = n_y
        self.T = T
        self.widths = list(widths)
        self.activation = activation
        self.clamp = clamp
        self.summary_spec = summary if summary is not None else SummarySpec("identity")
        self.summary: SummaryNet | None = None
        if n_y > 0:
            self.summary = SummaryNet(self.summary_spec, n_y)
            self.n_cond = self.summary.n_out
        else:
            self.n_cond = 0

        n1 = (n_theta + 1) // 2
        n2 = n_theta - n1
        self.n1, self.n2 = n1, n2
        builder = ParamBuilder()
        shapes = {
            "s1": [n1 + self.n_cond, *widths, n2],
            "t1": [n1 + self.n_cond, *widths, n2],
            "s2": [n2 + self.n_cond, *widths, n1],
            "t2": [n2 + self.n_cond, *widths, n1],
        }
        for t in range(T):
            for part in ("s1", "t1", "s2", "t2"):
                builder.add(f"pair{t}.{part}", mlp_param_count(shapes[part]))
        if self.summary is not None and self.summary.n_params > 0:
            builder.add("summary", self.summary.n_params)
        self.lam = builder.build()

        self.pairs: list[CouplingPair] = []
        for t in range(T):
            nets = {}
            for part in ("s1", "t1", "s2", "t2"):
                nets[part] = Mlp(
                    shapes[part], activation, self.lam.segment_view(f"pair{t}.{part}")
                )
            self.pairs.append(CouplingPair(n1, n2, clamp=clamp, **nets))
        if self.summary is not None and self.summary.n_params > 0:
            seg = self.lam.segment_view("summary")
            if self.summary.emb is not None:
                self.summary.cell_params = seg[: self.summary.n_cell]
                self.summary.emb.params = seg[self.summary.n_cell :]

        # standardization constants (identity until set from a pool)
        self.theta_mean = np.zeros(n_theta)
        self.theta_std = np.ones(n_theta)
        self.y_mean = np.zeros(max(n_y, 0))
        self.y_std = np.ones(max(n_y, 0))

    def init_params(self, seed) -> None:
        rng = np.random.default_rng(seed)
        for t, pair in enumerate(self.pairs):
            for net in (pair.s1, pair.t1, pair.s2, pair.t2):
                init_params(net, rng)
        if self.summary is not None:
            self.summary.init(rng)

    def set_standardization(self, theta: Tensor, y: Tensor | None) -> None:
        theta = as_tensor(theta)
        self.theta_mean = theta.mean(axis=0)
        self.theta_std = np.maximum(theta.std(axis=0), 1e-12)
        if self.n_y > 0:
            y = as_tensor(y)
            self.y_mean = y.mean(axis=0)
            self.y_std = np.maximum(y.std(axis=0), 1e-12)
        if not (np.all(self.theta_std > 0) and np.all(self.y_std > 0)):
            raise ValueError("standardization stds must be strictly positive")

    # -- helpers -----------------------------------------------------------
    def _prep(self, theta, y):
        theta = as_tensor(theta)
        if theta.ndim == 1:
            theta = theta[None, :]
        if theta.shape[1] != self.n_theta:
            raise ValueError(f"theta has {theta.shape[1]} dims, flow wants {self.n_theta}")
        y_std = None
        if self.n_y > 0:
            y = as_tensor(y)
            if y.ndim == 1:
                y = np.broadcast_to(y, (theta.shape[0], y.shape[0]))
            if y.shape != (theta.shape[0], self.n_y):
                raise ValueError(f"y shape {y.shape} does not match flow n_y={self.n_y}")
            y_std = (y - self.y_mean) / self.y_std
        theta_std = (theta - self.theta_mean) / self.theta_std
        return theta_std, y_std


def flow_log_prob(flow: ConditionalFlow, theta: Tensor, y_raw: Tensor | None = None) -> LogDensityResult:
    """ln q(theta | y; lam) per sample, in original theta units."""
    theta = as_tensor(theta)
    single = theta.ndim == 1
    theta_std, y_std = flow._prep(theta, y_raw)
    cond = flow.summary.forward(y_std) if flow.summary is not None else None
    z = theta_std
    per_layer = []
    for pair in flow.pairs:
        z, ld = coupling_forward(pair, z, cond)
        per_layer.append(ld)
    log_base = -0.5 * flow.n_theta * LOG_2PI - 0.5 * np.sum(z * z, axis=1)
    log_q = log_base + sum(per_layer) - np.sum(np.log(flow.theta_std))
    if single:
        return LogDensityResult(log_q[0], [ld[0] for ld in per_layer])
    return LogDensityResult(log_q, per_layer)


def flow_sample(flow: ConditionalFlow, y_raw: Tensor | None, n: int, rng) -> Tensor:
    """Draw n samples from q(. | y_raw)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    cond = None
    if flow.summary is not None:
        y = as_tensor(y_raw)
        if y.ndim == 1:
            y = y[None, :]
        y_std = (y - flow.y_mean) / flow.y_std
        cond1 = flow.summary.forward(y_std)
        cond = np.broadcast_to(cond1, (n, cond1.shape[1])).copy()
    z = rng.standard_normal((n, flow.n_theta))
    for pair in reversed(flow.pairs):
        z = coupling_inverse(pair, z, cond)
    return z * flow.theta_std + flow.theta_mean


def _forward_cached(flow: ConditionalFlow, theta: Tensor, y_raw: Tensor | None):
    theta_std, y_std = flow._prep(theta, y_raw)
    sum_cache: dict | None = None
    cond = None
    if flow.summary is not None:
        sum_cache = {}
        cond = flow.summary.forward(y_std, cache=sum_cache)
    z = theta_std
    pair_caches = []
    log_det = 0.0
    for pair in flow.pairs:
        cache: dict = {}
        z, ld = coupling_forward(pair, z, cond, cache=cache)
        pair_caches.append(cache)
        log_det = log_det + ld
    log_base = -0.5 * flow.n_theta * LOG_2PI - 0.5 * np.sum(z * z, axis=1)
    log_q = log_base + log_det - np.sum(np.log(flow.theta_std))
    return log_q, z, cond, pair_caches, sum_cache


def _backward_lambda(
    flow: ConditionalFlow,
    z: Tensor,
    pair_caches: list[dict],
    sum_cache: dict | None,
    weights: Tensor,
) -> Tensor:
    """Reverse pass for sum_i weights_i * log_q_i. Returns flat lambda grads."""
    w = weights[:, None]  # (B,1)
    grads = np.zeros(flow.lam.size)
    g_z = -z * w  # d/dz of the base normal term
    g_cond = None
    if flow.n_cond > 0:
        g_cond = np.zeros((z.shape[0], flow.n_cond))
    n1 = flow.n1
    for t in range(flow.T - 1, -1, -1):
        pair = flow.pairs[t]
        cache = pair_caches[t]
        g_z1, g_z2 = g_z[:, :n1], g_z[:, n1:]
        # z1 = x1 * e2 + t2(a2); log-det contributes +w to each s2_hat coord
        g_s2hat = g_z1 * cache["x1"] * cache["e2"] + w
        g_x1 = g_z1 * cache["e2"]
        g_s2raw = g_s2hat * (1.0 - cache["th2"] ** 2)
        pg, ga2_s = mlp_backward(pair.s2, None, g_s2raw, cache=cache["s2"])
        grads_slice = flow.lam.registry[f"pair{t}.s2"]
        grads[grads_slice[0] : grads_slice[1]] = pg
        pg, ga2_t = mlp_backward(pair.t2, None, g_z1, cache=cache["t2"])
        grads_slice = flow.lam.registry[f"pair{t}.t2"]
        grads[grads_slice[0] : grads_slice[1]] = pg
        ga2 = ga2_s + ga2_t
        g_z2 = g_z2 + ga2[:, : flow.n2]
        if g_cond is not None:
            g_cond += ga2[:, flow.n2 :]
        # z2 = x2 * e1 + t1(a1); log-det contributes +w to each s1_hat coord
        g_s1hat = g_z2 * cache["x2"] * cache["e1"] + w
        g_x2 = g_z2 * cache["e1"]
        g_s1raw = g_s1hat * (1.0 - cache["th1"] ** 2)
        pg, ga1_s = mlp_backward(pair.s1, None, g_s1raw, cache=cache["s1"])
        grads_slice = flow.lam.registry[f"pair{t}.s1"]
        grads[grads_slice[0] : grads_slice[1]] = pg
        pg, ga1_t = mlp_backward(pair.t1, None, g_z2, cache=cache["t1"])
        grads_slice = flow.lam.registry[f"pair{t}.t1"]
        grads[grads_slice[0] : grads_slice[1]] = pg
        ga1 = ga1_s + ga1_t
        g_x1 = g_x1 + ga1[:, :n1]
        if g_cond is not None:
            g_cond += ga1[:, n1:]
        g_z = np.concatenate([g_x1, g_x2], axis=1)
    if flow.summary is not None and flow.summary.n_params > 0:
        sg = flow.summary.backward(g_cond, sum_cache)
        grads_slice = flow.lam.registry["summary"]
        grads[grads_slice[0] : grads_slice[1]] = sg
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradient in flow backward pass")
    return grads


def flow_grad_lambda(
    flow: ConditionalFlow, theta: Tensor, y_raw: Tensor | None = None
) -> Tensor:
    """Exact reverse-mode gradient of (1/B) sum_i ln q(theta_i | y_i) w.r.t. lam."""
    theta = as_tensor(theta)
    if theta.ndim == 1:
        theta = theta[None, :]
    log_q, z, cond, pair_caches, sum_cache = _forward_cached(flow, theta, y_raw)
    weights = np.full(theta.shape[0], 1.0 / theta.shape[0])
    return _backward_lambda(flow, z, pair_caches, sum_cache, weights)


def flow_log_prob_and_grad(
    flow: ConditionalFlow, theta: Tensor, y_raw: Tensor | None = None
) -> tuple[Tensor, Tensor]:
    """(per-sample log_q, gradient of the batch mean) in one fused pass."""
    theta = as_tensor(theta)
    if theta.ndim == 1:
        theta = theta[None, :]
    log_q, z, cond, pair_caches, sum_cache = _forward_cached(flow, theta, y_raw)
    weights = np.full(theta.shape[0], 1.0 / theta.shape[0])
    return log_q, _backward_lambda(flow, z, pair_caches, sum_cache, weights)


def build_flow(
    n_theta: int,
    n_y: int,
    T: int,
    widths: list[int],
    activation: str = "elu",
    summary: SummarySpec | None = None,
    seed: int | None = 0,
    clamp: float = 5.0,
) -> ConditionalFlow:
    """Construct and initialize a flow (identity transformation at init)."""
    flow = ConditionalFlow(n_theta, n_y, T, widths, activation, summary, clamp)
    flow.init_params(seed)
    return flow


# -- checkpointing ----------------------------------------------------------

def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()


def _unb64(s: str, n: int) -> np.ndarray:
    out = np.frombuffer(base64.b64decode(s), dtype="<f8").astype(np.float64)
    if out.size != n:
        raise ValueError(f"checkpoint array has {out.size} values, expected {n}")
    return out


def save_checkpoint(flow: ConditionalFlow, path: str) -> None:
    """Write a JSON checkpoint that round-trips lam and standardization bit-exactly."""
    blob = {
        "format": "voed-flow",
        "version": 1,
        "n_theta": flow.n_theta,
        "n_y": flow.n_y,
        "T": flow.T,
        "widths": flow.widths,
        "activation": flow.activation,
        "clamp": flow.clamp,
        "summary": flow.summary_spec.to_dict(),
        "theta_mean": _b64(flow.theta_mean),
        "theta_std": _b64(flow.theta_std),
        "y_mean": _b64(flow.y_mean),
        "y_std": _b64(flow.y_std),
        "lam": _b64(flow.lam.values),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(blob, f)


def load_checkpoint(path: str) -> ConditionalFlow:
    with open(path, encoding="utf-8") as f:
        blob = json.load(f)
    if blob.get("format") != "voed-flow" or blob.get("version") != 1:
        raise ValueError(f"not a recognized flow checkpoint: {path}")
    flow = ConditionalFlow(
        blob["n_theta"],
        blob["n_y"],
        blob["T"],
        blob["widths"],
        blob["activation"],
        SummarySpec.from_dict(blob["summary"]),
        blob["clamp"],
    )
    flow.lam.values[:] = _unb64(blob["lam"], flow.lam.size)
    flow.theta_mean = _unb64(blob["theta_mean"], flow.n_theta)
    flow.theta_std = _unb64(blob["theta_std"], flow.n_theta)
    flow.y_mean = _unb64(blob["y_mean"], max(flow.n_y, 0))
    flow.y_std = _unb64(blob["y_std"], max(flow.n_y, 0))
    return flow
