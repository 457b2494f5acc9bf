"""Dense MLPs with exact reverse-mode gradients and flat parameter bookkeeping.

Everything is float64 numpy: log-density differences and log-determinants are
precision-sensitive, so no float32 anywhere. Tensors are plain C-contiguous
float64 ndarrays; ``as_tensor`` is the single entry point that enforces this.

An ``Mlp`` does not own its weights as per-layer matrices. Instead every
trainable scalar of a model lives in one flat ``ParamVector`` and each network
holds a *view* into its named segment, so a single in-place ``sga_step`` on the
flat vector updates every network at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Tensor = np.ndarray

_ACTIVATIONS = ("elu", "relu")


def as_tensor(x) -> Tensor:
    """Coerce to a C-contiguous float64 array (the only tensor kind used here)."""
    t = np.ascontiguousarray(x, dtype=np.float64)
    return t


@dataclass
class ParamVector:
    """Flat float64 array of every trainable scalar plus a named-segment registry.

    Segments are disjoint [start, end) ranges that exactly cover the array.
    ``segment_view`` returns a live view, so in-place updates of ``values``
    propagate to every network built on top of it.
    """

    values: Tensor
    registry: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.values = as_tensor(self.values).ravel()

    @property
    def size(self) -> int:
        return self.values.size

    def segment_view(self, name: str) -> Tensor:
        start, end = self.registry[name]
        return self.values[start:end]

    def check(self) -> None:
        spans = sorted(self.registry.values())
        pos = 0
        for start, end in spans:
            if start != pos:
                raise ValueError(f"segment gap/overlap at index {pos} vs {start}")
            pos = end
        if pos != self.values.size:
            raise ValueError(f"segments cover {pos} of {self.values.size} scalars")

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), dict(self.registry))


class ParamBuilder:
    """Accumulates named segments, then freezes into a ParamVector."""

    def __init__(self):
        self._names: list[str] = []
        self._sizes: list[int] = []

    def add(self, name: str, size: int) -> None:
        if name in self._names:
            raise ValueError(f"duplicate segment {name!r}")
        self._names.append(name)
        self._sizes.append(int(size))

    def build(self) -> ParamVector:
        registry = {}
        pos = 0
        for name, size in zip(self._names, self._sizes):
            registry[name] = (pos, pos + size)
            pos += size
        pv = ParamVector(np.zeros(pos), registry)
        pv.check()
        return pv


def mlp_param_count(layer_widths: list[int]) -> int:
    return sum(
        w_in * w_out + w_out
        for w_in, w_out in zip(layer_widths[:-1], layer_widths[1:])
    )


@dataclass
class Mlp:
    """Fully connected net; ``params`` is a flat view, layout per layer (W row-major, then b).

    The final layer is always linear; ``activation`` applies to all hidden layers.
    """

    layer_widths: list[int]
    activation: str = "elu"
    params: Tensor | None = None

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        if len(self.layer_widths) < 2 or any(w <= 0 for w in self.layer_widths):
            raise ValueError(f"bad layer widths {self.layer_widths}")
        if self.params is None:
            self.params = np.zeros(mlp_param_count(self.layer_widths))
        if self.params.size != mlp_param_count(self.layer_widths):
            raise ValueError("parameter segment length does not match widths")

    @property
    def n_params(self) -> int:
        return mlp_param_count(self.layer_widths)

    def layers(self):
        """Yield (W, b) views per layer, W shaped (w_in, w_out)."""
        pos = 0
        for w_in, w_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            w = self.params[pos : pos + w_in * w_out].reshape(w_in, w_out)
            pos += w_in * w_out
            b = self.params[pos : pos + w_out]
            pos += w_out
            yield w, b


def _act(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return np.maximum(x, 0.0)
    # elu, alpha = 1
    return np.where(x > 0.0, x, np.expm1(np.minimum(x, 0.0)))


def _act_grad(pre: Tensor, out: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return (pre > 0.0).astype(np.float64)
    # d/dx elu = 1 for x > 0, exp(x) = elu(x) + 1 otherwise
    return np.where(pre > 0.0, 1.0, out + 1.0)


def mlp_forward(net: Mlp, input: Tensor, cache: list | None = None) -> Tensor:
    """Forward pass. ``input`` is (..., w_0); returns (..., w_last).

    If ``cache`` is an empty list it is filled with (pre, post) pairs per hidden
    layer plus the layer inputs, for reuse by ``mlp_backward``.
    """
    h = as_tensor(input)
    if h.shape[-1] != net.layer_widths[0]:
        raise ValueError(
            f"input last dim {h.shape[-1]} != first layer width {net.layer_widths[0]}"
        )
    n_layers = len(net.layer_widths) - 1
    for idx, (w, b) in enumerate(net.layers()):
        pre = h @ w + b
        if idx < n_layers - 1:
            out = _act(pre, net.activation)
        else:
            out = pre
        if cache is not None:
            cache.append((h, pre, out))
        h = out
    return h


def mlp_backward(
    net: Mlp,
    input: Tensor,
    upstream_grad: Tensor,
    cache: list | None = None,
) -> tuple[Tensor, Tensor]:
    """Exact reverse-mode gradients of sum(upstream_grad * output).

    Returns (param_grads flat like net.params, input_grads like input).
    Pass the ``cache`` produced by ``mlp_forward`` to skip recomputing the
    forward activations.
    """
    if cache is None:
        cache = []
        mlp_forward(net, input, cache=cache)
    g = as_tensor(upstream_grad)
    if g.shape != cache[-1][2].shape:
        raise ValueError(
            f"upstream grad shape {g.shape} != output shape {cache[-1][2].shape}"
        )
    n_layers = len(net.layer_widths) - 1
    param_grads = np.zeros_like(net.params)
    # walk layer param spans in reverse
    spans = []
    pos = 0
    for w_in, w_out in zip(net.layer_widths[:-1], net.layer_widths[1:]):
        spans.append((pos, w_in, w_out))
        pos += w_in * w_out + w_out
    for idx in range(n_layers - 1, -1, -1):
        h_in, pre, out = cache[idx]
        if idx < n_layers - 1:
            g = g * _act_grad(pre, out, net.activation)
        start, w_in, w_out = spans[idx]
        w = net.params[start : start + w_in * w_out].reshape(w_in, w_out)
        # flatten batch dims for the weight gradient
        h2 = h_in.reshape(-1, w_in)
        g2 = g.reshape(-1, w_out)
        param_grads[start : start + w_in * w_out] = (h2.T @ g2).ravel()
        param_grads[start + w_in * w_out : start + w_in * w_out + w_out] = g2.sum(axis=0)
        g = g @ w.T
    return param_grads, g


def init_params(net: Mlp, rng_seed) -> Tensor:
    """Fill and return the net's parameter segment.

    Hidden weights ~ U(-a, a) with a = sqrt(6/(fan_in+fan_out)) (variance
    2/(fan_in+fan_out)); all biases zero; the final layer is zero so a freshly
    built flow transformation is exactly the identity.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    n_layers = len(net.layer_widths) - 1
    pos = 0
    for idx, (w_in, w_out) in enumerate(zip(net.layer_widths[:-1], net.layer_widths[1:])):
        if idx < n_layers - 1:
            a = np.sqrt(6.0 / (w_in + w_out))
            net.params[pos : pos + w_in * w_out] = rng.uniform(-a, a, size=w_in * w_out)
        else:
            net.params[pos : pos + w_in * w_out] = 0.0
        pos += w_in * w_out
        net.params[pos : pos + w_out] = 0.0
        pos += w_out
    return net.params


def sga_step(params: ParamVector, grads: Tensor, lr: float) -> ParamVector:
    """In-place ascent step params <- params + lr * grads."""
    g = as_tensor(grads).ravel()
    if g.size != params.size:
        raise ValueError(f"grad length {g.size} != param length {params.size}")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient in sga_step")
    params.values += lr * g
    return params


@dataclass
class AdamState:
    """First and second moment accumulators for adam_step."""

    m: Tensor
    v: Tensor
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: ParamVector) -> "AdamState":
        return cls(m=np.zeros(params.size), v=np.zeros(params.size))


def adam_step(params: ParamVector, grads: Tensor, state: AdamState, lr: float) -> ParamVector:
    """In-place adaptive-moment ascent step with bias correction."""
    g = as_tensor(grads).ravel()
    if g.size != params.size:
        raise ValueError(f"grad length {g.size} != param length {params.size}")
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("non-finite gradient in adam_step")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * g * g
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    params.values += lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params
