"""Small dense MLP engine with hand-written backward pass and Adam.

Parameters default to float64; ``MLP.astype`` gives a float32 copy for faster
training runs. A batch is a 2D array with one row per example.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf

from rpd.errors import ConfigurationError, TrainingError, UsageError

CHECKPOINT_VERSION = 1

# default hidden widths of the diffusion MLP; "126" is kept as printed
DEFAULT_HIDDEN = (64, 128, 256, 126, 64)

_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# Abramowitz & Stegun 7.1.26, |error| <= 1.5e-7 on erf
_AS_P = 0.3275911
_AS_A = (1.061405429, -1.453152027, 1.421413741, -0.284496736, 0.254829592)


def _gelu_parts(x: np.ndarray):
    """``(Phi(x), phi(x))`` for GELU; exact erf in float64, A&S rational form otherwise."""
    f = x.dtype.type
    pdf = np.multiply(x, x)
    pdf *= f(-0.5)
    np.exp(pdf, out=pdf)
    if x.dtype == np.float64:
        cdf = 0.5 * (1.0 + erf(x / _SQRT_2))
    else:
        t = np.abs(x)
        t *= f(_AS_P / _SQRT_2)
        t += f(1.0)
        np.reciprocal(t, out=t)
        cdf = t * f(_AS_A[0])
        for a in _AS_A[1:]:
            cdf += f(a)
            cdf *= t
        cdf *= pdf  # exp(-(x/sqrt2)^2) is the unnormalised pdf
        cdf *= f(-0.5)
        cdf += f(0.5)
        np.copysign(cdf, x, out=cdf)
        cdf += f(0.5)
    pdf *= f(_INV_SQRT_2PI)
    return cdf, pdf


def gelu(x: np.ndarray) -> np.ndarray:
    return x * _gelu_parts(x)[0]


def gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf, pdf = _gelu_parts(x)
    return cdf + x * pdf


class MLP:
    """Fully connected chain ``Linear -> GELU -> ... -> Linear``.

    ``widths`` lists every layer width including input and output, so
    ``MLP([4, 8, 2])`` has one hidden layer of 8 units. The last layer is
    linear. Parameters are stored as ``weights[i]`` of shape ``(in, out)`` and
    ``biases[i]`` of shape ``(out,)``.
    """

    def __init__(self, widths, weights=None, biases=None, dtype=np.float64):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 0 or widths[-1] < 1:
            raise ConfigurationError(f"invalid MLP widths {widths}")
        self.widths = widths
        if weights is None:
            weights = [np.zeros((a, b)) for a, b in zip(widths[:-1], widths[1:])]
        if biases is None:
            biases = [np.zeros(b) for b in widths[1:]]
        self.dtype = np.dtype(dtype)
        self.weights = [np.asarray(w, dtype=self.dtype) for w in weights]
        self.biases = [np.asarray(b, dtype=self.dtype) for b in biases]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (widths[i], widths[i + 1]) or b.shape != (widths[i + 1],):
                raise ConfigurationError(f"layer {i} parameter shape mismatch")
        self._cache = None

    @classmethod
    def init(cls, widths, rng: np.random.Generator) -> MLP:
        """Uniform fan-in initialisation (the usual torch Linear default)."""
        weights, biases = [], []
        for a, b in zip(widths[:-1], widths[1:]):
            bound = 1.0 / math.sqrt(a) if a > 0 else 0.0
            weights.append(rng.uniform(-bound, bound, size=(a, b)))
            biases.append(rng.uniform(-bound, bound, size=b))
        return cls(widths, weights, biases)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> MLP:
        return MLP(self.widths, [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   self.dtype)

    def astype(self, dtype) -> MLP:
        return MLP(self.widths, [w.astype(dtype) for w in self.weights],
                   [b.astype(dtype) for b in self.biases], dtype)

    def forward(self, x: np.ndarray, record: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ConfigurationError(
                f"expected input of shape (batch, {self.in_dim}), got {x.shape}"
            )
        inputs, slopes = [], []
        h = x
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            a = h @ w
            a += b
            if i == last:
                h = a
            else:
                cdf, pdf = _gelu_parts(a)
                h = np.multiply(a, cdf)
                if record:
                    pdf *= a
                    pdf += cdf
                    slopes.append(pdf)
        self._cache = (inputs, slopes) if record else None
        return h

    __call__ = forward

    def backward(self, grad_out: np.ndarray):
        """Backpropagate ``dL/d(output)`` through the last recorded forward pass.

        Returns ``(grads, grad_input)`` where ``grads`` is aligned with
        :meth:`params`.
        """
        if self._cache is None:
            raise UsageError("backward() called without a recorded forward pass")
        inputs, slopes = self._cache
        g = np.asarray(grad_out, dtype=self.dtype)
        if g.shape != (inputs[0].shape[0], self.out_dim):
            raise ConfigurationError(f"upstream gradient has shape {g.shape}")
        grads = [None] * (2 * self.n_layers)
        for i in range(self.n_layers - 1, -1, -1):
            if i < self.n_layers - 1:
                g *= slopes[i]
            grads[2 * i] = inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, g


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """Apply one bias-corrected Adam update to ``params`` in place."""
    if len(params) != len(grads):
        raise ConfigurationError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ConfigurationError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise TrainingError(
                f"non-finite gradient at Adam step {state.step + 1}: "
                f"{bad} bad entries in a parameter of shape {p.shape}"
            )
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def time_embedding(t, dim: int, T: int | None = None, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal embedding ``[sin(t f_k), cos(t f_k)]`` of integer step(s) ``t``.

    Scalar ``t`` gives shape ``(dim,)``; an array of steps gives ``(len(t), dim)``.
    """
    if dim <= 0 or dim % 2:
        raise ConfigurationError(f"time embedding dimension must be even and positive, got {dim}")
    t_arr = np.asarray(t, dtype=np.float64)
    if T is not None and (np.any(t_arr < 0) or np.any(t_arr > T)):
        raise ConfigurationError(f"time step outside [0, {T}]")
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half) / half)
    args = t_arr[..., None] * freqs
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


class Predictor:
    """Time-conditioned MLP returning either an epsilon or a velocity estimate.

    The network input is the concatenation
    ``[x_t (x_dim), time embedding (time_dim), z embedding (z_dim), aux (aux_dim)]``.
    """

    def __init__(self, net: MLP, x_dim: int = 2, time_dim: int = 16, z_dim: int = 0,
                 aux_dim: int = 0, T: int = 200, meta: dict | None = None):
        expected = x_dim + time_dim + z_dim + aux_dim
        if net.in_dim != expected:
            raise ConfigurationError(f"network input width {net.in_dim} != layout width {expected}")
        if net.out_dim != x_dim:
            raise ConfigurationError("network output width must equal x_dim")
        self.net = net
        self.x_dim, self.time_dim, self.z_dim, self.aux_dim = x_dim, time_dim, z_dim, aux_dim
        self.T = T
        self.meta = dict(meta or {})
        self._temb = time_embedding(np.arange(T + 1), time_dim)

    @classmethod
    def create(cls, rng: np.random.Generator, x_dim: int = 2, time_dim: int = 16, z_dim: int = 0,
               aux_dim: int = 0, hidden=DEFAULT_HIDDEN, T: int = 200, meta: dict | None = None):
        widths = [x_dim + time_dim + z_dim + aux_dim, *hidden, x_dim]
        return cls(MLP.init(widths, rng), x_dim, time_dim, z_dim, aux_dim, T, meta)

    def build_input(self, x_t, t, z_emb=None, aux=None) -> np.ndarray:
        x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
        n = x_t.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=np.int64), (n,))
        parts = [x_t, self._temb[t]]
        for width, block, name in ((self.z_dim, z_emb, "z embedding"), (self.aux_dim, aux, "aux")):
            if width == 0:
                continue
            if block is None:
                raise ConfigurationError(f"predictor expects a {name} of width {width}")
            block = np.broadcast_to(np.asarray(block, dtype=np.float64), (n, width))
            parts.append(block)
        return np.concatenate(parts, axis=1)

    def __call__(self, x_t, t, z_emb=None, aux=None, record: bool = False) -> np.ndarray:
        out = self.net.forward(self.build_input(x_t, t, z_emb, aux), record=record)
        return out.astype(np.float64, copy=False)

    def layout(self) -> dict:
        return {"x_dim": self.x_dim, "time_dim": self.time_dim, "z_dim": self.z_dim,
                "aux_dim": self.aux_dim, "T": self.T}


def save_mlp(net: MLP, path, extra: dict | None = None) -> None:
    """Write ``net`` as an ``.npz`` archive.

    Layout: ``version`` (int), ``widths`` (int array), ``W{i}``/``b{i}`` arrays
    in layer order, and ``meta`` holding a JSON string (``extra``).
    """
    arrays = {"version": np.array(CHECKPOINT_VERSION), "widths": np.array(net.widths)}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{i}"] = w
        arrays[f"b{i}"] = b
    arrays["meta"] = np.array(json.dumps(extra or {}))
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_mlp(path) -> tuple[MLP, dict]:
    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"])
        if version != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {version}")
        widths = [int(w) for w in z["widths"]]
        n = len(widths) - 1
        weights = [z[f"W{i}"] for i in range(n)]
        net = MLP(widths, weights, [z[f"b{i}"] for i in range(n)], weights[0].dtype)
        meta = json.loads(str(z["meta"]))
    return net, meta


def save_predictor(pred: Predictor, path) -> None:
    save_mlp(pred.net, path, {"layout": pred.layout(), **pred.meta})


def load_predictor(path) -> Predictor:
    net, meta = load_mlp(path)
    layout = meta.pop("layout")
    return Predictor(net, meta=meta, **layout)
