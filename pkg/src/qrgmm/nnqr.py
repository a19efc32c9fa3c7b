"""Network quantile regression as a drop-in node model for the generator.

One small multilayer perceptron per grid level, all sharing a shape, is
trained by plain mini-batch gradient descent on a Huber-smoothed pinball
loss. The networks of all levels are stored stacked (leading axis = level)
and trained together on the same mini-batches, which turns the per-level
loop into batched matrix products.

Node values from independent networks are not ordered in tau, so sampling
always sorts them at each x before interpolating.

Defaults (widths (input, 32, 32, 1), tanh, 200 epochs, step 0.05, batch
256, epsilon 0.1 on the standardised response, halved every quarter of the
epochs) are our own choices, not prescribed values.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import Dataset, QuantileGrid, SeededRng, as_rng
from .errors import ConfigError, DimensionMismatch, InvalidEps, NotConverged
from .solver import check_tau
from .testbeds import normal_quantile

ACTIVATIONS = ("tanh", "relu")
_CHUNK = 4096


def smoothed_pinball(tau, u, eps):
    """tau h(u) for u >= 0 and (1 - tau) h(-u) for u < 0, h the Huber function.

    h(t) = t^2 / (2 eps) on [0, eps] and t - eps/2 beyond.
    """
    tau = check_tau(tau)
    if not eps > 0:
        raise InvalidEps(f"smoothing width must be positive, got {eps}")
    u = np.asarray(u, dtype=float)
    out = _huber_pinball(tau, u, eps)
    return float(out) if out.ndim == 0 else out


def _huber_pinball(tau, u, eps):
    a = np.abs(u)
    h = np.where(a <= eps, a * a / (2.0 * eps), a - 0.5 * eps)
    return np.where(u >= 0, tau, 1.0 - tau) * h


def _huber_pinball_grad(tau, u, eps):
    """d/du of :func:`_huber_pinball`."""
    return np.where(u >= 0, tau, tau - 1.0) * np.minimum(np.abs(u) / eps, 1.0)


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple
    activation: str = "tanh"
    seed: int = 0
    epochs: int = 200
    step_size: float = 0.05
    batch_size: int = 256
    epsilon: float = 0.1
    tolerance: float = 1e-3

    def __post_init__(self):
        w = tuple(int(v) for v in self.widths)
        if len(w) < 2 or min(w) < 1:
            raise ConfigError("widths need an input and an output layer, all positive")
        if w[-1] != 1:
            raise ConfigError("final layer width must be 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if not self.epsilon > 0:
            raise InvalidEps("epsilon must be positive")
        if int(self.epochs) < 0 or int(self.batch_size) < 1 or not self.step_size > 0:
            raise ConfigError("epochs >= 0, batch_size >= 1 and step_size > 0 required")
        object.__setattr__(self, "widths", w)

    @classmethod
    def default(cls, input_dim, **kw):
        return cls(widths=(int(input_dim), 32, 32, 1), **kw)

    @property
    def input_dim(self):
        return self.widths[0]

    def to_dict(self):
        return {"widths": list(self.widths), "activation": self.activation, "seed": self.seed,
                "epochs": self.epochs, "step_size": self.step_size, "batch_size": self.batch_size,
                "epsilon": self.epsilon, "tolerance": self.tolerance}

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "widths": tuple(d["widths"])})


# ---------------------------------------------------------------------------
# stacked network arithmetic; params = [W1, b1, W2, b2, ...] with
# W_k of shape (L, out, in) and b_k of shape (L, out)


def init_params(spec: MlpSpec, taus):
    """Deterministic initial weights for one network per level in ``taus``.

    Weights are N(0, 1/fan_in) from the spec seed; the output bias starts at
    the standard normal tau-quantile, a sensible guess for a standardised
    response.
    """
    taus = np.asarray(taus, dtype=float)
    L = taus.size
    rng = SeededRng(spec.seed, (0,))
    params = []
    w = spec.widths
    for k in range(len(w) - 1):
        z = normal_quantile(rng.uniform(L * w[k + 1] * w[k])).reshape(L, w[k + 1], w[k])
        params.append(z / np.sqrt(w[k]))
        params.append(np.zeros((L, w[k + 1])))
    params[-1][:, 0] = normal_quantile(taus)
    return params


def _act(spec, z):
    return np.tanh(z) if spec.activation == "tanh" else np.maximum(z, 0.0)


def _act_grad(spec, z, a):
    return 1.0 - a * a if spec.activation == "tanh" else (z > 0).astype(float)


def forward(spec, params, X):
    """Outputs of shape (L, B) for shared inputs X of shape (B, in).

    Returns ``(out, cache)``; the cache feeds :func:`backward`.
    """
    X = np.asarray(X, dtype=float)
    nl = len(params) // 2
    W, b = params[0], params[1]
    L, h, _ = W.shape
    # first layer shares its input across levels: one matrix product
    z = (X @ W.reshape(L * h, -1).T).reshape(X.shape[0], L, h).transpose(1, 0, 2) + b[:, None, :]
    zs, acts = [], [X]
    for k in range(1, nl):
        a = _act(spec, z)
        zs.append(z)
        acts.append(a)
        z = np.matmul(a, params[2 * k].transpose(0, 2, 1)) + params[2 * k + 1][:, None, :]
    return z[:, :, 0], (zs, acts)


def backward(spec, params, cache, g_out):
    """Parameter gradients given dLoss/dOutput of shape (L, B)."""
    zs, acts = cache
    nl = len(params) // 2
    grads = [None] * len(params)
    g = g_out[:, :, None]
    for k in range(nl - 1, 0, -1):
        a = acts[k]
        grads[2 * k] = np.matmul(g.transpose(0, 2, 1), a)
        grads[2 * k + 1] = g.sum(axis=1)
        g = np.matmul(g, params[2 * k]) * _act_grad(spec, zs[k - 1], a)
    X = acts[0]
    grads[0] = np.einsum("lbo,bi->loi", g, X)
    grads[1] = g.sum(axis=1)
    return grads


def level_losses(spec, params, X, y, taus, eps):
    """Mean smoothed pinball loss per level on (X, y)."""
    out, _ = forward(spec, params, X)
    u = np.asarray(y, dtype=float)[None, :] - out
    return _huber_pinball(np.asarray(taus)[:, None], u, eps).mean(axis=1)


def loss_and_grad(spec, params, X, y, taus, eps):
    """Sum over levels of the mean loss, and its gradient."""
    out, cache = forward(spec, params, X)
    t = np.asarray(taus, dtype=float)[:, None]
    u = np.asarray(y, dtype=float)[None, :] - out
    B = u.shape[1]
    loss = float(_huber_pinball(t, u, eps).mean(axis=1).sum())
    g_out = -_huber_pinball_grad(t, u, eps) / B
    return loss, backward(spec, params, cache, g_out)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NnQuantileModel:
    grid: QuantileGrid
    spec: MlpSpec
    params: tuple
    x_shift: np.ndarray
    x_scale: np.ndarray
    y_shift: float
    y_scale: float
    converged: bool = field(default=True, compare=False)
    rearranged: bool = field(default=True, init=False)

    @property
    def input_dim(self):
        return self.spec.input_dim

    @property
    def m(self):
        return self.grid.m


def _standardise(X):
    shift = X.mean(axis=0)
    scale = X.std(axis=0)
    const = scale == 0
    # constant columns (an intercept) pass through unchanged
    shift[const] = 0.0
    scale[const] = 1.0
    return shift, scale


def train(spec, params, X, y, taus, rng):
    """Mini-batch gradient descent in place; returns per-epoch mean losses."""
    n = X.shape[0]
    bs = min(int(spec.batch_size), n)
    history = []
    for e in range(int(spec.epochs)):
        eps = spec.epsilon * 0.5 ** (4 * e // max(int(spec.epochs), 1))
        order = rng.permutation(n)
        total = 0.0
        for s in range(0, n, bs):
            idx = order[s:s + bs]
            loss, grads = loss_and_grad(spec, params, X[idx], y[idx], taus, eps)
            for p, g in zip(params, grads):
                p -= spec.step_size * g
            total += loss * idx.size
        history.append(total / n)
    return history


def fit_nn_grid(dataset: Dataset, spec: MlpSpec, m) -> NnQuantileModel:
    """Train one network per level j/m on standardised inputs and response."""
    grid = QuantileGrid(m)
    if dataset.d != 1:
        raise DimensionMismatch("fit_nn_grid needs a single-output dataset")
    if dataset.p != spec.input_dim:
        raise DimensionMismatch(f"network expects {spec.input_dim} inputs, design has {dataset.p}")
    X = np.asarray(dataset.design, dtype=float)
    y = np.asarray(dataset.response, dtype=float)
    x_shift, x_scale = _standardise(X)
    y_shift = float(y.mean())
    y_scale = float(y.std()) or 1.0
    Xs = (X - x_shift) / x_scale
    ys = (y - y_shift) / y_scale
    params = init_params(spec, grid.levels)
    history = train(spec, params, Xs, ys, grid.levels, SeededRng(spec.seed, (1,)))
    converged = True
    if len(history) >= 2:
        rel = abs(history[-2] - history[-1]) / max(abs(history[-2]), 1e-300)
        converged = bool(np.isfinite(history[-1]) and rel <= spec.tolerance)
    if not converged:
        warnings.warn("network training stopped at the epoch cap while the loss was still "
                      "changing; the final weights are used", NotConverged, stacklevel=2)
    for p in params:
        p.setflags(write=False)
    return NnQuantileModel(grid, spec, tuple(params), x_shift, x_scale, y_shift, y_scale, converged)


def nn_node_values(model: NnQuantileModel, X):
    """Unsorted per-level predictions; shape (m-1,) for a vector, (K, m-1) for rows."""
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if X2.shape[1] != model.input_dim:
        raise DimensionMismatch(f"expected covariates of length {model.input_dim}")
    out, _ = forward(model.spec, model.params, (X2 - model.x_shift) / model.x_scale)
    V = (model.y_shift + model.y_scale * out).T
    return V[0] if single else V


def nn_predict_quantile(model: NnQuantileModel, x, tau):
    t = np.asarray(tau, dtype=float)
    if not np.all((t > 0) & (t < 1)):
        check_tau(t[~((t > 0) & (t < 1))].ravel()[0])
    v = np.sort(nn_node_values(model, x), kind="stable")
    out = _kernels.interp_nodes(v, np.atleast_1d(t))
    return float(out[0]) if t.ndim == 0 else out


def nn_generate(model: NnQuantileModel, x, K, rng):
    """K samples at ``x`` from the sorted, interpolated network node values."""
    K = int(K)
    if K < 1:
        raise ConfigError("K must be >= 1")
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch("expected a single covariate vector")
    v = np.sort(nn_node_values(model, x), kind="stable")
    return _kernels.interp_nodes(v, as_rng(rng).uniform(K))


def nn_sample_rows(model: NnQuantileModel, X, u):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    u = np.asarray(u, dtype=float)
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], _CHUNK):
        V = np.sort(nn_node_values(model, X[s:s + _CHUNK]), axis=1, kind="stable")
        out[s:s + _CHUNK] = _kernels.interp_rows(V, u[s:s + _CHUNK])
    return out
