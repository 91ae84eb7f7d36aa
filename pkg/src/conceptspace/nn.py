"""Minimal float64 neural-net layers with explicit forward/backward passes.

Everything here is plain numpy. Each layer caches what its backward pass
needs during forward; gradients accumulate into .grads and are consumed by
Adam. Single-threaded per model instance: training mutates layer caches and
rescale running statistics.
"""

from __future__ import annotations

import numpy as np


def fan_in_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str):
        self.name = name
        self.W = fan_in_uniform(rng, (n_in, n_out), n_in)
        self.b = fan_in_uniform(rng, (n_out,), n_in)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W + self.b

    def backward(self, g: np.ndarray) -> np.ndarray:
        self.dW += self._x.T @ g
        self.db += g.sum(axis=0)
        return g @ self.W.T

    def params(self) -> dict:
        return {f"{self.name}.W": self.W, f"{self.name}.b": self.b}

    def grads(self) -> dict:
        return {f"{self.name}.W": self.dW, f"{self.name}.b": self.db}

    def zero_grad(self) -> None:
        self.dW[...] = 0.0
        self.db[...] = 0.0


class GraphConv:
    """Symmetric-normalized graph convolution on fixed-size node blocks.

    forward: y = adj @ x @ W + b with adj of shape (b, N, N) already
    degree-normalized with self-loops.
    """

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str,
                 zero_bias: bool = False):
        self.name = name
        self.W = fan_in_uniform(rng, (n_in, n_out), n_in)
        # A conv bias is shared across nodes; at the node-concept logit layer a
        # random bias makes every node argmax to the same concept at init,
        # which can collapse the categorical head. Callers zero it there.
        self.b = (np.zeros(n_out) if zero_bias
                  else fan_in_uniform(rng, (n_out,), n_in))
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._ax = None
        self._adj = None

    def forward(self, x: np.ndarray, adj: np.ndarray) -> np.ndarray:
        self._adj = adj
        self._ax = adj @ x
        return self._ax @ self.W + self.b

    def backward(self, g: np.ndarray) -> np.ndarray:
        self.dW += np.einsum("bni,bno->io", self._ax, g)
        self.db += g.sum(axis=(0, 1))
        # adj is symmetric, so adj^T = adj
        return self._adj @ (g @ self.W.T)

    def params(self) -> dict:
        return {f"{self.name}.W": self.W, f"{self.name}.b": self.b}

    def grads(self) -> dict:
        return {f"{self.name}.W": self.dW, f"{self.name}.b": self.db}

    def zero_grad(self) -> None:
        self.dW[...] = 0.0
        self.db[...] = 0.0


class ReLU:
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, g):
        return np.where(self._mask, g, 0.0)


class LeakyReLU:
    def __init__(self, slope: float = 0.01):
        self.slope = slope

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, self.slope * x)

    def backward(self, g):
        return np.where(self._mask, g, self.slope * g)


class Sigmoid:
    def forward(self, x):
        self._y = sigmoid(x)
        return self._y

    def backward(self, g):
        return g * self._y * (1.0 - self._y)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class BatchRescale:
    """Affine-free per-dimension standardization across a batch.

    Train mode standardizes with the batch's own mean and (biased) variance
    and updates running statistics; eval mode standardizes with the running
    statistics and never mutates state. No learnable affine follows: a
    concept should fire only when a sample deviates from its batch peers,
    and an affine transform could undo that.
    """

    def __init__(self, width: int, name: str, momentum: float = 0.1, eps: float = 1e-5):
        self.name = name
        self.momentum = momentum
        self.eps = eps
        self.running_mean = np.zeros(width)
        self.running_var = np.ones(width)
        self.trained = False
        self._cache = None

    def forward(self, x: np.ndarray, mode: str) -> np.ndarray:
        if mode == "train":
            if x.shape[0] < 2:
                raise RuntimeError("batch standardization needs at least 2 samples")
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean) * inv_std
            m = self.momentum
            self.running_mean = (1.0 - m) * self.running_mean + m * mean
            self.running_var = (1.0 - m) * self.running_var + m * var
            self.trained = True
            self._cache = (xhat, inv_std, x.shape[0])
            return xhat
        if mode == "eval":
            if not self.trained:
                raise RuntimeError("rescale state has no statistics yet; train first")
            self._cache = None
            return (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        raise ValueError(f"unknown mode {mode!r}")

    def backward(self, g: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward requires a preceding train-mode forward")
        xhat, inv_std, b = self._cache
        return inv_std / b * (b * g - g.sum(axis=0) - xhat * (g * xhat).sum(axis=0))

    def state(self) -> dict:
        return {f"{self.name}.running_mean": self.running_mean,
                f"{self.name}.running_var": self.running_var}

    def load_state(self, mean: np.ndarray, var: np.ndarray, trained: bool) -> None:
        self.running_mean = mean.copy()
        self.running_var = var.copy()
        self.trained = trained


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def one_hot_argmax(x: np.ndarray) -> np.ndarray:
    idx = x.argmax(axis=-1)
    out = np.zeros_like(x)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


class GumbelSoftmax:
    """Categorical assignment over the last axis.

    mode "train": sample Gumbel noise, take the straight-through hard
    one-hot (forward discrete, backward through the tempered softmax).
    mode "eval":  deterministic argmax one-hot, no sampling.
    mode "soft":  tempered softmax without noise; fully differentiable,
    used when a smooth loss surface is required (e.g. finite-difference
    gradient verification).
    """

    def __init__(self, tau: float = 1.0):
        self.tau = tau
        self._soft = None

    def forward(self, logits: np.ndarray, mode: str,
                rng: np.random.Generator | None = None) -> np.ndarray:
        if mode == "train":
            if rng is None:
                raise ValueError("train mode requires an rng for Gumbel noise")
            noisy = (logits + rng.gumbel(size=logits.shape)) / self.tau
            self._soft = softmax(noisy)
            return one_hot_argmax(self._soft)
        if mode == "soft":
            self._soft = softmax(logits / self.tau)
            return self._soft
        if mode == "eval":
            self._soft = None
            return one_hot_argmax(logits)
        raise ValueError(f"unknown mode {mode!r}")

    def backward(self, g: np.ndarray) -> np.ndarray:
        # straight-through: route the gradient through the tempered softmax
        if self._soft is None:
            raise RuntimeError("backward requires a train- or soft-mode forward")
        s = self._soft
        return (g - (g * s).sum(axis=-1, keepdims=True)) * s / self.tau


class MLP:
    """Two dense layers with an activation in between."""

    def __init__(self, n_in: int, n_hidden: int, n_out: int,
                 rng: np.random.Generator, name: str, activation=None):
        self.lin1 = Linear(n_in, n_hidden, rng, f"{name}.lin1")
        self.lin2 = Linear(n_hidden, n_out, rng, f"{name}.lin2")
        self.act = activation if activation is not None else ReLU()

    def forward(self, x):
        return self.lin2.forward(self.act.forward(self.lin1.forward(x)))

    def backward(self, g):
        return self.lin1.backward(self.act.backward(self.lin2.backward(g)))

    def params(self):
        return {**self.lin1.params(), **self.lin2.params()}

    def grads(self):
        return {**self.lin1.grads(), **self.lin2.grads()}

    def zero_grad(self):
        self.lin1.zero_grad()
        self.lin2.zero_grad()


class Adam:
    """Adaptive moment estimation with the usual decay constants."""

    def __init__(self, params: dict, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params            # name -> array, updated in place
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            mhat = self.m[name] / bias1
            vhat = self.v[name] / bias2
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
