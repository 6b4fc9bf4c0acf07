"""A small feed-forward network family with hand-written backpropagation.

Linear models are the special case with no hidden layers. Hidden layers use
ReLU; everything runs in float64.
"""
from __future__ import annotations

import json
import math
import os

import numpy as np

from .errors import BadWeights, DimensionMismatch, FormatError, NonFiniteGradient, UsageError


class FeedForward:
    """Scores f: R^d -> R^K through ``sizes = (d, h1, ..., K)``."""

    def __init__(self, sizes, seed=0):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise UsageError(f"bad layer sizes {sizes}")
        self.sizes = sizes
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self._cache = None

    @property
    def d(self) -> int:
        return self.sizes[0]

    @property
    def K(self) -> int:
        return self.sizes[-1]

    @property
    def architecture(self) -> str:
        return "linear" if len(self.sizes) == 2 else "mlp"

    def parameters(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out.extend((W, b))
        return out

    def set_parameters(self, params) -> None:
        params = list(params)
        self.weights = [np.array(p, dtype=np.float64) for p in params[0::2]]
        self.biases = [np.array(p, dtype=np.float64) for p in params[1::2]]

    def copy(self) -> "FeedForward":
        clone = FeedForward.__new__(FeedForward)
        clone.sizes, clone.seed, clone._cache = self.sizes, self.seed, None
        clone.weights = [W.copy() for W in self.weights]
        clone.biases = [b.copy() for b in self.biases]
        return clone

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.d:
            raise DimensionMismatch(f"expected input of shape (batch, {self.d}), got {x.shape}")
        acts = [x]
        pre = []
        h = x
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            if i < last:
                pre.append(z)
                h = np.maximum(z, 0.0)
                acts.append(h)
            else:
                h = z
        self._cache = (acts, pre)
        return h

    def backward(self, dscores) -> list:
        """Parameter gradients for the last forward call, ordered like parameters()."""
        if self._cache is None:
            raise UsageError("backward called before forward")
        acts, pre = self._cache
        grads = [None] * (2 * len(self.weights))
        delta = np.asarray(dscores, dtype=np.float64)
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (pre[i - 1] > 0)
        return grads

    def predict(self, x) -> np.ndarray:
        """Predicted classes 1..K; ties go to the lowest index."""
        return np.argmax(self.forward(x), axis=1) + 1


def linear_model(d: int, K: int, seed=0) -> FeedForward:
    return FeedForward((d, K), seed)


def mlp_model(d: int, K: int, hidden=(300, 300, 300, 300), seed=0) -> FeedForward:
    return FeedForward((d, *hidden, K), seed)


def forward(model: FeedForward, x_batch) -> np.ndarray:
    return model.forward(x_batch)


def log_softmax(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    z = scores - scores.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_posterior(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    z = np.exp(scores - scores.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def cross_entropy_losses(scores) -> np.ndarray:
    """(n, K) matrix of L(f(x_i), j) = -log softmax_j."""
    return -log_softmax(scores)


def coefficient_cross_entropy(scores, coeffs):
    """Mean over rows of sum_j c_ij * (-log softmax_j) and its score gradient.

    Coefficients may be negative; this is the shared form of every estimator
    objective used in training.
    """
    scores = np.asarray(scores, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != scores.shape:
        raise DimensionMismatch(f"coefficients {coeffs.shape} vs scores {scores.shape}")
    n = scores.shape[0]
    logp = log_softmax(scores)
    loss = float(-(coeffs * logp).sum() / n)
    grad = (np.exp(logp) * coeffs.sum(axis=1, keepdims=True) - coeffs) / n
    return loss, grad


def weighted_cross_entropy(scores, weights):
    """Confidence-weighted cross-entropy; each weight row must be a distribution."""
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights < 0):
        raise BadWeights("negative confidence weight")
    sums = weights.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-8):
        bad = int(np.flatnonzero(np.abs(sums - 1.0) > 1e-8)[0])
        raise BadWeights(f"weights of row {bad} sum to {sums[bad]!r}")
    return coefficient_cross_entropy(scores, weights)


class SGD:
    """Heavy-ball SGD with L2 weight decay folded into the velocity."""

    def __init__(self, learning_rate: float, momentum: float = 0.9, weight_decay: float = 0.0):
        if not learning_rate > 0:
            raise UsageError("learning rate must be positive")
        if not 0 <= momentum < 1:
            raise UsageError("momentum must lie in [0, 1)")
        if weight_decay < 0:
            raise UsageError("weight decay must be nonnegative")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = None

    def step(self, model: FeedForward, grads) -> FeedForward:
        params = model.parameters()
        if len(grads) != len(params):
            raise DimensionMismatch("one gradient per parameter is required")
        for i, (p, g) in enumerate(zip(params, grads)):
            if g.shape != p.shape:
                raise DimensionMismatch(f"gradient {i} has shape {g.shape}, expected {p.shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"non-finite entries in gradient {i} "
                                        f"(parameter shape {p.shape}, max |g| {np.nanmax(np.abs(g))})")
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.momentum
            v += g
            if self.weight_decay:
                v += self.weight_decay * p
            p -= self.learning_rate * v
        return model


def sgd_step(optimizer: SGD, model: FeedForward, grads) -> FeedForward:
    return optimizer.step(model, grads)


# -- checkpoints: one JSON header line, then little-endian float64 parameters

def save_checkpoint(path, model: FeedForward, extra=None) -> None:
    header = {"format": "ppl-checkpoint", "sizes": list(model.sizes),
              "architecture": model.architecture, "activation": "relu",
              "K": model.K, "d": model.d, "seed": model.seed}
    if extra:
        header["extra"] = extra
    blob = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.parameters())
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        f.write(blob)


def load_checkpoint(path) -> FeedForward:
    with open(os.fspath(path), "rb") as f:
        header = json.loads(f.readline())
        blob = f.read()
    if header.get("format") != "ppl-checkpoint":
        raise FormatError(f"{path}: not a checkpoint")
    model = FeedForward(header["sizes"], header.get("seed", 0))
    values = np.frombuffer(blob, dtype="<f8")
    expected = sum(p.size for p in model.parameters())
    if values.size != expected:
        raise FormatError(f"{path}: {values.size} parameters, expected {expected}")
    params, offset = [], 0
    for p in model.parameters():
        params.append(values[offset:offset + p.size].reshape(p.shape).astype(np.float64))
        offset += p.size
    model.set_parameters(params)
    return model
