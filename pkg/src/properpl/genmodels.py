"""Proper candidate-set generation models p(s | x, y) = C(x, s) * 1{y in s}.

Four kinds are supported:

``cl``
    one complementary label drawn uniformly, so |s| = K - 1 always.
``mcl``
    complementary-set size drawn from a law ``qbar`` over 1..K-1, then the
    complementary set drawn uniformly among sets of that size avoiding y.
``pcpl``
    s drawn uniformly among all partial labels containing y.
``custom``
    an arbitrary nonnegative weight function w(x, s). It is proper only when
    sum_{s containing y} w(x, s) is the same for every y; the common value is
    divided out to give C(x, s).

Sizes of s are written ``Q`` (index |s|) and sizes of the complement ``qbar``
(index |complement|); both are tuples whose position 0 means size 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (ENUMERATION_CAP, CandidateSet, DiscreteDistribution, LabelSpace,
                   enumerate_candidate_sets, popcount)
from .errors import ImproperWeights, NormalizationFailure, Unsupported, UsageError

KINDS = ("cl", "mcl", "pcpl", "custom")


def skewed_qbar(alpha: float, K: int) -> tuple:
    """Complementary-set size law with qbar[k+1] = alpha * qbar[k] on 1..K-1."""
    if not 0 < alpha <= 1:
        raise UsageError(f"alpha must lie in (0, 1], got {alpha}")
    weights = [alpha ** (k - 1) for k in range(1, K)]
    total = math.fsum(weights)
    return tuple(w / total for w in weights)


@dataclass(frozen=True)
class SkewedSizeDistribution:
    alpha: float
    K: int
    probabilities: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "probabilities", skewed_qbar(self.alpha, self.K))

    def as_distribution(self) -> DiscreteDistribution:
        return DiscreteDistribution(tuple(range(1, self.K)), self.probabilities)


@dataclass(frozen=True)
class GenerationModel:
    kind: str
    space: LabelSpace
    qbar: Optional[tuple] = None
    alpha: Optional[float] = None
    weight_fn: Optional[Callable] = field(default=None, compare=False)
    x_dependent: bool = True
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown generation model kind {self.kind!r}")
        if self.kind == "mcl":
            if self.qbar is None or len(self.qbar) != self.K - 1:
                raise UsageError(f"mcl model needs qbar over sizes 1..{self.K - 1}")
            if any(q < 0 for q in self.qbar) or abs(math.fsum(self.qbar) - 1) > 1e-12:
                raise UsageError("qbar must be nonnegative and sum to 1")
        if self.kind == "custom":
            if self.weight_fn is None:
                raise UsageError("custom model needs a weight function")
            if self.K > ENUMERATION_CAP:
                raise Unsupported(f"custom models need K <= {ENUMERATION_CAP}")

    @property
    def K(self) -> int:
        return self.space.K

    @property
    def size_law_fixed(self) -> bool:
        return self.kind != "custom"

    def complement_size_law(self) -> tuple:
        """qbar as a tuple over 1..K-1; defined for cl, mcl and pcpl."""
        K = self.K
        if self.kind == "mcl":
            return tuple(self.qbar)
        if self.kind == "cl":
            return (1.0,) + (0.0,) * (K - 2)
        if self.kind == "pcpl":
            Q = pcpl_size_law(K)
            return tuple(Q[K - 1 - m] for m in range(1, K))
        raise Unsupported("custom models have no fixed size law")

    def descriptor(self, seed=None) -> dict:
        if self.kind == "custom":
            raise Unsupported("custom models cannot be serialized")
        d = {"kind": self.kind, "K": self.K}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        if self.kind == "mcl":
            d["qbar"] = list(self.qbar)
        if seed is not None:
            d["seed"] = seed
        return d


def cl_model(K: int) -> GenerationModel:
    return GenerationModel("cl", LabelSpace(K))


def pcpl_model(K: int) -> GenerationModel:
    return GenerationModel("pcpl", LabelSpace(K))


def mcl_model(qbar, K: int | None = None, alpha=None) -> GenerationModel:
    qbar = tuple(float(q) for q in qbar)
    return GenerationModel("mcl", LabelSpace(K or len(qbar) + 1), qbar=qbar, alpha=alpha)


def skewed_model(alpha: float, K: int) -> GenerationModel:
    return mcl_model(skewed_qbar(alpha, K), K, alpha=alpha)


def custom_model(weight_fn, K: int, x_dependent: bool = True, name: str = "") -> GenerationModel:
    return GenerationModel("custom", LabelSpace(K), weight_fn=weight_fn,
                           x_dependent=x_dependent, name=name)


def model_from_descriptor(d: dict) -> GenerationModel:
    kind, K = d["kind"], int(d["K"])
    if kind == "cl":
        return cl_model(K)
    if kind == "pcpl":
        return pcpl_model(K)
    if kind == "mcl":
        if d.get("qbar") is not None:
            return mcl_model(d["qbar"], K, alpha=d.get("alpha"))
        if d.get("alpha") is not None:
            return skewed_model(float(d["alpha"]), K)
        raise UsageError("mcl descriptor needs alpha or qbar")
    raise UsageError(f"cannot build a generation model of kind {kind!r}")


def pcpl_size_law(K: int) -> tuple:
    """Q_k = C(K-1, k-1) / (2^(K-1) - 1) for k = 1..K-1."""
    denom = 2 ** (K - 1) - 1
    return tuple(math.comb(K - 1, k - 1) / denom for k in range(1, K))


def _custom_normalizer(model: GenerationModel, x) -> float:
    K = model.K
    space = model.space
    totals = []
    for y in space.classes:
        w = [float(model.weight_fn(x, s)) for s in enumerate_candidate_sets(space, containing=y)]
        if any(v < 0 for v in w):
            raise ImproperWeights("weights must be nonnegative")
        totals.append(math.fsum(w))
    z = totals[0]
    if not z > 0 or not math.isfinite(z):
        raise NormalizationFailure(f"weights sum to {z} for y=1")
    spread = max(abs(t - z) for t in totals)
    if spread > 1e-10 * z:
        raise ImproperWeights(
            f"per-label weight totals differ by {spread:.3g}; the kernel would depend on y "
            f"(K={K})")
    return z


def conditional_probability(model: GenerationModel, x, y: int, s: CandidateSet) -> float:
    """p(s | x, y) under ``model``; exactly zero when y is not in s."""
    if s.K != model.K:
        raise UsageError("candidate set and model disagree on K")
    if y not in s:
        return 0.0
    K, m = model.K, len(s)
    if model.kind == "cl":
        return 1.0 / (K - 1) if m == K - 1 else 0.0
    if model.kind == "pcpl":
        return 1.0 / (2 ** (K - 1) - 1)
    if model.kind == "mcl":
        return model.qbar[K - m - 1] / math.comb(K - 1, m - 1)
    return float(model.weight_fn(x, s)) / _custom_normalizer(model, x)


def kernel_row(model: GenerationModel, x, y: int) -> dict:
    """{mask: p(s|x,y)} over every s containing y."""
    space = model.space
    sets = list(enumerate_candidate_sets(space, containing=y))
    if model.kind == "custom":
        z = _custom_normalizer(model, x)
        return {s.mask: float(model.weight_fn(x, s)) / z for s in sets}
    return {s.mask: conditional_probability(model, x, y, s) for s in sets}


def _others(labels: np.ndarray, K: int) -> np.ndarray:
    # (n, K-1) zero-based class indices different from each label
    ar = np.arange(K - 1)[None, :]
    y0 = (labels - 1)[:, None]
    return np.where(ar < y0, ar, ar + 1)


def sample_candidate_sets(model: GenerationModel, labels, rng: np.random.Generator,
                          features=None) -> np.ndarray:
    """Draw one candidate mask per label; returns a uint64 array."""
    labels = np.asarray(labels, dtype=np.int64)
    n, K = labels.shape[0], model.K
    if n and (labels.min() < 1 or labels.max() > K):
        raise UsageError(f"labels must lie in 1..{K}")
    own = np.left_shift(np.uint64(1), (labels - 1).astype(np.uint64))
    if n == 0:
        return own
    others = _others(labels, K).astype(np.uint64)

    if model.kind in ("cl", "mcl"):
        qbar = np.asarray(model.complement_size_law())
        sizes = rng.choice(np.arange(1, K), size=n, p=qbar / qbar.sum())
        # partial Fisher-Yates over the K-1 non-true classes, row by row in lockstep
        perm = others.copy()
        rows = np.arange(n)
        for i in range(int(sizes.max())):
            j = i + np.floor(rng.random(n) * (K - 1 - i)).astype(np.int64)
            active = i < sizes
            a, b = perm[rows, i].copy(), perm[rows, j].copy()
            perm[rows[active], i] = b[active]
            perm[rows[active], j[active]] = a[active]
        taken = np.arange(K - 1)[None, :] < sizes[:, None]
        bits = np.left_shift(np.uint64(1), perm)
        comp = np.where(taken, bits, np.uint64(0)).sum(axis=1, dtype=np.uint64)
        return np.uint64((1 << K) - 1) & ~comp

    if model.kind == "pcpl":
        # uniform over subsets of the other K-1 classes except all of them
        r = rng.integers(0, 2 ** (K - 1) - 1, size=n, dtype=np.int64).astype(np.uint64)
        shifts = np.arange(K - 1, dtype=np.uint64)
        chosen = (r[:, None] >> shifts[None, :]) & np.uint64(1)
        extra = (chosen * np.left_shift(np.uint64(1), others)).sum(axis=1, dtype=np.uint64)
        return own | extra

    out = np.empty(n, dtype=np.uint64)
    for i in range(n):
        x = None if features is None else features[i]
        row = kernel_row(model, x, int(labels[i]))
        masks = list(row)
        p = np.array([row[m] for m in masks])
        out[i] = masks[rng.choice(len(masks), p=p / p.sum())]
    return out


def sample_candidate_set(model: GenerationModel, x, y: int,
                         rng: np.random.Generator) -> CandidateSet:
    feats = None if x is None else np.asarray(x, dtype=float)[None, ...]
    mask = sample_candidate_sets(model, np.array([y]), rng, feats)[0]
    return CandidateSet(int(mask), model.K)


def size_distribution_Q(model: GenerationModel) -> DiscreteDistribution:
    """Exact law of |s|, which for these kinds does not depend on x or y."""
    K = model.K
    if model.kind == "pcpl":
        Q = pcpl_size_law(K)
    elif model.kind in ("cl", "mcl"):
        qbar = model.complement_size_law()
        Q = tuple(qbar[K - k - 1] for k in range(1, K))
    else:
        raise Unsupported("size law of a custom kernel depends on x and y")
    return DiscreteDistribution(tuple(range(1, K)), Q)


def expected_partial_label_size(model: GenerationModel) -> float:
    Q = size_distribution_Q(model)
    return math.fsum(k * q for k, q in Q.items())


def enumerated_pcpl_mean_size(K: int) -> tuple[int, int]:
    """(numerator, denominator) of E|s| under the uniform law, by enumeration."""
    space = LabelSpace(K)
    total = sum(popcount(s.mask) for s in enumerate_candidate_sets(space, containing=1))
    return total, 2 ** (K - 1) - 1
