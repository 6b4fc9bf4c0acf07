"""Risk estimators for partial labels and candidate-label confidences.

All estimators work on precomputed loss matrices ``L[i, j] = L(f(x_i), j)``
(classes as zero-based columns) and boolean candidate matrices, so the same
code serves the trainer (softmax posteriors) and the exact enumeration oracle
(analytic posteriors).

Every estimator is linear in the losses. ``*_coefficients`` return the
per-example, per-class multipliers; the empirical risk is
``mean_i sum_j coeff[i, j] * L[i, j]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CandidateSet, Dataset, masks_to_matrix
from .errors import BadWeights, DegenerateDenominator, NotComplementary, UsageError
from .nn import log_softmax

ESTIMATORS = ("ppl", "cc", "mcl", "cl")


def candidate_matrix(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.candidate_matrix()
    if isinstance(data, CandidateSet):
        return masks_to_matrix(np.array([data.mask], dtype=np.uint64), data.K)
    arr = np.asarray(data)
    if arr.dtype == bool and arr.ndim == 2:
        return arr
    raise UsageError("expected a Dataset, CandidateSet or boolean (n, K) matrix")


def confidences(posteriors, candidates) -> np.ndarray:
    """Rows of p(y|x) restricted to each candidate set and renormalised."""
    posteriors = np.atleast_2d(np.asarray(posteriors, dtype=np.float64))
    cand = candidate_matrix(candidates)
    if posteriors.shape != cand.shape:
        raise UsageError(f"posterior shape {posteriors.shape} vs candidates {cand.shape}")
    restricted = np.where(cand, posteriors, 0.0)
    denom = restricted.sum(axis=1, keepdims=True)
    if np.any(denom < 1e-300):
        bad = int(np.flatnonzero(denom[:, 0] < 1e-300)[0])
        raise DegenerateDenominator(f"row {bad}: posterior mass on the candidate set is "
                                    f"{denom[bad, 0]!r}")
    return restricted / denom


def confidence_from_posterior(posterior_row, s: CandidateSet) -> np.ndarray:
    return confidences(np.asarray(posterior_row)[None, :], s)[0]


class ConfidenceMatrix:
    """Per-example candidate confidences r_j(x_i, s_i), refreshed as training goes."""

    def __init__(self, values, candidates, epoch: int = 0):
        self.values = np.array(values, dtype=np.float64)
        self.candidates = candidate_matrix(candidates)
        self.epoch = epoch

    @classmethod
    def from_posteriors(cls, posteriors, candidates, epoch: int = 0):
        return cls(confidences(posteriors, candidates), candidates, epoch)

    @classmethod
    def uniform(cls, candidates):
        cand = candidate_matrix(candidates)
        return cls(cand / cand.sum(axis=1, keepdims=True), cand)

    def check(self, tol: float = 1e-10) -> None:
        v = self.values
        if np.any(v < 0):
            raise BadWeights("negative confidence")
        if np.any(v[~self.candidates] != 0):
            raise BadWeights("confidence outside a candidate set")
        if np.any(np.abs(v.sum(axis=1) - 1) > tol):
            raise BadWeights("confidences do not sum to one")

    def summary(self, labels=None) -> dict:
        out = {"mean_max_confidence": float(self.values.max(axis=1).mean())}
        if labels is not None:
            hits = np.argmax(self.values, axis=1) + 1 == np.asarray(labels)
            out["argmax_is_true_label"] = float(hits.mean())
        return out


@dataclass
class RiskEstimate:
    value: float
    kind: str
    n: int
    contributions: Optional[np.ndarray] = None

    @property
    def std_error(self) -> Optional[float]:
        c = self.contributions
        if c is None or len(c) < 2:
            return None
        return float(np.std(c, ddof=1) / np.sqrt(len(c)))


def _estimate(kind, coeffs, losses, keep):
    losses = np.asarray(losses, dtype=np.float64)
    if losses.shape != coeffs.shape:
        raise UsageError(f"loss matrix {losses.shape} vs candidates {coeffs.shape}")
    contrib = (coeffs * losses).sum(axis=1)
    return RiskEstimate(float(contrib.mean()), kind, len(contrib), contrib if keep else None)


def ppl_coefficients(candidates, confidence_values) -> np.ndarray:
    cand = candidate_matrix(candidates)
    return np.where(cand, np.asarray(confidence_values, dtype=np.float64), 0.0)


def ppl_empirical_risk(candidates, confidence, losses, keep=True) -> RiskEstimate:
    values = confidence.values if isinstance(confidence, ConfidenceMatrix) else confidence
    return _estimate("ppl", ppl_coefficients(candidates, values), losses, keep)


def cl_coefficients(candidates) -> np.ndarray:
    """+1 on every candidate, -(K-2) on the single complementary label."""
    cand = candidate_matrix(candidates)
    K = cand.shape[1]
    sizes = cand.sum(axis=1)
    if np.any(sizes != K - 1):
        bad = int(np.flatnonzero(sizes != K - 1)[0])
        raise NotComplementary(f"example {bad} has {sizes[bad]} candidates; "
                               f"complementary labels need exactly {K - 1}")
    return np.where(cand, 1.0, -(K - 2.0))


def cl_empirical_risk(candidates, losses, keep=True) -> RiskEstimate:
    return _estimate("cl", cl_coefficients(candidates), losses, keep)


def mcl_coefficients(candidates) -> np.ndarray:
    """+1 on candidates, -(K-1-|comp|)/|comp| on the complementary set."""
    cand = candidate_matrix(candidates)
    K = cand.shape[1]
    comp_size = K - cand.sum(axis=1, keepdims=True)
    return np.where(cand, 1.0, -(K - 1.0 - comp_size) / comp_size)


def mcl_empirical_risk(candidates, losses, keep=True) -> RiskEstimate:
    return _estimate("mcl", mcl_coefficients(candidates), losses, keep)


def pcpl_coefficients(candidates, posteriors, literal: bool = True) -> np.ndarray:
    """Multipliers of the uniform-generation estimator.

    ``literal=True`` sums over all K classes with an overall factor 1/2;
    ``literal=False`` gives the candidate-restricted form identical to ppl.
    """
    posteriors = np.atleast_2d(np.asarray(posteriors, dtype=np.float64))
    cand = candidate_matrix(candidates)
    denom = np.where(cand, posteriors, 0.0).sum(axis=1, keepdims=True)
    if np.any(denom < 1e-300):
        raise DegenerateDenominator("posterior mass on a candidate set is zero")
    ratio = posteriors / denom
    if literal:
        return 0.5 * ratio
    return np.where(cand, ratio, 0.0)


def pcpl_empirical_risk(candidates, posteriors, losses, literal=True, keep=True) -> RiskEstimate:
    kind = "pcpl" if literal else "pcpl-restricted"
    return _estimate(kind, pcpl_coefficients(candidates, posteriors, literal), losses, keep)


def cc_losses(scores, candidates) -> np.ndarray:
    """Per-example -log sum_{j in s} softmax_j(scores)."""
    logp = log_softmax(scores)
    cand = candidate_matrix(candidates)
    masked = np.where(cand, logp, -np.inf)
    top = masked.max(axis=1, keepdims=True)
    return -(top[:, 0] + np.log(np.exp(masked - top).sum(axis=1)))
