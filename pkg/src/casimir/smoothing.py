"""Smoothed max functions: log-sum-exp, simplex projection and the top-K surrogate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError

SMOOTHER_KINDS = ("entropy", "l2", "topk_l2")


@dataclass(frozen=True)
class SmoothingConfig:
    """Smoother kind, temperature ``mu`` and top-K width ``k`` (used by ``topk_l2``)."""

    kind: str = "topk_l2"
    mu: float = 1.0
    k: int = 5

    def __post_init__(self):
        if self.kind not in SMOOTHER_KINDS:
            raise InvalidInputError(f"unknown smoother {self.kind!r}; expected one of {SMOOTHER_KINDS}")
        if not self.mu > 0:
            raise InvalidInputError(f"mu must be positive, got {self.mu}")
        if int(self.k) < 1:
            raise InvalidInputError(f"k must be at least 1, got {self.k}")

    def with_mu(self, mu: float) -> "SmoothingConfig":
        return SmoothingConfig(self.kind, mu, self.k)

    def bound_constant(self, num_outputs: int | None = None) -> float:
        """D for the sandwich ``0 <= f_mu - f <= mu * D``."""
        if self.kind == "entropy":
            if num_outputs is None:
                raise InvalidInputError("entropy smoothing needs the output-space size for D = log|Y|")
            return math.log(num_outputs)
        return 0.5


@dataclass(frozen=True)
class SmoothedMaxResult:
    value: float
    weights: np.ndarray


def _as_vector(z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.size == 0:
        raise InvalidInputError("input vector is empty")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("input vector has non-finite entries")
    return z


def project_simplex(z) -> np.ndarray:
    """Euclidean projection onto the probability simplex by sort-and-threshold.

    The projection is ``u_i = max(z_i + rho, 0)`` where ``rho`` makes the entries
    sum to one; ``rho`` is read off the sorted prefix sums.
    """
    z = _as_vector(z)
    # The projection commutes with shifts; centering keeps the prefix sums finite.
    z = z - z.max()
    m = z.size
    s = np.sort(z)[::-1]
    css = np.cumsum(s)
    ks = np.arange(1, m + 1)
    # largest k with s_k + (1 - css_k) / k > 0
    k = int(np.nonzero(s * ks > css - 1.0)[0][-1]) + 1
    rho = (1.0 - css[k - 1]) / k
    u = np.maximum(z + rho, 0.0)
    # Renormalize the support to absorb rounding (the support itself is exact).
    return u / u.sum()


def projection_sparsity(z, mu: float) -> int:
    """Number of non-zeros of ``project_simplex(z / mu)``.

    Returns the smallest ``k`` with ``sum_{i<=k}(z_(i) - z_(k)) < mu <= sum_{i<=k}(z_(i) - z_(k+1))``
    where ``z_(m+1) = -inf``.
    """
    z = _as_vector(z)
    if not mu > 0:
        raise InvalidInputError(f"mu must be positive, got {mu}")
    s = np.sort(z)[::-1]
    m = s.size
    css = np.cumsum(s)
    for k in range(1, m + 1):
        lower = css[k - 1] - k * s[k - 1]
        upper = math.inf if k == m else css[k - 1] - k * s[k]
        if lower < mu <= upper:
            return k
    return m


def entropy_smoothed_max(z, mu: float) -> SmoothedMaxResult:
    """``mu * log sum exp(z / mu)`` with softmax weights, computed in max-shifted form."""
    z = _as_vector(z)
    if not mu > 0:
        raise InvalidInputError(f"mu must be positive, got {mu}")
    t = z / mu
    lse = logsumexp(t)
    w = np.exp(t - lse)
    return SmoothedMaxResult(float(mu * lse), w / w.sum())


def _l2_value(z: np.ndarray, u: np.ndarray, mu: float) -> float:
    return float(z @ u - 0.5 * mu * (u @ u) + 0.5 * mu)


def l2_smoothed_max(z, mu: float) -> SmoothedMaxResult:
    """Max smoothed by ``mu/2 (||u||^2 - 1)``; the gradient is the projection of ``z / mu``."""
    z = _as_vector(z)
    if not mu > 0:
        raise InvalidInputError(f"mu must be positive, got {mu}")
    u = project_simplex(z / mu)
    return SmoothedMaxResult(_l2_value(z, u, mu), u)


def _check_sorted(z: np.ndarray):
    if np.any(np.diff(z) > 0):
        raise InvalidInputError("scores must be sorted in non-increasing order")


def topk_surrogate(z_topk, mu: float) -> SmoothedMaxResult:
    """l2 smoothing restricted to the K largest scores (given sorted, largest first)."""
    z = _as_vector(z_topk)
    _check_sorted(z)
    return l2_smoothed_max(z, mu)


def topk_exactness_holds(z_topk_plus1, mu: float) -> bool:
    """Whether the top-K surrogate equals full l2 smoothing: ``mu <= sum_{i<=K}(z_(i) - z_(K+1))``.

    ``z_topk_plus1`` holds the K+1 largest scores in non-increasing order.
    """
    z = _as_vector(z_topk_plus1)
    _check_sorted(z)
    if z.size < 2:
        raise InvalidInputError("need at least K + 1 = 2 scores")
    head = z[:-1]
    return bool(mu <= float(np.sum(head - z[-1])))
