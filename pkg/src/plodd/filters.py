"""Filter function of a pulse sequence and its moment diagnostics.

The filter function is ``y_n(z) = sum_j w_j exp(i z d_j)`` over all nodes
``j = 0..n+1``. Its first ``m`` derivatives at ``z = 0`` vanish exactly
when the weighted moments ``M_p = sum_j w_j d_j^p`` vanish for
``p = 1..m``; ``m`` then controls infrared convergence of the decoherence
integral through ``alpha < 2m + 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sequence import PulseSequence

__all__ = [
    "DEFAULT_MOMENT_TOL",
    "MomentReport",
    "delta_moment_sum",
    "filter_magnitude_sq",
    "filter_value",
    "moment_report",
    "moment_sum",
    "vanishing_order",
]

DEFAULT_MOMENT_TOL = 1e-9
# below this |z| the filter is summed from its moments; truncation < 1e-50 relative
SERIES_RADIUS = 0.1
_SERIES_TERMS = 24


@dataclass(frozen=True)
class MomentReport:
    moments: tuple
    vanishing_order: int
    tol: float


def filter_value(seq: PulseSequence, z):
    """Complex filter function at the dimensionless frequency ``z = omega t``.

    Evaluated as ``sum_j w_j (exp(i z d_j) - 1)``, which equals the plain sum
    because the weights sum to zero but keeps rounding proportional to ``z``.
    For ``|z| < SERIES_RADIUS`` the Taylor series ``sum_k (iz)^k M_k / k!``
    is used instead, so vanishing low moments give a value that is small
    in relative, not just absolute, terms. Accepts scalars or arrays.
    """
    z = np.asarray(z, dtype=float)
    w = seq.weights.astype(float)
    theta = np.multiply.outer(z, seq.nodes)
    re = -2.0 * np.sin(theta / 2) ** 2
    im = np.sin(theta)
    out = re @ w + 1j * (im @ w)
    small = np.abs(z) < SERIES_RADIUS
    if np.any(small):
        out = np.where(small, _moment_series(seq, np.where(small, z, 0.0)), out)
    return out[()] if out.ndim == 0 else out


def _moment_series(seq: PulseSequence, z: np.ndarray) -> np.ndarray:
    coeffs = [moment_sum(seq, k) / math.factorial(k) for k in range(1, _SERIES_TERMS + 1)]
    acc = np.zeros(z.shape, dtype=complex)
    for c in reversed(coeffs):
        acc = (acc + c) * (1j * z)
    return acc


def filter_magnitude_sq(seq: PulseSequence, z):
    """``|y_n(z)|^2``."""
    y = filter_value(seq, z)
    return np.real(y) ** 2 + np.imag(y) ** 2


def moment_sum(seq: PulseSequence, p: int) -> float:
    """Weighted moment ``M_p = sum_{j=0}^{n+1} w_j d_j^p`` (``0^0 = 1``).

    For ``p >= 1`` the ``j = 0`` node contributes nothing. Uses compensated
    summation.
    """
    if p < 0 or int(p) != p:
        raise ValueError("p must be a non-negative integer")
    p = int(p)
    return math.fsum(int(w) * d**p for w, d in zip(seq.weights, seq.nodes))


def _moment_scale(seq: PulseSequence, p: int) -> float:
    return math.fsum(abs(int(w)) * d**p for w, d in zip(seq.weights, seq.nodes))


def vanishing_order(seq: PulseSequence, tol: float = DEFAULT_MOMENT_TOL) -> int:
    """Largest ``m <= n`` with ``|M_p| <= tol * sum_j |w_j| d_j^p`` for ``1 <= p <= m``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = 0
    for p in range(1, seq.n + 1):
        if abs(moment_sum(seq, p)) > tol * _moment_scale(seq, p):
            break
        m = p
    return m


def moment_report(seq: PulseSequence, p_max: int = None, tol: float = DEFAULT_MOMENT_TOL) -> MomentReport:
    if p_max is None:
        p_max = seq.n + 1
    moments = tuple(moment_sum(seq, p) for p in range(p_max + 1))
    return MomentReport(moments, vanishing_order(seq, tol), tol)


def delta_moment_sum(seq: PulseSequence, p: int) -> float:
    """Double sum ``sum_{i,j} w_i w_j (d_i - d_j)^p`` over all node pairs.

    Proportional to the ``p``-th derivative of ``|y_n|^2`` at ``z = 0``;
    vanishes for ``p <= 2m + 1`` when the vanishing order is ``m`` and for
    every odd ``p`` by antisymmetry.
    """
    if p < 0 or int(p) != p:
        raise ValueError("p must be a non-negative integer")
    p = int(p)
    x = seq.nodes
    w = seq.weights.astype(float)
    terms = np.outer(w, w) * np.subtract.outer(x, x) ** p
    return math.fsum(terms.ravel())
