"""Closed-form decoherence prefactor for power-law spectra.

For ``S(w)/w^2 = S_0 / w^(alpha+1)`` the decoherence function factorises as
``chi(t) = S_0 t^alpha I_n`` with the dimensionless prefactor

    I_n = int_0^inf |y_n(z)|^2 / z^(alpha+1) dz.

Once the infrared divergences cancel, ``I_n`` reduces to a double sum over
ordered node pairs ``i != j`` of ``w_i w_j K(d_i - d_j)`` times a
branch-dependent constant:

========== ==================================== ====================================
branch     pair kernel ``K(phi)``               constant
========== ==================================== ====================================
even       ``|phi|^alpha ln|phi|``              ``(-1)^(1+alpha/2) / alpha!``
odd        ``|phi|^alpha``                      ``(-1)^((alpha+1)/2) (pi/2) / alpha!``
non-int    ``|phi|^alpha``                      ``cos(pi alpha/2) Gamma(-alpha)``
========== ==================================== ====================================

The pair sums cancel heavily for large ``alpha`` (terms of order one add up
to ``~alpha! I_n``), so they are accumulated in ``numpy.longdouble``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DivergentIntegral, InvalidExponent, ResolutionWarning
from .filters import vanishing_order
from .sequence import PulseSequence, weights

__all__ = [
    "Branch",
    "INTEGER_TOL",
    "PrefactorResult",
    "SpectrumExponent",
    "branch_constant",
    "coherence",
    "decoherence_function",
    "formula_gradient",
    "formula_hessian",
    "formula_value",
    "is_feasible",
    "prefactor_gradient",
    "prefactor_hessian",
    "reflected_gamma",
    "rounding_bound",
    "spectral_prefactor",
]

INTEGER_TOL = 1e-9


class Branch(str, enum.Enum):
    EVEN = "even-integer"
    ODD = "odd-integer"
    NON_INTEGER = "non-integer"


@dataclass(frozen=True)
class SpectrumExponent:
    """Power-law exponent ``alpha > 0`` with its formula branch.

    ``alpha`` is treated as an integer when it lies within ``INTEGER_TOL`` of
    one; it is then snapped to that integer.
    """

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not math.isfinite(a) or a <= 0:
            raise InvalidExponent(f"alpha must be finite and > 0, got {self.alpha!r}")
        k = round(a)
        if abs(a - k) < INTEGER_TOL:
            a = float(k)
        object.__setattr__(self, "alpha", a)

    @property
    def branch(self) -> Branch:
        a = self.alpha
        if a != round(a):
            return Branch.NON_INTEGER
        return Branch.EVEN if int(a) % 2 == 0 else Branch.ODD

    @property
    def required_order(self) -> int:
        """Smallest vanishing order ``m`` with ``alpha < 2m + 2``."""
        return int(math.floor(self.alpha / 2))


ExponentLike = Union[SpectrumExponent, float, int]


def _exponent(ex: ExponentLike) -> SpectrumExponent:
    return ex if isinstance(ex, SpectrumExponent) else SpectrumExponent(ex)


@dataclass(frozen=True)
class PrefactorResult:
    value: float
    branch: Branch
    m: int
    feasible: bool = True
    resolution: float = 0.0


def reflected_gamma(alpha: float) -> float:
    """``Gamma(-alpha)`` for non-integer ``alpha > 0`` via reflection.

    ``Gamma(-a) = -pi / (a sin(pi a) Gamma(a))``.
    """
    return -math.pi / (alpha * math.sin(math.pi * alpha) * math.gamma(alpha))


def branch_constant(ex: ExponentLike) -> float:
    ex = _exponent(ex)
    a = ex.alpha
    if ex.branch is Branch.EVEN:
        k = int(a)
        return (-1) ** (1 + k // 2) / math.factorial(k)
    if ex.branch is Branch.ODD:
        k = int(a)
        return (-1) ** ((k + 1) // 2) * (math.pi / 2) / math.factorial(k)
    return math.cos(math.pi * a / 2) * reflected_gamma(a)


def _kernel(nodes: np.ndarray, ex: SpectrumExponent, order: int) -> np.ndarray:
    """Pair kernel (or its ``order``-th derivative) on all node pairs, zero diagonal."""
    x = np.asarray(nodes, dtype=np.longdouble)
    phi = x[:, None] - x[None, :]
    diag = np.eye(len(x), dtype=bool)
    r = np.where(diag, 1, np.abs(phi))
    a = np.longdouble(ex.alpha)
    even = ex.branch is Branch.EVEN
    if order == 0:
        k = r**a * (np.log(r) if even else 1)
    elif order == 1:
        f = a * np.log(r) + 1 if even else a
        k = np.sign(phi) * r ** (a - 1) * f
    elif order == 2:
        f = a * (a - 1) * np.log(r) + 2 * a - 1 if even else a * (a - 1)
        k = r ** (a - 2) * f
    else:
        raise ValueError("order must be 0, 1 or 2")
    return np.where(diag, 0, k)


def _nodes(deltas) -> np.ndarray:
    d = np.asarray(deltas, dtype=float)
    return np.concatenate(([0.0], d, [1.0]))


def formula_value(deltas, ex: ExponentLike) -> float:
    """Closed-form pair sum at arbitrary ordered instants, without feasibility check.

    Off the feasible set this is the analytic continuation used by the
    optimizer, not the (divergent) integral.
    """
    ex = _exponent(ex)
    x = _nodes(deltas)
    w = weights(len(x) - 2).astype(np.longdouble)
    s = np.sum(np.outer(w, w) * _kernel(x, ex, 0))
    return float(branch_constant(ex) * s)


def formula_gradient(deltas, ex: ExponentLike) -> np.ndarray:
    """Derivative of :func:`formula_value` with respect to each pulse instant."""
    ex = _exponent(ex)
    x = _nodes(deltas)
    w = weights(len(x) - 2).astype(np.longdouble)
    k1 = _kernel(x, ex, 1)
    g = 2 * w * (k1 @ w)
    return (branch_constant(ex) * g[1:-1]).astype(float)


def formula_hessian(deltas, ex: ExponentLike) -> np.ndarray:
    """Second derivatives of :func:`formula_value` with respect to the instants."""
    ex = _exponent(ex)
    x = _nodes(deltas)
    w = weights(len(x) - 2).astype(np.longdouble)
    k2 = _kernel(x, ex, 2)
    h = -2 * np.outer(w, w) * k2
    h[np.diag_indices_from(h)] = 2 * w * (k2 @ w)
    return (branch_constant(ex) * h[1:-1, 1:-1]).astype(float)


def rounding_bound(deltas, ex: ExponentLike) -> float:
    """First-order bound on the error of :func:`formula_value` from rounding.

    Adds the effect of storing each node in float64, ``eps |x_i| |dS/dx_i|``,
    to the accumulated longdouble summation error. Feasible sequences whose
    true ``I_n`` falls below this bound return values of arbitrary sign.
    """
    ex = _exponent(ex)
    x = _nodes(deltas)
    w = np.abs(weights(len(x) - 2).astype(np.longdouble))
    ww = np.outer(w, w)
    node = 2 * np.sum(np.abs(x) * (np.abs(_kernel(x, ex, 1)) * ww).sum(axis=1)) * np.finfo(float).eps
    arith = np.sum(ww * np.abs(_kernel(x, ex, 0))) * len(x) * np.finfo(np.longdouble).eps
    return float(abs(branch_constant(ex)) * (node + arith))


def is_feasible(seq: PulseSequence, ex: ExponentLike) -> bool:
    ex = _exponent(ex)
    return ex.alpha < 2 * vanishing_order(seq) + 2


def _check(seq: PulseSequence, ex: SpectrumExponent) -> int:
    m = vanishing_order(seq)
    if not ex.alpha < 2 * m + 2:
        raise DivergentIntegral(ex.alpha, m)
    return m


def spectral_prefactor(seq: PulseSequence, ex: ExponentLike) -> PrefactorResult:
    """Analytic ``I_n`` for ``seq`` and exponent ``ex``.

    Raises
    ------
    DivergentIntegral
        If ``alpha >= 2m + 2`` for the sequence's vanishing order ``m``.
    InvalidExponent
        If ``alpha <= 0``.
    """
    ex = _exponent(ex)
    m = _check(seq, ex)
    value = formula_value(seq.deltas, ex)
    bound = rounding_bound(seq.deltas, ex)
    if abs(value) <= bound:
        warnings.warn(
            f"I_n={value:.3e} is below its rounding bound {bound:.1e} "
            f"(n={seq.n}, alpha={ex.alpha:g}); the value is not resolved",
            ResolutionWarning,
            stacklevel=2,
        )
    return PrefactorResult(value, ex.branch, m, resolution=bound)


def prefactor_gradient(seq: PulseSequence, ex: ExponentLike) -> np.ndarray:
    ex = _exponent(ex)
    _check(seq, ex)
    return formula_gradient(seq.deltas, ex)


def prefactor_hessian(seq: PulseSequence, ex: ExponentLike) -> np.ndarray:
    ex = _exponent(ex)
    _check(seq, ex)
    return formula_hessian(seq.deltas, ex)


def decoherence_function(seq: PulseSequence, ex: ExponentLike, s0: float, t: float) -> float:
    """``chi(t) = S_0 t^alpha I_n``; ``s0`` absorbs all bath constants (units ``omega^alpha``)."""
    if s0 < 0 or t < 0:
        raise ValueError("s0 and t must be non-negative")
    ex = _exponent(ex)
    value = spectral_prefactor(seq, ex).value
    return s0 * t**ex.alpha * value


def coherence(seq: PulseSequence, ex: ExponentLike, s0: float, t: float) -> float:
    """Free-induction signal ``exp(-2 chi(t))``."""
    return math.exp(-2 * decoherence_function(seq, ex, s0, t))
