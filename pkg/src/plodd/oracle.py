"""Independent quadrature of the decoherence prefactor.

``I_n = int_0^inf |y_n(z)|^2 z^-(alpha+1) dz`` is split at ``eps`` and ``Z``:

* ``[0, eps]``: term-wise integration of the power series
  ``|y_n(z)|^2 = sum_k (-1)^k D_2k z^2k / (2k)!`` where ``D_p`` is the
  delta-moment double sum; terms below order ``2(m+1)`` vanish identically
  and are checked, not integrated.
* ``[eps, Z]``: adaptive Gauss-Legendre panels, geometric up to ``z = 1`` and
  one half-period wide beyond (the fastest pair frequency is 1).
* ``[Z, inf)``: the diagonal pairs give the mean ``sum w_j^2 Z^-alpha / alpha``;
  every off-diagonal pair is integrated by repeated integration by parts,
  truncated where the remainder bound is smallest.

None of this touches the closed-form pair kernels of :mod:`plodd.spectral`,
which is what makes it a useful cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergentIntegral, NonConvergence
from .filters import delta_moment_sum, filter_value, moment_sum, vanishing_order
from .sequence import PulseSequence
from .spectral import ExponentLike, _exponent

__all__ = [
    "DivergenceResidual",
    "QuadratureEstimate",
    "default_cutoff",
    "default_eps",
    "divergence_residual",
    "prefactor_quadrature",
]

_EPS64 = np.finfo(float).eps
_GL_LO = np.polynomial.legendre.leggauss(24)
_GL_HI = np.polynomial.legendre.leggauss(48)
# extra series terms beyond the leading order 2(m+1)
_SERIES_EXTRA = 8
# moment-series length for the filter function below z = 1
_MOMENT_TERMS = 30
_MAX_PANELS = 200_000


@dataclass(frozen=True)
class QuadratureEstimate:
    value: float
    error_bound: float
    series_part: float
    adaptive_part: float
    tail_part: float
    eps: float
    cutoff: float
    panels: int = 0
    details: dict = field(default_factory=dict, compare=False)

    @property
    def pieces(self) -> dict:
        return {
            "series_part": self.series_part,
            "adaptive_part": self.adaptive_part,
            "tail_part": self.tail_part,
        }


@dataclass(frozen=True)
class DivergenceResidual:
    """Weighted coefficient sums multiplying each IR-divergent species.

    Keys are ``"x^(p-alpha)"`` for the power species ``p < alpha`` and
    ``"ln(x)"`` for the logarithmic species of integer ``alpha``. Values are
    the real double sums ``sum_ij w_i w_j (d_i - d_j)^p``; the complex phase
    ``(-i)^p`` they pick up in the expansion has unit modulus and is dropped.
    """

    coefficients: dict
    max_abs: float
    alpha: float

    @property
    def cancels(self) -> bool:
        return self.max_abs < 1e-9


def default_eps(n: int) -> float:
    return 1e-3 / (n + 1)


def default_cutoff(n: int, alpha: float) -> float:
    return 200.0 * (n + 1) * max(1.0, alpha)


def divergence_residual(seq: PulseSequence, ex: ExponentLike) -> DivergenceResidual:
    ex = _exponent(ex)
    a = ex.alpha
    coeffs = {}
    if a == round(a):
        k = int(a)
        for p in range(k):
            coeffs[f"x^({p}-alpha)"] = delta_moment_sum(seq, p)
        coeffs["ln(x)"] = delta_moment_sum(seq, k)
    else:
        for p in range(int(math.ceil(a))):
            coeffs[f"x^({p}-alpha)"] = delta_moment_sum(seq, p)
    max_abs = max(abs(v) for v in coeffs.values())
    return DivergenceResidual(coeffs, max_abs, a)


def _series_part(seq, a, m, eps):
    x = seq.nodes
    w = seq.weights.astype(float)
    absw = np.abs(np.outer(w, w))
    dist = np.abs(np.subtract.outer(x, x))
    for p in range(0, 2 * m + 2):
        scale = math.fsum((absw * dist**p).ravel())
        if abs(delta_moment_sum(seq, p)) > 1e-9 * max(scale, 1.0):
            raise DivergentIntegral(a, m)
    total = []
    p_first = 2 * m + 2
    p_last = p_first + _SERIES_EXTRA
    for p in range(p_first, p_last + 1, 2):
        d = delta_moment_sum(seq, p)
        total.append((-1) ** (p // 2) * d * eps ** (p - a) / (math.factorial(p) * (p - a)))
    q = p_last + 2
    truncation = float(np.sum(np.abs(w))) ** 2 * eps ** (q - a) / (math.factorial(q) * (q - a))
    value = math.fsum(total)
    return value, truncation


def _panel_edges(eps, cutoff):
    edges = [eps]
    z = eps
    while z * 2 < 1.0 and z * 2 < cutoff:
        z *= 2
        edges.append(z)
    if cutoff > 1.0:
        if edges[-1] < 1.0:
            edges.append(1.0)
        count = max(1, int(math.ceil((cutoff - 1.0) / math.pi)))
        edges.extend(np.linspace(1.0, cutoff, count + 1)[1:].tolist())
    elif edges[-1] < cutoff:
        edges.append(cutoff)
    return np.asarray(edges)


class _Integrand:
    """``|y_n(z)|^2 z^-(alpha+1)`` for the idealised sequence.

    Below ``z = 1`` the filter function is summed as its moment series from
    order ``m + 1``: the moments ``M_1..M_m`` are zero by assumption, while
    their float64 residue (~1e-16) would otherwise dominate ``|y_n|^2 ~
    z^(2m+2)`` and make the integral diverge. Above ``z = 1`` the direct sum
    is used.
    """

    def __init__(self, seq, a, m):
        self.seq = seq
        self.a = a
        self.m = m
        orders = np.arange(m + 1, m + 1 + _MOMENT_TERMS)
        moments = np.array([moment_sum(seq, int(k)) for k in orders])
        self.orders = orders
        self.coeffs = (1j) ** orders * moments / np.array([math.factorial(int(k)) for k in orders])
        sum_w = float(np.sum(np.abs(seq.weights)))
        self.noise_lo = 4 * sum_w * _EPS64 / math.factorial(m + 1)
        self.noise_hi = 4 * sum_w * _EPS64

    def __call__(self, z):
        small = z < 1.0
        y = np.empty(z.shape, dtype=complex)
        if small.any():
            zs = z[small]
            y[small] = (zs[..., None] ** self.orders) @ self.coeffs
        if (~small).any():
            y[~small] = filter_value(self.seq, z[~small])
        mag = np.abs(y)
        zp = z ** -(self.a + 1)
        # rounding model for y: sum|w| eps64 z^(m+1)/(m+1)! below 1, sum|w| eps64 above
        ey = np.where(small, self.noise_lo * np.minimum(z, 1.0) ** (self.m + 1), self.noise_hi)
        return mag**2 * zp, (2 * mag * ey + ey**2) * zp


def _gauss(integrand, lo, hi, rule):
    nodes, wts = rule
    half = (hi - lo) / 2
    mid = (hi + lo) / 2
    z = mid[:, None] + half[:, None] * nodes[None, :]
    f, noise = integrand(z)
    return half * (f @ wts), half * (noise @ wts)


def _adaptive_part(seq, a, m, eps, cutoff, panel_tol, max_depth):
    integrand = _Integrand(seq, a, m)
    edges = _panel_edges(eps, cutoff)
    lo, hi = edges[:-1], edges[1:]
    depth = 0
    accepted_val, accepted_err, accepted_noise = [], [], []
    panels = 0
    while lo.size:
        if panels + lo.size > _MAX_PANELS:
            raise NonConvergence(f"adaptive quadrature exceeded {_MAX_PANELS} panels")
        coarse, _ = _gauss(integrand, lo, hi, _GL_LO)
        fine, noise = _gauss(integrand, lo, hi, _GL_HI)
        err = np.abs(fine - coarse)
        ok = err <= panel_tol
        accepted_val.append(fine[ok])
        accepted_err.append(err[ok])
        accepted_noise.append(noise[ok])
        panels += int(ok.sum())
        if ok.all():
            break
        depth += 1
        if depth > max_depth:
            raise NonConvergence(
                f"adaptive quadrature did not meet panel tolerance {panel_tol:g} "
                f"after {max_depth} bisections"
            )
        lo_bad, hi_bad = lo[~ok], hi[~ok]
        mid = (lo_bad + hi_bad) / 2
        lo = np.concatenate((lo_bad, mid))
        hi = np.concatenate((mid, hi_bad))
        order = np.argsort(lo, kind="stable")
        lo, hi = lo[order], hi[order]
    vals = np.concatenate(accepted_val)
    # fixed reduction order, independent of refinement history
    vals = np.sort(vals)
    value = math.fsum(vals)
    err = math.fsum(np.concatenate(accepted_err))
    noise = math.fsum(np.concatenate(accepted_noise))
    return value, err, noise, panels


def _oscillatory_tail(freq, s, cutoff, max_terms=40):
    """``int_Z^inf cos(a z) z^-s dz`` for each ``a`` in ``freq``, with error bounds."""
    freq = np.asarray(freq, dtype=float)
    iaz = 1j * freq * cutoff
    lead = -np.exp(1j * freq * cutoff) / (1j * freq * cutoff**s)
    term = np.ones_like(iaz)
    partial = np.zeros_like(iaz)
    best_sum = np.zeros_like(iaz)
    best_bound = np.full(freq.shape, np.inf)
    poch = 1.0
    for k in range(max_terms):
        partial = partial + term
        poch *= s + k
        # |remainder after k+1 terms| <= (s)_{k+1} / (a^{k+1} (s+k) Z^{s+k})
        bound = poch / (freq ** (k + 1) * (s + k) * cutoff ** (s + k))
        better = bound < best_bound
        best_bound = np.where(better, bound, best_bound)
        best_sum = np.where(better, partial, best_sum)
        term = term * (s + k) / iaz
    return np.real(lead * best_sum), best_bound


def _tail_part(seq, a, cutoff):
    x = seq.nodes
    w = seq.weights.astype(float)
    mean = float(np.sum(w**2)) * cutoff ** (-a) / a
    i, j = np.triu_indices(len(x), k=1)
    if i.size == 0:
        return mean, 0.0
    freq = x[j] - x[i]
    ww = 2 * w[i] * w[j]
    osc, bound = _oscillatory_tail(freq, a + 1, cutoff)
    value = mean + math.fsum(ww * osc)
    return value, float(np.sum(np.abs(ww) * bound))


def prefactor_quadrature(
    seq: PulseSequence,
    ex: ExponentLike,
    *,
    eps: float = None,
    cutoff: float = None,
    panel_tol: float = 1e-10,
    max_depth: int = 30,
) -> QuadratureEstimate:
    """Three-piece quadrature estimate of ``I_n`` with an error bound.

    Raises
    ------
    DivergentIntegral
        If ``alpha >= 2m + 2``.
    NonConvergence
        If an adaptive panel cannot meet ``panel_tol``.
    """
    ex = _exponent(ex)
    a = ex.alpha
    m = vanishing_order(seq)
    if not a < 2 * m + 2:
        raise DivergentIntegral(a, m)
    eps = default_eps(seq.n) if eps is None else float(eps)
    cutoff = default_cutoff(seq.n, a) if cutoff is None else float(cutoff)
    if not 0 < eps < cutoff:
        raise ValueError("need 0 < eps < cutoff")

    series, series_err = _series_part(seq, a, m, eps)
    adaptive, quad_err, noise, panels = _adaptive_part(seq, a, m, eps, cutoff, panel_tol, max_depth)
    tail, tail_err = _tail_part(seq, a, cutoff)
    value = math.fsum([series, adaptive, tail])
    rounding = noise + 16 * _EPS64 * (seq.n + 2) * (abs(series) + abs(adaptive) + abs(tail))
    bound = series_err + quad_err + tail_err + rounding
    return QuadratureEstimate(
        value=value,
        error_bound=max(bound, _EPS64 * abs(value)),
        series_part=series,
        adaptive_part=adaptive,
        tail_part=tail,
        eps=eps,
        cutoff=cutoff,
        panels=panels,
        details={
            "m": m,
            "series_truncation": series_err,
            "quadrature_error": quad_err,
            "tail_error": tail_err,
            "rounding": rounding,
        },
    )
