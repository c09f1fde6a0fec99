"""Power-law optimized dynamical decoupling (PLODD).

Minimise the decoherence prefactor ``I_n`` over symmetric pulse sequences
subject to the moment constraints ``M_p = 0`` for ``p = 1..floor(alpha/2)``,
the smallest set that keeps the decoherence integral finite. The stationary
points of the Lagrangian ``I_n - sum_p lambda_p M_p`` are found by damped
Newton iteration on the KKT system.

Only the first half of the instants is free; the second half is the mirror
image ``d_{n+1-j} = 1 - d_j``. Under that symmetry some moment constraints
become identical (for instance ``M_2 = M_1``), so dependent rows of the
constraint Jacobian are dropped before the KKT matrix is formed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasibleExponent, NonConvergence, OrderingViolation
from .sequence import PulseSequence, SequenceFamily, make_cpmg, make_udd
from .spectral import (
    PrefactorResult,
    SpectrumExponent,
    _exponent,
    formula_gradient,
    formula_hessian,
    formula_value,
    spectral_prefactor,
)

__all__ = [
    "KktState",
    "OptimizedSequence",
    "PloddProblem",
    "SolverOptions",
    "constraint_orders",
    "continuation_path",
    "kkt_residual",
    "optimize_plodd",
]

INIT_STRATEGIES = ("auto", "cpmg", "udd")


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 200
    min_gap: float = 1e-8
    rank_tol: float = 1e-10
    max_backtracks: int = 60
    init: str = "auto"
    # geometric steps used when a direct solve stalls and continuation takes over
    fallback_steps: int = 8

    def __post_init__(self):
        if self.init not in INIT_STRATEGIES:
            raise ValueError(f"init must be one of {INIT_STRATEGIES}, got {self.init!r}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class PloddProblem:
    """Pulse count ``n`` (even, >= 2) and spectral exponent."""

    n: int
    ex: SpectrumExponent
    symmetric: bool = True
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        try:
            ex = _exponent(self.ex)
        except ValueError as exc:
            raise InfeasibleExponent(str(exc)) from None
        object.__setattr__(self, "ex", ex)
        if ex.alpha < 1:
            # I_n falls monotonically as pulses merge, so no interior minimum exists
            raise InfeasibleExponent(f"PLODD needs alpha >= 1, got alpha={ex.alpha:g}")
        if int(self.n) != self.n or self.n < 2 or self.n % 2:
            raise ValueError(f"PLODD needs an even pulse count n >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if not self.symmetric:
            raise NotImplementedError("only symmetric PLODD sequences are supported")
        if self.m_constraints > self.n:
            raise InfeasibleExponent(
                f"alpha={ex.alpha:g} needs {self.m_constraints} vanishing moments, "
                f"more than n={self.n} pulses can provide (need alpha < {2 * self.n + 2})"
            )

    @property
    def alpha(self) -> float:
        return self.ex.alpha

    @property
    def m_constraints(self) -> int:
        """``floor(alpha / 2)``."""
        return self.ex.required_order

    @property
    def free(self) -> int:
        return self.n // 2


@dataclass(frozen=True)
class KktState:
    """Newton iterate.

    ``multipliers`` are in the units of ``I_n``; the stationarity residual is
    measured on the objective divided by ``scale`` (the max-norm of the
    gradient of ``I_n`` at the start point), so ``residual_norm`` is
    dimensionless.
    """

    deltas: tuple
    multipliers: tuple
    orders: tuple
    scale: float
    residual_norm: float = math.inf
    iterations: int = 0
    second_order_ok: Optional[bool] = None


@dataclass(frozen=True)
class OptimizedSequence:
    sequence: PulseSequence
    prefactor: PrefactorResult
    kkt: KktState
    provenance: dict

    @property
    def alpha(self) -> float:
        return self.provenance["alpha"]

    def to_json(self) -> dict:
        out = self.sequence.to_json()
        out.update(
            {
                "alpha": self.alpha,
                "prefactor": self.prefactor.value,
                "kkt_residual": self.kkt.residual_norm,
                "multipliers": list(self.kkt.multipliers),
                "constraint_orders": list(self.kkt.orders),
                "objective_scale": self.kkt.scale,
                "iterations": self.kkt.iterations,
                "second_order_ok": self.kkt.second_order_ok,
                # the cache flag describes this process, not the solution
                "provenance": {k: v for k, v in self.provenance.items() if k != "cache"},
            }
        )
        return out

    @classmethod
    def from_json(cls, payload: dict) -> "OptimizedSequence":
        """Rebuild from :meth:`to_json` output; the prefactor is recomputed, not trusted."""
        seq = PulseSequence.from_json(payload)
        alpha = float(payload["alpha"])
        family = SequenceFamily("PLODD", n=seq.n, alpha=alpha)
        seq = PulseSequence(seq.instants, family)
        kkt = KktState(
            deltas=tuple(seq.instants[: seq.n // 2]),
            multipliers=tuple(float(v) for v in payload.get("multipliers", ())),
            orders=tuple(int(p) for p in payload.get("constraint_orders", ())),
            scale=float(payload.get("objective_scale", 1.0)),
            residual_norm=float(payload["kkt_residual"]),
            iterations=int(payload.get("iterations", 0)),
            second_order_ok=payload.get("second_order_ok"),
        )
        provenance = dict(payload.get("provenance") or {"n": seq.n, "alpha": alpha})
        return cls(seq, spectral_prefactor(seq, alpha), kkt, provenance)


# -- reduced symmetric parametrisation ---------------------------------------


def _expand(x: np.ndarray) -> np.ndarray:
    return np.concatenate((x, 1.0 - x[::-1]))


def _fold(n: int) -> np.ndarray:
    """``d(full)/d(free)``: +1 on the first half, -1 on the mirrored half."""
    h = n // 2
    p = np.zeros((n, h))
    p[np.arange(h), np.arange(h)] = 1.0
    p[n - 1 - np.arange(h), np.arange(h)] = -1.0
    return p


def _moments(full: np.ndarray, orders) -> np.ndarray:
    n = len(full)
    w = np.empty(n + 1)
    w[:n] = 2.0 * (-1.0) ** np.arange(1, n + 1)
    w[n] = (-1.0) ** (n + 1)
    nodes = np.concatenate((full, [1.0]))
    return np.array([math.fsum(w * nodes**p) for p in orders])


def _moment_jacobian(full: np.ndarray, orders) -> np.ndarray:
    n = len(full)
    w = 2.0 * (-1.0) ** np.arange(1, n + 1)
    return np.array([w * p * full ** (p - 1) for p in orders]).reshape(len(orders), n)


def _moment_hessian_diag(full: np.ndarray, p: int) -> np.ndarray:
    n = len(full)
    w = 2.0 * (-1.0) ** np.arange(1, n + 1)
    if p < 2:
        return np.zeros(n)
    return w * p * (p - 1) * full ** (p - 2)


def constraint_orders(problem: PloddProblem, x: np.ndarray) -> tuple:
    """Moment orders kept after dropping numerically dependent constraint rows.

    Rows are admitted lowest order first; a row is dropped when it raises the
    smallest singular value no higher than ``rank_tol`` times the largest
    singular value of the full Jacobian.
    """
    total = problem.m_constraints
    if total == 0:
        return ()
    fold = _fold(problem.n)
    jac = _moment_jacobian(_expand(x), range(1, total + 1)) @ fold
    smax = np.linalg.norm(jac, 2)
    kept: list = []
    for p in range(1, total + 1):
        trial = jac[[q - 1 for q in kept + [p]]]
        sv = np.linalg.svd(trial, compute_uv=False)
        if sv[-1] > problem.options.rank_tol * smax and len(kept) < problem.free:
            kept.append(p)
    return tuple(kept)


class _Kkt:
    """KKT system of the scaled objective in the free variables."""

    def __init__(self, problem: PloddProblem, orders, scale: float):
        self.problem = problem
        self.ex = problem.ex
        self.orders = tuple(orders)
        self.scale = scale
        self.fold = _fold(problem.n)

    def residual(self, x, mu):
        full = _expand(x)
        g = self.fold.T @ formula_gradient(full, self.ex) / self.scale
        if self.orders:
            jac = _moment_jacobian(full, self.orders) @ self.fold
            return np.concatenate((g - jac.T @ mu, _moments(full, self.orders)))
        return g

    def matrix(self, x, mu):
        full = _expand(x)
        hess = formula_hessian(full, self.ex) / self.scale
        for lam, p in zip(mu, self.orders):
            hess = hess - lam * np.diag(_moment_hessian_diag(full, p))
        h_red = self.fold.T @ hess @ self.fold
        if not self.orders:
            return h_red, h_red
        jac = _moment_jacobian(full, self.orders) @ self.fold
        k = len(self.orders)
        top = np.hstack((h_red, -jac.T))
        bottom = np.hstack((jac, np.zeros((k, k))))
        return np.vstack((top, bottom)), h_red

    def multipliers(self, x):
        if not self.orders:
            return np.zeros(0)
        full = _expand(x)
        g = self.fold.T @ formula_gradient(full, self.ex) / self.scale
        jac = _moment_jacobian(full, self.orders) @ self.fold
        return np.linalg.lstsq(jac.T, g, rcond=None)[0]

    def second_order_ok(self, x, mu) -> bool:
        _, h_red = self.matrix(x, mu)
        if self.orders:
            jac = _moment_jacobian(_expand(x), self.orders) @ self.fold
            _, s, vt = np.linalg.svd(jac)
            null = vt[len(self.orders):].T
            h_red = null.T @ h_red @ null
        if h_red.size == 0:
            return True
        return bool(np.all(np.linalg.eigvalsh((h_red + h_red.T) / 2) > 0))


def _ordered(x: np.ndarray, min_gap: float) -> bool:
    nodes = np.concatenate(([0.0], x, [0.5]))
    gaps = np.diff(nodes)
    gaps[-1] *= 2  # gap between x_h and its mirror 1 - x_h
    return bool(np.all(gaps >= min_gap))


def _initial(problem: PloddProblem) -> tuple:
    strategy = problem.options.init
    if strategy == "auto":
        strategy = "cpmg" if problem.alpha < 4 else "udd"
    seq = make_cpmg(problem.n) if strategy == "cpmg" else make_udd(problem.n)
    return seq.deltas[: problem.free].copy(), strategy


def _restore(kkt: _Kkt, x: np.ndarray, min_gap: float, tol: float = 1e-14, max_iter: int = 50):
    """Gauss-Newton (minimum-norm) steps back onto ``M_p = 0``; None on failure."""
    if not kkt.orders:
        return x
    for _ in range(max_iter):
        full = _expand(x)
        c = _moments(full, kkt.orders)
        if np.max(np.abs(c)) <= tol * len(full):
            return x
        jac = _moment_jacobian(full, kkt.orders) @ kkt.fold
        step = np.linalg.lstsq(jac, -c, rcond=None)[0]
        t = 1.0
        while not _ordered(x + t * step, min_gap):
            t /= 2
            if t < 1e-12:
                return None
        x = x + t * step
    full = _expand(x)
    return x if np.max(np.abs(_moments(full, kkt.orders))) <= 1e3 * tol * len(full) else None


def _reduced_step(kkt: _Kkt, x: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Saddle-free Newton step in the tangent space of the constraints.

    Eigenvalues of the reduced Lagrangian Hessian are replaced by their
    magnitudes (floored), so the step is always a descent direction.
    """
    full = _expand(x)
    g = kkt.fold.T @ formula_gradient(full, kkt.ex) / kkt.scale
    _, h_red = kkt.matrix(x, mu)
    if kkt.orders:
        jac = _moment_jacobian(full, kkt.orders) @ kkt.fold
        _, _, vt = np.linalg.svd(jac)
        basis = vt[len(kkt.orders):].T
    else:
        basis = np.eye(len(x))
    if basis.shape[1] == 0:
        return np.zeros_like(x)
    hr = basis.T @ h_red @ basis
    evals, evecs = np.linalg.eigh((hr + hr.T) / 2)
    floor = 1e-8 * max(np.max(np.abs(evals)), 1e-300)
    evals = np.maximum(np.abs(evals), floor)
    gr = basis.T @ g
    return -basis @ (evecs @ ((evecs.T @ gr) / evals))


def _gradient_scale(problem: PloddProblem, x: np.ndarray) -> float:
    """Max-norm of the folded gradient of ``I_n`` at ``x`` (1 if it vanishes)."""
    g = _fold(problem.n).T @ formula_gradient(_expand(x), problem.ex)
    s = float(np.max(np.abs(g)))
    return s if s > 0 and math.isfinite(s) else 1.0


def _solve(problem: PloddProblem, x0: np.ndarray):
    opts = problem.options
    x = np.asarray(x0, dtype=float).copy()
    if not _ordered(x, opts.min_gap):
        raise OrderingViolation("initial point is not strictly ordered", alpha=problem.alpha)
    orders = constraint_orders(problem, x)
    scale = _gradient_scale(problem, x)
    kkt = _Kkt(problem, orders, scale)
    restored = _restore(kkt, x, opts.min_gap)
    if restored is None:
        raise OrderingViolation(
            "could not restore the moment constraints inside the ordered simplex",
            alpha=problem.alpha,
        )
    x = restored
    mu = kkt.multipliers(x)
    res = kkt.residual(x, mu)
    f = formula_value(_expand(x), problem.ex) / scale

    def state(it, x_, mu_, r_):
        return KktState(
            deltas=tuple(float(v) for v in x_),
            multipliers=tuple(float(v) for v in mu_ * scale),
            orders=orders,
            scale=scale,
            residual_norm=float(np.max(np.abs(r_))) if r_.size else 0.0,
            iterations=it,
        )

    for it in range(opts.max_iter + 1):
        rnorm = float(np.max(np.abs(res))) if res.size else 0.0
        if rnorm <= opts.tol:
            ok = kkt.second_order_ok(x, mu)
            if not ok and problem.alpha != 1.0:
                # at alpha = 1 every sequence gives I_n = pi and the Hessian vanishes
                raise NonConvergence(
                    "stationary point is not a local minimum",
                    best=state(it, x, mu, res),
                    alpha=problem.alpha,
                )
            return replace(state(it, x, mu, res), second_order_ok=ok)
        if it == opts.max_iter:
            break
        # full KKT Newton step, kept only when it at least halves the residual
        mat, _ = kkt.matrix(x, mu)
        try:
            step = np.linalg.solve(mat, -res)
        except np.linalg.LinAlgError:
            step = None
        if step is not None:
            x_new = x + step[: problem.free]
            if _ordered(x_new, opts.min_gap):
                mu_new = mu + step[problem.free:]
                res_new = kkt.residual(x_new, mu_new)
                if np.max(np.abs(res_new)) <= 0.5 * rnorm:
                    x, mu, res = x_new, mu_new, res_new
                    f = formula_value(_expand(x), problem.ex) / scale
                    continue
        # globalised step: descent on the constraint manifold
        d = _reduced_step(kkt, x, mu)
        t = 1.0
        accepted = False
        ordered_once = False
        for _ in range(opts.max_backtracks):
            trial = x + t * d
            if _ordered(trial, opts.min_gap):
                ordered_once = True
                y = _restore(kkt, trial, opts.min_gap)
                if y is not None:
                    f_y = formula_value(_expand(y), problem.ex) / scale
                    mu_y = kkt.multipliers(y)
                    res_y = kkt.residual(y, mu_y)
                    decrease = f_y < f - 1e-4 * t * abs(float(d @ (kkt.fold.T @ formula_gradient(_expand(x), problem.ex)) / scale))
                    level = f_y <= f + 4 * np.finfo(float).eps * abs(f)
                    if decrease or (level and np.linalg.norm(res_y) < np.linalg.norm(res)):
                        x, mu, res, f = y, mu_y, res_y, f_y
                        accepted = True
                        break
            t /= 2
        if not accepted:
            best = state(it, x, mu, res)
            if not ordered_once:
                raise OrderingViolation(
                    "Newton step could not be damped into the ordered simplex",
                    best=best,
                    alpha=problem.alpha,
                )
            raise NonConvergence(
                f"KKT residual stagnated at {best.residual_norm:.3e} after {it} iterations",
                best=best,
                alpha=problem.alpha,
            )
    best = state(opts.max_iter, x, mu, res)
    raise NonConvergence(
        f"no convergence in {opts.max_iter} iterations (residual {best.residual_norm:.3e})",
        best=best,
        alpha=problem.alpha,
    )


def _finish(problem: PloddProblem, kkt: KktState, provenance: dict) -> OptimizedSequence:
    full = _expand(np.asarray(kkt.deltas))
    family = SequenceFamily("PLODD", n=problem.n, alpha=problem.alpha)
    seq = PulseSequence(tuple(full), family)
    prefactor = spectral_prefactor(seq, problem.ex)
    return OptimizedSequence(seq, prefactor, kkt, provenance)


def optimize_plodd(problem: PloddProblem, initial: Optional[Sequence[float]] = None) -> OptimizedSequence:
    """Solve the PLODD system for ``problem``.

    Parameters
    ----------
    problem : PloddProblem
    initial : sequence of float, optional
        Warm start for the free instants ``d_1..d_{n/2}``; overrides the
        problem's init strategy.

    Raises
    ------
    NonConvergence
        The residual stagnated; ``exc.best`` holds the best iterate.
    OrderingViolation
        No damped step kept the instants strictly ordered.
    """
    if initial is not None:
        x0 = np.asarray(initial, dtype=float)
        if x0.shape != (problem.free,):
            raise ValueError(f"initial point must have {problem.free} entries")
        strategy = "warm"
    else:
        x0, strategy = _initial(problem)
    provenance = {"n": problem.n, "alpha": problem.alpha, "init": strategy, "path": [problem.alpha]}
    try:
        kkt = _solve(problem, x0)
    except NonConvergence as exc:
        if initial is not None or problem.options.fallback_steps < 2:
            raise
        kkt = _fallback(problem, exc)
        provenance["init"] = f"{strategy}+continuation"
        provenance["path"] = kkt[1]
        kkt = kkt[0]
    return _finish(problem, kkt, provenance)


def _fallback(problem: PloddProblem, exc: NonConvergence):
    """Continuation from a nearby exponent where the direct solve is easy."""
    start = 2.0 if problem.alpha > 2.0 else 1.0
    grid = np.geomspace(start, problem.alpha, problem.options.fallback_steps)
    x, _ = _initial(replace(problem, ex=SpectrumExponent(grid[0])))
    try:
        for a in grid:
            sub = replace(problem, ex=SpectrumExponent(float(a)))
            kkt = _solve(sub, np.asarray(x))
            x = np.asarray(kkt.deltas)
    except NonConvergence:
        raise exc from None
    return kkt, [float(a) for a in grid]


def kkt_residual(problem: PloddProblem, state: KktState) -> np.ndarray:
    """Stationarity (folded onto the free instants) followed by retained constraints."""
    x = np.asarray(state.deltas, dtype=float)
    if x.shape != (problem.free,):
        raise ValueError("state does not match the problem size")
    kkt = _Kkt(problem, state.orders, state.scale)
    mu = np.asarray(state.multipliers, dtype=float) / state.scale
    return kkt.residual(x, mu)


def continuation_path(
    n: int,
    alpha_from: float,
    alpha_to: float,
    steps: int,
    options: Optional[SolverOptions] = None,
) -> list:
    """Warm-started solves on a geometric exponent grid ending at ``alpha_to``.

    ``steps`` is the number of grid points; with ``steps == 1`` only
    ``alpha_to`` is solved.
    """
    if alpha_from <= 0 or alpha_to <= 0:
        raise InfeasibleExponent("exponents must be positive")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    options = options or SolverOptions()
    grid = [float(alpha_to)] if steps == 1 else [float(a) for a in np.geomspace(alpha_from, alpha_to, steps)]
    out: list = []
    for a in grid:
        problem = PloddProblem(n, SpectrumExponent(a), options=options)
        warm = None if not out else out[-1].kkt.deltas
        try:
            result = optimize_plodd(problem, initial=warm)
        except NonConvergence as exc:
            exc.alpha = a
            exc.args = (f"{exc.args[0]} [alpha={a:g}]",)
            raise
        if out:
            result.provenance["path"] = [r.alpha for r in out] + [a]
        out.append(result)
    return out
