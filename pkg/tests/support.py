"""Shared test helpers: random sequences with a prescribed vanishing order."""
from __future__ import annotations

import math

import numpy as np

from plodd import make_custom, moment_sum, vanishing_order
from plodd.sequence import weights

MIN_GAP = 0.02


def _moments(d: np.ndarray, m: int) -> np.ndarray:
    w = weights(len(d)).astype(float)
    x = np.concatenate(([0.0], d, [1.0]))
    return np.array([math.fsum(w * x**p) for p in range(1, m + 1)])


def _jacobian(d: np.ndarray, m: int) -> np.ndarray:
    w = weights(len(d))[1:-1].astype(float)
    return np.array([w * p * d ** (p - 1) for p in range(1, m + 1)])


def random_feasible_sequence(rng: np.random.Generator, n: int, m: int, max_tries: int = 200):
    """Random ``n``-pulse sequence whose vanishing order is exactly ``m``.

    Uniform instants are projected onto ``M_1 = .. = M_m = 0`` by
    minimum-norm Newton steps. Draws that lose ordering, crowd closer than
    ``MIN_GAP`` or leave ``|M_(m+1)|`` below 0.01 (nearly one order higher)
    are rejected.
    """
    if m > n:
        raise ValueError("vanishing order cannot exceed n")
    for _ in range(max_tries):
        d = np.sort(rng.uniform(0.0, 1.0, n))
        for _ in range(60):
            if m == 0:
                break
            c = _moments(d, m)
            if np.max(np.abs(c)) < 1e-14:
                break
            d = d + np.linalg.lstsq(_jacobian(d, m), -c, rcond=None)[0]
        gaps = np.diff(np.concatenate(([0.0], d, [1.0])))
        if np.any(gaps < MIN_GAP):
            continue
        seq = make_custom(d)
        if vanishing_order(seq) != m or abs(moment_sum(seq, m + 1)) < 1e-2:
            continue
        return seq
    raise RuntimeError(f"no random sequence with n={n}, m={m}")


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    g = np.empty_like(x)
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> str:
    """Store and return the one-line verdict for an acceptance criterion."""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line
