"""Pulse-sequence value type and the canonical sequence families.

A sequence of ``n`` ideal pi pulses is stored as the relative instants
``0 < d_1 < ... < d_n < 1`` (fractions of the total duration ``t``). The
boundary instants ``d_0 = 0`` and ``d_{n+1} = 1`` are implicit; they carry
weight but no pulse.

Functions
---------
:func:`make_udd`
    Uhrig dynamical decoupling, ``d_j = sin^2(j pi / (2n + 2))``
:func:`make_cpmg`
    Carr-Purcell-Meiboom-Gill, ``d_j = (2j - 1) / 2n``
:func:`make_cdd`
    Concatenated dynamical decoupling for pure dephasing
:func:`make_custom`
    Validated user-supplied instants
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from .errors import SequenceValidationError

__all__ = [
    "FAMILIES",
    "PulseSequence",
    "SequenceFamily",
    "cdd_level_for_count",
    "cdd_pulse_count",
    "is_symmetric",
    "make_cdd",
    "make_cpmg",
    "make_custom",
    "make_udd",
    "weights",
]

FAMILIES = ("UDD", "CPMG", "CDD", "PLODD", "CUSTOM")

# generator self-check tolerance
GENERATOR_TOL = 1e-12


def weights(n: int) -> np.ndarray:
    """Integer weights ``2^{q_j} (-1)^j`` for ``j = 0..n+1``.

    ``w_0 = 1``, ``w_j = 2 (-1)^j`` for pulses and ``w_{n+1} = (-1)^{n+1}``;
    they always sum to zero.
    """
    w = np.empty(n + 2, dtype=np.int64)
    w[0] = 1
    w[1:-1] = 2 * (-1) ** np.arange(1, n + 1)
    w[-1] = (-1) ** (n + 1)
    return w


@dataclass(frozen=True)
class SequenceFamily:
    """Tag plus the parameters that generated a sequence."""

    tag: str
    n: Optional[int] = None
    level: Optional[int] = None
    alpha: Optional[float] = None

    def __post_init__(self):
        tag = self.tag.upper()
        if tag not in FAMILIES:
            raise ValueError(f"unknown sequence family {self.tag!r}")
        object.__setattr__(self, "tag", tag)
        if tag == "CDD" and self.level is not None and self.n is None:
            object.__setattr__(self, "n", cdd_pulse_count(self.level))

    def parameters(self) -> dict:
        out = {}
        if self.tag == "CDD" and self.level is not None:
            out["level"] = self.level
        if self.tag == "PLODD" and self.alpha is not None:
            out["alpha"] = self.alpha
        return out


@dataclass(frozen=True)
class PulseSequence:
    """Immutable sequence of relative pulse instants.

    Use the ``make_*`` constructors rather than building this directly;
    the constructor validates but does not sort.
    """

    instants: tuple
    family: SequenceFamily = field(default_factory=lambda: SequenceFamily("CUSTOM"))

    def __post_init__(self):
        values = tuple(float(d) for d in self.instants)
        _validate(values)
        object.__setattr__(self, "instants", values)
        if self.family.n is not None and self.family.n != len(values):
            raise SequenceValidationError(
                f"family declares n={self.family.n} but {len(values)} instants given"
            )

    @property
    def n(self) -> int:
        return len(self.instants)

    @property
    def tag(self) -> str:
        return self.family.tag

    @property
    def deltas(self) -> np.ndarray:
        return np.asarray(self.instants, dtype=float)

    @property
    def nodes(self) -> np.ndarray:
        """Instants including the implicit endpoints 0 and 1."""
        return np.concatenate(([0.0], self.instants, [1.0]))

    @property
    def weights(self) -> np.ndarray:
        return weights(self.n)

    def times(self, t: float) -> np.ndarray:
        """Absolute pulse times for total duration ``t``."""
        return t * self.deltas

    def to_json(self) -> dict:
        return {
            "family": self.family.tag,
            "n": self.n,
            "instants": list(self.instants),
            "parameters": self.family.parameters(),
        }

    @classmethod
    def from_json(cls, payload: dict) -> "PulseSequence":
        try:
            tag = payload.get("family", "CUSTOM")
            instants = payload["instants"]
            params = payload.get("parameters", {}) or {}
        except (AttributeError, KeyError) as exc:
            raise SequenceValidationError(f"malformed sequence JSON: {exc}") from None
        if "n" in payload and int(payload["n"]) != len(instants):
            raise SequenceValidationError(
                f"'n'={payload['n']} disagrees with {len(instants)} instants"
            )
        family = SequenceFamily(
            tag,
            n=None if str(tag).upper() == "CUSTOM" else len(instants),
            level=params.get("level"),
            alpha=params.get("alpha"),
        )
        return cls(tuple(instants), family)


def _validate(values: Sequence[float]) -> None:
    for j, d in enumerate(values):
        if not math.isfinite(d) or not 0.0 < d < 1.0:
            raise SequenceValidationError(
                f"instant {j} = {d!r} lies outside the open interval (0, 1)", index=j
            )
        if j > 0:
            prev = values[j - 1]
            if d == prev:
                raise SequenceValidationError(f"duplicate instant at index {j}: {d!r}", index=j)
            if d < prev:
                raise SequenceValidationError(
                    f"instants not increasing at index {j}: {prev!r} > {d!r}", index=j
                )


def make_custom(instants: Sequence[float], family: Any = None) -> PulseSequence:
    """Build a sequence from explicit instants, validating order and range."""
    fam = family if family is not None else SequenceFamily("CUSTOM")
    return PulseSequence(tuple(instants), fam)


def make_udd(n: int) -> PulseSequence:
    """Uhrig sequence with ``n >= 1`` pulses."""
    n = _positive(n)
    j = np.arange(1, n + 1)
    d = np.sin(j * np.pi / (2 * (n + 1))) ** 2
    return PulseSequence(tuple(d), SequenceFamily("UDD", n=n))


def make_cpmg(n: int) -> PulseSequence:
    """Equidistant CPMG sequence with ``n >= 1`` pulses."""
    n = _positive(n)
    j = np.arange(1, n + 1)
    return PulseSequence(tuple((2 * j - 1) / (2 * n)), SequenceFamily("CPMG", n=n))


def cdd_pulse_count(level: int) -> int:
    """Pulse count of the pure-dephasing CDD sequence at ``level``."""
    count = 0
    for step in range(level):
        count = 2 * count + (1 if step % 2 == 0 else 0)
    return count


def cdd_level_for_count(n: int) -> Optional[int]:
    """Concatenation level producing exactly ``n`` pulses, or None."""
    level = 0
    while cdd_pulse_count(level) < n:
        level += 1
    return level if cdd_pulse_count(level) == n else None


def make_cdd(level: int) -> PulseSequence:
    """Concatenated sequence for pure dephasing.

    From level ``l`` to ``l + 1`` the sequence ``p`` becomes ``p X p`` when
    ``l`` is even and ``p p`` when ``l`` is odd, compressed into unit
    duration. Level 0 is free evolution.
    """
    if int(level) != level or level < 0:
        raise ValueError(f"CDD level must be a non-negative integer, got {level!r}")
    level = int(level)
    d: list = []
    for step in range(level):
        half = [x / 2 for x in d]
        junction = [0.5] if step % 2 == 0 else []
        # interior instants sit strictly inside each half, so the junction never collides
        assert all(x < 0.5 for x in half)
        d = half + junction + [x + 0.5 for x in half]
    return PulseSequence(tuple(d), SequenceFamily("CDD", n=len(d), level=level))


def is_symmetric(seq: PulseSequence, tol: float = GENERATOR_TOL) -> bool:
    """True iff ``d_{n+1-j} = 1 - d_j`` within ``tol`` for every pulse."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    d = seq.deltas
    return bool(np.all(np.abs(d[::-1] - (1.0 - d)) <= tol))


def _positive(n) -> int:
    if int(n) != n or n < 1:
        raise ValueError(
            f"pulse count must be a positive integer, got {n!r} "
            "(use make_custom([]) for free evolution)"
        )
    return int(n)
