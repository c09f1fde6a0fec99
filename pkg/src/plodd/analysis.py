"""Scans of ``I_n`` over sequence families, power-law fits and exponent trends.

CSV schemas (stable, ``.`` decimal separator):

* scan: ``family,n,alpha,I_n,feasible``; ``I_n`` is empty on infeasible or
  failed rows.
* trend: ``alpha,gap_udd,ln_In``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, TextIO, Union

import numpy as np
from scipy import stats

from .errors import InfeasibleExponent, InsufficientData, MismatchedLength, PloddError
from .optimizer import OptimizedSequence, PloddProblem, SolverOptions, optimize_plodd
from .sequence import (
    PulseSequence,
    SequenceFamily,
    cdd_level_for_count,
    make_cdd,
    make_cpmg,
    make_udd,
)
from .spectral import ExponentLike, SpectrumExponent, _exponent, is_feasible, spectral_prefactor

__all__ = [
    "PowerLawFit",
    "ScanRow",
    "ScanTable",
    "TrendRow",
    "TrendTable",
    "alpha_trend",
    "iter_alpha_trend",
    "fit_power_law",
    "max_instant_gap",
    "scan_prefactor",
    "write_scan_csv",
    "write_trend_csv",
]

SCAN_FAMILIES = ("UDD", "CPMG", "CDD", "PLODD")

Solver = Callable[[PloddProblem], OptimizedSequence]


@dataclass(frozen=True)
class ScanRow:
    family: str
    n: int
    alpha: float
    value: Optional[float]
    feasible: bool
    provenance: str
    error: Optional[str] = None

    @property
    def key(self) -> tuple:
        return (self.family, self.n, self.alpha)

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class ScanTable:
    """Scan rows sorted by ``(family, n, alpha)``, one per key."""

    rows: tuple

    def __post_init__(self):
        rows = tuple(sorted(self.rows, key=lambda r: r.key))
        keys = [r.key for r in rows]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (family, n, alpha) rows in scan table")
        for r in rows:
            if r.value is not None and not r.feasible:
                raise ValueError(f"infeasible row {r.key} carries a value")
        object.__setattr__(self, "rows", rows)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)

    def select(self, family: str) -> List[ScanRow]:
        tag = family.upper()
        return [r for r in self.rows if r.family == tag]

    def value(self, family: str, n: int) -> Optional[float]:
        for r in self.select(family):
            if r.n == n:
                return r.value
        raise KeyError((family, n))

    @property
    def failures(self) -> List[ScanRow]:
        return [r for r in self.rows if not r.ok]


@dataclass(frozen=True)
class PowerLawFit:
    """OLS fit ``ln I_n = a1 ln n + a0``."""

    family: str
    alpha: float
    a0: float
    a1: float
    se_a0: float
    se_a1: float
    n_range: tuple
    n_used: tuple

    @property
    def scaling_constant(self) -> float:
        """``C`` in ``I_n ~ (C / n)^(alpha - 1)``, read off the intercept."""
        if self.alpha == 1:
            return math.nan
        return math.exp(self.a0 / (self.alpha - 1))


@dataclass(frozen=True)
class TrendRow:
    alpha: float
    gap_udd: float
    prefactor: float
    sequence: PulseSequence

    @property
    def ln_prefactor(self) -> float:
        return math.log(self.prefactor)


@dataclass(frozen=True)
class TrendTable:
    n: int
    rows: tuple

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def linear_fit(self):
        """Least-squares line of ``ln I_n`` against ``alpha``: ``(slope, intercept, r_squared)``."""
        if len(self.rows) < 3:
            raise InsufficientData("a linear fit needs at least 3 trend rows")
        res = stats.linregress(self.column("alpha"), self.column("ln_prefactor"))
        return res.slope, res.intercept, res.rvalue**2


def max_instant_gap(a: PulseSequence, b: PulseSequence) -> float:
    """``max_j |d_j^a - d_j^b|``; 0 for empty sequences."""
    if a.n != b.n:
        raise MismatchedLength(f"sequences have {a.n} and {b.n} pulses")
    if a.n == 0:
        return 0.0
    return float(np.max(np.abs(a.deltas - b.deltas)))


def _generated(tag: str, n: int) -> Optional[PulseSequence]:
    if tag == "UDD":
        return make_udd(n)
    if tag == "CPMG":
        return make_cpmg(n)
    level = cdd_level_for_count(n)
    return None if level is None else make_cdd(level)


def _plodd_row(n: int, ex: SpectrumExponent, solver: Solver, options: SolverOptions) -> Optional[ScanRow]:
    a = ex.alpha
    if n % 2:
        return None
    try:
        problem = PloddProblem(n, ex, options=options)
    except InfeasibleExponent as exc:
        if a >= 2 * n + 2:
            return ScanRow("PLODD", n, a, None, False, "optimizer")
        return ScanRow("PLODD", n, a, None, True, "optimizer", error=str(exc))
    try:
        result = solver(problem)
    except PloddError as exc:
        return ScanRow("PLODD", n, a, None, True, "optimizer", error=f"{type(exc).__name__}: {exc}")
    hit = result.provenance.get("cache")
    source = "optimizer" if hit is None else f"optimizer (cache {hit})"
    return ScanRow("PLODD", n, a, result.prefactor.value, True, source)


def scan_prefactor(
    families: Iterable[Union[SequenceFamily, str]],
    n_values: Iterable[int],
    ex: ExponentLike,
    *,
    solver: Optional[Solver] = None,
    options: Optional[SolverOptions] = None,
) -> ScanTable:
    """Evaluate ``I_n`` for every family at every admissible ``n``.

    CDD contributes rows only at its pulse counts ``1, 2, 5, 10, 21, ...``
    and PLODD only at even ``n``. Infeasible pairs are flagged, and a
    failed PLODD solve is recorded on its row without stopping the scan.
    ``solver`` replaces :func:`optimize_plodd`, e.g. with a cached variant.
    """
    ex = _exponent(ex)
    solver = solver or optimize_plodd
    options = options or SolverOptions()
    tags = []
    for fam in families:
        tag = fam.tag if isinstance(fam, SequenceFamily) else SequenceFamily(fam).tag
        if tag not in SCAN_FAMILIES:
            raise ValueError(f"cannot scan family {tag!r}")
        if tag not in tags:
            tags.append(tag)
    counts = sorted(set(int(v) for v in n_values))
    if counts and counts[0] < 1:
        raise ValueError("pulse counts must be positive")
    rows = []
    for tag in tags:
        for n in counts:
            if tag == "PLODD":
                row = _plodd_row(n, ex, solver, options)
                if row is not None:
                    rows.append(row)
                continue
            seq = _generated(tag, n)
            if seq is None:
                continue
            source = f"{tag.lower()}({seq.family.level if tag == 'CDD' else n})"
            if is_feasible(seq, ex):
                rows.append(ScanRow(tag, n, ex.alpha, spectral_prefactor(seq, ex).value, True, source))
            else:
                rows.append(ScanRow(tag, n, ex.alpha, None, False, source))
    return ScanTable(tuple(rows))


def fit_power_law(table: ScanTable, family: str, n_min: int = 4, n_max: int = 30) -> PowerLawFit:
    """Least-squares fit of ``ln I_n`` against ``ln n`` over feasible rows in ``[n_min, n_max]``."""
    rows = [
        r
        for r in table.select(family)
        if n_min <= r.n <= n_max and r.feasible and r.value is not None and r.value > 0
    ]
    alphas = {r.alpha for r in rows}
    if len(alphas) > 1:
        raise ValueError(f"rows mix exponents {sorted(alphas)}")
    if len(rows) < 3:
        raise InsufficientData(
            f"{family}: {len(rows)} feasible rows in n=[{n_min}, {n_max}], need at least 3"
        )
    x = np.log([r.n for r in rows])
    y = np.log([r.value for r in rows])
    res = stats.linregress(x, y)
    return PowerLawFit(
        family=family.upper(),
        alpha=rows[0].alpha,
        a0=float(res.intercept),
        a1=float(res.slope),
        se_a0=float(res.intercept_stderr),
        se_a1=float(res.stderr),
        n_range=(n_min, n_max),
        n_used=tuple(r.n for r in rows),
    )


def iter_alpha_trend(
    n: int,
    alpha_grid: Sequence[float],
    *,
    options: Optional[SolverOptions] = None,
) -> Iterator[TrendRow]:
    """Rows of :func:`alpha_trend`, yielded as each solve finishes."""
    grid = [float(a) for a in alpha_grid]
    if not grid:
        raise ValueError("alpha grid is empty")
    if any(a <= 0 for a in grid):
        raise InfeasibleExponent("exponents must be positive")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("alpha grid must be strictly ascending")
    options = options or SolverOptions()
    udd = make_udd(n)
    warm = None
    for a in grid:
        problem = PloddProblem(n, SpectrumExponent(a), options=options)
        try:
            result = optimize_plodd(problem, initial=warm)
        except PloddError as exc:
            exc.alpha = a
            exc.args = (f"{exc.args[0]} [alpha={a:g}]",)
            raise
        warm = result.kkt.deltas
        yield TrendRow(a, max_instant_gap(result.sequence, udd), result.prefactor.value, result.sequence)


def alpha_trend(
    n: int,
    alpha_grid: Sequence[float],
    *,
    options: Optional[SolverOptions] = None,
) -> TrendTable:
    """PLODD along an ascending exponent grid, each solve warm-started from the previous one.

    Reports the gap to UDD(n) and ``I_n`` per exponent. A solver failure is
    re-raised with the failing ``alpha`` attached.
    """
    return TrendTable(n, tuple(iter_alpha_trend(n, alpha_grid, options=options)))


def _fixed(x: float) -> str:
    return f"{x:.12f}"


def _sci(x: float) -> str:
    return f"{x:.12e}"


def _write(rows, header, sink: Union[str, TextIO, None]) -> Optional[str]:
    if sink is None:
        buf = io.StringIO()
        _emit(buf, header, rows)
        return buf.getvalue()
    if isinstance(sink, str):
        with open(sink, "w", newline="", encoding="ascii") as fh:
            _emit(fh, header, rows)
        return None
    _emit(sink, header, rows)
    return None


def _emit(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def write_scan_csv(table: ScanTable, sink: Union[str, TextIO, None] = None) -> Optional[str]:
    """Write ``family,n,alpha,I_n,feasible``; returns the text when ``sink`` is None."""
    rows = [
        (r.family, r.n, _fixed(r.alpha), "" if r.value is None else _sci(r.value), str(r.feasible).lower())
        for r in table
    ]
    return _write(rows, ("family", "n", "alpha", "I_n", "feasible"), sink)


def write_trend_csv(table: TrendTable, sink: Union[str, TextIO, None] = None) -> Optional[str]:
    """Write ``alpha,gap_udd,ln_In``; returns the text when ``sink`` is None."""
    rows = [(_fixed(r.alpha), _fixed(r.gap_udd), _fixed(r.ln_prefactor)) for r in table.rows]
    return _write(rows, ("alpha", "gap_udd", "ln_In"), sink)
