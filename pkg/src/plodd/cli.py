"""``plodd`` command-line interface.

Exit codes: 0 ok, 1 I/O failure, 2 usage error, 3 solver failure,
4 divergent integral. Numbers are printed with 12 decimals; prefactors,
which span many decades, in scientific notation.
"""
from __future__ import annotations

import json
import math
import sys
from typing import List, Optional

import click
import numpy as np

from . import analysis
from .cache import SequenceCache
from .errors import (
    DivergentIntegral,
    InfeasibleExponent,
    InsufficientData,
    NonConvergence,
    PloddError,
    SequenceValidationError,
)
from .optimizer import (
    OptimizedSequence,
    PloddProblem,
    SolverOptions,
    _expand,
    continuation_path,
    optimize_plodd,
)
from .oracle import divergence_residual, prefactor_quadrature
from .sequence import PulseSequence, SequenceFamily, make_cdd, make_cpmg, make_custom, make_udd
from .spectral import SpectrumExponent, formula_value, spectral_prefactor

EXIT_IO = 1
EXIT_USAGE = 2
EXIT_CONVERGENCE = 3
EXIT_DIVERGENT = 4


class _Exit(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


def _fixed(x: float) -> str:
    return f"{x:.12f}"


def _sci(x: float) -> str:
    return f"{x:.12e}"


def parse_range(text: str, integer: bool) -> List[float]:
    """``lo:hi[:step]`` (inclusive) or a single value."""
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise click.BadParameter(f"{text!r} is not a number or lo:hi[:step] range") from None
    if len(nums) == 1:
        values = nums
    elif len(nums) in (2, 3):
        lo, hi = nums[0], nums[1]
        step = nums[2] if len(nums) == 3 else 1.0
        if step <= 0 or hi < lo:
            raise click.BadParameter(f"{text!r}: need lo <= hi and step > 0")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        values = [lo + k * step for k in range(count)]
    else:
        raise click.BadParameter(f"{text!r} is not a number or lo:hi[:step] range")
    if integer:
        if any(v != int(v) for v in values):
            raise click.BadParameter(f"{text!r} must contain integers")
        return [int(v) for v in values]
    return [round(v, 12) for v in values]


def _write_json(payload: dict, path: str) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise _Exit(f"cannot write {path}: {exc}", EXIT_IO) from None


def _positive_alpha(alpha: float) -> SpectrumExponent:
    try:
        return SpectrumExponent(alpha)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--alpha") from None


def _options(**kwargs) -> SolverOptions:
    try:
        return SolverOptions(**{k: v for k, v in kwargs.items() if v is not None})
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None


@click.group()
@click.version_option(package_name="artifact")
def cli():
    """Dynamical decoupling sequences for power-law dephasing noise."""


@cli.command()
@click.argument("family", type=click.Choice(["udd", "cpmg", "cdd"], case_sensitive=False))
@click.argument("parameter", type=int)
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Write the sequence JSON here.")
def generate(family: str, parameter: int, output: Optional[str]):
    """Generate a canonical sequence; PARAMETER is n (UDD, CPMG) or the level (CDD)."""
    family = family.lower()
    try:
        if family == "cdd":
            seq = make_cdd(parameter)
        else:
            seq = (make_udd if family == "udd" else make_cpmg)(parameter)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="PARAMETER") from None
    if output:
        _write_json(seq.to_json(), output)
    for d in seq.instants:
        click.echo(_fixed(d))


def _load_sequence(source: str, parameter: Optional[str]) -> PulseSequence:
    tag = source.lower()
    try:
        if tag in ("udd", "cpmg", "cdd"):
            if parameter is None:
                raise click.UsageError(f"{tag} needs a pulse count or level")
            try:
                k = int(parameter)
            except ValueError:
                raise click.BadParameter(f"{parameter!r} is not an integer") from None
            return {"udd": make_udd, "cpmg": make_cpmg, "cdd": make_cdd}[tag](k)
        if tag == "custom":
            if parameter is None:
                raise click.UsageError("custom needs a JSON list of instants, e.g. '[0.5]'")
            try:
                instants = json.loads(parameter)
            except ValueError:
                raise click.BadParameter(f"{parameter!r} is not a JSON list") from None
            if not isinstance(instants, list):
                raise click.BadParameter(f"{parameter!r} is not a JSON list")
            return make_custom(instants)
    except (SequenceValidationError, ValueError) as exc:
        if isinstance(exc, click.ClickException):
            raise
        raise click.BadParameter(str(exc)) from None
    try:
        with open(source, encoding="utf-8") as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise _Exit(f"cannot read {source}: {exc}", EXIT_IO) from None
    except ValueError as exc:
        raise _Exit(f"{source} is not valid JSON: {exc}", EXIT_IO) from None
    try:
        return PulseSequence.from_json(payload)
    except (SequenceValidationError, ValueError, TypeError) as exc:
        raise click.BadParameter(f"{source}: {exc}") from None


@cli.command()
@click.argument("source")
@click.argument("parameter", required=False)
@click.option("--alpha", type=float, required=True, help="Spectral exponent alpha > 0.")
@click.option("--with-oracle", is_flag=True, help="Cross-check by regularized quadrature.")
def evaluate(source: str, parameter: Optional[str], alpha: float, with_oracle: bool):
    """Evaluate I_n for a family (udd/cpmg/cdd N, custom '[..]') or a sequence JSON file."""
    seq = _load_sequence(source, parameter)
    ex = _positive_alpha(alpha)
    try:
        result = spectral_prefactor(seq, ex)
    except DivergentIntegral as exc:
        raise _Exit(str(exc), EXIT_DIVERGENT) from None
    click.echo(f"I_n = {_sci(result.value)}")
    click.echo(f"branch = {result.branch.value}")
    click.echo(f"vanishing_order = {result.m}")
    if with_oracle:
        try:
            est = prefactor_quadrature(seq, ex)
        except NonConvergence as exc:
            raise _Exit(f"quadrature failed: {exc}", EXIT_CONVERGENCE) from None
        res = divergence_residual(seq, ex)
        click.echo(f"quadrature = {_sci(est.value)}")
        click.echo(f"error_bound = {_sci(est.error_bound)}")
        click.echo(f"difference = {_sci(abs(est.value - result.value))}")
        click.echo(f"divergence_residual_max = {_sci(res.max_abs)}")


def _best_payload(problem: PloddProblem, exc: NonConvergence) -> Optional[dict]:
    best = exc.best
    if best is None:
        return None
    full = _expand(np.asarray(best.deltas))
    try:
        seq = PulseSequence(tuple(full), SequenceFamily("PLODD", n=problem.n, alpha=problem.alpha))
    except SequenceValidationError:
        return None
    out = seq.to_json()
    out.update(
        {
            "alpha": problem.alpha,
            "prefactor": formula_value(seq.deltas, problem.ex),
            "kkt_residual": best.residual_norm,
            "multipliers": list(best.multipliers),
            "constraint_orders": list(best.orders),
            "iterations": best.iterations,
            "converged": False,
        }
    )
    return out


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Even pulse count.")
@click.option("--alpha", type=float, required=True, help="Spectral exponent.")
@click.option("--init", type=click.Choice(["auto", "cpmg", "udd"]), default="auto", show_default=True)
@click.option("--continuation", type=int, default=None, help="Solve along this many geometric alpha steps.")
@click.option("--alpha-from", type=float, default=2.0, show_default=True, help="Start of the continuation path.")
@click.option("--tol", type=float, default=None, help="KKT residual tolerance (default 1e-10).")
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None, help="Overrides $PLODD_CACHE_DIR.")
@click.option("--no-cache", is_flag=True, help="Neither read nor write the cache.")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Write the augmented sequence JSON here.")
def optimize(n, alpha, init, continuation, alpha_from, tol, cache_dir, no_cache, output):
    """Solve for the optimized sequence at pulse count N and exponent ALPHA."""
    options = _options(tol=tol, init=init)
    ex = _positive_alpha(alpha)
    try:
        problem = PloddProblem(n, ex, options=options)
    except (InfeasibleExponent, ValueError) as exc:
        raise click.UsageError(str(exc)) from None
    cache = None if no_cache else SequenceCache(cache_dir)
    try:
        result = cache.load(problem) if cache else None
        if result is None:
            if continuation:
                if continuation < 1 or alpha_from <= 0:
                    raise click.UsageError("--continuation needs steps >= 1 and --alpha-from > 0")
                result = continuation_path(n, alpha_from, ex.alpha, continuation, options)[-1]
            else:
                result = optimize_plodd(problem)
            if cache:
                cache.store(result)
                result.provenance["cache"] = "miss"
    except NonConvergence as exc:
        payload = _best_payload(problem, exc)
        if payload is not None and output:
            _write_json(payload, output)
        click.echo(f"warning: {exc}", err=True)
        sys.exit(EXIT_CONVERGENCE)
    except OSError as exc:
        raise _Exit(f"cache I/O failed: {exc}", EXIT_IO) from None
    if output:
        _write_json(result.to_json(), output)
    _report(result)


def _report(result: OptimizedSequence) -> None:
    for d in result.sequence.instants:
        click.echo(_fixed(d))
    click.echo(f"I_n = {_sci(result.prefactor.value)}")
    click.echo(f"residual = {_sci(result.kkt.residual_norm)}")
    click.echo(f"iterations = {result.kkt.iterations}")
    click.echo(f"cache: {result.provenance.get('cache', 'off')}", err=True)


def _scan(families, n_values, alpha, cache_dir, no_cache):
    ex = _positive_alpha(alpha)
    cache = None if no_cache else SequenceCache(cache_dir)
    try:
        return analysis.scan_prefactor(families, n_values, ex, solver=cache.solve if cache else None)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    except OSError as exc:
        raise _Exit(f"cache I/O failed: {exc}", EXIT_IO) from None


def _report_failures(table) -> None:
    for row in table.failures:
        click.echo(f"row {row.family} n={row.n} failed: {row.error}", err=True)
    if table.failures and len(table.failures) == len(table):
        sys.exit(EXIT_CONVERGENCE)


def _emit_csv(text: str, output: Optional[str]) -> None:
    if output:
        try:
            with open(output, "w", encoding="ascii", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise _Exit(f"cannot write {output}: {exc}", EXIT_IO) from None
    else:
        click.echo(text, nl=False)


_cache_opts = [
    click.option("--cache-dir", type=click.Path(file_okay=False), default=None, help="Overrides $PLODD_CACHE_DIR."),
    click.option("--no-cache", is_flag=True, help="Neither read nor write the cache."),
]


def _with_cache(f):
    for opt in reversed(_cache_opts):
        f = opt(f)
    return f


@cli.command()
@click.option("--alpha", type=float, required=True)
@click.option("--families", default="udd,cpmg,cdd,plodd", show_default=True, help="Comma-separated family tags.")
@click.option("--n", "n_spec", default="2:30", show_default=True, help="Pulse counts, lo:hi[:step].")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="CSV path (default: stdout).")
@_with_cache
def scan(alpha, families, n_spec, output, cache_dir, no_cache):
    """Tabulate I_n per family and pulse count as CSV (family,n,alpha,I_n,feasible)."""
    fams = [f.strip() for f in families.split(",") if f.strip()]
    table = _scan(fams, parse_range(n_spec, integer=True), alpha, cache_dir, no_cache)
    _emit_csv(analysis.write_scan_csv(table), output)
    _report_failures(table)


@cli.command()
@click.option("--family", required=True, help="Family tag to fit.")
@click.option("--alpha", type=float, required=True)
@click.option("--n", "n_spec", default="4:30:2", show_default=True, help="Pulse counts, lo:hi[:step].")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="Also write the scanned rows as CSV.")
@_with_cache
def regress(family, alpha, n_spec, output, cache_dir, no_cache):
    """Fit ln I_n = a1 ln n + a0 by least squares."""
    n_values = parse_range(n_spec, integer=True)
    table = _scan([family], n_values, alpha, cache_dir, no_cache)
    if output:
        _emit_csv(analysis.write_scan_csv(table), output)
    for row in table.failures:
        click.echo(f"row {row.family} n={row.n} failed: {row.error}", err=True)
    try:
        fit = analysis.fit_power_law(table, family, min(n_values), max(n_values))
    except InsufficientData as exc:
        raise _Exit(str(exc), EXIT_CONVERGENCE) from None
    click.echo(f"a1 = {_fixed(fit.a1)} +/- {_fixed(fit.se_a1)}")
    click.echo(f"a0 = {_fixed(fit.a0)} +/- {_fixed(fit.se_a0)}")
    click.echo(f"n_range = {fit.n_range[0]}:{fit.n_range[1]} ({len(fit.n_used)} points)")
    if fit.alpha != 1:
        click.echo(f"ln_C = {_fixed(fit.a0 / (fit.alpha - 1))}")


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Even pulse count.")
@click.option("--alpha", "alpha_spec", default="2:12:1", show_default=True, help="Exponent grid, lo:hi[:step].")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="CSV path (default: stdout).")
def trend(n, alpha_spec, output):
    """Gap to UDD and ln I_n of the optimized sequence along an exponent grid (CSV)."""
    grid = parse_range(alpha_spec, integer=False)
    if n < 2 or n % 2:
        raise click.BadParameter("n must be even and >= 2", param_hint="--n")
    if any(a <= 0 for a in grid):
        raise click.BadParameter("exponents must be positive", param_hint="--alpha")
    rows = []
    failure = None
    try:
        for row in analysis.iter_alpha_trend(n, grid):
            rows.append(row)
    except (PloddError, ValueError) as exc:
        failure = str(exc)
    table = analysis.TrendTable(n, tuple(rows))
    if rows:
        _emit_csv(analysis.write_trend_csv(table), output)
    if failure:
        click.echo(f"trend stopped: {failure}", err=True)
        if not rows:
            sys.exit(EXIT_CONVERGENCE)


def main(argv=None):
    cli.main(args=argv, prog_name="plodd")


if __name__ == "__main__":
    main()
