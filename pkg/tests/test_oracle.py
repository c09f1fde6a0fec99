import math

import numpy as np
import pytest

from plodd import (
    DivergentIntegral,
    divergence_residual,
    make_cdd,
    make_cpmg,
    make_custom,
    make_udd,
    prefactor_quadrature,
    spectral_prefactor,
    vanishing_order,
)
from plodd.oracle import default_cutoff, default_eps
from support import random_feasible_sequence

FREE = make_custom([])
HALF = make_custom([0.5])


def test_free_evolution_alpha1():
    est = prefactor_quadrature(FREE, 1)
    assert est.value == pytest.approx(math.pi, rel=1e-6)
    assert abs(est.value - math.pi) <= max(est.error_bound, 1e-12)


def test_single_pulse_alpha2():
    est = prefactor_quadrature(HALF, 2)
    assert est.value == pytest.approx(math.log(2), rel=1e-6)


def test_udd4_alpha3_matches_closed_form():
    est = prefactor_quadrature(make_udd(4), 3)
    exact = spectral_prefactor(make_udd(4), 3).value
    assert abs(est.value - exact) <= max(1e-8, est.error_bound)


def test_estimate_structure():
    est = prefactor_quadrature(make_cpmg(6), 2.5)
    assert est.error_bound > 0 and math.isfinite(est.value)
    assert set(est.pieces) == {"series_part", "adaptive_part", "tail_part"}
    assert est.value == pytest.approx(math.fsum(est.pieces.values()), rel=1e-14)
    assert est.eps == default_eps(6)
    assert est.cutoff == default_cutoff(6, 2.5)
    assert est.tail_part > 0


@pytest.mark.parametrize("seq, alpha", [(FREE, 2), (HALF, 4.5), (make_cpmg(4), 6)])
def test_infeasible_pairs_raise(seq, alpha):
    with pytest.raises(DivergentIntegral):
        prefactor_quadrature(seq, alpha)


def test_deterministic():
    a = prefactor_quadrature(make_udd(5), 3.3)
    b = prefactor_quadrature(make_udd(5), 3.3)
    assert a == b


@pytest.mark.parametrize(
    "seq, alpha",
    [(make_udd(3), 2.5), (make_cpmg(8), 4), (make_cdd(4), 7.5), (HALF, 1.5), (FREE, 0.5)],
    ids=lambda v: getattr(v, "tag", v),
)
def test_regulator_independence(seq, alpha):
    base = prefactor_quadrature(seq, alpha)
    finer = prefactor_quadrature(seq, alpha, eps=base.eps / 10)
    assert abs(base.value - finer.value) <= base.error_bound + finer.error_bound


@pytest.mark.parametrize(
    "seq, alpha",
    [(make_udd(3), 2.5), (make_cpmg(8), 4), (make_cdd(4), 7.5), (HALF, 1.5), (FREE, 0.5)],
    ids=lambda v: getattr(v, "tag", v),
)
def test_cutoff_independence(seq, alpha):
    base = prefactor_quadrature(seq, alpha)
    wider = prefactor_quadrature(seq, alpha, cutoff=2 * base.cutoff)
    assert abs(base.value - wider.value) <= base.error_bound + wider.error_bound


@pytest.mark.parametrize("alpha", [0.5, 1, 1.5, 2.5, 3, 4.7])
def test_random_sequences_agree_with_closed_form(alpha):
    rng = np.random.default_rng(int(alpha * 10))
    m = int(alpha // 2)
    for n in (m + 1, m + 3, 7):
        seq = random_feasible_sequence(rng, n, m)
        est = prefactor_quadrature(seq, alpha)
        exact = spectral_prefactor(seq, alpha).value
        assert abs(est.value - exact) <= max(1e-8, est.error_bound)


def test_zeroth_species_always_cancels():
    rng = np.random.default_rng(0)
    for n in range(6):
        seq = make_custom(np.sort(rng.uniform(0.01, 0.99, n)))
        res = divergence_residual(seq, 2.5)
        assert res.coefficients["x^(0-alpha)"] == 0


def test_worked_example_single_pulse_alpha2():
    res = divergence_residual(HALF, 2)
    assert set(res.coefficients) == {"x^(0-alpha)", "x^(1-alpha)", "ln(x)"}
    assert res.max_abs < 1e-15
    assert res.cancels


def test_free_evolution_alpha2_log_species():
    res = divergence_residual(FREE, 2)
    assert res.coefficients["ln(x)"] == pytest.approx(-2)
    assert not res.cancels


@pytest.mark.parametrize(
    "alpha, keys",
    [
        (0.5, ["x^(0-alpha)"]),
        (1, ["x^(0-alpha)", "ln(x)"]),
        (3.5, ["x^(0-alpha)", "x^(1-alpha)", "x^(2-alpha)", "x^(3-alpha)"]),
        (3, ["x^(0-alpha)", "x^(1-alpha)", "x^(2-alpha)", "ln(x)"]),
    ],
)
def test_species_keys(alpha, keys):
    assert sorted(divergence_residual(make_udd(2), alpha).coefficients) == sorted(keys)


def _cancellation_cases():
    rng = np.random.default_rng(77)
    seqs = [FREE] + [make_udd(n) for n in range(1, 7)] + [make_cpmg(n) for n in range(1, 9)]
    for n in range(1, 8):
        for m in range(0, min(n, 2) + 1):
            seqs.append(random_feasible_sequence(rng, n, m))
    for seq in seqs:
        for alpha in (1, 2, 3, 4, 5):
            yield seq, alpha


def test_cancellation_iff_feasible():
    for seq, alpha in _cancellation_cases():
        feasible = alpha < 2 * vanishing_order(seq) + 2
        res = divergence_residual(seq, alpha)
        assert (res.max_abs < 1e-9) == feasible, (seq, alpha, res.max_abs)
