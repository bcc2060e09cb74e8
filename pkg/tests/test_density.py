import itertools
from fractions import Fraction
from math import gcd

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elldensity.arith import euler_phi, primes_up_to
from elldensity.catalog import catalog_entry, serre_galois_spec
from elldensity.density import (
    DensityProblem,
    artin_classical,
    character_averages,
    compute_density,
    correction_factor,
    euler_product,
    full_gl2_density,
    generic_factor,
    koblitz_count_complement,
    local_density,
    local_set,
    proven_digits,
    serre_ap,
    serre_ap_correction,
    serre_cyclic,
    serre_cyclic_correction,
    serre_E2,
    serre_koblitz,
    serre_koblitz_correction,
    tail_bound,
    vanishing_analysis,
)
from elldensity.entanglement import SpecError
from elldensity.groups import full_gl2


# ---- problems and local sets


def test_problem_validation():
    assert DensityProblem.ap(29, 12).a == 5
    with pytest.raises(ValueError):
        DensityProblem("cyclic", a=1, f=3)
    with pytest.raises(ValueError):
        DensityProblem.koblitz(0)
    assert DensityProblem.koblitz(12).working_exponent(2) == 3
    assert DensityProblem.ap(1, 12).working_exponent(2) == 2
    assert DensityProblem.cyclic().working_exponent(7) == 1


def test_local_set_sizes():
    assert local_set(DensityProblem.cyclic(), 2, full_gl2(2)).size == 5
    assert local_set(DensityProblem.koblitz(1), 2, full_gl2(2)).size == 2
    # det = 1 (mod 4) and nontrivial mod 2: 48 - 8 = 40, checked by a brute filter
    brute = sum(
        1
        for a, b, c, d in itertools.product(range(4), repeat=4)
        if (a * d - b * c) % 4 == 1 and (a % 2, b % 2, c % 2, d % 2) != (1, 0, 0, 1)
    )
    assert local_set(DensityProblem.ap(1, 4), 2, full_gl2(4)).size == brute == 40


def test_local_set_level_mismatch():
    with pytest.raises(SpecError):
        local_set(DensityProblem.ap(1, 4), 2, full_gl2(2))


@pytest.mark.parametrize("ell", [2, 3, 5, 7])
def test_koblitz_complement_count(ell):
    g = full_gl2(ell)
    n = g.order - local_set(DensityProblem.koblitz(1), ell, g).size
    assert n == koblitz_count_complement(ell) == ell**2 + (ell - 2) * (ell**2 + ell)


@pytest.mark.parametrize("ell", [2, 3, 5, 7, 11])
def test_local_density_closed_forms(ell):
    cyc = local_density(DensityProblem.cyclic(), ell, full_gl2(ell))
    assert cyc == 1 - Fraction(1, (ell**2 - 1) * (ell**2 - ell)) == generic_factor("cyclic", ell)
    kob = local_density(DensityProblem.koblitz(1), ell, full_gl2(ell))
    assert kob / (1 - Fraction(1, ell)) == generic_factor("koblitz", ell)
    assert kob == full_gl2_density(DensityProblem.koblitz(1), ell)


def test_koblitz_two():
    d = local_density(DensityProblem.koblitz(1), 2, full_gl2(2))
    assert d == Fraction(1, 3)
    assert d / Fraction(1, 2) == Fraction(2, 3) == generic_factor("koblitz", 2)


@pytest.mark.parametrize("a,f", [(2, 3), (2, 5), (3, 5), (3, 4), (2, 9), (1, 3), (1, 5), (1, 4), (5, 8), (1, 8)])
def test_ap_full_gl2_density_matches_enumeration(a, f):
    p = DensityProblem.ap(a, f)
    ell = [q for q in (2, 3, 5) if f % q == 0][0]
    g = full_gl2(ell ** p.working_exponent(ell))
    assert local_density(p, ell, g) == full_gl2_density(p, ell)
    e = p.working_exponent(ell)
    if a % ell != 1:
        assert full_gl2_density(p, ell) == Fraction(1, euler_phi(ell**e))


@pytest.mark.parametrize("t", [2, 3, 4, 6])
def test_koblitz_t_generic(t):
    p = DensityProblem.koblitz(t)
    for ell in (2, 3):
        if t % ell == 0:
            g = full_gl2(ell ** p.working_exponent(ell))
            assert local_density(p, ell, g) == full_gl2_density(p, ell)


# ---- correction factors


def test_trivial_phi_correction_is_one():
    from elldensity.entanglement import Component, EntanglementSpec

    spec = EntanglementSpec([Component(2, 1, full_gl2(2)), Component(3, 1, full_gl2(3))])
    assert correction_factor(DensityProblem.cyclic(), spec).correction == 1


def test_lang_trotter_correction():
    cr = correction_factor(DensityProblem.cyclic(), catalog_entry("lang-trotter-11").spec)
    assert cr.correction == 1 + Fraction(1, 65995)


@pytest.mark.parametrize("a,f", [(1, 3), (2, 5), (1, 4), (3, 8), (7, 15)])
def test_curve17_correction_away_from_17(a, f):
    spec = catalog_entry("curve-17").spec
    p = DensityProblem.ap(a, f)
    assert correction_factor(p, spec).correction == 1 + Fraction(1, 78335)
    avg = character_averages(p, spec)
    assert avg[2][1].to_fraction() == -1
    assert avg[17][1].to_fraction() == Fraction(-1, 78335)


def test_correction_bounds_cyclic():
    for cid in ("lang-trotter-11", "curve-4x4", "curve-17", "serre-37a"):
        spec = catalog_entry(cid).spec
        avg = character_averages(DensityProblem.cyclic(), spec)
        n = len(next(iter(avg.values())))
        bound = 1 + (n - 1)
        for vals in avg.values():
            for v in vals:
                assert abs(v.to_complex()) <= 1 + 1e-12
        c = correction_factor(DensityProblem.cyclic(), spec).correction
        assert 0 <= c <= bound


def test_non_abelian_spec_is_rejected():
    with pytest.raises(SpecError):
        correction_factor(DensityProblem.cyclic(), catalog_entry("family6-example").spec)


# ---- Euler products


def test_euler_product_all_gl2():
    ep = euler_product(DensityProblem.cyclic(), {}, 1000)
    assert abs(float(ep.value) - 0.813752) < 5e-7
    assert ep.tail < 1e-9
    # direct truncated product oracle in floats
    direct = 1.0
    for ell in primes_up_to(1000).tolist():
        direct *= 1 - 1 / ((ell * ell - 1) * (ell * ell - ell))
    assert abs(float(ep.value) - direct) < 1e-13


def test_family6_constant():
    res = compute_density(DensityProblem.cyclic(), catalog_entry("family6-example").spec, L=10**5)
    assert abs(float(res.constant) - 0.831066) < 5e-7
    assert res.correction == Fraction(48, 47)


def test_euler_product_rejects_small_L():
    with pytest.raises(SpecError):
        euler_product(DensityProblem.cyclic(), {11: Fraction(1, 2)}, 7)


def test_koblitz_tail():
    ep = euler_product(DensityProblem.koblitz(1), {}, 10**6)
    assert float(ep.tail) == pytest.approx(2e-6, rel=1e-12)
    assert ep.low <= ep.value <= ep.high


@pytest.mark.parametrize("kind", ["cyclic", "koblitz"])
def test_monotone_tails(kind):
    problem = DensityProblem.cyclic() if kind == "cyclic" else DensityProblem.koblitz(1)
    prev = None
    for L in (100, 1000, 10**4, 10**5):
        ep = euler_product(problem, {}, L)
        if prev is not None:
            assert prev.low <= ep.low and ep.high <= prev.high
            assert prev.low <= ep.value <= prev.high
        prev = ep


def test_proven_digits():
    assert proven_digits(mpmath.mpf("0.12345"), mpmath.mpf("0.12349")) == "0.1234"
    assert proven_digits(mpmath.mpf(0), mpmath.mpf(0)) == "0"
    assert proven_digits(mpmath.mpf("0.5"), mpmath.mpf("0.5")).startswith("0.5")


def test_tail_bounds_formulas():
    assert float(tail_bound("cyclic", 10)) == pytest.approx(2 / 3000, rel=1e-14)
    assert float(tail_bound("koblitz", 10)) == pytest.approx(0.2, rel=1e-14)


# ---- Serre closed forms


def test_serre_cyclic_examples():
    assert serre_cyclic_correction(-4) == 1
    assert serre_cyclic_correction(5) == 1 + Fraction(1, 2395)
    assert serre_cyclic_correction(17) == 1 + Fraction(1, 391675)
    with pytest.raises(ValueError):
        serre_cyclic_correction(7)
    res = serre_cyclic(5, L=1000)
    assert res.correction == 1 + Fraction(1, 2395)


@pytest.mark.parametrize("D", [5, 13, 17, -3, -7, -4, -8, 8, 12, -20, 24, -24])
def test_serre_cyclic_generic_agreement(D):
    spec = serre_galois_spec(D)
    assert correction_factor(DensityProblem.cyclic(), spec).correction == serre_cyclic_correction(D)


def test_serre_ap_examples():
    # ord2(D) > ord2(f)
    assert serre_ap_correction(1, 3, 12) == 1
    assert serre_ap_correction(3, 4, -24) == 1
    for a, f in [(1, 3), (2, 5), (3, 8), (7, 12)]:
        assert serre_E2(a, f, 5) == Fraction(-1, 5)
    assert serre_ap(2, 6, 5, L=1000).vanishing == "local"


def test_serre_ap_nonvanishing_grid():
    for D in (5, -3, 13, -7, 12, -20, 24, -24, -4, 8, -8, 21, -15):
        for f in range(1, 61):
            for a in range(f):
                if gcd(a, f) != 1:
                    continue
                c = serre_ap_correction(a, f, D)
                assert c > 0, (D, a, f)


def test_serre_ap_f1_is_cyclic():
    for D in (5, -3, 12, -24):
        assert serre_ap_correction(0, 1, D) == serre_cyclic_correction(D)
        spec = serre_galois_spec(D)
        a = compute_density(DensityProblem.ap(0, 1), spec, L=1000)
        b = compute_density(DensityProblem.cyclic(), spec, L=1000)
        assert a.correction == b.correction and a.constant == b.constant


def test_serre_koblitz_examples():
    assert serre_koblitz_correction(-4) == 1
    assert serre_koblitz_correction(-3) == 1 + Fraction(1, 9)
    assert serre_koblitz(5, L=1000).correction == 1 + Fraction(1, 125 - 50 - 5 + 3)


@pytest.mark.parametrize("D", [5, -3, -7, 13, -4, 12, -8])
def test_serre_koblitz_generic_agreement(D):
    spec = serre_galois_spec(D)
    assert correction_factor(DensityProblem.koblitz(1), spec).correction == serre_koblitz_correction(D)


# ---- vanishing


def test_vanishing_examples():
    v = vanishing_analysis(DensityProblem.ap(1, 20), catalog_entry("curve-4x4").spec)
    assert (v.kind, v.prime) == ("zero_local", 2)
    v = vanishing_analysis(DensityProblem.ap(2, 17), catalog_entry("curve-17").spec)
    assert v.kind == "zero_entanglement"
    for a, f in [(1, 5), (2, 9), (3, 8)]:
        assert vanishing_analysis(DensityProblem.ap(a, f), catalog_entry("serre-37a").spec).kind == "nonzero"
    assert vanishing_analysis(DensityProblem.ap(2, 4), catalog_entry("serre-37a").spec).kind == "zero_local"


def test_constant_zero_iff_vanishing():
    spec = catalog_entry("curve-4x4").spec
    for a in (1, 3):
        res = compute_density(DensityProblem.ap(a, 4), spec, L=1000)
        assert (res.constant == 0) == (res.vanishing != "none")
        assert res.correction in (0, 1)


# ---- Artin


def test_artin_examples():
    r = artin_classical(5, L=10**4, N=10**5)
    assert r.correction == Fraction(20, 19)
    assert artin_classical(4, L=100, N=100).zero_reason is not None
    assert artin_classical(2, L=100, N=1000).correction == 1
    assert artin_classical(-3, L=100, N=1000).correction != 1
    with pytest.raises(ValueError):
        artin_classical(1)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 60))
def test_artin_square_free_nonsquare(g):
    r = artin_classical(g, L=1000, N=10**4)
    if r.zero_reason:
        assert int(round(g**0.5)) ** 2 == g or r.h % 2 == 0
    else:
        assert abs(r.sum_head - float(r.product_value)) <= r.sum_tail_bound + 2 / 1000 + 1e-9


# ---- JSON shape


def test_density_result_json():
    res = compute_density(DensityProblem.cyclic(), catalog_entry("lang-trotter-11").spec, L=10**4)
    j = res.to_json()
    assert set(j) >= {"problem", "constant", "correction", "naive", "vanishing", "truncation_L"}
    assert set(j["constant"]) >= {"digits", "tail_low", "tail_high"}
    assert j["correction"] == "65996/65995"
    assert j["vanishing"] == "none"
