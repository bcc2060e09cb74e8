import cmath
import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elldensity.characters import (
    CyclotomicError,
    CyclotomicNumber,
    EmptyLocalSetError,
    FiniteAbelianGroup,
    abelian_from_orders,
    abelianization,
    char_sum_average,
    characters,
    decompose_abelian,
)
from elldensity.groups import AbstractFiniteGroup, GroupError, full_gl2


def units_mod(n):
    units = [u for u in range(1, n) if np.gcd(u, n) == 1]
    idx = {u: i for i, u in enumerate(units)}
    table = np.array([[idx[(a * b) % n] for b in units] for a in units])
    return AbstractFiniteGroup(table)


def test_decompose_trivial_and_c2():
    assert decompose_abelian(AbstractFiniteGroup([[0]])).cyclic_orders == ()
    assert decompose_abelian(AbstractFiniteGroup([[0, 1], [1, 0]])).cyclic_orders == (2,)


@pytest.mark.parametrize("n,orders", [(5, (4,)), (8, (2, 2)), (15, (2, 4)), (16, (2, 4)), (21, (2, 6)), (24, (2, 2, 2))])
def test_unit_groups(n, orders):
    a = decompose_abelian(units_mod(n))
    assert a.cyclic_orders == orders
    # iso respects multiplication
    g = a.source
    v = a.vectors
    t = g.table
    lhs = a.ids(v[t])
    rhs = a.ids(v[:, None, :] + v[None, :, :])
    assert np.array_equal(lhs, rhs)


def test_decompose_rejects_nonabelian():
    g2 = full_gl2(2)
    with pytest.raises(GroupError):
        decompose_abelian(g2)


def test_abelianization_gl2_3():
    a, _ = abelianization(full_gl2(3))
    assert a.cyclic_orders == (2,)
    a5, _ = abelianization(full_gl2(5))
    assert a5.cyclic_orders == (4,)


def test_characters_small():
    assert len(characters(FiniteAbelianGroup.from_orders(()))) == 1
    c2 = characters(FiniteAbelianGroup.from_orders((2,)))
    assert [c.value(np.array([1])).to_fraction() for c in c2] == [1, -1]
    c4 = characters(FiniteAbelianGroup.from_orders((4,)))
    vals = [c.value(np.array([1])) for c in c4]
    i = CyclotomicNumber.root_of_unity(4, 1)
    assert vals.count(i) == 1 and vals.count(i.conjugate()) == 1
    assert c4[0].is_trivial()


def test_cyclotomic_arithmetic():
    z = CyclotomicNumber.root_of_unity(3, 1)
    assert 1 + z + z * z == 0
    assert (z * z * z).to_fraction() == 1
    i = CyclotomicNumber.root_of_unity(4, 1)
    assert (i * i).to_fraction() == -1
    assert abs((i + 1).to_complex() - (1 + 1j)) < 1e-12
    h = CyclotomicNumber.rational(Fraction(1, 2))
    assert (h + h).to_fraction() == 1
    with pytest.raises(CyclotomicError):
        CyclotomicNumber.root_of_unity(128, 1)


def test_average_examples():
    a = FiniteAbelianGroup.from_orders((6,))
    triv, chi = characters(a)[0], characters(a)[1]
    v = a.all_vectors()
    assert char_sum_average(triv, v[[1, 3]]).to_fraction() == 1
    assert char_sum_average(chi, v) == 0
    sq = characters(FiniteAbelianGroup.from_orders((2,)))[1]
    # order-2 character over a group of order N minus the identity
    n = 12
    bigger = FiniteAbelianGroup.from_orders((2, 6))
    eps = characters(bigger)[6]  # (1, 0): order 2
    assert eps.order == 2
    avg = char_sum_average(eps, bigger.all_vectors()[1:])
    assert avg.to_fraction() == Fraction(-1, n - 1)
    with pytest.raises(EmptyLocalSetError):
        char_sum_average(sq, np.zeros((0, 1), dtype=np.int64))


ORDER_LISTS = st.lists(st.integers(1, 6), min_size=0, max_size=3).filter(lambda xs: np.prod(xs or [1]) <= 24)


@settings(max_examples=30, deadline=None)
@given(ORDER_LISTS)
def test_orthogonality_and_indicator(orders):
    a = abelian_from_orders(orders)
    chars = characters(a)
    assert len(chars) == a.order
    v = a.all_vectors()
    for c1, c2 in itertools.product(chars, repeat=2):
        inner = sum((c1.value(x) * c2.conjugate().value(x) for x in v), CyclotomicNumber.rational(0))
        assert inner.to_fraction() == (a.order if c1 == c2 else 0)
    for idx, x in enumerate(v):
        s = sum((c.value(x) for c in chars), CyclotomicNumber.rational(0))
        assert s.to_fraction() == (a.order if idx == 0 else 0)


@settings(max_examples=20, deadline=None)
@given(ORDER_LISTS, st.data())
def test_multiplicativity(orders, data):
    a = abelian_from_orders(orders)
    chars = characters(a)
    chi = chars[data.draw(st.integers(0, len(chars) - 1))]
    v = a.all_vectors()
    for x, y in itertools.product(v, repeat=2):
        assert chi.value(x + y) == chi.value(x) * chi.value(y)
    # numeric cross-check against complex exponentials
    e = chi.value_order
    for x in v:
        k = chi.log_values(x[None, :])[0]
        assert abs(chi.value(x).to_complex() - cmath.exp(2j * cmath.pi * k / e)) < 1e-9


def test_character_json():
    chi = characters(FiniteAbelianGroup.from_orders((2, 4)))[3]
    assert chi.to_json() == {"divisors": [2, 4], "exponents": [0, 3]}
