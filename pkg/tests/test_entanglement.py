import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from elldensity.catalog import catalog_entry, serre_galois_spec
from elldensity.characters import characters
from elldensity.density import DensityProblem, local_set, spec_at_working_levels
from elldensity.entanglement import (
    Component,
    EntanglementSpec,
    LocalSet,
    SpecError,
    brute_force_fraction,
    build_phi,
    lift_character,
    materialize,
    member_fraction,
    phi_stability_check,
)
from elldensity.groups import GroupError, full_gl2, group_close, has_abelian_entanglements

from helpers import random_local_sets, random_spec


def nontrivial_sets(spec):
    ident = {c.level: int(full_gl2(c.level).identity) for c in spec.components}
    return [LocalSet(i, c.group.elements != ident[c.level]) for i, c in enumerate(spec.components)]


def full_sets(spec):
    return [LocalSet(i, np.ones(c.group.order, dtype=bool)) for i, c in enumerate(spec.components)]


def lt_squarefree():
    return spec_at_working_levels(DensityProblem.cyclic(), catalog_entry("lang-trotter-11").spec)


def test_no_relations_gives_trivial_phi():
    spec = EntanglementSpec([Component(2, 1, full_gl2(2)), Component(3, 1, full_gl2(3))])
    phi = build_phi(spec)
    assert phi.order == 1
    assert brute_force_fraction(spec, nontrivial_sets(spec)) == Fraction(5, 6) * Fraction(47, 48)


@pytest.mark.parametrize("D,order", [(5, 2), (-3, 2), (13, 2), (-7, 2), (-4, 1), (8, 1), (-8, 1)])
def test_serre_phi_orders(D, order):
    spec = serre_galois_spec(D)
    sq = spec_at_working_levels(DensityProblem.cyclic(), spec)
    assert build_phi(sq).order == order


def test_curve_4x4_phi_is_cyclic_of_order_4():
    phi = build_phi(catalog_entry("curve-4x4").spec)
    assert phi.group.cyclic_orders == (4,)


def test_phi_times_kernel_is_product():
    spec = lt_squarefree()
    phi = build_phi(spec)
    g = materialize(spec)
    assert phi.order * g.order == spec.product_order
    assert has_abelian_entanglements(g)


def test_lift_character_lang_trotter():
    spec = lt_squarefree()
    phi = build_phi(spec)
    triv, chi = characters(phi.group)
    i5, i11 = spec.component_index(5), spec.component_index(11)
    g5, g11 = spec.components[i5].group, spec.components[i11].group
    assert all(lift_character(phi, triv, i11)(x) == 1 for x in g11.elements[:50])
    assert all(lift_character(phi, chi, i5)(x) == 1 for x in g5.elements)
    det = g11.det()
    for x, d in zip(g11.elements[::97], det[::97]):
        leg = 1 if pow(int(d), 5, 11) == 1 else -1
        assert lift_character(phi, chi, i11)(x).to_fraction() == leg
    with pytest.raises(IndexError):
        lift_character(phi, chi, 7)


def test_full_local_sets_give_one():
    spec = lt_squarefree()
    assert member_fraction(spec, full_sets(spec)).value == 1


def test_serre_member_fraction_closed_form():
    spec = spec_at_working_levels(DensityProblem.cyclic(), serre_galois_spec(5))
    mf = member_fraction(spec, nontrivial_sets(spec))
    deltas = Fraction(5, 6) * Fraction(479, 480)
    assert mf.value == deltas * (1 + Fraction(-1, 5) * Fraction(-1, 479))
    assert mf.value == brute_force_fraction(spec, nontrivial_sets(spec))


def test_lang_trotter_matches_oracle():
    spec = lt_squarefree()
    sets = [local_set(DensityProblem.cyclic(), c.prime, c.group, i) for i, c in enumerate(spec.components)]
    mf = member_fraction(spec, sets)
    assert mf.correction == 1 + Fraction(1, 65995)
    assert mf.value == brute_force_fraction(spec, sets)


def test_empty_local_set_flags_prime():
    spec = lt_squarefree()
    sets = full_sets(spec)
    sets[1] = LocalSet(1, np.zeros_like(sets[1].mask))
    mf = member_fraction(spec, sets)
    assert mf.value == 0 and mf.obstruction == spec.components[1].prime


def test_oracle_cap():
    spec = EntanglementSpec([Component(5, 1, full_gl2(5)), Component(7, 1, full_gl2(7))])
    with pytest.raises(GroupError):
        brute_force_fraction(spec, full_sets(spec), cap=10**5)


def test_stability_checks():
    triv = EntanglementSpec([Component(2, 1, full_gl2(2))])
    assert phi_stability_check(triv, 7)
    assert phi_stability_check(spec_at_working_levels(DensityProblem.cyclic(), serre_galois_spec(5)), 7)
    for cid in ("lang-trotter-11", "curve-4x4", "curve-17"):
        assert phi_stability_check(catalog_entry(cid).spec, 13)
    with pytest.raises(SpecError):
        phi_stability_check(triv, 4)


def test_non_surjective_relation_rejected():
    data = {
        "components": [{"prime": 3, "exponent": 1, "generators": [[1, 1, 0, 1]]}],
        "relations": [{"target_divisors": [2], "maps": [{"component": 0, "rule": "det_legendre"}]}],
    }
    with pytest.raises(SpecError):
        build_phi(EntanglementSpec.from_json(data))


def test_non_homomorphism_rejected():
    g = full_gl2(2)
    data = {
        "components": [{"prime": 2, "exponent": 1}, {"prime": 3, "exponent": 1}],
        "relations": [{"target_divisors": [2], "maps": [
            {"component": 0, "rule": "table", "values": [[1]] + [[0]] * (g.order - 1)},
            {"component": 1, "rule": "det_legendre"},
        ]}],
    }
    with pytest.raises(SpecError):
        build_phi(EntanglementSpec.from_json(data))


def test_non_subdirect_rejected():
    # psi restricted to the second component is not matched by the first one
    data = {
        "components": [{"prime": 3, "exponent": 1, "generators": [[1, 1, 0, 1]]}, {"prime": 5, "exponent": 1}],
        "relations": [{"target_divisors": [2], "maps": [{"component": 1, "rule": "det_legendre"}]}],
    }
    with pytest.raises(SpecError):
        build_phi(EntanglementSpec.from_json(data))


def test_json_roundtrip_preserves_phi():
    spec = catalog_entry("curve-17").spec
    again = EntanglementSpec.from_json(json.loads(json.dumps(spec.to_json())))
    assert build_phi(again).group.cyclic_orders == build_phi(spec).group.cyclic_orders
    assert again.levels == spec.levels


def test_pairwise_coprime_levels():
    with pytest.raises(SpecError):
        EntanglementSpec([Component(2, 1, full_gl2(2)), Component(2, 2, full_gl2(4))])


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2**32 - 1))
def test_formula_equals_oracle(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng)
    sets = random_local_sets(spec, rng)
    mf = member_fraction(spec, sets)
    assert mf.value == brute_force_fraction(spec, sets)
    phi = build_phi(spec)
    assert phi.order * materialize(spec).order == spec.product_order
    # appending a coprime full component changes neither Phi nor the correction
    bigger = spec.with_full_component(7)
    sets7 = sets + [LocalSet(len(sets), np.ones(full_gl2(7).order, dtype=bool))]
    assert build_phi(bigger).group.cyclic_orders == phi.group.cyclic_orders
    assert member_fraction(bigger, sets7).correction == mf.correction


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_specs_have_abelian_entanglements(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, max_product=2 * 10**5)
    assert has_abelian_entanglements(materialize(spec))


def test_components_checked_against_level():
    with pytest.raises(SpecError):
        Component(3, 1, group_close([(1, 1, 0, 1)], 9))
