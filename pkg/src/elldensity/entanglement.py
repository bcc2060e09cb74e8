"""Entanglement specs: prime-power components glued by abelian relations.

A spec lists components ``G(l^a)`` (pairwise coprime levels) and relations.
Each relation is a family of homomorphisms ``psi_c : G(l^a) -> T`` into a common
finite abelian target ``T``; the Galois image ``G(m)`` is the joint kernel of
``sum_c psi_c`` over all relations, and ``Phi`` is the product of the targets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import gcd, prod
from typing import Sequence

import numpy as np

from .characters import (
    Character,
    CyclotomicNumber,
    FiniteAbelianGroup,
    abelian_from_orders,
    characters,
    histogram_average,
    mixed_radix_vectors,
    vector_ids,
)
from .groups import (
    DEFAULT_CAP,
    AbstractFiniteGroup,
    GroupError,
    MatrixGroup,
    _prime_power,
    decode,
    encode,
    full_gl2,
    group_close,
    preimage,
    primitive_root,
    quotient_map,
)

ORACLE_CAP = 10**6
RULES = ("det_legendre", "signature_mod2", "det_mod_target", "table")


class SpecError(ValueError):
    """Inconsistent or malformed entanglement data."""


# --------------------------------------------------------------------------
# small arithmetic helpers


def kronecker_det(disc: int, det: np.ndarray, prime: int) -> np.ndarray:
    """0 where the quadratic character of ``disc`` is +1 on ``det``, 1 where it is -1."""
    det = np.asarray(det, dtype=np.int64)
    if prime == 2:
        if disc == -4:
            return ((det % 4) == 3).astype(np.int64)
        if disc == 8:
            return np.isin(det % 8, (3, 5)).astype(np.int64)
        if disc == -8:
            return np.isin(det % 8, (5, 7)).astype(np.int64)
        raise SpecError(f"2-adic det_legendre needs disc in (-4, 8, -8), got {disc}")
    squares = np.zeros(prime, dtype=bool)
    squares[(np.arange(1, prime, dtype=np.int64) ** 2) % prime] = True
    return (~squares[det % prime]).astype(np.int64)


def signature_mod2(codes: np.ndarray, level: int) -> np.ndarray:
    """Sign of A mod 2 acting on the three nonzero vectors of F_2^2 (0 even, 1 odd)."""
    a, b, c, d = (x % 2 for x in decode(codes, level))
    ident = (a == 1) & (b == 0) & (c == 0) & (d == 1)
    # A^2 = I mod 2 with A != I means A is a transposition
    a2 = (a * a + b * c) % 2
    b2 = (a * b + b * d) % 2
    c2 = (c * a + d * c) % 2
    d2 = (c * b + d * d) % 2
    invol = (a2 == 1) & (b2 == 0) & (c2 == 0) & (d2 == 1)
    return (invol & ~ident).astype(np.int64)


def discrete_log_table(g: int, p: int) -> np.ndarray:
    table = np.full(p, -1, dtype=np.int64)
    x = 1
    for k in range(p - 1):
        table[x] = k
        x = x * g % p
    return table


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class Component:
    prime: int
    exponent: int
    group: MatrixGroup

    def __post_init__(self):
        if self.group.level != self.prime**self.exponent:
            raise SpecError(f"component level {self.group.level} != {self.prime}^{self.exponent}")

    @property
    def level(self) -> int:
        return self.prime**self.exponent


@dataclass(frozen=True, eq=False)
class ComponentMap:
    """One homomorphism G(l^a) -> T given by a named rule (or an explicit value table)."""

    component: int
    rule: str
    params: dict = field(default_factory=dict)
    coordinate: int = 0
    multiplier: int = 1
    values: np.ndarray | None = None  # explicit (|G|, r) table aligned with group elements

    def __post_init__(self):
        if self.rule not in RULES:
            raise SpecError(f"unknown rule {self.rule!r}")

    def to_json(self) -> dict:
        out = {"component": self.component, "rule": self.rule}
        out.update(self.params)
        if self.coordinate:
            out["coordinate"] = self.coordinate
        if self.multiplier != 1:
            out["multiplier"] = self.multiplier
        if self.values is not None:
            out["values"] = self.values.tolist()
        return out


@dataclass(frozen=True, eq=False)
class EntanglementRelation:
    target: tuple[int, ...]
    maps: tuple[ComponentMap, ...]

    def to_json(self) -> dict:
        return {"target_divisors": list(self.target), "maps": [m.to_json() for m in self.maps]}


def _embed_scalar(s: np.ndarray, k: int, target: Sequence[int], coordinate: int, mult: int) -> np.ndarray:
    d = target[coordinate]
    if d % k:
        raise SpecError(f"rule of order {k} does not embed into Z/{d}")
    out = np.zeros((s.size, len(target)), dtype=np.int64)
    out[:, coordinate] = (s * (d // k) * mult) % d
    return out


def _table_values(m: ComponentMap, comp: Component, target: Sequence[int]) -> np.ndarray:
    params = m.params
    level = int(params.get("level", comp.level))
    if comp.level % level:
        raise SpecError(f"table level {level} does not divide component level {comp.level}")
    r = len(target)

    def as_vec(v):
        v = np.atleast_1d(np.asarray(v, dtype=np.int64))
        if v.size == 1 and r > 1:
            w = np.zeros(r, dtype=np.int64)
            w[m.coordinate] = v[0]
            v = w
        if v.size != r:
            raise SpecError("table value has the wrong length")
        return v

    if "entries" in params:
        keys = np.array([int(encode(*e[0], level)) for e in params["entries"]], dtype=np.int64)
        vals = np.array([as_vec(e[1]) for e in params["entries"]])
    elif "generators" in params:
        gens = [tuple(g) for g in params["generators"]]
        images = [as_vec(v) for v in params["images"]]
        sub = group_close(gens, level)
        keys, vals = _extend_homomorphism(sub, [int(encode(*g, level)) for g in gens], images, target)
    else:
        raise SpecError("table rule needs 'entries' or 'generators'/'images'")
    order = np.argsort(keys)
    keys, vals = keys[order], vals[order]
    red = comp.group.reduce_codes(level)
    pos = np.searchsorted(keys, red)
    pos = np.minimum(pos, keys.size - 1)
    if not (keys[pos] == red).all():
        raise SpecError("table does not cover the component group")
    return (vals[pos] * m.multiplier) % np.array(target, dtype=np.int64)


def _extend_homomorphism(group: MatrixGroup, gens: list[int], images, target) -> tuple[np.ndarray, np.ndarray]:
    """Propagate generator images over ``group`` by BFS, rejecting inconsistent data."""
    tgt = np.array(target, dtype=np.int64)
    value = {group.identity: np.zeros(len(target), dtype=np.int64)}
    frontier = [group.identity]
    ops = group.ops
    while frontier:
        nxt = []
        for x in frontier:
            for g, img in zip(gens, images):
                y = int(ops.mul(x, g))
                v = (value[x] + img) % tgt
                if y in value:
                    if not np.array_equal(value[y], v):
                        raise SpecError("generator images do not define a homomorphism")
                else:
                    value[y] = v
                    nxt.append(y)
        frontier = nxt
    keys = np.array(sorted(value), dtype=np.int64)
    return keys, np.array([value[k] for k in keys])


def evaluate_map(m: ComponentMap, comp: Component, target: Sequence[int]) -> np.ndarray:
    """Values (|G|, r) of the map on the component's elements, aligned with ``group.elements``."""
    g = comp.group
    if m.values is not None:
        v = np.asarray(m.values, dtype=np.int64).reshape(g.order, len(target))
        return (v * m.multiplier) % np.array(target, dtype=np.int64)
    if m.rule == "table":
        return _table_values(m, comp, target)
    if m.rule == "signature_mod2":
        return _embed_scalar(signature_mod2(g.elements, g.level), 2, target, m.coordinate, m.multiplier)
    if m.rule == "det_legendre":
        disc = int(m.params.get("disc", comp.prime if comp.prime % 4 == 1 else -comp.prime))
        return _embed_scalar(kronecker_det(disc, g.det(), comp.prime), 2, target, m.coordinate, m.multiplier)
    if m.rule == "det_mod_target":
        p = comp.prime
        gen = int(m.params.get("generator", primitive_root(p)))
        k = int(m.params.get("order", target[m.coordinate]))
        if (p - 1) % k:
            raise SpecError(f"det_mod_target: order {k} does not divide {p - 1}")
        dl = discrete_log_table(gen, p)
        if (dl[g.det() % p] < 0).any() or dl[1] != 0 or np.count_nonzero(dl >= 0) != p - 1:
            raise SpecError(f"{gen} is not a primitive root mod {p}")
        return _embed_scalar(dl[g.det() % p] % k, k, target, m.coordinate, m.multiplier)
    raise SpecError(f"unknown rule {m.rule!r}")


def _check_homomorphism(values: np.ndarray, comp: Component, target: Sequence[int]):
    g = comp.group
    tgt = np.array(target, dtype=np.int64)
    gens = g.generating_set()
    if g.order == 1:
        if values.any():
            raise SpecError("map is nonzero on the trivial group")
        return
    gi = g.index(gens)
    prods = g.index(g.ops.mul(g.elements[:, None], gens[None, :]))
    lhs = values[prods]
    rhs = (values[:, None, :] + values[gi][None, :, :]) % tgt
    if not np.array_equal(lhs, rhs):
        raise SpecError(f"map on component {comp.prime}^{comp.exponent} is not a homomorphism")


def _span(vectors: np.ndarray, orders: Sequence[int]) -> np.ndarray:
    """Sorted ids of the subgroup of prod Z/o_i generated by the given vectors."""
    orders = list(orders)
    if not orders:
        return np.zeros(1, dtype=np.int64)
    allv = mixed_radix_vectors(orders)
    gens = np.unique(vector_ids(vectors, orders)) if len(vectors) else np.zeros(0, dtype=np.int64)
    gens = gens[gens != 0]
    span = np.zeros(1, dtype=np.int64)
    frontier = span
    while frontier.size and gens.size:
        new = np.unique(vector_ids(allv[frontier][:, None, :] + allv[gens][None, :, :], orders).ravel())
        new = np.setdiff1d(new, span)
        span = np.union1d(span, new)
        frontier = new
    return span


# --------------------------------------------------------------------------
# entanglement specs


class EntanglementSpec:
    """Components plus abelian relations; immutable after construction."""

    def __init__(self, components: Sequence[Component], relations: Sequence[EntanglementRelation] = ()):
        self.components = tuple(components)
        self.relations = tuple(relations)
        levels = [c.level for c in self.components]
        for i in range(len(levels)):
            for j in range(i + 1, len(levels)):
                if gcd(levels[i], levels[j]) != 1:
                    raise SpecError("component levels must be pairwise coprime")
        for rel in self.relations:
            for m in rel.maps:
                if not 0 <= m.component < len(self.components):
                    raise SpecError(f"map refers to missing component {m.component}")
                if not 0 <= m.coordinate < max(1, len(rel.target)):
                    raise SpecError("map coordinate out of range")

    # ---- basic data
    @property
    def primes(self) -> tuple[int, ...]:
        return tuple(c.prime for c in self.components)

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(c.level for c in self.components)

    @property
    def level(self) -> int:
        return prod(self.levels)

    @property
    def product_order(self) -> int:
        return prod(c.group.order for c in self.components)

    @property
    def target_orders(self) -> tuple[int, ...]:
        return tuple(d for rel in self.relations for d in rel.target)

    def component_index(self, prime: int) -> int:
        for i, c in enumerate(self.components):
            if c.prime == prime:
                return i
        raise KeyError(prime)

    @cached_property
    def raw_values(self) -> tuple[np.ndarray, ...]:
        """Per component, the (|G|, R) values of the joint map into prod of targets."""
        out = []
        for ci, comp in enumerate(self.components):
            cols = []
            for rel in self.relations:
                acc = np.zeros((comp.group.order, len(rel.target)), dtype=np.int64)
                for m in rel.maps:
                    if m.component == ci:
                        acc = acc + evaluate_map(m, comp, rel.target)
                acc %= np.array(rel.target, dtype=np.int64) if rel.target else 1
                _check_homomorphism(acc, comp, rel.target)
                cols.append(acc)
            out.append(np.concatenate(cols, axis=1) if cols else np.zeros((comp.group.order, 0), dtype=np.int64))
        return tuple(out)

    # ---- (de)serialisation
    @classmethod
    def from_json(cls, data: dict, cap: int = DEFAULT_CAP) -> "EntanglementSpec":
        comps = []
        for c in data.get("components", []):
            p, e = int(c["prime"]), int(c.get("exponent", 1))
            gens = c.get("generators", "full")
            level = p**e
            if gens == "full":
                g = full_gl2(level, cap)
            else:
                base_level = int(c.get("generator_level", level))
                g = group_close([tuple(x) for x in gens], base_level, cap)
                if base_level != level:
                    g = preimage(g, level, cap)
            comps.append(Component(p, e, g))
        rels = []
        for r in data.get("relations", []):
            maps = []
            for m in r["maps"]:
                m = dict(m)
                comp = int(m.pop("component"))
                rule = m.pop("rule", "table")
                coord = int(m.pop("coordinate", 0))
                mult = int(m.pop("multiplier", 1))
                values = m.pop("values", None)
                if values is not None:
                    values = np.asarray(values, dtype=np.int64)
                maps.append(ComponentMap(comp, rule, m, coord, mult, values))
            rels.append(EntanglementRelation(tuple(int(d) for d in r["target_divisors"]), tuple(maps)))
        return cls(comps, rels)

    def to_json(self) -> dict:
        return {
            "components": [
                {"prime": c.prime, "exponent": c.exponent, "generators": c.group.to_json()["generators"]}
                for c in self.components
            ],
            "relations": [r.to_json() for r in self.relations],
        }

    # ---- derived specs
    def with_full_component(self, prime: int, exponent: int = 1, cap: int = DEFAULT_CAP) -> "EntanglementSpec":
        comp = Component(prime, exponent, full_gl2(prime**exponent, cap))
        return EntanglementSpec(self.components + (comp,), self.relations)

    def at_levels(self, exponents: dict[int, int], cap: int = DEFAULT_CAP) -> "EntanglementSpec":
        """Re-express this spec with component ``l`` at level ``l^exponents[l]``.

        Lower exponents project (Phi is divided by the image of the reduction
        kernels), higher exponents take full preimages, and primes not yet
        present are appended as full GL_2 components.  Primes absent from
        ``exponents`` keep their current level.
        """
        phi = build_phi(self)
        comps: list[Component] = []
        psi: list[np.ndarray] = []
        kill = []
        for ci, comp in enumerate(self.components):
            alpha = int(exponents.get(comp.prime, comp.exponent))
            if alpha < 1:
                raise SpecError("exponents must be >= 1")
            ids = phi.psi[ci]
            if alpha == comp.exponent:
                comps.append(comp)
                psi.append(ids)
            elif alpha > comp.exponent:
                g = preimage(comp.group, comp.prime**alpha, cap)
                comps.append(Component(comp.prime, alpha, g))
                psi.append(ids[comp.group.index(g.reduce_codes(comp.level))])
            else:
                lvl = comp.prime**alpha
                red = comp.group.reduce_codes(lvl)
                g = MatrixGroup(lvl, red)
                ident = gl_identity(lvl)
                kill.append(ids[red == ident])
                comps.append(Component(comp.prime, alpha, g))
                # placeholder: one representative per reduced element
                uniq, first = np.unique(red, return_index=True)
                psi.append(ids[first])
        present = {c.prime for c in self.components}
        for p in sorted(set(exponents) - present):
            g = full_gl2(p ** int(exponents[p]), cap)
            comps.append(Component(p, int(exponents[p]), g))
            psi.append(np.zeros(g.order, dtype=np.int64))
        group = phi.group
        if kill:
            vecs = group.all_vectors()
            k_ids = _span(vecs[np.unique(np.concatenate(kill))], group.cyclic_orders) if group.rank else np.zeros(1, np.int64)
            if k_ids.size > 1:
                table = group.add_table()
                full = AbstractFiniteGroup(table)
                q, labels = quotient_map(full, full._make(k_ids))
                from .characters import decompose_abelian

                newg = decompose_abelian(q)
                relabel = newg.ids(newg.vectors[labels])
                psi = [relabel[x] for x in psi]
                group = FiniteAbelianGroup(newg.cyclic_orders)
        orders = group.cyclic_orders
        allv = mixed_radix_vectors(orders)
        maps = tuple(
            ComponentMap(ci, "table", {}, 0, 1, allv[ids])
            for ci, ids in enumerate(psi)
            if orders and ids.any()
        )
        rels = (EntanglementRelation(tuple(orders), maps),) if orders else ()
        return EntanglementSpec(comps, rels)


def gl_identity(level: int) -> int:
    return int(encode(1, 0, 0, 1, level))


# --------------------------------------------------------------------------
# Phi


@dataclass(frozen=True, eq=False)
class PhiGroup:
    """Phi with the component maps psi (as ids of Phi elements, aligned with component elements)."""

    spec: EntanglementSpec
    group: FiniteAbelianGroup
    psi: tuple[np.ndarray, ...]

    @property
    def order(self) -> int:
        return self.group.order

    def component_vectors(self, c: int) -> np.ndarray:
        return self.group.all_vectors()[self.psi[c]]

    @property
    def kernel_order(self) -> int:
        return self.spec.product_order // self.order


_PHI_CACHE: dict[int, PhiGroup] = {}


def build_phi(spec: EntanglementSpec) -> PhiGroup:
    """Realise Phi = prod of targets with psi; checks surjectivity and subdirectness."""
    cached = spec.__dict__.get("_phi")
    if cached is not None:
        return cached
    orders = spec.target_orders
    raw = spec.raw_values
    images = [np.unique(r, axis=0) if r.size else np.zeros((1, 0), np.int64) for r in raw]
    total = prod(orders) if orders else 1
    if orders:
        joint = _span(np.concatenate(images), orders)
        if joint.size != total:
            raise SpecError(f"joint image has order {joint.size}, expected {total}: relations not surjective")
        for c in range(len(raw)):
            others = [images[j] for j in range(len(raw)) if j != c]
            span_o = _span(np.concatenate(others), orders) if others else np.zeros(1, np.int64)
            mine = np.unique(vector_ids(images[c], orders))
            if not np.isin(mine, span_o).all():
                raise SpecError(f"kernel does not project onto component {c}: not subdirect")
    phi_ab = abelian_from_orders(orders)
    psi = []
    keep = [i for i, d in enumerate(orders) if d > 1]
    kept_orders = [orders[i] for i in keep]
    for r in raw:
        raw_ids = vector_ids(r[:, keep], kept_orders) if kept_orders else np.zeros(len(r), dtype=np.int64)
        psi.append(phi_ab.ids(phi_ab.vectors[raw_ids]) if kept_orders else raw_ids)
    out = PhiGroup(spec, FiniteAbelianGroup(phi_ab.cyclic_orders), tuple(psi))
    spec.__dict__["_phi"] = out
    return out


def lift_character(phi: PhiGroup, chi: Character, component: int):
    """chi o psi restricted to a component, as a function of element codes."""
    if not 0 <= component < len(phi.psi):
        raise IndexError(f"component {component} out of range")
    if chi.group.cyclic_orders != phi.group.cyclic_orders:
        raise SpecError("character does not belong to Phi")
    comp = phi.spec.components[component]
    vecs = phi.component_vectors(component)

    def chi_l(code):
        return chi.value(vecs[comp.group.index(code)])

    return chi_l


def phi_stability_check(spec: EntanglementSpec, extra_level: int) -> bool:
    """Appending a coprime full GL_2 component leaves Phi unchanged."""
    pe = _prime_power(extra_level)
    if pe is None:
        raise SpecError("extra level must be a prime power")
    if gcd(extra_level, spec.level) != 1:
        raise SpecError("extra level is not coprime to the existing levels")
    a = build_phi(spec).group
    b = build_phi(spec.with_full_component(pe[0], pe[1])).group
    return a.same_structure(b)


# --------------------------------------------------------------------------
# local sets and the density of S_m in G(m)


@dataclass(frozen=True, eq=False)
class LocalSet:
    component: int
    mask: np.ndarray  # boolean, aligned with the component group's elements

    @property
    def size(self) -> int:
        return int(np.count_nonzero(self.mask))

    def elements(self, spec: EntanglementSpec) -> np.ndarray:
        return spec.components[self.component].group.elements[self.mask]


@dataclass(frozen=True)
class MemberFraction:
    value: Fraction
    correction: Fraction | None
    local_densities: tuple[Fraction, ...]
    obstruction: int | None = None  # prime with an empty local set

    def __eq__(self, other):
        if isinstance(other, MemberFraction):
            return self.value == other.value
        return self.value == other


def _check_local_sets(spec: EntanglementSpec, local_sets: Sequence[LocalSet]) -> list[np.ndarray]:
    if len(local_sets) != len(spec.components):
        raise SpecError("need exactly one local set per component")
    masks = []
    for i, (ls, comp) in enumerate(zip(local_sets, spec.components)):
        if ls.component != i or ls.mask.shape != (comp.group.order,):
            raise SpecError(f"local set {i} does not match component {i}")
        masks.append(ls.mask)
    return masks


def character_sum(phi: PhiGroup, hists: Sequence[np.ndarray]) -> Fraction:
    """sum over nontrivial chi of prod_l E_{chi,l}; asserted rational."""
    total = CyclotomicNumber.rational(0)
    for chi in characters(phi.group)[1:]:
        term = CyclotomicNumber.rational(1)
        for h in hists:
            term = term * histogram_average(chi, h)
            if term == 0:
                break
        total = total + term
    if not total.is_rational():
        raise AssertionError(f"character sum is not rational: {total!r}")
    return total.to_fraction()


def member_fraction(spec: EntanglementSpec, local_sets: Sequence[LocalSet]) -> MemberFraction:
    """|S_m n G(m)| / |G(m)| via the character-sum formula."""
    phi = build_phi(spec)
    masks = _check_local_sets(spec, local_sets)
    dens = tuple(Fraction(int(m.sum()), m.size) for m in masks)
    for comp, d in zip(spec.components, dens):
        if d == 0:
            return MemberFraction(Fraction(0), None, dens, comp.prime)
    hists = [np.bincount(phi.psi[i][m], minlength=phi.order) for i, m in enumerate(masks)]
    corr = 1 + character_sum(phi, hists)
    return MemberFraction(corr * prod(dens, start=Fraction(1)), corr, dens, None)


def brute_force_fraction(spec: EntanglementSpec, local_sets: Sequence[LocalSet], cap: int = ORACLE_CAP) -> Fraction:
    """Count tuples of the joint kernel lying in prod S(l) by direct enumeration."""
    masks = _check_local_sets(spec, local_sets)
    if spec.product_order > cap:
        raise GroupError(f"product of order {spec.product_order} exceeds oracle cap {cap}")
    orders = [d for d in spec.target_orders]
    tgt = np.array(orders, dtype=np.int64)
    state_v = np.zeros((1, len(orders)), dtype=np.int64)
    state_in = np.ones(1, dtype=bool)
    for vals, mask in zip(spec.raw_values, masks):
        state_v = ((state_v[:, None, :] + vals[None, :, :]) % tgt).reshape(-1, len(orders)) if orders else np.zeros((state_v.shape[0] * len(mask), 0), np.int64)
        state_in = (state_in[:, None] & mask[None, :]).ravel()
    kernel = ~state_v.any(axis=1)
    size = int(kernel.sum())
    return Fraction(int((kernel & state_in).sum()), size)


def materialize(spec: EntanglementSpec, cap: int = ORACLE_CAP):
    """G(m) as a ProductSubgroup of its components (the joint relation kernel)."""
    from .groups import CapExceededError, ProductOps, ProductSubgroup

    if spec.product_order > cap:
        raise CapExceededError(f"product of order {spec.product_order} exceeds cap {cap}")
    factors = [c.group for c in spec.components]
    orders = list(spec.target_orders)
    tgt = np.array(orders, dtype=np.int64)
    acc = np.zeros((1, len(orders)), dtype=np.int64)
    for vals in spec.raw_values:
        acc = ((acc[:, None, :] + vals[None, :, :]) % tgt).reshape(-1, len(orders)) if orders else np.zeros((acc.shape[0] * len(vals), 0), np.int64)
    keep = np.flatnonzero(~acc.any(axis=1)).astype(np.int64)
    ops = ProductOps(factors)
    return ProductSubgroup(factors, keep, presorted=True, _ops=ops)
