"""Finite abelian groups, their characters, and exact cyclotomic arithmetic."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import gcd, lcm
from typing import Sequence

import numpy as np

from .groups import FiniteGroup, GroupError, _close, _prime_factors

MAX_CYCLOTOMIC_ORDER = 64
PAIR_CHECK_CAP = 4096


class CyclotomicError(ValueError):
    pass


class EmptyLocalSetError(ValueError):
    """Averaging over an empty multiset (an empty local set S(l))."""


# --------------------------------------------------------------------------
# cyclotomic fields


def _poly_divmod_int(num: list[int], den: list[int]) -> list[int]:
    # exact division of integer polynomials (coefficients low -> high), den monic
    num = list(num)
    out = [0] * (len(num) - len(den) + 1)
    for i in range(len(out) - 1, -1, -1):
        q = num[i + len(den) - 1]
        out[i] = q
        for j, c in enumerate(den):
            num[i + j] -= q * c
    if any(num[: len(den) - 1]):
        raise CyclotomicError("inexact polynomial division")
    return out


@lru_cache(maxsize=None)
def cyclotomic_polynomial(e: int) -> tuple[int, ...]:
    """Coefficients (low to high) of the e-th cyclotomic polynomial."""
    poly = [-1] + [0] * (e - 1) + [1]
    for d in range(1, e):
        if e % d == 0:
            poly = _poly_divmod_int(poly, list(cyclotomic_polynomial(d)))
    return tuple(poly)


@lru_cache(maxsize=None)
def power_table(e: int) -> np.ndarray:
    """Row k holds the coordinates of zeta_e^k in the power basis of Q(zeta_e)."""
    phi = cyclotomic_polynomial(e)
    deg = len(phi) - 1
    rows = np.zeros((e, deg), dtype=np.int64)
    cur = [1] + [0] * (deg - 1)
    for k in range(e):
        rows[k] = cur
        # multiply by x and reduce with the monic relation
        top = cur[-1]
        cur = [0] + cur[:-1]
        for j in range(deg):
            cur[j] -= top * phi[j]
    rows.setflags(write=False)
    return rows


def _check_order(e: int):
    if e < 1 or e > MAX_CYCLOTOMIC_ORDER:
        raise CyclotomicError(f"cyclotomic order {e} outside 1..{MAX_CYCLOTOMIC_ORDER}")


class CyclotomicNumber:
    """Exact element of Q(zeta_e), stored in the power basis 1, z, ..., z^(phi(e)-1)."""

    __slots__ = ("order", "coeffs")

    def __init__(self, order: int, coeffs: Sequence):
        _check_order(order)
        deg = len(cyclotomic_polynomial(order)) - 1
        c = [Fraction(x) for x in coeffs]
        if len(c) > deg:
            raise CyclotomicError("too many coefficients")
        c += [Fraction(0)] * (deg - len(c))
        self.order = order
        self.coeffs = tuple(c)

    @classmethod
    def rational(cls, q, order: int = 1) -> "CyclotomicNumber":
        return cls(order, [Fraction(q)])

    @classmethod
    def root_of_unity(cls, e: int, k: int = 1) -> "CyclotomicNumber":
        _check_order(e)
        return cls(e, power_table(e)[k % e].tolist())

    @classmethod
    def from_exponent_counts(cls, e: int, counts, denominator=1) -> "CyclotomicNumber":
        """(sum_k counts[k] zeta_e^k) / denominator, computed exactly."""
        _check_order(e)
        counts = np.asarray(counts, dtype=np.int64)
        num = counts @ power_table(e)
        den = Fraction(denominator)
        return cls(e, [Fraction(int(v)) / den for v in num])

    def _lift(self, order: int) -> tuple[Fraction, ...]:
        if order == self.order:
            return self.coeffs
        step = order // self.order
        table = power_table(order)
        out = [Fraction(0)] * table.shape[1]
        for i, c in enumerate(self.coeffs):
            if c:
                row = table[(i * step) % order]
                for j in np.flatnonzero(row):
                    out[j] += c * int(row[j])
        return tuple(out)

    def _common(self, other):
        if not isinstance(other, CyclotomicNumber):
            other = CyclotomicNumber.rational(other)
        e = lcm(self.order, other.order)
        _check_order(e)
        return e, self._lift(e), other._lift(e)

    def __add__(self, other):
        e, a, b = self._common(other)
        return CyclotomicNumber(e, [x + y for x, y in zip(a, b)])

    __radd__ = __add__

    def __neg__(self):
        return CyclotomicNumber(self.order, [-x for x in self.coeffs])

    def __sub__(self, other):
        return self + (-other if isinstance(other, CyclotomicNumber) else -Fraction(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, CyclotomicNumber):
            q = Fraction(other)
            return CyclotomicNumber(self.order, [x * q for x in self.coeffs])
        e, a, b = self._common(other)
        phi = cyclotomic_polynomial(e)
        deg = len(phi) - 1
        prod = [Fraction(0)] * (2 * deg - 1)
        for i, x in enumerate(a):
            if x:
                for j, y in enumerate(b):
                    if y:
                        prod[i + j] += x * y
        for k in range(len(prod) - 1, deg - 1, -1):
            top = prod[k]
            if top:
                for j in range(deg):
                    prod[k - deg + j] -= top * phi[j]
        return CyclotomicNumber(e, prod[:deg])

    __rmul__ = __mul__

    def __truediv__(self, q):
        if isinstance(q, CyclotomicNumber):
            if not q.is_rational():
                raise CyclotomicError("division by an irrational cyclotomic number is not supported")
            q = q.to_fraction()
        q = Fraction(q)
        return CyclotomicNumber(self.order, [x / q for x in self.coeffs])

    def __eq__(self, other):
        if not isinstance(other, CyclotomicNumber):
            try:
                other = CyclotomicNumber.rational(other)
            except (TypeError, ValueError):
                return NotImplemented
        _, a, b = self._common(other)
        return a == b

    def __hash__(self):
        # hash the value independent of the ambient order via the rational part
        return hash(self.coeffs[0]) if self.is_rational() else hash((self.order, self.coeffs))

    def is_rational(self) -> bool:
        return not any(self.coeffs[1:])

    def to_fraction(self) -> Fraction:
        if not self.is_rational():
            raise CyclotomicError(f"{self!r} is not rational")
        return self.coeffs[0]

    def conjugate(self) -> "CyclotomicNumber":
        e = self.order
        table = power_table(e)
        out = [Fraction(0)] * table.shape[1]
        for i, c in enumerate(self.coeffs):
            if c:
                row = table[(-i) % e]
                for j in np.flatnonzero(row):
                    out[j] += c * int(row[j])
        return CyclotomicNumber(e, out)

    def to_complex(self) -> complex:
        z = np.exp(2j * np.pi / self.order)
        return complex(sum(float(c) * z**i for i, c in enumerate(self.coeffs)))

    def to_json(self) -> dict:
        return {"order": self.order, "coeffs": [f"{c.numerator}/{c.denominator}" for c in self.coeffs]}

    def __repr__(self):
        if self.is_rational():
            return f"CyclotomicNumber({self.coeffs[0]})"
        return f"CyclotomicNumber(order={self.order}, coeffs={[str(c) for c in self.coeffs]})"


# --------------------------------------------------------------------------
# finite abelian groups


def mixed_radix_vectors(orders: Sequence[int]) -> np.ndarray:
    """All exponent vectors for ``orders`` in lexicographic order (last index fastest)."""
    if not orders:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.meshgrid(*[np.arange(d, dtype=np.int64) for d in orders], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def vector_ids(vectors, orders: Sequence[int]) -> np.ndarray:
    """Mixed-radix ids of exponent vectors (inverse of :func:`mixed_radix_vectors`)."""
    v = np.asarray(vectors, dtype=np.int64)
    out = np.zeros(v.shape[:-1], dtype=np.int64)
    for i, d in enumerate(orders):
        out = out * d + v[..., i] % d
    return out


@dataclass(frozen=True, eq=False)
class FiniteAbelianGroup:
    """Abelian group Z/d_1 x ... x Z/d_r with d_1 | d_2 | ... and an optional source."""

    cyclic_orders: tuple[int, ...]
    source: FiniteGroup | None = None
    generators: tuple[int, ...] = ()
    vectors: np.ndarray | None = None  # exponent vector of each source element

    @classmethod
    def from_orders(cls, orders: Sequence[int]) -> "FiniteAbelianGroup":
        return cls(tuple(int(d) for d in orders))

    @property
    def order(self) -> int:
        out = 1
        for d in self.cyclic_orders:
            out *= d
        return out

    @property
    def rank(self) -> int:
        return len(self.cyclic_orders)

    @property
    def exponent(self) -> int:
        return lcm(*self.cyclic_orders) if self.cyclic_orders else 1

    def all_vectors(self) -> np.ndarray:
        return mixed_radix_vectors(self.cyclic_orders)

    def ids(self, vectors) -> np.ndarray:
        return vector_ids(vectors, self.cyclic_orders)

    def add_table(self) -> np.ndarray:
        v = self.all_vectors()
        return self.ids(v[:, None, :] + v[None, :, :])

    def vector_of(self, code) -> np.ndarray:
        if self.source is None:
            raise GroupError("no source group attached")
        return self.vectors[self.source.index(code)]

    def element_of(self, vector) -> int:
        if self.source is None:
            raise GroupError("no source group attached")
        out = np.array(self.source.identity)
        for g, k in zip(self.generators, np.asarray(vector) % np.array(self.cyclic_orders)):
            for _ in range(int(k)):
                out = self.source.ops.mul(out, g)
        return int(out)

    def same_structure(self, other: "FiniteAbelianGroup") -> bool:
        return self.cyclic_orders == other.cyclic_orders


def _element_orders(g: FiniteGroup) -> np.ndarray:
    el = g.elements
    orders = np.zeros(el.size, dtype=np.int64)
    cur = el.copy()
    k = 1
    while (orders == 0).any():
        orders[(cur == g.identity) & (orders == 0)] = k
        cur = g.ops.mul(cur, el)
        k += 1
        if k > el.size + 1:
            raise GroupError("element order computation did not terminate")
    return orders


def _power(g: FiniteGroup, x, k: int):
    out = np.full(np.shape(x), g.identity, dtype=np.int64)
    base = np.asarray(x, dtype=np.int64)
    while k:
        if k & 1:
            out = g.ops.mul(out, base)
        base = g.ops.mul(base, base)
        k >>= 1
    return out


def _pgroup_basis(g: FiniteGroup, p: int, members: np.ndarray) -> list[tuple[int, int]]:
    """Basis of the p-primary part (element, order) by greedy max quotient order."""
    target = members.size
    span = np.array([g.identity], dtype=np.int64)
    basis = []
    while span.size < target:
        # order of each member in the quotient by the current span
        cur = members.copy()
        qord = np.ones(members.size, dtype=np.int64)
        inside = np.isin(cur, span)
        while not inside.all():
            cur = np.where(inside, cur, _power(g, cur, p))
            qord = np.where(inside, qord, qord * p)
            inside = np.isin(cur, span)
        i = int(np.argmax(qord))
        pb = int(qord[i])
        coset = g.ops.mul(members[i], span)
        ok = _power(g, coset, pb) == g.identity
        if not ok.any():
            raise GroupError("no complement found (group not abelian?)")
        y = int(coset[np.flatnonzero(ok)[0]])
        powers = [g.identity]
        for _ in range(pb - 1):
            powers.append(int(g.ops.mul(powers[-1], y)))
        span = np.unique(g.ops.mul(span[:, None], np.array(powers)[None, :]).ravel())
        basis.append((y, pb))
    return basis


def decompose_abelian(g: FiniteGroup) -> FiniteAbelianGroup:
    """Invariant-factor decomposition of a finite abelian group, with explicit iso."""
    if g.order <= PAIR_CHECK_CAP:
        el = g.elements
        if not np.array_equal(g.ops.mul(el[:, None], el[None, :]), g.ops.mul(el[None, :], el[:, None])):
            raise GroupError("group is not abelian")
    elif not g.is_abelian():
        raise GroupError("group is not abelian")
    if g.order == 1:
        return FiniteAbelianGroup((), g, (), np.zeros((1, 0), dtype=np.int64))
    orders = _element_orders(g)
    per_prime = {}
    for p in _prime_factors(g.order):
        pk = 1
        while g.order % (pk * p) == 0:
            pk *= p
        members = g.elements[pk % orders == 0]
        per_prime[p] = sorted(_pgroup_basis(g, p, members), key=lambda t: -t[1])
    rank = max(len(b) for b in per_prime.values())
    gens, divs = [], []
    for i in range(rank):
        x, d = g.identity, 1
        for basis in per_prime.values():
            if i < len(basis):
                x = int(g.ops.mul(x, basis[i][0]))
                d *= basis[i][1]
        gens.append(x)
        divs.append(d)
    gens, divs = gens[::-1], divs[::-1]
    # enumerate the iso Z/d_1 x ... -> g in lexicographic vector order
    img = np.array([g.identity], dtype=np.int64)
    for x, d in zip(gens, divs):
        pw = [g.identity]
        for _ in range(d - 1):
            pw.append(int(g.ops.mul(pw[-1], x)))
        img = g.ops.mul(img[:, None], np.array(pw)[None, :]).ravel()
    if np.unique(img).size != g.order:
        raise GroupError("abelian decomposition is not bijective")
    vecs = mixed_radix_vectors(divs)
    vectors = np.empty_like(vecs)
    vectors[g.index(img)] = vecs
    a = FiniteAbelianGroup(tuple(divs), g, tuple(gens), vectors)
    if g.order <= PAIR_CHECK_CAP:
        ids = a.ids(vectors)
        prod = g.index(g.ops.mul(g.elements[:, None], g.elements[None, :]))
        if not np.array_equal(ids[prod], a.ids(vectors[:, None, :] + vectors[None, :, :])):
            raise GroupError("abelian decomposition is not a homomorphism")
    return a


def abelian_from_orders(orders: Sequence[int]) -> FiniteAbelianGroup:
    """Invariant-factor form of Z/o_1 x ... x Z/o_k, with the iso to the given coordinates.

    ``vectors[i]`` is the invariant-coordinate vector of the element whose
    mixed-radix id (in the original coordinates) is ``i``.
    """
    from .groups import AbstractFiniteGroup

    orders = [int(o) for o in orders if int(o) > 1]
    if not orders:
        return FiniteAbelianGroup((), None, (), np.zeros((1, 0), dtype=np.int64))
    v = mixed_radix_vectors(orders)
    table = vector_ids(v[:, None, :] + v[None, :, :], orders)
    return decompose_abelian(AbstractFiniteGroup(table))


def abelianization(g: FiniteGroup):
    """Return ``(A, vectors)``: g^ab as :class:`FiniteAbelianGroup` and the image of each element."""
    from .groups import commutator_subgroup, quotient_map

    q, labels = quotient_map(g, commutator_subgroup(g))
    a = decompose_abelian(q)
    return a, a.vectors[labels]


# --------------------------------------------------------------------------
# characters


@dataclass(frozen=True, eq=False)
class Character:
    group: FiniteAbelianGroup
    exponents: tuple[int, ...]

    def __post_init__(self):
        ex = tuple(int(k) % d for k, d in zip(self.exponents, self.group.cyclic_orders))
        if len(ex) != self.group.rank:
            raise ValueError("exponent vector has the wrong length")
        object.__setattr__(self, "exponents", ex)

    @property
    def value_order(self) -> int:
        """e with values in mu_e (the exponent of the group)."""
        return self.group.exponent

    @property
    def order(self) -> int:
        o = 1
        for k, d in zip(self.exponents, self.group.cyclic_orders):
            o = lcm(o, d // gcd(k, d))
        return o

    def is_trivial(self) -> bool:
        return not any(self.exponents)

    def log_values(self, vectors) -> np.ndarray:
        """Exponents k with chi(v) = zeta_e^k, e = :attr:`value_order`."""
        e = self.value_order
        v = np.asarray(vectors, dtype=np.int64)
        w = np.array([k * (e // d) for k, d in zip(self.exponents, self.group.cyclic_orders)], dtype=np.int64)
        if w.size == 0:
            return np.zeros(v.shape[:-1], dtype=np.int64)
        return (v @ w) % e

    def value(self, vector) -> CyclotomicNumber:
        e = self.value_order
        return CyclotomicNumber.root_of_unity(e, int(self.log_values(np.asarray(vector)[None, :])[0]))

    def __call__(self, vector) -> CyclotomicNumber:
        return self.value(vector)

    def conjugate(self) -> "Character":
        return Character(self.group, tuple(-k for k in self.exponents))

    def __eq__(self, other):
        return isinstance(other, Character) and self.group.cyclic_orders == other.group.cyclic_orders and self.exponents == other.exponents

    def __hash__(self):
        return hash((self.group.cyclic_orders, self.exponents))

    def to_json(self) -> dict:
        return {"divisors": list(self.group.cyclic_orders), "exponents": list(self.exponents)}

    def __repr__(self):
        return f"Character({list(self.group.cyclic_orders)}, {list(self.exponents)})"


def characters(a: FiniteAbelianGroup) -> list[Character]:
    """All characters, lexicographic in the exponent vector (trivial first)."""
    return [Character(a, ex) for ex in itertools.product(*[range(d) for d in a.cyclic_orders])]


def histogram_average(chi: Character, hist) -> CyclotomicNumber:
    """Average of chi over the multiset with ``hist[i]`` copies of the element with id ``i``."""
    hist = np.asarray(hist, dtype=np.int64)
    total = int(hist.sum())
    if total == 0:
        raise EmptyLocalSetError("average over an empty multiset")
    e = chi.value_order
    logs = chi.log_values(chi.group.all_vectors())
    counts = np.bincount(logs, weights=hist, minlength=e).astype(np.int64)
    return CyclotomicNumber.from_exponent_counts(e, counts, total)


def char_sum_average(chi: Character, multiset, weights=None) -> CyclotomicNumber:
    """Exact average of chi over exponent vectors (rows of ``multiset``), optionally weighted."""
    v = np.asarray(multiset, dtype=np.int64).reshape(-1, chi.group.rank)
    w = np.ones(len(v), dtype=np.int64) if weights is None else np.asarray(weights, dtype=np.int64)
    hist = np.bincount(chi.group.ids(v), weights=w, minlength=chi.group.order).astype(np.int64)
    return histogram_average(chi, hist)
