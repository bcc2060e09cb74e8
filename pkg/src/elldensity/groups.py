"""Finite matrix groups over Z/nZ and subdirect products.

Every group is stored as a sorted ``int64`` array of element codes together
with an *ops* object that knows how to multiply and invert codes.  Three kinds
of ambient structure are supported:

* 2x2 invertible matrices mod ``n``, packed as ``((a*n + b)*n + c)*n + d``;
* abstract groups given by a multiplication table (elements are row ids);
* direct products of finite groups (mixed-radix code of factor positions).

All algorithms (closure, normality, commutators, quotients, Goursat data)
are written once against that interface, vectorised with numpy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import gcd
from typing import Iterable, Sequence

import numpy as np

DEFAULT_CAP = 10**7
QUOTIENT_CAP = 4096


class GroupError(ValueError):
    """Invalid group-theoretic input (non-invertible generator, non-normal subgroup...)."""


class CapExceededError(GroupError):
    """A construction would enumerate more elements than the configured cap."""


def _prime_factors(n: int) -> list[int]:
    out, p = [], 2
    while p * p <= n:
        if n % p == 0:
            out.append(p)
            while n % p == 0:
                n //= p
        p += 1
    if n > 1:
        out.append(n)
    return out


def gl2_order(n: int) -> int:
    """|GL_2(Z/nZ)|."""
    order = n**4
    for p in _prime_factors(n):
        order = order // p**3 * (p - 1) * (p * p - 1)
    return order


# --------------------------------------------------------------------------
# code packing for matrices


def encode(a, b, c, d, n: int):
    a, b, c, d = (np.asarray(v, dtype=np.int64) % n for v in (a, b, c, d))
    return ((a * n + b) * n + c) * n + d


def decode(codes, n: int):
    r = np.asarray(codes, dtype=np.int64)
    d = r % n
    r = r // n
    c = r % n
    r = r // n
    return r // n, r % n, c, d


@lru_cache(maxsize=None)
def _unit_inverse_table(n: int) -> np.ndarray:
    inv = np.zeros(n, dtype=np.int64)
    for u in range(n):
        if gcd(u, n) == 1:
            inv[u] = pow(u, -1, n) if n > 1 else 0
    return inv


@lru_cache(maxsize=None)
def _unit_mask(n: int) -> np.ndarray:
    return np.array([gcd(u, n) == 1 for u in range(n)], dtype=bool)


@dataclass(frozen=True)
class ResidueMatrix:
    """A 2x2 matrix ``[[a, b], [c, d]]`` with entries reduced mod ``level``."""

    level: int
    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        n = int(self.level)
        if n < 1:
            raise GroupError("level must be positive")
        object.__setattr__(self, "level", n)
        for name in "abcd":
            object.__setattr__(self, name, int(getattr(self, name)) % n)

    @classmethod
    def from_code(cls, code: int, level: int) -> "ResidueMatrix":
        a, b, c, d = (int(v) for v in decode(code, level))
        return cls(level, a, b, c, d)

    @property
    def code(self) -> int:
        return int(encode(self.a, self.b, self.c, self.d, self.level))

    @property
    def det(self) -> int:
        return (self.a * self.d - self.b * self.c) % self.level

    def is_invertible(self) -> bool:
        return gcd(self.det, self.level) == 1

    def entries(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)

    def __matmul__(self, other: "ResidueMatrix") -> "ResidueMatrix":
        if other.level != self.level:
            raise GroupError("level mismatch")
        a, b, c, d = self.entries()
        e, f, g, h = other.entries()
        return ResidueMatrix(self.level, a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)

    def inverse(self) -> "ResidueMatrix":
        if not self.is_invertible():
            raise GroupError(f"matrix {self.entries()} is not invertible mod {self.level}")
        u = pow(self.det, -1, self.level) if self.level > 1 else 0
        return ResidueMatrix(self.level, u * self.d, -u * self.b, -u * self.c, u * self.a)

    def reduce(self, k: int) -> "ResidueMatrix":
        if self.level % k:
            raise GroupError(f"{k} does not divide {self.level}")
        return ResidueMatrix(k, self.a, self.b, self.c, self.d)


# --------------------------------------------------------------------------
# ambient operations


class GL2Ops:
    def __init__(self, n: int):
        self.n = n
        self.identity = int(encode(1, 0, 0, 1, n))
        self._inv = _unit_inverse_table(n)

    def key(self):
        return ("gl2", self.n)

    def mul(self, x, y):
        n = self.n
        a, b, c, d = decode(x, n)
        e, f, g, h = decode(y, n)
        return encode(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h, n)

    def inv(self, x):
        n = self.n
        a, b, c, d = decode(x, n)
        u = self._inv[(a * d - b * c) % n]
        return encode(u * d, -u * b, -u * c, u * a, n)

    def det(self, x):
        a, b, c, d = decode(x, self.n)
        return (a * d - b * c) % self.n


@lru_cache(maxsize=None)
def gl2_ops(n: int) -> GL2Ops:
    return GL2Ops(n)


class TableOps:
    def __init__(self, table: np.ndarray, identity: int):
        self.table = table
        self.identity = int(identity)
        rows = table == identity
        if not rows.any(axis=1).all():
            raise GroupError("element without inverse in multiplication table")
        self._inv = rows.argmax(axis=1).astype(np.int64)

    def key(self):
        return ("table", id(self.table))

    def mul(self, x, y):
        return self.table[np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64)]

    def inv(self, x):
        return self._inv[np.asarray(x, dtype=np.int64)]


class ProductOps:
    def __init__(self, factors: Sequence["FiniteGroup"]):
        self.factors = tuple(factors)
        sizes = [f.order for f in self.factors]
        radix = [1] * len(sizes)
        for i in range(len(sizes) - 2, -1, -1):
            radix[i] = radix[i + 1] * sizes[i + 1]
        self.sizes = np.array(sizes, dtype=np.int64)
        self.radix = np.array(radix, dtype=np.int64)
        if int(np.prod([float(s) for s in sizes])) > 2**62:
            raise CapExceededError("direct product too large to encode")
        self.identity = int(self.pack([f.index(f.identity)[()] for f in self.factors]))

    def key(self):
        return ("product",) + tuple(f.key() for f in self.factors)

    def pack(self, positions):
        pos = np.asarray(positions, dtype=np.int64)
        return (pos * self.radix).sum(axis=-1)

    def positions(self, x):
        x = np.asarray(x, dtype=np.int64)
        return [(x // r) % s for r, s in zip(self.radix, self.sizes)]

    def to_tuples(self, x):
        x = np.asarray(x, dtype=np.int64)
        return np.stack([f.elements[p] for f, p in zip(self.factors, self.positions(x))], axis=-1)

    def from_tuples(self, t):
        t = np.asarray(t, dtype=np.int64)
        out = np.zeros(t.shape[:-1], dtype=np.int64)
        for i, f in enumerate(self.factors):
            out += f.index(t[..., i]) * self.radix[i]
        return out

    def mul(self, x, y):
        px, py = self.positions(x), self.positions(y)
        out = 0
        for f, a, b, r in zip(self.factors, px, py, self.radix):
            prod = f.ops.mul(f.elements[a], f.elements[b])
            out = out + f.index(prod) * r
        return np.asarray(out, dtype=np.int64)

    def inv(self, x):
        out = 0
        for f, a, r in zip(self.factors, self.positions(x), self.radix):
            out = out + f.index(f.ops.inv(f.elements[a])) * r
        return np.asarray(out, dtype=np.int64)


# --------------------------------------------------------------------------
# groups


def _close(ops, gens: np.ndarray, cap: int) -> np.ndarray:
    gens = np.unique(np.asarray(gens, dtype=np.int64))
    known = np.array([ops.identity], dtype=np.int64)
    if gens.size == 0:
        return known
    frontier = known
    while frontier.size:
        prods = np.unique(ops.mul(frontier[:, None], gens[None, :]).ravel())
        new = np.setdiff1d(prods, known, assume_unique=True)
        if known.size + new.size > cap:
            raise CapExceededError(f"closure exceeds cap {cap}")
        known = np.union1d(known, new)
        frontier = new
    return known


class FiniteGroup:
    """Finite group: a sorted set of codes inside an ambient ``ops``."""

    def __init__(self, ops, elements, generators=None, *, presorted: bool = False):
        self.ops = ops
        el = np.asarray(elements, dtype=np.int64)
        if not presorted:
            el = np.unique(el)
        el.setflags(write=False)
        self.elements = el
        self._generators = None if generators is None else np.unique(np.asarray(generators, dtype=np.int64))

    # --- constructors of related groups keep the concrete subclass
    def _make(self, elements, generators=None, presorted=False) -> "FiniteGroup":
        return FiniteGroup(self.ops, elements, generators, presorted=presorted)

    def key(self):
        return (self.ops.key(), self.elements.tobytes())

    @property
    def order(self) -> int:
        return int(self.elements.size)

    def __len__(self) -> int:
        return self.order

    @property
    def identity(self) -> int:
        return self.ops.identity

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        pos = np.searchsorted(self.elements, x)
        pos = np.minimum(pos, self.elements.size - 1)
        return self.elements[pos] == x

    def __contains__(self, x) -> bool:
        if isinstance(x, ResidueMatrix):
            x = x.code
        return bool(self.contains(x))

    def index(self, x) -> np.ndarray:
        """Positions of ``x`` in :attr:`elements`; raises if some are missing."""
        x = np.asarray(x, dtype=np.int64)
        pos = np.searchsorted(self.elements, x)
        ok = pos < self.elements.size
        if not ok.all() or not (self.elements[np.where(ok, pos, 0)] == x).all():
            raise GroupError("element not in group")
        return pos

    def is_subgroup_of(self, other: "FiniteGroup") -> bool:
        return self.ops.key() == other.ops.key() and bool(other.contains(self.elements).all())

    def __eq__(self, other) -> bool:
        if not isinstance(other, FiniteGroup):
            return NotImplemented
        return self.ops.key() == other.ops.key() and np.array_equal(self.elements, other.elements)

    def __hash__(self):
        return hash(self.key())

    def subgroup(self, generators, cap: int = DEFAULT_CAP) -> "FiniteGroup":
        gens = np.asarray(generators, dtype=np.int64).ravel()
        if gens.size and not self.contains(gens).all():
            raise GroupError("generators outside group")
        return self._make(_close(self.ops, gens, cap), gens, presorted=True)

    def generating_set(self) -> np.ndarray:
        """A generating set; computed greedily (deterministic order) when unknown."""
        if self._generators is not None:
            return self._generators
        gens: list[int] = []
        current = np.array([self.identity], dtype=np.int64)
        rng = np.random.default_rng(0)
        for x in self.elements[rng.permutation(self.order)]:
            if current.size == self.order:
                break
            pos = min(int(np.searchsorted(current, x)), current.size - 1)
            if current[pos] != x:
                gens.append(int(x))
                current = _close(self.ops, np.array(gens), self.order)
        self._generators = np.array(sorted(gens), dtype=np.int64)
        return self._generators

    @property
    def generators(self) -> np.ndarray:
        return self.generating_set()

    def is_abelian(self) -> bool:
        g = self.generating_set()
        if g.size == 0:
            return True
        return bool((self.ops.mul(g[:, None], g[None, :]) == self.ops.mul(g[None, :], g[:, None])).all())

    def __repr__(self):
        return f"{type(self).__name__}(order={self.order})"


class MatrixGroup(FiniteGroup):
    """Subgroup of GL_2(Z/nZ)."""

    def __init__(self, level: int, elements, generators=None, *, presorted: bool = False):
        self.level = int(level)
        super().__init__(gl2_ops(self.level), elements, generators, presorted=presorted)

    def _make(self, elements, generators=None, presorted=False) -> "MatrixGroup":
        return MatrixGroup(self.level, elements, generators, presorted=presorted)

    def matrices(self) -> np.ndarray:
        return np.stack(decode(self.elements, self.level), axis=1)

    def det(self) -> np.ndarray:
        return self.ops.det(self.elements)

    def reduce_codes(self, k: int) -> np.ndarray:
        """Codes of the elements reduced mod ``k`` (aligned with :attr:`elements`)."""
        if self.level % k:
            raise GroupError(f"{k} does not divide level {self.level}")
        return encode(*decode(self.elements, self.level), k)

    def reduce(self, k: int) -> "MatrixGroup":
        gens = None
        if self._generators is not None:
            gens = encode(*decode(self._generators, self.level), k)
        return MatrixGroup(k, self.reduce_codes(k), gens)

    def to_json(self) -> dict:
        return {
            "level": self.level,
            "generators": [list(map(int, m)) for m in np.stack(decode(self.generating_set(), self.level), axis=1)],
        }

    def element_dump(self) -> list[list[int]]:
        return [list(map(int, m)) for m in self.matrices()]


class AbstractFiniteGroup(FiniteGroup):
    """Group given by a multiplication table on ids ``0..k-1``."""

    def __init__(self, table, identity: int = 0, elements=None, *, check: bool = True, _ops=None):
        table = np.asarray(table, dtype=np.int64)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise GroupError("multiplication table must be square")
        self.table = table
        ops = _ops if _ops is not None else TableOps(table, identity)
        if elements is None:
            elements = np.arange(table.shape[0], dtype=np.int64)
        super().__init__(ops, elements, presorted=False)
        if check and _ops is None:
            k = table.shape[0]
            ident = np.arange(k)
            if not (np.array_equal(table[identity], ident) and np.array_equal(table[:, identity], ident)):
                raise GroupError("identity row/column mismatch")
            rng = np.random.default_rng(12345)
            x, y, z = rng.integers(0, k, size=(3, min(2000, k**3)))
            if not np.array_equal(table[table[x, y], z], table[x, table[y, z]]):
                raise GroupError("multiplication table is not associative")

    def _make(self, elements, generators=None, presorted=False) -> "AbstractFiniteGroup":
        g = AbstractFiniteGroup(self.table, self.ops.identity, elements, check=False, _ops=self.ops)
        g._generators = None if generators is None else np.unique(np.asarray(generators, dtype=np.int64))
        return g


class ProductSubgroup(FiniteGroup):
    """Subgroup of a direct product ``G_1 x ... x G_k`` stored as packed tuples."""

    def __init__(self, factors: Sequence[FiniteGroup], elements, generators=None, *, presorted=False, _ops=None):
        self.factors = tuple(factors)
        super().__init__(_ops or ProductOps(self.factors), elements, generators, presorted=presorted)

    def _make(self, elements, generators=None, presorted=False) -> "ProductSubgroup":
        return ProductSubgroup(self.factors, elements, generators, presorted=presorted, _ops=self.ops)

    @classmethod
    def from_tuples(cls, factors: Sequence[FiniteGroup], tuples) -> "ProductSubgroup":
        ops = ProductOps(factors)
        return cls(factors, ops.from_tuples(np.asarray(tuples, dtype=np.int64).reshape(-1, len(factors))), _ops=ops)

    @classmethod
    def full(cls, factors: Sequence[FiniteGroup], cap: int = DEFAULT_CAP) -> "ProductSubgroup":
        ops = ProductOps(factors)
        total = int(np.prod([f.order for f in factors], dtype=object))
        if total > cap:
            raise CapExceededError(f"product of order {total} exceeds cap")
        gens = []
        for i, f in enumerate(factors):
            for x in f.generating_set():
                pos = [g.index(g.identity)[()] for g in factors]
                pos[i] = f.index(x)[()]
                gens.append(ops.pack(pos))
        return cls(factors, np.arange(total, dtype=np.int64), gens, presorted=True, _ops=ops)

    def tuples(self) -> np.ndarray:
        return self.ops.to_tuples(self.elements)

    def is_subdirect(self) -> bool:
        t = self.tuples()
        return all(np.unique(t[:, i]).size == f.order for i, f in enumerate(self.factors))

    def projection_codes(self, s: Sequence[int]) -> np.ndarray:
        return self.tuples()[:, list(s)]


# --------------------------------------------------------------------------
# public constructors


def _as_codes(generators, level: int) -> np.ndarray:
    out = []
    for g in generators:
        if isinstance(g, ResidueMatrix):
            if g.level != level:
                raise GroupError("generator level mismatch")
            m = g
        elif isinstance(g, (int, np.integer)):
            m = ResidueMatrix.from_code(int(g), level)
        else:
            m = ResidueMatrix(level, *g)
        if not m.is_invertible():
            raise GroupError(f"generator {m.entries()} is not invertible mod {level}")
        out.append(m.code)
    return np.array(out, dtype=np.int64)


def group_close(generators: Iterable, level: int, cap: int = DEFAULT_CAP) -> MatrixGroup:
    """Smallest subgroup of GL_2(Z/level) containing ``generators``."""
    codes = _as_codes(list(generators), level)
    return MatrixGroup(level, _close(gl2_ops(level), codes, cap), codes, presorted=True)


def _prime_power(n: int):
    ps = _prime_factors(n)
    if len(ps) != 1:
        return None
    e, m = 0, n
    while m > 1:
        m //= ps[0]
        e += 1
    return ps[0], e


@lru_cache(maxsize=32)
def _full_gl2_cached(n: int, cap: int) -> MatrixGroup:
    if n == 1:
        return MatrixGroup(1, [0], [])
    pe = _prime_power(n)
    if pe is not None:
        p, e = pe
        a, b, c, d = np.meshgrid(*(np.arange(p),) * 4, indexing="ij")
        codes = encode(a.ravel(), b.ravel(), c.ravel(), d.ravel(), p)
        base = codes[_unit_mask(p)[gl2_ops(p).det(codes)]]
        g = primitive_root(p) if p > 2 else 1
        gens = _as_codes([(g, 0, 0, 1), (1, 1, 0, 1), (1, 0, 1, 1)], p)
        gp = MatrixGroup(p, base, gens, presorted=True)
        return gp if e == 1 else preimage(gp, n, cap)
    parts = [full_gl2(q**k, cap) for q, k in _factorize(n)]
    mods = [q**k for q, k in _factorize(n)]
    coeffs = []
    for m in mods:
        rest = n // m
        coeffs.append(rest * pow(rest, -1, m))
    acc = np.zeros((1, 4), dtype=np.int64)
    for part, co in zip(parts, coeffs):
        mats = part.matrices() * co
        acc = (acc[:, None, :] + mats[None, :, :]).reshape(-1, 4) % n
    return MatrixGroup(n, encode(acc[:, 0], acc[:, 1], acc[:, 2], acc[:, 3], n))


def _factorize(n: int) -> list[tuple[int, int]]:
    out = []
    for p in _prime_factors(n):
        e = 0
        while n % p == 0:
            n //= p
            e += 1
        out.append((p, e))
    return out


def primitive_root(p: int) -> int:
    if p == 2:
        return 1
    qs = _prime_factors(p - 1)
    for g in range(2, p):
        if all(pow(g, (p - 1) // q, p) != 1 for q in qs):
            return g
    raise GroupError(f"no primitive root mod {p}")


def full_gl2(level: int, cap: int = DEFAULT_CAP) -> MatrixGroup:
    """GL_2(Z/level) (cached)."""
    if gl2_order(level) > cap:
        raise CapExceededError(f"|GL2(Z/{level})| = {gl2_order(level)} exceeds cap {cap}")
    return _full_gl2_cached(int(level), int(cap))


def preimage(group: MatrixGroup, level: int, cap: int = DEFAULT_CAP) -> MatrixGroup:
    """Full preimage of ``group`` under reduction GL_2(Z/level) -> GL_2(Z/group.level)."""
    k = group.level
    if level % k:
        raise GroupError(f"{k} does not divide {level}")
    if level == k:
        return group
    if not set(_prime_factors(level)) <= set(_prime_factors(k)):
        raise GroupError("preimage only supported when no new primes appear")
    m = level // k
    if group.order * m**4 > cap:
        raise CapExceededError(f"preimage of order {group.order * m**4} exceeds cap {cap}")
    base = np.stack(decode(group.elements, k), axis=1)
    t = np.arange(m, dtype=np.int64) * k
    off = np.stack([x.ravel() for x in np.meshgrid(t, t, t, t, indexing="ij")], axis=1)
    lifted = (base[:, None, :] + off[None, :, :]).reshape(-1, 4)
    codes = np.sort(encode(lifted[:, 0], lifted[:, 1], lifted[:, 2], lifted[:, 3], level))
    gens_arr = None
    pe = _prime_power(level)
    if pe is not None:
        gens = [encode(*decode(group.generating_set(), k), level)]
        step = k
        while step < level:
            gens.append(_as_codes([(1 + step, 0, 0, 1), (1, step, 0, 1), (1, 0, step, 1), (1, 0, 0, 1 + step)], level))
            step *= pe[0]
        gens_arr = np.concatenate(gens)
    return MatrixGroup(level, codes, gens_arr, presorted=True)


# --------------------------------------------------------------------------
# structure


def is_normal(h: FiniteGroup, g: FiniteGroup) -> bool:
    """True iff ``h`` is normal in ``g`` (conjugation by a generating set of ``g``)."""
    if not h.is_subgroup_of(g):
        raise GroupError("h is not contained in g")
    x = g.generating_set()
    if x.size == 0 or h.order in (1, g.order):
        return True
    hx = h.generating_set() if h._generators is not None or h.order > 4096 else h.elements
    conj = g.ops.mul(g.ops.mul(x[:, None], hx[None, :]), g.ops.inv(x)[:, None])
    return bool(h.contains(conj).all())


def normal_closure(s, g: FiniteGroup, cap: int = DEFAULT_CAP) -> FiniteGroup:
    """Smallest normal subgroup of ``g`` containing the codes ``s``."""
    s = np.unique(np.asarray(s, dtype=np.int64))
    x = g.generating_set()
    h = g.subgroup(s, cap)
    while True:
        hg = h.generating_set()
        if hg.size == 0 or x.size == 0:
            return h
        conj = g.ops.mul(g.ops.mul(x[:, None], hg[None, :]), g.ops.inv(x)[:, None]).ravel()
        new = conj[~h.contains(conj)]
        if new.size == 0:
            return h
        h = g.subgroup(np.concatenate([hg, np.unique(new)]), cap)


def commutator(ops, x, y):
    return ops.mul(ops.mul(ops.inv(x), ops.inv(y)), ops.mul(x, y))


def commutator_subgroup(g: FiniteGroup) -> FiniteGroup:
    """Derived subgroup: normal closure of commutators of a generating set."""
    x = g.generating_set()
    if x.size == 0:
        return g._make([g.identity], [])
    comm = np.unique(commutator(g.ops, x[:, None], x[None, :]).ravel())
    return normal_closure(comm, g)


def quotient_map(g: FiniteGroup, n: FiniteGroup, cap: int = QUOTIENT_CAP):
    """Return ``(Q, labels)`` where ``labels[i]`` is the coset id of ``g.elements[i]``."""
    if not is_normal(n, g):
        raise GroupError("subgroup is not normal")
    k = g.order // n.order
    if k > cap:
        raise CapExceededError(f"quotient of order {k} exceeds cap {cap}")
    labels = np.full(g.order, -1, dtype=np.int64)
    reps = []
    ptr = 0
    while len(reps) < k:
        while labels[ptr] >= 0:
            ptr += 1
        x = g.elements[ptr]
        labels[g.index(g.ops.mul(x, n.elements))] = len(reps)
        reps.append(x)
    reps = np.array(reps, dtype=np.int64)
    table = labels[g.index(g.ops.mul(reps[:, None], reps[None, :]))]
    return AbstractFiniteGroup(table, identity=int(labels[g.index(g.identity)[()]])), labels


def quotient(g: FiniteGroup, n: FiniteGroup) -> AbstractFiniteGroup:
    return quotient_map(g, n)[0]


def is_abelian_table(q: AbstractFiniteGroup) -> bool:
    t = q.table
    return bool(np.array_equal(t, t.T))


# --------------------------------------------------------------------------
# subdirect products and Goursat


def project(g: ProductSubgroup, s: Sequence[int]) -> ProductSubgroup:
    """Image of ``g`` under the projection onto the factors indexed by ``s`` (0-based)."""
    s = list(s)
    if not s:
        raise GroupError("projection onto an empty index set")
    if len(set(s)) != len(s) or min(s) < 0 or max(s) >= len(g.factors):
        raise GroupError("bad index set")
    if s == list(range(len(g.factors))):
        return g
    factors = [g.factors[i] for i in s]
    return ProductSubgroup.from_tuples(factors, np.unique(g.projection_codes(s), axis=0))


def regroup(g: ProductSubgroup, blocks: Sequence[Sequence[int]]) -> ProductSubgroup:
    """View ``g`` inside ``G_{B_1} x G_{B_2} x ...`` for a partition into blocks."""
    blocks = [list(b) for b in blocks]
    flat = sorted(i for b in blocks for i in b)
    if flat != list(range(len(g.factors))):
        raise GroupError("blocks must partition the factor indices")
    new_factors = []
    cols = []
    t = g.tuples()
    for b in blocks:
        if len(b) == 1:
            f = g.factors[b[0]]
            new_factors.append(f)
            cols.append(t[:, b[0]])
        else:
            sub = project(g, b)
            new_factors.append(sub)
            cols.append(sub.ops.from_tuples(t[:, b]))
    return ProductSubgroup.from_tuples(new_factors, np.stack(cols, axis=1))


@dataclass
class GoursatData:
    n1: FiniteGroup
    n2: FiniteGroup
    quotient: AbstractFiniteGroup
    psi1: np.ndarray  # coset id of each element of factor 1 (aligned with its elements)
    psi2: np.ndarray
    factors: tuple = field(default=())

    def fibered_product(self) -> ProductSubgroup:
        f1, f2 = self.factors
        tuples = []
        for q in range(self.quotient.order):
            a = f1.elements[self.psi1 == q]
            b = f2.elements[self.psi2 == q]
            tuples.append(np.stack(np.broadcast_arrays(a[:, None], b[None, :]), axis=-1).reshape(-1, 2))
        return ProductSubgroup.from_tuples(self.factors, np.concatenate(tuples))


def _require_subdirect(g: ProductSubgroup):
    if not g.is_subdirect():
        raise GroupError("subgroup is not subdirect in its factors")


def goursat_data(g: ProductSubgroup) -> GoursatData:
    """Goursat decomposition of a subdirect product of two groups."""
    if len(g.factors) != 2:
        raise GroupError("goursat_data needs exactly two factors (use regroup first)")
    _require_subdirect(g)
    f1, f2 = g.factors
    t = g.tuples()
    n1 = f1._make(t[t[:, 1] == f2.identity, 0])
    n2 = f2._make(t[t[:, 0] == f1.identity, 1])
    q, labels2 = quotient_map(f2, n2)
    first, idx = np.unique(t[:, 0], return_index=True)
    psi1 = np.empty(f1.order, dtype=np.int64)
    psi1[f1.index(first)] = labels2[f2.index(t[idx, 1])]
    data = GoursatData(n1, n2, q, psi1, labels2, (f1, f2))
    if data.fibered_product() != g:
        raise GroupError("Goursat reconstruction failed")
    return data


def kernel_component(g: ProductSubgroup, j: int) -> FiniteGroup:
    """N_j = {x in G_j : (1, .., x, .., 1) in g}."""
    t = g.tuples()
    others = [i for i in range(len(g.factors)) if i != j]
    ident = np.array([g.factors[i].identity for i in others], dtype=np.int64)
    mask = (t[:, others] == ident).all(axis=1) if others else np.ones(len(t), dtype=bool)
    return g.factors[j]._make(t[mask, j])


def has_abelian_entanglements(g: ProductSubgroup) -> bool:
    """True iff every quotient G_j / N_j is abelian."""
    _require_subdirect(g)
    for j, f in enumerate(g.factors):
        nj = kernel_component(g, j)
        if not is_abelian_table(quotient(f, nj)):
            return False
    return True
