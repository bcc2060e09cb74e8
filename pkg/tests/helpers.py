"""Shared builders for the test-suite: small groups, exhaustive subdirect
products and random abelian entanglement specs."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

from elldensity.characters import abelianization
from elldensity.entanglement import (
    Component,
    ComponentMap,
    EntanglementRelation,
    EntanglementSpec,
    LocalSet,
    SpecError,
    build_phi,
)
from elldensity.groups import (
    MatrixGroup,
    ProductSubgroup,
    full_gl2,
    group_close,
    normal_closure,
    quotient_map,
)


# --------------------------------------------------------------------------
# small matrix groups (orders <= 48)


@lru_cache(maxsize=None)
def small_groups() -> dict[str, MatrixGroup]:
    return {
        "C2": group_close([(2, 0, 0, 1)], 3),
        "C3": group_close([(1, 1, 0, 1)], 3),
        "C4": group_close([(2, 0, 0, 1)], 5),
        "S3": full_gl2(2),
        "Q8": group_close([(0, 2, 1, 0), (1, 1, 1, 2)], 3),
        "B3": group_close([(1, 1, 0, 1), (2, 0, 0, 1), (1, 0, 0, 2)], 3),
        "SL23": group_close([(1, 1, 0, 1), (1, 0, 1, 1)], 3),
        "GL23": full_gl2(3),
    }


def normal_subgroups(g) -> list:
    """All normal subgroups, as joins of normal closures of single elements."""
    found = {}
    for x in g.elements.tolist():
        n = normal_closure([x], g)
        found[n.elements.tobytes()] = n
    changed = True
    while changed:
        changed = False
        items = list(found.values())
        for a, b in itertools.combinations(items, 2):
            j = normal_closure(np.concatenate([a.elements, b.elements]), g)
            if j.elements.tobytes() not in found:
                found[j.elements.tobytes()] = j
                changed = True
    return sorted(found.values(), key=lambda n: (n.order, n.elements.tobytes()))


def _table_generators(t: np.ndarray) -> list[int]:
    k = t.shape[0]
    gens: list[int] = []
    span = {0}
    for x in range(k):
        if x in span:
            continue
        gens.append(x)
        span = _closure(t, gens)
        if len(span) == k:
            break
    return gens


def _closure(t: np.ndarray, gens) -> set[int]:
    seen = {0}
    frontier = [0]
    while frontier:
        nxt = []
        for a in frontier:
            for g in gens:
                b = int(t[a, g])
                if b not in seen:
                    seen.add(b)
                    nxt.append(b)
        frontier = nxt
    return seen


def _orders(t: np.ndarray) -> np.ndarray:
    k = t.shape[0]
    out = np.zeros(k, dtype=np.int64)
    for x in range(k):
        y, n = x, 1
        while y != 0:
            y, n = int(t[y, x]), n + 1
        out[x] = n
    return out


def isomorphisms(t1: np.ndarray, t2: np.ndarray):
    """Yield every isomorphism between two table groups (identity = 0) as an array."""
    k = t1.shape[0]
    if t2.shape[0] != k:
        return
    gens = _table_generators(t1)
    o1, o2 = _orders(t1), _orders(t2)
    choices = [np.flatnonzero(o2 == o1[g]).tolist() for g in gens]
    for imgs in itertools.product(*choices):
        phi = {0: 0}
        frontier = [0]
        ok = True
        while frontier and ok:
            nxt = []
            for a in frontier:
                for g, h in zip(gens, imgs):
                    b, c = int(t1[a, g]), int(t2[phi[a], h])
                    if b in phi:
                        if phi[b] != c:
                            ok = False
                            break
                    else:
                        phi[b] = c
                        nxt.append(b)
                if not ok:
                    break
            frontier = nxt
        if not ok or len(phi) != k or len(set(phi.values())) != k:
            continue
        arr = np.array([phi[i] for i in range(k)])
        if np.array_equal(arr[t1], t2[arr[:, None], arr[None, :]]):
            yield arr


def _relabel_identity_first(q, labels):
    """Permute table ids so the identity is 0."""
    e = q.ops.identity
    perm = np.arange(q.order)
    perm[[0, e]] = perm[[e, 0]]
    inv = np.argsort(perm)
    t = inv[q.table[perm[:, None], perm[None, :]]]
    return t, inv[labels]


def subdirect_products(g1, g2, limit_per_quotient: int | None = None):
    """Every subdirect product of g1 x g2, built from Goursat data.

    Yields ``(ProductSubgroup, quotient_table)``.
    """
    ns1, ns2 = normal_subgroups(g1), normal_subgroups(g2)
    seen = set()
    for n1 in ns1:
        q1, lab1 = quotient_map(g1, n1)
        t1, lab1 = _relabel_identity_first(q1, lab1)
        for n2 in ns2:
            if g2.order // n2.order != q1.order:
                continue
            q2, lab2 = quotient_map(g2, n2)
            t2, lab2 = _relabel_identity_first(q2, lab2)
            for count, iso in enumerate(isomorphisms(t1, t2)):
                if limit_per_quotient is not None and count >= limit_per_quotient:
                    break
                img1 = iso[lab1]
                rows = []
                for q in range(q1.order):
                    a = g1.elements[img1 == q]
                    b = g2.elements[lab2 == q]
                    rows.append(np.stack(np.broadcast_arrays(a[:, None], b[None, :]), axis=-1).reshape(-1, 2))
                g = ProductSubgroup.from_tuples([g1, g2], np.concatenate(rows))
                if g.elements.tobytes() in seen:
                    continue
                seen.add(g.elements.tobytes())
                yield g, t1


# --------------------------------------------------------------------------
# random abelian specs


TARGETS = ((2,), (3,), (4,), (2, 2))


def _component_pool():
    """Candidate components by prime, at levels 2, 3, 4, 5."""
    pool = {2: [], 3: [], 5: []}
    pool[2] += [(1, full_gl2(2)), (1, group_close([(1, 1, 1, 0)], 2)), (1, group_close([(0, 1, 1, 0)], 2))]
    pool[2] += [(2, full_gl2(4)), (2, group_close([(1, 1, 0, 1), (3, 0, 0, 1)], 4)),
                (2, group_close([(0, 3, 1, 0), (1, 1, 1, 2)], 4))]
    pool[3] += [(1, full_gl2(3)), (1, small_groups()["Q8"]), (1, small_groups()["B3"]),
                (1, small_groups()["SL23"]), (1, small_groups()["C3"])]
    pool[5] += [(1, full_gl2(5)), (1, group_close([(2, 0, 0, 1), (1, 1, 0, 1)], 5)),
                (1, group_close([(2, 0, 0, 3)], 5)), (1, group_close([(0, 1, 4, 0), (2, 0, 0, 1)], 5))]
    return pool


@lru_cache(maxsize=None)
def _abelianization_cached(key):
    level, codes = key
    g = MatrixGroup(level, np.frombuffer(codes, dtype=np.int64))
    return abelianization(g)


def _hom_values(g: MatrixGroup, target: tuple[int, ...], rng) -> np.ndarray:
    """A random homomorphism g -> target (through g^ab), as a value table."""
    a, vecs = _abelianization_cached((g.level, g.elements.tobytes()))
    cols = []
    for d in target:
        col = np.zeros(g.order, dtype=np.int64)
        for i, k in enumerate(a.cyclic_orders):
            # a generator of Z/k may go to any element of order dividing k in Z/d
            allowed = [v for v in range(d) if (v * k) % d == 0]
            col = col + vecs[:, i] * int(rng.choice(allowed))
        cols.append(col % d)
    return np.stack(cols, axis=1) if cols else np.zeros((g.order, 0), dtype=np.int64)


def random_spec(rng, max_product: int = 10**6, attempts: int = 500, nontrivial: bool = True) -> EntanglementSpec:
    """A random valid abelian spec on levels among 2, 3, 4, 5 (Phi nontrivial unless told otherwise)."""
    pool = _component_pool()
    for _ in range(attempts):
        primes = [p for p in (2, 3, 5) if rng.random() < 0.8] or [2, 3]
        comps = []
        for p in primes:
            e, g = pool[p][int(rng.integers(len(pool[p])))]
            comps.append(Component(p, e, g))
        if np.prod([c.group.order for c in comps], dtype=object) > max_product:
            continue
        rels = []
        for _ in range(int(rng.integers(1 if nontrivial else 0, 3))):
            target = TARGETS[int(rng.integers(len(TARGETS)))]
            maps = tuple(
                ComponentMap(i, "table", {}, 0, 1, _hom_values(c.group, target, rng))
                for i, c in enumerate(comps)
            )
            rels.append(EntanglementRelation(target, maps))
        spec = EntanglementSpec(comps, rels)
        try:
            phi = build_phi(spec)
        except SpecError:
            continue
        if nontrivial and phi.order == 1:
            continue
        return spec
    raise RuntimeError("could not draw a valid spec")


def random_local_sets(spec: EntanglementSpec, rng) -> list[LocalSet]:
    out = []
    for i, c in enumerate(spec.components):
        mask = rng.random(c.group.order) < rng.uniform(0.2, 0.9)
        if not mask.any():
            mask[int(rng.integers(c.group.order))] = True
        out.append(LocalSet(i, mask))
    return out
