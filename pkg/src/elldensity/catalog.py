"""Curve data, Serre-curve specs and the shipped catalog of worked examples."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from importlib import resources
from math import gcd

import numpy as np

from .arith import factorize, fundamental_discriminant, prime_divisors, squarefree_part, valuation
from .entanglement import (
    Component,
    ComponentMap,
    EntanglementRelation,
    EntanglementSpec,
    SpecError,
    kronecker_det,
    signature_mod2,
)
from .groups import (
    DEFAULT_CAP,
    CapExceededError,
    MatrixGroup,
    ProductSubgroup,
    full_gl2,
    gl2_order,
    group_close,
    quotient_map,
)

SCHEMA_VERSION = 1


class CatalogError(ValueError):
    pass


# --------------------------------------------------------------------------
# curves


@dataclass(frozen=True)
class WeierstrassCurve:
    """y^2 + a1 xy + a3 y = x^3 + a2 x^2 + a4 x + a6 over Q (integral)."""

    a1: int
    a2: int
    a3: int
    a4: int
    a6: int

    def __post_init__(self):
        if self.discriminant == 0:
            raise CatalogError(f"singular curve {self.ainvs}")

    @classmethod
    def from_ainvs(cls, ainvs) -> "WeierstrassCurve":
        ainvs = [int(x) for x in ainvs]
        if len(ainvs) == 2:
            ainvs = [0, 0, 0] + ainvs
        if len(ainvs) != 5:
            raise CatalogError("need [a1, a2, a3, a4, a6] or [a4, a6]")
        return cls(*ainvs)

    @property
    def ainvs(self) -> tuple[int, ...]:
        return (self.a1, self.a2, self.a3, self.a4, self.a6)

    @property
    def b_invariants(self) -> tuple[int, int, int, int]:
        a1, a2, a3, a4, a6 = self.ainvs
        b2 = a1 * a1 + 4 * a2
        b4 = 2 * a4 + a1 * a3
        b6 = a3 * a3 + 4 * a6
        b8 = a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4
        return b2, b4, b6, b8

    @property
    def c4(self) -> int:
        b2, b4, _, _ = self.b_invariants
        return b2 * b2 - 24 * b4

    @property
    def c6(self) -> int:
        b2, b4, b6, _ = self.b_invariants
        return -(b2**3) + 36 * b2 * b4 - 216 * b6

    @property
    def discriminant(self) -> int:
        b2, b4, b6, b8 = self.b_invariants
        return -b2 * b2 * b8 - 8 * b4**3 - 27 * b6 * b6 + 9 * b2 * b4 * b6

    @property
    def j_invariant(self) -> Fraction:
        return Fraction(self.c4**3, self.discriminant)

    @cached_property
    def bad_primes(self) -> tuple[int, ...]:
        return tuple(prime_divisors(self.discriminant))

    @property
    def short_model(self) -> tuple[int, int]:
        """(A, B) with y^2 = x^3 + A x + B isomorphic to the curve away from 2, 3."""
        return -27 * self.c4, -54 * self.c6

    def reduce(self, p: int) -> tuple[int, int]:
        """Short model coefficients mod a good prime p > 3."""
        if p <= 3:
            raise CatalogError("short model needs p > 3")
        if self.discriminant % p == 0:
            raise CatalogError(f"{p} divides the discriminant")
        A, B = self.short_model
        return A % p, B % p

    def to_json(self) -> dict:
        return {"ainvs": list(self.ainvs), "discriminant": self.discriminant}


def discriminant(ainvs) -> int:
    return WeierstrassCurve.from_ainvs(ainvs).discriminant


def quad_field_discriminant(delta: int) -> int:
    """Discriminant of Q(sqrt(delta))."""
    if delta == 0:
        raise CatalogError("delta must be nonzero")
    return fundamental_discriminant(delta)


@dataclass(frozen=True)
class SerreCurveSpec:
    D: int
    delta_sf: int
    ord2D: int
    delta_prime: int | None = None

    @classmethod
    def from_delta(cls, delta: int) -> "SerreCurveSpec":
        sf = squarefree_part(delta)
        D = quad_field_discriminant(delta)
        o = valuation(D, 2)
        return cls(D, sf, o, sf // 2 if o == 3 else None)

    @classmethod
    def from_discriminant(cls, D: int) -> "SerreCurveSpec":
        if D % 4 not in (0, 1) or fundamental_discriminant(D) != D:
            raise CatalogError(f"{D} is not a fundamental discriminant")
        return cls.from_delta(D if D % 4 == 1 else D // 4)

    def to_json(self) -> dict:
        return {"D": self.D, "delta_sf": self.delta_sf, "ord2D": self.ord2D, "delta_prime": self.delta_prime}


def serre_galois_spec(serre: SerreCurveSpec | int, level_cap: int = DEFAULT_CAP) -> EntanglementSpec:
    """Spec of a Serre curve: eps(A mod 2) = chi_D(det A), everything else full."""
    if not isinstance(serre, SerreCurveSpec):
        serre = SerreCurveSpec.from_discriminant(int(serre))
    D = serre.D
    if D == 1:
        raise CatalogError("the discriminant is a square, so the curve cannot be a Serre curve")
    e2 = max(1, serre.ord2D)
    odd = [p for p in prime_divisors(D) if p != 2]
    for lvl in [2**e2] + odd:
        if gl2_order(lvl) > level_cap:
            raise CapExceededError(f"|GL2(Z/{lvl})| exceeds level cap {level_cap}")
    d2 = {0: None, 2: -4, 3: 8 if serre.delta_prime is not None and serre.delta_prime % 4 == 1 else -8}[serre.ord2D]
    g2 = full_gl2(2**e2, level_cap)
    if abs(D) in (4, 8):
        # the whole obstruction lives at 2: keep the index-2 subgroup, no relation
        keep = signature_mod2(g2.elements, g2.level) == kronecker_det(D, g2.det(), 2)
        return EntanglementSpec([Component(2, e2, MatrixGroup(g2.level, g2.elements[keep], presorted=True))])
    comps = [Component(2, e2, g2)] + [Component(p, 1, full_gl2(p, level_cap)) for p in odd]
    maps = [ComponentMap(0, "signature_mod2")]
    if d2 is not None:
        maps.append(ComponentMap(0, "det_legendre", {"disc": d2}))
    for i, p in enumerate(odd, start=1):
        maps.append(ComponentMap(i, "det_legendre", {"disc": p if p % 4 == 1 else -p}))
    return EntanglementSpec(comps, [EntanglementRelation((2,), tuple(maps))])


# --------------------------------------------------------------------------
# the non-abelian level-6 example


@dataclass
class NonAbelianMarker:
    """G(6) is the graph of a surjection theta: GL_2(F_3) -> GL_2(F_2); other primes full.

    Only problems whose working level at 2 and 3 is 1 are supported.
    """

    kernel_generators: tuple = ((0, 2, 1, 0), (1, 2, 2, 2), (2, 0, 0, 2))

    @cached_property
    def theta(self) -> tuple[MatrixGroup, MatrixGroup, np.ndarray]:
        """(GL_2(F_3), GL_2(F_2), image code in GL_2(F_2) of each element of GL_2(F_3))."""
        g3, g2 = full_gl2(3), full_gl2(2)
        n = group_close(self.kernel_generators, 3)
        if n.order != 8:
            raise CatalogError("kernel of theta must have order 8")
        q, labels = quotient_map(g3, n)
        t2 = g2.index(g2.ops.mul(g2.elements[:, None], g2.elements[None, :]))
        for perm in itertools.permutations(range(6)):
            p = np.array(perm)
            if np.array_equal(p[q.table], t2[p[:, None], p[None, :]]):
                return g3, g2, g2.elements[p[labels]]
        raise CatalogError("no isomorphism GL_2(F_3)/N -> GL_2(F_2)")

    def product_subgroup(self) -> ProductSubgroup:
        g3, g2, img = self.theta
        return ProductSubgroup.from_tuples([g2, g3], np.stack([img, g3.elements], axis=1))

    def joint_fraction(self, problem) -> Fraction:
        """|S(2) x S(3) meets G(6)| / |G(6)| by walking the graph."""
        from .density import local_mask

        if problem.working_exponent(2) != 1 or problem.working_exponent(3) != 1:
            raise SpecError("non-abelian example: working level at 2 and 3 must be 1")
        g3, g2, img = self.theta
        s2 = local_mask(problem, 2, g2)
        s3 = local_mask(problem, 3, g3)
        hit = s2[g2.index(img)] & s3
        return Fraction(int(hit.sum()), g3.order)

    def density(self, problem, L=None):
        from .density import _assemble, full_gl2_density

        joint = self.joint_fraction(problem)
        d2 = full_gl2_density(problem, 2)
        d3 = full_gl2_density(problem, 3)
        exc = {2: d2, 3: d3}
        for p in problem.problem_primes():
            exc.setdefault(p, full_gl2_density(problem, p))
        corr = joint / (d2 * d3) if d2 and d3 else Fraction(0)
        zero = next((p for p, d in sorted(exc.items()) if d == 0), None)
        vanishing = "local" if zero else ("none" if joint else "entanglement")
        return _assemble(problem, exc, corr if vanishing == "none" else Fraction(0), L, vanishing, zero,
                         notes=["joint (2,3) factor from the graph of theta"])

    def to_json(self) -> dict:
        return {"kind": "graph-of-theta", "kernel_generators": [list(g) for g in self.kernel_generators]}


def xh_family(t) -> dict:
    """j = 2^10 3^3 t^3 (1 - 4 t^3) and a representative integral model."""
    t = Fraction(t)
    j = 2**10 * 3**3 * t**3 * (1 - 4 * t**3)
    if j == 0 or j == 1728:
        raise CatalogError(f"degenerate parameter t = {t} (j = {j})")
    if j == -(2**10) * 3**4:
        curve = WeierstrassCurve(0, 0, 0, -63504, 6223392)
        twist_known = True
    else:
        n, d = j.numerator, j.denominator
        k = n - 1728 * d
        curve = WeierstrassCurve(0, 0, 0, -3 * n * k * d * d, -2 * n * k * k * d**3)
        twist_known = False
    return {"t": t, "j": j, "curve": curve, "twist_determined": twist_known, "spec": NonAbelianMarker()}


# --------------------------------------------------------------------------
# catalog


@dataclass
class CatalogEntry:
    id: str
    curve: WeierstrassCurve
    m_E: int
    spec_data: dict
    notes: list = field(default_factory=list)
    serre: SerreCurveSpec | None = None

    @cached_property
    def spec(self):
        kind = self.spec_data.get("kind", "explicit")
        if kind == "serre":
            return serre_galois_spec(self.serre)
        if kind == "graph-of-theta":
            return NonAbelianMarker(tuple(tuple(g) for g in self.spec_data["kernel_generators"]))
        return EntanglementSpec.from_json(self.spec_data)

    @property
    def is_serre(self) -> bool:
        return self.serre is not None

    @classmethod
    def from_json(cls, data: dict) -> "CatalogEntry":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise CatalogError(f"unsupported schema_version {data.get('schema_version')!r}")
        try:
            curve = WeierstrassCurve.from_ainvs(data["curve"]["ainvs"])
            spec = data["spec"]
            m_E = int(data["m_E"])
        except KeyError as exc:
            raise CatalogError(f"catalog entry missing field {exc}") from None
        serre = SerreCurveSpec.from_delta(curve.discriminant) if spec.get("kind") == "serre" else None
        entry = cls(data["id"], curve, m_E, spec, list(data.get("notes", [])), serre)
        if spec.get("kind", "explicit") == "explicit":
            for c in spec.get("components", []):
                if m_E % int(c["prime"]):
                    raise CatalogError(f"component prime {c['prime']} does not divide m_E = {m_E}")
        return entry

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "curve": self.curve.to_json(),
            "m_E": self.m_E,
            "spec": self.spec_data,
            "notes": self.notes,
        }


CATALOG_IDS = ("lang-trotter-11", "curve-4x4", "curve-17", "family6-example", "serre-37a")


@lru_cache(maxsize=None)
def _load(entry_id: str) -> CatalogEntry:
    if entry_id not in CATALOG_IDS:
        raise CatalogError(f"unknown catalog id {entry_id!r}; known: {', '.join(CATALOG_IDS)}")
    text = resources.files("elldensity.data.catalog").joinpath(f"{entry_id}.json").read_text()
    return CatalogEntry.from_json(json.loads(text))


def catalog_entry(entry_id: str) -> CatalogEntry:
    return _load(entry_id)


def catalog_entries() -> list[CatalogEntry]:
    return [_load(i) for i in CATALOG_IDS]


def load_entry_file(path: str) -> CatalogEntry:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CatalogError(f"malformed JSON in {path}: {exc}") from None
    return CatalogEntry.from_json(data)
