"""Density problems: local sets, correction factors, Euler products, closed forms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import gcd, prod

import mpmath
import numpy as np

from .arith import (
    euler_phi,
    factorize,
    fundamental_discriminant,
    is_fundamental_discriminant,
    kronecker,
    largest_power_exponent,
    mobius_phi_sieve,
    prime_divisors,
    primes_up_to,
    valuation,
)
from .entanglement import (
    EntanglementSpec,
    LocalSet,
    SpecError,
    build_phi,
    member_fraction,
)
from .characters import characters, histogram_average
from .groups import DEFAULT_CAP, MatrixGroup, decode, full_gl2, gl2_order

KINDS = ("cyclic", "cyclic-ap", "koblitz")
DPS = 50
DEFAULT_L = {"cyclic": 10**5, "cyclic-ap": 10**5, "koblitz": 10**6}


# --------------------------------------------------------------------------
# problems


@dataclass(frozen=True)
class DensityProblem:
    """Cyclic reduction, optionally restricted to p = a (mod f), or Koblitz(t)."""

    kind: str = "cyclic"
    a: int = 0
    f: int = 1
    t: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.f < 1 or self.t < 1:
            raise ValueError("f and t must be positive")
        if self.kind == "cyclic-ap":
            object.__setattr__(self, "a", self.a % self.f)
        elif self.a or self.f != 1:
            raise ValueError("a, f only apply to the cyclic-ap problem")
        if self.kind != "koblitz" and self.t != 1:
            raise ValueError("t only applies to the koblitz problem")

    @classmethod
    def cyclic(cls) -> "DensityProblem":
        return cls("cyclic")

    @classmethod
    def ap(cls, a: int, f: int) -> "DensityProblem":
        return cls("cyclic-ap", a=a, f=f)

    @classmethod
    def koblitz(cls, t: int = 1) -> "DensityProblem":
        return cls("koblitz", t=t)

    @property
    def normalized_kind(self) -> str:
        return "koblitz" if self.kind == "koblitz" else "cyclic"

    @property
    def coprime(self) -> bool:
        return gcd(self.a, self.f) == 1 if self.kind == "cyclic-ap" else True

    def problem_primes(self) -> list[int]:
        if self.kind == "cyclic-ap" and self.f > 1:
            return prime_divisors(self.f)
        if self.kind == "koblitz" and self.t > 1:
            return prime_divisors(self.t)
        return []

    def working_exponent(self, ell: int) -> int:
        if self.kind == "cyclic-ap" and self.f % ell == 0:
            return valuation(self.f, ell)
        if self.kind == "koblitz" and self.t % ell == 0:
            return valuation(self.t, ell) + 1
        return 1

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == "cyclic-ap":
            out.update(a=self.a, f=self.f)
        if self.kind == "koblitz":
            out["t"] = self.t
        return out

    def label(self) -> str:
        if self.kind == "cyclic-ap":
            return f"cyclic-ap(a={self.a}, f={self.f})"
        if self.kind == "koblitz":
            return f"koblitz(t={self.t})"
        return "cyclic"


# --------------------------------------------------------------------------
# local sets


def _entries(group: MatrixGroup):
    cache = group.__dict__.setdefault("_entry_cache", {})
    if "abcd" not in cache:
        cache["abcd"] = decode(group.elements, group.level)
    return cache["abcd"]


def _trivial_mod(group: MatrixGroup, ell: int) -> np.ndarray:
    a, b, c, d = _entries(group)
    return ((a - 1) % ell == 0) & (b % ell == 0) & (c % ell == 0) & ((d - 1) % ell == 0)


def local_mask(problem: DensityProblem, ell: int, group: MatrixGroup, *, allow_lift: bool = False) -> np.ndarray:
    """Boolean mask of the local set S(l) inside ``group`` (at the problem's working level).

    With ``allow_lift`` the group may sit at a higher power of l; the mask is then
    the preimage of S(l).
    """
    alpha = problem.working_exponent(ell)
    n = group.level
    ok = n == ell**alpha or (allow_lift and n % ell**alpha == 0 and set(prime_divisors(n)) == {ell})
    if not ok:
        raise SpecError(f"group level {group.level} does not match working level {ell}^{alpha}")
    a, b, c, d = _entries(group)
    if problem.kind == "koblitz":
        v = ((1 - a) * (1 - d) - b * c) % n
        if problem.t % ell == 0:
            v = v % ell**alpha
            e = alpha - 1
            return (v % ell**e == 0) & (v % ell ** (e + 1) != 0)
        return v % ell != 0
    nontrivial = ~_trivial_mod(group, ell)
    if problem.kind == "cyclic-ap" and problem.f % ell == 0:
        det = (a * d - b * c) % n
        q = ell**alpha
        return nontrivial & (det % q == problem.a % q)
    return nontrivial


def local_set(problem: DensityProblem, ell: int, group: MatrixGroup, component: int = 0) -> LocalSet:
    return LocalSet(component, local_mask(problem, ell, group))


def generic_factor(kind: str, ell: int) -> Fraction:
    """Euler factor at a prime with full GL_2 image and no problem condition."""
    if kind == "koblitz":
        return 1 - Fraction(ell * ell - ell - 1, (ell - 1) ** 3 * (ell + 1))
    return 1 - Fraction(1, (ell * ell - 1) * (ell * ell - ell))


def full_gl2_density(problem: DensityProblem, ell: int, cap: int = DEFAULT_CAP) -> Fraction:
    """delta_l when G(l^a) is all of GL_2 (closed forms, enumeration for Koblitz with l | t)."""
    if problem.kind == "koblitz":
        if problem.t % ell:
            return 1 - Fraction(ell * ell + (ell - 2) * (ell * ell + ell), gl2_order(ell))
        g = full_gl2(ell ** problem.working_exponent(ell), cap)
        return Fraction(int(local_mask(problem, ell, g).sum()), g.order)
    if problem.kind == "cyclic-ap" and problem.f % ell == 0:
        e = valuation(problem.f, ell)
        if problem.a % ell == 0:
            return Fraction(0)
        base = Fraction(1, euler_phi(ell**e))
        if problem.a % ell == 1:
            return base * (1 - Fraction(1, ell * (ell - 1) * (ell + 1)))
        return base
    return generic_factor("cyclic", ell)


def local_density(problem: DensityProblem, ell: int, group: MatrixGroup | None = None) -> Fraction:
    """|S(l)| / |G(l^a)|; ``group=None`` means the full GL_2 at the working level."""
    if group is None:
        return full_gl2_density(problem, ell)
    m = local_mask(problem, ell, group)
    return Fraction(int(m.sum()), m.size)


def normalized_factor(problem: DensityProblem, ell: int, delta: Fraction) -> Fraction:
    return delta / (1 - Fraction(1, ell)) if problem.kind == "koblitz" else delta


# --------------------------------------------------------------------------
# correction factors


def spec_at_working_levels(problem: DensityProblem, spec: EntanglementSpec, cap: int = DEFAULT_CAP) -> EntanglementSpec:
    levels = {p: problem.working_exponent(p) for p in spec.primes}
    cache = spec.__dict__.setdefault("_at_cache", {})
    key = tuple(sorted(levels.items()))
    if key not in cache:
        cache[key] = spec.at_levels(levels, cap) if any(levels[c.prime] != c.exponent for c in spec.components) else spec
    return cache[key]


@dataclass(frozen=True)
class CorrectionResult:
    correction: Fraction
    local_densities: dict
    vanishing: str  # "none" | "local" | "entanglement"
    vanishing_prime: int | None = None
    phi_orders: tuple = ()


def _local_sets(problem, spec):
    return [local_set(problem, c.prime, c.group, i) for i, c in enumerate(spec.components)]


def correction_factor(problem: DensityProblem, spec) -> CorrectionResult:
    """Exact correction factor 1 + sum_{chi != 1} prod_l E_{chi,l} at the problem's working levels."""
    if not isinstance(spec, EntanglementSpec):
        raise SpecError("spec has non-abelian entanglements; use the dedicated catalog density rule")
    s = spec_at_working_levels(problem, spec)
    mf = member_fraction(s, _local_sets(problem, s))
    dens = {c.prime: d for c, d in zip(s.components, mf.local_densities)}
    orders = build_phi(s).group.cyclic_orders
    if mf.obstruction is not None:
        # every character sum over an empty S(l) is 0, so only the trivial character survives
        return CorrectionResult(Fraction(1), dens, "local", mf.obstruction, orders)
    if mf.correction == 0:
        return CorrectionResult(Fraction(0), dens, "entanglement", None, orders)
    return CorrectionResult(mf.correction, dens, "none", None, orders)


def character_averages(problem: DensityProblem, spec: EntanglementSpec, lift: bool = False) -> dict[int, list]:
    """E_{chi,l} for every character chi of Phi (in character order), keyed by prime.

    ``lift=True`` keeps components above the working level instead of projecting,
    so Phi stays the full quotient of ``spec``.
    """
    if lift:
        levels = {c.prime: max(c.exponent, problem.working_exponent(c.prime)) for c in spec.components}
        s = spec if all(levels[c.prime] == c.exponent for c in spec.components) else spec.at_levels(levels)
    else:
        s = spec_at_working_levels(problem, spec)
    phi = build_phi(s)
    out = {}
    for i, comp in enumerate(s.components):
        mask = local_mask(problem, comp.prime, comp.group, allow_lift=lift)
        hist = np.bincount(phi.psi[i][mask], minlength=phi.order)
        out[comp.prime] = [histogram_average(chi, hist) if hist.sum() else None for chi in characters(phi.group)]
    return out


@dataclass(frozen=True)
class Vanishing:
    kind: str  # nonzero | zero_local | zero_entanglement
    prime: int | None = None

    def __str__(self):
        return f"{self.kind}({self.prime})" if self.prime else self.kind


def vanishing_analysis(problem: DensityProblem, spec) -> Vanishing:
    if problem.kind == "cyclic-ap" and not problem.coprime:
        return Vanishing("zero_local", prime_divisors(gcd(problem.a, problem.f))[0])
    primes = set(problem.problem_primes())
    if isinstance(spec, EntanglementSpec):
        cr = correction_factor(problem, spec)
        if cr.vanishing == "local":
            return Vanishing("zero_local", cr.vanishing_prime)
        for p in sorted(primes - set(spec.primes)):
            if full_gl2_density(problem, p) == 0:
                return Vanishing("zero_local", p)
        if cr.vanishing == "entanglement":
            return Vanishing("zero_entanglement")
        return Vanishing("nonzero")
    res = compute_density(problem, spec, L=max(100, max(primes, default=2)))
    if res.vanishing == "local":
        return Vanishing("zero_local", res.vanishing_prime)
    if res.vanishing == "entanglement":
        return Vanishing("zero_entanglement")
    return Vanishing("nonzero")


# --------------------------------------------------------------------------
# Euler products


@lru_cache(maxsize=16)
def _generic_product(kind: str, L: int) -> mpmath.mpf:
    with mpmath.workdps(DPS + 10):
        acc = mpmath.mpf(1)
        for ell in primes_up_to(L).tolist():
            if kind == "koblitz":
                acc *= 1 - mpmath.mpf(ell * ell - ell - 1) / ((ell - 1) ** 3 * (ell + 1))
            else:
                acc *= 1 - mpmath.mpf(1) / ((ell * ell - 1) * (ell * ell - ell))
        return +acc


def tail_bound(kind: str, L: int) -> mpmath.mpf:
    """Majorant for sum_{l > L} of the generic defects (crude integer sums)."""
    with mpmath.workdps(DPS):
        if kind == "koblitz":
            return mpmath.mpf(2) / L
        return mpmath.mpf(2) / (3 * mpmath.mpf(L) ** 3)


@dataclass(frozen=True)
class EulerProduct:
    value: mpmath.mpf
    low: mpmath.mpf
    high: mpmath.mpf
    tail: mpmath.mpf
    L: int


def euler_product(problem: DensityProblem, exceptional: dict[int, Fraction], L: int) -> EulerProduct:
    """prod_{l <= L} of generic factors, with exact ``exceptional`` factors swapped in.

    ``exceptional`` maps primes to delta_l (normalised by 1/(1-1/l) here for Koblitz).
    """
    kind = problem.normalized_kind
    if exceptional and max(exceptional) > L:
        raise SpecError(f"truncation L={L} is below the exceptional prime {max(exceptional)}")
    with mpmath.workdps(DPS):
        p = _generic_product(kind, int(L))
        for ell, delta in sorted(exceptional.items()):
            g = generic_factor(kind, ell)
            f = normalized_factor(problem, ell, delta)
            p = p * mpmath.mpf(f.numerator) / f.denominator / (mpmath.mpf(g.numerator) / g.denominator)
        tail = tail_bound(kind, L)
        low = p * (1 - tail) if p >= 0 else p
        return EulerProduct(+p, +low, +p, tail, int(L))


def proven_digits(low, high, max_places: int = 30) -> str:
    """Decimal truncation shared by every number in [low, high]."""
    with mpmath.workdps(DPS):
        if low == high == 0:
            return "0"
        if low < 0 or high < 0:
            return mpmath.nstr(high, 6)
        best = None
        for k in range(max_places + 1):
            a = int(mpmath.floor(low * 10**k))
            b = int(mpmath.floor(high * 10**k))
            if a != b:
                break
            best = (k, a)
        if best is None:
            return "?"
        k, q = best
        s = str(q).rjust(k + 1, "0")
        return s if k == 0 else s[:-k] + "." + s[-k:]


@dataclass
class DensityResult:
    problem: DensityProblem
    naive: EulerProduct
    correction: Fraction
    constant: mpmath.mpf
    constant_low: mpmath.mpf
    constant_high: mpmath.mpf
    truncation_L: int
    vanishing: str = "none"
    vanishing_prime: int | None = None
    local_factors: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def digits(self) -> str:
        return proven_digits(self.constant_low, self.constant_high)

    def to_json(self) -> dict:
        return {
            "problem": self.problem.to_json(),
            "constant": {
                "digits": self.digits,
                "value": mpmath.nstr(self.constant, 20),
                "tail_low": mpmath.nstr(self.constant_low, 20),
                "tail_high": mpmath.nstr(self.constant_high, 20),
            },
            "correction": str(self.correction),
            "naive": {
                "value": mpmath.nstr(self.naive.value, 20),
                "tail_low": mpmath.nstr(self.naive.low, 20),
                "tail_high": mpmath.nstr(self.naive.high, 20),
                "tail_bound": mpmath.nstr(self.naive.tail, 5),
                "exceptional_factors": {str(k): str(v) for k, v in sorted(self.local_factors.items())},
            },
            "vanishing": self.vanishing if self.vanishing_prime is None else f"{self.vanishing}({self.vanishing_prime})",
            "truncation_L": self.truncation_L,
            "notes": list(self.notes),
        }


def _assemble(problem, exceptional, correction, L, vanishing="none", vprime=None, notes=()) -> DensityResult:
    L = int(L or DEFAULT_L[problem.kind])
    naive = euler_product(problem, exceptional, L)
    with mpmath.workdps(DPS):
        c = mpmath.mpf(correction.numerator) / correction.denominator
        const = c * naive.value
        lo, hi = sorted([c * naive.low, c * naive.high])
    if vanishing != "none":
        const = lo = hi = mpmath.mpf(0)
    return DensityResult(problem, naive, correction, const, lo, hi, L, vanishing, vprime, dict(exceptional), list(notes))


def _zero_result(problem, prime, L, note) -> DensityResult:
    L = int(L or DEFAULT_L[problem.kind])
    naive = euler_product(problem, {}, L)
    z = mpmath.mpf(0)
    return DensityResult(problem, naive, Fraction(1), z, z, z, L, "local", prime, {}, [note])


def compute_density(problem: DensityProblem, spec, L: int | None = None) -> DensityResult:
    """Constant for ``problem`` on a curve described by ``spec`` (generic enumeration path)."""
    L = int(L or DEFAULT_L[problem.kind])
    if problem.kind == "cyclic-ap" and not problem.coprime:
        p = prime_divisors(gcd(problem.a, problem.f))[0]
        return _zero_result(problem, p, L, "gcd(a, f) > 1")
    if hasattr(spec, "joint_fraction"):
        return spec.density(problem, L)
    cr = correction_factor(problem, spec)
    exceptional = dict(cr.local_densities)
    for p in problem.problem_primes():
        if p not in exceptional:
            exceptional[p] = full_gl2_density(problem, p)
    vanishing, vprime = cr.vanishing, cr.vanishing_prime
    if vanishing == "none":
        for p, d in sorted(exceptional.items()):
            if d == 0:
                vanishing, vprime = "local", p
                break
    return _assemble(problem, exceptional, cr.correction, L, vanishing, vprime)


# --------------------------------------------------------------------------
# Serre curves: closed forms


def _check_disc(D: int):
    if D % 4 not in (0, 1):
        raise ValueError(f"D = {D} is not 0 or 1 mod 4")
    if not is_fundamental_discriminant(D):
        raise ValueError(f"D = {D} is not a fundamental discriminant")


def serre_cyclic_correction(D: int) -> Fraction:
    _check_disc(D)
    if D % 4 == 0:
        return Fraction(1)
    ps = sorted(set(prime_divisors(2 * D)))
    return 1 + prod((Fraction(-1, (p * p - 1) * (p * p - p) - 1) for p in ps), start=Fraction(1))


def serre_cyclic(D: int, L: int | None = None) -> DensityResult:
    return _assemble(DensityProblem.cyclic(), {}, serre_cyclic_correction(D), L)


def serre_delta_ap(ell: int, a: int, f: int, D: int) -> Fraction:
    """delta_l for a Serre curve and the condition p = a (mod f) (a, f coprime)."""
    if f % ell:
        return generic_factor("cyclic", ell)
    e = valuation(f, ell)
    phi = Fraction(1, euler_phi(ell**e))
    if ell == 2 and abs(D) in (4, 8):
        need = 4 if abs(D) == 4 else 8
        if f % need:
            # chi_D is invisible at this level; only the det condition mod 2^e remains
            return phi * Fraction(5, 6)
        trivial_on_field = kronecker(D, a % (4 * abs(D))) == 1 if a % 2 else False
        return phi * Fraction(2, 3) if trivial_on_field else phi
    if a % ell == 1:
        return phi * (1 - Fraction(1, ell * (ell - 1) * (ell + 1)))
    return phi


def serre_E2(a: int, f: int, D: int, delta_prime: int | None = None) -> Fraction:
    """Average of chi_2 on S(2) for a Serre curve (|D| != 4, 8 unless zero)."""
    o = valuation(D, 2)
    if o == 0:
        return Fraction(-1, 5)
    if o == 2:
        if abs(D) == 4 or f % 4:
            return Fraction(0)
        return Fraction(-kronecker(-4, a % 8), 5)
    if abs(D) == 8 or f % 8:
        return Fraction(0)
    if delta_prime is None:
        delta_prime = D // 8
    chi = 8 if delta_prime % 4 == 1 else -8
    return Fraction(-kronecker(chi, a % 8), 5)


def serre_ap_correction(a: int, f: int, D: int, delta_prime: int | None = None) -> Fraction:
    _check_disc(D)
    if gcd(a, f) != 1:
        return Fraction(0)
    if abs(D) in (4, 8):
        return Fraction(1)
    e2 = serre_E2(a, f, D, delta_prime)
    term = e2
    for p in prime_divisors(D):
        if p == 2:
            continue
        if f % p == 0:
            term *= kronecker(a, p)
        else:
            term *= Fraction(-1, (p * p - 1) * (p * p - p) - 1)
    return 1 + term


def serre_ap(a: int, f: int, D: int, delta_prime: int | None = None, L: int | None = None) -> DensityResult:
    problem = DensityProblem.ap(a, f)
    _check_disc(D)
    if not problem.coprime:
        return _zero_result(problem, prime_divisors(gcd(problem.a, f))[0], L, "gcd(a, f) > 1")
    exc = {p: serre_delta_ap(p, problem.a, f, D) for p in prime_divisors(f)} if f > 1 else {}
    corr = serre_ap_correction(problem.a, f, D, delta_prime)
    return _assemble(problem, exc, corr, L, "none" if corr else "entanglement")


def koblitz_count_complement(ell: int) -> int:
    """|{A in GL_2(F_l) : det(I - A) = 0}|."""
    return ell * ell + (ell - 2) * (ell * ell + ell)


def serre_koblitz_correction(D: int) -> Fraction:
    _check_disc(D)
    if D % 4 == 0:
        return Fraction(1)
    return 1 + prod((Fraction(1, p**3 - 2 * p * p - p + 3) for p in prime_divisors(D)), start=Fraction(1))


def serre_koblitz(D: int, L: int | None = None) -> DensityResult:
    return _assemble(DensityProblem.koblitz(1), {}, serre_koblitz_correction(D), L)


# --------------------------------------------------------------------------
# classical Artin


@dataclass
class ArtinResult:
    g: int
    h: int
    D: int
    correction: Fraction
    product: EulerProduct | None
    product_value: mpmath.mpf
    sum_head: float | None
    sum_N: int
    sum_tail_bound: float
    zero_reason: str | None = None

    def to_json(self) -> dict:
        return {
            "g": self.g,
            "h": self.h,
            "D": self.D,
            "correction": str(self.correction),
            "product": {
                "value": mpmath.nstr(self.product_value, 20),
                "tail_low": mpmath.nstr(self.product.low * self.correction, 20) if self.product else "0",
                "tail_high": mpmath.nstr(self.product.high * self.correction, 20) if self.product else "0",
                "truncation_L": self.product.L if self.product else None,
            },
            "sum_head": self.sum_head,
            "sum_N": self.sum_N,
            "sum_tail_bound": self.sum_tail_bound,
            "zero_reason": self.zero_reason,
        }


def artin_correction(g: int) -> tuple[int, int, Fraction]:
    h = largest_power_exponent(g)
    D = fundamental_discriminant(g)
    if D % 4 != 1:
        return h, D, Fraction(1)
    term = Fraction(1)
    for p in prime_divisors(D):
        term *= Fraction(-1, p - 2) if h % p == 0 else Fraction(-1, p * p - p - 1)
    return h, D, 1 - term


def artin_sum_head(g: int, N: int) -> tuple[float, float]:
    """sum_{n <= N} mu(n)/[F_n:Q] and a bound for the omitted tail."""
    h = largest_power_exponent(g)
    D = fundamental_discriminant(g)
    mu, phi = mobius_phi_sieve(N)
    n = np.arange(N + 1, dtype=np.int64)
    sel = np.flatnonzero(mu[1:]) + 1
    deg = phi[sel].astype(np.float64) * (sel // np.gcd(sel, h)).astype(np.float64)
    if h % 2 == 1 and D != 1:
        halve = (sel % 2 == 0) & (sel % abs(D) == 0)
        deg = np.where(halve, deg / 2, deg)
    head = math.fsum((mu[sel] / deg).tolist())
    del n
    ll = math.log(math.log(N))
    tail = 2 * h * (math.exp(0.5772156649015329) * (ll + 1 / math.log(N)) + 3 / ll) / N
    return head, tail


def artin_classical(g: int, L: int = 10**5, N: int = 10**6) -> ArtinResult:
    if g in (0, 1, -1):
        raise ValueError("g must not be 0 or +-1")
    h, D, corr = artin_correction(g)
    if h % 2 == 0:
        return ArtinResult(g, h, D, Fraction(0), None, mpmath.mpf(0), 0.0, 0, 0.0, "g is a perfect square")
    with mpmath.workdps(DPS):
        acc = mpmath.mpf(1)
        for ell in primes_up_to(L).tolist():
            acc *= 1 - (mpmath.mpf(1) / (ell - 1) if h % ell == 0 else mpmath.mpf(1) / (ell * (ell - 1)))
        tail = mpmath.mpf(1) / L
        prod_ = EulerProduct(+acc, acc * (1 - tail), +acc, tail, L)
        value = acc * corr.numerator / corr.denominator
    head, stail = artin_sum_head(g, N)
    return ArtinResult(g, h, D, corr, prod_, value, head, N, stail)
