"""Empirical census of reductions: point counts, cyclicity, Koblitz primality."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .._accel import backend_name
from ..catalog import WeierstrassCurve
from ..density import DensityProblem, DensityResult
from . import kernels as K
from .sieve import SEGMENT, segment_primes, segments

log = logging.getLogger(__name__)

NAIVE_LIMIT = 10**4
LARGE_ELL = 50


class VerifierError(ValueError):
    pass


# --------------------------------------------------------------------------
# single primes


def _check_prime(curve: WeierstrassCurve, p: int):
    if p <= 3:
        raise VerifierError("point_count needs p > 3 (use group_structure for 2 and 3)")
    if curve.discriminant % p == 0:
        raise VerifierError(f"p = {p} divides the discriminant")
    if p > K.MAX_P:
        raise VerifierError(f"p = {p} exceeds the kernel bound 2^31 - 1")


def point_count(curve: WeierstrassCurve, p: int, method: str = "auto", seed: int = 0) -> int:
    """|E(F_p)| for a good prime p > 3; ``method`` is auto, naive or bsgs."""
    _check_prime(curve, p)
    A, B = curve.reduce(p)
    if method == "naive":
        n = K.count_naive(A, B, p)
    elif method == "bsgs":
        n = K.count_bsgs(A, B, p, K.rng_seed(seed, p))
        if n < 0:
            raise VerifierError(f"baby-step giant-step did not pin down the order at p = {p}")
    elif method == "auto":
        n = K.point_count_kernel(A, B, p, seed, NAIVE_LIMIT)
    else:
        raise ValueError(f"unknown method {method!r}")
    n = int(n)
    if (n - p - 1) ** 2 > 4 * p:
        raise VerifierError(f"Hasse bound violated at p = {p}: N = {n}")
    return n


def twist_count(curve: WeierstrassCurve, p: int) -> int:
    """|E'(F_p)| for the quadratic twist by a non-residue (naive count)."""
    _check_prime(curve, p)
    A, B = curve.reduce(p)
    d = K.nonresidue(p)
    return int(K.count_naive(A * d * d % p, B * d * d * d % p, p))


def division_polynomial(ell: int, A: int, B: int, p: int) -> np.ndarray:
    """psi_ell in F_p[x] for odd ell on y^2 = x^3 + A x + B (coefficients low to high).

    Even-index polynomials are stored divided by 2y, which makes the
    standard doubling recursion close up in F_p[x].
    """
    if ell % 2 == 0 or ell < 1:
        raise ValueError("ell must be odd and positive")
    A, B = A % p, B % p
    arr = lambda *c: K.poly_trim(np.array([x % p for x in c], dtype=np.int64))  # noqa: E731
    F = arr(4 * B, 4 * A, 0, 4)
    F2 = K.poly_mul(F, F, p)
    g = {
        0: np.zeros(0, dtype=np.int64),
        1: arr(1),
        2: arr(1),
        3: arr(-A * A, 12 * B, 6 * A, 0, 3),
        4: arr(2 * (-8 * B * B - A**3), 2 * (-4 * A * B), 2 * (-5 * A * A), 2 * 20 * B, 2 * 5 * A, 0, 2),
    }

    def mul(*ps):
        out = ps[0]
        for q in ps[1:]:
            out = K.poly_mul(out, q, p)
        return out

    def get(n):
        if n in g:
            return g[n]
        m = n // 2
        if n % 2:
            a = mul(get(m + 2), get(m), get(m), get(m))
            b = mul(get(m - 1), get(m + 1), get(m + 1), get(m + 1))
            if m % 2 == 0:
                a = mul(F2, a)
            else:
                b = mul(F2, b)
            val = K.poly_sub(a, b, p)
        else:
            inner = K.poly_sub(mul(get(m + 2), get(m - 1), get(m - 1)), mul(get(m - 2), get(m + 1), get(m + 1)), p)
            val = mul(get(m), inner)
        g[n] = val
        return val

    return get(ell)


def has_full_torsion(A: int, B: int, p: int, ell: int) -> bool:
    """E[ell] is contained in E(F_p) (p good, p != ell)."""
    if ell == 2:
        return bool(K.full_two_torsion(A, B, p))
    if ell > LARGE_ELL:
        log.info("division polynomial of degree %d at p=%d", (ell * ell - 1) // 2, p)
    psi = division_polynomial(ell, A, B, p)
    return bool(K.torsion_points_rational(psi, A, B, p))


@dataclass(frozen=True)
class CyclicityResult:
    cyclic: bool
    witness: int | None = None


def _resolve(A: int, B: int, p: int, N: int, seed: int) -> CyclicityResult:
    state = K.rng_seed(seed + 1, p)
    for ell in K.candidate_primes(N, p).tolist():
        found, state = K.sylow_is_cyclic(A, B, p, N, ell, state, K.SYLOW_TRIALS)
        if not found and has_full_torsion(A, B, p, ell):
            return CyclicityResult(False, ell)
    return CyclicityResult(True)


def is_cyclic(curve: WeierstrassCurve, p: int, N: int | None = None, seed: int = 0) -> CyclicityResult:
    """Decide whether E(F_p) is cyclic; a non-cyclic answer names l with E[l] rational."""
    if p <= 3:
        n, exp = group_structure(curve, p)
        if N is not None and N != n:
            raise VerifierError("inconsistent N")
        if n == exp:
            return CyclicityResult(True)
        return CyclicityResult(False, min(q for q in (2, 3) if (n // exp) % q == 0))
    if N is None:
        N = point_count(curve, p, seed=seed)
    elif (N - p - 1) ** 2 > 4 * p:
        raise VerifierError("inconsistent N (outside the Hasse interval)")
    A, B = curve.reduce(p)
    st, ell, _ = K.classify_point(A, B, p, N, K.rng_seed(seed + 1, p))
    if st == K.CYCLIC:
        return CyclicityResult(True)
    if st == K.NONCYCLIC:
        return CyclicityResult(False, int(ell))
    return _resolve(A, B, p, N, seed)


# --------------------------------------------------------------------------
# exhaustive group-structure oracle (long Weierstrass form, any good p)


def _long_points(curve: WeierstrassCurve, p: int) -> list[tuple[int, int]]:
    """All affine points of the long model over F_p."""
    a1, a2, a3, a4, a6 = (c % p for c in curve.ainvs)
    x = np.arange(p, dtype=np.int64)
    if p == 2:
        pts = []
        for xx in range(2):
            for yy in range(2):
                if (yy * yy + a1 * xx * yy + a3 * yy - xx**3 - a2 * xx * xx - a4 * xx - a6) % 2 == 0:
                    pts.append((xx, yy))
        return pts
    # (2y + a1 x + a3)^2 = 4 rhs + (a1 x + a3)^2
    h = (a1 * x + a3) % p
    rhs = ((x * x % p) * x + a2 * x % p * x + a4 * x + a6) % p
    disc = (4 * rhs + h * h) % p
    root = np.full(p, -1, dtype=np.int64)
    u = np.arange(p, dtype=np.int64)
    root[u * u % p] = u
    inv2 = (p + 1) // 2
    pts = []
    for xx, d, hh in zip(x.tolist(), disc.tolist(), h.tolist()):
        r = int(root[d])
        if r < 0:
            continue
        for v in {r, (p - r) % p}:
            pts.append((xx, (v - hh) * inv2 % p))
    return pts


def _long_add(P, Q, ainvs, p):
    if P is None:
        return Q
    if Q is None:
        return P
    a1, a2, a3, a4, a6 = ainvs
    x1, y1 = P
    x2, y2 = Q
    if x1 == x2 and (y1 + y2 + a1 * x2 + a3) % p == 0:
        return None
    if x1 == x2:
        den = (2 * y1 + a1 * x1 + a3) % p
        lam = (3 * x1 * x1 + 2 * a2 * x1 + a4 - a1 * y1) * pow(den, -1, p) % p
        nu = (-x1**3 + a4 * x1 + 2 * a6 - a3 * y1) * pow(den, -1, p) % p
    else:
        inv = pow(x2 - x1, -1, p)
        lam = (y2 - y1) * inv % p
        nu = (y1 * x2 - y2 * x1) * inv % p
    x3 = (lam * lam + a1 * lam - a2 - x1 - x2) % p
    y3 = (-(lam + a1) * x3 - nu - a3) % p
    return x3, y3


def _long_mul(k, P, ainvs, p):
    R = None
    while k:
        if k & 1:
            R = _long_add(R, P, ainvs, p)
        P = _long_add(P, P, ainvs, p)
        k >>= 1
    return R


def group_structure(curve: WeierstrassCurve, p: int) -> tuple[int, int]:
    """(N, exponent) of E(F_p) by enumerating every point (small p only).

    With E(F_p) = Z/n1 x Z/n2, n1 | n2, the q-part of n1 is q^k for the largest
    k with |E[q^k]| = q^(2k); the torsion counts come from multiplying every
    point by q repeatedly.
    """
    if curve.discriminant % p == 0:
        raise VerifierError(f"p = {p} divides the discriminant")
    ainvs = tuple(c % p for c in curve.ainvs)
    pts = _long_points(curve, p)
    N = len(pts) + 1
    n1 = 1
    rest = N
    q = 2
    while q * q <= rest or (rest > 1 and q == rest):
        if rest % q == 0:
            e = 0
            while rest % q == 0:
                rest //= q
                e += 1
            cur = list(pts)
            k = 0
            while 2 * (k + 1) <= e:
                cur = [_long_mul(q, P, ainvs, p) for P in cur]
                killed = 1 + sum(P is None for P in cur)
                if killed != q ** (2 * (k + 1)):
                    break
                k += 1
                cur = [P for P in cur if P is not None]
            n1 *= q**k
        q += 1
    return N, N // n1


# --------------------------------------------------------------------------
# census


@dataclass
class ReductionRecord:
    p: int
    N: int
    cyclic: bool
    witness: int
    ap_class: bool
    koblitz_prime: bool


@dataclass
class _Partial:
    primes: int = 0
    good: int = 0
    class_primes: int = 0
    class_good: int = 0
    matching: int = 0
    noncyclic_by_witness: dict = field(default_factory=dict)

    def add(self, other: "_Partial"):
        self.primes += other.primes
        self.good += other.good
        self.class_primes += other.class_primes
        self.class_good += other.class_good
        self.matching += other.matching
        for k, v in other.noncyclic_by_witness.items():
            self.noncyclic_by_witness[k] = self.noncyclic_by_witness.get(k, 0) + v


def koblitz_integral(x: float) -> tuple[float, float]:
    """Trapezoid (step 1) value of int_2^x dt / log(t)^2 and an upper bound on its error.

    The integrand is convex, so the trapezoid rule overestimates by at most the
    returned amount.
    """
    x = int(x)
    if x <= 2:
        return 0.0, 0.0
    total = 0.0
    chunk = 10**7
    for a in range(2, x + 1, chunk):
        t = np.arange(a, min(a + chunk, x + 1), dtype=np.float64)
        total += float(np.sum(1.0 / np.log(t) ** 2))
    f = lambda t: 1.0 / math.log(t) ** 2  # noqa: E731
    fp = lambda t: -2.0 / (t * math.log(t) ** 3)  # noqa: E731
    fpp = lambda t: (2.0 / (t * t * math.log(t) ** 3)) * (1.0 + 3.0 / math.log(t))  # noqa: E731
    value = total - 0.5 * (f(2) + f(x))
    err = (fpp(2) + fp(x) - fp(2)) / 12.0
    return value, err


def _config_hash(curve, problem, x, seed, naive_limit) -> str:
    blob = json.dumps(
        {"curve": list(curve.ainvs), "problem": problem.to_json(), "x": x, "seed": seed, "naive_limit": naive_limit},
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode()).hexdigest()


def _small_records(curve, ps, problem, seed):
    out = []
    for p in ps:
        N, exp = group_structure(curve, p)
        cyc = N == exp
        wit = 0 if cyc else min(q for q in (2, 3) if (N // exp) % q == 0)
        kob = problem.kind == "koblitz" and N % problem.t == 0 and bool(K.is_probable_prime(N // problem.t))
        out.append((p, N, cyc, wit, kob))
    return out


def _run_block(curve, problem, lo, hi, seed, naive_limit, want_records):
    ps = segment_primes(lo, hi)
    part = _Partial(primes=int(ps.size))
    if problem.kind == "cyclic-ap":
        in_class = ps % problem.f == problem.a
    else:
        in_class = np.ones(ps.size, dtype=bool)
    part.class_primes = int(in_class.sum())
    # the discriminant may exceed int64, so reduce with Python ints
    good = np.array([p for p in ps.tolist() if curve.discriminant % p], dtype=np.int64)
    part.good = int(good.size)
    cls = good % problem.f == problem.a if problem.kind == "cyclic-ap" else np.ones(good.size, dtype=bool)
    part.class_good = int(cls.sum())
    small = good[good <= 3]
    big = good[good > 3]
    A, B = curve.short_model
    t = problem.t if problem.kind == "koblitz" else 0
    rows = []
    if big.size:
        Ared = np.array([A % p for p in big.tolist()], dtype=np.int64)
        Bred = np.array([B % p for p in big.tolist()], dtype=np.int64)
        counts, status, witness, kob = _process(big, Ared, Bred, seed, naive_limit, t)
        for i in np.flatnonzero(status == K.UNDECIDED).tolist():
            res = _resolve(int(Ared[i]), int(Bred[i]), int(big[i]), int(counts[i]), seed)
            status[i] = K.CYCLIC if res.cyclic else K.NONCYCLIC
            witness[i] = 0 if res.cyclic else res.witness
        cyc = status == K.CYCLIC
        rows_big = (big, counts, cyc, witness, kob)
    else:
        rows_big = None
    recs = _small_records(curve, small.tolist(), problem, seed)
    cls_big = cls[good > 3]
    cls_small = cls[good <= 3]
    hit_small = [(r[4] if problem.kind == "koblitz" else r[2]) and c for r, c in zip(recs, cls_small.tolist())]
    part.matching += int(sum(hit_small))
    for r in recs:
        if not r[2]:
            part.noncyclic_by_witness[r[3]] = part.noncyclic_by_witness.get(r[3], 0) + 1
    if rows_big is not None:
        big, counts, cyc, witness, kob = rows_big
        hit = (kob if problem.kind == "koblitz" else cyc) & cls_big
        part.matching += int(hit.sum())
        w, c = np.unique(witness[~cyc], return_counts=True)
        for k, v in zip(w.tolist(), c.tolist()):
            part.noncyclic_by_witness[k] = part.noncyclic_by_witness.get(k, 0) + v
    if want_records:
        for (p, N, cy, wi, kb), c in zip(recs, cls_small.tolist()):
            rows.append(ReductionRecord(p, N, cy, wi, c, kb))
        if rows_big is not None:
            for i in range(big.size):
                rows.append(ReductionRecord(int(big[i]), int(counts[i]), bool(cyc[i]), int(witness[i]),
                                            bool(cls_big[i]), bool(kob[i])))
    return part, rows


def _process(primes, Ared, Bred, seed, naive_limit, t):
    return K.process_block(primes, Ared, Bred, seed, naive_limit, t)


@dataclass
class CensusReport:
    curve: list
    problem: dict
    x: int
    seed: int
    backend: str
    total_primes: int
    good_primes: int
    class_primes: int
    class_good_primes: int
    matching: int
    observed_density: float
    observed_density_all_primes: float
    observed_in_class: float
    noncyclic_by_witness: dict
    predicted: float | None = None
    deviation: float | None = None
    koblitz_integral: float | None = None
    koblitz_integral_error: float | None = None
    predicted_count: float | None = None
    ratio: float | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        d["noncyclic_by_witness"] = {str(k): v for k, v in sorted(self.noncyclic_by_witness.items())}
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)


def census(
    curve: WeierstrassCurve,
    problem: DensityProblem,
    x: int,
    *,
    threads: int = 1,
    seed: int = 0,
    naive_limit: int = NAIVE_LIMIT,
    prediction: DensityResult | None = None,
    dump: str | None = None,
    checkpoint: str | None = None,
    checkpoint_every: int = 10**7,
    block: int = SEGMENT,
) -> CensusReport:
    """Count good primes p <= x meeting the problem's condition."""
    if x < 2:
        raise VerifierError("x must be at least 2")
    if x > K.MAX_P:
        raise VerifierError("x exceeds the kernel bound 2^31 - 1")
    blocks = segments(2, x, block)
    total = _Partial()
    start = 0
    cfg = _config_hash(curve, problem, x, seed, naive_limit)
    if checkpoint and Path(checkpoint).exists():
        state = json.loads(Path(checkpoint).read_text())
        if state.get("config") != cfg or state.get("block") != block:
            raise VerifierError("checkpoint belongs to a different census configuration")
        start = int(state["next_block"])
        saved = state["partial"]
        saved["noncyclic_by_witness"] = {int(k): v for k, v in saved["noncyclic_by_witness"].items()}
        total = _Partial(**saved)
    dump_fh = None
    writer = None
    if dump:
        mode = "a" if start else "w"
        dump_fh = open(dump, mode, newline="")
        writer = csv.writer(dump_fh)
        if not start:
            writer.writerow(["p", "N", "cyclic", "witness", "ap_class", "koblitz_prime"])
    since = 0
    wave = max(1, threads) * 2
    try:
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            i = start
            while i < len(blocks):
                batch = blocks[i : i + wave]
                results = pool.map(lambda ab: _run_block(curve, problem, ab[0], ab[1], seed, naive_limit, writer is not None), batch)
                for part, rows in results:
                    total.add(part)
                    since += part.primes
                    if writer is not None:
                        for r in rows:
                            writer.writerow([r.p, r.N, int(r.cyclic), r.witness, int(r.ap_class), int(r.koblitz_prime)])
                i += len(batch)
                if checkpoint and (since >= checkpoint_every or i >= len(blocks)):
                    if dump_fh:
                        dump_fh.flush()
                    tmp = Path(checkpoint).with_suffix(".tmp")
                    tmp.write_text(json.dumps({"config": cfg, "block": block, "next_block": i, "partial": asdict(total)}, sort_keys=True))
                    os.replace(tmp, checkpoint)
                    since = 0
    finally:
        if dump_fh:
            dump_fh.close()
    return _report(curve, problem, x, seed, total, prediction)


def _report(curve, problem, x, seed, total: _Partial, prediction) -> CensusReport:
    obs = total.matching / total.good if total.good else 0.0
    rep = CensusReport(
        curve=list(curve.ainvs),
        problem=problem.to_json(),
        x=int(x),
        seed=int(seed),
        backend=backend_name(),
        total_primes=total.primes,
        good_primes=total.good,
        class_primes=total.class_primes,
        class_good_primes=total.class_good,
        matching=total.matching,
        observed_density=obs,
        observed_density_all_primes=total.matching / total.primes if total.primes else 0.0,
        observed_in_class=total.matching / total.class_good if total.class_good else 0.0,
        noncyclic_by_witness=dict(total.noncyclic_by_witness),
    )
    if problem.kind == "koblitz":
        rep.koblitz_integral, rep.koblitz_integral_error = koblitz_integral(x)
    if prediction is not None:
        compare(rep, prediction, inplace=True)
    return rep


def compare(report: CensusReport, result: DensityResult, inplace: bool = False) -> dict:
    """Deviation of the census from a computed constant (plus a rough 1/sqrt(count) scale)."""
    if report.problem != result.problem.to_json():
        raise VerifierError("census and density result are for different problems")
    c = float(result.constant)
    out = {"predicted": c, "matching": report.matching}
    if result.problem.kind == "koblitz":
        integral = report.koblitz_integral if report.koblitz_integral is not None else koblitz_integral(report.x)[0]
        pred = c * integral
        out.update(predicted_count=pred, ratio=report.matching / pred if pred else None)
        out["deviation"] = report.matching - pred
    else:
        out["deviation"] = report.observed_density - c
    out["scale"] = 1 / math.sqrt(report.matching) if report.matching else None
    if inplace:
        report.predicted = c
        report.deviation = out["deviation"]
        if result.problem.kind == "koblitz":
            report.predicted_count = out["predicted_count"]
            report.ratio = out["ratio"]
    return out
