"""Per-prime kernels: modular arithmetic, point counting, cyclicity, Miller-Rabin.

All arithmetic is on int64 with moduli below 2**31, so every product fits.
Points on y^2 = x^3 + A x + B are (x, y, inf) triples.  The same source runs
under numba or as plain Python (see ``elldensity._accel``).
"""
import numpy as np

from .._accel import kernel

MAX_P = 2**31 - 1
RNG_MOD = 2147483647  # MINSTD modulus
RNG_MUL = 48271
SYLOW_TRIALS = 8
POINT_ROUNDS = 24

# status codes returned by classify_block
CYCLIC = 0
NONCYCLIC = 1
UNDECIDED = 2


@kernel
def powmod(a, e, p):
    r = 1
    a %= p
    while e > 0:
        if e & 1:
            r = r * a % p
        a = a * a % p
        e >>= 1
    return r


@kernel
def invmod(a, p):
    t, newt, r, newr = 0, 1, p, a % p
    while newr != 0:
        q = r // newr
        t, newt = newt, t - q * newt
        r, newr = newr, r - q * newr
    return t % p


@kernel
def legendre_symbol(a, p):
    a %= p
    if a == 0:
        return 0
    return 1 if powmod(a, (p - 1) // 2, p) == 1 else -1


@kernel
def sqrtmod(a, p):
    """Square root of a quadratic residue a mod an odd prime p (Tonelli-Shanks)."""
    a %= p
    if a == 0:
        return 0
    if p % 4 == 3:
        return powmod(a, (p + 1) // 4, p)
    q, s = p - 1, 0
    while q % 2 == 0:
        q //= 2
        s += 1
    z = 2
    while powmod(z, (p - 1) // 2, p) != p - 1:
        z += 1
    m, c, t, r = s, powmod(z, q, p), powmod(a, q, p), powmod(a, (q + 1) // 2, p)
    while t != 1:
        i, t2 = 0, t
        while t2 != 1:
            t2 = t2 * t2 % p
            i += 1
        b = c
        for _ in range(m - i - 1):
            b = b * b % p
        m, c = i, b * b % p
        t, r = t * c % p, r * b % p
    return r


@kernel
def isqrt_i64(n):
    r = int(np.sqrt(float(n)))
    while r * r > n:
        r -= 1
    while (r + 1) * (r + 1) <= n:
        r += 1
    return r


@kernel
def rng_next(state):
    return state * RNG_MUL % RNG_MOD


@kernel
def rng_seed(seed, p):
    s = ((seed % RNG_MOD) * 1000003 + p) % RNG_MOD
    return s if s != 0 else 1


# --------------------------------------------------------------------------
# curve arithmetic


@kernel
def ec_add(x1, y1, i1, x2, y2, i2, A, p):
    if i1:
        return x2, y2, i2
    if i2:
        return x1, y1, i1
    if x1 == x2:
        if (y1 + y2) % p == 0:
            return 0, 0, 1
        lam = (3 * x1 % p * x1 + A) % p * invmod(2 * y1, p) % p
    else:
        lam = (y2 - y1) % p * invmod(x2 - x1, p) % p
    x3 = (lam * lam - x1 - x2) % p
    y3 = (lam * (x1 - x3) - y1) % p
    return x3, y3, 0


@kernel
def ec_mul(k, x, y, inf, A, p):
    rx, ry, ri = 0, 0, 1
    if k < 0:
        k = -k
        y = (-y) % p
    while k > 0:
        if k & 1:
            rx, ry, ri = ec_add(rx, ry, ri, x, y, inf, A, p)
        x, y, inf = ec_add(x, y, inf, x, y, inf, A, p)
        k >>= 1
    return rx, ry, ri


@kernel
def random_point(A, B, p, state):
    """Random affine point; returns (x, y, new_state)."""
    while True:
        state = rng_next(state)
        x = state % p
        r = ((x * x % p) * x + A * x + B) % p
        if r == 0:
            return x, 0, state
        if powmod(r, (p - 1) // 2, p) == 1:
            y = sqrtmod(r, p)
            state = rng_next(state)
            if state & 1:
                y = (p - y) % p
            return x, y, state


@kernel
def hasse_bounds(p):
    w = isqrt_i64(4 * p)
    return p + 1 - w, p + 1 + w


@kernel
def _reduce_to_order(n, x, y, A, p):
    """Exact order of a point P given a positive multiple n of it."""
    m = n
    q = 2
    rest = n
    while q * q <= rest:
        if rest % q == 0:
            while rest % q == 0:
                rest //= q
            while m % q == 0:
                _, _, i = ec_mul(m // q, x, y, 0, A, p)
                if i:
                    m //= q
                else:
                    break
        q += 1
    if rest > 1:
        _, _, i = ec_mul(m // rest, x, y, 0, A, p)
        if i and m % rest == 0:
            m //= rest
    return m


@kernel
def point_order(x, y, A, p):
    """Order of an affine point by baby-step giant-step over the Hasse interval."""
    lo, hi = hasse_bounds(p)
    width = hi - lo
    m = isqrt_i64(width) + 1
    bx = np.empty(m, dtype=np.int64)
    by = np.empty(m, dtype=np.int64)
    cx, cy, ci = 0, 0, 1
    for j in range(m):
        cx, cy, ci = ec_add(cx, cy, ci, x, y, 0, A, p)
        if ci:
            return _reduce_to_order(j + 1, x, y, A, p)
        bx[j] = cx
        by[j] = cy
    order = np.argsort(bx)
    sx = bx[order]
    # giant steps G_i = (lo + i m) P, step S = m P
    gx, gy, gi = ec_mul(lo, x, y, 0, A, p)
    stx, sty, sti = ec_mul(m, x, y, 0, A, p)
    base = lo
    for _ in range(width // m + 2):
        if gi:
            return _reduce_to_order(base, x, y, A, p)
        k = np.searchsorted(sx, gx)
        while k < m and sx[k] == gx:
            j = order[k] + 1
            if by[j - 1] == gy:
                if base - j > 0:
                    return _reduce_to_order(base - j, x, y, A, p)
            else:
                return _reduce_to_order(base + j, x, y, A, p)
            k += 1
        gx, gy, gi = ec_add(gx, gy, gi, stx, sty, sti, A, p)
        base += m
    return -1


@kernel
def _gcd(a, b):
    while b:
        a, b = b, a % b
    return a


@kernel
def count_naive(A, B, p):
    """#E(F_p) = p + 1 + sum_x (x^3 + A x + B | p)."""
    n = p + 1
    for x in range(p):
        r = ((x * x % p) * x + A * x + B) % p
        if r != 0:
            n += 1 if powmod(r, (p - 1) // 2, p) == 1 else -1
    return n


@kernel
def nonresidue(p):
    d = 2
    while powmod(d, (p - 1) // 2, p) == 1:
        d += 1
    return d


@kernel
def count_bsgs(A, B, p, state):
    """#E(F_p) from point orders on E and its quadratic twist; -1 if unresolved."""
    lo, hi = hasse_bounds(p)
    d = nonresidue(p)
    At = A * d % p * d % p
    Bt = B * (d * d % p) % p * d % p
    le, lt = 1, 1
    for rnd in range(POINT_ROUNDS):
        if rnd % 2 == 0:
            x, y, state = random_point(A, B, p, state)
            o = point_order(x, y, A, p)
            if o <= 0:
                return -1
            le = le // _gcd(le, o) * o
        else:
            x, y, state = random_point(At, Bt, p, state)
            o = point_order(x, y, At, p)
            if o <= 0:
                return -1
            lt = lt // _gcd(lt, o) * o
        found, hits = 0, 0
        n = (lo + le - 1) // le * le
        while n <= hi:
            if (2 * p + 2 - n) % lt == 0:
                found = n
                hits += 1
                if hits > 1:
                    break
            n += le
        if hits == 1:
            return found
    return -1


@kernel
def point_count_kernel(A, B, p, seed, naive_limit):
    if p <= naive_limit:
        return count_naive(A, B, p)
    n = count_bsgs(A, B, p, rng_seed(seed, p))
    if n < 0:
        n = count_naive(A, B, p)
    return n


# --------------------------------------------------------------------------
# polynomials over F_p (coefficient arrays, lowest degree first)


@kernel
def poly_trim(a):
    n = a.shape[0]
    while n > 0 and a[n - 1] == 0:
        n -= 1
    return a[:n].copy()


@kernel
def poly_mul(a, b, p):
    if a.shape[0] == 0 or b.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    out = np.zeros(a.shape[0] + b.shape[0] - 1, dtype=np.int64)
    for i in range(a.shape[0]):
        ai = a[i]
        if ai == 0:
            continue
        for j in range(b.shape[0]):
            out[i + j] = (out[i + j] + ai * b[j]) % p
    return poly_trim(out)


@kernel
def poly_mod(a, m, p):
    """Remainder of a modulo m (m with nonzero leading coefficient)."""
    a = a.copy()
    dm = m.shape[0] - 1
    inv = invmod(m[dm], p)
    for i in range(a.shape[0] - 1, dm - 1, -1):
        c = a[i] * inv % p
        if c:
            for j in range(dm + 1):
                a[i - dm + j] = (a[i - dm + j] - c * m[j]) % p
    return poly_trim(a[: max(dm, 0)] if a.shape[0] > dm else a)


@kernel
def poly_powmod(base, e, m, p):
    result = np.ones(1, dtype=np.int64)
    b = poly_mod(base, m, p)
    while e > 0:
        if e & 1:
            result = poly_mod(poly_mul(result, b, p), m, p)
        b = poly_mod(poly_mul(b, b, p), m, p)
        e >>= 1
    return result


@kernel
def poly_sub(a, b, p):
    n = max(a.shape[0], b.shape[0])
    out = np.zeros(n, dtype=np.int64)
    out[: a.shape[0]] += a
    out[: b.shape[0]] -= b
    return poly_trim(out % p)


@kernel
def all_roots_rational(m, p):
    """True iff the squarefree polynomial m splits into distinct linear factors over F_p."""
    x = np.zeros(2, dtype=np.int64)
    x[1] = 1
    xp = poly_powmod(x, p, m, p)
    return poly_sub(xp, poly_mod(x, m, p), p).shape[0] == 0


@kernel
def torsion_points_rational(psi, A, B, p):
    """All nonzero l-torsion points rational: psi splits and f is a square at every root."""
    if not all_roots_rational(psi, p):
        return False
    f = np.zeros(4, dtype=np.int64)
    f[0], f[1], f[3] = B % p, A % p, 1
    g = poly_powmod(f, (p - 1) // 2, psi, p)
    return g.shape[0] == 1 and g[0] == 1


@kernel
def full_two_torsion(A, B, p):
    f = np.zeros(4, dtype=np.int64)
    f[0], f[1], f[3] = B % p, A % p, 1
    return all_roots_rational(f, p)


# --------------------------------------------------------------------------
# cyclicity


@kernel
def sylow_is_cyclic(A, B, p, N, ell, state, trials):
    """Search for a point of order l^v in the l-Sylow subgroup (l^v || N).

    Returns (found, state); found means the Sylow subgroup is cyclic.
    """
    v, m = 0, N
    while m % ell == 0:
        m //= ell
        v += 1
    top = 1
    for _ in range(v - 1):
        top *= ell
    for _ in range(trials):
        x, y, state = random_point(A, B, p, state)
        qx, qy, qi = ec_mul(m, x, y, 0, A, p)
        if qi:
            continue
        _, _, ri = ec_mul(top, qx, qy, 0, A, p)
        if not ri:
            return True, state
    return False, state


@kernel
def candidate_primes(N, p):
    """Primes l with l^2 | N and l | p - 1, ascending (at most 16)."""
    out = np.zeros(16, dtype=np.int64)
    k = 0
    rest = N
    q = 2
    while q * q <= rest:
        if rest % q == 0:
            e = 0
            while rest % q == 0:
                rest //= q
                e += 1
            if e >= 2 and (p - 1) % q == 0 and k < 16:
                out[k] = q
                k += 1
        q += 1
    return out[:k]


@kernel
def classify_point(A, B, p, N, state):
    """(status, ell, state): status CYCLIC, NONCYCLIC (witness ell) or UNDECIDED (ell needs psi_ell)."""
    cands = candidate_primes(N, p)
    for idx in range(cands.shape[0]):
        ell = cands[idx]
        ok, state = sylow_is_cyclic(A, B, p, N, ell, state, SYLOW_TRIALS)
        if ok:
            continue
        if ell == 2:
            if full_two_torsion(A, B, p):
                return NONCYCLIC, ell, state
            continue
        return UNDECIDED, ell, state
    return CYCLIC, 0, state


@kernel
def is_probable_prime(n):
    """Deterministic Miller-Rabin for n < 3.4e14 (bases 2..17)."""
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17)
    for q in small:
        if n % q == 0:
            return n == q
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:
        x = powmod(a, d, n)
        if x == 1 or x == n - 1:
            continue
        comp = True
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                comp = False
                break
        if comp:
            return False
    return True


@kernel
def process_block(primes, Ared, Bred, seed, naive_limit, t):
    """Point counts, cyclicity status and Koblitz flags for an array of good primes > 3.

    ``Ared``/``Bred`` hold the short-model coefficients already reduced mod each prime.
    """
    n = primes.shape[0]
    counts = np.empty(n, dtype=np.int64)
    status = np.empty(n, dtype=np.int64)
    witness = np.empty(n, dtype=np.int64)
    kob = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        p = primes[i]
        a, b = Ared[i], Bred[i]
        N = point_count_kernel(a, b, p, seed, naive_limit)
        counts[i] = N
        st, ell, _ = classify_point(a, b, p, N, rng_seed(seed + 1, p))
        status[i] = st
        witness[i] = ell
        if t > 0 and N % t == 0:
            kob[i] = is_probable_prime(N // t)
    return counts, status, witness, kob
