"""Elementary integer arithmetic shared by the catalog and density code."""
from __future__ import annotations

from functools import lru_cache
from math import gcd, isqrt

import numpy as np
from sympy import factorint, perfect_power


def factorize(n: int) -> dict[int, int]:
    """Prime factorisation of |n| (trial division then Pollard rho, via sympy)."""
    n = abs(int(n))
    if n == 0:
        raise ValueError("cannot factor 0")
    return {int(p): int(e) for p, e in factorint(n).items()}


def prime_divisors(n: int) -> list[int]:
    return sorted(factorize(n))


def valuation(n: int, p: int) -> int:
    n = abs(int(n))
    if n == 0:
        raise ValueError("valuation of 0")
    v = 0
    while n % p == 0:
        n //= p
        v += 1
    return v


def squarefree_part(n: int) -> int:
    """Signed squarefree kernel: n = sf * k^2 with sf squarefree."""
    if n == 0:
        raise ValueError("squarefree part of 0")
    out = -1 if n < 0 else 1
    for p, e in factorize(n).items():
        if e % 2:
            out *= p
    return out


def fundamental_discriminant(n: int) -> int:
    """Discriminant of Q(sqrt(n)) (1 when n is a square)."""
    sf = squarefree_part(n)
    return sf if sf % 4 == 1 else 4 * sf


def is_fundamental_discriminant(d: int) -> bool:
    if d == 1 or d == 0:
        return False
    if d % 4 == 1:
        return squarefree_part(d) == d
    if d % 4 == 0:
        m = d // 4
        return m % 4 in (2, 3) and squarefree_part(m) == m
    return False


def euler_phi(n: int) -> int:
    out = n
    for p in factorize(n):
        out = out // p * (p - 1)
    return out


def kronecker(d: int, n: int) -> int:
    """Kronecker symbol (d / n) for n > 0."""
    if n <= 0:
        raise ValueError("n must be positive")
    out = 1
    for p, e in factorize(n).items():
        if p == 2:
            if d % 2 == 0:
                return 0
            s = 1 if d % 8 in (1, 7) else -1
        else:
            r = d % p
            if r == 0:
                return 0
            s = 1 if pow(r, (p - 1) // 2, p) == 1 else -1
        out *= s**e
    return out


def legendre(a: int, p: int) -> int:
    a %= p
    if a == 0:
        return 0
    return 1 if pow(a, (p - 1) // 2, p) == 1 else -1


def largest_power_exponent(g: int) -> int:
    """Largest h with g = g0^h for an integer g0."""
    if g in (0, 1, -1):
        raise ValueError("g must not be 0 or +-1")
    pp = perfect_power(abs(g))
    e = 1 if not pp else int(pp[1])
    if g < 0:
        while e % 2 == 0:
            e //= 2
    return e


@lru_cache(maxsize=8)
def primes_up_to(n: int) -> np.ndarray:
    """All primes <= n as an int64 array (simple numpy sieve)."""
    if n < 2:
        return np.zeros(0, dtype=np.int64)
    sieve = np.ones(n + 1, dtype=bool)
    sieve[:2] = False
    sieve[4::2] = False
    for p in range(3, isqrt(n) + 1, 2):
        if sieve[p]:
            sieve[p * p :: 2 * p] = False
    out = np.flatnonzero(sieve).astype(np.int64)
    out.setflags(write=False)
    return out


def mobius_phi_sieve(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays mu[0..n], phi[0..n]."""
    mu = np.ones(n + 1, dtype=np.int64)
    phi = np.arange(n + 1, dtype=np.int64)
    for p in primes_up_to(n):
        p = int(p)
        mu[p::p] *= -1
        mu[p * p :: p * p] = 0
        phi[p::p] -= phi[p::p] // p
    mu[0] = 0
    return mu, phi


def crt_pair(a1: int, m1: int, a2: int, m2: int) -> int:
    if gcd(m1, m2) != 1:
        raise ValueError("moduli not coprime")
    return (a1 + m1 * ((a2 - a1) * pow(m1, -1, m2) % m2)) % (m1 * m2)
