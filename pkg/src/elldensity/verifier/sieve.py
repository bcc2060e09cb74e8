"""Segmented sieve of Eratosthenes with an optional on-disk segment cache."""
from __future__ import annotations

import os
from math import isqrt
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from ..arith import primes_up_to

SEGMENT = 1 << 20
CACHE_ENV = "ELLDENSITY_CACHE"


def _cache_dir() -> Path | None:
    root = os.environ.get(CACHE_ENV)
    if not root:
        return None
    path = Path(root) / "segments"
    path.mkdir(parents=True, exist_ok=True)
    return path


def segment_primes(lo: int, hi: int) -> np.ndarray:
    """Primes in [lo, hi) as int64."""
    lo = max(lo, 2)
    if hi <= lo:
        return np.zeros(0, dtype=np.int64)
    cache = _cache_dir()
    if cache is not None:
        f = cache / f"p_{lo}_{hi}.npy"
        if f.exists():
            return np.load(f)
    mark = np.ones(hi - lo, dtype=bool)
    for q in primes_up_to(isqrt(hi - 1)).tolist():
        start = max(q * q, (lo + q - 1) // q * q)
        mark[start - lo :: q] = False
    out = np.flatnonzero(mark).astype(np.int64) + lo
    if cache is not None:
        tmp = cache / f"p_{lo}_{hi}.{os.getpid()}.tmp.npy"
        np.save(tmp, out)
        os.replace(tmp, cache / f"p_{lo}_{hi}.npy")
    return out


def segments(lo: int, hi: int, size: int = SEGMENT) -> list[tuple[int, int]]:
    """Aligned half-open blocks covering [lo, hi] exactly once."""
    if lo > hi:
        raise ValueError("lo must not exceed hi")
    if hi >= 2**63 - 1:
        raise ValueError("hi must be below 2^63")
    out = []
    a = lo
    while a <= hi:
        b = min((a // size + 1) * size, hi + 1)
        out.append((a, b))
        a = b
    return out


def sieve(lo: int, hi: int, excluded: Iterable[int] = ()) -> Iterator[int]:
    """Primes in [lo, hi] ascending, skipping ``excluded``."""
    ex = np.array(sorted(set(int(e) for e in excluded)), dtype=np.int64)
    for a, b in segments(lo, hi):
        ps = segment_primes(a, b)
        if ex.size:
            ps = ps[~np.isin(ps, ex)]
        yield from ps.tolist()


def prime_count(x: int) -> int:
    return sum(segment_primes(a, b).size for a, b in segments(2, x)) if x >= 2 else 0
