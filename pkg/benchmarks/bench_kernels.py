"""Compare the numba kernels with the pure-Python fallback.

Each backend runs in its own subprocess because ``ELLDENSITY_NUMBA`` is read
at import time.  Usage::

    python3 benchmarks/bench_kernels.py [--lo 100000] [--count 400]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from elldensity._accel import backend_name
from elldensity.catalog import catalog_entry
from elldensity.verifier import kernels as K
from elldensity.verifier.sieve import segment_primes

lo, count = int(sys.argv[1]), int(sys.argv[2])
curve = catalog_entry("family6-example").curve
ps = segment_primes(lo, lo + 40 * count)
ps = np.array([p for p in ps.tolist() if curve.discriminant % p], dtype=np.int64)[:count]
A, B = curve.short_model
Ared = np.array([A % p for p in ps.tolist()], dtype=np.int64)
Bred = np.array([B % p for p in ps.tolist()], dtype=np.int64)

# warm up (compilation or cache load is not part of the measurement)
K.process_block(ps[:2], Ared[:2], Bred[:2], 0, 10**4, 1)

out = {"backend": backend_name(), "primes": int(ps.size)}
t0 = time.perf_counter()
for i in range(ps.size):
    K.point_count_kernel(int(Ared[i]), int(Bred[i]), int(ps[i]), 0, 0)
out["bsgs_count_s"] = time.perf_counter() - t0
t0 = time.perf_counter()
res = K.process_block(ps, Ared, Bred, 0, 10**4, 1)
out["process_block_s"] = time.perf_counter() - t0
out["checksum"] = int(np.asarray(res[0]).sum()) + int(np.asarray(res[1]).sum())
print(json.dumps(out))
"""


def run_backend(flag: str, lo: int, count: int) -> dict:
    env = dict(os.environ, ELLDENSITY_NUMBA=flag)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(lo), str(count)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lo", type=int, default=100_000)
    ap.add_argument("--count", type=int, default=400)
    args = ap.parse_args(argv)

    t0 = time.perf_counter()
    fast = run_backend("1", args.lo, args.count)
    slow = run_backend("0", args.lo, args.count)
    if fast["checksum"] != slow["checksum"]:
        raise SystemExit(f"backends disagree: {fast['checksum']} != {slow['checksum']}")
    print(f"{'kernel':<16}{'numba s':>12}{'python s':>12}{'speedup':>10}")
    for key, label in (("bsgs_count_s", "point count"), ("process_block_s", "process_block")):
        f, s = fast[key], slow[key]
        print(f"{label:<16}{f:>12.4f}{s:>12.4f}{s / f:>9.1f}x")
    print(f"{fast['primes']} primes from {args.lo}; backends agree; wall {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
