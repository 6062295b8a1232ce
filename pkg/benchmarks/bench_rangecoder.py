"""Throughput comparison of the two range-coder backends.

Times symbol-sequence encode and decode over the same fixtures through
the compiled extension and the pure-Python state machine, then verifies
the streams are byte-identical.  Run as a script:

    python benchmarks/bench_rangecoder.py [--symbols N] [--repeats K]
"""

import argparse
import time

import numpy as np

from ssbcodec.rc import _rc_py, build_cdf_tables, scale_index, scale_table

try:
    from ssbcodec.rc import _rc as _rc_c
except ImportError:
    _rc_c = None


def make_fixture(n: int, seed: int = 7):
    rng = np.random.default_rng(seed)
    scales = scale_table(0.11)
    tables = build_cdf_tables(scales, 64, 16)
    sigma = np.exp(rng.uniform(np.log(0.11), np.log(64.0), size=n))
    idx = scale_index(sigma.astype(np.float32), scales).astype(np.int32)
    resid = np.clip(np.rint(rng.normal(0.0, sigma)), -64, 64).astype(np.int32)
    return resid, idx, tables


def run(impl, resid, idx, tables, repeats):
    best_enc = best_dec = float("inf")
    stream = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        enc = impl.RangeEncoder(16)
        impl.encode_block(enc, resid, idx, tables, 64)
        stream = enc.finish()
        best_enc = min(best_enc, time.perf_counter() - t0)

        t0 = time.perf_counter()
        dec = impl.RangeDecoder(stream, 16)
        out = impl.decode_block(dec, idx, tables, 64)
        best_dec = min(best_dec, time.perf_counter() - t0)
        assert np.array_equal(out, resid)
    return stream, best_enc, best_dec


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--symbols", type=int, default=200_000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    resid, idx, tables = make_fixture(args.symbols)
    n = args.symbols

    py_stream, py_enc, py_dec = run(_rc_py, resid, idx, tables, args.repeats)
    print(f"python   encode {n / py_enc / 1e6:7.2f} Msym/s   "
          f"decode {n / py_dec / 1e6:7.2f} Msym/s   "
          f"({len(py_stream)} bytes)")

    if _rc_c is None:
        print("compiled backend not built; skipping comparison")
        return 0

    c_stream, c_enc, c_dec = run(_rc_c, resid, idx, tables, args.repeats)
    print(f"compiled encode {n / c_enc / 1e6:7.2f} Msym/s   "
          f"decode {n / c_dec / 1e6:7.2f} Msym/s   "
          f"({len(c_stream)} bytes)")

    assert c_stream == py_stream, "backends must emit identical bytes"
    print(f"speedup: encode x{py_enc / c_enc:.1f}, decode x{py_dec / c_dec:.1f}"
          f"   (streams byte-identical)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
