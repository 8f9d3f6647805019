"""Compare the compiled and pure-Python pair-sum kernels on Gagliardo workloads."""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from hanzawa_mhd import _ext
from hanzawa_mhd.norms import pair_sum


def _case(n: int, dim: int, comps: int, rng: np.random.Generator):
    X = rng.uniform(size=(n, dim))
    F = rng.normal(size=(n, 1, comps))
    W = np.full(n, 1.0 / n)
    return X, F, W


def run(sizes, repeats: int, seed: int = 0) -> list[dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        X, F, W = _case(n, 2, 3, rng)
        rec = {"n": n}
        for backend in ("cython", "python"):
            if backend == "cython" and _ext.BACKEND != "cython":
                rec[backend] = None
                continue
            best = np.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                val = pair_sum(X, F, W, None, 2.0, 3.0, backend=backend, n_workers=1)
                best = min(best, time.perf_counter() - t0)
            rec[backend] = best
            rec[f"{backend}_value"] = val
        if rec.get("cython"):
            rec["speedup"] = rec["python"] / rec["cython"]
            rec["rel_diff"] = abs(rec["cython_value"] - rec["python_value"]) / abs(rec["python_value"])
        rows.append(rec)
    return rows


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--json", action="store_true", help="print JSON instead of a table")
    args = ap.parse_args(argv)
    rows = run(args.sizes, args.repeats)
    if args.json:
        print(json.dumps(rows, indent=2))
        return 0
    print(f"backend at import: {_ext.BACKEND}")
    print(f"{'n':>6} {'cython [s]':>11} {'python [s]':>11} {'speedup':>8} {'rel diff':>9}")
    for r in rows:
        cy = f"{r['cython']:.4f}" if r.get("cython") else "n/a"
        sp = f"{r['speedup']:.1f}x" if "speedup" in r else "n/a"
        rd = f"{r['rel_diff']:.1e}" if "rel_diff" in r else "n/a"
        print(f"{r['n']:>6} {cy:>11} {r['python']:>11.4f} {sp:>8} {rd:>9}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
