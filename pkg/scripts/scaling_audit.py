"""MACs growth of PoolAttn vs attention as the patch count grows.

With --time, also measures forward wall time per mixer (informational only;
numpy timings vary by machine).
"""
import argparse
import time

import numpy as np

from potter.mixers import make_mixer
from potter.profiler import fitted_exponent, scaling_audit


def forward_time(kind, dim, n, reps=3):
    mixer = make_mixer(kind, dim, rng=np.random.default_rng(0))
    side = int(np.sqrt(n))
    x = np.random.default_rng(1).normal(size=(dim, side, n // side))
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        mixer(x)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-D", "--dim", type=int, default=64)
    ap.add_argument("-N", "--patches", type=int, nargs="*", default=[49, 196, 784, 3136])
    ap.add_argument("--mode", choices=("table", "exact"), default="table")
    ap.add_argument("--time", action="store_true")
    args = ap.parse_args()
    for kind in ("poolattn", "attention"):
        rows = scaling_audit(kind, args.dim, args.patches, args.mode)
        print(f"\n{kind} (D={args.dim}, {args.mode} mode), fitted exponent {fitted_exponent(rows):.3f}")
        print(f"{'N':>7}{'MACs':>16}{'ratio':>9}{'slope':>8}" + ("   forward s" if args.time else ""))
        for n, macs, ratio, slope in rows:
            r = f"{ratio:.3f}" if ratio else "-"
            s = f"{slope:.3f}" if slope else "-"
            t = f"{forward_time(kind, args.dim, n):12.4f}" if args.time else ""
            print(f"{n:>7}{macs:>16,}{r:>9}{s:>8}{t}")


if __name__ == "__main__":
    main()
