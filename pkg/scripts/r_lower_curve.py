"""Compare r_n with the hand-built lower curve on the quadratic-killing chain.

Writes CSV columns n, r_n, lower_n, gap_n, statistic_n, where
lower_n = (1 + v_n/2)(1 - 3/n + 2/n^2) and
statistic_n = b_n/sqrt(a_n) - r_n^2 sqrt(a_{n+1}).
The last line on stderr reports where r_n > lower_n fails, if anywhere.
"""

import argparse
import csv
import sys

import numpy as np

from discspec import gallery
from discspec.criteria import rate_gap_statistic
from discspec.harmonic import harmonic


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-max", type=int, default=10_000)
    p.add_argument("--every", type=int, default=1, help="keep every k-th row")
    p.add_argument("--output", default="-")
    args = p.parse_args(argv)

    seq = harmonic(gallery.quadratic_killing(), args.n_max + 1)
    n = np.arange(3, args.n_max + 1)
    lower = (1 + seq.v[n] / 2) * (1 - 3 / n + 2 / n ** 2)
    gap = seq.r[n] - lower
    stat = rate_gap_statistic(seq, n)

    out = sys.stdout if args.output == "-" else open(args.output, "w", newline="")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["n", "r_n", "lower_n", "gap_n", "statistic_n"])
    for i in range(0, n.size, args.every):
        w.writerow([int(n[i]), repr(float(seq.r[n[i]])), repr(float(lower[i])), repr(float(gap[i])),
                    repr(float(stat[i]))])
    if out is not sys.stdout:
        out.close()
    bad = n[gap <= 0]
    msg = "r_n > lower_n for all n" if bad.size == 0 else f"r_n <= lower_n at {bad.size} indices, first {bad[0]}"
    print(f"{msg}; max statistic {stat.max():.6f} (n={int(n[np.argmax(stat)])})", file=sys.stderr)


if __name__ == "__main__":
    main()
