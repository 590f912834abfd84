"""Run the gallery: verdicts, S_n traces and lambda_0(N) for each discrete model.

Writes three CSV files into the output directory:
verdicts.csv (name, kind, expected, verdict, pass, exponent),
traces.csv (name, branch, n, log_S) and lambda0.csv (name, N, lambda_0).
"""

import argparse
import csv
import math
from pathlib import Path

from discspec import gallery
from discspec.cli import examples_gallery
from discspec.criteria import classify
from discspec.oracle import lambda0_trace


def _write(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n-max", type=int, default=100_000)
    p.add_argument("--x-max", type=float, default=100.0)
    p.add_argument("--truncations", default="100,200,400,800,1600,3200")
    p.add_argument("--out-dir", default="gallery_out")
    args = p.parse_args(argv)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = examples_gallery(args.n_max, args.x_max)
    _write(out / "verdicts.csv", ["name", "kind", "expected", "verdict", "pass", "exponent"],
           [[r[k] for k in ("name", "kind", "expected", "verdict", "pass", "exponent")] for r in rows])

    traces, lam = [], []
    sizes = [int(s) for s in args.truncations.split(",")]
    for name in gallery.GALLERY:
        model = gallery.get(name)
        rep = classify(model, n_max=args.n_max)
        for branch in ("min", "max"):
            ns, ls = rep.trace(branch)
            traces += [[name, branch, int(n), float(s)] for n, s in zip(ns, ls) if math.isfinite(s)]
        lam += [[name, N, lam0] for N, lam0 in lambda0_trace(model, sizes)]
    _write(out / "traces.csv", ["name", "branch", "n", "log_S"], traces)
    _write(out / "lambda0.csv", ["name", "N", "lambda_0"], lam)

    for r in rows:
        print(f"{r['name']:<22}{r['expected']:<26}{r['verdict']:<15}{'PASS' if r['pass'] else 'FAIL'}")
    print(f"{sum(r['pass'] for r in rows)}/{len(rows)} match; CSV written to {out}/")


if __name__ == "__main__":
    main()
