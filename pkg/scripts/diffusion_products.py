"""Products along x for the (1+x)^gamma diffusion family and the drift family.

CSV columns: model, x, log_mu_head, log_nu_tail, log_min_product, log_closed_form_min.
For the power family the closed form of mu(h^2 1_(0,x)) nu_hat(h^-2 1_(x,inf))
is x (1+x)^(1-gamma)/(gamma-1); the drift family has no closed column.
"""

import argparse
import csv
import math
import sys

import numpy as np

from discspec.continuous import drift_example, halfline_products, power_family


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gammas", default="1.5,3,4")
    p.add_argument("--x-max", type=float, default=1000.0)
    p.add_argument("--points", type=int, default=40)
    p.add_argument("--output", default="-")
    args = p.parse_args(argv)

    xs = np.geomspace(1.0, args.x_max, args.points)
    out = sys.stdout if args.output == "-" else open(args.output, "w", newline="")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["model", "x", "log_mu_head", "log_nu_tail", "log_min_product", "log_closed_form_min"])
    for g in (float(s) for s in args.gammas.split(",")):
        head, tail, _, _ = halfline_products(power_family(g), xs, psi=f"{g / 10}*log(1+x)",
                                             x_max=args.x_max)
        closed = (np.log(xs) + (1 - g) * np.log1p(xs) - math.log(g - 1)) if g > 1 \
            else np.full(xs.size, math.inf)
        for x, lh, lt, c in zip(xs, head, tail, closed):
            w.writerow([f"power-{g}", repr(float(x)), repr(float(lh)), repr(float(lt)),
                        repr(float(lh + lt)), repr(float(c))])
    for alpha in (1.0, 2.0):
        x_hi = 8.0 if alpha > 1 else args.x_max
        xd = np.geomspace(0.1, x_hi, args.points)
        head, tail, _, _ = halfline_products(drift_example(alpha), xd, x_max=x_hi)
        for x, lh, lt in zip(xd, head, tail):
            w.writerow([f"drift-{alpha}", repr(float(x)), repr(float(lh)), repr(float(lt)),
                        repr(float(lh + lt)), ""])
    if out is not sys.stdout:
        out.close()


if __name__ == "__main__":
    main()
