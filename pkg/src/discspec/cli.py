"""Command-line entry point: ``discspec <subcommand> [flags]``.

Exit status: 0 for any completed analysis (Inconclusive included), 2 for bad
input, 3 for a failed internal consistency check, 4 for a required iteration
that did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import continuous, gallery
from .criteria import classify
from .duality import dual_model_dict, dual_pair, duality_identities_check, similarity_check, spectrum_agreement
from .errors import ConsistencyError, ConvergenceError, DiscSpecError, ModelError
from .expr import Expr
from .harmonic import fixed_point_bounds, harmonic
from .model import DiscreteModel, load_model_file, model_from_dict
from .oracle import eig_count_growth, fd_discretize, low_eigs, truncate_symmetric
from .single_birth import LowerTriModel, poisson_solve

EXIT_OK, EXIT_INPUT, EXIT_CONSISTENCY, EXIT_CONVERGENCE = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _clean(obj):
    """Make a report JSON-safe: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def dumps_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _discrete(model) -> DiscreteModel:
    if not isinstance(model, DiscreteModel):
        raise ModelError("this subcommand needs a discrete model (kind 'discrete')")
    return model


def _load(path: str):
    return load_model_file(path)


# ---------------------------------------------------------------------------
# subcommands

def cmd_analyze(args) -> int:
    model = _discrete(_load(args.model))
    report = classify(model, n_max=args.n_max, mode=args.mode, delta=args.delta)
    if args.format == "csv":
        rows = []
        for branch in ("min", "max"):
            xs, ls = report.trace(branch)
            rows += [(branch, int(n), float(s)) for n, s in zip(xs, ls)]
        _emit(args, dumps_csv(["branch", "n", "log_S"], rows))
    else:
        out = report.to_dict()
        out["model"] = model.to_json()
        _emit(args, dumps_json(out))
    return EXIT_OK


def cmd_harmonic(args) -> int:
    model = _discrete(_load(args.model))
    n_max = args.n_max
    seq = harmonic(model, n_max)
    bound, ok, pre = fixed_point_bounds(model, max(n_max, 2))
    _, b, c = model.rates(0)
    log_q = np.where(ok, -np.log(np.where(ok, bound, 1.0)), np.nan)  # larger root factor
    # h_n >= (1 + v_0) prod_{k=1}^{n-1} q_k; valid once r_1 starts under its bound and the
    # monotonicity precondition holds for 2 <= k < n
    start_ok = n_max < 1 or bool(seq.r[1] <= bound[1] * (1 + 1e-14))
    header = ["n", "r_n", "log_h_n", "bound_b01", "bound_applicable", "bound_certified"]
    rows = [(0, float(seq.r[0]), 0.0, "", False, False)]
    run, applicable, certified = math.log1p(float(c[0]) / float(b[0])), True, start_ok
    for n in range(1, n_max + 1):
        rows.append((n, float(seq.r[n]), float(seq.log_h[n]), run if applicable else "",
                     applicable, applicable and certified))
        applicable = applicable and bool(ok[n])
        certified = certified and (n < 2 or bool(pre[n]))
        run += float(log_q[n]) if applicable else 0.0
    if args.format == "json":
        _emit(args, dumps_json({"columns": header, "rows": rows}))
    else:
        _emit(args, dumps_csv(header, rows))
    return EXIT_OK


def _lower_tri_from_file(path: str, n_max: int | None) -> LowerTriModel:
    try:
        spec = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from None
    if "q_low" in spec:
        if "q_up" not in spec:
            raise ModelError("single-birth model needs 'q_up' next to 'q_low'")
        return LowerTriModel.from_triplets(spec["q_low"], spec["q_up"], spec.get("c"))
    if n_max is None:
        raise ModelError("--n-max is required for a birth-death model")
    return LowerTriModel.from_tridiagonal(model_from_dict(spec), n_max)


def _parse_f(text: str, n: int) -> np.ndarray:
    text = text.strip()
    if text.startswith("["):
        try:
            vals = np.asarray(json.loads(text), dtype=float)
        except (json.JSONDecodeError, ValueError) as exc:
            raise ModelError(f"cannot parse f array: {exc}") from None
        if vals.size < n:
            raise ModelError(f"f has {vals.size} entries; need {n}")
        return vals[:n]
    return Expr(text, var="n")(np.arange(n, dtype=float)) * np.ones(n)


def cmd_poisson(args) -> int:
    lt = _lower_tri_from_file(args.model, args.n_max)
    n_max = lt.size - 1 if args.n_max is None else min(args.n_max, lt.size - 1)
    g = poisson_solve(lt, _parse_f(args.f, n_max), g0=args.g0, n_max=n_max)
    rows = [(n, float(v)) for n, v in enumerate(g)]
    if args.format == "json":
        _emit(args, dumps_json({"g": [v for _, v in rows]}))
    else:
        _emit(args, dumps_csv(["n", "g_n"], rows))
    return EXIT_OK


def cmd_dual(args) -> int:
    pair = dual_pair(_discrete(_load(args.model)))
    ident = duality_identities_check(pair, args.n_max)
    out = {"dual_model": dual_model_dict(pair), "a0_star": pair.a0_star,
           "identities": ident.to_dict(),
           "similarity": similarity_check(pair, args.N).to_dict(),
           "spectrum": spectrum_agreement(pair, args.N).to_dict()}
    _emit(args, dumps_json(out))
    if ident.max_error > 1e-10:
        raise ConsistencyError(f"duality identities off by {ident.max_error:.3g}")
    return EXIT_OK


def cmd_continuous(args) -> int:
    model = _load(args.model)
    if not isinstance(model, continuous.DiffusionModel):
        raise ModelError("the continuous subcommand needs a model with kind 'continuous'")
    if args.h and args.psi:
        raise ModelError("give either --h or --psi, not both")
    h_mode = args.h or ("1" if np.all(model.c(continuous.probe_grid(model)) == 0) else "picard")
    if args.psi:
        h_mode = "psi"
    out = {"model": model.to_dict(), "h": h_mode if not args.psi else f"exp({args.psi})"}
    lo = -args.x_max if model.domain == "wholeline" else max(0.0, min(model.theta, 0.0))
    if h_mode == "picard":
        sol = continuous.picard_solve(model, args.gamma0, args.gamma1, (lo, args.x_max),
                                      tol=args.tol, max_iter=args.max_iter, strict=True)
        out["picard"] = sol.to_dict()
        if sol.sign_changes():
            out["warnings"] = ["f changes sign on the grid; the criteria need a nonvanishing h"]
        h, psi = sol, None
    else:
        h, psi = None, args.psi or f"log(abs({h_mode}))"
        try:
            out["harmonic_residual"] = continuous.harmonic_residual(
                model, psi, (max(lo, 1e-3) if model.domain == "halfline" else lo, args.x_max))
        except ValueError as exc:
            out["harmonic_residual"] = f"unavailable: {exc}"
    crit = continuous.criteria_wholeline if model.domain == "wholeline" else continuous.criteria_halfline
    out["report"] = crit(model, h=h, psi=psi, x_max=args.x_max, delta=args.delta).to_dict()
    _emit(args, dumps_json(out))
    return EXIT_OK


def _parse_list(text: str, kind=int) -> list:
    try:
        return [kind(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ModelError(f"cannot parse list {text!r}") from None


def cmd_oracle(args) -> int:
    model = _load(args.model)
    Ns = _parse_list(args.truncations)
    rows, counts = [], None
    if isinstance(model, continuous.DiffusionModel):
        interval = tuple(_parse_list(args.interval, float)) if args.interval else \
            ((-args.x_max, args.x_max) if model.domain == "wholeline" else (0.0, args.x_max))
        if len(interval) != 2:
            raise ModelError("--interval needs two numbers lo,hi")
        mats = {N: fd_discretize(model, interval, N) for N in Ns}
    else:
        mats = {N: truncate_symmetric(model, N, args.boundary) for N in Ns}
        if args.Lambda is not None:
            counts = eig_count_growth(model, args.Lambda, Ns, args.boundary).to_dict()
    for N, m in mats.items():
        for k, lam in enumerate(low_eigs(m, min(args.num_eigs, N))):
            rows.append((N, k, float(lam)))
    if counts is None and args.Lambda is not None:
        from .oracle import sturm_count
        cs = [(N, int(sturm_count(m, [args.Lambda])[0])) for N, m in mats.items()]
        counts = {"counts": cs, "assessment": "stable" if len({c for _, c in cs[-2:]}) == 1 else "growing",
                  "label": "heuristic"}
    if args.format == "json":
        _emit(args, dumps_json({"eigenvalues": [list(r) for r in rows], "count_growth": counts}))
    else:
        _emit(args, dumps_csv(["N", "k", "lambda_k"], rows))
    return EXIT_OK


def examples_gallery(n_max: int = 100_000, x_max: float = 100.0) -> list[dict]:
    """Run every built-in model and compare with its expected verdict."""
    rows = []
    for name, make in gallery.GALLERY.items():
        rep = classify(make(), n_max=n_max)
        expected = gallery.EXPECTED_VERDICTS[name]
        rows.append({"name": name, "kind": "discrete", "expected": expected,
                     "verdict": rep.verdict.value, "pass": rep.verdict.value == expected,
                     "exponent": rep.fitted_exponent})
    rep = classify(gallery.power_birth(2.0), n_max=n_max)
    rows.append({"name": "power-birth-2", "kind": "discrete", "expected": "NotDiscrete|Inconclusive",
                 "verdict": rep.verdict.value,
                 "pass": rep.verdict.value in ("NotDiscrete", "Inconclusive"),
                 "exponent": rep.fitted_exponent})
    cont = [
        ("riccati-alpha-2", continuous.riccati_example(2.0), "x^2/4", "DiscreteMin", "half"),
        ("oscillator", continuous.oscillator(1.0), "x^2/2", "DiscreteMin", "whole"),
        ("power-family-3", continuous.power_family(3.0), "0.3*log(1+x)", "DiscreteMin", "half"),
        ("power-family-1.5", continuous.power_family(1.5), "0.15*log(1+x)", "NotDiscrete", "half"),
        ("drift-alpha-2", continuous.drift_example(2.0), "0", "DiscreteMin", "half"),
        ("drift-alpha-1", continuous.drift_example(1.0), "0", "NotDiscrete", "half"),
    ]
    for name, model, psi, expected, side in cont:
        crit = continuous.criteria_wholeline if side == "whole" else continuous.criteria_halfline
        rep = crit(model, psi=psi, x_max=x_max)
        rows.append({"name": name, "kind": "continuous", "expected": expected,
                     "verdict": rep.verdict.value, "pass": rep.verdict.value == expected,
                     "exponent": rep.fitted_exponent})
    return rows


def cmd_examples(args) -> int:
    rows = examples_gallery(args.n_max, args.x_max)
    if args.format == "json":
        _emit(args, dumps_json({"examples": rows}))
    else:
        lines = [f"{'name':<22}{'expected':<26}{'verdict':<15}result"]
        for r in rows:
            lines.append(f"{r['name']:<22}{r['expected']:<26}{r['verdict']:<15}"
                         f"{'PASS' if r['pass'] else 'FAIL'}")
        lines.append(f"{sum(r['pass'] for r in rows)}/{len(rows)} match")
        _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["json", "csv"], default=None)
    common.add_argument("--output", help="write to this file instead of stdout")
    common.add_argument("--seed", type=int, default=0, help="reserved; all numerics are deterministic")

    p = _Parser(prog="discspec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", parents=[common], help="three-way criterion for a birth-death model")
    a.add_argument("--model", required=True)
    a.add_argument("--mode", choices=["min", "max", "both"], default="both")
    a.add_argument("--n-max", type=int, default=100_000)
    a.add_argument("--delta", type=float, default=0.05)
    a.set_defaults(func=cmd_analyze, default_format="json")

    h = sub.add_parser("harmonic", parents=[common], help="r_n, log h_n and the product lower bound")
    h.add_argument("--model", required=True)
    h.add_argument("--n-max", type=int, default=1000)
    h.set_defaults(func=cmd_harmonic, default_format="csv")

    s = sub.add_parser("poisson", parents=[common], help="solve Omega^c g = f for a single-birth model")
    s.add_argument("--model", required=True)
    s.add_argument("--f", default="0", help="expression in n or a JSON array")
    s.add_argument("--g0", type=float, default=1.0)
    s.add_argument("--n-max", type=int, default=None)
    s.set_defaults(func=cmd_poisson, default_format="csv")

    d = sub.add_parser("dual", parents=[common], help="dual model and identity checks")
    d.add_argument("--model", required=True)
    d.add_argument("--n-max", type=int, default=10_000)
    d.add_argument("--N", type=int, default=50, help="truncation size for the matrix checks")
    d.set_defaults(func=cmd_dual, default_format="json")

    c = sub.add_parser("continuous", parents=[common], help="criteria for a one-dimensional diffusion")
    c.add_argument("--model", required=True)
    c.add_argument("--x-max", type=float, default=100.0)
    c.add_argument("--tol", type=float, default=1e-10)
    c.add_argument("--max-iter", type=int, default=500)
    c.add_argument("--gamma0", type=float, default=1.0)
    c.add_argument("--gamma1", type=float, default=0.0)
    c.add_argument("--h", default=None, help="expression in x, or 'picard'")
    c.add_argument("--psi", default=None, help="log h as an expression in x (avoids overflow of h)")
    c.add_argument("--delta", type=float, default=0.05)
    c.set_defaults(func=cmd_continuous, default_format="json")

    o = sub.add_parser("oracle", parents=[common], help="lowest eigenvalues of finite truncations")
    o.add_argument("--model", required=True)
    o.add_argument("--truncations", default="100,200,400")
    o.add_argument("--num-eigs", type=int, default=10)
    o.add_argument("--boundary", choices=["min", "max"], default="min")
    o.add_argument("--lambda", dest="Lambda", type=float, default=None)
    o.add_argument("--interval", default=None, help="lo,hi for diffusions")
    o.add_argument("--x-max", type=float, default=12.0)
    o.set_defaults(func=cmd_oracle, default_format="csv")

    e = sub.add_parser("examples", parents=[common], help="run the built-in gallery")
    e.add_argument("--all", action="store_true", help="run every model (the default)")
    e.add_argument("--n-max", type=int, default=100_000)
    e.add_argument("--x-max", type=float, default=100.0)
    e.set_defaults(func=cmd_examples, default_format="table")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = args.default_format
    try:
        return args.func(args)
    except ModelError as exc:
        print(f"discspec: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConsistencyError as exc:
        print(f"discspec: consistency check failed: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except ConvergenceError as exc:
        print(f"discspec: no convergence: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (DiscSpecError, ValueError) as exc:
        print(f"discspec: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
