"""Discrete-spectrum criteria for birth-death operators with killing.

With ``A_n = sum_{j<=n} mu_j h_j^2`` and the terms
``t_k = 1/(h_k h_{k+1} mu_k b_k)``:

* if ``sum t_k < inf``, the minimal operator has discrete spectrum iff
  ``A_n * sum_{k>=n} t_k -> 0``;
* if ``sum mu_j h_j^2 < inf``, the maximal operator has discrete spectrum iff
  ``sum_{j>=n+1} mu_j h_j^2 * sum_{k<=n} t_k -> 0``;
* if both sums diverge, neither is discrete.

Everything runs in log space.  Infinite tails are the finite sum plus an
extrapolated remainder from :mod:`discspec.tails`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .harmonic import HarmonicSeq, harmonic
from .logscalar import LogScalar, cumulative_log_sum, reverse_cumulative_log_sum
from .model import DiscreteModel, MeasureCache
from .tails import (
    SeriesVerdict, TailClass, TailControl, TraceFit, certify_series, decide_trace,
    detect_tail_class, geometric_samples,
)


class Verdict(str, Enum):
    DISCRETE_MIN = "DiscreteMin"
    DISCRETE_MAX = "DiscreteMax"
    BOTH_DISCRETE = "BothDiscrete"
    NOT_DISCRETE = "NotDiscrete"
    INCONCLUSIVE = "Inconclusive"


class SeriesData:
    """Log-space terms and partial sums of both series for one model, up to ``N``."""

    def __init__(self, model: DiscreteModel, seq: HarmonicSeq, ctl: TailControl | None = None):
        self.model = model
        self.seq = seq
        self.ctl = ctl or TailControl()
        n = seq.n_max
        self.N = n
        cache = MeasureCache(model)
        self.log_mu = cache.log_mu_array(n + 1)
        self.log_b = cache.log_b_array(n + 1)
        lh = seq.log_h
        self.log_a_terms = self.log_mu[: n + 1] + 2.0 * lh[: n + 1]
        self.log_b_terms = -(lh[: n + 1] + lh[1: n + 2] + self.log_mu[: n + 1] + self.log_b[: n + 1])
        self.cum_a = cumulative_log_sum(self.log_a_terms)
        self.cum_b = cumulative_log_sum(self.log_b_terms)
        self.a_verdict = certify_series(self.log_a_terms, self.ctl)
        self.b_verdict = certify_series(self.log_b_terms, self.ctl)
        self._rev_a = reverse_cumulative_log_sum(self.log_a_terms)
        self._rev_b = reverse_cumulative_log_sum(self.log_b_terms)

    @classmethod
    def build(cls, model: DiscreteModel, n_max: int, ctl: TailControl | None = None) -> "SeriesData":
        return cls(model, harmonic(model, n_max), ctl)

    def log_A(self, n: int) -> float:
        return float(self.cum_a[n])

    def log_B(self, n: int) -> float:
        """``log sum_{k>=n} t_k`` including the extrapolated remainder (nan if not convergent)."""
        if not self.b_verdict.convergent:
            return math.nan
        return float(np.logaddexp(self._rev_b[n], self.b_verdict.log_tail))

    def log_A_tail(self, n: int) -> float:
        """``log sum_{j>=n} mu_j h_j^2`` (nan if not convergent)."""
        if not self.a_verdict.convergent:
            return math.nan
        if n > self.N:
            return self.a_verdict.log_tail
        return float(np.logaddexp(self._rev_a[n], self.a_verdict.log_tail))

    def log_C(self, n: int) -> float:
        return float(self.cum_b[n])


def _data(model: DiscreteModel, seq: HarmonicSeq, ctl: TailControl | None = None) -> SeriesData:
    cached = getattr(seq, "_series_data", None)
    if cached is None or cached.model is not model or (ctl is not None and cached.ctl != ctl):
        cached = SeriesData(model, seq, ctl)
        seq._series_data = cached
    return cached


def series_A(model: DiscreteModel, seq: HarmonicSeq, n: int) -> LogScalar:
    """``A_n = sum_{i=0}^n mu_i h_i^2``."""
    return LogScalar(1, _data(model, seq).log_A(n))


def series_B(model: DiscreteModel, seq: HarmonicSeq, n: int,
             tail_ctrl: TailControl | None = None) -> tuple[LogScalar | None, SeriesVerdict]:
    """``B_n = sum_{k>=n} 1/(h_k h_{k+1} mu_k b_k)`` when certified convergent.

    Returns ``(None, verdict)`` if the series is divergent or undecided.
    """
    data = _data(model, seq, tail_ctrl)
    if not data.b_verdict.convergent:
        return None, data.b_verdict
    return LogScalar(1, data.log_B(n)), data.b_verdict


def product_min(model: DiscreteModel, seq: HarmonicSeq, n: int) -> LogScalar:
    """``A_n * B_n``; the inner sum starts at ``k = n``."""
    data = _data(model, seq)
    if not data.b_verdict.convergent:
        raise ValueError(f"tail series is {data.b_verdict.status}; product_min undefined")
    return LogScalar(1, data.log_A(n) + data.log_B(n))


def product_max(model: DiscreteModel, seq: HarmonicSeq, n: int) -> LogScalar:
    """``(sum_{j>=n+1} mu_j h_j^2) * (sum_{k<=n} t_k)``."""
    data = _data(model, seq)
    if not data.a_verdict.convergent:
        raise ValueError(f"mu h^2 series is {data.a_verdict.status}; product_max undefined")
    return LogScalar(1, data.log_A_tail(n + 1) + data.log_C(n))


def _log_trace_min(data: SeriesData, ns: np.ndarray) -> np.ndarray:
    return np.array([data.log_A(int(n)) + data.log_B(int(n)) for n in ns])


def _log_trace_max(data: SeriesData, ns: np.ndarray) -> np.ndarray:
    return np.array([data.log_A_tail(int(n) + 1) + data.log_C(int(n)) for n in ns])


def tail_classes(data: SeriesData) -> tuple[TailClass, TailClass]:
    """Tail shapes of ``mu h^2`` and of ``mu b h h_+`` (the reciprocal terms)."""
    return (detect_tail_class(data.log_a_terms, "mu h^2"),
            detect_tail_class(-data.log_b_terms, "mu b h h+"))


def tail_shortcut(model: DiscreteModel, seq: HarmonicSeq, n: int, branch: str = "min",
                  tails: tuple[TailClass, TailClass] | None = None,
                  refined: bool = False) -> float:
    """Closed-form stand-in for the criterion product once the tail shape is known.

    Algebraic tails: ``n^2 r_n / b_n`` (min) and ``n^2 / (a_{n+1} r_n)`` (max).
    Exponential tails: ``r_n / b_n`` and ``1 / (a_{n+1} r_n)``.

    The shortcut needs the outer sum to diverge and the inner one to converge,
    i.e. ``alpha > -1`` and ``beta > 1`` for the algebraic min branch (mirrored
    for max); other exponents raise ``ValueError``.

    These are equivalences up to a constant.  With ``refined=True`` the constant
    implied by the fitted exponents is applied: ``1/((alpha+1)(beta-1))`` in
    the algebraic case and ``1/((1-e^{-alpha})(1-e^{-beta}))`` in the
    exponential one (signs flipped for the max branch).
    """
    data = _data(model, seq)
    ta, tb = tails or tail_classes(data)
    if ta.kind != tb.kind or ta.kind == "unknown":
        raise ValueError(f"no common tail class (mu h^2: {ta.kind}, mu b h h+: {tb.kind})")
    r_n = float(seq.r[n])
    a_next = float(seq.a[n + 1])
    b_n = float(seq.b[n])
    alpha, beta = ta.rate, tb.rate
    if ta.kind == "algebraic":
        if branch == "min":
            value = n * n * r_n / b_n
            const = _safe_inverse((alpha + 1.0) * (beta - 1.0))
        else:
            value = n * n / (a_next * r_n)
            const = _safe_inverse((-alpha - 1.0) * (1.0 - beta))
    else:
        if branch == "min":
            value = r_n / b_n
            const = _safe_inverse(math.expm1(-alpha) * math.expm1(-beta))
        else:
            value = 1.0 / (a_next * r_n)
            const = _safe_inverse(math.expm1(alpha) * math.expm1(beta))
    if not (const > 0 and math.isfinite(const)):
        raise ValueError(f"fitted exponents ({alpha:.3g}, {beta:.3g}) fall outside the range "
                         f"where the {branch} shortcut applies")
    if refined:
        value *= const
    return value


def _safe_inverse(x: float) -> float:
    return 1.0 / x if x != 0 else math.inf


@dataclass
class StolzBound:
    lower: float
    upper: float
    n0: int


def stolz_limit(p, q, mode: str = "increasing", n0: int = 0) -> StolzBound:
    """Bracket ``lim p_n/q_n`` by the extreme difference ratios on ``n >= n0``.

    ``mode="increasing"`` expects ``q`` strictly increasing (to infinity);
    ``mode="decreasing"`` expects ``q`` strictly decreasing (to zero).
    """
    p = np.asarray(p, dtype=float)[n0:]
    q = np.asarray(q, dtype=float)[n0:]
    dq = np.diff(q)
    bad = dq <= 0 if mode == "increasing" else dq >= 0
    if mode not in ("increasing", "decreasing"):
        raise ValueError(f"mode must be 'increasing' or 'decreasing', got {mode!r}")
    if np.any(bad):
        first = int(np.argmax(bad)) + n0
        raise ValueError(f"q is not strictly {mode} at n={first}")
    ratios = np.diff(p) / dq
    return StolzBound(float(ratios.min()), float(ratios.max()), n0)


def difference_ratio_terms(model: DiscreteModel, seq: HarmonicSeq, n: int) -> tuple[float, float]:
    """Both sides (as logs) of the difference-ratio identity behind the tail test.

    ``(A_{n+1}-A_n)/(1/B_{n+1} - 1/B_n)`` equals
    ``(h_{n+1}^2 mu_{n+1} sqrt(a_{n+1}) B_{n+1})^2 r_n + h_{n+1}^2 mu_{n+1} B_{n+1}``.
    """
    d = _data(model, seq)
    lB0, lB1 = d.log_B(n), d.log_B(n + 1)
    l_term_a = d.log_a_terms[n + 1]
    # 1/B_{n+1} - 1/B_n = (B_n - B_{n+1})/(B_n B_{n+1}) = t_n/(B_n B_{n+1})
    lhs = l_term_a + lB0 + lB1 - d.log_b_terms[n]
    la1 = math.log(seq.a[n + 1])
    x = l_term_a + 0.5 * la1 + lB1
    rhs = float(np.logaddexp(2 * x + math.log(seq.r[n]), l_term_a + lB1))
    return float(lhs), rhs


@dataclass
class BranchResult:
    branch: str
    applicable: bool
    decision: str  # "discrete" | "not-discrete" | "inconclusive" | "not-evaluated"
    reason: str = ""
    trace: list[tuple[int, float]] = field(default_factory=list)
    fit: TraceFit | None = None

    def to_dict(self):
        return {"branch": self.branch, "applicable": self.applicable, "decision": self.decision,
                "reason": self.reason,
                "trace": [[n if isinstance(n, int) else float(n), _log_to_float(s)]
                          for n, s in self.trace],
                "fit": self.fit.to_dict() if self.fit else None}


def _log_to_float(log_s: float):
    if not math.isfinite(log_s):
        return None
    return math.exp(log_s) if log_s < 700 else f"exp({log_s:.6g})"


@dataclass
class CriterionReport:
    verdict: Verdict
    branch: str
    min_result: BranchResult | None
    max_result: BranchResult | None
    series_flags: dict
    fitted_exponent: float | None = None
    confidence: tuple[float, float] | None = None
    shortcut_check: dict = field(default_factory=dict)
    n_max: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "branch": self.branch,
            "n_max": self.n_max,
            "fitted_exponent": self.fitted_exponent,
            "confidence_interval": list(self.confidence) if self.confidence else None,
            "series_flags": self.series_flags,
            "min": self.min_result.to_dict() if self.min_result else None,
            "max": self.max_result.to_dict() if self.max_result else None,
            "tail_shortcut_check": self.shortcut_check,
            "notes": list(self.notes),
        }

    def trace(self, branch: str = "min") -> tuple[np.ndarray, np.ndarray]:
        res = self.min_result if branch == "min" else self.max_result
        if res is None or not res.trace:
            return np.array([]), np.array([])
        ns, ls = zip(*res.trace)
        return np.asarray(ns), np.asarray(ls)


def _branch_from_fit(name: str, ns, log_s, delta: float, level_floor: float) -> BranchResult:
    fit = decide_trace(ns, log_s, delta, level_floor)
    decision = {"vanishes": "discrete", "bounded-away": "not-discrete",
                "diverges": "not-discrete"}.get(fit.decision, "inconclusive")
    return BranchResult(name, True, decision, f"trace {fit.decision}",
                        list(zip(ns.tolist(), log_s.tolist())), fit)


def classify(model: DiscreteModel, n_max: int = 100_000, mode: str = "both",
             delta: float = 0.05, level_floor: float = 1e-6, sample_ratio: float = 1.25,
             ctl: TailControl | None = None, data: SeriesData | None = None) -> CriterionReport:
    """Three-way criterion with numerical evidence.

    ``mode`` selects the minimal domain (``"min"``), the maximal domain
    (``"max"``) or both.  A branch whose tail series is certified divergent is
    reported not discrete for that domain, since its product is infinite.
    """
    if mode not in ("min", "max", "both"):
        raise ValueError(f"mode must be min, max or both; got {mode!r}")
    data = data or SeriesData.build(model, n_max, ctl)
    n_max = data.N
    flags = {"mu_h2": data.a_verdict.to_dict(), "inv_mu_b_h_h": data.b_verdict.to_dict()}
    ns = geometric_samples(1, n_max - 1, sample_ratio)
    report = CriterionReport(Verdict.INCONCLUSIVE, "", None, None, flags, n_max=n_max)

    if data.a_verdict.divergent and data.b_verdict.divergent:
        report.verdict = Verdict.NOT_DISCRETE
        report.branch = "part-3"
        report.notes.append("both series diverge; min and max spectra coincide and are not discrete")
        return report

    if mode in ("min", "both"):
        if data.b_verdict.convergent:
            report.min_result = _branch_from_fit("min", ns, _log_trace_min(data, ns), delta, level_floor)
        elif data.b_verdict.divergent:
            report.min_result = BranchResult("min", False, "not-discrete",
                                             "sum of 1/(h h+ mu b) diverges: product is infinite")
        else:
            report.min_result = BranchResult("min", False, "inconclusive",
                                             "convergence of sum 1/(h h+ mu b) undecided")
    if mode in ("max", "both"):
        if data.a_verdict.convergent:
            report.max_result = _branch_from_fit("max", ns, _log_trace_max(data, ns), delta, level_floor)
        elif data.a_verdict.divergent:
            report.max_result = BranchResult("max", False, "not-discrete",
                                             "sum of mu h^2 diverges: product is infinite")
        else:
            report.max_result = BranchResult("max", False, "inconclusive",
                                             "convergence of sum mu h^2 undecided")

    mn, mx = report.min_result, report.max_result
    dmin = mn.decision if mn else "not-evaluated"
    dmax = mx.decision if mx else "not-evaluated"
    if dmin == "discrete" and dmax == "discrete":
        report.verdict, report.branch = Verdict.BOTH_DISCRETE, "parts-1-and-2"
    elif dmin == "discrete":
        report.verdict, report.branch = Verdict.DISCRETE_MIN, "part-1"
    elif dmax == "discrete":
        report.verdict, report.branch = Verdict.DISCRETE_MAX, "part-2"
    elif "not-discrete" in (dmin, dmax) and "inconclusive" not in (dmin, dmax):
        report.verdict = Verdict.NOT_DISCRETE
        report.branch = "part-1" if (mn and mn.applicable) else ("part-2" if (mx and mx.applicable) else "tails")
    else:
        report.verdict = Verdict.INCONCLUSIVE
        report.branch = "undecided"

    primary = mn if (mn and mn.fit) else mx
    if primary is not None and primary.fit is not None and primary.fit.fit is not None:
        report.fitted_exponent = primary.fit.fit.slope
        report.confidence = primary.fit.fit.ci95
    report.shortcut_check = _shortcut_check(model, data, n_max)
    return report


def _shortcut_check(model: DiscreteModel, data: SeriesData, n_max: int) -> dict:
    """Sparse comparison of the tail shortcut against the direct product."""
    try:
        ta, tb = tail_classes(data)
    except Exception:  # pragma: no cover - defensive
        return {}
    out = {"mu_h2_tail": ta.to_dict(), "mu_b_h_h_tail": tb.to_dict(), "points": []}
    if ta.kind != tb.kind or ta.kind == "unknown":
        out["status"] = "no common tail class"
        return out
    for n in sorted({max(n_max // 100, 10), max(n_max // 10, 10)}):
        if n >= n_max:
            continue
        for branch, ok in (("min", data.b_verdict.convergent), ("max", data.a_verdict.convergent)):
            if not ok:
                continue
            direct = (data.log_A(n) + data.log_B(n)) if branch == "min" else \
                (data.log_A_tail(n + 1) + data.log_C(n))
            try:
                plain = tail_shortcut(model, data.seq, n, branch, (ta, tb))
            except ValueError as exc:
                out["points"].append({"n": n, "branch": branch, "error": str(exc)})
                continue
            point = {"n": n, "branch": branch,
                     "ratio_direct_to_shortcut": math.exp(direct - math.log(plain))}
            try:
                refined = tail_shortcut(model, data.seq, n, branch, (ta, tb), refined=True)
                point["ratio_direct_to_refined"] = math.exp(direct - math.log(refined))
            except ValueError as exc:
                point["refined_error"] = str(exc)
            out["points"].append(point)
    out["status"] = "ok"
    return out


@dataclass
class TestOutcome:
    name: str
    status: str  # "empty" | "nonempty" | "precondition unmet" | "inconclusive"
    evidence: dict = field(default_factory=dict)

    def to_dict(self):
        return {"name": self.name, "status": self.status, "evidence": self.evidence}


def rate_gap_statistic(seq: HarmonicSeq, n: np.ndarray) -> np.ndarray:
    """``b_n / sqrt(a_n) - r_n^2 sqrt(a_{n+1})``."""
    n = np.asarray(n)
    return seq.b[n] / np.sqrt(seq.a[n]) - seq.r[n] ** 2 * np.sqrt(seq.a[n + 1])


def sufficient_tests(model: DiscreteModel, seq: HarmonicSeq, delta: float = 0.05,
                     sample_ratio: float = 1.25) -> list[TestOutcome]:
    """The sufficient conditions that avoid evaluating the full product.

    (i)   B = inf and A -> inf: essential spectrum nonempty.
    (ii)  B < inf, inf a_n > 0 and h^2 mu sqrt(a) B -> 0: empty.
    (iii) liminf h^2 mu B > 0, or liminf h^2 mu sqrt(a) B > 0 with inf r > 0: nonempty.
    (iv)  ratio test on b_n/sqrt(a_n) - r_n^2 sqrt(a_{n+1}) under
          r_n < (b_n/(u_n a_{n+1}))^{1/4} and h^2 mu sqrt(a) -> inf.
    """
    data = _data(model, seq)
    N = data.N
    ns = geometric_samples(1, N - 1, sample_ratio)
    ns_tail = ns[ns >= N // 10]
    out: list[TestOutcome] = []

    a_div, b_div = data.a_verdict.divergent, data.b_verdict.divergent
    if b_div and a_div:
        out.append(TestOutcome("i", "nonempty", {"A": "divergent", "B": "divergent"}))
    else:
        out.append(TestOutcome("i", "precondition unmet",
                               {"A": data.a_verdict.status, "B": data.b_verdict.status}))

    a_tail = seq.a[ns_tail]
    a_bounded_below = bool(np.min(a_tail) > 0) and \
        decide_trace(ns_tail, np.log(a_tail), delta).decision != "vanishes"
    r_fit = decide_trace(ns, np.log(seq.r[ns]), delta, level_floor=1e-12)
    r_bounded_below = r_fit.decision != "vanishes" and float(np.min(seq.r[ns_tail])) > 0
    log_h = seq.log_h
    log_hmu = 2 * log_h[ns] + data.log_mu[ns]

    if data.b_verdict.convergent:
        log_B = np.array([data.log_B(int(n)) for n in ns])
        log_T = log_hmu + 0.5 * np.log(seq.a[ns]) + log_B
        t_fit = decide_trace(ns, log_T, delta)
        status = "empty" if (a_bounded_below and t_fit.decision == "vanishes") else \
            ("precondition unmet" if not a_bounded_below else "inconclusive")
        out.append(TestOutcome("ii", status, {"h2_mu_sqrta_B": t_fit.to_dict(),
                                              "inf_a_positive": a_bounded_below}))
        hb_fit = decide_trace(ns, log_hmu + log_B, delta)
        liminf_hb = hb_fit.decision in ("bounded-away", "diverges")
        liminf_t = t_fit.decision in ("bounded-away", "diverges")
        nonempty = liminf_hb or (liminf_t and r_bounded_below)
        out.append(TestOutcome("iii", "nonempty" if nonempty else "inconclusive",
                               {"h2_mu_B": hb_fit.to_dict(), "h2_mu_sqrta_B": t_fit.to_dict(),
                                "inf_r_positive": r_bounded_below}))
    else:
        out.append(TestOutcome("ii", "precondition unmet", {"B": data.b_verdict.status}))
        out.append(TestOutcome("iii", "precondition unmet", {"B": data.b_verdict.status}))

    stat = rate_gap_statistic(seq, ns)
    thresh = (seq.b[ns] / (seq.u[ns] * seq.a[ns + 1])) ** 0.25
    pre_r = bool(np.all(seq.r[ns_tail] < thresh[ns >= N // 10]))
    grow = decide_trace(ns, log_hmu + 0.5 * np.log(seq.a[ns]), delta)
    pre_h = grow.decision == "diverges"
    evidence = {"r_below_quarter_root": pre_r, "h2_mu_sqrta_to_inf": pre_h,
                "statistic_samples": [[int(n), float(s)] for n, s in zip(ns, stat)]}
    if not (pre_r and pre_h):
        out.append(TestOutcome("iv", "precondition unmet", evidence))
    else:
        tail_stat = stat[ns >= N // 10]
        if np.all(tail_stat > 0):
            s_fit = decide_trace(ns[ns >= N // 10], np.log(tail_stat), delta)
            evidence["statistic_fit"] = s_fit.to_dict()
            to_inf = s_fit.decision == "diverges"
        else:
            to_inf = False
        if to_inf:
            out.append(TestOutcome("iv", "empty", evidence))
        elif r_bounded_below:
            out.append(TestOutcome("iv", "nonempty", evidence))
        else:
            out.append(TestOutcome("iv", "inconclusive", evidence))
    return out
