"""Numerical convergence certification, tail extrapolation and trace fitting.

None of this proves anything about limits.  Each decision carries a method
label (``ratio``, ``algebraic-fit``, ``growth``) and the numbers it was based on,
so a report can say how a verdict was reached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import special

CONVERGENT = "convergent"
DIVERGENT = "divergent"
UNKNOWN = "unknown"


@dataclass
class TailControl:
    window: int = 200
    rho_max: float = 0.999
    conv_exponent: float = -1.1
    div_exponent: float = -1.05


@dataclass
class SeriesVerdict:
    status: str
    method: str
    log_tail: float = math.nan
    exponent: float | None = None
    ratio_max: float | None = None
    n_terms: int = 0

    @property
    def convergent(self) -> bool:
        return self.status == CONVERGENT

    @property
    def divergent(self) -> bool:
        return self.status == DIVERGENT

    def to_dict(self) -> dict:
        return {k: _clean(v) for k, v in asdict(self).items()}


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


@dataclass
class LineFit:
    slope: float
    intercept: float
    stderr: float
    rms: float
    npts: int

    @property
    def ci95(self) -> tuple[float, float]:
        return (self.slope - 1.96 * self.stderr, self.slope + 1.96 * self.stderr)

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "stderr": self.stderr,
                "ci95": list(self.ci95), "rms": self.rms, "npts": self.npts}


def fit_line(x: np.ndarray, y: np.ndarray) -> LineFit:
    """Ordinary least squares ``y ~ slope * x + intercept`` with slope standard error."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n < 2:
        return LineFit(math.nan, math.nan, math.inf, math.nan, n)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    rms = float(np.sqrt(np.mean(resid ** 2)))
    stderr = float(np.sqrt(np.sum(resid ** 2) / max(n - 2, 1) / sxx)) if n > 2 else 0.0
    return LineFit(slope, float(intercept), stderr, rms, n)


def geometric_samples(n_lo: int, n_hi: int, ratio: float = 1.25) -> np.ndarray:
    """Increasing distinct integers from ``n_lo`` to ``n_hi`` spaced by ``ratio``."""
    n_lo = max(int(n_lo), 1)
    if n_hi < n_lo:
        return np.array([], dtype=int)
    k = int(math.ceil(math.log(n_hi / n_lo) / math.log(ratio))) + 1
    pts = np.unique(np.round(n_lo * ratio ** np.arange(k)).astype(np.int64))
    pts = pts[pts <= n_hi]
    if pts.size == 0 or pts[-1] != n_hi:
        pts = np.append(pts, n_hi)
    return pts


def _decade_indices(n_top: int, npts: int = 60) -> np.ndarray:
    lo = max(n_top // 10, 1)
    return np.unique(np.round(np.geomspace(lo, n_top, npts)).astype(np.int64))


_N_CORR = 3  # number of 1/k^j corrections in the algebraic tail model
_N_EXPAND = 5  # order of the 1/k expansion summed by the zeta function


def _exp_series(g: list[float], order: int) -> list[float]:
    """Coefficients of ``exp(sum_{j>=1} g[j-1] x^j)`` up to ``x^order``."""
    g = list(g) + [0.0] * max(0, order - len(g))
    e = [1.0]
    for m in range(1, order + 1):
        e.append(math.fsum(j * g[j - 1] * e[m - j] for j in range(1, m + 1)) / m)
    return e


def _algebraic_tail_log(log_t_last: float, n_last: int, exponent: float,
                        corr: tuple[float, ...] = ()) -> float:
    """log of ``sum_{k>N} t_N (k/N)^p exp(g(1/k) - g(1/N))`` with ``g(x) = sum_j corr[j-1] x^j``.

    ``exp(g(1/k))`` is expanded in powers of ``1/k`` and each power summed with
    the Hurwitz zeta function.
    """
    p = exponent
    if -p < 400:
        coeffs = _exp_series(corr, _N_EXPAND)
        zs = [float(special.zeta(j - p, n_last + 1)) for j in range(len(coeffs))]
        total = math.fsum(c * z for c, z in zip(coeffs, zs))
        g_last = math.fsum(cj / n_last ** (j + 1) for j, cj in enumerate(corr))
        if total > 0 and math.isfinite(total) and zs[0] > 0:
            return log_t_last - p * math.log(n_last) - g_last + math.log(total)
    # midpoint-rule integral of the leading power, overflow-free
    return log_t_last + math.log(n_last) + (1 + p) * math.log1p(0.5 / n_last) - math.log(-p - 1)


def fit_algebraic(n: np.ndarray, log_t: np.ndarray) -> tuple[LineFit, tuple[float, ...]]:
    """Least squares ``log t ~ p log n + c0 + sum_j beta_j / n^j``.

    Returns the leading exponent as a :class:`LineFit` (slope ``p``, with its
    standard error) and the corrections ``beta_j``.  Falls back to a plain line
    when there are too few points.
    """
    n = np.asarray(n, dtype=float)
    y = np.asarray(log_t, dtype=float)
    if n.size < 4 * (_N_CORR + 2):
        return fit_line(np.log(n), y), ()
    X = np.column_stack([np.log(n), np.ones_like(n)] + [n ** -j for j in range(1, _N_CORR + 1)])
    scale = np.max(np.abs(X), axis=0)
    Xs = X / scale
    coef, *_ = np.linalg.lstsq(Xs, y, rcond=None)
    resid = y - Xs @ coef
    coef = coef / scale
    dof = max(n.size - X.shape[1], 1)
    sigma2 = float(np.sum(resid ** 2)) / dof
    try:
        cov = sigma2 * np.linalg.pinv(Xs.T @ Xs)
        stderr = float(np.sqrt(max(cov[0, 0], 0.0))) / scale[0]
    except np.linalg.LinAlgError:  # pragma: no cover - pinv rarely fails
        stderr = math.inf
    fit = LineFit(float(coef[0]), float(coef[1]), stderr, float(np.sqrt(np.mean(resid ** 2))), n.size)
    return fit, tuple(float(b) for b in coef[2:])


def certify_series(log_terms: np.ndarray, ctl: TailControl | None = None,
                   offset: int = 0) -> SeriesVerdict:
    """Decide whether ``sum_k exp(log_terms[k])`` converges.

    ``offset`` is the index of ``log_terms[0]`` in the underlying sequence, used
    by the algebraic fit.  Convergent verdicts come with ``log_tail``, an
    estimate of the sum past the last supplied term.
    """
    ctl = ctl or TailControl()
    lt = np.asarray(log_terms, dtype=float)
    n_last = lt.size - 1
    if n_last < 20:
        return SeriesVerdict(UNKNOWN, "too-short", n_terms=lt.size)
    w = min(ctl.window, n_last // 2)
    lr = np.diff(lt[-w - 1:])
    if np.all(lr >= 0):
        return SeriesVerdict(DIVERGENT, "growth", ratio_max=float(np.exp(lr.max())), n_terms=lt.size)
    rho = float(np.exp(lr.max()))
    if rho <= ctl.rho_max:
        last = float(np.exp(lr[-1]))
        return SeriesVerdict(CONVERGENT, "ratio", log_tail=float(lt[-1] + math.log(last / (1 - last))),
                             ratio_max=rho, n_terms=lt.size)
    idx = _decade_indices(n_last)
    nn = idx + offset
    usable = nn > 0
    fit, corr = fit_algebraic(nn[usable], lt[idx[usable]])
    if fit.slope < ctl.conv_exponent:
        log_tail = _algebraic_tail_log(float(lt[-1]), n_last + offset, fit.slope, corr)
        return SeriesVerdict(CONVERGENT, "algebraic-fit", log_tail=log_tail, exponent=fit.slope,
                             ratio_max=rho, n_terms=lt.size)
    if fit.slope > ctl.div_exponent:
        return SeriesVerdict(DIVERGENT, "algebraic-fit", exponent=fit.slope, ratio_max=rho,
                             n_terms=lt.size)
    return SeriesVerdict(UNKNOWN, "algebraic-fit", exponent=fit.slope, ratio_max=rho, n_terms=lt.size)


@dataclass
class TailClass:
    """Detected asymptotic shape of a positive sequence."""

    kind: str  # "algebraic" | "exponential" | "unknown"
    rate: float = math.nan
    applies_to: str = ""
    rms: float = math.nan

    def to_dict(self):
        return {k: _clean(v) for k, v in asdict(self).items()}


def detect_tail_class(log_terms: np.ndarray, applies_to: str = "", offset: int = 0,
                      n_top: int | None = None) -> TailClass:
    """Compare log-log and log-linear fits over the last decade; keep the better.

    ``rate`` is the exponent ``alpha`` in ``n^alpha`` or ``e^{alpha n}``.
    """
    lt = np.asarray(log_terms, dtype=float)
    n_top = lt.size - 1 if n_top is None else n_top
    if n_top < 20:
        return TailClass("unknown", applies_to=applies_to)
    idx = _decade_indices(n_top)
    nn = (idx + offset).astype(float)
    alg = fit_line(np.log(nn), lt[idx])
    exp_ = fit_line(nn, lt[idx])
    spread = max(float(np.ptp(lt[idx])), 1e-300)
    if exp_.rms < alg.rms and abs(exp_.slope) * nn[-1] > 1.0:
        return TailClass("exponential", exp_.slope, applies_to, exp_.rms / spread)
    if alg.rms / spread < 1e-2:
        return TailClass("algebraic", alg.slope, applies_to, alg.rms / spread)
    return TailClass("unknown", math.nan, applies_to, min(alg.rms, exp_.rms) / spread)


@dataclass
class TraceFit:
    """Outcome of deciding whether a sampled positive trace tends to zero."""

    decision: str  # "vanishes" | "bounded-away" | "diverges" | "inconclusive"
    fit: LineFit | None = None
    last_value: float = math.nan
    window: tuple[int, int] = (0, 0)
    notes: list[str] = field(default_factory=list)

    def to_dict(self):
        return {"decision": self.decision, "fit": self.fit.to_dict() if self.fit else None,
                "last_value": _clean(self.last_value), "window": list(self.window),
                "notes": list(self.notes)}


def decide_trace(n: np.ndarray, log_s: np.ndarray, delta: float = 0.05,
                 level_floor: float = 1e-6) -> TraceFit:
    """Fit ``log S`` against ``log n`` over the last decade of samples.

    slope < -delta: the trace vanishes; |slope| <= delta with the last value
    above ``level_floor``: bounded away from 0; slope > delta: grows without
    bound.  Anything else is inconclusive.
    """
    n = np.asarray(n, dtype=float)
    log_s = np.asarray(log_s, dtype=float)
    ok = np.isfinite(log_s)
    n, log_s = n[ok], log_s[ok]
    if n.size < 3:
        return TraceFit("inconclusive", notes=["fewer than 3 finite samples"])
    top = n[-1]
    sel = n >= top / 10
    if sel.sum() < 3:
        sel = np.zeros_like(sel)
        sel[-3:] = True
    fit = fit_line(np.log(n[sel]), log_s[sel])
    last = math.exp(log_s[-1]) if log_s[-1] < 709 else math.inf
    window = (int(n[sel][0]), int(top))
    if fit.slope < -delta:
        return TraceFit("vanishes", fit, last, window)
    if fit.slope > delta:
        return TraceFit("diverges", fit, last, window)
    if last > level_floor:
        return TraceFit("bounded-away", fit, last, window)
    return TraceFit("inconclusive", fit, last, window, ["flat trace at a level below the floor"])
