"""The harmonic function of a birth-death operator with killing.

``h`` solves ``b_k (h_{k+1} - h_k) + a_k (h_{k-1} - h_k) - c_k h_k = 0`` with
``h_0 = 1``.  It is carried by the ratio sequence ``r_n = h_n / h_{n+1}``,
which obeys the one-step continued-fraction recursion
``r_n = 1 / (xi_n - u_n r_{n-1})``.

Numerically we iterate ``d_n = 1 - r_n`` instead:
``1/r_n = 1 + v_n + u_n d_{n-1}``, a sum of nonnegatives, so nothing cancels
even when ``r_n -> 1``.  ``h`` itself only ever exists as ``log h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError
from .logscalar import LogScalar
from .model import DiscreteModel, require_valid

_SLACK = 1e-13


@dataclass
class HarmonicSeq:
    n_max: int
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    u: np.ndarray
    v: np.ndarray
    xi: np.ndarray
    r: np.ndarray
    one_minus_r: np.ndarray
    log_r: np.ndarray
    log_h: np.ndarray | None = None

    def h(self, n: int) -> LogScalar:
        return LogScalar(1, float(self.log_h[n]))


def compute_r(model: DiscreteModel, n_max: int, check: bool = True) -> HarmonicSeq:
    """Fill ``r_0..r_{n_max}`` and check the upper bounds they must satisfy.

    Besides ``r_n <= 1/(1+v_n)`` we check the sharper
    ``r_n <= [1 + v_n + u_n v_{n-1}/(1+v_{n-1})]^{-1}``.
    """
    require_valid(model, n_max + 1)
    a, b, c = model.rates(n_max + 1)
    u, v = a / b, c / b
    xi = 1.0 + u + v
    w_list = [0.0] * (n_max + 1)
    u_l, v_l = u.tolist(), v.tolist()
    d = 0.0
    for k in range(n_max + 1):
        w = v_l[k] + u_l[k] * d if k else v_l[0]
        w_list[k] = w
        d = w / (1.0 + w)
    w_arr = np.asarray(w_list)
    r = 1.0 / (1.0 + w_arr)
    seq = HarmonicSeq(
        n_max=n_max, a=a, b=b, c=c, u=u, v=v, xi=xi, r=r,
        one_minus_r=w_arr / (1.0 + w_arr), log_r=-np.log1p(w_arr),
    )
    if check:
        _check_r(seq)
    return seq


def _check_r(seq: HarmonicSeq) -> None:
    r, u, v, xi = seq.r, seq.u, seq.v, seq.xi
    n = seq.n_max
    if np.any(r <= 0):
        raise ConsistencyError(f"r_n <= 0 at n={int(np.argmax(r <= 0))}")
    basic = 1.0 / (1.0 + v[: n + 1])
    if np.any(r > basic * (1 + _SLACK)):
        raise ConsistencyError(f"r_n > 1/(1+v_n) at n={int(np.argmax(r > basic * (1 + _SLACK)))}")
    if n >= 1:
        refined = 1.0 / (1.0 + v[1:n + 1] + u[1:n + 1] * v[:n] / (1.0 + v[:n]))
        bad = r[1:] > refined * (1 + _SLACK)
        if np.any(bad):
            raise ConsistencyError(f"refined bound on r_n violated at n={int(np.argmax(bad)) + 1}")


def recursion_residual(seq: HarmonicSeq) -> np.ndarray:
    """``|(xi_n - u_n r_{n-1}) r_n - 1|`` for ``n >= 1`` using the textbook form."""
    n = seq.n_max
    den = seq.xi[1:n + 1] - seq.u[1:n + 1] * seq.r[:n]
    return np.abs(den * seq.r[1:] - 1.0)


def compute_h(seq: HarmonicSeq, n_max: int | None = None) -> HarmonicSeq:
    """``log h_n = -sum_{k<n} log r_k`` for ``n = 0..n_max`` (needs ``r`` to ``n_max - 1``)."""
    n_max = seq.n_max + 1 if n_max is None else n_max
    if n_max - 1 > seq.n_max:
        raise ValueError(f"r known only to {seq.n_max}, cannot form h_{n_max}")
    log_h = np.empty(n_max + 1)
    log_h[0] = 0.0
    log_h[1:] = -np.cumsum(seq.log_r[:n_max])
    seq.log_h = log_h
    return seq


def harmonic(model: DiscreteModel, n_max: int) -> HarmonicSeq:
    """``r`` on ``0..n_max`` and ``log h`` on ``0..n_max+1``."""
    return compute_h(compute_r(model, n_max))


def h_second_order(model: DiscreteModel, n_max: int, cancel_tol: float = 1e-13):
    """Independent ``h`` from ``h_i = xi_{i-1} h_{i-1} - u_{i-1} h_{i-2}``.

    Evaluated in signed log arithmetic; only meant as a cross-check at moderate
    ``n``.  Returns ``(values, flags)`` where ``flags`` lists indices at which
    the two subtracted terms agreed to within ``cancel_tol`` (relative).
    """
    require_valid(model, n_max)
    a, b, c = model.rates(max(n_max, 1))
    u, v = (a / b).tolist(), (c / b).tolist()
    out = [LogScalar(1, 0.0), LogScalar.from_float(1.0 + v[0])]
    flags = []
    for i in range(2, n_max + 1):
        first = LogScalar.from_float(1.0 + u[i - 1] + v[i - 1]) * out[i - 1]
        second = LogScalar.from_float(u[i - 1]) * out[i - 2]
        if first.sign and second.sign == first.sign and \
                math.exp(second.log_mag - first.log_mag) > 1.0 - cancel_tol:
            flags.append(i)
        out.append(first - second)
    return out[: n_max + 1], flags


def harmonicity_residual(seq: HarmonicSeq, k_max: int | None = None) -> np.ndarray:
    """Relative residual of ``Omega^c h = 0`` at ``k = 1..k_max``.

    Scaled by ``b_k h_k``; with ``h_{k+1}/h_k = 1/r_k`` and
    ``h_{k-1}/h_k = r_{k-1}`` this never touches ``h`` itself.
    """
    k_max = seq.n_max if k_max is None else k_max
    k = np.arange(1, k_max + 1)
    up = 1.0 / seq.r[k] - 1.0
    down = seq.r[k - 1] - 1.0
    res = seq.b[k] * up + seq.a[k] * down - seq.c[k]
    scale = seq.b[k] * np.abs(up) + seq.a[k] * np.abs(down) + seq.c[k]
    return np.abs(res) / np.maximum(scale, np.finfo(float).tiny)


@dataclass
class FixedPointBound:
    value: float
    applicable: bool
    precondition: bool


def _root_factor(xi: np.ndarray, u: np.ndarray):
    """``(xi + sqrt(xi^2 - 4u))/2`` and applicability mask."""
    disc = xi * xi - 4.0 * u
    ok = disc >= 0
    s = np.sqrt(np.where(ok, disc, 0.0))
    return 0.5 * (xi + s), ok


def fixed_point_bounds(model: DiscreteModel, n_max: int):
    """Vectorized fixed-point bound ``(xi - sqrt(xi^2-4u))/(2u)`` on ``1..n_max``.

    Returns ``(bound, applicable, precondition)`` arrays indexed from 0 (entry 0
    unused).  The precondition at ``n`` is the monotonicity requirement
    ``u_n(xi_{n-1} - s_{n-1}) <= u_{n-1}(xi_n - s_n)``; since
    ``xi - s = 4u/(xi + s)`` it reduces to ``q_n <= q_{n-1}`` for the larger root
    factor ``q``.
    """
    a, b, c = model.rates(n_max)
    u, v = a / b, c / b
    xi = 1.0 + u + v
    q, ok = _root_factor(xi, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(ok, 1.0 / q, np.nan)
    pre = np.zeros(n_max + 1, dtype=bool)
    if n_max >= 2:
        pre[2:] = ok[2:] & ok[1:-1] & (q[2:] <= q[1:-1] * (1 + 1e-14))
    return bound, ok, pre


def r_fixed_point_bound(model: DiscreteModel, n: int) -> FixedPointBound:
    """Upper bound on ``r_n`` from the fixed point of ``x = 1/(xi_n - u_n x)``."""
    bound, ok, pre = fixed_point_bounds(model, max(n, 1))
    return FixedPointBound(float(bound[n]), bool(ok[n]), bool(pre[n]) if n >= 2 else False)


@dataclass
class LowerBound:
    log_value: float
    applicable: bool
    bound_certified: bool

    @property
    def value(self) -> LogScalar:
        return LogScalar(1, self.log_value)


def h_lower_bound(model: DiscreteModel, n: int, seq: HarmonicSeq | None = None,
                  tol: float = 1e-9) -> LowerBound:
    """``h_n >= (1+v_0) prod_{k=1}^{n-1} (xi_k + sqrt(xi_k^2 - 4u_k))/2``.

    The product is a valid lower bound whenever ``r_k`` stays under its fixed
    point bound for ``1 <= k < n``.  We check that via the monotonicity
    precondition for ``2 <= k < n`` together with the start ``r_1 <= bound_1``,
    and when both hold assert the inequality against the computed ``h``.
    """
    top = max(n, 2)
    bound, ok, pre = fixed_point_bounds(model, top)
    a, b, c = model.rates(top)
    v0 = c[0] / b[0]
    q, _ = _root_factor(1.0 + a / b + c / b, a / b)
    applicable = bool(np.all(ok[1:n]))
    if not applicable:
        return LowerBound(math.nan, False, False)
    log_bound = math.log1p(v0) + float(np.sum(np.log(q[1:n])))
    if seq is None:
        seq = harmonic(model, n)
    certified = bool(np.all(pre[2:n])) and (n <= 1 or seq.r[1] <= bound[1] * (1 + 1e-14))
    if certified and seq.log_h[n] < log_bound - tol * max(1.0, abs(log_bound)):
        raise ConsistencyError(f"h_{n} below its fixed-point lower bound although its conditions hold")
    return LowerBound(log_bound, True, certified)
