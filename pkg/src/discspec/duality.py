"""The dual birth-death chain and the identities tying it to the original.

For a killing-free chain with rates ``(a, b)`` the dual has ``b*_i = a_{i+1}``
and ``a*_i = b_i``.  Its measures satisfy ``nu_hat_n = mu*_n / a*_0`` and
``mu_n = a*_0 nu_hat*_{n-1}``, and the generators are similar through the
upper-triangular matrix ``M_ij = mu_j`` (``j >= i``).

``M Q M^{-1}`` is the dual generator on a state space extended by a cemetery
in front: index 0 is absorbing, index ``i + 1`` carries dual state ``i``, and
dual state 0 leaks into the cemetery at rate ``a*_0 = b_0``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ModelError
from .expr import Expr
from .model import DiscreteModel, MeasureCache, Rate, require_valid
from .tails import certify_series


@dataclass
class DualPair:
    primal: DiscreteModel
    dual: DiscreteModel
    a0_star: float


def dual_model(model: DiscreteModel, n_probe: int = 1000) -> DiscreteModel:
    """``b*_i = a_{i+1}``, ``a*_i = b_i`` (``a*_0`` is kept by :func:`dual_pair`)."""
    _, _, c = model.rates(n_probe)
    if np.any(c != 0):
        raise ModelError("the dual chain is only defined without killing; remove c with the "
                         "h-transform first")
    a_rate, b_rate = model.a, model.b
    dual_b = Rate(lambda n: a_rate(np.asarray(n).astype(np.int64) + 1), label=f"{a_rate.label}[n+1]")
    dual_a = Rate(lambda n: b_rate(np.asarray(n).astype(np.int64)), label=b_rate.label)
    return DiscreteModel(a=dual_a, b=dual_b, c=Rate.constant(0.0),
                         name=f"dual({model.name})" if model.name else "dual")


def dual_pair(model: DiscreteModel, n_probe: int = 1000) -> DualPair:
    d = dual_model(model, n_probe)
    a0 = float(model.b(np.array([0]))[0])
    return DualPair(model, d, a0)


def dual_model_dict(pair: DualPair) -> dict:
    """Model-file layout of the dual chain.

    Formula rates are rewritten with ``n -> (n+1)``; tabulated or callable
    rates have no source text and come out under their labels only.
    """
    a, b = pair.primal.a, pair.primal.b
    out = {"kind": "discrete", "a0_star": pair.a0_star}
    if isinstance(a._func, Expr):
        out["b"] = re.sub(r"\bn\b", "(n+1)", a.label)
        ov_b = {str(k - 1): v for k, v in a.overrides.items() if k >= 1}
    else:
        out["b"] = f"{a.label}[n+1]"
        ov_b = {}
    out["a"] = b.label
    ov = {k: v for k, v in (("a", {str(i): x for i, x in b.overrides.items()}), ("b", ov_b)) if v}
    if ov:
        out["overrides"] = ov
    out["c"] = "0"
    out["name"] = pair.dual.name
    return out


@dataclass
class IdentityReport:
    nu_hat_vs_mu_star: float  # max |log nu_hat_n + log a*_0 - log mu*_n|
    mu_vs_nu_hat_star: float  # max |log mu_n - log a*_0 - log nu_hat*_{n-1}|
    bracket_finite: float  # max relative error, sums truncated at N
    bracket_tail: float | None  # max relative error, infinite tails (None if divergent)
    tail_mode: str  # "infinite" or "finite-range"
    mu_total_status: str
    nu_hat_star_total_status: str
    n_max: int

    @property
    def max_error(self) -> float:
        vals = [self.nu_hat_vs_mu_star, self.mu_vs_nu_hat_star, self.bracket_finite]
        if self.bracket_tail is not None:
            vals.append(self.bracket_tail)
        return max(vals)

    @property
    def totals_agree(self) -> bool:
        """``nu_hat*(E) < inf`` iff ``mu(E) < inf``, as certified numerically."""
        return self.mu_total_status == self.nu_hat_star_total_status

    def to_dict(self):
        return {"nu_hat_vs_mu_star": self.nu_hat_vs_mu_star,
                "mu_vs_nu_hat_star": self.mu_vs_nu_hat_star,
                "bracket_finite": self.bracket_finite, "bracket_tail": self.bracket_tail,
                "tail_mode": self.tail_mode, "max_error": self.max_error,
                "mu_total": self.mu_total_status, "nu_hat_star_total": self.nu_hat_star_total_status,
                "totals_agree": self.totals_agree, "n_max": self.n_max}


def _rel_from_logs(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.max(-np.expm1(-np.abs(x - y)))) if x.size else 0.0


def duality_identities_check(pair: DualPair, n_max: int, tail_factor: int = 10) -> IdentityReport:
    """Check the three measure identities on ``0..n_max`` in log space.

    Each side of ``nu_hat[0,n] mu[n+1,inf) = mu*[0,n] nu_hat*[n,inf)`` is built
    from its own chain.  The finite-range form truncates both tails at the same
    place (``mu`` at ``N``, ``nu_hat*`` at ``N-1``); the infinite form adds each
    side's own extrapolated remainder and is only evaluated when both tails are
    certified convergent.
    """
    N = tail_factor * n_max
    pc, dc = MeasureCache(pair.primal), MeasureCache(pair.dual)
    l_mu, l_nu = pc.log_mu_array(N), pc.log_nu_hat_array(N)
    l_mus, l_nus = dc.log_mu_array(N), dc.log_nu_hat_array(N)
    la0 = math.log(pair.a0_star)
    n = np.arange(n_max + 1)
    e1 = float(np.max(np.abs(l_nu[n] + la0 - l_mus[n])))
    e2 = float(np.max(np.abs(l_mu[1:n_max + 1] - la0 - l_nus[:n_max]))) if n_max else 0.0

    cum_nu = np.logaddexp.accumulate(l_nu[: n_max + 1])
    cum_mus = np.logaddexp.accumulate(l_mus[: n_max + 1])
    rev_mu = np.logaddexp.accumulate(l_mu[::-1])[::-1]  # mu[k, N]
    rev_nus = np.logaddexp.accumulate(l_nus[:N][::-1])[::-1]  # nu_hat*[k, N-1]
    lhs = cum_nu + rev_mu[n + 1]
    rhs = cum_mus + rev_nus[n]
    e_fin = _rel_from_logs(lhs, rhs)

    v_mu = certify_series(l_mu)
    v_nus = certify_series(l_nus[:N])
    e_tail = None
    mode = "finite-range"
    if v_mu.convergent and v_nus.convergent:
        lhs_t = cum_nu + np.logaddexp(rev_mu[n + 1], v_mu.log_tail)
        rhs_t = cum_mus + np.logaddexp(rev_nus[n], v_nus.log_tail)
        e_tail = _rel_from_logs(lhs_t, rhs_t)
        mode = "infinite"
    return IdentityReport(e1, e2, e_fin, e_tail, mode, v_mu.status, v_nus.status, n_max)


def generator_matrix(a, b, c=None, exit_rate: float = 0.0) -> np.ndarray:
    """Dense ``N x N`` truncation of ``Q`` with rows ``0..N-1``.

    Row ``N-1`` keeps its full diagonal ``-(a + b + c)``; ``exit_rate`` is an
    extra loss at row 0.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    N = a.size
    c = np.zeros(N) if c is None else np.asarray(c, dtype=float)
    Q = np.diag(-(a + b + c))
    Q[0, 0] -= exit_rate
    Q[np.arange(N - 1), np.arange(1, N)] = b[:-1]
    Q[np.arange(1, N), np.arange(N - 1)] = a[1:]
    return Q


def similarity_matrices(pair: DualPair, N: int):
    """``(Q, M, M^{-1}, Q*_ext)`` for the ``N``-site truncations.

    ``Q*_ext`` is the dual generator on ``N - 1`` dual sites behind a cemetery
    at index 0.
    """
    require_valid(pair.primal, N + 1)
    a, b, _ = pair.primal.rates(N)
    Q = generator_matrix(a[:N], b[:N])
    log_mu = MeasureCache(pair.primal).log_mu_array(N - 1)
    mu = np.exp(log_mu)
    M = np.triu(np.broadcast_to(mu, (N, N)))
    Minv = np.diag(1.0 / mu) - np.diag(1.0 / mu[:-1], 1)
    da, db, _ = pair.dual.rates(N)
    Qs = np.zeros((N, N))
    Qs[1:, 1:] = generator_matrix(da[: N - 1], db[: N - 1], exit_rate=pair.a0_star)
    Qs[1, 0] = pair.a0_star
    return Q, M, Minv, Qs


@dataclass
class SimilarityReport:
    interior_deviation: float
    identity_deviation: float  # max |M M^{-1} - I|
    N: int
    exact: bool = False

    def to_dict(self):
        return {"interior_deviation": self.interior_deviation,
                "identity_deviation": self.identity_deviation, "N": self.N, "exact": self.exact}


def similarity_check(pair: DualPair, N: int, exact: bool = False) -> SimilarityReport:
    """Max entry of ``M Q M^{-1} - Q*_ext`` on the leading ``(N-1) x (N-1)`` block.

    Entries are measured against the largest rate in their row or column (or
    1), since the zero entries come from cancelling products of that size.

    The last row and column carry the truncation and are excluded.  With
    ``exact=True`` (integer rates, ``N <= 50``) the products are rational.
    """
    if N > 500:
        raise ValueError("similarity_check is dense; use N <= 500")
    if exact:
        return _similarity_exact(pair, N)
    Q, M, Minv, Qs = similarity_matrices(pair, N)
    S = M @ Q @ Minv
    block = Qs[:-1, :-1]
    scale = np.maximum(np.max(np.abs(block), axis=1, keepdims=True),
                       np.max(np.abs(block), axis=0, keepdims=True))
    dev = float(np.max(np.abs(S[:-1, :-1] - block) / np.maximum(scale, 1.0)))
    ident = float(np.max(np.abs(M @ Minv - np.eye(N))))
    return SimilarityReport(dev, ident, N)


def _as_int(values) -> list[int]:
    out = []
    for v in values:
        fv = float(v)
        if not fv.is_integer():
            raise ModelError("exact similarity mode needs integer rates")
        out.append(int(fv))
    return out


def _similarity_exact(pair: DualPair, N: int) -> SimilarityReport:
    if N > 50:
        raise ValueError("exact mode is limited to N <= 50")
    a, b, _ = pair.primal.rates(N)
    a, b = _as_int(a), _as_int(b)
    mu = [Fraction(1)]
    for k in range(1, N):
        mu.append(mu[-1] * b[k - 1] / a[k])
    S = [[Fraction(0)] * N for _ in range(N)]
    # (M Q)_{ij} = sum_{k>=i} mu_k Q_kj; Q is tridiagonal
    MQ = [[Fraction(0)] * N for _ in range(N)]
    for j in range(N):
        col = {j: -(a[j] + b[j])}
        if j > 0:
            col[j - 1] = b[j - 1]
        if j + 1 < N:
            col[j + 1] = a[j + 1]
        for i in range(N):
            MQ[i][j] = sum((mu[k] * q for k, q in col.items() if k >= i), Fraction(0))
    for i in range(N):
        for j in range(N):
            val = MQ[i][j] / mu[j]
            if j > 0:
                val -= MQ[i][j - 1] / mu[j - 1]
            S[i][j] = val
    a0 = Fraction(b[0])
    bs = [Fraction(x) for x in a[1:N]]  # b*_i = a_{i+1}
    as_ = [Fraction(x) for x in b[:N]]  # a*_i = b_i
    Qs = [[Fraction(0)] * N for _ in range(N)]
    for i in range(N - 1):
        r = i + 1
        Qs[r][r] = -(as_[i] + bs[i])
        Qs[r][r - 1] = as_[i] if i > 0 else a0
        if r + 1 < N:
            Qs[r][r + 1] = bs[i]
    dev = max(abs(S[i][j] - Qs[i][j]) for i in range(N - 1) for j in range(N - 1))
    return SimilarityReport(float(dev), 0.0, N, exact=True)


@dataclass
class SpectrumReport:
    max_rel_diff: float
    zero_mode: float
    eig_primal: np.ndarray
    eig_dual: np.ndarray
    N: int

    def to_dict(self):
        return {"max_rel_diff": self.max_rel_diff, "zero_mode": self.zero_mode, "N": self.N,
                "eig_primal_low": self.eig_primal[:5].tolist(), "eig_dual_low": self.eig_dual[:5].tolist()}


def dual_dirichlet_truncation(pair: DualPair, n_sites: int):
    """Symmetrized dual on ``n_sites`` sites, losing mass at both ends.

    Site 0 keeps its exit rate ``a*_0`` and the last site its birth rate.
    """
    from .oracle import SymTridiag

    a, b, _ = pair.dual.rates(n_sites)
    diag = a[:n_sites] + b[:n_sites]
    diag[0] += pair.a0_star
    off = -np.sqrt(a[1:n_sites] * b[: n_sites - 1])
    return SymTridiag(diag, off)


def spectrum_agreement(pair: DualPair, N: int) -> SpectrumReport:
    """Compare the spectra that the similarity ties together exactly in finite size.

    With a free boundary at ``N - 1`` the primal truncation is conservative and
    ``M Q M^{-1}`` is exactly tridiagonal: the cemetery plus the dual on
    ``N - 1`` sites with exits at both ends.  Its spectrum is therefore ``{0}``
    together with the dual's.  Both sides go through the symmetric bisection
    oracle, so nothing depends on a nonsymmetric eigensolver.
    """
    from .oracle import low_eigs, truncate_symmetric

    prim = low_eigs(truncate_symmetric(pair.primal, N, "max"), N, rtol=1e-14)
    dual = low_eigs(dual_dirichlet_truncation(pair, N - 1), N - 1, rtol=1e-14)
    scale = max(1.0, float(np.max(np.abs(prim))))
    zero_mode = abs(float(prim[0])) / scale
    rel = np.abs(prim[1:] - dual) / np.maximum(np.abs(dual), 1.0)
    return SpectrumReport(float(np.max(rel)) if rel.size else 0.0, zero_mode, prim, dual, N)
