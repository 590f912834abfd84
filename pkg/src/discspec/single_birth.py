"""Single-birth (lower-triangular) generators and their Poisson equation.

Row ``i`` of the generator jumps up only to ``i+1`` (rate ``q_{i,i+1} > 0``)
and down to any ``j < i`` (rate ``q_{ij} >= 0``); ``c_i`` is a killing rate of
either sign:

    Omega^c f(i) = sum_{j<i} q_ij (f_j - f_i) + q_{i,i+1} (f_{i+1} - f_i) - c_i f_i.

Everything here is plain double precision.  Overflow is detected and
reported, never rescaled away.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConsistencyError, ModelError
from .model import DiscreteModel


@dataclass
class LowerTriModel:
    """``q_up[i] = q_{i,i+1}``, strictly lower ``q_low`` (CSC) and signed ``c``, rows ``0..size-1``."""

    q_up: np.ndarray
    q_low: sparse.csc_matrix
    c: np.ndarray

    def __post_init__(self):
        self.q_up = np.asarray(self.q_up, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        n = self.q_up.size
        q = sparse.csc_matrix(self.q_low, dtype=float)
        if q.shape != (n, n):
            raise ModelError(f"q_low has shape {q.shape}, expected {(n, n)}")
        if self.c.size != n:
            raise ModelError(f"c has length {self.c.size}, expected {n}")
        q = sparse.tril(q, k=-1, format="csc")
        q.eliminate_zeros()
        self.q_low = q
        if np.any(~(self.q_up > 0)):
            raise ModelError(f"q_{{i,i+1}} must be > 0; fails at i={int(np.argmax(~(self.q_up > 0)))}")
        if q.nnz and (np.any(q.data < 0) or not np.all(np.isfinite(q.data))):
            raise ModelError("q_ij must be finite and >= 0 below the diagonal")
        if not np.all(np.isfinite(self.c)):
            raise ModelError("c must be finite")

    @property
    def size(self) -> int:
        return self.q_up.size

    @classmethod
    def from_dense(cls, q_low, q_up, c=None) -> "LowerTriModel":
        q_up = np.asarray(q_up, dtype=float)
        c = np.zeros_like(q_up) if c is None else c
        return cls(q_up, sparse.csc_matrix(np.tril(np.asarray(q_low, dtype=float), -1)), c)

    @classmethod
    def from_triplets(cls, triplets, q_up, c=None) -> "LowerTriModel":
        """``triplets`` is an iterable of ``(i, j, q_ij)`` with ``j < i``."""
        q_up = np.asarray(q_up, dtype=float)
        n = q_up.size
        trip = list(triplets)
        for i, j, _ in trip:
            if not (0 <= int(j) < int(i) < n):
                raise ModelError(f"q_low entry ({i}, {j}) is not strictly below the diagonal "
                                 f"of a {n}x{n} model")
        rows = [int(t[0]) for t in trip]
        cols = [int(t[1]) for t in trip]
        vals = [float(t[2]) for t in trip]
        q = sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
        return cls(q_up, q, np.zeros(n) if c is None else c)

    @classmethod
    def from_tridiagonal(cls, model: DiscreteModel, n_max: int) -> "LowerTriModel":
        """Rows ``0..n_max`` of a birth-death model with killing."""
        a, b, c = model.rates(n_max)
        n = n_max + 1
        q = sparse.csc_matrix((a[1:], (np.arange(1, n), np.arange(0, n - 1))), shape=(n, n))
        return cls(b, q, c)

    def diag(self) -> np.ndarray:
        """Diagonal of the generator: ``-(q_{i,i+1} + sum_{j<i} q_ij + c_i)``."""
        row_tot = np.asarray(self.q_low.sum(axis=1)).ravel()
        return -(self.q_up + row_tot + self.c)

    def apply(self, g: np.ndarray) -> np.ndarray:
        """``Omega^c g`` on rows ``0..len(g)-2``."""
        g = np.asarray(g, dtype=float)
        m = g.size - 1
        q = self.q_low[:m, :m]
        down = q @ g[:m] - np.asarray(q.sum(axis=1)).ravel() * g[:m]
        return down + self.q_up[:m] * (g[1:] - g[:m]) - self.c[:m] * g[:m]


def tilde_q(model: LowerTriModel, n: int, k: int) -> float:
    """``sum_{j<=k} q_nj + c_n`` for ``0 <= k < n``."""
    if not (0 <= k < n < model.size):
        raise IndexError(f"tilde_q needs 0 <= k < n < {model.size}; got n={n}, k={k}")
    row = model.q_low[n, : k + 1]
    return float(row.sum()) + float(model.c[n])


def f_tilde_direct(model: LowerTriModel, n: int, i: int) -> float:
    """Reference ``F~_n^{(i)}`` by its defining recursion, ``O((n-i)^2)``."""
    if not (0 <= i <= n):
        raise IndexError(f"need n >= i >= 0; got n={n}, i={i}")
    if n >= model.size:
        raise IndexError(f"row {n} outside model of size {model.size}")
    dense = model.q_low[i: n + 1, : n + 1].toarray()
    cum = np.cumsum(dense, axis=1)  # cum[s, k] = sum_{j<=k} q_{i+s, j}
    F = np.empty(n - i + 1)
    F[0] = 1.0
    for s in range(1, n - i + 1):
        row = i + s
        qt = cum[s, i:row] + model.c[row]
        F[s] = float(qt @ F[:s]) / model.q_up[row]
    return float(F[-1])


@dataclass
class GTable:
    """Columns ``G_{l,k}`` (``l >= k``) for one base index, plus the diagonal.

    ``diag[m] = G_{m,m}`` with ``diag[0] = 1``.  ``columns[k-1]`` holds
    ``G_{l,k}`` for ``l = k..m_max`` when columns were kept.
    """

    base: int
    m_max: int
    diag: np.ndarray
    columns: list[np.ndarray] = field(default_factory=list)
    overflow: bool = False

    def G(self, l: int, k: int) -> float:
        if k == 0 and l == 0:
            return 1.0
        if not self.columns:
            raise ValueError("columns were not kept")
        return float(self.columns[k - 1][l - k])


def _u_column(model: LowerTriModel, cum_col: np.ndarray, j: int, rows: np.ndarray) -> np.ndarray:
    """``u^{(j)}_{n-j} = (sum_{t<=j} q_{n t} + c_n)/q_{n,n+1}`` for the absolute rows ``n``."""
    return (cum_col[rows] + model.c[rows]) / model.q_up[rows]


def g_table(model: LowerTriModel, i: int, m_max: int, keep_columns: bool = False) -> GTable:
    """Build ``G^{(i)}`` column by column, each from the previous one only.

    Column ``k`` needs ``u^{(i+k-1)}_{l-k+1}``, whose numerator is the
    partial row sum of row ``i+l`` up to column ``i+k-1``; those partial sums
    are carried along as one running column.
    """
    if i + m_max >= model.size:
        raise IndexError(f"g_table needs rows up to {i + m_max}; model has {model.size}")
    diag = np.empty(m_max + 1)
    diag[0] = 1.0
    if m_max == 0:
        return GTable(i, 0, diag)
    rows = np.arange(i + 1, i + m_max + 1)
    cum_col = np.asarray(model.q_low[:, : i + 1].sum(axis=1)).ravel()
    col = _u_column(model, cum_col, i, rows)  # G_{l,1}, l = 1..m_max
    columns = [col.copy()] if keep_columns else []
    diag[1] = col[0]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(2, m_max + 1):
            j = i + k - 1
            cum_col = cum_col + model.q_low[:, j].toarray().ravel()
            u = _u_column(model, cum_col, j, rows[k - 1:])  # rows i+k..i+m_max
            col = col[1:] + u * diag[k - 1]
            diag[k] = col[0]
            if keep_columns:
                columns.append(col.copy())
    overflow = not bool(np.all(np.isfinite(diag)))
    return GTable(i, m_max, diag, columns, overflow)


def poisson_solve(model: LowerTriModel, f, g0: float = 1.0, n_max: int | None = None,
                  rtol: float = 1e-9) -> np.ndarray:
    """Solve ``Omega^c g = f`` on ``0..n_max-1``; returns ``g_0..g_{n_max}``.

    ``g_n = g_0 + sum_{j<n} v_j sum_{k<n-j} G^{(j)}_{k,k}`` with
    ``v_j = (f_j + c_j g_0)/q_{j,j+1}``.  The residual is checked on return.
    """
    n_max = model.size - 1 if n_max is None else n_max
    if n_max >= model.size:
        raise IndexError(f"n_max={n_max} needs a model with at least {n_max + 1} rows")
    f = np.broadcast_to(np.asarray(f, dtype=float), (n_max,)) if np.ndim(f) == 0 \
        else np.asarray(f, dtype=float)[:n_max]
    if f.size < n_max:
        raise ModelError(f"f has {f.size} entries; need {n_max}")
    v = (f + model.c[:n_max] * g0) / model.q_up[:n_max]
    g = np.full(n_max + 1, float(g0))
    for j in range(n_max):
        if v[j] == 0.0:
            continue
        tab = g_table(model, j, n_max - 1 - j)
        if tab.overflow:
            raise ConsistencyError(f"G table overflowed at base index {j}")
        g[j + 1:] += v[j] * np.cumsum(tab.diag)
    if not np.all(np.isfinite(g)):
        raise ConsistencyError("Poisson solution overflowed double precision")
    check_poisson_residual(model, g, f, rtol)
    return g


def poisson_residual(model: LowerTriModel, g: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Relative residual ``|Omega^c g - f| / scale`` on rows ``0..len(g)-2``."""
    m = g.size - 1
    q = abs(model.q_low[:m, :m])
    scale = (q @ np.abs(g[:m]) + np.asarray(q.sum(axis=1)).ravel() * np.abs(g[:m])
             + model.q_up[:m] * (np.abs(g[1:]) + np.abs(g[:m])) + np.abs(model.c[:m] * g[:m])
             + np.abs(f[:m]))
    res = np.abs(model.apply(g) - f[:m])
    return res / np.maximum(scale, np.finfo(float).tiny)


def check_poisson_residual(model: LowerTriModel, g, f, rtol: float = 1e-9) -> None:
    rel = poisson_residual(model, np.asarray(g, dtype=float), np.asarray(f, dtype=float))
    if rel.size and float(rel.max()) > rtol:
        raise ConsistencyError(f"Poisson residual {float(rel.max()):.3g} exceeds {rtol:g} "
                               f"at i={int(np.argmax(rel))}")


def lower_bound_product(model: LowerTriModel, i: int, m: int) -> float:
    """``prod_{s<m} u_1^{(i+s)}``, a lower bound on ``G^{(i)}_{m,m}`` when ``c >= 0``."""
    s = np.arange(m)
    rows = i + s + 1
    qt = np.array([tilde_q(model, int(r), int(r) - 1) for r in rows]) if m else np.array([])
    return float(np.prod(qt / model.q_up[rows]))
