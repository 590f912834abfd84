"""Eigenvalue oracles from finite symmetric tridiagonal truncations.

Birth-death generators are symmetrized in the basis scaled by ``sqrt(mu_k)``,
which gives diagonal ``a_k + b_k + c_k`` and off-diagonal
``-sqrt(a_{k+1} b_k)``.  Diffusions go through a weighted second-order finite
difference scheme.  Eigenvalues come from Sturm-sequence bisection, which is
deterministic and only needs the lowest few.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import DiscreteModel, require_valid


class Boundary(str, Enum):
    DIRICHLET = "min"  # f_k = 0 for k >= N
    FREE = "max"  # last site keeps no outgoing birth term

    @classmethod
    def parse(cls, value) -> "Boundary":
        if isinstance(value, Boundary):
            return value
        key = str(value).lower()
        aliases = {"min": cls.DIRICHLET, "dirichlet": cls.DIRICHLET, "max": cls.FREE, "free": cls.FREE}
        if key not in aliases:
            raise ValueError(f"unknown boundary {value!r}; use min|max")
        return aliases[key]


@dataclass
class SymTridiag:
    diag: np.ndarray
    off: np.ndarray
    boundary: Boundary = Boundary.DIRICHLET

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=float)
        self.off = np.asarray(self.off, dtype=float)
        if self.off.size != max(self.diag.size - 1, 0):
            raise ValueError("off-diagonal must have length N-1")

    @property
    def size(self) -> int:
        return self.diag.size

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.off, 1) + np.diag(self.off, -1)

    def gershgorin(self) -> tuple[float, float]:
        rad = np.zeros(self.size)
        rad[:-1] += np.abs(self.off)
        rad[1:] += np.abs(self.off)
        return float(np.min(self.diag - rad)), float(np.max(self.diag + rad))


def truncate_symmetric(model: DiscreteModel, N: int, boundary="min") -> SymTridiag:
    """Symmetrized ``N x N`` truncation of ``-Q^c`` on sites ``0..N-1``."""
    boundary = Boundary.parse(boundary)
    require_valid(model, N + 1)
    a, b, c = model.rates(N)
    diag = a[:N] + b[:N] + c[:N]
    if boundary is Boundary.FREE:
        diag[N - 1] -= b[N - 1]
    off = -np.sqrt(a[1:N] * b[: N - 1])
    return SymTridiag(diag, off, boundary)


def sturm_count(m: SymTridiag, x: np.ndarray) -> np.ndarray:
    """Number of eigenvalues strictly below each entry of ``x``.

    Counts negative pivots of the ``LDL^T`` factorization of ``T - x I``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d, o2 = m.diag, m.off ** 2
    tiny = np.finfo(float).tiny
    if x.size == 1:
        return np.array([_sturm_count_scalar(d.tolist(), o2.tolist(), float(x[0]), float(tiny))])
    q = d[0] - x
    q = np.where(q == 0.0, -tiny, q)
    count = (q < 0).astype(np.int64)
    with np.errstate(over="ignore", divide="ignore"):
        for k in range(1, m.size):
            q = d[k] - x - o2[k - 1] / q
            q = np.where(q == 0.0, -tiny, q)
            count += q < 0
    return count


def _sturm_count_scalar(d: list, o2: list, x: float, tiny: float) -> int:
    q = d[0] - x
    if q == 0.0:
        q = -tiny
    count = int(q < 0)
    for k in range(1, len(d)):
        q = d[k] - x - o2[k - 1] / q
        if q == 0.0:
            q = -tiny
        if q < 0:
            count += 1
    return count


def low_eigs(m: SymTridiag, count: int, rtol: float = 1e-10) -> np.ndarray:
    """Lowest ``count`` eigenvalues by bisection, each to ``rtol * max(1, |lambda|)``."""
    if count > m.size:
        raise ValueError(f"asked for {count} eigenvalues of a {m.size}x{m.size} matrix")
    if count <= 0:
        return np.array([])
    lo_g, hi_g = m.gershgorin()
    pad = 1e-12 * max(1.0, abs(lo_g), abs(hi_g))
    idx = np.arange(count)
    lo = np.full(count, lo_g - pad)
    hi = np.full(count, hi_g + pad)
    for _ in range(400):
        width_ok = (hi - lo) <= rtol * np.maximum(1.0, np.maximum(np.abs(lo), np.abs(hi)))
        if np.all(width_ok):
            break
        mid = 0.5 * (lo + hi)
        below = sturm_count(m, mid)
        # eigenvalue idx lies below mid iff more than idx eigenvalues are below mid
        go_left = below > idx
        hi = np.where(~width_ok & go_left, mid, hi)
        lo = np.where(~width_ok & ~go_left, mid, lo)
    return 0.5 * (lo + hi)


def lambda0_trace(model: DiscreteModel, N_list, boundary="min") -> list[tuple[int, float]]:
    """``(N, lambda_0(N))`` for each truncation size."""
    return [(int(N), float(low_eigs(truncate_symmetric(model, int(N), boundary), 1)[0]))
            for N in N_list]


@dataclass
class CountGrowth:
    counts: list[tuple[int, int]]
    assessment: str  # "stable" | "growing"
    label: str = "heuristic"

    def to_dict(self):
        return {"counts": [list(c) for c in self.counts], "assessment": self.assessment,
                "label": self.label}


def eig_count_growth(model: DiscreteModel, Lambda: float, N_list, boundary="min") -> CountGrowth:
    """Eigenvalues below ``Lambda`` per truncation.

    A count that stops changing over the last sizes is consistent with a
    discrete spectrum below ``Lambda``; a count that keeps rising is consistent
    with essential spectrum there.  Neither is a proof.
    """
    if not Lambda > 0:
        raise ValueError("Lambda must be positive")
    counts = [(int(N), int(sturm_count(truncate_symmetric(model, int(N), boundary), [Lambda])[0]))
              for N in N_list]
    tail = [c for _, c in counts[-2:]]
    return CountGrowth(counts, "stable" if len(set(tail)) == 1 else "growing")


def fd_discretize(model, interval: tuple[float, float], N: int) -> SymTridiag:
    """Dirichlet finite differences for ``int f'^2 e^C dx + int c f^2 dmu`` on ``N`` interior nodes.

    With ``mu = e^C / a`` and the gradient weight ``w = e^C`` at half steps,
    the symmetric matrix in the ``sqrt(mu)``-scaled basis has diagonal
    ``(w_{i-1/2} + w_{i+1/2}) / (h^2 mu_i) + c_i`` and off-diagonal
    ``-w_{i+1/2} / (h^2 sqrt(mu_i mu_{i+1}))``; ratios are formed in log space.
    """
    lo, hi = map(float, interval)
    if not (math.isfinite(lo) and math.isfinite(hi) and hi > lo):
        raise ValueError("fd_discretize needs a finite interval")
    if N < 50:
        raise ValueError("fd_discretize needs N >= 50")
    h = (hi - lo) / (N + 1)
    x = lo + h * np.arange(1, N + 1)
    xh = lo + h * (np.arange(0, N + 1) + 0.5)
    log_w = model.C(xh)
    log_mu = model.C(x) - np.log(model.a(x))
    cx = model.c(x)
    log_h2 = 2.0 * math.log(h)
    diag = np.exp(log_w[:-1] - log_h2 - log_mu) + np.exp(log_w[1:] - log_h2 - log_mu) + cx
    off = -np.exp(log_w[1:-1] - log_h2 - 0.5 * (log_mu[:-1] + log_mu[1:]))
    return SymTridiag(diag, off, Boundary.DIRICHLET)
