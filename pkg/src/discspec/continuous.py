"""One-dimensional diffusions ``L^c = a d^2/dx^2 + b d/dx - c``.

The reference point ``theta`` fixes ``C(x) = int_theta^x b/a`` and the two
measures ``mu(dx) = e^C / a dx`` and ``nu_hat(dx) = e^-C dx``.  A harmonic
function ``h`` (``L^c h = 0``) is built from the first-order system
``F = (f, e^C f')``, ``F' = G F`` with ``G = [[0, e^-C], [c e^C / a, 0]]``,
either by successive approximation or by summing its iterated-integral
series.  The discrete-spectrum criteria then compare ``mu(h^2 .)`` and
``nu_hat(h^-2 .)`` on complementary pieces of the line, exactly as the
discrete criteria do with series.

Cumulative integrals use composite Chebyshev cells (for the ODE system) and
composite Gauss-Legendre cells in log space (for the measures), so integrands
like ``exp(x^2)`` stay representable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import integrate

from .criteria import BranchResult, Verdict, _branch_from_fit
from .errors import ConvergenceError, ModelError
from .expr import Expr
from .tails import fit_line, geometric_samples

Func = Callable[[np.ndarray], np.ndarray]

_GL_T, _GL_W = np.polynomial.legendre.leggauss(16)
_GL8_T, _GL8_W = np.polynomial.legendre.leggauss(8)


def _as_func(value, var: str = "x") -> Func:
    """Accept an expression string, an :class:`Expr`, a number or a vectorized callable."""
    if isinstance(value, Expr):
        return value
    if isinstance(value, str):
        return Expr(value, var=var)
    if isinstance(value, (int, float)):
        const = float(value)
        return lambda x: np.full(np.shape(x), const)
    if callable(value):
        return lambda x: np.asarray(value(np.asarray(x, dtype=float)), dtype=float) \
            * np.ones(np.shape(x))
    raise ModelError(f"cannot interpret {value!r} as a function of {var}")


def _source(value) -> str:
    if isinstance(value, Expr):
        return value.source
    if isinstance(value, (str, int, float)):
        return str(value)
    return getattr(value, "__name__", "<callable>")


def _breakpoints(theta: float, lo: float, hi: float, per_decade: int = 16) -> np.ndarray:
    """Cell edges around ``theta``: uniform within distance 1, geometric beyond."""
    reach = max(abs(lo - theta), abs(hi - theta), 1.0)
    near = np.linspace(0.0, 1.0, 17)
    far = np.geomspace(1.0, reach, max(2, int(per_decade * math.log10(reach)) + 2))
    d = np.unique(np.concatenate([near, far]))
    pts = np.concatenate([theta - d[::-1], theta + d])
    return pts[(pts >= lo) & (pts <= hi)]


def cumulative_integral(func: Func, x, theta: float = 0.0) -> np.ndarray:
    """``int_theta^x func`` for every entry of ``x`` (signed when ``x < theta``).

    Composite 16-point Gauss-Legendre between consecutive breakpoints; the
    query points are breakpoints themselves, so no interpolation is involved.
    """
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    if flat.size == 0:
        return x.copy()
    lo, hi = min(float(flat.min()), theta), max(float(flat.max()), theta)
    pts = np.unique(np.concatenate([flat, [theta], _breakpoints(theta, lo, hi)]))
    if pts.size == 1:
        return np.zeros_like(x)
    half = 0.5 * np.diff(pts)
    mid = 0.5 * (pts[:-1] + pts[1:])
    vals = func(mid[:, None] + half[:, None] * _GL_T)
    seg = half * (vals @ _GL_W)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    cum -= cum[np.searchsorted(pts, theta)]
    return cum[np.searchsorted(pts, flat)].reshape(x.shape)


@dataclass
class DiffusionModel:
    """Coefficients of ``a f'' + b f' - c f`` on ``(0, inf)`` or the whole line."""

    a_fn: object
    b_fn: object = "0"
    c_fn: object = "0"
    domain: str = "halfline"
    theta: float = 0.0
    name: str = ""
    signed_c: bool = False

    def __post_init__(self):
        if self.domain not in ("halfline", "wholeline"):
            raise ModelError(f"domain must be 'halfline' or 'wholeline'; got {self.domain!r}")
        self.theta = float(self.theta)
        if self.domain == "halfline" and self.theta < 0:
            raise ModelError("theta must lie in [0, inf) on the half line")
        self._a = _as_func(self.a_fn)
        self._b = _as_func(self.b_fn)
        self._c = _as_func(self.c_fn)

    def a(self, x) -> np.ndarray:
        return self._a(np.asarray(x, dtype=float))

    def b(self, x) -> np.ndarray:
        return self._b(np.asarray(x, dtype=float))

    def c(self, x) -> np.ndarray:
        return self._c(np.asarray(x, dtype=float))

    def b_over_a(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.b(x) / self.a(x)

    def C(self, x) -> np.ndarray:
        """``int_theta^x b/a``."""
        return cumulative_integral(self.b_over_a, x, self.theta)

    def log_mu_density(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.C(x) - np.log(self.a(x))

    def log_nu_hat_density(self, x) -> np.ndarray:
        return -self.C(x)

    def with_c(self, c_fn, signed: bool | None = None, name: str | None = None) -> "DiffusionModel":
        return replace(self, c_fn=c_fn, signed_c=self.signed_c if signed is None else signed,
                       name=self.name if name is None else name)

    def to_dict(self) -> dict:
        return {"kind": "continuous", "a": _source(self.a_fn), "b": _source(self.b_fn),
                "c": _source(self.c_fn), "domain": self.domain, "theta": self.theta,
                "name": self.name}


def probe_grid(model: DiffusionModel, x_max: float = 50.0, n: int = 2001) -> np.ndarray:
    right = np.geomspace(1e-6, x_max, n)
    if model.domain == "halfline":
        return right
    return np.concatenate([-right[::-1], [0.0], right])


def validate_diffusion(model: DiffusionModel, x_max: float = 50.0) -> list[str]:
    """Problems found on a probe grid; an empty list means none were found."""
    x = probe_grid(model, x_max)
    problems = []
    a, b, c = model.a(x), model.b(x), model.c(x)
    for name, v in (("a", a), ("b", b), ("c", c)):
        bad = ~np.isfinite(v)
        if bad.any():
            problems.append(f"{name}(x) is not finite at x={x[np.argmax(bad)]:.6g}")
    if np.any(a <= 0):
        problems.append(f"a(x) must be > 0; fails at x={x[np.argmax(a <= 0)]:.6g}")
    if not model.signed_c and np.any(c < 0):
        problems.append(f"c(x) must be >= 0; fails at x={x[np.argmax(c < 0)]:.6g}")
    if not problems:
        C = model.C(x)
        if not np.all(np.isfinite(C)):
            problems.append("C(x) = int b/a is not finite on the probe grid: b/a is not locally integrable")
    return problems


def require_valid_diffusion(model: DiffusionModel, x_max: float = 50.0) -> None:
    problems = validate_diffusion(model, x_max)
    if problems:
        raise ModelError(f"invalid diffusion model {model.name or ''}: " + "; ".join(problems))


def diffusion_from_dict(spec: dict) -> DiffusionModel:
    """Build a model from the JSON form ``{"kind": "continuous", "a": ..., "b": ..., "c": ...}``."""
    if "a" not in spec:
        raise ModelError("continuous model needs an 'a' expression")
    model = DiffusionModel(spec["a"], spec.get("b", "0"), spec.get("c", "0"),
                           domain=spec.get("domain", "halfline"), theta=spec.get("theta", 0.0),
                           name=spec.get("name", ""))
    require_valid_diffusion(model)
    return model


def C_and_measures(model: DiffusionModel, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``C(x)``, ``dmu/dx`` and ``dnu_hat/dx`` with ``C`` from adaptive quadrature.

    This path uses ``scipy.integrate.quad`` point by point and is independent
    of the composite rule behind :meth:`DiffusionModel.C`.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(xs)
    f = lambda t: float(model.b_over_a(np.array(t)))  # noqa: E731
    for i, xi in enumerate(xs):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(f, model.theta, float(xi), limit=200,
                                        epsabs=1e-13, epsrel=1e-12)
            except integrate.IntegrationWarning as exc:
                raise ModelError(f"quadrature of b/a from theta={model.theta} to x={xi:.6g} did not "
                                 f"converge; b/a must be locally integrable ({exc})") from None
        out[i] = val
    a = model.a(xs)
    C = out.reshape(np.shape(x)) if np.ndim(x) else out[0]
    a = a.reshape(np.shape(x)) if np.ndim(x) else a[0]
    return C, np.exp(C) / a, np.exp(-C)


# ---------------------------------------------------------------------------
# Successive approximation on composite Chebyshev cells

def _cheb_setup(p: int):
    t = -np.cos((2 * np.arange(p) + 1) * np.pi / (2 * p))  # interior Chebyshev nodes
    vinv = np.linalg.inv(cheb.chebvander(t, p - 1))
    s = np.append(t, 1.0)
    integ = np.empty((p + 1, p))
    for j in range(p):
        e = np.zeros(p)
        e[j] = 1.0
        integ[:, j] = cheb.chebval(s, cheb.chebint(e, lbnd=-1))
    return t, vinv, integ @ vinv  # last row integrates over the whole cell


@dataclass
class ChebGrid:
    """Cells ``[edges[k], edges[k+1]]`` with ``p`` interior Chebyshev nodes each; ``theta`` is an edge."""

    edges: np.ndarray
    p: int
    theta: float

    def __post_init__(self):
        self.t, self._vinv, self._S = _cheb_setup(self.p)
        self.half = 0.5 * np.diff(self.edges)
        self.mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        self.nodes = self.mid[:, None] + self.half[:, None] * self.t
        self.i_theta = int(np.argmin(np.abs(self.edges - self.theta)))

    @property
    def n_cells(self) -> int:
        return self.half.size

    def integrate(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``int_theta^x f`` at the nodes and at the edges, from node values ``f``."""
        part = self.half[:, None] * (f @ self._S.T)  # (..., cells, p+1)
        lead = part.shape[:-2]
        start = np.concatenate([np.zeros(lead + (1,)), np.cumsum(part[..., -1], axis=-1)], axis=-1)
        start -= start[..., self.i_theta:self.i_theta + 1]
        return start[..., :-1, None] + part[..., :-1], start

    def interpolate(self, vals: np.ndarray, xq) -> np.ndarray:
        xq = np.asarray(xq, dtype=float)
        flat = xq.ravel()
        if np.any(flat < self.edges[0] - 1e-12) or np.any(flat > self.edges[-1] + 1e-12):
            raise ValueError(f"x outside the solved interval [{self.edges[0]}, {self.edges[-1]}]")
        k = np.clip(np.searchsorted(self.edges, flat, side="right") - 1, 0, self.n_cells - 1)
        coef = vals[k] @ self._vinv.T
        tq = (flat - self.mid[k]) / self.half[k]
        basis = cheb.chebvander(tq, self.p - 1)
        return np.sum(coef * basis, axis=1).reshape(xq.shape)


def _g_entries(model: DiffusionModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    C = model.C(x)
    with np.errstate(over="ignore"):
        return np.exp(-C), model.c(x) * np.exp(C) / model.a(x)


def build_grid(model: DiffusionModel, interval, p: int = 16, min_cells: int = 16,
               max_cells: int = 20000) -> ChebGrid:
    """Cells refined until ``width * max|G| <= 1/2`` on each cell."""
    lo, hi = map(float, interval)
    theta = model.theta
    if not (lo <= theta <= hi and hi > lo):
        raise ValueError(f"interval [{lo}, {hi}] must contain theta={theta}")
    n_left = int(math.ceil(min_cells * (theta - lo) / (hi - lo)))
    n_right = max(int(math.ceil(min_cells * (hi - theta) / (hi - lo))), 1)
    edges = np.unique(np.concatenate([np.linspace(lo, theta, n_left + 1) if n_left else [theta],
                                      np.linspace(theta, hi, n_right + 1)]))
    for _ in range(30):
        grid = ChebGrid(edges, p, theta)
        g12, g21 = _g_entries(model, grid.nodes)
        load = 2 * grid.half * np.max(np.maximum(np.abs(g12), np.abs(g21)), axis=1)
        split = ~(load <= 0.5)
        if not split.any() or edges.size - 1 >= max_cells:
            return grid
        edges = np.sort(np.concatenate([edges, grid.mid[split]]))
    return ChebGrid(edges, p, theta)


@dataclass
class PicardSolution:
    """Fixed point ``F* = (f, e^C f')`` of ``F = F(theta) + int_theta^x G F``."""

    grid: np.ndarray
    F_star: np.ndarray  # shape (2, len(grid))
    iterations_used: int
    sup_norm_gap: float
    converged: bool
    residual: float
    gamma: tuple[float, float]
    monotone: bool
    cells: ChebGrid
    node_values: np.ndarray  # (2, cells, p)
    iterates: list[np.ndarray] = field(default_factory=list)

    @property
    def f_values(self) -> np.ndarray:
        return self.F_star[0]

    def f(self, x) -> np.ndarray:
        return self.cells.interpolate(self.node_values[0], x)

    def flux(self, x) -> np.ndarray:
        """``e^C f'``."""
        return self.cells.interpolate(self.node_values[1], x)

    def log_abs_f(self, x) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(self.f(x)))

    def sign_changes(self) -> list[float]:
        """Grid points where ``f`` changes sign or vanishes."""
        f = self.F_star[0]
        idx = np.nonzero((f[:-1] * f[1:] <= 0) & ((f[:-1] != 0) | (f[1:] != 0)))[0]
        return [float(self.grid[i]) for i in idx]

    def to_dict(self, max_points: int = 200) -> dict:
        step = max(1, self.grid.size // max_points)
        return {"iterations_used": self.iterations_used, "sup_norm_gap": self.sup_norm_gap,
                "converged": self.converged, "residual": self.residual,
                "gamma": list(self.gamma), "monotone": self.monotone,
                "sign_changes": self.sign_changes(),
                "interval": [float(self.grid[0]), float(self.grid[-1])],
                "samples": [[float(x), float(f), float(g)] for x, f, g in
                            zip(self.grid[::step], self.F_star[0, ::step], self.F_star[1, ::step])]}


def _assemble(grid: ChebGrid, node_vals: np.ndarray, edge_vals: np.ndarray):
    """Merge node and edge values into one sorted abscissa array."""
    x = np.concatenate([grid.nodes.ravel(), grid.edges])
    order = np.argsort(x, kind="stable")
    vals = np.concatenate([node_vals.reshape(node_vals.shape[0], -1), edge_vals], axis=1)
    return x[order], vals[:, order]


def _apply_g(g12, g21, F):
    return np.stack([g12 * F[1], g21 * F[0]])


def picard_solve(model: DiffusionModel, gamma0: float = 1.0, gamma1: float = 0.0,
                 interval=(0.0, 1.0), tol: float = 1e-10, max_iter: int = 500,
                 p: int = 16, min_cells: int = 16, keep_iterates: bool = False,
                 strict: bool = False, grid: ChebGrid | None = None) -> PicardSolution:
    """Iterate ``F^(n+1) = F(theta) + int_theta^x G F^(n)`` until the relative sup change is below ``tol``.

    A run that hits ``max_iter`` comes back with ``converged=False``, or raises
    :class:`ConvergenceError` when ``strict`` is set.
    """
    grid = grid or build_grid(model, interval, p=p, min_cells=min_cells)
    g12, g21 = _g_entries(model, grid.nodes)
    if not (np.all(np.isfinite(g12)) and np.all(np.isfinite(g21))):
        raise ModelError("G = [[0, e^-C], [c e^C/a, 0]] is not finite on the grid; shrink the interval")
    F0 = np.array([gamma0, gamma1], dtype=float)
    F = np.broadcast_to(F0[:, None, None], (2,) + grid.nodes.shape).copy()
    iterates = [F.copy()] if keep_iterates else []
    monotone, gap, used = True, math.inf, 0
    tiny = np.finfo(float).tiny
    with np.errstate(over="ignore", invalid="ignore"):
        for used in range(1, max_iter + 1):
            Fn = F0[:, None, None] + grid.integrate(_apply_g(g12, g21, F))[0]
            diff = np.abs(Fn - F).reshape(2, -1).max(axis=1)
            scale = np.abs(Fn).reshape(2, -1).max(axis=1)
            gap = float(np.max(np.where(diff == 0, 0.0, diff / np.maximum(scale, tiny))))
            if np.any(Fn - F < -1e-13 * np.maximum(scale, 1.0)[:, None, None]):
                monotone = False
            F = Fn
            if keep_iterates:
                iterates.append(F.copy())
            if not np.all(np.isfinite(F)):
                raise ConvergenceError("successive approximations overflowed; shrink the interval")
            if gap < tol:
                break
    converged = gap < tol
    if not converged and strict:
        raise ConvergenceError(f"no convergence in {max_iter} iterations (last change {gap:.3g})")
    inner, edge_int = grid.integrate(_apply_g(g12, g21, F))
    scale = np.maximum(np.abs(F).reshape(2, -1).max(axis=1), 1.0)
    residual = float(np.max(np.abs(F - F0[:, None, None] - inner).reshape(2, -1).max(axis=1) / scale))
    edge_vals = F0[:, None] + edge_int
    x, vals = _assemble(grid, F, edge_vals)
    it_flat = [_assemble(grid, it, F0[:, None] + grid.integrate(_apply_g(g12, g21, prev))[1])[1]
               if k else _assemble(grid, it, np.broadcast_to(F0[:, None], edge_vals.shape))[1]
               for k, (it, prev) in enumerate(zip(iterates, [None] + iterates[:-1]))]
    return PicardSolution(x, vals, used, gap, converged, residual, (float(gamma0), float(gamma1)),
                          monotone, grid, F, it_flat)


@dataclass
class PeanoBakerTerms:
    """Series terms ``F~^(1) = F(theta)``, ``F~^(n+1) = int_theta^x G F~^(n)`` on a grid."""

    grid: np.ndarray
    terms: list[np.ndarray]  # each (2, len(grid))
    cells: ChebGrid
    node_terms: list[np.ndarray]

    def partial_sum(self, n: int) -> np.ndarray:
        return np.sum(self.terms[:n], axis=0)

    def evaluate(self, k: int, x, component: int = 0) -> np.ndarray:
        """Term ``k`` (1-based) at arbitrary ``x``."""
        return self.cells.interpolate(self.node_terms[k - 1][component], x)


def peano_baker_terms(model: DiffusionModel, gamma=(1.0, 0.0), interval=(0.0, 1.0),
                      n_terms: int = 6, p: int = 16, min_cells: int = 16,
                      grid: ChebGrid | None = None) -> PeanoBakerTerms:
    grid = grid or build_grid(model, interval, p=p, min_cells=min_cells)
    g12, g21 = _g_entries(model, grid.nodes)
    F0 = np.asarray(gamma, dtype=float)
    term = np.broadcast_to(F0[:, None, None], (2,) + grid.nodes.shape).copy()
    node_terms, flat = [term], [_assemble(grid, term, np.broadcast_to(F0[:, None], (2, grid.edges.size)))[1]]
    for _ in range(n_terms - 1):
        inner, edge = grid.integrate(_apply_g(g12, g21, term))
        term = inner
        node_terms.append(term)
        flat.append(_assemble(grid, inner, edge)[1])
    x = _assemble(grid, node_terms[0], np.zeros((2, grid.edges.size)))[0]
    return PeanoBakerTerms(x, flat, grid, node_terms)


@dataclass
class ComparisonCheck:
    preconditions_hold: bool
    dominates: bool
    min_margin: float


def comparison_check(sol: PicardSolution, model: DiffusionModel, F_bar: Callable | np.ndarray) -> ComparisonCheck:
    """Check that a supersolution of the integral equation lies above ``F*``.

    ``F_bar`` is given by its values at the solution's Chebyshev nodes (shape
    ``(2, cells, p)``) or as a callable of ``x`` returning shape ``(2, ...)``.
    The preconditions are ``F_bar >= F(theta) + int_theta^x G F_bar`` pointwise
    (the integrated form of ``F_bar' >= G F_bar``, valid on both sides of theta).
    """
    grid = sol.cells
    Fb = np.asarray(F_bar(grid.nodes) if callable(F_bar) else F_bar, dtype=float)
    g12, g21 = _g_entries(model, grid.nodes)
    F0 = np.asarray(sol.gamma)[:, None, None]
    super_gap = Fb - F0 - grid.integrate(_apply_g(g12, g21, Fb))[0]
    scale = max(1.0, float(np.abs(Fb).max()))
    pre = bool(np.all(super_gap >= -1e-12 * scale))
    margin = Fb - sol.node_values
    return ComparisonCheck(pre, bool(np.all(margin >= -1e-12 * scale)), float(margin.min()))


# ---------------------------------------------------------------------------
# Finite differences and the Riccati residual

def fd_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Weights for derivatives ``0..m`` at ``z`` from the nodes ``x`` (Fornberg's recursion)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def fd_derivatives(values: np.ndarray, h: float, order: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives on a uniform grid.

    Interior points use the centered ``order+1`` point stencil (rounded up to
    odd); the points too close to either end use one-sided windows of
    ``order + 2`` points, which keeps the second derivative at ``order``.
    """
    v = np.asarray(values, dtype=float)
    n = v.size
    half = (order + 1) // 2
    width = order + 2
    if n < width + 1:
        raise ValueError(f"need at least {width + 1} grid points for order {order}")
    offs = np.arange(-half, half + 1)
    w = fd_weights(0.0, offs.astype(float), 2)
    d1 = np.zeros(n)
    d2 = np.zeros(n)
    core = slice(half, n - half)
    for k, o in enumerate(offs):
        seg = v[half + o: n - half + o]
        d1[core] += w[k, 1] * seg
        d2[core] += w[k, 2] * seg
    for i in list(range(half)) + list(range(n - half, n)):
        start = 0 if i < half else n - width
        idx = np.arange(start, start + width)
        wb = fd_weights(float(i), idx.astype(float), 2)
        d1[i] = wb[:, 1] @ v[idx]
        d2[i] = wb[:, 2] @ v[idx]
    return d1 / h, d2 / h ** 2


def harmonic_residual(model: DiffusionModel, psi, interval, grid_n: int = 10_000,
                      order: int = 4) -> float:
    """``max |psi'' + psi'^2 + (b/a) psi' - c/a|`` with finite-difference derivatives.

    ``psi = log h``; the expression vanishes exactly when ``L^c h = 0``.
    """
    if grid_n < 100:
        raise ValueError("grid_n must be at least 100")
    lo, hi = map(float, interval)
    x = np.linspace(lo, hi, grid_n)
    d1, d2 = fd_derivatives(_as_func(psi)(x), x[1] - x[0], order)
    a = model.a(x)
    res = d2 + d1 ** 2 + model.b(x) / a * d1 - model.c(x) / a
    return float(np.max(np.abs(res)))


# ---------------------------------------------------------------------------
# Isospectral transforms

def _derivs(psi, x: np.ndarray, dpsi=None, d2psi=None, order: int = 6):
    if dpsi is not None and d2psi is not None:
        return _as_func(dpsi)(x), _as_func(d2psi)(x)
    step = 1e-3 * max(1.0, float(np.max(np.abs(x))) if np.size(x) else 1.0)
    offs = np.arange(-(order // 2), order // 2 + 1) * step
    w = fd_weights(0.0, offs, 2)
    f = _as_func(psi)
    vals = np.stack([f(x + o) for o in offs])
    d1 = np.tensordot(w[:, 1], vals, axes=1)
    d2 = np.tensordot(w[:, 2], vals, axes=1)
    return (d1 if dpsi is None else _as_func(dpsi)(x)), (d2 if d2psi is None else _as_func(d2psi)(x))


def _killing_negative(model: DiffusionModel, probe_max: float = 50.0) -> bool:
    x = probe_grid(model, probe_max, 501)
    c = model.c(x)
    return bool(np.any(c[np.isfinite(c)] < 0))


def h_transform(model_tilde: DiffusionModel, psi, dpsi=None, d2psi=None) -> DiffusionModel:
    """The operator ``e^psi L~ e^-psi`` for a killing-free ``L~``.

    This undoes the h-transform: if ``L~ = h^-1 L^c h`` with ``h = e^psi``, the
    result is ``L^c``.

    Drift ``b~ - 2 a~ psi'`` and zero-order term ``a~ psi'^2 - a~ psi'' - b~ psi'``
    (returned with the opposite sign as ``c``).  ``negative_killing`` on the
    result records whether that ``c`` goes negative on a probe grid.
    Derivatives of ``psi`` come from finite differences unless supplied.
    """
    a_t, b_t = model_tilde.a, model_tilde.b

    def drift(x):
        d1, _ = _derivs(psi, x, dpsi, d2psi)
        return b_t(x) - 2 * a_t(x) * d1

    def kill(x):
        d1, d2 = _derivs(psi, x, dpsi, d2psi)
        return -(a_t(x) * d1 ** 2 - a_t(x) * d2 - b_t(x) * d1)

    out = DiffusionModel(model_tilde.a_fn, drift, kill, domain=model_tilde.domain,
                         theta=model_tilde.theta, name=f"h-transform({model_tilde.name})",
                         signed_c=True)
    out.negative_killing = _killing_negative(out)
    return out


def _fd1(f: Func, x: np.ndarray) -> np.ndarray:
    """Seven-point central first derivative with a step scaled to ``|x|``."""
    step = 1e-3 * np.maximum(1.0, np.abs(x))
    offs = np.arange(-3, 4)
    w = fd_weights(0.0, offs.astype(float), 1)[:, 1]
    return sum(wk * f(x + o * step) for wk, o in zip(w, offs)) / step


def h_transform_drift(model_tilde: DiffusionModel, b_target, db_target=None) -> DiffusionModel:
    """The isospectral ``L^b`` with prescribed drift ``b``.

    Uses ``psi' = (b~ - b)/(2 a~)``; the zero-order term is
    ``1/2 [(b^2 - b~^2)/(2 a~) - a~ ((b~ - b)/a~)']``, returned as ``-c``.
    """
    a_t, b_t = model_tilde.a, model_tilde.b
    bf = _as_func(b_target)

    def ratio(x):
        return (b_t(x) - bf(x)) / a_t(x)

    def kill(x):
        x = np.asarray(x, dtype=float)
        if db_target is None:
            dratio = _fd1(ratio, x)
        else:
            a_x = a_t(x)
            dratio = _fd1(lambda t: b_t(t) / a_t(t), x) \
                - (_as_func(db_target)(x) * a_x - bf(x) * _fd1(a_t, x)) / a_x ** 2
        zero_order = 0.5 * ((bf(x) ** 2 - b_t(x) ** 2) / (2 * a_t(x)) - a_t(x) * dratio)
        return -zero_order

    out = DiffusionModel(model_tilde.a_fn, bf, kill, domain=model_tilde.domain,
                         theta=model_tilde.theta, name=f"drift-transform({model_tilde.name})",
                         signed_c=True)
    out.negative_killing = _killing_negative(out)
    return out


def molchanov_check(model: DiffusionModel, x_max: float = 1e3, window: float = 1.0,
                    growth_floor: float = 1e3) -> str:
    """Sanity check for ``a = 1``, ``b = 0``, ``c`` bounded below on the half line.

    The spectrum is discrete iff ``int_x^{x+window} c -> inf``; numerically:
    ``"discrete"`` when the window integral keeps growing past ``growth_floor``
    over the last decade, ``"not-discrete"`` when it stays bounded, else
    ``"inconclusive"``.
    """
    probe = probe_grid(model, 50.0, 201)
    if np.any(np.abs(model.a(probe) - 1) > 1e-12) or np.any(model.b(probe) != 0):
        raise ModelError("molchanov_check applies only to a = 1, b = 0")
    xs = np.geomspace(max(1.0, x_max / 100), x_max, 60)
    win = np.array([cumulative_integral(model.c, np.array([x + window]), x)[0] for x in xs])
    tail = win[xs >= x_max / 10]
    if np.all(np.diff(tail) > 0) and tail[-1] > growth_floor:
        return "discrete"
    if np.max(np.abs(win)) < growth_floor and tail[-1] <= tail[0] * 1.5 + 1:
        return "not-discrete"
    return "inconclusive"


# ---------------------------------------------------------------------------
# Half-line and whole-line criteria

def _resolve_log_h(h=None, psi=None) -> Func:
    """``log|h|`` as a vectorized function of ``x``."""
    if psi is not None:
        return _as_func(psi)
    if h is None:
        return lambda x: np.zeros(np.shape(x))
    if isinstance(h, PicardSolution):
        return h.log_abs_f
    fh = _as_func(h)

    def log_h(x):
        with np.errstate(divide="ignore"):
            return np.log(np.abs(fh(x)))
    return log_h


@dataclass
class IntegralStatus:
    """Finiteness of ``int_0^inf f`` for one integrand, decided from its tail."""

    status: str  # "convergent" | "divergent" | "undecided"
    exponent: float  # fitted d log f / d log x over the last decade
    method: str = "power-fit"

    @property
    def convergent(self) -> bool:
        return self.status == "convergent"

    @property
    def divergent(self) -> bool:
        return self.status == "divergent"

    def to_dict(self):
        return {"status": self.status, "exponent": self.exponent if math.isfinite(self.exponent) else None,
                "method": self.method}


def _classify_tail(log_f: Func, x_max: float, conv_exponent: float = -1.1,
                   div_exponent: float = -1.05) -> IntegralStatus:
    xs = np.geomspace(x_max / 10, x_max, 200)
    lf = log_f(xs)
    if not np.all(np.isfinite(lf)):
        return IntegralStatus("undecided", math.nan, "non-finite integrand")
    fit = fit_line(np.log(xs), lf)
    if fit.slope < conv_exponent:
        return IntegralStatus("convergent", fit.slope)
    if fit.slope > div_exponent:
        return IntegralStatus("divergent", fit.slope)
    return IntegralStatus("undecided", fit.slope)


def _cell_logs(log_f: Func, edges: np.ndarray) -> np.ndarray:
    """``log int`` over each cell, by 8-point Gauss-Legendre in log space."""
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    lf = log_f(mid[:, None] + half[:, None] * _GL8_T) + np.log(_GL8_W)
    top = np.max(lf, axis=1)
    top_safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(half) + top_safe + np.log(np.sum(np.exp(lf - top_safe[:, None]), axis=1)) \
            + np.where(np.isfinite(top), 0.0, -np.inf)


def _refine_edges(log_f: Func, edges: np.ndarray, rounds: int = 10, max_cells: int = 400_000) -> np.ndarray:
    """Split cells on which ``log f`` varies by more than 1 across the quadrature nodes."""
    for _ in range(rounds):
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        lf = log_f(mid[:, None] + half[:, None] * _GL8_T)
        spread = np.max(lf, axis=1) - np.min(lf, axis=1)
        spread = np.where(np.isfinite(spread), spread, 0.0)
        pieces = np.minimum(np.ceil(spread / 0.5), 64).astype(int)
        pieces[spread <= 1.0] = 1
        if np.all(pieces == 1) or edges.size > max_cells:
            break
        new = [np.linspace(edges[i], edges[i + 1], k + 1)[1:-1] for i, k in enumerate(pieces) if k > 1]
        edges = np.sort(np.concatenate([edges] + new))
    return edges


def _base_edges(x_hi: float, samples: np.ndarray) -> np.ndarray:
    near = np.linspace(0.0, min(1.0, x_hi), 33)
    far = np.geomspace(1.0, x_hi, max(2, int(40 * math.log10(x_hi)) + 2)) if x_hi > 1 else []
    return np.unique(np.concatenate([near, far, samples]))


@dataclass
class _SideIntegrals:
    """Cumulative ``log int_0^x f`` and ``log int_x^inf f`` at the sample points."""

    head: np.ndarray
    tail: np.ndarray
    status: IntegralStatus


def _side_integrals(log_f: Func, samples: np.ndarray, x_max: float, far_factor: float = 1e4,
                    drop: float = 60.0, x_cap: float = math.inf) -> _SideIntegrals:
    """``x_cap`` bounds where ``log_f`` may be evaluated (the end of a solved interval)."""
    status = _classify_tail(log_f, x_max)
    x_hi = x_max
    far_factor = max(1.0, min(far_factor, x_cap / x_max))
    if status.convergent and far_factor > 1.0:
        # go out until the integrand has fallen by `drop` in log, capped at far_factor * x_max
        ref = float(log_f(np.array([x_max]))[0])
        probe = np.geomspace(x_max, far_factor * x_max, 200)
        below = np.nonzero(log_f(probe) < ref - drop)[0]
        x_hi = float(probe[below[0]]) if below.size else far_factor * x_max
    edges = _refine_edges(log_f, _base_edges(x_hi, samples))
    logs = _cell_logs(log_f, edges)
    head = np.concatenate([[-np.inf], np.logaddexp.accumulate(logs)])
    rest = np.concatenate([np.logaddexp.accumulate(logs[::-1])[::-1], [-np.inf]])
    if status.convergent:
        xs = np.geomspace(x_hi / 1.05, x_hi, 20)
        slope = fit_line(np.log(xs), log_f(xs)).slope
        # int_X^inf f ~ f(X) X / (-slope - 1) for a local power law; an
        # exponential decay makes the slope large and the same formula applies
        log_tail_far = float(log_f(np.array([x_hi]))[0]) + math.log(x_hi) - math.log(-slope - 1)
        rest = np.logaddexp(rest, log_tail_far)
    else:
        rest = np.full_like(rest, np.inf)
    idx = np.searchsorted(edges, samples)
    return _SideIntegrals(head[idx], rest[idx], status)


@dataclass
class ContinuousReport:
    verdict: Verdict
    branch: str
    min_result: BranchResult | None
    max_result: BranchResult | None
    integrals: dict
    x_max: float
    fitted_exponent: float | None = None
    confidence: tuple[float, float] | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "branch": self.branch, "x_max": self.x_max,
                "fitted_exponent": self.fitted_exponent,
                "confidence_interval": list(self.confidence) if self.confidence else None,
                "integrals": self.integrals,
                "min": self.min_result.to_dict() if self.min_result else None,
                "max": self.max_result.to_dict() if self.max_result else None,
                "notes": list(self.notes)}

    def trace(self, branch: str = "min") -> tuple[np.ndarray, np.ndarray]:
        res = self.min_result if branch == "min" else self.max_result
        if res is None or not res.trace:
            return np.array([]), np.array([])
        xs, ls = zip(*res.trace)
        return np.asarray(xs), np.asarray(ls)


def _samples(x_max: float, ratio: float) -> np.ndarray:
    lo = max(1.0, x_max / 1e4)
    n = max(3, int(math.ceil(math.log(x_max / lo) / math.log(ratio))) + 1)
    return np.geomspace(lo, x_max, n)


def _combine(report: ContinuousReport, nu_status: str, mu_status: str, xs, log_min, log_max,
             delta: float, level_floor: float) -> ContinuousReport:
    if nu_status == "divergent" and mu_status == "divergent":
        report.verdict, report.branch = Verdict.NOT_DISCRETE, "part-3"
        report.notes.append("mu(h^2) and nu_hat(h^-2) both infinite: min and max spectra coincide, "
                            "not discrete")
        return report
    if nu_status == "convergent":
        report.min_result = _branch_from_fit("min", xs, log_min, delta, level_floor)
    else:
        report.min_result = BranchResult("min", False,
                                         "not-discrete" if nu_status == "divergent" else "inconclusive",
                                         f"nu_hat(h^-2) {nu_status}")
    if mu_status == "convergent":
        report.max_result = _branch_from_fit("max", xs, log_max, delta, level_floor)
    else:
        report.max_result = BranchResult("max", False,
                                         "not-discrete" if mu_status == "divergent" else "inconclusive",
                                         f"mu(h^2) {mu_status}")
    dmin, dmax = report.min_result.decision, report.max_result.decision
    if dmin == "discrete" and dmax == "discrete":
        report.verdict, report.branch = Verdict.BOTH_DISCRETE, "parts-1-and-2"
    elif dmin == "discrete":
        report.verdict, report.branch = Verdict.DISCRETE_MIN, "part-1"
    elif dmax == "discrete":
        report.verdict, report.branch = Verdict.DISCRETE_MAX, "part-2"
    elif "inconclusive" not in (dmin, dmax):
        report.verdict = Verdict.NOT_DISCRETE
        report.branch = "part-1" if report.min_result.applicable else "part-2"
    else:
        report.verdict, report.branch = Verdict.INCONCLUSIVE, "undecided"
    primary = report.min_result if report.min_result.fit else report.max_result
    if primary.fit is not None and primary.fit.fit is not None:
        report.fitted_exponent = primary.fit.fit.slope
        report.confidence = primary.fit.fit.ci95
    return report


def _log_integrands(model: DiffusionModel, log_h: Func, sign: float = 1.0) -> tuple[Func, Func]:
    """``log(h^2 dmu/dx)`` and ``log(h^-2 dnu_hat/dx)`` at ``sign * y`` for ``y > 0``."""
    def mu_h2(y):
        x = sign * np.asarray(y, dtype=float)
        return 2 * log_h(x) + model.C(x) - np.log(model.a(x))

    def nu_h2(y):
        x = sign * np.asarray(y, dtype=float)
        return -2 * log_h(x) - model.C(x)
    return mu_h2, nu_h2


def _side(model, log_h, sign, xs, x_max, x_cap=math.inf):
    f_mu, f_nu = _log_integrands(model, log_h, sign)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return (_side_integrals(f_mu, xs, x_max, x_cap=x_cap),
                _side_integrals(f_nu, xs, x_max, x_cap=x_cap))


def _h_reach(h, sign: float) -> float:
    """How far from 0 a Picard-built ``h`` is known in direction ``sign``."""
    if isinstance(h, PicardSolution):
        end = h.grid[-1] if sign > 0 else -h.grid[0]
        return float(end)
    return math.inf


def criteria_halfline(model: DiffusionModel, h=None, x_max: float = 100.0, psi=None,
                      delta: float = 0.05, level_floor: float = 1e-6,
                      sample_ratio: float = 1.25) -> ContinuousReport:
    """Three-way criterion on ``(0, inf)`` with harmonic ``h`` (``h = e^psi``; default ``h = 1``).

    Min branch (``nu_hat(h^-2) < inf``): ``mu(h^2 1_(0,x)) nu_hat(h^-2 1_(x,inf)) -> 0``.
    Max branch (``mu(h^2) < inf``): ``mu(h^2 1_(x,inf)) nu_hat(h^-2 1_(0,x)) -> 0``.
    Both integrals infinite: not discrete.
    """
    if model.domain != "halfline":
        raise ModelError("criteria_halfline needs a half-line model")
    log_h = _resolve_log_h(h, psi)
    if x_max > _h_reach(h, 1.0) * (1 + 1e-12):
        raise ValueError("x_max lies beyond the interval on which h was solved")
    xs = _samples(x_max, sample_ratio)
    mu, nu = _side(model, log_h, 1.0, xs, x_max, _h_reach(h, 1.0))
    report = ContinuousReport(Verdict.INCONCLUSIVE, "", None, None,
                              {"mu_h2": mu.status.to_dict(), "nu_hat_h-2": nu.status.to_dict()}, x_max)
    return _combine(report, nu.status.status, mu.status.status, xs,
                    mu.head + nu.tail, mu.tail + nu.head, delta, level_floor)


def halfline_products(model: DiffusionModel, xs, h=None, psi=None, x_max: float | None = None):
    """``(mu(h^2 1_(0,x)), nu_hat(h^-2 1_(x,inf)), mu(h^2 1_(x,inf)), nu_hat(h^-2 1_(0,x)))`` as logs."""
    xs = np.sort(np.asarray(xs, dtype=float))
    x_max = float(xs[-1]) if x_max is None else x_max
    mu, nu = _side(model, _resolve_log_h(h, psi), 1.0, xs, x_max)
    return mu.head, nu.tail, mu.tail, nu.head


def criteria_wholeline(model: DiffusionModel, h=None, x_max: float = 100.0, psi=None,
                       delta: float = 0.05, level_floor: float = 1e-6,
                       sample_ratio: float = 1.25) -> ContinuousReport:
    """Two-sided criterion on the real line, reference point 0, symmetric finiteness only.

    "Symmetric" means ``mu(h^2)`` is finite on both half-lines or on neither,
    and likewise ``nu_hat(h^-2)``.  Each product is the sum of the right-hand
    product and its mirror image on the left.
    """
    if model.domain != "wholeline":
        raise ModelError("criteria_wholeline needs a whole-line model")
    if model.theta != 0.0:
        raise ModelError("criteria_wholeline uses the reference point theta = 0")
    log_h = _resolve_log_h(h, psi)
    if x_max > min(_h_reach(h, 1.0), _h_reach(h, -1.0)) * (1 + 1e-12):
        raise ValueError("[-x_max, x_max] is not inside the interval on which h was solved")
    xs = _samples(x_max, sample_ratio)
    mu_r, nu_r = _side(model, log_h, 1.0, xs, x_max, _h_reach(h, 1.0))
    mu_l, nu_l = _side(model, log_h, -1.0, xs, x_max, _h_reach(h, -1.0))
    integrals = {"mu_h2_right": mu_r.status.to_dict(), "mu_h2_left": mu_l.status.to_dict(),
                 "nu_hat_h-2_right": nu_r.status.to_dict(), "nu_hat_h-2_left": nu_l.status.to_dict()}
    if mu_r.status.status != mu_l.status.status or nu_r.status.status != nu_l.status.status:
        raise ModelError("finiteness of mu(h^2) or nu_hat(h^-2) differs between the half-lines; "
                         "this is outside the implemented symmetric case")
    report = ContinuousReport(Verdict.INCONCLUSIVE, "", None, None, integrals, x_max)
    log_min = np.logaddexp(mu_r.head + nu_r.tail, mu_l.head + nu_l.tail)
    log_max = np.logaddexp(mu_r.tail + nu_r.head, mu_l.tail + nu_l.head)
    return _combine(report, nu_r.status.status, mu_r.status.status, xs, log_min, log_max,
                    delta, level_floor)


# ---------------------------------------------------------------------------
# Named models

def riccati_example(alpha: float) -> DiffusionModel:
    """``a = 1``, ``b = 0``, ``c = x^(2 alpha - 2)/4 + (alpha - 1) x^(alpha - 2)/2``; ``h = exp(x^alpha/(2 alpha))``."""
    return DiffusionModel("1", "0", f"x^({2 * alpha - 2})/4 + ({alpha - 1})*x^({alpha - 2})/2",
                          name=f"riccati(alpha={alpha})")


def oscillator(shift: float = 0.0) -> DiffusionModel:
    """``-f'' + (x^2 + shift) f`` on the real line; with ``shift = 1``, ``exp(x^2/2)`` is harmonic."""
    return DiffusionModel("1", "0", f"x^2 + {float(shift)!r}", domain="wholeline",
                          name=f"oscillator(shift={shift})")


def power_family(gamma: float, domain: str = "halfline") -> DiffusionModel:
    """``a = (1+x)^g``, ``b = (4g/5)(1+x)^(g-1)``, ``c = g(9g-10)/100 (1+x)^(g-2)``.

    ``h = (1+x)^(g/10)`` is harmonic and ``h^2 dmu = dx``.  With
    ``domain="wholeline"`` the coefficients use ``1+|x|`` and an odd drift, so
    the model is the mirror image of itself.
    """
    g = float(gamma)
    if domain == "halfline":
        return DiffusionModel(f"(1+x)^{g}", f"{4 * g / 5}*(1+x)^{g - 1}",
                              f"{g * (9 * g - 10) / 100}*(1+x)^{g - 2}", name=f"power-family(gamma={g})")
    sgn = lambda x: np.sign(x)  # noqa: E731
    return DiffusionModel(lambda x: (1 + np.abs(x)) ** g,
                          lambda x: sgn(x) * (4 * g / 5) * (1 + np.abs(x)) ** (g - 1),
                          lambda x: g * (9 * g - 10) / 100 * (1 + np.abs(x)) ** (g - 2),
                          domain="wholeline", name=f"power-family-even(gamma={g})")


def drift_example(alpha: float, sign: float = 1.0) -> DiffusionModel:
    """``f'' + sign * x^(alpha-1) f'`` on the half line, no killing."""
    return DiffusionModel("1", f"{float(sign)!r}*x^({alpha - 1})", "0",
                          name=f"drift(alpha={alpha}, sign={sign:+g})")
