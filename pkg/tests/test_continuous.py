import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from discspec.continuous import (
    ChebGrid, C_and_measures, DiffusionModel, build_grid, comparison_check, criteria_halfline,
    criteria_wholeline, cumulative_integral, diffusion_from_dict, drift_example, fd_derivatives,
    fd_weights, h_transform, h_transform_drift, halfline_products, harmonic_residual,
    molchanov_check, oscillator, peano_baker_terms, picard_solve, power_family, riccati_example,
    validate_diffusion,
)
from discspec.criteria import Verdict
from discspec.errors import ConvergenceError, ModelError

XS = np.array([0.5, 1.0, 2.0])


# --- coefficients and measures ------------------------------------------------

def test_zero_drift_measures():
    m = DiffusionModel("1 + x")
    C, dmu, dnu = C_and_measures(m, XS)
    assert np.all(C == 0)
    assert np.allclose(dmu, 1 / (1 + XS)) and np.allclose(dnu, 1.0)


def test_power_family_measures():
    g = 3.0
    C, dmu, dnu = C_and_measures(power_family(g), np.array([1.0, 10.0, 100.0]))
    x = np.array([1.0, 10.0, 100.0])
    assert np.allclose(C, 4 * g / 5 * np.log1p(x), rtol=1e-12)
    assert np.allclose(dmu, (1 + x) ** (-g / 5), rtol=1e-12)
    assert np.allclose(dnu, (1 + x) ** (-4 * g / 5), rtol=1e-12)


def test_negative_drift_measure():
    m = drift_example(2.0, sign=-1.0)
    C, _, _ = C_and_measures(m, np.array([1.0, 3.0]))
    assert np.allclose(C, -np.array([1.0, 9.0]) / 2, rtol=1e-12)
    alpha = 3.0
    x = np.array([5.0, 20.0])
    C = drift_example(alpha, sign=-1.0).C(x)
    assert np.allclose(C, -x ** alpha / alpha, rtol=1e-12)


def test_composite_and_adaptive_C_agree():
    m = power_family(1.5)
    x = np.array([0.0, 0.3, 7.0, 120.0, 5000.0])
    assert np.allclose(m.C(x), C_and_measures(m, x)[0], rtol=1e-11, atol=1e-13)


def test_singular_drift_rejected_by_quadrature():
    m = DiffusionModel("1", "x^(-1.5)", theta=1.0)
    with pytest.raises(ModelError, match="locally integrable"):
        C_and_measures(m, [0.0])


def test_cumulative_integral_signed():
    vals = cumulative_integral(lambda x: np.cos(x), np.array([-2.0, 0.0, 1.0, 30.0]), 0.0)
    assert np.allclose(vals, np.sin([-2.0, 0.0, 1.0, 30.0]), atol=1e-13)


def test_validation():
    assert validate_diffusion(riccati_example(2.0)) == []
    assert any("a(x)" in p for p in validate_diffusion(DiffusionModel("x - 1")))
    assert any("c(x)" in p for p in validate_diffusion(DiffusionModel("1", "0", "-1")))
    assert validate_diffusion(DiffusionModel("1", "0", "-1", signed_c=True)) == []
    with pytest.raises(ModelError):
        diffusion_from_dict({"kind": "continuous", "a": "-1"})
    with pytest.raises(ModelError):
        diffusion_from_dict({"kind": "continuous", "b": "1"})
    with pytest.raises(ModelError):
        DiffusionModel("1", domain="circle")
    m = diffusion_from_dict(oscillator(1.0).to_dict())
    assert m.domain == "wholeline" and m.c(np.array([2.0]))[0] == pytest.approx(5.0)


# --- successive approximations -----------------------------------------------

def test_no_killing_converges_in_one_step():
    sol = picard_solve(DiffusionModel("1", "x"), 2.5, 0.0, (0, 4))
    assert sol.iterations_used == 1 and sol.converged
    assert np.all(sol.f_values == 2.5)


@pytest.fixture(scope="module")
def riccati_solution():
    return picard_solve(riccati_example(2.0), 1.0, 0.0, (0, 3), tol=1e-10, keep_iterates=True)


def test_riccati_solution_matches_closed_form(riccati_solution):
    sol = riccati_solution
    assert sol.converged and sol.iterations_used <= 60
    exact = np.exp(sol.grid ** 2 / 4)
    assert np.max(np.abs(sol.f_values / exact - 1)) < 1e-6
    assert sol.residual < 1e-9
    assert sol.f(1.7) == pytest.approx(math.exp(1.7 ** 2 / 4), rel=1e-9)
    assert sol.flux(1.7) == pytest.approx(1.7 / 2 * math.exp(1.7 ** 2 / 4), rel=1e-9)


def test_iterates_monotone(riccati_solution):
    its = riccati_solution.iterates
    assert riccati_solution.monotone
    for prev, nxt in zip(its, its[1:]):
        assert np.all(nxt >= prev - 1e-13 * np.maximum(1, np.abs(nxt)))


def test_oscillator_harmonic_on_both_sides():
    sol = picard_solve(oscillator(1.0), 1.0, 0.0, (-3, 3))
    assert sol.converged
    assert np.max(np.abs(sol.f_values / np.exp(sol.grid ** 2 / 2) - 1)) < 1e-6
    assert sol.f(-2.0) == pytest.approx(sol.f(2.0), rel=1e-10)
    assert sol.sign_changes() == []


def test_nonconvergence_flagged_and_strict_raises():
    sol = picard_solve(oscillator(1.0), 1.0, 0.0, (0, 3), max_iter=3)
    assert not sol.converged and sol.iterations_used == 3
    with pytest.raises(ConvergenceError):
        picard_solve(oscillator(1.0), 1.0, 0.0, (0, 3), max_iter=3, strict=True)


def test_interval_must_contain_theta():
    with pytest.raises(ValueError):
        picard_solve(DiffusionModel("1", theta=2.0), interval=(0, 1))


def test_interpolation_outside_interval(riccati_solution):
    with pytest.raises(ValueError):
        riccati_solution.f(3.5)


def test_sign_changes_reported_for_negative_killing():
    m = DiffusionModel("1", "0", "-4", signed_c=True)  # f = cos(2x)
    sol = picard_solve(m, 1.0, 0.0, (0, 3))
    assert sol.converged
    assert np.allclose(sol.f_values, np.cos(2 * sol.grid), atol=1e-10)
    changes = sol.sign_changes()
    assert len(changes) == 2 and abs(changes[0] - math.pi / 4) < 0.2


def test_grid_refinement_stability():
    model = riccati_example(2.0)
    tol = 1e-10
    coarse = picard_solve(model, interval=(0, 3), tol=tol)
    edges = coarse.cells.edges
    fine_edges = np.sort(np.concatenate([edges, 0.5 * (edges[:-1] + edges[1:])]))
    fine = picard_solve(model, interval=(0, 3), tol=tol, grid=ChebGrid(fine_edges, 16, 0.0))
    xs = np.linspace(0, 3, 31)
    f_c, f_f = coarse.f(xs), fine.f(xs)
    assert np.max(np.abs(f_c - f_f) / np.abs(f_f)) < 5 * tol


def test_build_grid_refines_where_G_is_large():
    grid = build_grid(oscillator(1.0), (0, 6))
    widths = np.diff(grid.edges)
    assert widths[-1] < widths[0]


def test_peano_baker_third_term_closed_form():
    alpha = 2.0
    pb = peano_baker_terms(riccati_example(alpha), interval=(0, 3), n_terms=4)
    x = XS
    expected = x ** alpha / (2 * alpha) + x ** (2 * alpha) / (8 * alpha * (2 * alpha - 1))
    assert np.allclose(pb.evaluate(3, x), expected, rtol=1e-10, atol=1e-12)
    assert np.all(pb.terms[1][0] == 0) and np.all(pb.terms[3][0] == 0)


def test_peano_baker_matches_picard_riccati(riccati_solution):
    pb = peano_baker_terms(riccati_example(2.0), interval=(0, 3), n_terms=6,
                           grid=riccati_solution.cells)
    for n in range(1, 7):
        it = riccati_solution.iterates[n - 1]
        assert np.max(np.abs(pb.partial_sum(n) - it) / np.maximum(1, np.abs(it))) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 3), st.floats(0, 2), st.floats(0.5, 6), st.floats(0, 2))
def test_peano_baker_matches_picard_random_killing(c0, c1, freq, g1):
    model = DiffusionModel("1", "0", lambda x: c0 + c1 * np.sin(freq * x) ** 2)
    grid = build_grid(model, (0, 1))
    sol = picard_solve(model, 1.0, g1, grid=grid, max_iter=6, keep_iterates=True)
    pb = peano_baker_terms(model, (1.0, g1), n_terms=len(sol.iterates), grid=grid)
    for n, it in enumerate(sol.iterates, start=1):
        assert np.max(np.abs(pb.partial_sum(n) - it) / np.maximum(1, np.abs(it))) < 1e-12


def test_comparison_supersolution_dominates(riccati_solution):
    sol = riccati_solution
    model = riccati_example(2.0)
    bar = 1.1 * sol.node_values + np.array([-0.05, 0.0])[:, None, None]
    chk = comparison_check(sol, model, bar)
    assert chk.preconditions_hold and chk.dominates and chk.min_margin > 0


def test_comparison_rejects_subsolution(riccati_solution):
    chk = comparison_check(riccati_solution, riccati_example(2.0), 0.9 * riccati_solution.node_values)
    assert not chk.preconditions_hold and not chk.dominates


def test_comparison_callable_form(riccati_solution):
    def bar(x):
        return np.stack([1.2 * np.exp(x ** 2 / 4), 1.2 * x / 2 * np.exp(x ** 2 / 4)])
    chk = comparison_check(riccati_solution, riccati_example(2.0), bar)
    assert chk.preconditions_hold and chk.dominates


# --- finite differences and residuals ------------------------------------------

def test_fd_weights_classic_stencil():
    w = fd_weights(0.0, np.array([-1.0, 0.0, 1.0]), 2)
    assert np.allclose(w[:, 1], [-0.5, 0, 0.5]) and np.allclose(w[:, 2], [1, -2, 1])


def test_fd_derivatives_fourth_order():
    x = np.linspace(0, 2, 2001)
    d1, d2 = fd_derivatives(np.sin(x), x[1] - x[0], 4)
    assert np.max(np.abs(d1 - np.cos(x))) < 1e-10
    assert np.max(np.abs(d2 + np.sin(x))) < 1e-8


def test_riccati_harmonic_residual():
    assert harmonic_residual(riccati_example(2.0), "x^2/4", (0.5, 3), grid_n=10_000) < 1e-6


def test_power_family_harmonic_residual():
    for g in (1.5, 3.0):
        res = harmonic_residual(power_family(g), f"{g / 10}*log(1+x)", (0, 10))
        assert res < 1e-8


def test_constant_is_harmonic_without_killing():
    m = DiffusionModel("1", lambda x: np.sin(x))
    assert harmonic_residual(m, "0", (0, 5)) == 0.0


# --- transforms ----------------------------------------------------------------

def test_zero_shift_transform_is_identity():
    base = DiffusionModel("1 + x^2", "x")
    out = h_transform(base, "0")
    x = np.linspace(0.1, 5, 40)
    assert np.allclose(out.b(x), base.b(x)) and np.allclose(out.c(x), 0.0, atol=1e-12)
    assert not out.negative_killing


def test_transform_recovers_riccati_killing():
    out = h_transform(DiffusionModel("1", "x"), "x^2/4")
    x = np.linspace(0.5, 3, 50)
    assert np.allclose(out.b(x), 0.0, atol=1e-8)
    assert np.max(np.abs(out.c(x) - riccati_example(2.0).c(x))) < 1e-8


@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0])
def test_drift_transform_matches_closed_form(alpha):
    base = DiffusionModel("1", f"-x^({alpha - 1})")
    out = h_transform_drift(base, "1/(1+x)")
    x = np.linspace(0.5, 3, 30)
    b, db = 1 / (1 + x), -1 / (1 + x) ** 2
    zero_order = 0.5 * (0.5 * b ** 2 + db - (0.5 * x ** alpha - alpha + 1) * x ** (alpha - 2))
    assert np.max(np.abs(out.c(x) + zero_order)) < 1e-9


def test_transform_flags_negative_killing():
    out = h_transform(DiffusionModel("1"), "x")  # zero-order term psi'^2 = 1 gives c = -1
    assert out.negative_killing
    assert np.allclose(out.c(XS), -1.0)


def test_molchanov():
    assert molchanov_check(DiffusionModel("1", "0", "x")) == "discrete"
    assert molchanov_check(DiffusionModel("1", "0", "1/(1+x)")) == "not-discrete"
    with pytest.raises(ModelError):
        molchanov_check(DiffusionModel("2", "0", "x"))


# --- criteria ------------------------------------------------------------------

def test_power_family_products_closed_forms():
    g = 3.0
    xs = np.array([10.0, 100.0])
    mu_head, nu_tail, _, _ = halfline_products(power_family(g), xs, psi=f"{g / 10}*log(1+x)",
                                               x_max=1000)
    assert np.allclose(np.exp(mu_head), xs, rtol=1e-12)
    assert np.allclose(np.exp(nu_tail), (1 + xs) ** (1 - g) / (g - 1), rtol=1e-8)


@pytest.mark.parametrize("gamma,verdict", [(3.0, Verdict.DISCRETE_MIN), (1.5, Verdict.NOT_DISCRETE)])
def test_power_family_verdicts(gamma, verdict):
    rep = criteria_halfline(power_family(gamma), psi=f"{gamma / 10}*log(1+x)", x_max=1000)
    assert rep.verdict == verdict
    assert rep.fitted_exponent == pytest.approx(2 - gamma, abs=0.1)


@pytest.mark.parametrize("sign,alpha,verdict", [
    (1.0, 2.0, Verdict.DISCRETE_MIN), (1.0, 1.0, Verdict.NOT_DISCRETE),
    (-1.0, 2.0, Verdict.DISCRETE_MAX), (-1.0, 1.0, Verdict.NOT_DISCRETE),
])
def test_drift_family_verdicts(sign, alpha, verdict):
    rep = criteria_halfline(drift_example(alpha, sign), x_max=8 if alpha > 1 else 100)
    assert rep.verdict == verdict


def test_flat_halfline_is_part_three():
    rep = criteria_halfline(DiffusionModel("1"), x_max=100)
    assert rep.verdict == Verdict.NOT_DISCRETE and rep.branch == "part-3"


def test_picard_harmonic_feeds_criteria():
    model = riccati_example(2.0)
    sol = picard_solve(model, interval=(0, 12))
    rep = criteria_halfline(model, h=sol, x_max=12)
    assert rep.verdict == Verdict.DISCRETE_MIN
    with pytest.raises(ValueError):
        criteria_halfline(model, h=sol, x_max=20)


def test_oscillator_wholeline_discrete():
    rep = criteria_wholeline(oscillator(1.0), psi="x^2/2", x_max=50)
    assert rep.verdict == Verdict.DISCRETE_MIN


def test_flat_wholeline_part_three():
    rep = criteria_wholeline(DiffusionModel("1", domain="wholeline"), x_max=100)
    assert rep.verdict == Verdict.NOT_DISCRETE and rep.branch == "part-3"


def test_even_power_family_matches_two_half_lines():
    g = 3.0
    psi = lambda x: g / 10 * np.log1p(np.abs(x))  # noqa: E731
    whole = criteria_wholeline(power_family(g, "wholeline"), psi=psi, x_max=1000)
    half = criteria_halfline(power_family(g), psi=f"{g / 10}*log(1+x)", x_max=1000)
    assert whole.verdict == Verdict.DISCRETE_MIN
    xw, lw = whole.trace("min")
    xh, lh = half.trace("min")
    assert np.allclose(xw, xh)
    assert np.allclose(lw, lh + math.log(2), atol=1e-9)


def test_asymmetric_wholeline_rejected():
    with pytest.raises(ModelError, match="symmetric case"):
        criteria_wholeline(DiffusionModel("1", "1", domain="wholeline"), x_max=50)


def test_wholeline_requires_zero_reference_point():
    with pytest.raises(ModelError):
        criteria_wholeline(DiffusionModel("1", domain="wholeline", theta=1.0))


def test_report_round_trips_to_json():
    import json
    rep = criteria_halfline(power_family(3.0), psi="0.3*log(1+x)", x_max=1000)
    back = json.loads(json.dumps(rep.to_dict(), allow_nan=False))
    assert back["verdict"] == "DiscreteMin" and back["min"]["trace"]
