import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from savings_hjb.model import ModelParams, compute_bound_constants, drift_f_over_x, lower_envelope_log, \
    upper_envelope_log
from savings_hjb.pde import (
    CFLError,
    Field,
    Grid2D,
    SolverConfig,
    apply_map,
    build_grid,
    check_bounds,
    compatibility_check,
    fixed_point_solve,
    initial_psi,
    read_field_csv,
    reconstruct_value,
    solve_linearized,
    spacetime_norm,
    stable_dt,
    terminal_condition,
    value_terminal_condition,
    weighted_norm,
)

PHI_INTEGRAL = (math.pi / (10 * math.sin(7 * math.pi / 10))) * (math.pi / (10 * math.sin(3 * math.pi / 10)))


# --- grids and fields -------------------------------------------------------

def test_build_grid_examples():
    g = build_grid((-1, 1), 3, 3)
    assert g.hx == g.hy == 1.0 and g.mesh()[0].size == 9
    g = build_grid(((-4, 4), (-4, 4)), 201, 201)
    assert g.hx == pytest.approx(0.04) and g.hy == pytest.approx(0.04)
    with pytest.raises(ValueError):
        build_grid((1, 1), 5, 5)
    with pytest.raises(ValueError):
        build_grid((-1, 1), 2, 5)


def test_node_positions():
    g = build_grid(((-1, 3), (0, 2)), 5, 3)
    assert np.allclose(g.x, [-1, 0, 1, 2, 3]) and np.allclose(g.y, [0, 1, 2])
    assert g.refined().nx == 9


def test_field_csv_roundtrip(tmp_path, base_params):
    g = build_grid((-1, 1), 5, 4)
    psi = initial_psi(g, base_params, 3)
    path = tmp_path / "f.csv"
    psi.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,y,K,N,value" and len(lines) == 1 + 3 * 5 * 4
    back = read_field_csv(path, "psi")
    assert np.array_equal(back.values, psi.values) and np.allclose(back.times, psi.times)


def test_log_interpolation_is_exact_for_power_profiles(base_params):
    g = build_grid((-2, 2), 9, 9)
    psi = initial_psi(g, base_params, 3)
    x, y = np.array([0.13, -1.7]), np.array([1.1, 0.4])
    assert np.allclose(psi.interpolate(0.37, x, y), np.exp(0.5 * (y - x)), rtol=1e-13)


# --- terminal data ----------------------------------------------------------

def test_terminal_condition(base_params):
    g = build_grid((-2, 2), 5, 5)
    term = terminal_condition(g, base_params)
    assert np.allclose(np.diag(term), 1.0)
    X, Y = g.mesh()
    node = np.argwhere(np.isclose(Y - X, 2.0))[0]
    assert term[tuple(node)] == pytest.approx(math.e, rel=1e-15)
    c = compute_bound_constants(base_params)
    assert np.all(term >= lower_envelope_log(Y - X, c)) and np.all(term <= upper_envelope_log(Y - X, c))


def test_value_terminal(base_params):
    g = build_grid((-2, 2), 5, 5)
    v = value_terminal_condition(g, base_params)
    assert v[2, 2] == pytest.approx(2.0)
    # degree-one homogeneity: shifting x and y by the same log s multiplies by s
    assert v[3, 3] == pytest.approx(math.e * v[2, 2])


# --- linear solves ----------------------------------------------------------

def test_zero_operator_step_is_identity():
    p = ModelParams(A=0.0, eps=0.0, sigma=0.0, alpha_f=0.0, T=0.1)
    g = build_grid((-1, 1), 7, 7)
    lam = solve_linearized(None, g, p, SolverConfig(n_slices=2, dt_pde=0.1))
    assert np.allclose(lam.values[0], lam.values[1], rtol=1e-14, atol=0)


def test_cfl_error_suggests_dt(base_params):
    g = build_grid((-4, 4), 41, 41)
    limit = stable_dt(g, base_params)
    with pytest.raises(CFLError) as exc:
        solve_linearized(initial_psi(g, base_params, 11), g, base_params, SolverConfig(n_slices=11, dt_pde=0.05))
    assert exc.value.suggested_dt == pytest.approx(limit)


def test_psi_validation(base_params):
    g = build_grid((-1, 1), 5, 5)
    bad = initial_psi(g, base_params, 101)
    bad.values[3, 2, 2] = 0.0
    with pytest.raises(ValueError):
        solve_linearized(bad, g, base_params)
    with pytest.raises(ValueError):
        solve_linearized(initial_psi(g, base_params, 5), g, base_params)


def mms_error(n, dt, scheme="explicit_upwind", formulation="lambda", kappa=0.5):
    p = ModelParams(A=1.0, beta=0.5, gamma=0.5, eps=0.1, sigma=0.2, T=1.0)
    c = compute_bound_constants(p)
    g = build_grid((-2, 2), n, n)
    X, Y = g.mesh()
    psi = initial_psi(g, p, 11)
    z = Y - X
    J = np.exp(z) * np.clip(psi.values[0], lower_envelope_log(z, c), upper_envelope_log(z, c)) ** (-1 / p.gamma)
    bx = -J + p.A * np.exp((1 - p.beta) * z) + 0.5 * p.eps**2
    by = drift_f_over_x(np.exp(Y), p) - 0.5 * p.sigma**2
    r = p.A * p.beta * np.exp((1 - p.beta) * z)
    coef = -kappa - p.gamma * bx + p.gamma * by + 0.5 * (p.eps**2 + p.sigma**2) * p.gamma**2 + r
    exact = lambda t: np.exp(p.gamma * z) * np.exp(kappa * (p.T - t))
    cfg = SolverConfig(n_slices=11, scheme=scheme, formulation=formulation, dt_pde=dt)
    lam = solve_linearized(psi, g, p, cfg, source=lambda t, XX, YY: -coef * exact(t))
    ex = exact(lam.times[:, None, None])
    return float(np.max(np.abs(lam.values - ex) / ex))


@pytest.mark.parametrize("scheme", ["explicit_upwind", "adi_semi_implicit"])
def test_manufactured_solution_first_order(scheme):
    errs = [mms_error(n, dt, scheme) for n, dt in ((21, 0.01), (41, 0.005), (81, 0.0025))]
    for a, b in zip(errs, errs[1:]):
        assert a / b >= 1.8


def test_w_form_matches_lambda_form():
    a = mms_error(41, 0.005, formulation="lambda")
    b = mms_error(41, 0.005, formulation="w")
    assert b < 2 * a and b < 0.06


# --- norms ------------------------------------------------------------------

def test_phi_integral():
    g = build_grid((-9, 9), 721, 721)
    assert weighted_norm(np.ones((721, 721)), g) ** 2 == pytest.approx(PHI_INTEGRAL, rel=0.01)
    assert PHI_INTEGRAL == pytest.approx(0.15080, abs=5e-5)


@given(c=st.floats(-50, 50))
@settings(max_examples=25)
def test_norm_homogeneous(c):
    g = build_grid((-3, 3), 21, 21)
    f = np.cos(g.mesh()[0]) + 2.0
    for kind in ("phi", "phi_K2", "phi_N2"):
        assert weighted_norm(c * f, g, kind) == pytest.approx(abs(c) * weighted_norm(f, g, kind), rel=1e-12)


def test_norm_kinds(base_params):
    g = build_grid((-3, 3), 21, 21)
    assert weighted_norm(np.zeros((21, 21)), g) == 0.0
    assert weighted_norm(np.ones((21, 21)), g, "phi_tilde", base_params) > 0
    with pytest.raises(ValueError):
        weighted_norm(np.ones((21, 21)), g, "phi_tilde")
    with pytest.raises(ValueError):
        weighted_norm(np.ones((21, 21)), g, "sobolev")
    vals = np.ones((3, 21, 21))
    assert spacetime_norm(vals, g, np.array([0.0, 0.5, 1.0])) == pytest.approx(weighted_norm(vals[0], g))


# --- bounds and compatibility ----------------------------------------------

def test_bound_report_sanity(base_params):
    g = build_grid((-2, 2), 21, 21)
    c = compute_bound_constants(base_params)
    psi = initial_psi(g, base_params, 2)
    rep = check_bounds(Field(g, psi.times, psi.values, "lambda"), c)
    assert rep.violations == 0 and rep.within(0.0)
    X, Y = g.mesh()
    low = Field(g, psi.times, np.broadcast_to(0.5 * lower_envelope_log(Y - X, c), psi.values.shape).copy(),
                "lambda")
    rep = check_bounds(low, c)
    assert rep.violations == rep.checked and rep.min_lower_gap == pytest.approx(-0.5)
    assert "violations=" in rep.to_text()


def test_compatibility_metric(base_params):
    g = build_grid((-2, 2), 81, 81)
    t = np.array([0.0, 1.0])
    lam = Field(g, t, np.broadcast_to(terminal_condition(g, base_params), (2, 81, 81)).copy(), "lambda")
    v = Field(g, t, np.broadcast_to(value_terminal_condition(g, base_params), (2, 81, 81)).copy(), "v")
    err = compatibility_check(v, lam)
    assert err < g.hx**2
    flat = Field(g, t, np.ones((2, 81, 81)), "v")
    assert compatibility_check(flat, lam) == pytest.approx(1.0)


def test_value_per_node_quadrature():
    p = ModelParams(A=0.0, eps=0.0, sigma=0.0, alpha_f=0.0, T=1.0)
    g = build_grid((-1, 1), 11, 11)
    cfg = SolverConfig(n_slices=11, dt_pde=0.01)
    lam = initial_psi(g, p, 11)
    lam = Field(g, lam.times, lam.values, "lambda")
    v = reconstruct_value(lam, g, p, cfg)
    X, Y = g.mesh()
    q = np.exp(Y) * lam.values[0] ** (1 - 1 / p.gamma) * p.gamma / (1 - p.gamma)
    expect = value_terminal_condition(g, p)[None] + (p.T - lam.times)[:, None, None] * q[None]
    assert np.allclose(v.values, expect, rtol=1e-12)
    assert v.quantity == "v"


# --- fixed point ------------------------------------------------------------

@pytest.fixture(scope="module")
def solved_101():
    p = ModelParams(A=1.0, beta=0.5, gamma=0.5, eps=0.01, sigma=0.1, T=1.0)
    g = build_grid((-4, 4), 101, 101)
    lam, rep = fixed_point_solve(g, p, SolverConfig(), measure_boundary=True)
    return p, g, lam, rep


def test_trivial_tolerance(base_params):
    g = build_grid((-2, 2), 21, 21)
    _, rep = fixed_point_solve(g, base_params, SolverConfig(picard_tol=1e9))
    assert rep.converged and rep.iterations == 1 and len(rep.residuals) == 1


def test_fixed_point_converges(solved_101):
    p, g, lam, rep = solved_101
    assert rep.converged and rep.iterations <= 50
    assert len(rep.residuals) == rep.iterations
    r = rep.residuals
    assert all(b <= a for a, b in zip(r[1:], r[2:]))
    assert rep.clamp_fractions[-1] < 0.01
    assert np.all(lam.values > 0)
    assert "converged: true" in rep.to_text()


def test_fixed_point_self_consistency(solved_101):
    p, g, lam, rep = solved_101
    again = apply_map(lam, p)
    rel = spacetime_norm(again.values - lam.values, g, lam.times) / spacetime_norm(lam.values, g, lam.times)
    assert rel < 2 * SolverConfig().picard_tol


def test_boundary_influence_reported(solved_101):
    p, g, lam, rep = solved_101
    assert 0.0 <= rep.boundary_influence < 0.01


def test_bounds_on_solution(solved_101):
    p, g, lam, rep = solved_101
    assert check_bounds(lam, compute_bound_constants(p)).within(0.02)


def test_scale_invariance_without_population_drift():
    p = ModelParams(alpha_f=0.0, sigma=0.1, eps=0.01)
    g = build_grid((-3, 3), 61, 61)
    lam, _ = fixed_point_solve(g, p, SolverConfig())
    m = g.interior_mask(0.25)
    X, Y = g.mesh()
    diag = np.isclose(Y - X, 0.0) & m
    vals = lam.values[0][diag]
    assert np.ptp(vals) / vals.mean() < 0.01
