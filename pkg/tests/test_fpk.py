"""Finite-volume density solvers against moment oracles."""

import math

import numpy as np
import pytest

from mfrs import (InitialLaw, LQScalarModel, RiskParams, TimeGrid,
                  discretize_initial, solve_fpk_x, solve_fpk_xz,
                  solve_scalar_riccati, terminal_exponential_moment)
from mfrs.errors import (BlowUpInput, CflViolation, DomainTruncationWarning,
                         MassLoss)


def _mass(m, dx):
    return float(np.sum(m) * dx)


def test_discretize_initial_laws():
    n_x, lo, hi = 100, -4.0, 6.0
    dx = (hi - lo) / n_x
    gauss = discretize_initial(InitialLaw.gaussian(1.0, 0.5), lo, hi, n_x)
    assert _mass(gauss, dx) == pytest.approx(1.0, abs=1e-12)
    centers = lo + (np.arange(n_x) + 0.5) * dx
    assert np.sum(centers * gauss) * dx == pytest.approx(1.0, abs=1e-3)

    dirac = discretize_initial(InitialLaw.dirac(1.234), lo, hi, n_x)
    assert _mass(dirac, dx) == pytest.approx(1.0, abs=1e-12)
    assert np.sum(centers * dirac) * dx == pytest.approx(1.234, abs=1e-12)
    assert np.count_nonzero(dirac) <= 2

    samp = discretize_initial(InitialLaw.from_samples([0.0, 1.0, 2.0]), lo, hi, n_x)
    assert np.sum(centers * samp) * dx == pytest.approx(1.0, abs=1e-12)


def test_heat_kernel_variance():
    # pure diffusion from a single occupied cell: Var(m_t) = sigma^2 t
    model = LQScalarModel(a=0.0, b=0.0, sigma=1.0, qT=0.0)
    n_x = 201
    bounds = (-5.025, 5.025)  # x=0 is a cell center, so the Dirac fills one cell
    grid = TimeGrid(T=0.2, n_steps=100)
    dens = solve_fpk_x(model, np.zeros(101), InitialLaw.dirac(0.0), grid, n_x,
                       bounds)
    dx = (bounds[1] - bounds[0]) / n_x
    centers = bounds[0] + (np.arange(n_x) + 0.5) * dx
    assert np.count_nonzero(dens[0]) == 1
    final = dens[-1]
    mean = np.sum(centers * final) * dx
    var = np.sum((centers - mean) ** 2 * final) * dx
    assert abs(var - 0.2) / 0.2 <= 0.02


def test_contraction_mean_decay():
    # sigma ~ 0, a < 0: mean follows e^{a t} within O(dx)
    model = LQScalarModel(a=-1.0, b=0.0, sigma=1e-6, qT=0.0)
    n_x = 150
    bounds = (-1.0, 2.0)
    grid = TimeGrid(T=1.0, n_steps=300)
    dens = solve_fpk_x(model, np.zeros(301), InitialLaw.dirac(1.0), grid, n_x,
                       bounds)
    dx = (bounds[1] - bounds[0]) / n_x
    centers = bounds[0] + (np.arange(n_x) + 0.5) * dx
    mean = np.sum(centers * dens[-1]) * dx
    assert abs(mean - math.exp(-1.0)) <= 2.0 * dx


def test_identity_evolution():
    model = LQScalarModel(a=0.0, b=0.0, sigma=0.0, qT=0.0)
    grid = TimeGrid(T=1.0, n_steps=10)
    init = InitialLaw.gaussian(0.5, 0.3)
    dens = solve_fpk_x(model, np.zeros(11), init, grid, 80, (-4.0, 5.0))
    assert np.array_equal(dens[0], dens[-1])
    assert _mass(dens[-1], 9.0 / 80) == pytest.approx(1.0, abs=1e-14)


def test_cfl_violation_reports_required_dt():
    model = LQScalarModel(a=0.0, b=0.0, sigma=1.0, qT=0.0)
    grid = TimeGrid(T=1.0, n_steps=10)  # dt = 0.1, far too big
    with pytest.raises(CflViolation) as err:
        solve_fpk_x(model, np.zeros(11), InitialLaw.dirac(0.0), grid, 200,
                    (-5.0, 5.0))
    assert 0 < err.value.dt_required < 0.1


def test_mass_loss_on_small_domain():
    model = LQScalarModel(a=0.0, b=0.0, sigma=1.0, qT=0.0)
    grid = TimeGrid(T=0.5, n_steps=2000)
    with pytest.raises(MassLoss):
        solve_fpk_x(model, np.zeros(2001), InitialLaw.dirac(0.0), grid, 50,
                    (-0.5, 0.5))


def test_xz_decoupled_case_matches_1d():
    # Q = QT = 0 makes pi vanish: z stays a point mass, x matches the 1-D solve
    model = LQScalarModel(a=-0.3, b=1.0, sigma=0.8, q=0.0, qT=0.0)
    risk = RiskParams(alpha=0.5)
    grid = TimeGrid(T=0.5, n_steps=300)
    sol = solve_scalar_riccati(model, risk, grid)
    assert np.max(np.abs(sol.pi)) == 0.0
    dens = solve_fpk_xz(model, sol, InitialLaw.dirac(0.5), grid, 120, 40,
                        (-4.0, 5.0))
    # all z mass still in the first cell
    assert np.sum(dens.mu[:, 1:]) == 0.0
    oned = solve_fpk_x(model, np.zeros(301), InitialLaw.dirac(0.5), grid, 120,
                       (-4.0, 5.0))
    assert np.max(np.abs(dens.x_marginal() - oned[-1])) < 1e-12


def test_xz_ou_moments():
    # b = 0: x is an Ornstein-Uhlenbeck process regardless of the cost
    model = LQScalarModel(a=-0.5, b=0.0, sigma=1.0, q=0.0, qT=1.0)
    risk = RiskParams(alpha=0.3)
    grid = TimeGrid(T=1.0, n_steps=500)
    sol = solve_scalar_riccati(model, risk, grid)
    dens = solve_fpk_xz(model, sol, InitialLaw.dirac(1.0), grid, 220, 30,
                        (-6.0, 7.0))
    xc = dens.x_centers()
    marg = dens.x_marginal()
    mean = np.sum(xc * marg) * dens.dx
    var = np.sum((xc - mean) ** 2 * marg) * dens.dx
    exact_mean = math.exp(-0.5)
    exact_var = (1.0 - math.exp(-1.0)) / 1.0
    assert abs(mean - exact_mean) / abs(exact_mean) <= 0.02
    assert abs(var - exact_var) / exact_var <= 0.02


def test_xz_mass_conserved_every_step():
    model = LQScalarModel(a=0.0, b=1.0, sigma=0.5, q=0.0, qT=1.0)
    risk = RiskParams(alpha=0.5)
    grid = TimeGrid(T=1.0, n_steps=600)
    sol = solve_scalar_riccati(model, risk, grid)
    dens = solve_fpk_xz(model, sol, InitialLaw.dirac(1.0), grid, 150, 60,
                        (-5.0, 6.0))
    assert np.max(np.abs(dens.mass_history - 1.0)) <= 1e-8
    assert np.min(dens.mu) >= -1e-12


def test_xz_requires_matching_grid_and_usable_riccati():
    model = LQScalarModel(a=0.0, b=0.0, sigma=1.0, qT=1.0)
    risk = RiskParams(alpha=1.0)
    blow = solve_scalar_riccati(model, risk, TimeGrid(T=2.0, n_steps=4000))
    with pytest.raises(BlowUpInput):
        solve_fpk_xz(model, blow, InitialLaw.dirac(1.0),
                     TimeGrid(T=2.0, n_steps=4000), 50, 20, (-5.0, 5.0))
    ok = solve_scalar_riccati(model, risk, TimeGrid(T=0.5, n_steps=100))
    with pytest.raises(ValueError):
        solve_fpk_xz(model, ok, InitialLaw.dirac(1.0),
                     TimeGrid(T=0.5, n_steps=200), 50, 20, (-5.0, 5.0))


def test_marginalization_commutes():
    model = LQScalarModel(a=0.0, b=1.0, sigma=0.5, q=0.0, qT=1.0)
    risk = RiskParams(alpha=0.5)
    grid = TimeGrid(T=1.0, n_steps=900)
    sol = solve_scalar_riccati(model, risk, grid)
    dens = solve_fpk_xz(model, sol, InitialLaw.dirac(1.0), grid, 200, 80,
                        (-5.0, 6.0))
    gain = (model.b / model.r) * sol.pi
    oned = solve_fpk_x(model, gain, InitialLaw.dirac(1.0), grid, 200,
                       (-5.0, 6.0))
    l1 = float(np.sum(np.abs(dens.x_marginal() - oned[-1])) * dens.dx)
    assert l1 <= 0.02


def test_terminal_moment_point_mass_at_zero():
    model = LQScalarModel(a=-0.3, b=1.0, sigma=0.8, q=0.0, qT=0.0)
    risk = RiskParams(alpha=0.5)
    grid = TimeGrid(T=0.5, n_steps=300)
    sol = solve_scalar_riccati(model, risk, grid)
    dens = solve_fpk_xz(model, sol, InitialLaw.dirac(0.5), grid, 120, 40,
                        (-4.0, 5.0))
    # h = 0 and all mass at the z = 0 sample point: the moment is exactly 1
    assert terminal_exponential_moment(dens, model, risk) == pytest.approx(
        1.0, rel=1e-12)


def test_terminal_moment_gaussian_benchmark():
    model = LQScalarModel(a=0.0, b=0.0, sigma=1.0, q=0.0, qT=1.0)
    risk = RiskParams(alpha=1.0)
    grid = TimeGrid(T=0.5, n_steps=400)
    sol = solve_scalar_riccati(model, risk, grid)
    dens = solve_fpk_xz(model, sol, InitialLaw.dirac(1.0), grid, 200, 50,
                        (-8.0, 10.0))
    moment = terminal_exponential_moment(dens, model, risk)
    exact = math.e * math.sqrt(2.0)
    assert abs(moment - exact) / exact <= 0.01


def test_domain_truncation_warning():
    model = LQScalarModel(a=0.0, b=0.0, sigma=1.0, q=0.0, qT=1.0)
    risk = RiskParams(alpha=1.0)
    grid = TimeGrid(T=0.5, n_steps=500)
    sol = solve_scalar_riccati(model, risk, grid)
    dens = solve_fpk_xz(model, sol, InitialLaw.dirac(1.0), grid, 120, 30,
                        (-3.0, 4.0))
    with pytest.warns(DomainTruncationWarning):
        terminal_exponential_moment(dens, model, risk)
