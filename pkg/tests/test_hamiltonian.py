"""Hamiltonian evaluation: closed form vs bracketed minimization oracles."""

import numpy as np
import pytest

from mfrs import (GenericModel, LQScalarModel, RiskParams, lq_hamiltonian,
                  lq_scalar_generic, numeric_hamiltonian, tilde_reduce)
from mfrs.errors import EmptyBounds, NonpositiveRho


def _generic(f, g):
    return GenericModel(f=f, g=g,
                        sigma=lambda x: np.ones_like(np.asarray(x, dtype=float)),
                        h=lambda x, s: 0.0 * x)


def grid_minimize(objective, lo, hi, n=100_001):
    """Independent dense-grid oracle for 1-D minimization."""
    vs = np.linspace(lo, hi, n)
    vals = np.array([objective(v) for v in vs])
    i = int(np.argmin(vals))
    return float(vals[i]), float(vs[i])


def test_lq_hamiltonian_reference_point():
    model = LQScalarModel(a=1.0, b=1.0, sigma=1.0, r=1.0)
    res = lq_hamiltonian(model, x=2.0, q=3.0, rho=1.0)
    assert res.value == pytest.approx(1.5)
    assert res.v_star == pytest.approx(-3.0)
    # dense grid oracle on v -> 3*(2 + v) ... full objective q*g + rho*f
    oracle_val, oracle_v = grid_minimize(
        lambda v: 3.0 * (2.0 + v) + 0.5 * v * v, -10, 10)
    assert res.value == pytest.approx(oracle_val, abs=1e-6)
    assert res.v_star == pytest.approx(oracle_v, abs=1e-3)


def test_lq_hamiltonian_degenerate_directions():
    model = LQScalarModel(a=1.0, b=1.0, sigma=1.0, r=1.0)
    res = lq_hamiltonian(model, x=5.0, q=0.0, rho=1.0)
    assert res.value == 0.0 and res.v_star == 0.0

    no_control = LQScalarModel(a=2.0, b=0.0, sigma=1.0, r=1.0)
    res = lq_hamiltonian(no_control, x=1.0, q=1.0, rho=1.0)
    assert res.value == pytest.approx(2.0)
    assert res.v_star == 0.0


def test_lq_hamiltonian_rejects_nonpositive_rho():
    model = LQScalarModel(a=1.0, b=1.0, sigma=1.0)
    for rho in (0.0, -1.0):
        with pytest.raises(NonpositiveRho):
            lq_hamiltonian(model, x=1.0, q=1.0, rho=rho)


def test_numeric_matches_closed_form_on_random_lq():
    rng = np.random.default_rng(42)
    for _ in range(100):
        model = LQScalarModel(a=rng.uniform(-2, 2), b=rng.uniform(-2, 2),
                              sigma=1.0, r=rng.uniform(0.5, 3.0),
                              q=rng.uniform(0.0, 2.0))
        risk = RiskParams(alpha=1.0, beta=0.0)
        gm = lq_scalar_generic(model, risk)
        x = rng.uniform(-10, 10)
        q = rng.uniform(-10, 10)
        rho = rng.uniform(0.2, 3.0)
        closed = lq_hamiltonian(model, x, q, rho)
        # |v*| = |b q / (r rho)| can reach 200 over these draws
        numeric = numeric_hamiltonian(gm, x, 0.0, q, rho,
                                      v_bounds=(-250, 250), tol=1e-10)
        assert numeric.value == pytest.approx(closed.value, abs=1e-6)


def test_numeric_kinked_objective():
    gm = _generic(f=lambda x, s, v: np.abs(v), g=lambda x, s, v: v)
    res = numeric_hamiltonian(gm, 0.0, 0.0, q=0.5, rho=1.0,
                              v_bounds=(-10, 10), tol=1e-9)
    oracle_val, _ = grid_minimize(lambda v: 0.5 * v + abs(v), -10, 10)
    assert res.v_star == pytest.approx(0.0, abs=1e-6)
    assert res.value == pytest.approx(oracle_val, abs=1e-6)


def test_numeric_rejects_degenerate_interval():
    gm = _generic(f=lambda x, s, v: v * v, g=lambda x, s, v: v)
    with pytest.raises(EmptyBounds):
        numeric_hamiltonian(gm, 0.0, 0.0, 1.0, 1.0, v_bounds=(0.0, 0.0), tol=1e-8)
    with pytest.raises(EmptyBounds):
        numeric_hamiltonian(gm, 0.0, 0.0, 1.0, 1.0, v_bounds=(-1.0, 1.0), tol=0.0)


def test_positive_homogeneity_and_minimizer_invariance():
    rng = np.random.default_rng(5)
    # tol sits above the comparison noise floor of derivative-free search
    # (~sqrt(eps * |objective| / curvature)), so both runs bracket the
    # same argmin
    tol = 1e-6
    for _ in range(100):
        if rng.random() < 0.5:
            model = LQScalarModel(a=rng.uniform(-2, 2), b=rng.uniform(-2, 2),
                                  sigma=1.0, r=rng.uniform(0.5, 2.0))
            gm = lq_scalar_generic(model, RiskParams(alpha=1.0))
        else:
            c1, c2, c3 = rng.uniform(-1, 1, size=3)
            gm = _generic(
                f=lambda x, s, v, c1=c1: v * v + c1 * np.cos(v),
                g=lambda x, s, v, c2=c2, c3=c3: c2 * x + np.sin(c3 * v) + v,
            )
        x = rng.uniform(-3, 3)
        q = rng.uniform(-3, 3)
        rho = rng.uniform(0.2, 4.0)
        scaled = numeric_hamiltonian(gm, x, 0.0, q, rho, (-20, 20), tol)
        base = numeric_hamiltonian(gm, x, 0.0, q / rho, 1.0, (-20, 20), tol)
        assert scaled.value == pytest.approx(rho * base.value, abs=10 * tol)
        assert scaled.v_star == pytest.approx(base.v_star, abs=10 * tol)


def test_tilde_reduce():
    model = LQScalarModel(a=1.0, b=1.0, sigma=1.0, r=1.0)

    def H(x, stat, q):
        return lq_hamiltonian(model, x, q, rho=1.0).value

    # rho = 1 is the identity
    assert tilde_reduce(H, 2.0, 0.0, 3.0, 1.0) == pytest.approx(H(2.0, 0.0, 3.0))
    # rho = 2, q = 4 agrees with the direct augmented minimization
    direct = lq_hamiltonian(model, 2.0, 4.0, rho=2.0).value
    assert tilde_reduce(H, 2.0, 0.0, 4.0, 2.0) == pytest.approx(direct)
    # q = 0 scales the control-free term
    assert tilde_reduce(H, 2.0, 0.0, 0.0, 3.0) == pytest.approx(3.0 * H(2.0, 0.0, 0.0))
    with pytest.raises(NonpositiveRho):
        tilde_reduce(H, 1.0, 0.0, 1.0, 0.0)
