"""Backward integration of the Riccati equations and their companion ODEs.

Covers the scalar and matrix risk-sensitive Riccati equations (whose
quadratic coefficient b^2/r - alpha*sigma^2 can drive finite-time blow-up),
the log-normalization integral rho(t), the exponential weight omega(t) and
the forward mean path y(t).  All solvers share the uniform grid and report
blow-up instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BlowUpInput, NonFiniteInput
from .models import LQMatrixModel, LQScalarModel, RiskParams, TimeGrid

__all__ = [
    "RiccatiSolution",
    "ChiRatio",
    "solve_scalar_riccati",
    "solve_matrix_riccati",
    "solve_omega",
    "solve_mean_ode",
    "BLOW_UP_LIMIT",
]

BLOW_UP_LIMIT = 1e8


@dataclass
class RiccatiSolution:
    """Node-sampled backward solution.

    ``pi`` has shape (n_steps+1,) for scalar problems or
    (n_steps+1, n, n) for matrix ones.  When ``blow_up`` is set, nodes at
    t < blow_up hold NaN and the solution must not feed downstream solvers;
    ``blow_up_refined`` adds an escape-time estimate from linear
    extrapolation of 1/pi through the last two finite nodes.
    """

    grid: TimeGrid
    pi: np.ndarray
    rho: np.ndarray
    omega: np.ndarray | None = None
    blow_up: float | None = None
    blow_up_refined: float | None = None

    @property
    def usable(self) -> bool:
        return self.blow_up is None


@dataclass(frozen=True)
class ChiRatio:
    """Externally estimated chi(0)*E[1/chi(t_k)] path for the exact mean ODE."""

    path: np.ndarray


def _require_finite_scalar(model: LQScalarModel) -> None:
    vals = (model.a, model.b, model.sigma, model.r, model.q, model.qT)
    if not all(np.isfinite(v) for v in vals):
        raise NonFiniteInput(f"model has non-finite coefficients: {model}")


def _refine_blow_up(nodes: np.ndarray, norms: np.ndarray, bad: int) -> float | None:
    # Linear extrapolation of w = 1/|pi| to zero using the last two finite nodes.
    k1, k2 = bad + 1, bad + 2
    if k2 >= norms.shape[0] or norms[k1] == 0.0 or norms[k2] == 0.0:
        return None
    w1, w2 = 1.0 / norms[k1], 1.0 / norms[k2]
    if w2 == w1:
        return None
    t1, t2 = nodes[k1], nodes[k2]
    return float(t1 - w1 * (t2 - t1) / (w2 - w1))


def _trapezoid_from_terminal(values: np.ndarray, dt: float) -> np.ndarray:
    """Backward cumulative trapezoid: out[k] = integral of values over [t_k, T]."""
    out = np.empty_like(values)
    out[-1] = 0.0
    increments = 0.5 * dt * (values[:-1] + values[1:])
    out[:-1] = np.cumsum(increments[::-1])[::-1]
    return out


def solve_scalar_riccati(model: LQScalarModel, risk: RiskParams, grid: TimeGrid,
                         gamma: float = 0.0) -> RiccatiSolution:
    """Integrate pi' = -2a pi + (b^2/r - alpha sigma^2) pi^2 - q backward from pi(T)=qT.

    The optional ``gamma`` switches on the experimental mean-field coupling
    term -alpha*beta*sigma^2*gamma in the derivative; the default 0
    identifies pi with the beta-free risk-sensitive Riccati solution.
    Classical RK4; the quadrature term rho(t) = 0.5 * int_t^T sigma^2 pi ds
    uses the trapezoid rule on the same nodes.
    """

    _require_finite_scalar(model)
    two_a = 2.0 * model.a
    c2 = model.b ** 2 / model.r - risk.alpha * model.sigma ** 2
    q_level = model.q + risk.alpha * risk.beta * model.sigma ** 2 * gamma

    pi, bad = _kernels.riccati_rk4_scalar(
        float(model.qT), two_a, c2, q_level, grid.dt, grid.n_steps, BLOW_UP_LIMIT
    )
    nodes = grid.nodes()

    if bad >= 0:
        norms = np.abs(pi)
        return RiccatiSolution(
            grid=grid, pi=pi, rho=np.full_like(pi, np.nan),
            blow_up=float(nodes[bad]),
            blow_up_refined=_refine_blow_up(nodes, norms, bad),
        )

    rho = 0.5 * _trapezoid_from_terminal(model.sigma ** 2 * pi, grid.dt)
    return RiccatiSolution(grid=grid, pi=pi, rho=rho)


def solve_matrix_riccati(model: LQMatrixModel, risk: RiskParams,
                         grid: TimeGrid) -> RiccatiSolution:
    """Matrix analogue: Pi' = -Pi A - A'Pi + Pi (B R^-1 B' - alpha a) Pi - Q.

    RK4 backward from Pi(T) = QT with symmetrization after every step;
    blow-up is declared when any entry exceeds the norm limit or goes
    non-finite, with t* the first offending node.
    """

    mats = (model.A, model.B, model.Q, model.R, model.QT, model.Sigma)
    if not all(np.all(np.isfinite(M)) for M in mats):
        raise NonFiniteInput("model has non-finite matrix entries")

    n = grid.n_steps
    dim = model.dim
    M = model.B @ np.linalg.solve(model.R, model.B.T) - risk.alpha * model.a_diff
    A, AT, Q = model.A, model.A.T, model.Q

    def deriv(P: np.ndarray) -> np.ndarray:
        return -(P @ A) - (AT @ P) + P @ M @ P - Q

    pi = np.empty((n + 1, dim, dim))
    pi[n] = 0.5 * (model.QT + model.QT.T)
    h = -grid.dt
    bad = -1
    for k in range(n - 1, -1, -1):
        P = pi[k + 1]
        k1 = deriv(P)
        k2 = deriv(P + 0.5 * h * k1)
        k3 = deriv(P + 0.5 * h * k2)
        k4 = deriv(P + h * k3)
        Pn = P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        Pn = 0.5 * (Pn + Pn.T)
        if not np.all(np.isfinite(Pn)) or np.max(np.abs(Pn)) > BLOW_UP_LIMIT:
            bad = k
            pi[: k + 1] = np.nan
            break
        pi[k] = Pn

    nodes = grid.nodes()
    if bad >= 0:
        norms = np.max(np.abs(pi), axis=(1, 2))
        return RiccatiSolution(
            grid=grid, pi=pi, rho=np.full(n + 1, np.nan),
            blow_up=float(nodes[bad]),
            blow_up_refined=_refine_blow_up(nodes, norms, bad),
        )

    a_diff = model.a_diff
    traces = np.einsum("ij,kji->k", a_diff, pi)
    rho = 0.5 * _trapezoid_from_terminal(traces, grid.dt)
    return RiccatiSolution(grid=grid, pi=pi, rho=rho)


def _check_pi_path(pi: np.ndarray) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if not np.all(np.isfinite(pi)):
        raise BlowUpInput("pi path contains non-finite nodes (Riccati blow-up)")
    return pi


def solve_omega(pi: np.ndarray, model: LQScalarModel, grid: TimeGrid) -> np.ndarray:
    """omega(t) = exp(int_t^T (a - (b^2/r) pi) ds), with omega(T) = 1 exactly."""

    pi = _check_pi_path(pi)
    integrand = model.a - (model.b ** 2 / model.r) * pi
    return np.exp(_trapezoid_from_terminal(integrand, grid.dt))


def solve_mean_ode(pi: np.ndarray, model: LQScalarModel, grid: TimeGrid,
                   x0_mean: float, correction: ChiRatio | None = None,
                   risk: RiskParams | None = None,
                   omega: np.ndarray | None = None) -> np.ndarray:
    """Forward mean path: y' = (a - (b^2/r) pi) y, y(0) = x0_mean.

    With a ``ChiRatio`` correction c(t) the equation gains the mean-field
    forcing -beta (b^2/r) omega(t) c(t), which requires ``risk`` and
    ``omega`` to be supplied.  RK4 with midpoint coefficients taken as node
    averages.
    """

    pi = _check_pi_path(pi)
    coeff = model.a - (model.b ** 2 / model.r) * pi
    if correction is not None:
        if risk is None or omega is None:
            raise ValueError("ChiRatio correction requires risk and omega")
        forcing = risk.beta * (model.b ** 2 / model.r) * np.asarray(omega) \
            * np.asarray(correction.path, dtype=float)
    else:
        forcing = np.zeros_like(coeff)

    n = grid.n_steps
    h = grid.dt
    y = np.empty(n + 1)
    y[0] = x0_mean
    for k in range(n):
        c0, c1 = coeff[k], coeff[k + 1]
        s0, s1 = forcing[k], forcing[k + 1]
        cm, sm = 0.5 * (c0 + c1), 0.5 * (s0 + s1)
        yk = y[k]
        k1 = c0 * yk - s0
        k2 = cm * (yk + 0.5 * h * k1) - sm
        k3 = cm * (yk + 0.5 * h * k2) - sm
        k4 = c1 * (yk + h * k3) - s1
        y[k + 1] = yk + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y
