"""Closed-form machinery for the mean-field LQ risk-sensitive value.

Assembles the optimal feedback, the Gaussian quadrature factor lambda(T),
and the small-coupling approximation of the value
exp(alpha*beta*y(T)) * lambda(T), whose neglected remainder is of order
beta^2.  Also provides the terminal adjoint-consistency diagnostic that
checks p(T) = x(T) + beta*chi(0)/chi(T) particle by particle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BlowUpInput, IntegrabilityViolation
from .models import InitialLaw, LQScalarModel, Policy, RiskParams, TimeGrid
from .particles import ParticleTrajectory, shifted_exp_mean
from .riccati import RiccatiSolution, solve_mean_ode, solve_omega, solve_scalar_riccati

__all__ = [
    "MFLQSolution",
    "SMPDiagnostics",
    "ApproxChiCorrection",
    "optimal_feedback",
    "lambda_T_quadrature",
    "approx_value_small_beta",
    "smp_terminal_residual",
]


@dataclass(frozen=True)
class ApproxChiCorrection:
    """Request the z-dependent feedback correction, carrying lambda(T)."""

    lambda_T: float


@dataclass
class MFLQSolution:
    """Assembled solution of the mean-field LQ problem.

    ``provenance`` records which route produced ``value`` (closed-form
    approximation, Monte Carlo, or PDE) so reports never silently mix
    routes; ``residual_beta2`` is the magnitude of the neglected
    second-order coupling term at t=0, a quality indicator for the
    approximation.
    """

    riccati: RiccatiSolution
    y: np.ndarray
    chi0: float
    lambda_T: float
    value: float
    feedback_gain: np.ndarray
    provenance: str
    residual_beta2: float


@dataclass
class SMPDiagnostics:
    """Terminal adjoint-identity residuals per particle."""

    p_path: np.ndarray
    terminal_residual: np.ndarray
    max_abs_residual: float


def optimal_feedback(riccati: RiccatiSolution, model: LQScalarModel,
                     risk: RiskParams,
                     chi_correction: ApproxChiCorrection | None = None) -> Policy:
    """Feedback law from the Riccati solution.

    Leading order: v(t, x) = -(b/r) pi(t) x.  With a correction carrying
    lambda(T), the gain acquires the z-dependent term
    beta * lambda(T) * omega(t) / u0(x, z, t) where
    u0 = exp(alpha*(z + pi x^2/2 + rho)).
    """

    if not riccati.usable:
        raise BlowUpInput(f"Riccati solution blew up at t={riccati.blow_up}")
    b_over_r = model.b / model.r
    if chi_correction is None:
        return Policy.linear_gain(b_over_r * riccati.pi)

    grid = riccati.grid
    pi, rho = riccati.pi, riccati.rho
    omega = riccati.omega if riccati.omega is not None \
        else solve_omega(pi, model, grid)
    coef = risk.beta * chi_correction.lambda_T
    alpha = risk.alpha

    def feedback(t, x, z, stat):
        k = int(round(t / grid.dt))
        # beta*lambda*omega / u0 evaluated in log space; u0 >= 1 keeps it bounded.
        corr = coef * omega[k] * np.exp(
            -alpha * (z + 0.5 * pi[k] * x * x + rho[k]))
        return -b_over_r * (pi[k] * x + corr)

    return Policy.callback(feedback)


def lambda_T_quadrature(riccati: RiccatiSolution, init: InitialLaw,
                        risk: RiskParams) -> float:
    """Integrate exp(alpha*(pi(0) x^2 / 2 + rho(0))) against the initial law.

    Gaussian initial laws use the exact moment formula and require
    alpha*pi(0)*variance < 1; sample-based laws average max-shifted
    exponentials.
    """

    if not riccati.usable:
        raise BlowUpInput(f"Riccati solution blew up at t={riccati.blow_up}")
    alpha = risk.alpha
    pi0 = float(riccati.pi[0])
    rho0 = float(riccati.rho[0])

    if init.kind == "samples":
        xs = np.asarray(init.sample_values, dtype=float)
        log_mean, _ = shifted_exp_mean(0.5 * alpha * pi0 * xs * xs)
        return math.exp(alpha * rho0 + log_mean)

    s2 = init.variance
    denom = 1.0 - alpha * pi0 * s2
    if denom <= 0:
        raise IntegrabilityViolation(
            f"alpha*pi(0)*variance = {alpha * pi0 * s2:.6g} >= 1: "
            "the Gaussian exponential moment diverges")
    mean = init.mean
    return math.exp(alpha * rho0 + 0.5 * alpha * pi0 * mean * mean / denom) \
        / math.sqrt(denom)


def approx_value_small_beta(model: LQScalarModel, risk: RiskParams,
                            init: InitialLaw, grid: TimeGrid) -> MFLQSolution:
    """Small-coupling closed form: value = exp(alpha*beta*y(T)) * lambda(T).

    Pipeline: scalar Riccati (gamma = 0), omega, the uncorrected mean path
    y, then the initial-law quadrature.  chi0 = alpha * value by the value
    identity; the recorded residual (b^2/(2r)) * alpha * beta^2 / omega(0)^2
    bounds the dropped coupling at t=0.
    """

    sol = solve_scalar_riccati(model, risk, grid, gamma=0.0)
    if not sol.usable:
        raise BlowUpInput(f"Riccati solution blew up at t={sol.blow_up}")
    sol.omega = solve_omega(sol.pi, model, grid)
    y = solve_mean_ode(sol.pi, model, grid, x0_mean=init.mean_value())
    lam = lambda_T_quadrature(sol, init, risk)
    value = math.exp(risk.alpha * risk.beta * y[-1]) * lam
    residual = (model.b ** 2 / (2.0 * model.r)) * risk.alpha * risk.beta ** 2 \
        / sol.omega[0] ** 2
    return MFLQSolution(
        riccati=sol, y=y, chi0=risk.alpha * value, lambda_T=lam, value=value,
        feedback_gain=(model.b / model.r) * sol.pi,
        provenance="closed_form_small_beta", residual_beta2=residual,
    )


def smp_terminal_residual(traj: ParticleTrajectory, riccati: RiccatiSolution,
                          risk: RiskParams, chi0: float) -> SMPDiagnostics:
    """Check the terminal adjoint identity p(T) = x(T) + beta*chi(0)/chi(T).

    The explicit adjoint is p(t) = pi(t) x(t) + beta*omega(t)*chi(0)/chi(t)
    with chi(T) = alpha * exp(alpha*(z(T) + h(x(T)))).  Because
    pi(T) = omega(T) = 1 at the terminal node, the residual vanishes in
    exact arithmetic; what it measures is terminal-node and float error.
    The stored p path uses the zeroth-order ratio chi(0)/chi(t) ~ 1 away
    from T (the martingale property evaluated at time 0).
    """

    if not riccati.usable:
        raise BlowUpInput(f"Riccati solution blew up at t={riccati.blow_up}")
    alpha, beta = risk.alpha, risk.beta
    pi = riccati.pi
    omega = riccati.omega if riccati.omega is not None \
        else np.ones_like(pi)

    term = traj.terminal()
    stat_T = float(traj.stat[-1])
    qT = float(pi[-1])
    log_phi = alpha * (term.z + 0.5 * qT * term.x * term.x + beta * stat_T)
    # chi0 / chi(T) per particle, in log space to dodge overflow.
    ratio = np.exp(math.log(chi0 / alpha) - log_phi) if chi0 > 0 \
        else np.zeros_like(log_phi)

    p_T = pi[-1] * term.x + beta * float(omega[-1]) * ratio
    residual = p_T - (term.x + beta * ratio)

    rows = traj.node_index
    p_path = pi[rows, None] * traj.x + beta * omega[rows, None]
    return SMPDiagnostics(p_path=p_path, terminal_residual=residual,
                          max_abs_residual=float(np.max(np.abs(residual))))
