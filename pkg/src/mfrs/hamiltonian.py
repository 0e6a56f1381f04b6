"""Control Hamiltonian evaluation: closed form for LQ, bracketed search otherwise.

The augmented objective is v -> rho*f(x, stat, v) + q*g(x, stat, v) with
rho > 0 the weight multiplying the running cost; the plain Hamiltonian is
the rho = 1 case, and for positive rho the two are related by
H_aug(q, rho) = rho * H(q / rho).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import EmptyBounds, NonpositiveRho
from .models import GenericModel, LQScalarModel

__all__ = [
    "HamiltonianResult",
    "lq_hamiltonian",
    "numeric_hamiltonian",
    "tilde_reduce",
]

_N_SEEDS = 16
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class HamiltonianResult:
    """Infimum of the control objective and the minimizing control."""

    value: float
    v_star: float


def lq_hamiltonian(model: LQScalarModel, x: float, q: float,
                   rho: float) -> HamiltonianResult:
    """Closed-form augmented Hamiltonian for the scalar LQ model.

    Minimizes (a x + b v) q + rho * 0.5 * (r v^2 + q_run x^2) over v; the
    minimizer is v* = -(b/r) q / rho.
    """

    if rho <= 0:
        raise NonpositiveRho(f"rho must be positive, got {rho}")
    v_star = -(model.b / model.r) * q / rho
    value = (model.a * x * q
             - 0.5 * (model.b ** 2 / model.r) * q * q / rho
             + 0.5 * rho * model.q * x * x)
    return HamiltonianResult(value=float(value), v_star=float(v_star))


def numeric_hamiltonian(model: GenericModel, x: float, stat: float, q: float,
                        rho: float, v_bounds: tuple, tol: float) -> HamiltonianResult:
    """Minimize rho*f + q*g over a control interval.

    A 16-point coarse scan locates the best bracket (ties broken toward
    smaller |v| so kinked objectives resolve deterministically), then
    golden-section search shrinks it below ``tol``.
    """

    lo, hi = float(v_bounds[0]), float(v_bounds[1])
    if not (math.isfinite(lo) and math.isfinite(hi)) or not hi > lo:
        raise EmptyBounds(f"control interval must be finite and nondegenerate, "
                          f"got [{lo}, {hi}]")
    if tol <= 0:
        raise EmptyBounds(f"tol must be positive, got {tol}")

    def objective(v: float) -> float:
        return float(rho * model.f(x, stat, v) + q * model.g(x, stat, v))

    step = (hi - lo) / (_N_SEEDS - 1)
    best_i, best_val, best_abs = 0, math.inf, math.inf
    seeds = [lo + i * step for i in range(_N_SEEDS)]
    for i, v in enumerate(seeds):
        val = objective(v)
        if val < best_val or (val == best_val and abs(v) < best_abs):
            best_i, best_val, best_abs = i, val, abs(v)

    a = seeds[max(best_i - 1, 0)]
    b = seeds[min(best_i + 1, _N_SEEDS - 1)]
    while b - a > tol:
        c = b - _INV_PHI * (b - a)
        d = a + _INV_PHI * (b - a)
        if objective(c) <= objective(d):
            b = d
        else:
            a = c
    v_star = 0.5 * (a + b)
    return HamiltonianResult(value=objective(v_star), v_star=v_star)


def tilde_reduce(H: Callable, x: float, stat: float, q: float,
                 rho: float) -> float:
    """Evaluate the augmented Hamiltonian through the plain one: rho*H(x, stat, q/rho)."""

    if rho <= 0:
        raise NonpositiveRho(f"rho must be positive, got {rho}")
    return rho * H(x, stat, q / rho)
