"""Domain types shared by the numerical modules.

Models, risk parameters, time grids, initial laws and feedback policies are
immutable value objects; all validation beyond basic structural checks is
collected by :func:`validate_model` so that degenerate inputs can be
inspected rather than rejected at construction time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "RiskParams",
    "LQScalarModel",
    "LQMatrixModel",
    "TimeGrid",
    "InitialLaw",
    "Policy",
    "GenericModel",
    "ValidationOutcome",
    "validate_model",
    "risk_seeking_transform",
    "lq_scalar_generic",
]


@dataclass(frozen=True)
class RiskParams:
    """Risk-sensitivity index (alpha > 0) and mean-field terminal weight.

    Risk-seeking preferences (negative index) are not represented here:
    apply :func:`risk_seeking_transform` to the model and use the absolute
    index instead.
    """

    alpha: float
    beta: float = 0.0


@dataclass(frozen=True)
class LQScalarModel:
    """Scalar linear dynamics dx = (a x + b v) dt + sigma dW with quadratic costs.

    Running cost 0.5*(q x^2 + r v^2), terminal cost 0.5*qT x^2.  The
    canonical one-dimensional setup uses r = 1, q = 0, qT = 1.
    """

    a: float
    b: float
    sigma: float
    r: float = 1.0
    q: float = 0.0
    qT: float = 1.0


@dataclass(frozen=True)
class LQMatrixModel:
    """Matrix-valued linear-quadratic model.

    Dynamics dx = (A x + B v) dt + Sigma dW, running cost
    0.5*(x'Qx + v'Rv), terminal cost 0.5*x'QT x.  The diffusion matrix
    a_diff = Sigma Sigma' is always recomputed from Sigma.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    QT: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        for name in ("A", "B", "Q", "R", "QT", "Sigma"):
            object.__setattr__(
                self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            )

    @property
    def a_diff(self) -> np.ndarray:
        return self.Sigma @ self.Sigma.T

    @property
    def dim(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid on [0, T] with nodes t_k = k*T/n_steps."""

    T: float
    n_steps: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise InputError(f"horizon T must be finite and positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise InputError(f"n_steps must be an integer >= 2, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def nodes(self) -> np.ndarray:
        # Computed from the index so node times carry no accumulation drift.
        return np.arange(self.n_steps + 1) * self.T / self.n_steps


@dataclass(frozen=True)
class InitialLaw:
    """Initial distribution of the state: Gaussian, Dirac, or an empirical sample."""

    kind: str
    mean: float = 0.0
    variance: float = 0.0
    sample_values: tuple = ()

    @classmethod
    def gaussian(cls, mean: float, variance: float) -> "InitialLaw":
        if variance < 0:
            raise InputError(f"variance must be nonnegative, got {variance}")
        return cls(kind="gaussian", mean=float(mean), variance=float(variance))

    @classmethod
    def dirac(cls, x0: float) -> "InitialLaw":
        return cls(kind="dirac", mean=float(x0), variance=0.0)

    @classmethod
    def from_samples(cls, values: Sequence[float]) -> "InitialLaw":
        values = tuple(float(v) for v in values)
        if not values:
            raise InputError("sample-based initial law requires at least one value")
        return cls(kind="samples", mean=float(np.mean(values)),
                   variance=float(np.var(values)), sample_values=values)

    def mean_value(self) -> float:
        return self.mean


@dataclass(frozen=True)
class Policy:
    """Feedback control law evaluated on particle arrays at grid nodes.

    ``linear_gain``: v = -k(t) x with k sampled at the grid nodes.
    ``affine_mean_field``: v = -k(t) x - c(t).
    ``callback``: v = fn(t, x, z, stat) for arbitrary feedbacks.
    """

    kind: str
    gain: np.ndarray | None = None
    offset: np.ndarray | None = None
    fn: Callable | None = None

    @classmethod
    def linear_gain(cls, gain) -> "Policy":
        return cls(kind="linear_gain", gain=np.asarray(gain, dtype=float))

    @classmethod
    def affine_mean_field(cls, gain, offset) -> "Policy":
        return cls(kind="affine_mean_field", gain=np.asarray(gain, dtype=float),
                   offset=np.asarray(offset, dtype=float))

    @classmethod
    def callback(cls, fn: Callable) -> "Policy":
        return cls(kind="callback", fn=fn)

    @classmethod
    def zero(cls, grid: TimeGrid) -> "Policy":
        return cls.linear_gain(np.zeros(grid.n_steps + 1))

    def node_count(self) -> int | None:
        return None if self.gain is None else int(self.gain.shape[0])

    def control(self, k: int, t: float, x: np.ndarray, z: np.ndarray,
                stat: float) -> np.ndarray:
        if self.kind == "linear_gain":
            return -self.gain[k] * x
        if self.kind == "affine_mean_field":
            return -self.gain[k] * x - self.offset[k]
        return np.asarray(self.fn(t, x, z, stat), dtype=float)


def _empirical_mean(x: np.ndarray) -> float:
    return float(np.mean(x))


@dataclass(frozen=True)
class GenericModel:
    """Coefficients of a controlled scalar diffusion with mean-field coupling.

    All callbacks must accept numpy arrays for the state (and control) and
    broadcast elementwise.  The law enters only through ``law_stat``, a
    scalar statistic of the empirical state distribution (the empirical
    mean by default); any mean-field terminal coupling must be encoded in
    ``h`` directly.
    """

    f: Callable  # running cost (x, stat, v) -> array
    g: Callable  # drift (x, stat, v) -> array
    sigma: Callable  # diffusion (x) -> array, positive
    h: Callable  # terminal cost (x, stat) -> array
    law_stat: Callable = _empirical_mean


def risk_seeking_transform(model: GenericModel) -> GenericModel:
    """Negate the running and terminal costs.

    Turns a risk-seeking problem (negative risk index) into the risk-averse
    form handled everywhere else; the caller then uses the absolute index.
    Applying the transform twice restores the original cost evaluations.
    """

    f, h = model.f, model.h
    return GenericModel(
        f=lambda x, stat, v: -f(x, stat, v),
        g=model.g,
        sigma=model.sigma,
        h=lambda x, stat: -h(x, stat),
        law_stat=model.law_stat,
    )


def lq_scalar_generic(model: LQScalarModel, risk: RiskParams) -> GenericModel:
    """Generic-callback view of a scalar LQ model (used for cross-checks).

    The mean-field weight enters the terminal cost as beta * stat.
    """

    a, b, sigma, r, q, qT = model.a, model.b, model.sigma, model.r, model.q, model.qT
    beta = risk.beta
    return GenericModel(
        f=lambda x, stat, v: 0.5 * (r * v * v + q * x * x),
        g=lambda x, stat, v: a * x + b * v,
        sigma=lambda x: sigma * np.ones_like(np.asarray(x, dtype=float)),
        h=lambda x, stat: 0.5 * qT * x * x + beta * stat,
    )


@dataclass(frozen=True)
class ValidationOutcome:
    """Result of diagnostic model validation: violations are fatal, warnings are not."""

    ok: bool
    violations: tuple = ()
    warnings: tuple = ()


def _is_symmetric(M: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(M - M.T)) <= tol * max(1.0, np.max(np.abs(M))))


def validate_model(model, risk: RiskParams, grid: TimeGrid) -> ValidationOutcome:
    """Check model/risk invariants and flag likely Riccati blow-up.

    Purely diagnostic: degenerate inputs are reported, never raised.  The
    blow-up warning fires when the quadratic Riccati coefficient
    b^2/r - alpha*sigma^2 is negative (scalar case), the regime in which
    the risk-sensitive Riccati equation can escape in finite time.
    """

    violations: list[str] = []
    warns: list[str] = []

    if not (np.isfinite(risk.alpha) and risk.alpha > 0):
        violations.append(f"alpha must be positive and finite, got {risk.alpha}")
    if not np.isfinite(risk.beta):
        violations.append(f"beta must be finite, got {risk.beta}")

    if isinstance(model, LQScalarModel):
        vals = [model.a, model.b, model.sigma, model.r, model.q, model.qT]
        if not all(np.isfinite(v) for v in vals):
            violations.append("model coefficients must be finite")
        if model.sigma <= 0:
            violations.append(f"sigma must be positive, got {model.sigma}")
        if model.r <= 0:
            violations.append("R not positive definite (r must be > 0, got "
                              f"{model.r})")
        if model.q < 0:
            violations.append(f"q must be nonnegative, got {model.q}")
        if model.qT < 0:
            violations.append(f"qT must be nonnegative, got {model.qT}")
        if model.r > 0 and risk.alpha > 0:
            margin = model.b ** 2 / model.r - risk.alpha * model.sigma ** 2
            if margin < 0:
                warns.append(
                    "possible Riccati blow-up: b^2/r - alpha*sigma^2 = "
                    f"{margin:.6g} < 0"
                )
    elif isinstance(model, LQMatrixModel):
        mats = [model.A, model.B, model.Q, model.R, model.QT, model.Sigma]
        if not all(np.all(np.isfinite(M)) for M in mats):
            violations.append("model matrices must be finite")
        else:
            if not _is_symmetric(model.R):
                violations.append("R not symmetric")
            else:
                try:
                    np.linalg.cholesky(model.R)
                except np.linalg.LinAlgError:
                    violations.append("R not positive definite")
            for name, M in (("Q", model.Q), ("QT", model.QT)):
                if not _is_symmetric(M):
                    violations.append(f"{name} not symmetric")
                elif np.min(np.linalg.eigvalsh(M)) < -1e-10:
                    violations.append(f"{name} not positive semidefinite")
            # Blow-up heuristic: smallest eigenvalue of B R^-1 B' - alpha a.
            try:
                M = model.B @ np.linalg.solve(model.R, model.B.T) \
                    - risk.alpha * model.a_diff
                if np.min(np.linalg.eigvalsh(0.5 * (M + M.T))) < 0:
                    warns.append("possible Riccati blow-up: "
                                 "B R^-1 B' - alpha*a has a negative eigenvalue")
            except np.linalg.LinAlgError:
                pass
    else:
        violations.append(f"unsupported model type {type(model).__name__}")

    return ValidationOutcome(ok=not violations, violations=tuple(violations),
                             warnings=tuple(warns))
