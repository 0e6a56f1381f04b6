"""Interacting-particle simulation of the augmented state (x, z).

x follows the controlled diffusion under Euler-Maruyama; z accumulates the
running cost by the left-endpoint rule, so the exponential cost becomes a
function of the terminal ensemble only.  The empirical law statistic is
recomputed from the full ensemble before every step (explicit coupling).

Noise is counter-addressable: the Gaussian increment of particle i at step
k is a pure function of (seed, k, i), obtained by pointing a Philox stream
at counter block k and mapping its raw 64-bit words through the inverse
normal CDF.  Rerunning with the same seed reproduces every ensemble
bit-exactly, independent of how the work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import _kernels
from .errors import EmptyTrajectory, NonFiniteState
from .models import GenericModel, InitialLaw, LQScalarModel, Policy, RiskParams, TimeGrid

__all__ = [
    "ParticleEnsemble",
    "ParticleTrajectory",
    "CostEstimate",
    "step_normals",
    "simulate_particles",
    "estimate_risk_sensitive_cost",
    "estimate_chi0",
    "estimate_chi_inverse_path",
]

_U64_SHIFT = np.uint64(11)
_U53_SCALE = 2.0 ** -53


def step_normals(seed: int, step: int, n: int) -> np.ndarray:
    """Standard normal increments for one step, addressed by (seed, step, index)."""
    bg = np.random.Philox(key=int(seed), counter=int(step) << 192)
    raw = bg.random_raw(n)
    u = ((raw >> _U64_SHIFT).astype(np.float64) + 0.5) * _U53_SCALE
    return ndtri(u)


@dataclass(frozen=True)
class ParticleEnsemble:
    """Snapshot of the augmented particle system at one time."""

    x: np.ndarray
    z: np.ndarray
    t: float
    seed_lineage: tuple

    @property
    def n_particles(self) -> int:
        return int(self.x.shape[0])


@dataclass
class ParticleTrajectory:
    """Node snapshots of the particle system plus the law-statistic path.

    ``x`` and ``z`` have shape (n_saved, n_particles) with rows at the grid
    nodes listed in ``node_index`` (always including 0 and the terminal
    node).  ``stat`` holds the empirical law statistic at the saved nodes.
    """

    grid: TimeGrid
    seed: int
    node_index: np.ndarray
    x: np.ndarray
    z: np.ndarray
    stat: np.ndarray

    @property
    def n_particles(self) -> int:
        return int(self.x.shape[1])

    def times(self) -> np.ndarray:
        return self.node_index * self.grid.T / self.grid.n_steps

    def ensemble(self, row: int) -> ParticleEnsemble:
        k = int(self.node_index[row])
        return ParticleEnsemble(x=self.x[row], z=self.z[row],
                                t=float(k * self.grid.T / self.grid.n_steps),
                                seed_lineage=(self.seed, k))

    def terminal(self) -> ParticleEnsemble:
        if int(self.node_index[-1]) != self.grid.n_steps:
            raise EmptyTrajectory("trajectory does not reach the terminal node")
        return self.ensemble(len(self.node_index) - 1)


@dataclass(frozen=True)
class CostEstimate:
    """Monte Carlo estimate of the exponential cost J = E exp(alpha*C).

    ``certainty_equivalent`` is log(j_alpha)/alpha; ``std_error`` is the
    delta-method standard error of ``j_alpha`` itself.
    """

    j_alpha: float
    log_j_alpha: float
    certainty_equivalent: float
    std_error: float
    n: int


# Counter blocks reserved for initialization; simulation steps use blocks 0..n-1.
_INIT_BLOCK = (1 << 64) - 1
_RESAMPLE_BLOCK = (1 << 64) - 2


def sample_initial(init: InitialLaw, n: int, seed: int) -> np.ndarray:
    """Draw n initial states from the law, addressed by dedicated counter blocks."""
    if init.kind == "dirac":
        return np.full(n, init.mean)
    if init.kind == "gaussian":
        xi = step_normals(seed, _INIT_BLOCK, n)
        return init.mean + math.sqrt(init.variance) * xi
    values = np.asarray(init.sample_values, dtype=float)
    if values.shape[0] == n:
        return values.copy()
    bg = np.random.Generator(np.random.Philox(key=int(seed),
                                              counter=_RESAMPLE_BLOCK << 192))
    return values[bg.integers(0, values.shape[0], size=n)]


def simulate_particles(model, policy: Policy, init: InitialLaw, grid: TimeGrid,
                       n_particles: int, seed: int,
                       save_every: int = 1) -> ParticleTrajectory:
    """Run the interacting-particle system and return node snapshots.

    ``save_every`` thins the stored snapshots (node 0 and the terminal node
    are always kept); it does not affect the dynamics.  Scalar LQ models
    dispatch to the compiled stepping kernel; generic models evaluate their
    callbacks on full arrays.

    Raises NonFiniteState with the step and particle index if the ensemble
    escapes to NaN/inf.
    """

    if n_particles < 2:
        raise ValueError(f"n_particles must be >= 2, got {n_particles}")
    if save_every < 1:
        raise ValueError(f"save_every must be >= 1, got {save_every}")

    is_lq = isinstance(model, LQScalarModel)
    if not is_lq and not isinstance(model, GenericModel):
        raise TypeError(f"unsupported model type {type(model).__name__}")
    expected = policy.node_count()
    if expected is not None and expected != grid.n_steps + 1:
        raise ValueError(
            f"policy gain has {expected} samples but the grid has "
            f"{grid.n_steps + 1} nodes"
        )

    n = grid.n_steps
    dt = grid.dt
    sqrt_dt = math.sqrt(dt)
    nodes = grid.nodes()

    saved = sorted(set(range(0, n + 1, save_every)) | {0, n})
    save_pos = {k: i for i, k in enumerate(saved)}
    n_saved = len(saved)

    x = sample_initial(init, n_particles, seed)
    z = np.zeros(n_particles)

    xs = np.empty((n_saved, n_particles))
    zs = np.empty((n_saved, n_particles))
    stats = np.empty(n_saved)

    law_stat = model.law_stat if not is_lq else _empirical_mean_stat
    if is_lq:
        sig_sdt = model.sigma * sqrt_dt

    for k in range(n + 1):
        stat = law_stat(x)
        if k in save_pos:
            row = save_pos[k]
            xs[row] = x
            zs[row] = z
            stats[row] = stat
        if k == n:
            break

        v = policy.control(k, float(nodes[k]), x, z, stat)
        xi = step_normals(seed, k, n_particles)
        if is_lq:
            x_new, z_new = _kernels.em_lq_step(
                x, z, v, model.a, model.b, model.q, model.r, dt, sig_sdt, xi
            )
        else:
            z_new = z + model.f(x, stat, v) * dt
            x_new = x + model.g(x, stat, v) * dt + model.sigma(x) * sqrt_dt * xi

        if not (np.isfinite(x_new).all() and np.isfinite(z_new).all()):
            bad = np.flatnonzero(~(np.isfinite(x_new) & np.isfinite(z_new)))[0]
            raise NonFiniteState(step=k, particle=int(bad))
        x, z = x_new, z_new

    return ParticleTrajectory(grid=grid, seed=seed,
                              node_index=np.asarray(saved, dtype=np.int64),
                              x=xs, z=zs, stat=stats)


def _empirical_mean_stat(x: np.ndarray) -> float:
    return float(np.mean(x))


def terminal_cost(traj: ParticleTrajectory, model, risk: RiskParams) -> np.ndarray:
    """Per-particle terminal cost z(T) + h(x(T), stat(T))."""
    term = traj.terminal()
    stat_T = float(traj.stat[-1])
    if isinstance(model, LQScalarModel):
        h = 0.5 * model.qT * term.x * term.x + risk.beta * stat_T
    else:
        h = np.asarray(model.h(term.x, stat_T), dtype=float)
    return term.z + h


def shifted_exp_mean(c: np.ndarray) -> tuple:
    """Return (log mean exp(c), delta-method SE of mean exp(c)) stably."""
    m = float(np.max(c))
    w = np.exp(c - m)
    mean_w = float(np.mean(w))
    log_mean = m + math.log(mean_w)
    se = math.exp(m) * float(np.std(w, ddof=1)) / math.sqrt(c.shape[0])
    return log_mean, se


def estimate_risk_sensitive_cost(traj: ParticleTrajectory, model,
                                 risk: RiskParams,
                                 stabilize: bool = True) -> CostEstimate:
    """Estimate J = E exp(alpha*(z(T) + h(x(T), stat))) from a trajectory.

    Exponentials are always max-shifted so the estimate cannot overflow;
    ``stabilize=False`` disables the shift and exists only so validation
    tests can exercise their overflow guards.
    """

    c = risk.alpha * terminal_cost(traj, model, risk)
    n = c.shape[0]
    if n == 0:
        raise EmptyTrajectory("empty ensemble")
    if stabilize:
        log_j, se = shifted_exp_mean(c)
        j = math.exp(log_j) if log_j < 709.0 else math.inf
    else:
        ec = np.exp(c)
        j = float(np.mean(ec))
        log_j = math.log(j) if j > 0 else -math.inf
        se = float(np.std(ec, ddof=1)) / math.sqrt(n)
    return CostEstimate(j_alpha=j, log_j_alpha=log_j,
                        certainty_equivalent=log_j / risk.alpha,
                        std_error=se, n=n)


def estimate_chi0(traj: ParticleTrajectory, model, risk: RiskParams) -> float:
    """chi(0) = alpha * E exp(alpha*(z(T) + h(x(T), stat))): the value scale factor."""
    return risk.alpha * estimate_risk_sensitive_cost(traj, model, risk).j_alpha


def estimate_chi_inverse_path(traj: ParticleTrajectory, model,
                              risk: RiskParams) -> np.ndarray:
    """Zeroth-order path c(t) = chi(0) * E[1/chi(t)] ~ 1 at every node.

    Exact when the dynamics are deterministic (chi is then constant along
    the unique path) and whenever the correction it feeds is dropped at
    leading order; by Jensen's inequality the true quantity is >= 1, so
    this is a documented lower bound, not an unbiased estimate.
    """

    return np.ones(traj.grid.n_steps + 1)
