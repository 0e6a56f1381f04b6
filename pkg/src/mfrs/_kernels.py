"""Hot inner loops with two interchangeable backends.

The numba backend JIT-compiles the per-particle and per-cell loops; the
numpy backend is a vectorized fallback written so that each array element
goes through the same floating-point operations in the same order, making
the two backends produce bit-identical results.

Selection: the ``MFRS_BACKEND`` environment variable (``numba`` or
``numpy``) is read at import time; default is numba when importable.
``use_backend()`` switches at runtime (used by tests and the benchmark).
"""

from __future__ import annotations

import os
import warnings

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _em_lq_step_np(x, z, v, a, b, q, r, dt, sig_sdt, xi):
    z_new = z + 0.5 * (r * v * v + q * x * x) * dt
    x_new = x + (a * x + b * v) * dt + sig_sdt * xi
    return x_new, z_new


def _fpk_step_x_np(m, vel, diff, dx, dt):
    # vel holds the drift velocity on the n-1 interior faces; wall fluxes are 0.
    n = m.shape[0]
    flux = np.zeros(n + 1)
    m_left = m[:-1]
    m_right = m[1:]
    adv = np.where(vel >= 0.0, vel * m_left, vel * m_right)
    flux[1:-1] = adv - diff * (m_right - m_left) / dx
    return m - (dt / dx) * (flux[1:] - flux[:-1])


def _fpk_step_x_2d_np(mu, vel, diff, dx, dt):
    nx, nz = mu.shape
    flux = np.zeros((nx + 1, nz))
    m_left = mu[:-1, :]
    m_right = mu[1:, :]
    adv = np.where(vel[:, None] >= 0.0, vel[:, None] * m_left, vel[:, None] * m_right)
    flux[1:-1, :] = adv - diff * (m_right - m_left) / dx
    return mu - (dt / dx) * (flux[1:, :] - flux[:-1, :])


def _fpk_step_z_2d_np(mu, fz, dz, dt):
    # fz >= 0 per row, so upwinding is one-sided toward increasing z.
    nx, nz = mu.shape
    flux = np.zeros((nx, nz + 1))
    flux[:, 1:-1] = fz[:, None] * mu[:, :-1]
    return mu - (dt / dz) * (flux[:, 1:] - flux[:, :-1])


def _riccati_rk4_scalar_np(qT, two_a, c2, q_level, dt, n_steps, limit):
    # Backward classical RK4 on dpi/dt = -two_a*pi + c2*pi^2 - q_level.
    # Returns node samples and the index of the first non-finite/oversized
    # node (-1 when the whole horizon integrates cleanly).
    pi = np.empty(n_steps + 1)
    pi[n_steps] = qT
    h = -dt
    bad = -1
    for k in range(n_steps - 1, -1, -1):
        p = pi[k + 1]
        k1 = -two_a * p + c2 * p * p - q_level
        p2 = p + 0.5 * h * k1
        k2 = -two_a * p2 + c2 * p2 * p2 - q_level
        p3 = p + 0.5 * h * k2
        k3 = -two_a * p3 + c2 * p3 * p3 - q_level
        p4 = p + h * k3
        k4 = -two_a * p4 + c2 * p4 * p4 - q_level
        pn = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(pn) or abs(pn) > limit:
            bad = k
            pi[: k + 1] = np.nan
            break
        pi[k] = pn
    return pi, bad


_NUMPY_IMPL = {
    "em_lq_step": _em_lq_step_np,
    "fpk_step_x": _fpk_step_x_np,
    "fpk_step_x_2d": _fpk_step_x_2d_np,
    "fpk_step_z_2d": _fpk_step_z_2d_np,
    "riccati_rk4_scalar": _riccati_rk4_scalar_np,
}


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def _em_lq_step_nb(x, z, v, a, b, q, r, dt, sig_sdt, xi):
        n = x.shape[0]
        x_new = np.empty(n)
        z_new = np.empty(n)
        for i in range(n):
            z_new[i] = z[i] + 0.5 * (r * v[i] * v[i] + q * x[i] * x[i]) * dt
            x_new[i] = x[i] + (a * x[i] + b * v[i]) * dt + sig_sdt * xi[i]
        return x_new, z_new

    @njit(cache=True)
    def _fpk_step_x_nb(m, vel, diff, dx, dt):
        n = m.shape[0]
        flux = np.zeros(n + 1)
        for i in range(1, n):
            w = vel[i - 1]
            if w >= 0.0:
                adv = w * m[i - 1]
            else:
                adv = w * m[i]
            flux[i] = adv - diff * (m[i] - m[i - 1]) / dx
        out = np.empty(n)
        for i in range(n):
            out[i] = m[i] - (dt / dx) * (flux[i + 1] - flux[i])
        return out

    @njit(cache=True)
    def _fpk_step_x_2d_nb(mu, vel, diff, dx, dt):
        nx, nz = mu.shape
        flux = np.zeros((nx + 1, nz))
        for i in range(1, nx):
            w = vel[i - 1]
            for j in range(nz):
                if w >= 0.0:
                    adv = w * mu[i - 1, j]
                else:
                    adv = w * mu[i, j]
                flux[i, j] = adv - diff * (mu[i, j] - mu[i - 1, j]) / dx
        out = np.empty((nx, nz))
        for i in range(nx):
            for j in range(nz):
                out[i, j] = mu[i, j] - (dt / dx) * (flux[i + 1, j] - flux[i, j])
        return out

    @njit(cache=True)
    def _fpk_step_z_2d_nb(mu, fz, dz, dt):
        nx, nz = mu.shape
        flux = np.zeros((nx, nz + 1))
        for i in range(nx):
            for j in range(1, nz):
                flux[i, j] = fz[i] * mu[i, j - 1]
        out = np.empty((nx, nz))
        for i in range(nx):
            for j in range(nz):
                out[i, j] = mu[i, j] - (dt / dz) * (flux[i, j + 1] - flux[i, j])
        return out

    @njit(cache=True)
    def _riccati_rk4_scalar_nb(qT, two_a, c2, q_level, dt, n_steps, limit):
        pi = np.empty(n_steps + 1)
        pi[n_steps] = qT
        h = -dt
        bad = -1
        for k in range(n_steps - 1, -1, -1):
            p = pi[k + 1]
            k1 = -two_a * p + c2 * p * p - q_level
            p2 = p + 0.5 * h * k1
            k2 = -two_a * p2 + c2 * p2 * p2 - q_level
            p3 = p + 0.5 * h * k2
            k3 = -two_a * p3 + c2 * p3 * p3 - q_level
            p4 = p + h * k3
            k4 = -two_a * p4 + c2 * p4 * p4 - q_level
            pn = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.isfinite(pn) or abs(pn) > limit:
                bad = k
                for j in range(k + 1):
                    pi[j] = np.nan
                break
            pi[k] = pn
        return pi, bad

    _NUMBA_IMPL = {
        "em_lq_step": _em_lq_step_nb,
        "fpk_step_x": _fpk_step_x_nb,
        "fpk_step_x_2d": _fpk_step_x_2d_nb,
        "fpk_step_z_2d": _fpk_step_z_2d_nb,
        "riccati_rk4_scalar": _riccati_rk4_scalar_nb,
    }
else:  # pragma: no cover
    _NUMBA_IMPL = {}


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

_BACKENDS = {"numpy": _NUMPY_IMPL}
if HAVE_NUMBA:
    _BACKENDS["numba"] = _NUMBA_IMPL


def _default_backend() -> str:
    requested = os.environ.get("MFRS_BACKEND", "").strip().lower()
    if requested == "numpy":
        return "numpy"
    if requested == "numba":
        if not HAVE_NUMBA:  # pragma: no cover
            warnings.warn("MFRS_BACKEND=numba requested but numba is unavailable; "
                          "falling back to numpy")
            return "numpy"
        return "numba"
    if requested:
        raise ValueError(f"unknown MFRS_BACKEND {requested!r}; use 'numba' or 'numpy'")
    return "numba" if HAVE_NUMBA else "numpy"


_ACTIVE = _default_backend()


def active_backend() -> str:
    return _ACTIVE


def use_backend(name: str) -> None:
    """Switch kernel implementations at runtime ('numba' or 'numpy')."""
    global _ACTIVE
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {sorted(_BACKENDS)}")
    _ACTIVE = name


def em_lq_step(x, z, v, a, b, q, r, dt, sig_sdt, xi):
    return _BACKENDS[_ACTIVE]["em_lq_step"](x, z, v, a, b, q, r, dt, sig_sdt, xi)


def fpk_step_x(m, vel, diff, dx, dt):
    return _BACKENDS[_ACTIVE]["fpk_step_x"](m, vel, diff, dx, dt)


def fpk_step_x_2d(mu, vel, diff, dx, dt):
    return _BACKENDS[_ACTIVE]["fpk_step_x_2d"](mu, vel, diff, dx, dt)


def fpk_step_z_2d(mu, fz, dz, dt):
    return _BACKENDS[_ACTIVE]["fpk_step_z_2d"](mu, fz, dz, dt)


def riccati_rk4_scalar(qT, two_a, c2, q_level, dt, n_steps, limit):
    return _BACKENDS[_ACTIVE]["riccati_rk4_scalar"](
        qT, two_a, c2, q_level, dt, n_steps, limit
    )
