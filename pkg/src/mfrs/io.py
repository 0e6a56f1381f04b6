"""Artifact writers: CSV tables, deterministic JSON, binary dumps.

CSV uses '.' decimals and 17 significant digits so doubles round-trip
exactly; JSON is emitted with sorted keys and fixed separators. Binary
dumps are little-endian with a 4-byte magic:

  "MFRS"  particle ensemble: u32 version, u64 n_particles, u64 n_steps,
          then x then z as f64 arrays.
  "MFPK"  grid density: u32 version, u64 n_x, u64 n_z, then
          x_min, x_max, z_max, t as f64, then mu row-major as f64.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .fpk import GridDensity2D
from .particles import ParticleEnsemble, ParticleTrajectory
from .riccati import RiccatiSolution

__all__ = [
    "fmt",
    "write_csv",
    "write_json",
    "riccati_csv",
    "trajectory_summary_csv",
    "ensemble_dump",
    "read_ensemble_dump",
    "density_csv",
    "density_dump",
    "read_density_dump",
]

_VERSION = 1


def fmt(x) -> str:
    """Round-trip-exact decimal rendering of one value."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return "%.17g" % float(x)


def write_csv(path, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def riccati_csv(sol: RiccatiSolution, path, y: np.ndarray | None = None) -> None:
    """One row per node: t, pi (flattened row-major if matrix), rho, omega, y."""
    nodes = sol.grid.nodes()
    pi = np.asarray(sol.pi)
    if pi.ndim == 1:
        pi_cols = ["pi"]
        pi_rows = pi[:, None]
    else:
        dim = pi.shape[1]
        pi_cols = [f"Pi_{i}{j}" for i in range(dim) for j in range(dim)]
        pi_rows = pi.reshape(pi.shape[0], -1)
    header = ["t"] + pi_cols + ["rho", "omega", "y", "blow_up_t"]
    omega = sol.omega if sol.omega is not None else np.full(len(nodes), np.nan)
    ys = y if y is not None else np.full(len(nodes), np.nan)
    rows = []
    for k in range(len(nodes)):
        rows.append([nodes[k], *pi_rows[k], sol.rho[k], omega[k], ys[k],
                     sol.blow_up if sol.blow_up is not None else None])
    write_csv(path, header, rows)


def trajectory_summary_csv(traj: ParticleTrajectory, path) -> None:
    """Saved-node summary: t, mean_x, var_x, mean_z."""
    times = traj.times()
    rows = []
    for i in range(len(traj.node_index)):
        rows.append([times[i], np.mean(traj.x[i]), np.var(traj.x[i]),
                     np.mean(traj.z[i])])
    write_csv(path, ["t", "mean_x", "var_x", "mean_z"], rows)


def ensemble_dump(ens: ParticleEnsemble, n_steps: int, path) -> None:
    with open(path, "wb") as fh:
        fh.write(b"MFRS")
        fh.write(struct.pack("<IQQ", _VERSION, ens.n_particles, n_steps))
        fh.write(np.ascontiguousarray(ens.x, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ens.z, dtype="<f8").tobytes())


def read_ensemble_dump(path):
    """Return (x, z, n_steps) from an MFRS dump."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != b"MFRS":
            raise ValueError(f"bad magic {magic!r}, expected b'MFRS'")
        version, n, n_steps = struct.unpack("<IQQ", fh.read(20))
        if version != _VERSION:
            raise ValueError(f"unsupported version {version}")
        x = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        z = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
    return x, z, n_steps


def density_csv(density: GridDensity2D, path) -> None:
    """Cell rows: x, z, mu (z at the representative cell points)."""
    xc = density.x_centers()
    zc = density.z_points()
    rows = []
    for i in range(density.n_x):
        for j in range(density.n_z):
            rows.append([xc[i], zc[j], density.mu[i, j]])
    write_csv(path, ["x", "z", "mu"], rows)


def density_dump(density: GridDensity2D, path) -> None:
    with open(path, "wb") as fh:
        fh.write(b"MFPK")
        fh.write(struct.pack("<IQQ", _VERSION, density.n_x, density.n_z))
        fh.write(struct.pack("<dddd", density.x_min, density.x_max,
                             density.z_max, density.t))
        fh.write(np.ascontiguousarray(density.mu, dtype="<f8").tobytes())


def read_density_dump(path) -> GridDensity2D:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != b"MFPK":
            raise ValueError(f"bad magic {magic!r}, expected b'MFPK'")
        version, n_x, n_z = struct.unpack("<IQQ", fh.read(20))
        if version != _VERSION:
            raise ValueError(f"unsupported version {version}")
        x_min, x_max, z_max, t = struct.unpack("<dddd", fh.read(32))
        mu = np.frombuffer(fh.read(8 * n_x * n_z), dtype="<f8").copy()
    return GridDensity2D(x_min=x_min, x_max=x_max, n_x=n_x, z_max=z_max,
                         n_z=n_z, mu=mu.reshape(n_x, n_z), t=t)
