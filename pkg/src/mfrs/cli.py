"""Command-line front end: scenario files in, CSV/JSON artifacts out.

Commands: riccati | simulate | fpk | value | validate | sweep.
Exit codes: 0 success, 1 validation-check failure, 2 input error,
3 numerical failure.  A Riccati blow-up is a reported outcome (exit 0)
for ``riccati`` and ``sweep`` points, but a numerical failure for
``value``.  All errors are printed as single-line JSON on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .checks import (CheckReport, alpha_limit_check, chi_positivity_check,
                     martingale_check, three_way_value_check)
from .config import ScenarioConfig, apply_overrides, build_scenario, load_config
from .errors import BlowUpInput, CflViolation, InputError, MfrsError
from .fpk import solve_fpk_xz, terminal_exponential_moment
from .lqvalue import approx_value_small_beta, optimal_feedback
from .models import (LQMatrixModel, LQScalarModel, Policy, TimeGrid,
                     validate_model)
from .particles import estimate_chi0, estimate_risk_sensitive_cost, simulate_particles
from .riccati import solve_matrix_riccati, solve_mean_ode, solve_omega, \
    solve_scalar_riccati

__all__ = ["main", "value_report", "run_validation"]

_COMMANDS = ("riccati", "simulate", "fpk", "value", "validate", "sweep")


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message},
                                sort_keys=True) + "\n")


def _validated(cfg: ScenarioConfig) -> None:
    if isinstance(cfg.model, (LQScalarModel, LQMatrixModel)):
        outcome = validate_model(cfg.model, cfg.risk, cfg.grid)
        if not outcome.ok:
            raise InputError("; ".join(outcome.violations))
        for w in outcome.warnings:
            sys.stderr.write(json.dumps({"warning": w}, sort_keys=True) + "\n")


def _build_policy(cfg: ScenarioConfig) -> Policy:
    if cfg.policy_type == "zero":
        return Policy.zero(cfg.grid)
    if cfg.policy_type == "constant_gain":
        return Policy.linear_gain(np.full(cfg.grid.n_steps + 1, cfg.policy_gain))
    if not isinstance(cfg.model, LQScalarModel):
        raise InputError("policy.type=optimal requires a scalar LQ model; "
                         "use zero or constant_gain")
    sol = solve_scalar_riccati(cfg.model, cfg.risk, cfg.grid)
    return optimal_feedback(sol, cfg.model, cfg.risk)


def cmd_riccati(cfg: ScenarioConfig, out: Path, args) -> int:
    _validated(cfg)
    if isinstance(cfg.model, LQMatrixModel):
        sol = solve_matrix_riccati(cfg.model, cfg.risk, cfg.grid)
        y = None
    elif isinstance(cfg.model, LQScalarModel):
        sol = solve_scalar_riccati(cfg.model, cfg.risk, cfg.grid)
        y = None
        if sol.usable:
            sol.omega = solve_omega(sol.pi, cfg.model, cfg.grid)
            y = solve_mean_ode(sol.pi, cfg.model, cfg.grid,
                               x0_mean=cfg.init.mean_value())
    else:
        raise InputError("riccati requires a scalar or matrix LQ model")
    io.riccati_csv(sol, out / "riccati.csv", y=y)
    meta = {"blow_up_t": sol.blow_up, "blow_up_t_refined": sol.blow_up_refined,
            "usable": sol.usable}
    io.write_json(meta, out / "riccati.json")
    return 0


def cmd_simulate(cfg: ScenarioConfig, out: Path, args) -> int:
    _validated(cfg)
    policy = _build_policy(cfg)
    traj = simulate_particles(cfg.model, policy, cfg.init, cfg.grid,
                              cfg.n_particles, cfg.seed,
                              save_every=cfg.save_every)
    est = estimate_risk_sensitive_cost(traj, cfg.model, cfg.risk)
    io.trajectory_summary_csv(traj, out / "trajectory.csv")
    io.write_json(
        {"j_alpha": est.j_alpha, "log_j_alpha": est.log_j_alpha,
         "certainty_equivalent": est.certainty_equivalent,
         "std_error": est.std_error, "n": est.n, "seed": cfg.seed},
        out / "cost_estimate.json")
    if "bin" in cfg.formats:
        io.ensemble_dump(traj.terminal(), cfg.grid.n_steps, out / "ensemble.bin")
    return 0


def cmd_fpk(cfg: ScenarioConfig, out: Path, args) -> int:
    _validated(cfg)
    if not isinstance(cfg.model, LQScalarModel):
        raise InputError("fpk requires a scalar LQ model")
    sol = solve_scalar_riccati(cfg.model, cfg.risk, cfg.grid)
    if not sol.usable:
        raise BlowUpInput(f"Riccati solution blew up at t={sol.blow_up}")
    density = solve_fpk_xz(cfg.model, sol, cfg.init, cfg.grid, cfg.n_x, cfg.n_z,
                           cfg.x_bounds, z_max=cfg.z_max,
                           z_max_factor=cfg.z_max_factor)
    moment = terminal_exponential_moment(density, cfg.model, cfg.risk)
    if "csv" in cfg.formats:
        io.density_csv(density, out / "density.csv")
    if "bin" in cfg.formats:
        io.density_dump(density, out / "density.bin")
    io.write_json(
        {"terminal_exponential_moment": moment, "mass": density.mass(),
         "max_mass_drift": float(np.max(np.abs(density.mass_history - 1.0))),
         "certainty_equivalent": math.log(moment) / cfg.risk.alpha},
        out / "fpk_moment.json")
    return 0


def value_report(cfg: ScenarioConfig) -> dict:
    """Run the requested value routes and assemble the ValueReport dict."""
    if not isinstance(cfg.model, LQScalarModel):
        raise InputError("value requires a scalar LQ model")
    report = {
        "scenario_id": cfg.scenario_id, "alpha": cfg.risk.alpha,
        "beta": cfg.risk.beta, "value_closed_form": None, "value_mc": None,
        "mc_std_error": None, "value_pde": None, "certainty_equivalent": None,
        "residual_beta2": None, "blow_up": None,
    }
    try:
        approx = approx_value_small_beta(cfg.model, cfg.risk, cfg.init, cfg.grid)
    except BlowUpInput:
        sol = solve_scalar_riccati(cfg.model, cfg.risk, cfg.grid)
        report["blow_up"] = sol.blow_up
        return report

    if "closed_form" in cfg.routes:
        report["value_closed_form"] = approx.value
        report["residual_beta2"] = approx.residual_beta2
    if "mc" in cfg.routes:
        policy = optimal_feedback(approx.riccati, cfg.model, cfg.risk)
        traj = simulate_particles(cfg.model, policy, cfg.init, cfg.grid,
                                  cfg.n_particles, cfg.seed,
                                  save_every=cfg.grid.n_steps)
        est = estimate_risk_sensitive_cost(traj, cfg.model, cfg.risk)
        report["value_mc"] = est.j_alpha
        report["mc_std_error"] = est.std_error
    if "pde" in cfg.routes:
        density = _fpk_density_auto(cfg, approx.riccati)
        report["value_pde"] = terminal_exponential_moment(density, cfg.model,
                                                          cfg.risk)
    anchor = report["value_mc"] if report["value_mc"] is not None \
        else report["value_closed_form"]
    if anchor is not None and anchor > 0:
        report["certainty_equivalent"] = math.log(anchor) / cfg.risk.alpha
    return report


def _fpk_density_auto(cfg: ScenarioConfig, riccati_sol):
    """FPK solve on the scenario grid, refining the step count to honor CFL."""
    grid, sol = cfg.grid, riccati_sol
    for _ in range(6):
        try:
            return solve_fpk_xz(cfg.model, sol, cfg.init, grid, cfg.n_x, cfg.n_z,
                                cfg.x_bounds, z_max=cfg.z_max,
                                z_max_factor=cfg.z_max_factor)
        except CflViolation as err:
            n_steps = max(int(math.ceil(cfg.grid.T / err.dt_required)) + 1,
                          2 * grid.n_steps)
            grid = TimeGrid(cfg.grid.T, n_steps)
            sol = solve_scalar_riccati(cfg.model, cfg.risk, grid)
    raise CflViolation(grid.dt)


def cmd_value(cfg: ScenarioConfig, out: Path, args) -> int:
    _validated(cfg)
    report = value_report(cfg)
    io.write_json(report, out / "value_report.json")
    if report["blow_up"] is not None:
        raise BlowUpInput(f"Riccati solution blew up at t={report['blow_up']}; "
                          "the risk-sensitive value is infinite")
    return 0


def run_validation(cfg: ScenarioConfig) -> list:
    """Assemble the applicable validation checks for one scenario."""
    if not isinstance(cfg.model, LQScalarModel):
        raise InputError("validate requires a scalar LQ model")
    sol = solve_scalar_riccati(cfg.model, cfg.risk, cfg.grid)
    if not sol.usable:
        return [CheckReport(name="validation", passed=True, statistic=0.0,
                            threshold=1.0,
                            detail=f"not applicable: Riccati blow-up at "
                                   f"t={sol.blow_up}")]
    sol.omega = solve_omega(sol.pi, cfg.model, cfg.grid)
    policy = optimal_feedback(sol, cfg.model, cfg.risk)
    save_every = max(cfg.save_every, cfg.grid.n_steps // 200, 1)
    traj = simulate_particles(cfg.model, policy, cfg.init, cfg.grid,
                              cfg.n_particles, cfg.seed, save_every=save_every)
    reports = [
        chi_positivity_check([estimate_chi0(traj, cfg.model, cfg.risk)]),
        alpha_limit_check(cfg.model, policy, cfg.init, cfg.grid,
                          cfg.validate_alphas, cfg.n_particles, cfg.seed,
                          beta=cfg.risk.beta),
    ]
    if cfg.risk.beta == 0.0:
        reports.append(martingale_check(traj, sol, cfg.risk))
    if abs(cfg.risk.beta) <= 0.1:
        reports.append(three_way_value_check(
            cfg.model, cfg.risk, cfg.init, cfg.grid, cfg.n_particles, cfg.seed,
            n_x=cfg.n_x, n_z=cfg.n_z, x_bounds=cfg.x_bounds,
            z_max_factor=cfg.z_max_factor))
    return reports


def cmd_validate(cfg: ScenarioConfig, out: Path, args) -> int:
    _validated(cfg)
    reports = run_validation(cfg)
    lines = [r.to_json_line() for r in reports]
    with open(out / "checks.jsonl", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0 if all(r.passed for r in reports) else 1


def _sweep_point(payload) -> dict:
    raw, key, value = payload
    cfg = build_scenario(apply_overrides(raw, [f"{key}={value}"]))
    report = value_report(cfg)
    report["sweep_value"] = float(value)
    return report


def cmd_sweep(cfg: ScenarioConfig, out: Path, args) -> int:
    if not cfg.sweep_key or not cfg.sweep_values:
        raise InputError("sweep requires sweep.key and sweep.values")
    payloads = [(cfg.raw, cfg.sweep_key, v) for v in cfg.sweep_values]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_sweep_point, payloads))
    else:
        reports = [_sweep_point(p) for p in payloads]

    columns = [cfg.sweep_key, "alpha", "beta", "value_closed_form", "value_mc",
               "mc_std_error", "value_pde", "certainty_equivalent",
               "residual_beta2", "blow_up"]
    rows = []
    for i, report in enumerate(reports):
        io.write_json(report, out / f"value_{i:03d}.json")
        rows.append([report["sweep_value"]] + [report[c] for c in columns[1:]])
    io.write_csv(out / "sweep.csv", columns, rows)
    return 0


_DISPATCH = {
    "riccati": cmd_riccati,
    "simulate": cmd_simulate,
    "fpk": cmd_fpk,
    "value": cmd_value,
    "validate": cmd_validate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mfrs",
        description="Risk-sensitive mean-field LQ control: Riccati, particle "
                    "Monte Carlo and Fokker-Planck routes with cross-checks.")
    parser.add_argument("command", choices=_COMMANDS)
    parser.add_argument("--config", required=True, metavar="PATH")
    parser.add_argument("--set", action="append", dest="overrides", default=[],
                        metavar="SECTION.KEY=VALUE")
    parser.add_argument("--out", default=None, metavar="DIR")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None,
                        help="override mc.seed")
    args = parser.parse_args(argv)

    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"mc.seed={args.seed}")

    try:
        cfg = load_config(args.config, overrides)
        out = Path(args.out) if args.out else Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return _DISPATCH[args.command](cfg, out, args)
    except InputError as err:
        _emit_error(type(err).__name__, str(err))
        return 2
    except MfrsError as err:
        _emit_error(type(err).__name__, str(err))
        return 3


if __name__ == "__main__":
    sys.exit(main())
