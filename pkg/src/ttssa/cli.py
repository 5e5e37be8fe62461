"""Batch command-line harness: config parsing, experiments, CSV emission.

Config is a single JSON document; every experiment is fully determined by
(config, seed), and repeated runs produce byte-identical CSV output.
"""

from __future__ import annotations

import json
import pathlib
import sys

import click
import numpy as np

from . import constants as consts
from . import gtd as gtd_mod
from . import plots
from .engine import _default_checkpoints, monte_carlo_mse
from .errors import ConfigError, TtssaError
from .markov import (FiniteMarkovChain, SampleTable, build_spread_table,
                     load_chain_table, mixing_profile)
from .problem import (ProblemInstance, exact_solution, spectral_summary,
                      validate_assumptions)
from .ratefit import fit_rate, fit_rate_csv
from .restart import (RestartConfig, budget_restarted, fit_psi_surrogates,
                      run_restarted)
from .schedule import StepSchedule, c0_estimate, k_star, validate_schedule

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

SWEEP_DEFAULT = (0.55, 0.6, 2.0 / 3.0, 0.75, 0.85)


def _fail(kind: str, exc: Exception, code: int):
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


def _guarded(fn):
    """Config problems exit 2, numerical problems exit 3, both as JSON."""
    import functools

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail("config", exc, EXIT_CONFIG)
        except (KeyError, ValueError, TypeError, OSError,
                json.JSONDecodeError) as exc:
            _fail("config", exc, EXIT_CONFIG)
        except TtssaError as exc:
            _fail("numeric", exc, EXIT_NUMERIC)
    return wrapper


def _load_config(path) -> dict:
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _resolve(cfg_dir: pathlib.Path, p: str) -> pathlib.Path:
    path = pathlib.Path(p)
    return path if path.is_absolute() else cfg_dir / path


def _build_problem(cfg: dict, cfg_dir: pathlib.Path):
    """(problem, chain, table) from the config's problem/chain sections.

    Without a chain section the run is noiseless: a single-state chain whose
    one table entry is the nominal problem.
    """
    src = cfg.get("problem")
    if src is None:
        raise ConfigError("config needs a 'problem' section")
    gtd_model = None
    if "gtd" in src:
        mrp = gtd_mod.MarkovRewardProcess.from_dict(src["gtd"])
        feats = gtd_mod.FeatureMap(np.asarray(src["gtd"]["features"], dtype=float))
        if src["gtd"].get("auto_scale", False):
            feats, c = gtd_mod.scale_features(mrp, feats)
            if c < 1.0:
                click.echo(f"# features rescaled by {c:.6g}", err=True)
        gtd_model = gtd_mod.build_gtd_instance(mrp, feats)
        return gtd_model.problem, gtd_model.chain, gtd_model.table, gtd_model
    if "inline" in src:
        p = ProblemInstance.from_dict(src["inline"])
    elif "file" in src:
        p = ProblemInstance.from_json(_resolve(cfg_dir, src["file"]))
    else:
        raise ConfigError("problem source must be 'inline', 'file', or 'gtd'")

    ch = cfg.get("chain")
    if ch is None:
        chain = FiniteMarkovChain(np.array([[1.0]]))
        table = SampleTable(
            a11=p.a11[None], a12=p.a12[None], a21=p.a21[None],
            a22=p.a22[None], b1=p.b1[None], b2=p.b2[None])
    elif "file" in ch:
        chain, table = load_chain_table(_resolve(cfg_dir, ch["file"]))
    elif "inline" in ch:
        chain, table = load_chain_table(ch["inline"])
    elif "spread" in ch:
        chain = FiniteMarkovChain(np.asarray(ch["spread"]["transition"], dtype=float))
        table = build_spread_table(p, chain, ch["spread"].get("spread", {}))
    else:
        raise ConfigError("chain source must be 'inline', 'file', or 'spread'")
    return p, chain, table, gtd_model


def _schedule_from(cfg: dict) -> StepSchedule:
    if "schedule" not in cfg:
        raise ConfigError("config needs a 'schedule' section")
    return StepSchedule.from_dict(cfg["schedule"])


def _initial_point(cfg: dict, p: ProblemInstance):
    x0 = np.asarray(cfg.get("x0", np.zeros(p.dx)), dtype=float)
    y0 = np.asarray(cfg.get("y0", np.zeros(p.dy)), dtype=float)
    return x0, y0


def _parse_window(window: str | None, cfg: dict):
    if window:
        lo, _, hi = window.partition(":")
        try:
            return float(lo), float(hi)
        except ValueError as exc:
            raise ConfigError(f"bad --window {window!r}, expected LO:HI") from exc
    if "window" in cfg:
        lo, hi = cfg["window"]
        return float(lo), float(hi)
    return None


def _json_out(payload: dict):
    click.echo(json.dumps(payload, indent=2, default=str))


@click.group()
def main():
    """Two-time-scale stochastic approximation experiment harness."""


_config_opt = click.option("--config", "config_path", required=True,
                           type=click.Path(exists=True, dir_okay=False))
_seed_opt = click.option("--seed", type=int, default=None,
                         help="Base seed (overrides config).")
_traj_opt = click.option("--traj", "n_traj", type=int, default=None,
                         help="Trajectory count (overrides config).")
_horizon_opt = click.option("--horizon", type=int, default=None,
                            help="Iteration horizon (overrides config).")
_out_opt = click.option("--out", "out_path", type=click.Path(dir_okay=False),
                        default=None, help="Output CSV path.")
_window_opt = click.option("--window", default=None,
                           help="Fit window LO:HI in k.")
_fig_opt = click.option("--no-fig", is_flag=True,
                        help="Skip figure rendering next to the CSV.")


@main.command()
@_config_opt
@_guarded
def solve(config_path):
    """Exact solution, spectral summary, and assumption report."""
    cfg = _load_config(config_path)
    cfg_dir = pathlib.Path(config_path).resolve().parent
    p, chain, table, gtd_model = _build_problem(cfg, cfg_dir)
    sol = exact_solution(p)
    spec = spectral_summary(p, table)
    report = validate_assumptions(p, table, chain=chain)
    out = {
        "x_star": sol.x_star.tolist(),
        "y_star": sol.y_star.tolist(),
        "spectral": {
            "gamma": spec.gamma, "rho": spec.rho,
            "lambda1": spec.lambda1, "lambdan": spec.lambdan,
            "sigma1": spec.sigma1, "sigman": spec.sigman,
            "b_bound": spec.b_bound, "y_star_norm": spec.y_star_norm,
        },
        "assumptions": {
            "bounded_ok": report.bounded_ok,
            "positivity_ok": report.positivity_ok,
            "stationary_ok": report.stationary_ok,
            "worst_block_norm": report.worst_block_norm,
            "details": report.details,
        },
    }
    if gtd_model is not None:
        bell = gtd_mod.bellman_fixed_point(gtd_model.mrp, gtd_model.features)
        out["gtd"] = {
            "bellman_y_star": bell.y_star.tolist(),
            "fitted_values": bell.fitted_values.tolist(),
            "exact_values": gtd_mod.exact_values(gtd_model.mrp).tolist(),
            "x_star_tracking_deviation": gtd_mod.x_star_tracking_check(p, bell),
        }
    _json_out(out)


@main.command()
@_config_opt
@_guarded
def validate(config_path):
    """Schedule certification, transient index, and the constants report."""
    cfg = _load_config(config_path)
    cfg_dir = pathlib.Path(config_path).resolve().parent
    p, chain, table, _ = _build_problem(cfg, cfg_dir)
    schedule = _schedule_from(cfg)
    spec = spectral_summary(p, table)
    cert = validate_schedule(schedule, spec)
    out = {"certification": cert.status, "reasons": cert.reasons}
    if cert.status in ("certified", "heuristic"):
        mix = mixing_profile(chain, table)
        ti = k_star(schedule, mix)
        out["k_star"] = ti.k_star
        out["k_star_witness"] = ti.witness
        out["c_geometric"] = mix.c_geometric
        if cert.certified:
            cutoff = int(cfg.get("c0_cutoff", 10**7))
            c0 = c0_estimate(schedule, mix, cutoff=cutoff, certification=cert)
            x0, y0 = _initial_point(cfg, p)
            sol = exact_solution(p)
            from .engine import residuals
            r0 = residuals(x0, y0, p, sol)
            from .engine import lyapunov_value
            v0 = lyapunov_value(r0, schedule, 0, spec)
            rc = consts.rate_constants(
                spec, schedule, mix, c0=c0.total, k_star=ti.k_star,
                e_z0_sq=r0.z_hat_sq, v0=v0, c_mix=mix.c_geometric)
            out["constants"] = rc.report()
    _json_out(out)


def _run_experiment(cfg, cfg_dir, seed, n_traj, horizon):
    p, chain, table, gtd_model = _build_problem(cfg, cfg_dir)
    schedule = _schedule_from(cfg)
    seed = seed if seed is not None else int(cfg.get("seed", 0))
    n_traj = n_traj if n_traj is not None else int(cfg.get("n_traj", 1))
    horizon = horizon if horizon is not None else int(cfg.get("horizon", 10**4))
    x0, y0 = _initial_point(cfg, p)
    init_state = cfg.get("init_state", "stationary")
    checkpoints = cfg.get("checkpoints") or _default_checkpoints(horizon)
    curves = monte_carlo_mse(p, table, chain, schedule, x0, y0,
                             n_traj=n_traj, base_seed=seed,
                             checkpoints=checkpoints, init_state=init_state)
    return p, chain, table, schedule, curves, gtd_model, seed


@main.command()
@_config_opt
@_seed_opt
@_traj_opt
@_horizon_opt
@_out_opt
@_window_opt
@_fig_opt
@_guarded
def run(config_path, seed, n_traj, horizon, out_path, window, no_fig):
    """Plain Monte Carlo experiment: curve CSV plus a log-log figure."""
    cfg = _load_config(config_path)
    cfg_dir = pathlib.Path(config_path).resolve().parent
    _, _, _, schedule, curves, gtd_model, seed = _run_experiment(
        cfg, cfg_dir, seed, n_traj, horizon)
    out_path = pathlib.Path(out_path or cfg.get("out", "curves.csv"))
    curves.write_csv(out_path)
    summary = {"csv": str(out_path), "seed": seed, "n_traj": curves.n_traj,
               "final_lyapunov": float(curves.lyapunov[-1])}
    win = _parse_window(window, cfg)
    fit = None
    if win is not None:
        fit = fit_rate(curves.checkpoints, curves.lyapunov, window=win)
        summary["fit"] = {"slope": fit.slope, "intercept": fit.intercept,
                          "r_squared": fit.r_squared, "window": list(fit.window)}
    if not no_fig:
        fig_path = out_path.with_suffix(".png")
        plots.plot_mse_curves(curves, fig_path, fit=fit)
        summary["figure"] = str(fig_path)
    _json_out(summary)


@main.command()
@_config_opt
@_seed_opt
@_traj_opt
@_out_opt
@_fig_opt
@_guarded
def restart(config_path, seed, n_traj, out_path, no_fig):
    """Restarted run with doubling epochs; emits the epoch CSV."""
    cfg = _load_config(config_path)
    cfg_dir = pathlib.Path(config_path).resolve().parent
    p, chain, table, _ = _build_problem(cfg, cfg_dir)
    schedule = _schedule_from(cfg)
    spec = spectral_summary(p, table)
    rcfg_in = cfg.get("restart")
    if rcfg_in is None:
        raise ConfigError("config needs a 'restart' section")
    seed = seed if seed is not None else int(cfg.get("seed", 0))
    n_traj = n_traj if n_traj is not None else int(cfg.get("n_traj", 1))
    x0, y0 = _initial_point(cfg, p)
    init_state = cfg.get("init_state", "stationary")
    sol = exact_solution(p)
    from .engine import lyapunov_value, residuals
    v0 = lyapunov_value(residuals(x0, y0, p, sol), schedule, 0, spec)
    delta0 = float(rcfg_in.get("delta0", max(v0, 1e-12)))

    psi_source = rcfg_in.get("psi", "empirical")
    if psi_source == "empirical":
        pilot_h = int(rcfg_in.get("pilot_horizon", 10**4))
        pilot_traj = int(rcfg_in.get("pilot_traj", max(n_traj // 2, 1)))
        ckpts = _default_checkpoints(pilot_h)
        pilot = monte_carlo_mse(p, table, chain, schedule, x0, y0,
                                n_traj=pilot_traj, base_seed=seed + 1,
                                checkpoints=ckpts, init_state=init_state)
        psi1, psi2 = fit_psi_surrogates(pilot.checkpoints, pilot.lyapunov,
                                        v0=max(v0, 1e-12))
    else:
        psi1 = float(rcfg_in["psi1"])
        psi2 = float(rcfg_in["psi2"])
    rcfg = RestartConfig(delta0=delta0, epsilon=float(rcfg_in["epsilon"]),
                         psi1=psi1, psi2=psi2, psi_source=psi_source,
                         max_epochs=int(rcfg_in.get("max_epochs", 64)))
    log = run_restarted(p, table, chain, schedule, rcfg, x0, y0,
                        base_seed=seed, n_traj=n_traj, init_state=init_state,
                        spec=spec)
    out_path = pathlib.Path(out_path or cfg.get("out", "epochs.csv"))
    log.write_csv(out_path)
    budget = budget_restarted(rcfg)
    summary = {"csv": str(out_path), "seed": seed, "psi_source": psi_source,
               "psi1": psi1, "psi2": psi2, "delta0": delta0,
               "epochs": len(log.rows) - 1,
               "total_iterations": budget.total,
               "closed_form_bound": budget.closed_form_bound}
    if not no_fig:
        fig_path = out_path.with_suffix(".png")
        plots.plot_epoch_log(log, fig_path)
        summary["figure"] = str(fig_path)
    _json_out(summary)


@main.command()
@_config_opt
@_seed_opt
@_traj_opt
@_horizon_opt
@_out_opt
@_window_opt
@_fig_opt
@_guarded
def sweep(config_path, seed, n_traj, horizon, out_path, window, no_fig):
    """Slope table over fast-step exponents s (slow exponent fixed at 1)."""
    cfg = _load_config(config_path)
    cfg_dir = pathlib.Path(config_path).resolve().parent
    p, chain, table, _ = _build_problem(cfg, cfg_dir)
    base_schedule = _schedule_from(cfg)
    if base_schedule.beta.kind != "poly" or abs(base_schedule.beta.exponent - 1.0) > 1e-9:
        raise ConfigError("sweep mode requires a beta family with exponent 1")
    exponents = [float(s) for s in cfg.get("sweep", {}).get("exponents", SWEEP_DEFAULT)]
    seed = seed if seed is not None else int(cfg.get("seed", 0))
    n_traj = n_traj if n_traj is not None else int(cfg.get("n_traj", 1))
    horizon = horizon if horizon is not None else int(cfg.get("horizon", 10**4))
    win = _parse_window(window, cfg) or (max(horizon // 100, 10), horizon)
    x0, y0 = _initial_point(cfg, p)
    init_state = cfg.get("init_state", "stationary")
    spec = spectral_summary(p, table)
    checkpoints = _default_checkpoints(horizon)
    results = []
    rows = []
    for s in exponents:
        sched = StepSchedule.polynomial(base_schedule.alpha.scale, s,
                                        base_schedule.beta.scale, 1.0)
        cert = validate_schedule(sched, spec)
        curves = monte_carlo_mse(p, table, chain, sched, x0, y0,
                                 n_traj=n_traj, base_seed=seed,
                                 checkpoints=checkpoints, init_state=init_state)
        fit = fit_rate(curves.checkpoints, curves.lyapunov, window=win)
        results.append((s, fit))
        rows.append((s, cert.status, fit.slope, fit.r_squared,
                     float(curves.lyapunov[-1])))
    out_path = pathlib.Path(out_path or cfg.get("out", "sweep.csv"))
    with open(out_path, "w", newline="") as fh:
        fh.write("s,certification,slope,r_squared,final_lyapunov\n")
        for s, status, slope, r2, fin in rows:
            fh.write(f"{s:.17g},{status},{slope:.17g},{r2:.17g},{fin:.17g}\n")
    summary = {"csv": str(out_path), "seed": seed,
               "slopes": {f"{s:g}": slope for s, _, slope, _, _ in rows}}
    if not no_fig:
        fig_path = out_path.with_suffix(".png")
        plots.plot_sweep(results, fig_path)
        summary["figure"] = str(fig_path)
    _json_out(summary)


@main.command(name="rate-fit")
@click.argument("csv_path", type=click.Path(exists=True, dir_okay=False))
@_window_opt
@click.option("--column", default="lyapunov", show_default=True)
@_guarded
def rate_fit(csv_path, window, column):
    """Log-log slope of one column of a curve CSV."""
    win = _parse_window(window, {})
    fit = fit_rate_csv(csv_path, window=win, column=column)
    _json_out({"slope": fit.slope, "intercept": fit.intercept,
               "r_squared": fit.r_squared, "n_points": fit.n_points,
               "window": list(fit.window)})


if __name__ == "__main__":
    main()
