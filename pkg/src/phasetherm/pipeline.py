"""Full run: ensemble, Markov chain, analysis, file emission."""

from __future__ import annotations

import math
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from phasetherm.analysis import (
    compare_trajectories,
    condition_audit,
    fit_transfer_rate,
    total_variation,
    weak_coupling_ratio,
)
from phasetherm.config import RunConfig
from phasetherm.dynamics import subspace_populations, timescale_diagnostics
from phasetherm.ensemble import Experiment, RealizationStats, check_fluctuation_bound, run_ensemble
from phasetherm.errors import PhasethermError, Reducible
from phasetherm.markov import (
    RateTable,
    build_rate_table,
    build_transition_matrix,
    canonical_distribution,
    chain_classification,
    closed_form_steady_state,
    evolve_markov,
    steady_state,
)
from phasetherm import outputs

NORM_TOL = 1e-12
ENERGY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MarkovSolution:
    rates: RateTable
    dt: float
    substeps: int
    trajectory: np.ndarray
    steady: np.ndarray | None
    closed_form: np.ndarray
    classification: dict
    note: str


def solve_markov(cfg: RunConfig, exp: Experiment) -> MarkovSolution:
    """Markov trajectory sampled on the exact-dynamics grid.

    The chain step is dt_output / m with the smallest integer m that keeps it
    at or below the configured (or default) dt.
    """
    rates = build_rate_table(exp.system, exp.bath, exp.interaction, exp.shell.center, exp.shell,
                             shell_averaged=cfg.markov.rates == "shell_averaged")
    target_dt = cfg.markov.dt if cfg.markov.dt is not None else rates.default_dt()
    m = max(1, math.ceil(cfg.dynamics.dt_output / target_dt - 1e-12))
    dt = cfg.dynamics.dt_output / m
    T = build_transition_matrix(rates, dt)
    P0 = subspace_populations(np.abs(exp.initial.amplitudes) ** 2, exp.shell)
    traj = evolve_markov(T, P0, (len(exp.times) - 1) * m)[::m]
    classification = chain_classification(T)
    try:
        steady = steady_state(T)
        note = "irreducible"
    except Reducible:
        steady = None
        note = ("reducible-trivial: all rates vanish, T is the identity"
                if not np.any(rates.W) else "reducible: steady state not unique")
    return MarkovSolution(rates, dt, m, traj, steady, closed_form_steady_state(rates),
                          classification, note)


def _clean(obj):
    """JSON-safe copy: numpy scalars to python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


@dataclass(frozen=True, eq=False)
class RunResult:
    stats: RealizationStats
    markov: MarkovSolution
    gibbs: np.ndarray
    comparison: dict
    report: dict
    exit_code: int
    output_dir: Path | None


def analyse(cfg: RunConfig, exp: Experiment, stats: RealizationStats, mk: MarkovSolution):
    a = cfg.analysis
    shell = exp.shell
    beta = cfg.beta
    gibbs = canonical_distribution(exp.system, beta) if beta is not None else mk.closed_form
    times = stats.times

    diag = timescale_diagnostics(shell, mk.rates.outflow, horizon=float(times[-1]),
                                 ratio_threshold=a.tau_ratio_max)
    fluct = check_fluctuation_bound(stats, min_d0=a.fluctuation_min_d0)
    tv_final = total_variation(stats.samples_P[:, -1, :], gibbs)
    typical = float(np.mean(tv_final <= a.gibbs_tolerance))
    envelope = exp.interaction.envelope(shell)
    weak = weak_coupling_ratio(exp.interaction.coupling, float(envelope.max()), len(shell), shell.width)
    flags = condition_audit(stats.mean_d0, shell.d_S, diag.ratio, weak, d0_threshold=a.d0_ratio_min,
                            tau_threshold=a.tau_ratio_max, weak_threshold=a.weak_ratio_max)

    P0 = mk.trajectory[0]
    rate_report = {"status": "skipped: initial state spans several subspaces"}
    rate_ok = False
    if np.isclose(P0.max(), 1.0, atol=1e-12):
        mu0 = int(np.argmax(P0))
        predicted = float(mk.rates.outflow[mu0])
        fit = fit_transfer_rate(times, stats.mean_P, mu0, 2.0 / shell.width, 0.2 * diag.tau_relax)
        rate_report = {"initial_subspace": mu0, "predicted": predicted, **fit}
        if fit["rate"] is not None and predicted > 0:
            rel = abs(fit["rate"] - predicted) / predicted
            rate_ok = rel <= a.rate_tolerance
            rate_report.update(relative_error=rel, tolerance=a.rate_tolerance)
        else:
            rate_report["status"] = "skipped: no outflow or too few grid points in window"
    rate_report["passed"] = rate_ok

    comparison = compare_trajectories(times, stats.mean_P, mk.trajectory, mk.steady,
                                      tv_tolerance=a.tv_tolerance, equilibration_tol=a.equilibration_tol)
    conservation_ok = stats.max_norm_error <= NORM_TOL and stats.max_energy_drift <= ENERGY_TOL

    checks = {
        "markov_agreement": comparison["markov_agreement"],
        "fluctuation_bound": fluct.all_pass,
        "typicality": typical >= a.typicality_fraction,
        "conditions": flags.all_ok,
        "irreducible": mk.classification["irreducible"],
        "rate_recovery": rate_ok,
        "conservation": conservation_ok,
    }
    passed = all(checks[name] for name in a.mandatory)
    report = {
        "shell": {"dimension": len(shell), "counts": shell.counts, "center": shell.center,
                  "width": shell.width},
        "ensemble": {"n": stats.n_realizations, "seed_base": str(stats.seed_base)},
        "markov": {"W": mk.rates.W, "gamma_at": mk.rates.gamma_at, "outflow": mk.rates.outflow,
                   "dt": mk.dt, "substeps": mk.substeps, **mk.classification, "note": mk.note,
                   "steady_state": mk.steady, "closed_form": mk.closed_form},
        "gibbs": gibbs,
        "timescales": {"tau_H": diag.tau_H, "tau_relax": diag.tau_relax, "ratio": diag.ratio,
                       "separated": diag.separated, "horizon": diag.horizon,
                       "horizon_exceeds_tau_H": diag.horizon_exceeds_tau_H, "note": diag.note},
        "fluctuation": {"all_pass": fluct.all_pass, "worst_margin": fluct.worst_margin,
                        "min_d0": a.fluctuation_min_d0},
        "typicality": {"fraction": typical, "required": a.typicality_fraction,
                       "gibbs_tolerance": a.gibbs_tolerance, "max_tv_final": float(np.max(tv_final))},
        "conditions": flags.as_dict(),
        "rate_recovery": rate_report,
        "conservation": {"max_norm_error": stats.max_norm_error,
                         "max_energy_drift_relative": stats.max_energy_drift,
                         "norm_tol": NORM_TOL, "energy_tol": ENERGY_TOL},
        "comparison": comparison,
        "checks": checks,
        "mandatory": list(a.mandatory),
        "passed": passed,
    }
    return gibbs, comparison, _clean(report), (0 if passed else 1)


def run_pipeline(cfg: RunConfig, output_dir=None, *, workers: int | None = None,
                 seed_base: int | None = None) -> RunResult:
    exp = Experiment.from_config(cfg)
    seed_base = cfg.ensemble.seed_base if seed_base is None else seed_base
    workers = cfg.ensemble.workers if workers is None else workers
    keep = "npz" in cfg.output.formats
    stats = run_ensemble(exp, cfg.ensemble.n, seed_base, workers=workers,
                         reuse_spectrum=cfg.ensemble.reuse_spectrum, keep_states=keep)
    mk = solve_markov(cfg, exp)
    gibbs, comparison, report, code = analyse(cfg, exp, stats, mk)
    out = None
    if output_dir is not None:
        out = write_outputs(Path(output_dir), cfg, stats, mk, gibbs, comparison, report)
    return RunResult(stats, mk, gibbs, comparison, report, code, out)


def write_outputs(directory: Path, cfg, stats, mk, gibbs, comparison, report) -> Path:
    """Write everything into a scratch directory, then move it into place."""
    if directory.exists():
        if any(directory.iterdir()) and not (directory / "manifest.json").exists():
            raise PhasethermError(f"output directory {directory} is not empty and holds no previous run")
    directory.parent.mkdir(parents=True, exist_ok=True)
    scratch = Path(tempfile.mkdtemp(prefix=f".{directory.name}.partial-", dir=directory.parent))
    try:
        names = ["config.yaml", "stats.csv", "markov.csv", "trajectory.csv", "distances.csv",
                 "comparison.json", "report.json"]
        (scratch / "config.yaml").write_text(cfg.canonical_yaml())
        outputs.write_long(scratch / "stats.csv", stats.times, stats.mean_P, stats.var_P, stats.n_realizations)
        outputs.write_long(scratch / "markov.csv", stats.times, mk.trajectory, steady=mk.steady)
        outputs.write_trajectory(scratch / "trajectory.csv", stats.times, stats.samples_P[0],
                                 stats.samples_d0[0], stats.samples_energy[0])
        outputs.write_distances(scratch / "distances.csv", stats.times, {
            "tv_exact_markov": total_variation(stats.mean_P, mk.trajectory),
            "tv_exact_gibbs": total_variation(stats.mean_P, gibbs),
            "tv_single_gibbs": total_variation(stats.samples_P[0], gibbs),
        })
        (scratch / "comparison.json").write_text(outputs.dump_json(_clean(comparison)))
        (scratch / "report.json").write_text(outputs.dump_json(report))
        if stats.final_states is not None:
            outputs.write_checkpoint(scratch / "states.npz", stats.final_states, stats.times, stats.seeds)
            names.append("states.npz")
        outputs.write_manifest(scratch, names)
        if directory.exists():
            shutil.rmtree(directory)
        scratch.rename(directory)
    except BaseException:
        shutil.rmtree(scratch, ignore_errors=True)
        raise
    return directory


def compare_files(stats_path, markov_path, *, tv_tolerance: float = 0.05,
                  equilibration_tol: float = 0.05) -> dict:
    """Comparison report from written stats/markov files (same content as a run's)."""
    exact = outputs.read_long(stats_path)
    markov = outputs.read_long(markov_path)
    if exact["d_S"] != markov["d_S"]:
        raise outputs.FormatError(f"d_S mismatch: {exact['d_S']} vs {markov['d_S']}")
    if len(exact["times"]) != len(markov["times"]) or np.max(np.abs(exact["times"] - markov["times"])) > 1e-12:
        raise outputs.FormatError("time grids differ")
    report = compare_trajectories(exact["times"], exact["mean"], markov["mean"], markov["steady"],
                                  tv_tolerance=tv_tolerance, equilibration_tol=equilibration_tol)
    return _clean(report)
