"""Distances between population trajectories, equilibration, and condition flags."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from phasetherm.errors import LengthMismatch


def total_variation(p, q) -> float | np.ndarray:
    """Half the L1 distance along the last axis."""
    p, q = np.asarray(p, dtype=float), np.asarray(q, dtype=float)
    if p.shape[-1] != q.shape[-1]:
        raise LengthMismatch(f"distributions of length {p.shape[-1]} and {q.shape[-1]}")
    out = 0.5 * np.sum(np.abs(p - q), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def equilibration_time(times, trajectory, target, tol: float) -> float | None:
    """First grid time from which TV(P(t), target) <= tol holds to the end."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    tv = np.atleast_1d(total_variation(trajectory, target))
    outside = np.flatnonzero(tv > tol)
    if len(outside) == 0:
        return float(times[0])
    last = outside[-1]
    if last == len(tv) - 1:
        return None
    return float(times[last + 1])


def fit_transfer_rate(times, mean_P, initial_subspace: int, t_lo: float, t_hi: float) -> dict:
    """Initial rate of population leaving the initial subspace.

    Fits 1 - P_init(t) = a + b t + c t^2 on [t_lo, t_hi]; b is the rate at t=0
    with the early-time offset in a and the onset of back-flow in c.
    """
    times = np.asarray(times, dtype=float)
    transfer = 1.0 - np.asarray(mean_P)[:, initial_subspace]
    win = (times >= t_lo) & (times <= t_hi)
    if win.sum() < 4:
        return {"rate": None, "points": int(win.sum()), "window": [t_lo, t_hi]}
    c2, c1, c0 = np.polyfit(times[win], transfer[win], 2)
    return {"rate": float(c1), "curvature": float(c2), "offset": float(c0),
            "points": int(win.sum()), "window": [float(t_lo), float(t_hi)]}


@dataclass(frozen=True)
class ConditionFlags:
    d0_ratio: float
    d0_ratio_initial: float
    d0_ratio_final: float
    d0_threshold: float
    tau_ratio: float
    tau_threshold: float
    weak_ratio: float
    weak_threshold: float

    @property
    def d0_ok(self) -> bool:
        return self.d0_ratio >= self.d0_threshold

    @property
    def tau_ok(self) -> bool:
        return self.tau_ratio <= self.tau_threshold

    @property
    def weak_ok(self) -> bool:
        return self.weak_ratio <= self.weak_threshold

    @property
    def all_ok(self) -> bool:
        return self.d0_ok and self.tau_ok and self.weak_ok

    def as_dict(self) -> dict:
        return {
            "d0_over_dS_min": _finite(self.d0_ratio),
            "d0_over_dS_initial": _finite(self.d0_ratio_initial),
            "d0_over_dS_final": _finite(self.d0_ratio_final),
            "d0_threshold": self.d0_threshold,
            "d0_ok": self.d0_ok,
            "d0_note": ("d0 grows from its initial value" if self.d0_ratio_final > self.d0_ratio_initial
                        else "d0 did not grow"),
            "tau_relax_over_tau_H": _finite(self.tau_ratio),
            "tau_threshold": self.tau_threshold,
            "tau_ok": self.tau_ok,
            "weak_coupling_ratio": _finite(self.weak_ratio),
            "weak_threshold": self.weak_threshold,
            "weak_ok": self.weak_ok,
            "weak_note": "heuristic: lambda * max f * sqrt(dim) / shell width",
        }


def weak_coupling_ratio(coupling: float, max_envelope: float, dimension: int, width: float) -> float:
    return coupling * max_envelope * math.sqrt(dimension) / width


def condition_audit(mean_d0, d_S: int, tau_ratio: float, weak_ratio: float, *,
                    d0_threshold: float = 10.0, tau_threshold: float = 0.1,
                    weak_threshold: float = 0.1) -> ConditionFlags:
    d0 = np.asarray(mean_d0, dtype=float)
    return ConditionFlags(
        d0_ratio=float(d0.min() / d_S), d0_ratio_initial=float(d0[0] / d_S),
        d0_ratio_final=float(d0[-1] / d_S), d0_threshold=d0_threshold,
        tau_ratio=float(tau_ratio), tau_threshold=tau_threshold,
        weak_ratio=float(weak_ratio), weak_threshold=weak_threshold)


def compare_trajectories(times, exact_mean, markov, target=None, *, tv_tolerance: float = 0.05,
                         equilibration_tol: float = 0.05) -> dict:
    """TV(exact mean, Markov) per grid time and the sustained-closeness times.

    The result is a plain dict so it serializes identically wherever it is built.
    """
    exact_mean, markov = np.asarray(exact_mean, dtype=float), np.asarray(markov, dtype=float)
    if exact_mean.shape[1] != markov.shape[1]:
        raise LengthMismatch(f"d_S differs: {exact_mean.shape[1]} vs {markov.shape[1]}")
    if exact_mean.shape != markov.shape:
        raise LengthMismatch("trajectories have different numbers of grid times")
    tv = total_variation(exact_mean, markov)
    report = {
        "d_S": int(exact_mean.shape[1]),
        "n_times": int(len(times)),
        "tv_exact_markov": [float(x) for x in tv],
        "max_tv_exact_markov": float(np.max(tv)),
        "tv_tolerance": float(tv_tolerance),
        "markov_agreement": bool(np.max(tv) <= tv_tolerance),
        "equilibration_tol": float(equilibration_tol),
        "equilibration_time_exact": None,
        "equilibration_time_markov": None,
    }
    if target is not None:
        report["target"] = [float(x) for x in target]
        report["equilibration_time_exact"] = equilibration_time(times, exact_mean, target, equilibration_tol)
        report["equilibration_time_markov"] = equilibration_time(times, markov, target, equilibration_tol)
    return report


def _finite(x: float):
    return float(x) if math.isfinite(x) else None
