"""Scans over system size shared by the command line and the acceptance suite."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    diagonalize,
    escape_curve,
    estimate_t_eq,
    kicked_top_distribution,
    kicked_top_floquet,
    outcome_variance,
    transition_probabilities,
)
from .ensemble import (
    EnsembleMoments,
    EnsembleRunConfig,
    ScalingFit,
    ensemble_escape_curve,
    ensemble_outcome_moments,
    fit_power_law,
)
from .operators import EnsembleSpec, build_heisenberg_two_field

__all__ = [
    "ScanPoint",
    "moment_scan",
    "teq_scan",
    "heisenberg_variances",
    "heisenberg_escape_curve",
    "kicked_top_variances",
    "fit_scan",
]


@dataclass
class ScanPoint:
    n: int | None
    D: int
    moments: EnsembleMoments


def moment_scan(make_spec, n_values, n_trials: int, eval_times, x: int = 0, all_x: bool = False,
                master_seed: int = 0, threads: int | None = None) -> list[ScanPoint]:
    """Ensemble moments of the outcome variance for each size; ``make_spec(n)`` returns the EnsembleSpec."""
    out = []
    for n in n_values:
        spec = make_spec(n)
        cfg = EnsembleRunConfig(spec, n_trials=n_trials, x=x, eval_times=tuple(eval_times),
                                master_seed=master_seed, all_x=all_x, threads=threads)
        out.append(ScanPoint(n, spec.dim, ensemble_outcome_moments(cfg)))
    return out


def fit_scan(points: list[ScanPoint], time_index: int = 0) -> tuple[ScalingFit, ScalingFit | None]:
    """Power-law fits of the ensemble mean and (when nonzero) ensemble variance against D."""
    mean_fit = fit_power_law([(p.D, p.moments.mean[time_index]) for p in points])
    var_pts = [(p.D, p.moments.var[time_index]) for p in points]
    var_fit = fit_power_law(var_pts) if all(v > 0 for _, v in var_pts) else None
    return mean_fit, var_fit


def teq_scan(make_spec, n_values, n_trials: int, t_grid, x: int = 0, master_seed: int = 0,
             window: int = 5, threads: int | None = None):
    """Mean escape curve and its steepest-rise time for each size."""
    rows = []
    for n in n_values:
        spec = make_spec(n)
        cfg = EnsembleRunConfig(spec, n_trials=n_trials, x=x, eval_times=(float(t_grid[-1]),),
                                master_seed=master_seed, threads=threads)
        curve, t_eq = ensemble_escape_curve(cfg, t_grid, window=window)
        rows.append({"n": n, "D": spec.dim, "t_eq": t_eq, "curve": curve})
    return rows


def heisenberg_variances(n: int, times, normalize: bool = False, x: int | None = None) -> np.ndarray:
    """Outcome variance of the two-field Heisenberg ring at each time.

    With ``x=None`` the variance is averaged over every basis initial state.
    """
    s = diagonalize(build_heisenberg_two_field(n, normalize))
    out = []
    for t in times:
        if x is None:
            out.append(float(np.mean(outcome_variance(transition_probabilities(s, t), axis=0))))
        else:
            C = s.basis_change
            p = np.abs(C @ (np.exp(-1j * t * s.energies) * C[x].conj())) ** 2
            out.append(float(outcome_variance(p / p.sum())))
    return np.array(out)


def heisenberg_escape_curve(n: int, t_grid, x: int = 0, normalize: bool = True, window: int = 5):
    s = diagonalize(build_heisenberg_two_field(n, normalize))
    curve = escape_curve(s, x, t_grid)
    return curve, estimate_t_eq(curve, window=window)


def kicked_top_variances(j_values, n_kicks_list, x_values=(0,), alpha=(1.1, 1.0, 1.0), tau=(10.0, 0.0, 1.0),
                         torsion_scaling: str = "2j+1") -> dict:
    """V_k after each kick count, averaged over the listed initial states.

    Returns ``{n_kicks: [(D, mean V, std over x), ...]}``.
    """
    res: dict[int, list] = {int(k): [] for k in n_kicks_list}
    for j in j_values:
        spec = EnsembleSpec("KickedTop", j=j, alpha=tuple(alpha), tau=tuple(tau), torsion_scaling=torsion_scaling)
        U = kicked_top_floquet(spec)
        for k in n_kicks_list:
            v = [float(outcome_variance(kicked_top_distribution(spec, x, int(k), floquet=U))) for x in x_values]
            res[int(k)].append((spec.dim, float(np.mean(v)), float(np.std(v))))
    return res
