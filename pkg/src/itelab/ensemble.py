"""Monte Carlo over Hamiltonian ensembles and power-law read-offs.

Each trial ``i`` draws its Hamiltonian from the stream
``SeedPath(master_seed, i)``, so retained per-trial values do not depend on
the number of worker threads.  Every trial is diagonalized once; when the
ensemble is normalized the energies are rescaled by ``1/max|E|`` instead of
re-diagonalizing a rescaled matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import (
    Spectrum,
    TimeSeries,
    diagonalize,
    escape_curve,
    estimate_t_eq,
    outcome_variance,
    transition_probabilities,
)
from .errors import InvalidInput, NumericFailure
from .operators import DenseHermitian, EnsembleSpec, sample_hamiltonian
from .parallel import pmap
from .rng import SeedPath

__all__ = [
    "EnsembleRunConfig",
    "EnsembleMoments",
    "ScalingFit",
    "TrialResults",
    "default_sampler",
    "run_trials",
    "ensemble_outcome_moments",
    "ensemble_escape_curve",
    "fit_power_law",
    "chebyshev_tail",
    "term44_value",
    "term44_statistics",
    "sample_moments",
]

MAX_FAILED_FRACTION = 0.01

Sampler = Callable[[EnsembleSpec, SeedPath], "DenseHermitian | Spectrum"]


@dataclass(frozen=True)
class EnsembleRunConfig:
    """Trials of one ensemble.

    ``all_x`` replaces the single initial state ``x`` by an average of the
    outcome variance over every computational-basis initial state.
    """

    spec: EnsembleSpec
    n_trials: int = 50
    x: int = 0
    eval_times: tuple[float, ...] = (10.0,)
    master_seed: int = 0
    all_x: bool = False
    threads: int | None = None

    def __post_init__(self):
        if self.n_trials < 2:
            raise InvalidInput("n_trials must be at least 2")
        if not (0 <= self.x < self.spec.dim):
            raise InvalidInput(f"x={self.x} out of range")
        object.__setattr__(self, "eval_times", tuple(float(t) for t in self.eval_times))


@dataclass
class TrialResults:
    variances: np.ndarray  # (n_trials, n_times), NaN for failed trials
    curves: np.ndarray | None  # (n_trials, n_grid)
    failed: list[int]


def sample_moments(values) -> tuple[float, float, float, float]:
    """Mean, unbiased variance and their standard errors along axis 0."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    mean = v.mean(axis=0)
    var = v.var(axis=0, ddof=1)
    se_mean = np.sqrt(var / n)
    m4 = np.mean((v - mean) ** 4, axis=0)
    se_var = np.sqrt(np.maximum(m4 / n - var**2 * (n - 3) / (n * (n - 1)), 0.0))
    return mean, var, se_mean, se_var


@dataclass
class EnsembleMoments:
    times: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    stderr_mean: np.ndarray
    stderr_var: np.ndarray
    trials: np.ndarray
    n_failed: int = 0

    @classmethod
    def from_trials(cls, times, trials, n_failed=0):
        trials = np.asarray(trials, dtype=float)
        mean, var, sem, sev = sample_moments(trials)
        return cls(np.asarray(times, dtype=float), mean, var, sem, sev, trials, n_failed)

    @property
    def n_trials(self) -> int:
        return self.trials.shape[0]

    def rows(self, D: int, n: int | None):
        for i, t in enumerate(self.times):
            yield {
                "D": D, "n": n if n is not None else "", "t": t,
                "mean": self.mean[i], "var": self.var[i],
                "stderr_mean": self.stderr_mean[i], "stderr_var": self.stderr_var[i],
                "n_trials": self.n_trials,
            }


def default_sampler(spec: EnsembleSpec, seed: SeedPath):
    H = sample_hamiltonian(spec, seed, normalize=False)
    s = diagonalize(H)
    if spec.normalize:
        s = s.rescaled(1.0 / np.max(np.abs(s.energies)))
    return s


def _as_spectrum(obj, spec: EnsembleSpec) -> Spectrum:
    if isinstance(obj, Spectrum):
        return obj
    s = diagonalize(obj)
    if spec.normalize and np.max(np.abs(s.energies)) > 0:
        s = s.rescaled(1.0 / np.max(np.abs(s.energies)))
    return s


def _trial_variances(s: Spectrum, config: EnsembleRunConfig) -> np.ndarray:
    out = np.empty(len(config.eval_times))
    for i, t in enumerate(config.eval_times):
        if config.all_x:
            out[i] = float(np.mean(outcome_variance(transition_probabilities(s, t), axis=0)))
        else:
            C = s.basis_change
            amp = C @ (np.exp(-1j * t * s.energies) * C[config.x].conj())
            p = np.abs(amp) ** 2
            out[i] = float(outcome_variance(p / p.sum()))
    return out


def run_trials(config: EnsembleRunConfig, t_grid=None, sampler: Sampler | None = None) -> TrialResults:
    sampler = sampler or default_sampler
    grid = None if t_grid is None else np.asarray(t_grid, dtype=float)

    def one(i):
        try:
            s = _as_spectrum(sampler(config.spec, SeedPath(config.master_seed, i)), config.spec)
        except NumericFailure:
            return None
        v = _trial_variances(s, config)
        c = escape_curve(s, config.x, grid).values if grid is not None else None
        return v, c

    results = pmap(one, range(config.n_trials), threads=config.threads)
    failed = [i for i, r in enumerate(results) if r is None]
    if len(failed) > MAX_FAILED_FRACTION * config.n_trials:
        raise NumericFailure(f"{len(failed)} of {config.n_trials} trials failed to diagonalize")
    ok = [r for r in results if r is not None]
    variances = np.array([r[0] for r in ok])
    curves = np.array([r[1] for r in ok]) if grid is not None else None
    return TrialResults(variances, curves, failed)


def ensemble_outcome_moments(config: EnsembleRunConfig, sampler: Sampler | None = None) -> EnsembleMoments:
    res = run_trials(config, sampler=sampler)
    return EnsembleMoments.from_trials(config.eval_times, res.variances, len(res.failed))


def ensemble_escape_curve(config: EnsembleRunConfig, t_grid, sampler: Sampler | None = None,
                          window: int = 5) -> tuple[TimeSeries, float]:
    res = run_trials(config, t_grid=t_grid, sampler=sampler)
    mean = TimeSeries(np.asarray(t_grid, dtype=float), res.curves.mean(axis=0))
    return mean, estimate_t_eq(mean, window=window)


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    log_prefactor: float
    r_squared: float
    points: tuple[tuple[float, float], ...] = field(default=())

    @property
    def prefactor(self) -> float:
        return float(np.exp(self.log_prefactor))

    def predict(self, D):
        return np.exp(self.log_prefactor) * np.asarray(D, dtype=float) ** self.exponent


def _linear_fit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(min(max(r2, 0.0), 1.0))


def fit_power_law(points: Sequence[tuple[float, float]]) -> ScalingFit:
    """Least-squares line through (ln D, ln value)."""
    pts = [(float(d), float(v)) for d, v in points]
    if any(v <= 0 for _, v in pts) or any(d <= 0 for d, _ in pts):
        raise InvalidInput("power-law fit needs positive D and values")
    if len({d for d, _ in pts}) < 3:
        raise InvalidInput("power-law fit needs at least 3 distinct D")
    D, v = np.array(pts).T
    slope, intercept, r2 = _linear_fit(np.log(D), np.log(v))
    return ScalingFit(slope, intercept, r2, tuple(pts))


def fit_linear(x, y) -> tuple[float, float, float]:
    """(intercept a, slope b, r^2) for y = a + b x."""
    slope, intercept, r2 = _linear_fit(x, y)
    return intercept, slope, r2


def chebyshev_tail(mean: float, variance: float, epsilon: float) -> float:
    """Chebyshev bound on Pr(|V - mean| >= epsilon); ``mean`` is not needed by the bound."""
    if variance < 0 or not epsilon > 0:
        raise InvalidInput("need variance >= 0 and epsilon > 0")
    return float(min(1.0, variance / epsilon**2))


def term44_value(C: np.ndarray, k: int, x: int, b: int) -> float:
    """The fully diagonal (4,4) contribution |C_kb|^4 |C_xb|^4."""
    return float(np.abs(C[k, b]) ** 4 * np.abs(C[x, b]) ** 4)


def _term44_modes(C: np.ndarray, x: int, k: int, b: int, b_mode: str, k_mode: str) -> float:
    w = np.abs(C) ** 4
    if k_mode == "fixed":
        ks = np.array([k])
    elif k_mode == "averaged":
        ks = np.array([i for i in range(C.shape[0]) if i != x])
    else:
        raise InvalidInput("k_mode must be 'fixed' or 'averaged'")
    if b_mode == "fixed":
        return float(np.mean(w[ks, b] * w[x, b]))
    if b_mode == "averaged":
        return float(np.mean(w[ks, :] * w[x, :]))
    raise InvalidInput("b_mode must be 'fixed' or 'averaged'")


def term44_statistics(config: EnsembleRunConfig, b_mode: str = "fixed", k_mode: str = "fixed",
                      k: int = 1, b: int = 0, sampler: Sampler | None = None) -> dict:
    sampler = sampler or default_sampler

    def one(i):
        try:
            s = _as_spectrum(sampler(config.spec, SeedPath(config.master_seed, i)), config.spec)
        except NumericFailure:
            return None
        return _term44_modes(s.basis_change, config.x, k, b, b_mode, k_mode)

    vals = pmap(one, range(config.n_trials), threads=config.threads)
    failed = sum(v is None for v in vals)
    if failed > MAX_FAILED_FRACTION * config.n_trials:
        raise NumericFailure(f"{failed} of {config.n_trials} trials failed")
    arr = np.array([v for v in vals if v is not None])
    mean, var, sem, sev = sample_moments(arr)
    return {"mean": float(mean), "variance": float(var), "stderr_mean": float(sem),
            "stderr_var": float(sev), "n_trials": len(arr), "values": arr}
