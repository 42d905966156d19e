"""Exact spectral dynamics of pure states in a fixed measurement basis.

The measurement basis is the computational basis of the Hamiltonian matrix;
``Spectrum.basis_change`` has eigenvector ``a`` in column ``a`` so that
``U(t) = C diag(exp(-i t E)) C^dagger``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidInput, NoEquilibration, NumericFailure
from .operators import DenseHermitian, EnsembleSpec, build_kicked_top_generators

__all__ = [
    "Spectrum",
    "PureState",
    "OutcomeDistribution",
    "TimeSeries",
    "diagonalize",
    "eigenvalues",
    "evolve_state",
    "evolve_probabilities",
    "transition_probabilities",
    "outcome_variance",
    "l1_distance_to_uniform",
    "escape_curve",
    "dephasing_average",
    "estimate_t_eq",
    "energy_expectation",
    "kicked_top_floquet",
    "kicked_top_distribution",
]

UNITARITY_TOL = 1e-10
RECONSTRUCTION_TOL = 1e-9


@dataclass(frozen=True)
class Spectrum:
    energies: np.ndarray
    basis_change: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.energies)

    def rescaled(self, factor: float) -> "Spectrum":
        """Spectrum of ``factor * H`` (factor > 0 keeps the ordering)."""
        if not factor > 0:
            raise InvalidInput("rescale factor must be positive")
        return Spectrum(self.energies * factor, self.basis_change)

    def propagator(self, t: float) -> np.ndarray:
        C = self.basis_change
        return (C * np.exp(-1j * t * self.energies)) @ C.conj().T


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        norm = np.sum(np.abs(self.amplitudes) ** 2)
        if abs(norm - 1) > 1e-12:
            raise InvalidInput(f"state norm {norm} differs from 1")

    @property
    def dim(self) -> int:
        return len(self.amplitudes)

    @classmethod
    def basis(cls, D: int, x: int) -> "PureState":
        a = np.zeros(D, dtype=complex)
        a[x] = 1
        return cls(a)


class OutcomeDistribution:
    """Probabilities over M outcomes; tiny negative round-off is clamped to zero."""

    __slots__ = ("probs",)

    def __init__(self, probs):
        p = np.array(probs, dtype=float)
        if p.ndim != 1 or len(p) < 1:
            raise InvalidInput("probabilities must be a nonempty vector")
        if np.any(p < -1e-14):
            raise InvalidInput(f"negative probability {p.min()}")
        p[p < 0] = 0.0
        s = p.sum()
        if abs(s - 1) > 1e-10:
            raise InvalidInput(f"probabilities sum to {s}")
        p.setflags(write=False)
        self.probs = p

    @property
    def size(self) -> int:
        return len(self.probs)

    @classmethod
    def uniform(cls, M: int) -> "OutcomeDistribution":
        return cls(np.full(M, 1.0 / M))

    def __repr__(self):
        return f"OutcomeDistribution(size={self.size})"


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise InvalidInput("times and values must be matching 1-d arrays")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise InvalidInput("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


def _as_array(H) -> np.ndarray:
    return H.entries if isinstance(H, DenseHermitian) else np.asarray(H)


def _fix_phases(C: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    k = np.argmax(np.abs(C), axis=0)
    pivot = C[k, np.arange(C.shape[1])]
    return C * (np.abs(pivot) / pivot)


def diagonalize(H, *, check: str = "probe") -> Spectrum:
    """Full eigendecomposition with a deterministic eigenvector phase.

    ``check="probe"`` verifies unitarity and reconstruction on a few random
    vectors (O(D^2)); ``"full"`` forms both products explicitly; ``"none"``
    skips verification.
    """
    a = _as_array(H)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput("need a square matrix")
    real = not np.any(a.imag)
    w, v = scipy.linalg.eigh(a.real if real else a, driver="evr")
    C = _fix_phases(v.astype(complex))
    spec = Spectrum(w, C)
    if check != "none":
        _verify(a, spec, full=(check == "full"))
    return spec


def _verify(a, spec: Spectrum, full: bool):
    C, w = spec.basis_change, spec.energies
    scale = max(1.0, float(np.max(np.abs(w))) if len(w) else 1.0)
    if full:
        unit = np.max(np.abs(C.conj().T @ C - np.eye(len(w))))
        recon = np.max(np.abs((C * w) @ C.conj().T - a)) / scale
    else:
        rng = np.random.default_rng(len(w))
        P = rng.standard_normal((len(w), 3)) + 1j * rng.standard_normal((len(w), 3))
        P /= np.linalg.norm(P, axis=0)
        unit = np.max(np.abs(C @ (C.conj().T @ P) - P))
        recon = np.max(np.abs(C @ (w[:, None] * (C.conj().T @ P)) - a @ P)) / scale
    if unit > UNITARITY_TOL or recon > RECONSTRUCTION_TOL:
        raise NumericFailure(
            f"eigendecomposition residual too large (unitarity {unit:.2e}, reconstruction {recon:.2e})",
            residual=max(unit, recon),
        )


def eigenvalues(H) -> np.ndarray:
    a = _as_array(H)
    real = not np.any(a.imag)
    return scipy.linalg.eigvalsh(a.real if real else a, driver="evr")


def _check_index(spec: Spectrum, x: int):
    if not (0 <= int(x) < spec.dim):
        raise InvalidInput(f"outcome index {x} out of range for D={spec.dim}")


def evolve_state(spec: Spectrum, psi0, t: float) -> np.ndarray:
    C = spec.basis_change
    psi0 = np.asarray(getattr(psi0, "amplitudes", psi0), dtype=complex)
    return C @ (np.exp(-1j * t * spec.energies) * (C.conj().T @ psi0))


def _probs_from_amplitudes(amp) -> np.ndarray:
    p = np.abs(amp) ** 2
    return p / p.sum()


def evolve_probabilities(spec: Spectrum, x: int, t: float) -> OutcomeDistribution:
    """Pr(k | x, t) = |sum_a C[k,a] exp(-i t E_a) conj(C[x,a])|^2."""
    _check_index(spec, x)
    C = spec.basis_change
    amp = C @ (np.exp(-1j * t * spec.energies) * C[x].conj())
    return OutcomeDistribution(_probs_from_amplitudes(amp))


def transition_probabilities(spec: Spectrum, t: float) -> np.ndarray:
    """Matrix ``P[k, x] = |<k|U(t)|x>|^2``; column x is the distribution from x."""
    return np.abs(spec.propagator(t)) ** 2


def _probs(dist) -> np.ndarray:
    return dist.probs if isinstance(dist, OutcomeDistribution) else np.asarray(dist, dtype=float)


def outcome_variance(dist, axis: int = 0):
    """M^-1 sum_k (p_k - 1/M)^2; along ``axis`` for stacked distributions."""
    p = _probs(dist)
    M = p.shape[axis]
    return np.mean((p - 1.0 / M) ** 2, axis=axis)


def l1_distance_to_uniform(dist) -> float:
    p = _probs(dist)
    return float(np.sum(np.abs(p - 1.0 / len(p))))


def escape_curve(spec: Spectrum, x: int, t_grid) -> TimeSeries:
    """Mean probability of the outcomes k != x, i.e. (1 - Pr(x|x,t)) / (D - 1)."""
    _check_index(spec, x)
    t = np.asarray(t_grid, dtype=float)
    w = np.abs(spec.basis_change[x]) ** 2
    survival = np.abs(np.exp(-1j * np.outer(t, spec.energies)) @ w) ** 2 / w.sum() ** 2
    values = (1 - survival) / (spec.dim - 1)
    values[t == 0] = 0.0
    return TimeSeries(t, values)


def dephasing_average(spec: Spectrum, x: int) -> np.ndarray:
    """Infinite-time average of Pr(k|x,t) for a nondegenerate spectrum."""
    _check_index(spec, x)
    w = np.abs(spec.basis_change) ** 2
    return w @ w[x]


def estimate_t_eq(curve: TimeSeries, window: int = 5) -> float:
    """Time of steepest rise of the moving-average-smoothed curve."""
    t, v = curve.times, curve.values
    if len(t) < 16:
        raise InvalidInput("need at least 16 grid points")
    if window < 1 or window > len(t):
        raise InvalidInput("bad smoothing window")
    kernel = np.ones(window) / window
    # 'valid' smoothing avoids zero padding at the ends; time of point i is t[i + h]
    sm = np.convolve(v, kernel, mode="valid")
    tt = np.convolve(t, kernel, mode="valid")
    h = (window - 1) // 2
    if len(sm) < 2:
        raise InvalidInput("curve too short for the smoothing window")
    slope = np.gradient(sm, tt)
    k = int(np.argmax(slope))
    if not slope[k] > 1e-15:
        raise NoEquilibration("curve has no rising segment")
    return float(t[k + h])


def energy_expectation(H, psi) -> float:
    a = _as_array(H)
    psi = np.asarray(psi)
    return float(np.real(np.vdot(psi, a @ psi)))


def _expm_hermitian(H, t: float) -> np.ndarray:
    s = diagonalize(H)
    return s.propagator(t)


def kicked_top_floquet(spec: EnsembleSpec) -> np.ndarray:
    """U_F = exp(-i H_torsion) exp(-i H_kick), each via its eigendecomposition."""
    torsion, kick = build_kicked_top_generators(spec)
    return _expm_hermitian(torsion, 1.0) @ _expm_hermitian(kick, 1.0)


def kicked_top_distribution(spec: EnsembleSpec, x: int = 0, n_kicks: int = 10,
                            floquet: np.ndarray | None = None) -> OutcomeDistribution:
    """Jz-basis distribution after ``n_kicks`` Floquet steps from |j, m = j - x>."""
    if n_kicks < 0:
        raise InvalidInput("n_kicks must be nonnegative")
    U = kicked_top_floquet(spec) if floquet is None else floquet
    D = U.shape[0]
    if not (0 <= x < D):
        raise InvalidInput(f"x={x} out of range")
    psi = np.zeros(D, dtype=complex)
    psi[x] = 1
    for _ in range(n_kicks):
        psi = U @ psi
    return OutcomeDistribution(_probs_from_amplitudes(psi))
