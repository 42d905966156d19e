"""GUE spectral statistics: form factor, semicircle, equilibration time.

Energies are those of GUE matrices with ``sigma2 = 1/2`` (see
:func:`itelab.operators.sample_gue`), whose spectrum fills ``[-sqrt(2D), sqrt(2D)]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import eigenvalues
from .errors import InvalidInput
from .operators import sample_gue
from .parallel import pmap
from .rng import as_seed_path

__all__ = [
    "FormFactorCurve",
    "bessel_j1",
    "semicircle_density",
    "gamma_analytic",
    "gamma_sine_kernel",
    "sample_gue_spectra",
    "gamma_monte_carlo",
    "delta_monte_carlo",
    "t_eq_gue",
    "validity_cutoff",
]

# below this argument the power series is used, above it the Hankel expansion;
# both are accurate to ~1e-12 at the seam
BESSEL_SWITCH = 12.0
_SERIES_TERMS = 45
_HANKEL_TERMS = 14


def _j1_series(x: np.ndarray) -> np.ndarray:
    h = x / 2
    term = h.copy()
    s = h.copy()
    hh = h * h
    for k in range(1, _SERIES_TERMS):
        term = term * (-hh / (k * (k + 1)))
        s = s + term
    return s


def _hankel_coeffs(n: int) -> list[float]:
    # a_k = prod_{m=1..k} (4 - (2m-1)^2) / (k! 8^k) for order one
    a = [1.0]
    for k in range(1, n):
        a.append(a[-1] * (4.0 - (2 * k - 1) ** 2) / (k * 8.0))
    return a


_A = _hankel_coeffs(2 * _HANKEL_TERMS + 2)


def _j1_asymptotic(x: np.ndarray) -> np.ndarray:
    P = np.zeros_like(x)
    Q = np.zeros_like(x)
    prev = np.full_like(x, np.inf)
    active = np.ones_like(x, dtype=bool)
    for k in range(_HANKEL_TERMS):
        tP = (-1) ** k * _A[2 * k] / x ** (2 * k)
        tQ = (-1) ** k * _A[2 * k + 1] / x ** (2 * k + 1)
        # stop each x at its smallest term (asymptotic series)
        active &= np.abs(tP) <= prev
        P = P + np.where(active, tP, 0.0)
        Q = Q + np.where(active, tQ, 0.0)
        prev = np.abs(tP)
    chi = x - 0.75 * np.pi
    return np.sqrt(2 / (np.pi * x)) * (P * np.cos(chi) - Q * np.sin(chi))


def bessel_j1(x):
    """Bessel function of the first kind, order one, for x >= 0."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise InvalidInput("bessel_j1 is implemented for x >= 0")
    flat = np.atleast_1d(arr).ravel()
    out = np.empty_like(flat)
    small = flat < BESSEL_SWITCH
    out[small] = _j1_series(flat[small])
    out[~small] = _j1_asymptotic(flat[~small])
    out = out.reshape(np.shape(arr))
    return float(out) if np.ndim(arr) == 0 else out


def semicircle_density(E, D: int):
    """Mean level density (1/pi) sqrt(2D - E^2) on |E| < sqrt(2D); integrates to D."""
    E = np.asarray(E, dtype=float)
    r2 = 2.0 * D
    out = np.where(np.abs(E) < np.sqrt(r2), np.sqrt(np.maximum(r2 - E * E, 0.0)) / np.pi, 0.0)
    return float(out) if out.ndim == 0 else out


def _bessel_term(t: np.ndarray, D: int) -> np.ndarray:
    r = np.sqrt(2.0 * D)
    out = np.empty_like(t)
    zero = t == 0
    # J1(r t)/t -> r/2 as t -> 0
    out[zero] = 2.0 * D * (r / 2) ** 2
    tz = t[~zero]
    out[~zero] = 2.0 * D * bessel_j1(r * np.abs(tz)) ** 2 / tz**2
    return out


def gamma_analytic(t, D: int):
    """Large-D asymptotic of E|Tr exp(-itH)|^2 as a Bessel peak, a plateau and a linear ramp.

    The step function is taken as 0 at its jump.  Values at small ``t`` lie
    outside the asymptotic regime; see :func:`validity_cutoff`.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise InvalidInput("gamma_analytic expects t >= 0")
    r = np.sqrt(2.0 * D)
    ramp = np.where(2 * r - ts > 0, r - ts / 2, 0.0)
    out = D + _bessel_term(ts, D) - ramp
    return float(out[0]) if np.ndim(t) == 0 else out


def gamma_sine_kernel(t, D: int):
    """Alternative asymptotic using the local sine-kernel correlation on the semicircle.

    The connected part subtracts the integral of (rho(E) - t/2pi)_+; this
    reproduces sampled GUE form factors through the ramp, where the
    three-term form is not accurate at moderate D.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise InvalidInput("gamma_sine_kernel expects t >= 0")
    r = np.sqrt(2.0 * D)
    e0 = np.sqrt(np.maximum(2.0 * D - ts**2 / 4, 0.0))
    ramp = (2.0 * D * np.arcsin(np.minimum(e0 / r, 1.0)) - ts * e0 / 2) / np.pi
    out = D + _bessel_term(ts, D) - ramp
    return float(out[0]) if np.ndim(t) == 0 else out


def validity_cutoff(D: int) -> float:
    """Smallest t at which the asymptotic form factor is compared with sampling."""
    return 0.5 * D ** (-1.0 / 6.0)


def sample_gue_spectra(D: int, n_samples: int, seed=None, sigma2: float = 0.5,
                       threads: int | None = None) -> np.ndarray:
    """(n_samples, D) array; sample i uses the sub-stream ``seed.child(i)``."""
    sp = as_seed_path(seed)
    rows = pmap(lambda i: eigenvalues(sample_gue(D, sigma2, sp.child(i))), range(n_samples), threads=threads)
    return np.array(rows)


def _mu(times: np.ndarray, spectra: np.ndarray, sign: float = -1.0) -> np.ndarray:
    """mu[t, sample] = sum_a exp(sign * i t E_a), computed in blocks of times."""
    out = np.empty((len(times), spectra.shape[0]), dtype=complex)
    block = max(1, 2_000_000 // spectra.size)
    for s in range(0, len(times), block):
        tb = times[s: s + block]
        out[s: s + block] = np.exp(sign * 1j * tb[:, None, None] * spectra[None]).sum(-1)
    return out


@dataclass
class FormFactorCurve:
    D: int
    times: np.ndarray
    analytic: np.ndarray
    mc_mean: np.ndarray | None = None
    mc_stderr: np.ndarray | None = None

    @property
    def valid(self) -> np.ndarray:
        """Mask of times inside the asymptotic-validity region."""
        return self.times >= validity_cutoff(self.D)


def gamma_monte_carlo(D: int, t_grid, n_samples: int = 500, seed=None, spectra: np.ndarray | None = None,
                      threads: int | None = None) -> FormFactorCurve:
    if n_samples < 100 and spectra is None:
        raise InvalidInput("need at least 100 spectra")
    t = np.asarray(t_grid, dtype=float)
    if spectra is None:
        spectra = sample_gue_spectra(D, n_samples, seed, threads=threads)
    g = np.abs(_mu(t, spectra)) ** 2
    n = g.shape[1]
    return FormFactorCurve(D, t, gamma_analytic(t, D), g.mean(1), g.std(1, ddof=1) / np.sqrt(n))


def delta_monte_carlo(D: int, t_grid, n_samples: int = 500, seed=None, spectra: np.ndarray | None = None,
                      threads: int | None = None) -> dict:
    """Sample mean of mu(t)^2 mu(-2t) with mu(t) = Tr exp(-itH), and its standard error."""
    t = np.asarray(t_grid, dtype=float)
    if spectra is None:
        spectra = sample_gue_spectra(D, n_samples, seed, threads=threads)
    m1 = _mu(t, spectra)
    m2 = _mu(-2 * t, spectra)
    d = m1**2 * m2
    n = d.shape[1]
    se = np.sqrt(d.real.var(1, ddof=1) + d.imag.var(1, ddof=1)) / np.sqrt(n)
    return {"times": t, "mean": d.mean(1), "stderr": se, "n_samples": n}


def t_eq_gue(D: int, c: float = 1.0, t_max: float = 3.0, n_grid: int = 300_001) -> float:
    """First grid time after which the Bessel peak 2D J1(sqrt(2D) t)^2 / t^2 stays <= c D."""
    if D < 4:
        raise InvalidInput("t_eq_gue needs D >= 4")
    if not c > 0:
        raise InvalidInput("c must be positive")
    t = np.linspace(t_max / (n_grid - 1), t_max, n_grid)
    f = _bessel_term(t, D)
    bad = np.nonzero(f > c * D)[0]
    if len(bad) == 0:
        return float(t[0])
    if bad[-1] + 1 >= len(t):
        raise InvalidInput("grid too short for this D and c; increase t_max")
    return float(t[bad[-1] + 1])
