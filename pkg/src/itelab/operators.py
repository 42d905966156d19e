"""Hamiltonian construction for the spin-chain, random-matrix and kicked-top models.

Conventions
-----------
* Qubit ``0`` is the most significant bit of the computational-basis index, so
  ``build_pauli_string(2, [(1, 'Z')])`` is ``I (x) Z``.
* Matrices are stored as ``H[out, in]``.
* RLH coefficients are drawn in a fixed order: single-site terms by site, then
  axis X, Y, Z; then edges in lexicographic order, each with the nine axis
  pairs (p, p') in row-major order.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import CapacityError, InvalidInput
from .rng import SeedPath, as_seed_path

__all__ = [
    "PauliFactor",
    "DenseHermitian",
    "EnsembleSpec",
    "SeedPath",
    "MAX_QUBITS",
    "build_pauli_string",
    "sample_gue",
    "sample_rlh",
    "build_heisenberg_two_field",
    "angular_momentum_ops",
    "build_kicked_top_generators",
    "sample_hamiltonian",
    "spectral_norm",
    "complete_edges",
    "chain_edges",
    "lattice_edges",
    "lattice_shape",
    "rlh_terms",
]

MAX_QUBITS = 14
AXES = ("X", "Y", "Z")
VARIANTS = ("GUE", "RLHComplete", "RLHChain", "RLHLattice", "HeisenbergTwoField", "KickedTop")
RLH_VARIANTS = ("RLHComplete", "RLHChain", "RLHLattice")

# near-square torus shapes; n = 12 is the 4x3 lattice
DEFAULT_LATTICE_SHAPES = {4: (2, 2), 6: (3, 2), 9: (3, 3), 10: (5, 2), 12: (4, 3), 14: (7, 2)}


@dataclass(frozen=True)
class PauliFactor:
    site: int
    axis: str

    def __post_init__(self):
        if self.axis not in AXES:
            raise InvalidInput(f"Pauli axis must be one of X, Y, Z; got {self.axis!r}")
        if int(self.site) < 0:
            raise InvalidInput(f"site must be nonnegative, got {self.site}")


class DenseHermitian:
    """Immutable dense Hermitian matrix with provenance metadata."""

    __slots__ = ("_entries", "provenance")

    def __init__(self, entries, provenance: dict | None = None, *, symmetrize: bool = True):
        a = np.array(entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInput(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] < 1:
            raise InvalidInput("empty matrix")
        if symmetrize:
            a = 0.5 * (a + a.conj().T)
            # exact Hermiticity: mirror the upper triangle
            iu = np.triu_indices(a.shape[0], 1)
            a[(iu[1], iu[0])] = a[iu].conj()
            a[np.diag_indices(a.shape[0])] = a.diagonal().real
        a.setflags(write=False)
        self._entries = a
        self.provenance = dict(provenance or {})

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.any(self._entries.imag)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self._entries, dtype=dtype)

    def scaled(self, factor: float, **extra) -> "DenseHermitian":
        prov = dict(self.provenance)
        prov.update(extra)
        return DenseHermitian(self._entries * float(factor), prov, symmetrize=False)

    def __repr__(self):
        return f"DenseHermitian(dim={self.dim}, provenance={self.provenance})"


@dataclass(frozen=True)
class EnsembleSpec:
    """Description of one Hamiltonian ensemble or fixed model.

    ``torsion_scaling`` only matters for the kicked top: ``"2j+1"`` divides the
    torsion matrix by the dimension (the usual convention that keeps the
    classical limit fixed), ``"none"`` uses it literally.
    """

    variant: str
    n: int | None = None
    D: int | None = None
    rows: int | None = None
    cols: int | None = None
    j: float | None = None
    sigma2: float = 0.5
    alpha: tuple[float, float, float] = (1.1, 1.0, 1.0)
    tau: tuple[float, float, float] = (10.0, 0.0, 1.0)
    normalize: bool = True
    torsion_scaling: str = "2j+1"
    master_seed: int = 0

    def __post_init__(self):
        v = self.variant
        if v not in VARIANTS:
            raise InvalidInput(f"unknown variant {v!r}; expected one of {VARIANTS}")
        object.__setattr__(self, "alpha", tuple(float(a) for a in self.alpha))
        object.__setattr__(self, "tau", tuple(float(a) for a in self.tau))
        if len(self.alpha) != 3 or len(self.tau) != 3:
            raise InvalidInput("alpha and tau need three entries")
        if v == "GUE":
            if self.D is None or self.D < 2:
                raise InvalidInput("GUE needs D >= 2")
            if not self.sigma2 > 0:
                raise InvalidInput("sigma2 must be positive")
        elif v == "KickedTop":
            if self.j is None:
                raise InvalidInput("KickedTop needs j")
            two_j = 2 * float(self.j)
            if abs(two_j - round(two_j)) > 1e-12 or round(two_j) < 1:
                raise InvalidInput(f"j must be a positive integer or half-integer, got {self.j}")
            if self.torsion_scaling not in ("2j+1", "none"):
                raise InvalidInput("torsion_scaling must be '2j+1' or 'none'")
        else:
            if v == "RLHLattice" and self.n is None and self.rows and self.cols:
                object.__setattr__(self, "n", int(self.rows) * int(self.cols))
            if self.n is None or self.n < 2:
                raise InvalidInput(f"{v} needs n >= 2")
            if v == "HeisenbergTwoField" and self.n < 3:
                raise InvalidInput("HeisenbergTwoField needs n >= 3")
            if v == "RLHLattice":
                if self.rows is None and self.cols is None:
                    r, c = lattice_shape(self.n)
                    object.__setattr__(self, "rows", r)
                    object.__setattr__(self, "cols", c)
                if self.rows is None or self.cols is None or self.rows * self.cols != self.n:
                    raise InvalidInput(f"lattice rows*cols must equal n={self.n}")

    @property
    def dim(self) -> int:
        if self.variant == "GUE":
            return int(self.D)
        if self.variant == "KickedTop":
            return int(round(2 * self.j)) + 1
        return 2 ** int(self.n)

    def to_dict(self) -> dict:
        d = {"variant": self.variant}
        if self.variant == "GUE":
            d.update(D=self.D, sigma2=self.sigma2)
        elif self.variant == "KickedTop":
            d.update(j=self.j, alpha=list(self.alpha), tau=list(self.tau), torsion_scaling=self.torsion_scaling)
        else:
            d["n"] = self.n
            if self.variant == "RLHLattice":
                d.update(rows=self.rows, cols=self.cols)
        d["normalize"] = self.normalize
        d["master_seed"] = self.master_seed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleSpec":
        allowed = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - allowed
        if unknown:
            raise InvalidInput(f"unknown ensemble keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "EnsembleSpec":
        return cls.from_dict(json.loads(text))


def lattice_shape(n: int) -> tuple[int, int]:
    if n in DEFAULT_LATTICE_SHAPES:
        return DEFAULT_LATTICE_SHAPES[n]
    r = int(np.floor(np.sqrt(n)))
    while n % r:
        r -= 1
    return (n // r, r)


def complete_edges(n: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n), 2))


def chain_edges(n: int) -> list[tuple[int, int]]:
    """Periodic ring, |i-j| = 1 or n-1, as sorted undirected pairs."""
    return sorted({tuple(sorted((i, (i + 1) % n))) for i in range(n) if i != (i + 1) % n})


def lattice_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    """4-neighbour torus; site (a, b) has index a*cols + b."""
    edges = set()
    for a in range(rows):
        for b in range(cols):
            i = a * cols + b
            for k in (((a + 1) % rows) * cols + b, a * cols + (b + 1) % cols):
                if k != i:
                    edges.add(tuple(sorted((i, k))))
    return sorted(edges)


def _check_qubits(n: int, max_qubits: int):
    if n < 1:
        raise InvalidInput("need at least one qubit")
    if n > max_qubits:
        raise CapacityError(f"n={n} exceeds the {max_qubits}-qubit dense-matrix guard")


def _pauli_action(n: int, factors) -> tuple[int, np.ndarray]:
    """Return (flip mask, phase vector) with P|s> = phase[s] |s ^ mask>."""
    idx = np.arange(2**n)
    mask = 0
    phase = np.ones(2**n, dtype=complex)
    for site, axis in factors:
        shift = n - 1 - site
        bit = (idx >> shift) & 1
        sign = 1 - 2 * bit
        if axis in "XY":
            mask |= 1 << shift
        if axis == "Z":
            phase *= sign
        elif axis == "Y":
            phase *= 1j * sign
    return mask, phase


def _normalize_factors(n, factors) -> list[tuple[int, str]]:
    out = []
    for f in factors:
        if not isinstance(f, PauliFactor):
            f = PauliFactor(*f)
        if f.site >= n:
            raise InvalidInput(f"site {f.site} out of range for n={n}")
        out.append((int(f.site), f.axis))
    sites = [s for s, _ in out]
    if len(set(sites)) != len(sites):
        raise InvalidInput(f"duplicate sites in Pauli string: {sites}")
    return out


def build_pauli_string(n: int, factors: Sequence, *, max_qubits: int = MAX_QUBITS) -> DenseHermitian:
    _check_qubits(n, max_qubits)
    fs = _normalize_factors(n, factors)
    D = 2**n
    idx = np.arange(D)
    mask, phase = _pauli_action(n, fs)
    H = np.zeros((D, D), dtype=complex)
    H[idx ^ mask, idx] = phase
    label = "".join(dict(fs).get(i, "I") for i in range(n))
    return DenseHermitian(H, {"ensemble": "PauliString", "label": label}, symmetrize=False)


def _accumulate(n: int, terms, coeffs) -> np.ndarray:
    D = 2**n
    idx = np.arange(D)
    H = np.zeros((D, D), dtype=complex)
    for c, fs in zip(coeffs, terms):
        mask, phase = _pauli_action(n, fs)
        H[idx ^ mask, idx] += c * phase
    return H


def spectral_norm(H) -> float:
    a = np.asarray(H)
    real = not np.any(a.imag)
    w = scipy.linalg.eigvalsh(a.real if real else a, driver="evr")
    return float(max(abs(w[0]), abs(w[-1])))


def _maybe_normalize(H: np.ndarray, normalize: bool):
    if not normalize:
        return H, 1.0
    s = spectral_norm(H)
    if s == 0:
        raise InvalidInput("cannot normalize the zero Hamiltonian")
    return H / s, s


def sample_gue(D: int, sigma2: float = 0.5, seed=None) -> DenseHermitian:
    if D < 2:
        raise InvalidInput("GUE needs D >= 2")
    if not sigma2 > 0:
        raise InvalidInput("sigma2 must be positive")
    sp = as_seed_path(seed)
    rng = sp.generator()
    diag = rng.standard_normal(D) * np.sqrt(sigma2)
    iu = np.triu_indices(D, 1)
    m = len(iu[0])
    off = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) * np.sqrt(sigma2 / 2)
    H = np.zeros((D, D), dtype=complex)
    H[iu] = off
    H[(iu[1], iu[0])] = off.conj()
    H[np.diag_indices(D)] = diag
    prov = {"ensemble": "GUE", "D": D, "sigma2": sigma2, "seed": _seed_repr(sp)}
    return DenseHermitian(H, prov, symmetrize=False)


def _seed_repr(sp: SeedPath) -> list[int]:
    return [int(sp.master_seed), int(sp.stream_index), *sp.path]


def rlh_terms(spec: EnsembleSpec) -> list[tuple[tuple[int, str], ...]]:
    """Pauli terms of an RLH ensemble in coefficient-consumption order."""
    n = spec.n
    if spec.variant == "RLHComplete":
        edges = complete_edges(n)
    elif spec.variant == "RLHChain":
        edges = chain_edges(n)
    elif spec.variant == "RLHLattice":
        if spec.rows * spec.cols != n:
            raise InvalidInput("lattice rows*cols must equal n")
        edges = lattice_edges(spec.rows, spec.cols)
    else:
        raise InvalidInput(f"{spec.variant} is not an RLH variant")
    terms = [((i, p),) for i in range(n) for p in AXES]
    terms += [((i, p), (k, q)) for (i, k) in edges for p in AXES for q in AXES]
    return terms


def sample_rlh(spec: EnsembleSpec, seed=None, *, normalize: bool | None = None,
               max_qubits: int = MAX_QUBITS) -> DenseHermitian:
    if spec.variant not in RLH_VARIANTS:
        raise InvalidInput(f"{spec.variant} is not an RLH variant")
    _check_qubits(spec.n, max_qubits)
    sp = as_seed_path(seed)
    terms = rlh_terms(spec)
    coeffs = sp.generator().standard_normal(len(terms))
    H = _accumulate(spec.n, terms, coeffs)
    norm_flag = spec.normalize if normalize is None else normalize
    H, s = _maybe_normalize(H, norm_flag)
    prov = spec.to_dict()
    prov.update(ensemble=spec.variant, seed=_seed_repr(sp), n_coefficients=len(terms),
                normalized=bool(norm_flag), norm=s)
    return DenseHermitian(H, prov)


def build_heisenberg_two_field(n: int, normalize: bool = True, *, max_qubits: int = MAX_QUBITS) -> DenseHermitian:
    """Z field on the first floor(n/2) sites, X field on the rest, periodic XXX ring."""
    if n < 3:
        raise InvalidInput("HeisenbergTwoField needs n >= 3")
    _check_qubits(n, max_qubits)
    half = n // 2
    terms = [((i, "Z" if i < half else "X"),) for i in range(n)]
    for i in range(n):
        k = (i + 1) % n
        terms += [((i, p), (k, p)) for p in AXES]
    H = _accumulate(n, terms, np.ones(len(terms))).real.astype(complex)
    H, s = _maybe_normalize(H, normalize)
    prov = {"ensemble": "HeisenbergTwoField", "n": n, "normalized": bool(normalize), "norm": s}
    return DenseHermitian(H, prov)


def angular_momentum_ops(j: float) -> tuple[DenseHermitian, DenseHermitian, DenseHermitian]:
    """Spin-j matrices in the |j, m> basis with m = j, j-1, ..., -j."""
    two_j = 2 * float(j)
    if abs(two_j - round(two_j)) > 1e-12 or round(two_j) < 1:
        raise InvalidInput(f"j must be a positive integer or half-integer, got {j}")
    D = int(round(two_j)) + 1
    j = (D - 1) / 2
    m = j - np.arange(D)
    # <m+1|J+|m> sits one row above the diagonal (index of m+1 is smaller)
    jp = np.zeros((D, D))
    up = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    jp[np.arange(D - 1), np.arange(1, D)] = up
    jm = jp.T
    prov = {"ensemble": "AngularMomentum", "j": j}
    Jx = DenseHermitian(0.5 * (jp + jm), prov)
    Jy = DenseHermitian(-0.5j * (jp - jm), prov)
    Jz = DenseHermitian(np.diag(m), prov)
    return Jx, Jy, Jz


def build_kicked_top_generators(spec: EnsembleSpec) -> tuple[DenseHermitian, DenseHermitian]:
    if spec.variant != "KickedTop":
        raise InvalidInput("spec must be a KickedTop")
    Jx, Jy, Jz = angular_momentum_ops(spec.j)
    J = [Jx.entries, Jy.entries, Jz.entries]
    scale = 1.0 / spec.dim if spec.torsion_scaling == "2j+1" else 1.0
    torsion = sum(t * (a @ a) for t, a in zip(spec.tau, J)) * scale
    kick = sum(al * a for al, a in zip(spec.alpha, J))
    prov = spec.to_dict()
    prov["ensemble"] = "KickedTop"
    return DenseHermitian(torsion, dict(prov, part="torsion")), DenseHermitian(kick, dict(prov, part="kick"))


def sample_hamiltonian(spec: EnsembleSpec, seed=None, *, normalize: bool | None = None) -> DenseHermitian:
    """Dispatch on ``spec.variant`` (the kicked top has no single Hamiltonian)."""
    norm_flag = spec.normalize if normalize is None else normalize
    if spec.variant == "GUE":
        H = sample_gue(spec.D, spec.sigma2, seed)
        if norm_flag:
            H = H.scaled(1.0 / spectral_norm(H.entries), normalized=True)
        return H
    if spec.variant in RLH_VARIANTS:
        return sample_rlh(spec, seed, normalize=norm_flag)
    if spec.variant == "HeisenbergTwoField":
        return build_heisenberg_two_field(spec.n, norm_flag)
    raise InvalidInput("KickedTop is a Floquet model; use build_kicked_top_generators")
