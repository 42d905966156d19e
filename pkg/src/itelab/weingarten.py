"""Permutation / Weingarten calculus for Haar moments of the basis change.

Permutations of {1..k} are written in one-line notation: ``Permutation((2, 1, 3))``
sends 1 -> 2, 2 -> 1, 3 -> 3.  Tensor vectors use factor order
``(slot 1, ..., slot 2k)`` flattened row-major with each slot of size D.

Form-factor convention: the public closed forms accept ``mu = Tr F(t)`` with
``F(t) = diag(exp(-i t E))``.  Every closed form for E[Pr] and E[Pr^2] is
invariant under ``mu -> conj(mu)``.  The inner-product table against
``R_4(t)``, whose phases are ``exp(+i t E)``, is written for
``mu_+(t) = sum exp(+i t E) = conj(Tr F(t))``; see
:func:`inner_product_table`.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse

from .errors import CapacityError, InvalidInput, NumericFailure, TableMismatch
from .parallel import pmap
from .rng import SeedPath, as_seed_path

__all__ = [
    "Permutation",
    "GramInverse",
    "FormFactorValue",
    "all_permutations",
    "cycle_count",
    "gram_matrix",
    "invert_gram",
    "phi_vector",
    "r_vector",
    "l4_vector",
    "l4_overlap",
    "inner_product_table",
    "explicit_inner_products",
    "verify_inner_product_table",
    "form_factor",
    "haar_sample_unitary",
    "haar_abs4_weingarten",
    "closed_form_mean_prob",
    "closed_form_second_moment",
    "closed_form_var_prob",
    "closed_form_var_prob_exact",
    "weingarten_second_moment",
    "mc_prob_moments",
    "mc_fourth_moment",
    "VECTOR_GUARD",
]

VECTOR_GUARD = 2**24
GRAM_RESIDUAL_TOL = 1e-10
TABLE_TOL = 1e-9


@dataclass(frozen=True)
class Permutation:
    mapping: tuple[int, ...]

    def __post_init__(self):
        m = tuple(int(v) for v in self.mapping)
        if sorted(m) != list(range(1, len(m) + 1)):
            raise InvalidInput(f"{m} is not a permutation of 1..{len(m)}")
        object.__setattr__(self, "mapping", m)

    @property
    def k(self) -> int:
        return len(self.mapping)

    @classmethod
    def identity(cls, k: int) -> "Permutation":
        return cls(tuple(range(1, k + 1)))

    def __call__(self, i: int) -> int:
        return self.mapping[i - 1]

    def inverse(self) -> "Permutation":
        inv = [0] * self.k
        for i, v in enumerate(self.mapping, start=1):
            inv[v - 1] = i
        return Permutation(tuple(inv))

    def __matmul__(self, other: "Permutation") -> "Permutation":
        """Composition (self o other)(i) = self(other(i))."""
        if other.k != self.k:
            raise InvalidInput("cannot compose permutations of different order")
        return Permutation(tuple(self.mapping[o - 1] for o in other.mapping))

    def zero_based(self) -> tuple[int, ...]:
        return tuple(v - 1 for v in self.mapping)

    def __str__(self):
        return "(" + ",".join(map(str, self.mapping)) + ")"


@lru_cache(maxsize=None)
def all_permutations(k: int) -> tuple[Permutation, ...]:
    return tuple(Permutation(tuple(p)) for p in itertools.permutations(range(1, k + 1)))


def cycle_count(p: Permutation) -> int:
    seen = [False] * p.k
    count = 0
    for start in range(p.k):
        if seen[start]:
            continue
        count += 1
        i = start
        while not seen[i]:
            seen[i] = True
            i = p.mapping[i] - 1
    return count


def gram_matrix(k: int, D: int) -> np.ndarray:
    """M[pi, sigma] = D ** cycles(pi^-1 sigma), rows in ``all_permutations(k)`` order."""
    if k < 1:
        raise InvalidInput("k must be positive")
    if k > 6:
        raise CapacityError(f"explicit Gram matrix for k={k} is too large; use invert_gram(k=...)")
    perms = all_permutations(k)
    exps = np.array([[cycle_count(p.inverse() @ s) for s in perms] for p in perms])
    return float(D) ** exps


@dataclass(frozen=True)
class GramInverse:
    matrix: object  # ndarray, or a sparse matrix when approximate
    k: int
    D: int
    approximate: bool = False
    residual: float = 0.0


def invert_gram(M: np.ndarray | None = None, *, k: int | None = None, D: int | None = None) -> GramInverse:
    """Inverse of the Gram matrix.

    Pass either an explicit matrix ``M`` (k <= 6) or ``k=8, D=...`` for the
    leading-order diagonal ``I / D**8`` approximation, which is flagged.
    """
    if M is None:
        if k is None or D is None:
            raise InvalidInput("give a Gram matrix or (k, D)")
        if k == 8:
            n = math.factorial(8)
            inv = scipy.sparse.identity(n, format="csr") / float(D) ** 8
            return GramInverse(inv, 8, D, approximate=True, residual=float("nan"))
        M = gram_matrix(k, D)
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    kk = next(i for i in range(1, 9) if math.factorial(i) == n)
    Dv = M[0, 0] ** (1.0 / kk)
    # scale to unit diagonal before inverting
    scale = M[0, 0]
    try:
        inv = np.linalg.inv(M / scale) / scale
    except np.linalg.LinAlgError as exc:
        raise NumericFailure("Gram matrix is singular (is D < k?)", residual=float("inf")) from exc
    resid = float(np.max(np.abs(M @ inv - np.eye(n))))
    if not resid < GRAM_RESIDUAL_TOL:
        raise NumericFailure(f"Gram inverse residual {resid:.2e} (is D < k?)", residual=resid)
    return GramInverse(inv, kk, int(round(Dv)), residual=resid)


def _guard(D: int, k: int):
    if D ** (2 * k) > VECTOR_GUARD:
        raise CapacityError(f"D^(2k) = {D}^{2 * k} exceeds the explicit-vector guard {VECTOR_GUARD}")


def phi_vector(p: Permutation, D: int) -> np.ndarray:
    """|Phi_pi> = sum_a |a_{pi^-1(1)} .. a_{pi^-1(k)}, a_1 .. a_k>."""
    k = p.k
    _guard(D, k)
    pinv = p.inverse().zero_based()
    grids = np.indices((D,) * k).reshape(k, -1)
    first = [grids[pinv[m]] for m in range(k)]
    flat = np.ravel_multi_index(tuple(first) + tuple(grids), (D,) * (2 * k))
    v = np.zeros(D ** (2 * k), dtype=complex)
    np.add.at(v, flat, 1.0)
    return v


def r_vector(energies, t: float, k: int = 4) -> np.ndarray:
    """|R_2> = sum e^{it(E_b - E_b')} |b,b',b,b'>; |R_4> likewise with (b,b',d,d') repeated."""
    E = np.asarray(energies, dtype=float)
    D = len(E)
    if k not in (2, 4):
        raise InvalidInput("r_vector supports k = 2 or 4")
    _guard(D, k)
    ph = np.exp(1j * t * E)
    amp = np.ones((D,) * k, dtype=complex)
    for m in range(k):
        shape = [1] * k
        shape[m] = D
        factor = ph if m % 2 == 0 else ph.conj()
        amp = amp * factor.reshape(shape)
    grids = np.indices((D,) * k).reshape(k, -1)
    flat = np.ravel_multi_index(tuple(grids) + tuple(grids), (D,) * (2 * k))
    v = np.zeros(D ** (2 * k), dtype=complex)
    v[flat] = amp.ravel()
    return v


_L4_PATTERN = ("k", "x", "k", "x", "x", "k", "x", "k")


def l4_vector(k: int, x: int, D: int) -> np.ndarray:
    _guard(D, 4)
    v = np.zeros((D,) * 8)
    v[tuple(k if s == "k" else x for s in _L4_PATTERN)] = 1.0
    return v.ravel()


def l4_overlap(p: Permutation, x_equals_k: bool) -> int:
    """<L_4|Phi_pi> without building vectors: 1 when the index pattern is consistent."""
    if p.k != 4:
        raise InvalidInput("L_4 overlaps are defined for k = 4")
    if x_equals_k:
        return 1
    labels = _L4_PATTERN
    a = labels[4:]
    pinv = p.inverse().zero_based()
    return int(all(a[pinv[m]] == labels[m] for m in range(4)))


# closed forms of <Phi_sigma|R_4(t)>, with m1 = mu_+(t), m2 = mu_+(2t)
_TABLE_GROUPS = {
    "abs4": [(1, 2, 3, 4)],
    "D_abs2": [(1, 2, 4, 3), (1, 3, 2, 4), (2, 1, 3, 4), (4, 2, 3, 1)],
    "abs2": [(1, 3, 4, 2), (1, 4, 2, 3), (2, 3, 1, 4), (2, 4, 3, 1),
             (3, 1, 2, 4), (3, 2, 4, 1), (4, 1, 3, 2), (4, 2, 1, 3)],
    "abs2_2t": [(3, 4, 1, 2)],
    "m1sq_conj_m2": [(1, 4, 3, 2)],
    "m2_conj_m1sq": [(3, 2, 1, 4)],
    "D2": [(2, 1, 4, 3), (4, 3, 2, 1)],
    "D": [(2, 3, 4, 1), (3, 4, 2, 1), (2, 4, 1, 3), (3, 1, 4, 2), (4, 1, 2, 3), (4, 3, 1, 2)],
}


def inner_product_table(m1: complex, m2: complex, D: int) -> dict[tuple[int, ...], complex]:
    """Closed forms of all 24 overlaps, keyed by one-line permutation."""
    a1 = abs(m1) ** 2
    vals = {
        "abs4": a1**2,
        "D_abs2": D * a1,
        "abs2": a1,
        "abs2_2t": abs(m2) ** 2,
        "m1sq_conj_m2": m1**2 * np.conj(m2),
        "m2_conj_m1sq": m2 * np.conj(m1) ** 2,
        "D2": float(D) ** 2,
        "D": float(D),
    }
    return {perm: complex(vals[g]) for g, perms in _TABLE_GROUPS.items() for perm in perms}


@dataclass(frozen=True)
class FormFactorValue:
    mu_t: complex
    mu_2t: complex
    D: int


def form_factor(energies, t: float) -> FormFactorValue:
    """mu(t) = Tr F(t) = sum_a exp(-i t E_a), and mu(2t)."""
    E = np.asarray(energies, dtype=float)
    return FormFactorValue(complex(np.exp(-1j * t * E).sum()), complex(np.exp(-2j * t * E).sum()), len(E))


def explicit_inner_products(energies, t: float) -> dict[tuple[int, ...], complex]:
    E = np.asarray(energies, dtype=float)
    D = len(E)
    R = r_vector(E, t, 4)
    return {p.mapping: complex(np.vdot(phi_vector(p, D), R)) for p in all_permutations(4)}


def verify_inner_product_table(energies, t: float, D: int | None = None, *, raise_on_mismatch: bool = True,
                               tol: float = TABLE_TOL) -> dict:
    """Compare the 24 closed forms against explicit contraction.

    The closed forms are evaluated with ``mu_+ = conj(Tr F)``, the phase
    convention of ``R_4``.  The report also counts mismatches obtained by
    plugging ``Tr F`` in directly.
    """
    E = np.asarray(energies, dtype=float)
    D = len(E) if D is None else D
    if D != len(E):
        raise InvalidInput("D must equal the number of energies")
    if D > 8:
        raise CapacityError("table verification is limited to D <= 8")
    explicit = explicit_inner_products(E, t)
    ff = form_factor(E, t)
    table = inner_product_table(np.conj(ff.mu_t), np.conj(ff.mu_2t), D)
    literal = inner_product_table(ff.mu_t, ff.mu_2t, D)
    rows = []
    for perm, val in explicit.items():
        dev = abs(val - table[perm])
        rows.append({"permutation": list(perm), "explicit": [val.real, val.imag],
                     "closed_form": [table[perm].real, table[perm].imag], "deviation": dev,
                     "pass": dev <= tol})
    literal_bad = sorted(list(p) for p, v in explicit.items() if abs(v - literal[p]) > tol)
    report = {
        "check": "inner_product_table",
        "D": D, "t": t,
        "n_rows": len(rows),
        "n_pass": sum(r["pass"] for r in rows),
        "max_deviation": max(r["deviation"] for r in rows),
        "tolerance": tol,
        "pass": all(r["pass"] for r in rows),
        "rows": rows,
        "mismatches_with_trF_convention": literal_bad,
    }
    if raise_on_mismatch and not report["pass"]:
        raise TableMismatch(f"{len(rows) - report['n_pass']} table rows deviate", report)
    return report


def haar_sample_unitary(D: int, seed=None, n_columns: int | None = None, batch: int | None = None) -> np.ndarray:
    """Haar-random unitary (or its first ``n_columns`` columns) via phase-fixed QR.

    With ``batch`` the result is stacked along a leading axis.
    """
    if D < 1:
        raise InvalidInput("D must be positive")
    m = D if n_columns is None else int(n_columns)
    if not 1 <= m <= D:
        raise InvalidInput("n_columns must be in [1, D]")
    rng = as_seed_path(seed).generator()
    shape = (D, m) if batch is None else (batch, D, m)
    Z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    return Q * (d / np.abs(d))[..., None, :]


def haar_abs4_weingarten(D: int) -> float:
    """E|U_00|^4 from the k=2 Weingarten sum (every delta equals 1)."""
    return float(invert_gram(gram_matrix(2, D)).matrix.sum())


def closed_form_mean_prob(D: int, x_equals_k: bool, mu_t: complex) -> float:
    d = float(bool(x_equals_k))
    a1 = abs(mu_t) ** 2
    return (D - d + a1 * (d - 1.0 / D)) / (D**2 - 1.0)


def closed_form_second_moment(D: int, x_equals_k: bool, mu_t: complex, mu_2t: complex) -> float:
    """Exact E_C[Pr(k)^2] over Haar C for a fixed spectrum."""
    d = float(bool(x_equals_k))
    D = float(D)
    a1 = abs(mu_t) ** 2
    a2 = abs(mu_2t) ** 2
    c = 2.0 * np.real(np.conj(mu_2t) * mu_t**2)
    alpha = D**2 * (D - 1) * (D + 1) * (D + 2) * (D + 3)
    num = (
        a1**2 * ((D * D - D - 2) * d + 2)
        + a1 * (-4 * D * D - 12 * D - 8 + (4 * D**3 + 8 * D * D + 4 * D + 8) * d)
        + (D * D - D - 2) * d * (a2 + c)
        + 2 * D**4 + 8 * D**3 + 6 * D * D - (4 * D**3 + 12 * D * D) * d
        + 2 * a2 + 2 * c
    )
    return float(num / alpha)


def closed_form_var_prob_exact(D: int, x_equals_k: bool, mu_t: complex, mu_2t: complex) -> float:
    m = closed_form_mean_prob(D, x_equals_k, mu_t)
    return closed_form_second_moment(D, x_equals_k, mu_t, mu_2t) - m * m


def closed_form_var_prob(D: int, x_equals_k: bool, mu_t: complex, mu_2t: complex) -> float:
    """Leading-order variance, accurate up to O(D^-5)."""
    d = float(bool(x_equals_k))
    a1 = abs(mu_t) ** 2
    cross = np.real(mu_t**2 * np.conj(mu_2t))
    br = (D * D - 2 * D + 4 + (7 - 2 * D) * d + a1 * (2 * D * d - 10 * d - 2)
          + d * abs(mu_2t) ** 2 + 2 * d * cross)
    return float(br / D**4)


def weingarten_second_moment(D: int, x_equals_k: bool, mu_t: complex, mu_2t: complex) -> float:
    """E_C[Pr^2] = sum_{pi,sigma} <L_4|Phi_pi> Wg[pi,sigma] <Phi_sigma|R_4>."""
    perms = all_permutations(4)
    inv = invert_gram(gram_matrix(4, D)).matrix
    m1, m2 = np.conj(mu_t), np.conj(mu_2t)
    table = inner_product_table(m1, m2, D)
    left = np.array([l4_overlap(p, x_equals_k) for p in perms], dtype=float)
    right = np.array([table[p.mapping] for p in perms])
    return float(np.real(left @ inv @ right))


def _pr_batch(E, t, D, x_equals_k, seed: SeedPath, n: int) -> np.ndarray:
    cols = 1 if x_equals_k else 2
    Q = haar_sample_unitary(D, seed, n_columns=cols, batch=n)
    u = Q[:, :, 0]
    v = u if x_equals_k else Q[:, :, 1]
    amp = np.sum(u * np.exp(-1j * t * E) * v.conj(), axis=1)
    return np.abs(amp) ** 2


def _mc_samples(energies, t, x_equals_k, n_samples, seed, block, threads):
    E = np.asarray(energies, dtype=float)
    D = len(E)
    sp = as_seed_path(seed)
    sizes = [block] * (n_samples // block)
    if n_samples % block:
        sizes.append(n_samples % block)
    parts = pmap(lambda ib: _pr_batch(E, t, D, x_equals_k, sp.child(ib[0]), ib[1]),
                 list(enumerate(sizes)), threads=threads)
    return np.concatenate(parts)


def mc_prob_moments(energies, t: float, x_equals_k: bool, n_samples: int = 10_000, seed=None,
                    block: int = 1000, threads: int | None = None) -> dict:
    """Haar Monte Carlo of E_C[Pr] and Var_C[Pr] with standard errors."""
    p = _mc_samples(energies, t, x_equals_k, n_samples, seed, block, threads)
    n = len(p)
    mean = p.mean()
    var = p.var(ddof=1)
    m4 = np.mean((p - mean) ** 4)
    se_var = np.sqrt(max(m4 / n - var**2 * (n - 3) / (n * (n - 1)), 0.0))
    return {"mean": float(mean), "stderr_mean": float(np.sqrt(var / n)), "var": float(var),
            "stderr_var": float(se_var), "second_moment": float(np.mean(p**2)),
            "stderr_second_moment": float(np.std(p**2, ddof=1) / np.sqrt(n)), "n_samples": n}


def mc_fourth_moment(energies, t: float, n_samples: int = 10_000, seed=None, x_equals_k: bool = False,
                     block: int = 1000, threads: int | None = None) -> dict:
    """Haar Monte Carlo of E_C[Pr(k)^4] for a fixed spectrum."""
    p4 = _mc_samples(energies, t, x_equals_k, n_samples, seed, block, threads) ** 4
    return {"mean": float(p4.mean()), "stderr": float(p4.std(ddof=1) / np.sqrt(len(p4))), "n_samples": len(p4)}
