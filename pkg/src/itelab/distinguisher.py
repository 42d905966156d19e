"""Sample-based discrimination of near-uniform outcome distributions.

Two hypotheses are compared: ``m1`` (samples from the uniform distribution
over M outcomes) and ``m2`` (samples from a distribution drawn from a
permutation-invariant family).  Without knowledge of which labels are heavy,
the only usable evidence is the collision structure of the sample, which is
what :func:`classify_collision` uses.  :func:`oracle_llr` is the full
likelihood ratio for a known ``m2`` and serves as a contrast.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .dynamics import OutcomeDistribution
from .errors import InvalidInput
from .parallel import pmap
from .rng import SeedPath, as_seed_path

__all__ = [
    "SampleSet",
    "CollisionSummary",
    "Posterior",
    "sample_from",
    "canonical_relabel",
    "collision_summary",
    "prefix_collision_pairs",
    "p_no_collision_uniform",
    "posterior_after_no_collision",
    "collision_llr",
    "oracle_llr",
    "DirichletSource",
    "FixedSource",
    "PoolSource",
    "calibrate_q2",
    "AccuracyTable",
    "advantage_experiment",
    "oracle_classifier_accuracy",
    "collapse_spread",
]


@dataclass(frozen=True)
class SampleSet:
    M: int
    labels: tuple[int, ...]

    def __post_init__(self):
        labels = tuple(int(v) for v in self.labels)
        if self.M < 1:
            raise InvalidInput("M must be positive")
        if any(v < 0 or v >= self.M for v in labels):
            raise InvalidInput(f"labels must lie in [0, {self.M})")
        object.__setattr__(self, "labels", labels)

    @property
    def N(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class CollisionSummary:
    N: int
    n_distinct: int
    has_collision: bool
    histogram: dict  # multiplicity -> number of labels seen that often
    n_pairs: int  # colliding pairs, sum over labels of C(count, 2)


@dataclass(frozen=True)
class Posterior:
    p_m1: float
    interval: tuple[float, float] = field(default=(0.0, 1.0))

    def __post_init__(self):
        if not 0.0 <= self.p_m1 <= 1.0:
            raise InvalidInput("posterior probability outside [0, 1]")

    @property
    def p_m2(self) -> float:
        return 1.0 - self.p_m1


def _probs(dist) -> np.ndarray:
    return dist.probs if isinstance(dist, OutcomeDistribution) else np.asarray(dist, dtype=float)


def _draw(p: np.ndarray, N: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(p)
    u = rng.random(N) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(p) - 1)


def sample_from(dist, N: int, seed=None) -> SampleSet:
    """N i.i.d. labels by inverse-CDF lookup."""
    if N < 1:
        raise InvalidInput("N must be at least 1")
    p = _probs(dist)
    rng = seed if isinstance(seed, np.random.Generator) else as_seed_path(seed).generator()
    return SampleSet(len(p), tuple(_draw(p, N, rng)))


def canonical_relabel(s: SampleSet) -> SampleSet:
    """Rename labels 0, 1, 2, ... in order of first appearance."""
    first: dict[int, int] = {}
    out = [first.setdefault(v, len(first)) for v in s.labels]
    return SampleSet(s.M, tuple(out))


def collision_summary(s: SampleSet) -> CollisionSummary:
    counts = Counter(s.labels)
    hist = Counter(counts.values())
    pairs = sum(c * (c - 1) // 2 for c in counts.values())
    return CollisionSummary(s.N, len(counts), len(counts) < s.N, dict(sorted(hist.items())), pairs)


def prefix_collision_pairs(labels) -> np.ndarray:
    """out[i] = colliding pairs among the first i+1 labels."""
    s = np.asarray(labels)
    order = np.argsort(s, kind="stable")
    ss = s[order]
    starts = np.r_[0, np.nonzero(np.diff(ss))[0] + 1]
    group_start = np.repeat(starts, np.diff(np.r_[starts, len(ss)]))
    earlier = np.empty(len(s), dtype=np.int64)
    earlier[order] = np.arange(len(s)) - group_start
    return np.cumsum(earlier)


def p_no_collision_uniform(M: int, N: int) -> float:
    """Probability that N uniform draws over M outcomes are all distinct."""
    if N < 0 or M < 1:
        raise InvalidInput("need M >= 1 and N >= 0")
    if N > M:
        return 0.0
    j = np.arange(N, dtype=float)
    return float(np.exp(np.sum(np.log1p(-j / M))))


def posterior_after_no_collision(M: int, N: int, prior_m1: float, max_prob_m2: float) -> Posterior:
    """Pr(m1 | all N samples distinct).

    Pr(distinct | m2) is only known to lie between prod_j (1 - j p_max) and
    the uniform value (no distribution beats uniform at avoiding
    collisions).  The interval of posteriors is returned with its midpoint.
    """
    if not 0.0 <= prior_m1 <= 1.0:
        raise InvalidInput("prior must lie in [0, 1]")
    if not 0.0 < max_prob_m2 <= 1.0:
        raise InvalidInput("max_prob_m2 must lie in (0, 1]")
    l1 = p_no_collision_uniform(M, N)
    j = np.arange(1, max(N, 1), dtype=float)
    l2_lo = float(np.prod(np.clip(1.0 - j * max_prob_m2, 0.0, None)))
    l2_lo = min(l2_lo, l1)

    def post(l2):
        den = l1 * prior_m1 + l2 * (1 - prior_m1)
        return prior_m1 if den == 0 else l1 * prior_m1 / den

    lo, hi = post(l1), post(l2_lo)
    return Posterior(0.5 * (lo + hi), (lo, hi))


def collision_llr(n_pairs, N, M: int, q2: float):
    """Log-likelihood ratio (m2 over m1) of a Poisson model for colliding pairs.

    Each of the N(N-1)/2 pairs collides with probability q = sum_k p_k^2,
    which is 1/M under m1 and ``q2`` under m2.
    """
    q1 = 1.0 / M
    N = np.asarray(N, dtype=float)
    P = N * (N - 1) / 2
    if q2 <= 0:
        raise InvalidInput("q2 must be positive")
    return -P * (q2 - q1) + np.asarray(n_pairs, dtype=float) * np.log(q2 / q1)


def oracle_llr(labels, p2) -> float:
    """Full log-likelihood ratio sum_i ln(M p2[k_i]) for a known m2."""
    p = _probs(p2)
    M = len(p)
    with np.errstate(divide="ignore"):
        return float(np.sum(np.log(M * p[np.asarray(labels)])))


Source = Callable[[np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class DirichletSource:
    """Symmetric Dirichlet draws with expected outcome variance c / M^2."""

    M: int
    c: float

    def __post_init__(self):
        if not 0 < self.c < self.M - 1:
            raise InvalidInput("need 0 < c < M - 1")

    @property
    def concentration(self) -> float:
        return ((self.M - 1) / self.c - 1) / self.M

    def expected_q2(self) -> float:
        a = self.concentration
        return (a + 1) / (self.M * a + 1)

    def __call__(self, rng: np.random.Generator) -> np.ndarray:
        g = rng.gamma(self.concentration, size=self.M)
        s = g.sum()
        if s == 0:
            g = np.zeros(self.M)
            g[rng.integers(self.M)] = 1.0
            return g
        return g / s


@dataclass(frozen=True)
class FixedSource:
    """Always the same distribution (the labels are not permuted)."""

    probs: np.ndarray

    def __call__(self, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


@dataclass(frozen=True)
class PoolSource:
    """Pick a precomputed distribution and apply a random relabeling."""

    pool: tuple

    def __call__(self, rng: np.random.Generator) -> np.ndarray:
        p = np.asarray(self.pool[rng.integers(len(self.pool))], dtype=float)
        return p[rng.permutation(len(p))]


def calibrate_q2(source: Source, n_draws: int = 50, seed=None) -> float:
    """Mean collision probability sum_k p_k^2 of the m2 family."""
    sp = as_seed_path(seed)
    return float(np.mean([np.sum(source(sp.child(i).generator()) ** 2) for i in range(n_draws)]))


@dataclass
class AccuracyTable:
    M: int
    N: np.ndarray
    accuracy: np.ndarray
    stderr: np.ndarray
    n_trials: int
    q2: float | None = None

    def rows(self):
        for n, a, s in zip(self.N, self.accuracy, self.stderr):
            yield {"M": self.M, "N": int(n), "accuracy": float(a), "stderr": float(s), "n_trials": self.n_trials}


def _decide(llr: np.ndarray, truth_m2: bool, coins: np.ndarray) -> np.ndarray:
    guess = np.where(llr > 0, True, np.where(llr < 0, False, coins))
    return guess == truth_m2


def _run(M, N_grid, source: Source, n_trials, seed, classifier: str, q2, oracle_p, threads):
    N_grid = np.asarray(sorted(int(n) for n in N_grid))
    if len(N_grid) == 0 or N_grid[0] < 1:
        raise InvalidInput("N values must be >= 1")
    Nmax = int(N_grid[-1])
    sp = as_seed_path(seed)

    def trial(i):
        rng = sp.child(i).generator()
        truth_m2 = bool(rng.random() < 0.5)
        p = source(rng) if truth_m2 else np.full(M, 1.0 / M)
        labels = _draw(p, Nmax, rng)
        coins = rng.random(len(N_grid)) < 0.5
        if classifier == "collision":
            pairs = prefix_collision_pairs(labels)[N_grid - 1]
            llr = collision_llr(pairs, N_grid, M, q2)
        else:
            with np.errstate(divide="ignore"):
                steps = np.log(M * oracle_p[labels])
            llr = np.cumsum(steps)[N_grid - 1]
        return _decide(llr, truth_m2, coins)

    correct = np.array(pmap(trial, range(n_trials), threads=threads), dtype=float)
    acc = correct.mean(0)
    se = np.sqrt(np.maximum(acc * (1 - acc), 0.25 / n_trials) / n_trials)
    return AccuracyTable(M, N_grid, acc, se, n_trials, q2)


def advantage_experiment(M: int, N_grid: Sequence[int], m2_source: Source, n_trials: int = 2000, seed=None,
                         q2: float | None = None, calibration_draws: int = 50,
                         threads: int | None = None) -> AccuracyTable:
    """Accuracy of the collision-count classifier under a fair prior.

    ``q2`` defaults to the m2 family's mean collision probability, estimated
    from ``calibration_draws`` draws on a stream disjoint from the trials.
    """
    sp = as_seed_path(seed)
    if q2 is None:
        q2 = calibrate_q2(m2_source, calibration_draws, SeedPath(sp.master_seed, sp.stream_index + 1, sp.path))
    return _run(M, N_grid, m2_source, n_trials, sp, "collision", q2, None, threads)


def oracle_classifier_accuracy(M: int, N_grid: Sequence[int], m2_dist, n_trials: int = 2000, seed=None,
                               threads: int | None = None) -> AccuracyTable:
    """Accuracy of the full-likelihood classifier for a known m2 distribution."""
    p = _probs(m2_dist)
    if len(p) != M:
        raise InvalidInput("m2 distribution has the wrong size")
    return _run(M, N_grid, FixedSource(p), n_trials, seed, "oracle", None, p, threads)


def collapse_spread(tables: Sequence[AccuracyTable], scale: Callable[[np.ndarray, int], np.ndarray] | None = None,
                    max_accuracy: float = 0.8, n_points: int = 200) -> dict:
    """Largest vertical gap between accuracy curves after rescaling N.

    Curves are interpolated onto a common grid of the rescaled variable
    (default N^2 / sqrt(M)) over their overlapping range; only grid points
    where every curve is below ``max_accuracy`` count.
    """
    scale = scale or (lambda N, M: N.astype(float) ** 2 / np.sqrt(M))
    xs = [scale(t.N, t.M) for t in tables]
    lo = max(x.min() for x in xs)
    hi = min(x.max() for x in xs)
    if not hi > lo:
        raise InvalidInput("curves have no overlapping range")
    grid = np.linspace(lo, hi, n_points)
    ys = np.array([np.interp(grid, x, t.accuracy) for x, t in zip(xs, tables)])
    keep = ys.max(0) < max_accuracy
    if not keep.any():
        raise InvalidInput("no common points below the accuracy cap")
    spread = ys.max(0) - ys.min(0)
    k = int(np.argmax(np.where(keep, spread, -1)))
    return {"spread": float(spread[keep].max()), "at": float(grid[k]), "grid": grid[keep], "curves": ys[:, keep]}
