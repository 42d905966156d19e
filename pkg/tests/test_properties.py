"""Property suite: normalization, unitarity, conservation, oracle evolution, relabelling, determinism."""
import numpy as np
import scipy.linalg
from hypothesis import given, settings, strategies as st

from itelab.distinguisher import SampleSet, canonical_relabel
from itelab.dynamics import (
    diagonalize,
    energy_expectation,
    evolve_probabilities,
    evolve_state,
    transition_probabilities,
)
from itelab.ensemble import EnsembleRunConfig, run_trials
from itelab.operators import EnsembleSpec, sample_gue, sample_hamiltonian
from itelab.rng import SeedPath
from itelab.weingarten import haar_sample_unitary

variants = st.sampled_from(["GUE", "RLHComplete", "RLHChain", "RLHLattice", "HeisenbergTwoField"])


def _spec(variant, n):
    if variant == "GUE":
        return EnsembleSpec("GUE", D=2**n)
    if variant == "RLHLattice":
        return EnsembleSpec("RLHLattice", n=4)
    if variant == "HeisenbergTwoField":
        return EnsembleSpec(variant, n=max(n, 3))
    return EnsembleSpec(variant, n=n)


@settings(max_examples=25)
@given(variants, st.integers(2, 6), st.integers(0, 2**32), st.floats(0, 50))
def test_probability_normalization(variant, n, seed, t):
    s = diagonalize(sample_hamiltonian(_spec(variant, n), SeedPath(seed)))
    x = seed % s.dim
    p = evolve_probabilities(s, x, t).probs
    assert abs(p.sum() - 1) < 1e-10 and p.min() >= 0
    P = transition_probabilities(s, t)
    assert np.max(np.abs(P.sum(axis=0) - 1)) < 1e-10


@settings(max_examples=20)
@given(st.integers(2, 64), st.integers(0, 2**32))
def test_unitarity_residuals(D, seed):
    s = diagonalize(sample_gue(D, 0.5, SeedPath(seed)), check="full")
    C = s.basis_change
    assert np.max(np.abs(C.conj().T @ C - np.eye(D))) < 1e-10
    U = s.propagator(1.7)
    assert np.max(np.abs(U.conj().T @ U - np.eye(D))) < 1e-10
    V = haar_sample_unitary(D, SeedPath(seed))
    assert np.max(np.abs(V.conj().T @ V - np.eye(D))) < 1e-10


@settings(max_examples=15)
@given(st.sampled_from([4, 16, 64, 256]), st.integers(0, 2**32), st.floats(0, 100))
def test_energy_conservation(D, seed, t):
    H = sample_gue(D, 0.5, SeedPath(seed))
    s = diagonalize(H)
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal(D) + 1j * rng.standard_normal(D)
    psi /= np.linalg.norm(psi)
    e0 = energy_expectation(H, psi)
    e1 = energy_expectation(H, evolve_state(s, psi, t))
    assert abs(e1 - e0) < 1e-9 * max(1.0, np.max(np.abs(s.energies)))


@settings(max_examples=20)
@given(st.integers(2, 64), st.integers(0, 2**32), st.floats(0, 10))
def test_evolution_matches_expm(D, seed, t):
    H = sample_gue(D, 0.5, SeedPath(seed))
    s = diagonalize(H)
    U = scipy.linalg.expm(-1j * t * H.entries)
    assert np.max(np.abs(s.propagator(t) - U)) < 1e-9
    x = seed % D
    assert np.max(np.abs(evolve_probabilities(s, x, t).probs - np.abs(U[:, x]) ** 2)) < 1e-9


@given(st.integers(1, 40).flatmap(lambda M: st.tuples(st.just(M), st.lists(st.integers(0, M - 1), max_size=50))),
       st.integers(0, 1000))
def test_relabel_idempotent_and_invariant(case, seed):
    M, labels = case
    c = canonical_relabel(SampleSet(M, labels))
    assert canonical_relabel(c) == c
    perm = np.random.default_rng(seed).permutation(M)
    assert canonical_relabel(SampleSet(M, [int(perm[v]) for v in labels])) == c


@settings(max_examples=5, deadline=None)
@given(st.sampled_from(["GUE", "RLHComplete", "RLHChain"]), st.integers(0, 2**32), st.sampled_from([2, 3, 8]))
def test_thread_count_determinism(variant, seed, threads):
    spec = _spec(variant, 4)
    base = EnsembleRunConfig(spec, n_trials=6, eval_times=(0.5, 3.0), master_seed=seed, threads=1)
    par = EnsembleRunConfig(spec, n_trials=6, eval_times=(0.5, 3.0), master_seed=seed, threads=threads)
    a, b = run_trials(base), run_trials(par)
    assert np.array_equal(a.variances, b.variances, equal_nan=True)
