import numpy as np
import pytest
from hypothesis import given, strategies as st

from itelab.distinguisher import (
    DirichletSource,
    FixedSource,
    PoolSource,
    SampleSet,
    advantage_experiment,
    canonical_relabel,
    collapse_spread,
    collision_llr,
    collision_summary,
    oracle_classifier_accuracy,
    oracle_llr,
    p_no_collision_uniform,
    posterior_after_no_collision,
    prefix_collision_pairs,
    sample_from,
)
from itelab.dynamics import OutcomeDistribution, diagonalize, evolve_probabilities
from itelab.errors import InvalidInput
from itelab.operators import EnsembleSpec, sample_rlh
from itelab.rng import SeedPath

labels_st = st.integers(1, 30).flatmap(lambda M: st.tuples(st.just(M), st.lists(st.integers(0, M - 1), max_size=40)))


def test_sample_from_delta_and_uniform():
    d = np.zeros(10)
    d[7] = 1
    assert set(sample_from(d, 50, SeedPath(0)).labels) == {7}
    s = sample_from(OutcomeDistribution.uniform(2), 100_000, SeedPath(1))
    f = np.mean(np.array(s.labels) == 0)
    assert abs(f - 0.5) < 5 * 0.5 / np.sqrt(100_000)
    assert sample_from(d, 5, SeedPath(3)) == sample_from(d, 5, SeedPath(3))


def test_samples_at_t0_are_x():
    s = diagonalize(sample_rlh(EnsembleSpec("RLHComplete", n=3), SeedPath(0)))
    assert set(sample_from(evolve_probabilities(s, 5, 0.0), 30, SeedPath(1)).labels) == {5}


def test_canonical_relabel_example():
    assert canonical_relabel(SampleSet(10, (7, 7, 3))).labels == (0, 0, 1)


@given(labels_st)
def test_canonical_relabel_idempotent_and_invariant(case):
    M, labels = case
    s = SampleSet(M, labels)
    c = canonical_relabel(s)
    assert canonical_relabel(c) == c
    perm = np.random.default_rng(len(labels)).permutation(M)
    assert canonical_relabel(SampleSet(M, [perm[v] for v in labels])) == c
    assert collision_summary(c).histogram == collision_summary(s).histogram


@given(labels_st)
def test_collision_summary_consistency(case):
    M, labels = case
    cs = collision_summary(SampleSet(M, labels))
    assert cs.n_distinct <= cs.N
    assert cs.has_collision == (cs.n_distinct < cs.N)
    if labels:
        assert prefix_collision_pairs(labels)[-1] == cs.n_pairs


def test_prefix_pairs():
    assert list(prefix_collision_pairs([1, 2, 1, 1, 3, 2])) == [0, 0, 1, 3, 3, 4]


def test_birthday():
    assert abs(p_no_collision_uniform(365, 23) - 0.4927) < 1e-4
    assert p_no_collision_uniform(365, 1) == 1
    assert p_no_collision_uniform(5, 6) == 0
    M, N = 10**6, 100
    assert abs(p_no_collision_uniform(M, N) - (1 - N * (N - 1) / (2 * M))) < 1e-4


@given(st.integers(1, 500), st.integers(0, 60))
def test_no_collision_monotone(M, N):
    a = p_no_collision_uniform(M, N)
    assert p_no_collision_uniform(M, N + 1) <= a + 1e-15
    assert p_no_collision_uniform(M + 1, N) >= a - 1e-15


def test_posterior_cases():
    assert posterior_after_no_collision(1000, 1, 0.5, 0.1).p_m1 == 0.5
    for N in (2, 10, 30):
        p = posterior_after_no_collision(1000, N, 0.3, 1 / 1000)
        assert np.isclose(p.p_m1, 0.3) and np.isclose(p.interval[1], 0.3)
    M = 10**8
    for N in (2, 5, 10):
        p = posterior_after_no_collision(M, N, 0.5, M**-0.5)
        assert abs(p.p_m1 - 0.5) <= 2 * N**2 / np.sqrt(M)
        assert p.interval[0] <= p.p_m1 <= p.interval[1]
    with pytest.raises(InvalidInput):
        posterior_after_no_collision(10, 2, 1.5, 0.1)
    with pytest.raises(InvalidInput):
        posterior_after_no_collision(10, 2, 0.5, 0.0)


def test_llrs():
    assert collision_llr(0, 1, 100, 0.02) == 0
    assert collision_llr(1, 2, 100, 0.02) > 0
    p = np.full(4, 0.25)
    assert oracle_llr([0, 1, 2], p) == 0


def test_dirichlet_source_variance():
    src = DirichletSource(512, 4.0)
    rng = np.random.default_rng(0)
    v = [np.mean((src(rng) - 1 / 512) ** 2) for _ in range(400)]
    assert abs(np.mean(v) - 4.0 / 512**2) < 4 * np.std(v) / 20
    assert np.isclose(src.expected_q2() - 1 / 512, 512 * 4.0 / 512**2)
    with pytest.raises(InvalidInput):
        DirichletSource(16, 20.0)


def test_delta_m2_detected_immediately():
    M = 1024
    d = np.zeros(M)
    d[3] = 1
    tab = advantage_experiment(M, [1, 2, 3], FixedSource(d), 2000, SeedPath(1))
    assert tab.accuracy[1] > 0.99


def test_uniform_m2_is_chance():
    M = 256
    tab = oracle_classifier_accuracy(M, [1, 4, 16], np.full(M, 1 / M), 4000, SeedPath(2))
    assert np.all(np.abs(tab.accuracy - 0.5) < 3 * tab.stderr)


def test_oracle_large_N_consistent():
    M = 256
    p = np.random.default_rng(0).dirichlet(np.full(M, 2.0))
    tab = oracle_classifier_accuracy(M, [1, 64, 512], p, 2000, SeedPath(3))
    assert tab.accuracy[-1] > 0.98


def test_collision_never_worse_than_chance():
    M = 1024
    tab = advantage_experiment(M, [1, 5, 20, 60], DirichletSource(M, 32.0), 3000, SeedPath(4))
    assert np.all(tab.accuracy >= 0.5 - 3 * tab.stderr)


def test_experiment_thread_independent():
    src = DirichletSource(256, 16.0)
    a = advantage_experiment(256, [1, 8, 16], src, 300, SeedPath(5), threads=1)
    b = advantage_experiment(256, [1, 8, 16], src, 300, SeedPath(5), threads=4)
    assert np.array_equal(a.accuracy, b.accuracy)


def test_pool_source_relabels():
    p = np.arange(1, 9, dtype=float)
    p /= p.sum()
    src = PoolSource((p,))
    q = src(np.random.default_rng(0))
    assert np.allclose(np.sort(q), np.sort(p)) and not np.array_equal(q, p)


def test_collapse_spread_synthetic():
    from itelab.distinguisher import AccuracyTable
    tabs = []
    for M in (256, 1024, 4096):
        N = np.arange(1, 129)
        x = N**2 / np.sqrt(M)
        tabs.append(AccuracyTable(M, N, 0.5 + 0.3 * (1 - np.exp(-x)), np.zeros(len(N)), 1))
    assert collapse_spread(tabs)["spread"] < 1e-2
