import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from itelab.dynamics import (
    OutcomeDistribution,
    PureState,
    TimeSeries,
    dephasing_average,
    diagonalize,
    escape_curve,
    estimate_t_eq,
    evolve_probabilities,
    kicked_top_distribution,
    kicked_top_floquet,
    l1_distance_to_uniform,
    outcome_variance,
    transition_probabilities,
)
from itelab.errors import InvalidInput, NoEquilibration
from itelab.operators import EnsembleSpec, build_pauli_string, sample_gue
from itelab.rng import SeedPath


def test_diagonal_matrix():
    s = diagonalize(np.diag([3.0, 1.0, 2.0]).astype(complex))
    assert np.allclose(s.energies, [1, 2, 3])
    assert np.allclose(np.abs(s.basis_change), [[0, 0, 1], [1, 0, 0], [0, 1, 0]])


def test_pauli_x_eigenvectors():
    s = diagonalize(build_pauli_string(1, [(0, "X")]))
    assert np.allclose(s.energies, [-1, 1])
    assert np.allclose(s.basis_change[:, 0], np.array([1, -1]) / np.sqrt(2))
    assert np.allclose(s.basis_change[:, 1], np.array([1, 1]) / np.sqrt(2))


def test_gue_reconstruction_and_phase_convention():
    H = sample_gue(64, 0.5, SeedPath(3))
    s = diagonalize(H, check="full")
    C = s.basis_change
    assert np.max(np.abs(C.conj().T @ C - np.eye(64))) < 1e-10
    assert np.max(np.abs((C * s.energies) @ C.conj().T - H.entries)) < 1e-9 * np.abs(s.energies).max()
    pivots = C[np.argmax(np.abs(C), axis=0), np.arange(64)]
    assert np.allclose(pivots.imag, 0) and np.all(pivots.real > 0)
    s2 = diagonalize(H)
    assert np.array_equal(s.basis_change, s2.basis_change)


def test_t_zero_is_delta():
    s = diagonalize(sample_gue(16, 0.5, SeedPath(1)))
    p = evolve_probabilities(s, 5, 0.0).probs
    assert abs(p[5] - 1) < 1e-12 and np.max(np.delete(p, 5)) < 1e-12


def test_rabi_two_level():
    s = diagonalize(build_pauli_string(1, [(0, "X")]))
    assert np.allclose(evolve_probabilities(s, 0, np.pi / 4).probs, [0.5, 0.5], atol=1e-14)
    t = 0.37
    assert np.allclose(evolve_probabilities(s, 0, t).probs, [np.cos(t) ** 2, np.sin(t) ** 2])


@given(st.integers(2, 64), st.integers(0, 2**32), st.floats(0, 50))
def test_matches_expm_oracle(D, seed, t):
    H = sample_gue(D, 0.5, SeedPath(seed))
    s = diagonalize(H)
    x = seed % D
    psi = scipy.linalg.expm(-1j * t * H.entries)[:, x]
    assert np.max(np.abs(evolve_probabilities(s, x, t).probs - np.abs(psi) ** 2)) < 1e-8


def test_outcome_variance_examples():
    assert outcome_variance(OutcomeDistribution.uniform(16)) == 0
    D = 10
    delta = np.zeros(D)
    delta[3] = 1
    assert np.isclose(outcome_variance(delta), (D - 1) / D**2)


def test_l1_distance():
    assert l1_distance_to_uniform(OutcomeDistribution.uniform(8)) == 0
    d = np.zeros(8)
    d[0] = 1
    assert np.isclose(l1_distance_to_uniform(d), 2 * (1 - 1 / 8))


@given(st.floats(0, 1))
def test_l1_linear_under_mixing(lam):
    p = np.random.default_rng(0).dirichlet(np.ones(12))
    u = np.full(12, 1 / 12)
    assert np.isclose(l1_distance_to_uniform(lam * p + (1 - lam) * u), lam * l1_distance_to_uniform(p))


def test_distribution_validation():
    with pytest.raises(InvalidInput):
        OutcomeDistribution([0.5, 0.6])
    with pytest.raises(InvalidInput):
        OutcomeDistribution([1.1, -0.1])
    p = OutcomeDistribution([1.0, -1e-16])
    assert p.probs[1] == 0
    with pytest.raises(InvalidInput):
        PureState(np.array([1.0, 1.0]))
    with pytest.raises(InvalidInput):
        TimeSeries([0, 1, 1], [0, 0, 0])


def test_escape_curve_and_dephasing():
    H = sample_gue(32, 0.5, SeedPath(8))
    s = diagonalize(H)
    assert np.min(np.diff(s.energies)) > 1e-12
    curve = escape_curve(s, 0, np.linspace(0, 5, 50))
    assert curve.values[0] == 0
    T = np.linspace(0, 4000, 20001)
    long = escape_curve(s, 0, T).values.mean()
    avg = dephasing_average(s, 0)
    assert np.isclose(avg.sum(), 1)
    assert abs(long - (1 - avg[0]) / 31) < 2e-3 / 31
    # time-averaged full distribution
    P = np.mean([evolve_probabilities(s, 0, t).probs for t in T[::10]], axis=0)
    assert np.max(np.abs(P - avg)) < 5e-3


def test_t_eq_logistic():
    t = np.linspace(0, 10, 101)
    ts = TimeSeries(t, 1 / (1 + np.exp(-(t - 5))))
    assert abs(estimate_t_eq(ts) - 5.0) <= 0.1 + 1e-12


def test_t_eq_errors():
    t = np.linspace(0, 10, 101)
    with pytest.raises(NoEquilibration):
        estimate_t_eq(TimeSeries(t, np.exp(-t)))
    with pytest.raises(InvalidInput):
        estimate_t_eq(TimeSeries(t[:10], t[:10]))


def test_transition_matrix_columns():
    s = diagonalize(sample_gue(12, 0.5, SeedPath(2)))
    P = transition_probabilities(s, 1.7)
    assert np.allclose(P.sum(0), 1) and np.allclose(P.sum(1), 1)
    assert np.allclose(P[:, 4], evolve_probabilities(s, 4, 1.7).probs)


def test_kicked_top_trivial_cases():
    spec = EnsembleSpec("KickedTop", j=5)
    assert kicked_top_distribution(spec, 2, 0).probs[2] == 1
    still = EnsembleSpec("KickedTop", j=5, alpha=(0, 0, 0), tau=(0, 0, 1))
    for k in (1, 5, 20):
        assert np.isclose(kicked_top_distribution(still, 3, k).probs[3], 1)
    U = kicked_top_floquet(spec)
    assert np.max(np.abs(U.conj().T @ U - np.eye(11))) < 1e-10
    with pytest.raises(InvalidInput):
        kicked_top_distribution(spec, 0, -1)
