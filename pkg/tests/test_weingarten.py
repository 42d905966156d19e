import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import unitary_group

from itelab.errors import CapacityError, InvalidInput, NumericFailure, TableMismatch
from itelab.rng import SeedPath
from itelab.weingarten import (
    Permutation,
    all_permutations,
    closed_form_mean_prob,
    closed_form_second_moment,
    closed_form_var_prob,
    closed_form_var_prob_exact,
    cycle_count,
    explicit_inner_products,
    form_factor,
    gram_matrix,
    haar_abs4_weingarten,
    haar_sample_unitary,
    inner_product_table,
    invert_gram,
    l4_overlap,
    l4_vector,
    mc_fourth_moment,
    mc_prob_moments,
    phi_vector,
    r_vector,
    verify_inner_product_table,
    weingarten_second_moment,
)


@pytest.mark.parametrize("perm,cycles", [((1, 2, 3, 4), 4), ((2, 1, 3, 4), 3), ((2, 3, 4, 1), 1),
                                         ((2, 1, 4, 3), 2), ((1,), 1)])
def test_cycle_count(perm, cycles):
    assert cycle_count(Permutation(perm)) == cycles


def test_permutation_algebra():
    p = Permutation((2, 3, 1))
    assert (p @ p.inverse()) == Permutation.identity(3)
    assert p(1) == 2
    with pytest.raises(InvalidInput):
        Permutation((1, 1, 2))


def test_gram_small_cases():
    assert np.array_equal(gram_matrix(1, 5), [[5.0]])
    D = 7
    M = gram_matrix(2, D)
    assert np.array_equal(M, [[D**2, D], [D, D**2]])
    inv = invert_gram(M).matrix
    assert np.allclose(inv, np.array([[1, -1 / D], [-1 / D, 1]]) / (D**2 - 1))


def test_gram_k4_properties():
    M = gram_matrix(4, 8)
    assert np.array_equal(M, M.T) and np.all(M.diagonal() == 8**4)
    g = invert_gram(M)
    assert g.residual < 1e-10 and not g.approximate


def test_gram_inverse_singular_below_k():
    with pytest.raises(NumericFailure):
        invert_gram(gram_matrix(4, 2))


def test_gram_k8_asymptotic_flagged():
    g = invert_gram(k=8, D=16)
    assert g.approximate and g.matrix.shape == (40320, 40320)
    assert np.isclose(g.matrix[5, 5], 16.0**-8)


def test_phi_basics():
    v = phi_vector(Permutation((1,)), 5)
    assert np.isclose(np.vdot(v, v), 5)
    a, b = phi_vector(Permutation((1, 2)), 2), phi_vector(Permutation((2, 1)), 2)
    assert np.isclose(np.vdot(a, b), 2)
    with pytest.raises(CapacityError):
        phi_vector(Permutation((1, 2, 3, 4)), 9)


@pytest.mark.parametrize("k,D", [(1, 2), (1, 4), (2, 2), (2, 3), (2, 4), (3, 2), (3, 3), (3, 4)])
def test_gram_identity_exhaustive(k, D):
    perms = all_permutations(k)
    vecs = [phi_vector(p, D) for p in perms]
    G = np.array([[np.vdot(a, b) for b in vecs] for a in vecs])
    assert np.max(np.abs(G - gram_matrix(k, D))) < 1e-12


def test_r_vector_t0():
    v = r_vector(np.array([0.3, -1.0, 2.0]), 0.0, 2).reshape((3,) * 4)
    for b, bp in itertools.product(range(3), repeat=2):
        assert v[b, bp, b, bp] == 1
    assert np.isclose(np.abs(v).sum(), 9)


def test_table_specific_rows():
    E = np.random.default_rng(1).normal(size=4)
    t = 0.9
    ex = explicit_inner_products(E, t)
    mu = np.exp(1j * t * E).sum()
    assert np.isclose(ex[(1, 2, 3, 4)], abs(mu) ** 4)
    assert np.isclose(ex[(3, 4, 1, 2)], abs(np.exp(2j * t * E).sum()) ** 2)


@pytest.mark.parametrize("t", [0.0, 0.4, 1.3, 7.7])
def test_table_full(t):
    E = np.random.default_rng(2).normal(size=4)
    rep = verify_inner_product_table(E, t, tol=1e-10)
    assert rep["n_pass"] == 24 and rep["max_deviation"] < 1e-10


def test_table_t0_powers_of_D():
    tab = inner_product_table(4, 4, 4)
    assert tab[(1, 2, 3, 4)] == 256 and tab[(3, 4, 1, 2)] == 16 and tab[(2, 1, 4, 3)] == 16


def test_table_degenerate_spectrum():
    E = np.full(3, 0.7)
    rep = verify_inner_product_table(E, 2.1, tol=1e-10)
    assert rep["pass"]
    ff = form_factor(E, 2.1)
    assert np.isclose(ff.mu_t, 3 * np.exp(-2.1j * 0.7))


def test_table_literal_convention_reported():
    E = np.random.default_rng(0).normal(size=4)
    rep = verify_inner_product_table(E, 1.3)
    assert rep["mismatches_with_trF_convention"] == [[1, 4, 3, 2], [3, 2, 1, 4]]


def test_table_mismatch_raises(monkeypatch):
    import itelab.weingarten as w
    real = w.inner_product_table

    def broken(m1, m2, D):
        tab = real(m1, m2, D)
        tab[(1, 2, 3, 4)] += 1
        return tab

    monkeypatch.setattr(w, "inner_product_table", broken)
    with pytest.raises(TableMismatch) as exc:
        w.verify_inner_product_table(np.arange(3.0), 0.5)
    assert exc.value.report["n_pass"] == 23


def test_l4_overlaps_exhaustive():
    D = 3
    ones = {(4, 3, 2, 1), (4, 1, 2, 3), (2, 3, 4, 1), (2, 1, 4, 3)}
    for p in all_permutations(4):
        ph = phi_vector(p, D)
        neq = l4_vector(0, 1, D) @ ph
        eq = l4_vector(2, 2, D) @ ph
        assert np.isclose(neq, l4_overlap(p, False)) and np.isclose(eq, 1) and l4_overlap(p, True) == 1
        assert l4_overlap(p, False) == (p.mapping in ones)


@pytest.mark.parametrize("D", [4, 5, 8])
@pytest.mark.parametrize("xk", [False, True])
def test_weingarten_sum_equals_exact_form(D, xk):
    E = np.random.default_rng(D).normal(size=D)
    ff = form_factor(E, 0.8)
    a = closed_form_second_moment(D, xk, ff.mu_t, ff.mu_2t)
    b = weingarten_second_moment(D, xk, ff.mu_t, ff.mu_2t)
    assert abs(a - b) < 1e-9 * max(1, abs(a))


def test_closed_form_special_values():
    D = 9
    assert np.isclose(closed_form_mean_prob(D, True, D), 1.0)
    assert np.isclose(closed_form_mean_prob(D, False, np.sqrt(D)), 1 / (D + 1))
    assert np.isclose(closed_form_var_prob(D, False, 0, 0), (D * D - 2 * D + 4) / D**4)
    assert abs(closed_form_var_prob_exact(D, True, D, D)) < 1e-12


def test_closed_forms_conjugation_invariant():
    mu, mu2 = 3.1 - 2.2j, -1.4 + 0.5j
    for xk in (False, True):
        assert np.isclose(closed_form_second_moment(10, xk, mu, mu2),
                          closed_form_second_moment(10, xk, np.conj(mu), np.conj(mu2)))


def test_haar_sampler_basic():
    U = haar_sample_unitary(16, SeedPath(3))
    assert np.max(np.abs(U.conj().T @ U - np.eye(16))) < 1e-10
    assert np.allclose(np.linalg.norm(U, axis=0), 1, atol=1e-12)
    B = haar_sample_unitary(6, SeedPath(3), n_columns=2, batch=5)
    assert B.shape == (5, 6, 2)


def test_haar_moments_vs_reference():
    D, n = 8, 10_000
    U = haar_sample_unitary(D, SeedPath(7), batch=n)
    u00 = np.abs(U[:, 0, 0]) ** 2
    assert abs(u00.mean() - 1 / D) < 5 * u00.std() / np.sqrt(n)
    u4 = u00**2
    assert abs(u4.mean() - 2 / (D * (D + 1))) < 5 * u4.std() / np.sqrt(n)
    assert np.isclose(haar_abs4_weingarten(D), 2 / (D * (D + 1)))
    # same moments as an independent reference sampler
    ref = np.array([abs(unitary_group.rvs(D, random_state=i)[0, 0]) ** 4 for i in range(3000)])
    assert abs(ref.mean() - u4.mean()) < 5 * np.hypot(ref.std() / np.sqrt(3000), u4.std() / np.sqrt(n))


def test_mc_matches_closed_forms_D8():
    E = np.random.default_rng(0).normal(size=8)
    t = 1.1
    ff = form_factor(E, t)
    for xk in (False, True):
        mc = mc_prob_moments(E, t, xk, 10_000, SeedPath(1, int(xk)))
        assert abs(mc["mean"] - closed_form_mean_prob(8, xk, ff.mu_t)) < 4 * mc["stderr_mean"]
        assert abs(mc["var"] - closed_form_var_prob_exact(8, xk, ff.mu_t, ff.mu_2t)) < 4 * mc["stderr_var"]
        assert abs(mc["second_moment"] - weingarten_second_moment(8, xk, ff.mu_t, ff.mu_2t)) \
            < 4 * mc["stderr_second_moment"]


def test_fourth_moment_trivial():
    E = np.random.default_rng(0).normal(size=16)
    r = mc_fourth_moment(E, 0.0, 200, SeedPath(0), x_equals_k=True)
    assert np.isclose(r["mean"], 1) and r["stderr"] < 1e-12
    assert mc_fourth_moment(E, 1.0, 500, SeedPath(0))["mean"] > 0


def test_mc_thread_independent():
    E = np.linspace(-1, 1, 8)
    a = mc_fourth_moment(E, 1.0, 3000, SeedPath(5), threads=1)
    b = mc_fourth_moment(E, 1.0, 3000, SeedPath(5), threads=4)
    assert a == b


@given(st.integers(2, 40), st.floats(0, 20), st.booleans())
def test_mean_closed_form_bounds(D, t, xk):
    E = np.linspace(-1, 1, D)
    m = closed_form_mean_prob(D, xk, form_factor(E, t).mu_t)
    assert -1e-12 <= m <= 1 + 1e-12
