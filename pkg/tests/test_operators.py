import math

import numpy as np
import pytest
import scipy.linalg
from helpers import random_hermitian
from hypothesis import given
from hypothesis import strategies as st

from fedlab.errors import DimensionError, NotHermitianError, SupportError, WindowError
from fedlab.operators import (
    SIGMA_X,
    SIGMA_Z,
    ChainOperator,
    check_dimension,
    embed_shift,
    embed_sites,
    identity,
    log_trace_density_exp,
    matrix_function,
    max_generalized_ratio,
    min_dominating_lambda,
    partial_trace,
    perturbed_trace_exp,
    spectral_decomposition,
    tensor,
    translate,
)
from fedlab.states import random_density, relative_entropy

seeds = st.integers(0, 2**32 - 1)


def op(m, window=(1, 1), d=2):
    return ChainOperator(np.asarray(m), window, d)


class TestChainOperator:
    def test_dimension_must_match_window(self):
        with pytest.raises(ValueError):
            ChainOperator(np.eye(4), (1, 1), 2)

    def test_rejects_non_hermitian(self):
        with pytest.raises(NotHermitianError):
            ChainOperator(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_tiny_asymmetry_is_symmetrized(self):
        m = SIGMA_X + np.array([[0, 1e-14], [0, 0]])
        A = ChainOperator(m)
        assert np.array_equal(A.matrix, A.matrix.conj().T)

    def test_bad_window(self):
        with pytest.raises(WindowError):
            ChainOperator(np.eye(2), (2, 1))

    def test_diagonal_storage_is_transparent(self):
        A = op(np.diag([1.0, -1.0]))
        assert A.is_diagonal
        assert np.array_equal(A.matrix, np.diag([1.0, -1.0]))

    def test_arrays_are_read_only(self):
        A = op(SIGMA_X)
        with pytest.raises(ValueError):
            A.data[0, 0] = 5

    def test_window_mismatch_in_sum(self):
        with pytest.raises(WindowError):
            op(SIGMA_Z, (1, 1)) + op(SIGMA_Z, (2, 2))

    def test_dimension_cap(self):
        with pytest.raises(DimensionError) as e:
            check_dimension(2, 15)
        assert e.value.n == 15
        assert check_dimension(2, 14) == 2**14


class TestEmbedShift:
    def test_left_factor(self):
        A = embed_shift(op(SIGMA_Z), (1, 2), 0)
        assert np.allclose(A.matrix, np.kron(SIGMA_Z, np.eye(2)))

    def test_shift_by_one(self):
        A = embed_shift(op(SIGMA_Z), (1, 2), 1)
        assert np.allclose(A.matrix, np.kron(np.eye(2), SIGMA_Z))

    def test_identity_case(self, rng):
        X = op(random_hermitian(rng, 4), (1, 2))
        assert embed_shift(X, (1, 2), 0).allclose(X, 0)

    def test_outside_target(self):
        with pytest.raises(WindowError):
            embed_shift(op(SIGMA_Z), (1, 2), 2)

    @given(seeds, st.integers(0, 3))
    def test_translation_commutes_with_embedding(self, seed, k):
        rng = np.random.default_rng(seed)
        A = op(random_hermitian(rng, 4), (1, 2))
        B = embed_shift(translate(A, k), (1, 6), 0)
        assert B.allclose(embed_shift(A, (1, 6), k), 1e-14)

    def test_embed_sites_non_adjacent(self):
        A = embed_sites(np.kron(SIGMA_Z, SIGMA_X), (1, 3), (1, 3))
        assert np.allclose(A.matrix, np.kron(np.kron(SIGMA_Z, np.eye(2)), SIGMA_X))


class TestMatrixFunction:
    def test_square_of_diagonal(self):
        H = matrix_function(op(np.diag([1.0, -1.0])), lambda x: x**2)
        assert np.allclose(H.matrix, np.eye(2))

    def test_exponential_of_sigma_x(self):
        H = matrix_function(op(SIGMA_X), lambda x: np.exp(-x))
        expect = math.cosh(1) * np.eye(2) - math.sinh(1) * SIGMA_X
        assert np.max(np.abs(H.matrix - expect)) < 1e-14

    @given(seeds, st.integers(1, 3))
    def test_identity_function(self, seed, n):
        rng = np.random.default_rng(seed)
        H = op(random_hermitian(rng, 2**n), (1, n))
        assert matrix_function(H, lambda x: x).allclose(H, 1e-12)

    @given(seeds)
    def test_matches_expm(self, seed):
        rng = np.random.default_rng(seed)
        m = random_hermitian(rng, 4)
        E = matrix_function(op(m, (1, 2)), np.exp)
        assert np.allclose(E.matrix, scipy.linalg.expm(m), atol=1e-10)

    @given(seeds)
    def test_spectral_reconstruction(self, seed):
        rng = np.random.default_rng(seed)
        m = random_hermitian(rng, 8)
        sd = spectral_decomposition(op(m, (1, 3)))
        assert np.all(np.diff(sd.eigenvalues) >= 0)
        assert np.max(np.abs(sd.reconstruct() - m)) <= 1e-10 * np.max(np.abs(m))

    def test_block_structure_used(self):
        m = scipy.linalg.block_diag(SIGMA_X, np.diag([2.0, 3.0]))
        sd = spectral_decomposition(op(m, (1, 2)))
        assert np.allclose(sd.eigenvalues, [-1, 1, 2, 3])


class TestPartialTrace:
    def test_product_factorization(self, rng):
        rho, sigma = random_density(rng), random_density(rng) * 2.0
        both = tensor(rho, ChainOperator(sigma.data, (2, 2)))
        assert partial_trace(both, (1, 1)).allclose(rho * 2.0, 1e-14)

    def test_maximally_entangled(self):
        v = np.array([1.0, 0, 0, 1.0]) / math.sqrt(2)
        A = op(np.outer(v, v), (1, 2))
        assert np.allclose(partial_trace(A, (1, 1)).matrix, np.eye(2) / 2)
        assert np.allclose(partial_trace(A, (2, 2)).matrix, np.eye(2) / 2)

    def test_keep_everything(self, rng):
        A = op(random_hermitian(rng, 4), (1, 2))
        assert partial_trace(A, (1, 2)).allclose(A, 0)

    @given(seeds)
    def test_trace_preserved(self, seed):
        rng = np.random.default_rng(seed)
        D = random_density(rng, (1, 3))
        for keep in [(1, 1), (2, 3), (2, 2)]:
            assert abs(partial_trace(D, keep).trace() - 1) < 1e-12


class TestPerturbedTrace:
    def test_rank_one_support(self):
        r = perturbed_trace_exp(op(np.diag([1.0, 0.0])), op(np.diag([3.0, 5.0])))
        assert r.z == pytest.approx(math.exp(-3), rel=1e-14)
        assert np.allclose(r.density.matrix, np.diag([1.0, 0.0]))

    def test_tracial_sigma_z(self):
        r = perturbed_trace_exp(op(np.eye(2) / 2), op(SIGMA_Z))
        assert r.z == pytest.approx(math.cosh(1), rel=1e-14)

    def test_unperturbed(self, rng):
        D = random_density(rng, (1, 2))
        r = perturbed_trace_exp(D, op(np.zeros((4, 4)), (1, 2)))
        assert r.z == pytest.approx(1.0, abs=1e-12)
        assert r.density.allclose(D, 1e-12)

    def test_singular_dense_support(self, rng):
        D = random_density(rng, (1, 2), rank=2)
        B = op(random_hermitian(rng, 4), (1, 2))
        w, u = np.linalg.eigh(D.matrix)
        v = u[:, w > 1e-10]
        h = np.diag(np.log(w[w > 1e-10])) - v.conj().T @ B.matrix @ v
        assert perturbed_trace_exp(D, B).log_z == pytest.approx(
            np.log(np.sum(np.exp(np.linalg.eigvalsh(h)))), abs=1e-12)

    def test_rejects_non_density(self):
        with pytest.raises(SupportError):
            perturbed_trace_exp(op(np.diag([1.0, -0.5])), op(SIGMA_Z))

    @given(seeds, st.integers(1, 3), st.floats(0.1, 5.0))
    def test_matches_plain_exponential(self, seed, n, scale):
        rng = np.random.default_rng(seed)
        D = random_density(rng, (1, n))
        B = op(random_hermitian(rng, 2**n, scale), (1, n))
        plain = np.trace(scipy.linalg.expm(scipy.linalg.logm(D.matrix) - B.matrix)).real
        assert perturbed_trace_exp(D, B).z == pytest.approx(plain, rel=1e-10)

    @given(seeds, st.integers(1, 3))
    def test_golden_thompson_operator_level(self, seed, n):
        rng = np.random.default_rng(seed)
        D = random_density(rng, (1, n))
        B = op(random_hermitian(rng, 2**n, 2.0), (1, n))
        gt = math.exp(log_trace_density_exp(D, B))
        assert perturbed_trace_exp(D, B).z <= gt + 1e-12

    @given(seeds, st.floats(-2, 2), st.floats(-2, 2))
    def test_chain_rule(self, seed, a, b):
        rng = np.random.default_rng(seed)
        D = random_density(rng, (1, 2))
        h = op(random_hermitian(rng, 4), (1, 2)) * a
        k = op(random_hermitian(rng, 4), (1, 2)) * b
        twice = perturbed_trace_exp(perturbed_trace_exp(D, h).density, k).density
        once = perturbed_trace_exp(D, h + k).density
        assert np.max(np.abs(twice.matrix - once.matrix)) <= 1e-10

    @given(seeds, st.integers(1, 2))
    def test_variational_lower_bound(self, seed, n):
        rng = np.random.default_rng(seed)
        rho = random_density(rng, (1, n))
        B = op(random_hermitian(rng, 2**n, 2.0), (1, n))
        log_z = perturbed_trace_exp(rho, B).log_z
        for _ in range(5):
            w = random_density(rng, (1, n))
            assert log_z >= -B.expectation(w) - relative_entropy(w, rho) - 1e-10

    @given(seeds, st.floats(0.1, 3.0))
    def test_relative_entropy_stability(self, seed, scale):
        rng = np.random.default_rng(seed)
        rho, w = random_density(rng, (1, 2)), random_density(rng, (1, 2))
        B = op(random_hermitian(rng, 4, scale), (1, 2))
        pert = perturbed_trace_exp(rho, B).density
        assert abs(relative_entropy(w, rho) - relative_entropy(w, pert)) <= 2 * B.norm() + 1e-10


class TestDomination:
    def test_equal(self, rng):
        D = random_density(rng, (1, 2))
        assert min_dominating_lambda(D, D) == pytest.approx(1.0, abs=1e-10)

    def test_commuting(self):
        lam = min_dominating_lambda(op(np.diag([0.5, 0.5])), op(np.diag([0.75, 0.25])))
        assert lam == pytest.approx(2.0, abs=1e-12)

    def test_near_singular(self):
        eps = 1e-6
        lam = min_dominating_lambda(op(np.diag([1 - eps, eps])), op(np.diag([0.5, 0.5])))
        assert lam == pytest.approx(0.5 / eps, rel=1e-6)

    def test_mutual_domination_bounds(self, rng):
        a, b = random_density(rng, (1, 2)), random_density(rng, (1, 2))
        lam = min_dominating_lambda(a, b)
        assert np.linalg.eigvalsh(lam * a.matrix - b.matrix).min() >= -1e-10
        assert np.linalg.eigvalsh(lam * b.matrix - a.matrix).min() >= -1e-10

    def test_support_violation(self):
        assert max_generalized_ratio(op(np.diag([0.5, 0.5])), op(np.diag([1.0, 0.0]))) == math.inf


def test_identity_helper():
    assert np.array_equal(identity((1, 2)).matrix, np.eye(4))
