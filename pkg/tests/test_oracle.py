import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binom

from fedlab.errors import InvalidModelError
from fedlab.operators import SIGMA_X, SIGMA_Z, ChainOperator
from fedlab.oracle import (
    ClassicalChain,
    binary_rate,
    brute_force_log_partition,
    commuting_spectral_measure,
    ising_pressure,
    markov_kl_rate,
    product_log_trace,
    transfer_matrix_pressure,
    varadhan_check,
)
from fedlab.states import (
    QuantumMarkov,
    classical_markov_qms,
    product_state,
    qms_tilde_density,
    random_qms,
    tracial_state,
)

seeds = st.integers(0, 2**32 - 1)
SZ = ChainOperator(SIGMA_Z)


class TestTransferMatrix:
    def test_free_spins(self):
        assert transfer_matrix_pressure(np.zeros((2, 2))) == pytest.approx(math.log(2), abs=1e-15)

    @given(st.floats(-2, 2))
    def test_zero_field_closed_form(self, k):
        assert ising_pressure(k) == pytest.approx(math.log(2 * math.cosh(k)), abs=1e-12)

    def test_single_state(self):
        assert transfer_matrix_pressure(np.array([[0.3]])) == pytest.approx(-0.3)

    @given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
    def test_with_field_closed_form(self, k, h):
        # largest eigenvalue e^k cosh h + sqrt(e^{2k} sinh^2 h + e^{-2k})
        lam = math.exp(k) * math.cosh(h) + math.sqrt(math.exp(2 * k) * math.sinh(h) ** 2 + math.exp(-2 * k))
        assert ising_pressure(k, h) == pytest.approx(math.log(lam), abs=1e-12)

    def test_field_only(self):
        assert ising_pressure(0.0, 0.7) == pytest.approx(math.log(2 * math.cosh(0.7)), abs=1e-12)


class TestClassicalChain:
    def test_stationary(self):
        c = ClassicalChain.from_transition([[0.7, 0.3], [0.4, 0.6]])
        assert np.allclose(c.pi, [4 / 7, 3 / 7])

    def test_rejects_non_stochastic(self):
        with pytest.raises(InvalidModelError):
            ClassicalChain(np.array([[0.5, 0.6], [0.5, 0.5]]), np.array([0.5, 0.5]))

    def test_path_probabilities_sum(self):
        c = ClassicalChain.from_transition([[0.2, 0.8], [0.9, 0.1]])
        for n in (1, 2, 5):
            p = c.path_probabilities(n)
            assert p.shape == (2**n,) and p.sum() == pytest.approx(1.0, abs=1e-14)

    def test_path_probabilities_match_qms_density(self):
        P = np.array([[0.2, 0.5, 0.3], [0.6, 0.1, 0.3], [0.25, 0.25, 0.5]])
        c = ClassicalChain.from_transition(P)
        state = QuantumMarkov(classical_markov_qms(P))
        for n in (1, 2, 4):
            D = state.local_density(n)
            assert np.max(np.abs(np.diag(D.matrix).real - c.path_probabilities(n))) < 1e-12

    @given(seeds)
    def test_tilde_eigenvalues_are_path_probabilities(self, seed):
        rng = np.random.default_rng(seed)
        P = rng.dirichlet(np.ones(2), size=2)
        c = ClassicalChain.from_transition(P)
        td = qms_tilde_density(classical_markov_qms(P), (1, 4))
        ev = np.sort(np.concatenate([np.linalg.eigvalsh(s.matrix) for s in td.sectors]))
        assert np.max(np.abs(ev - np.sort(c.path_probabilities(4)))) < 1e-12


class TestKL:
    def test_self_is_zero(self):
        P = np.array([[0.7, 0.3], [0.4, 0.6]])
        assert markov_kl_rate(P, P, [4 / 7, 3 / 7]) == 0

    def test_known_value(self):
        P = np.array([[0.7, 0.3], [0.4, 0.6]])
        Q = np.array([[0.5, 0.5], [0.2, 0.8]])
        pi = np.array([4 / 7, 3 / 7])
        rows = [0.7 * math.log(1.4) + 0.3 * math.log(0.6), 0.4 * math.log(2) + 0.6 * math.log(0.75)]
        assert markov_kl_rate(P, Q, pi) == pytest.approx(pi @ rows, abs=1e-15)

    def test_support_violation(self):
        P = np.array([[0.5, 0.5], [0.5, 0.5]])
        Q = np.array([[1.0, 0.0], [0.5, 0.5]])
        assert markov_kl_rate(P, Q, [0.5, 0.5]) == math.inf

    @given(seeds)
    def test_non_negative(self, seed):
        rng = np.random.default_rng(seed)
        P, Q = rng.dirichlet(np.ones(3), size=3), rng.dirichlet(np.ones(3), size=3)
        pi = ClassicalChain.from_transition(P).pi
        assert markov_kl_rate(P, Q, pi) >= -1e-15


class TestBinaryRate:
    def test_values(self):
        assert binary_rate(0.0) == 0
        assert binary_rate(0.5) == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5))
        assert binary_rate(1.0) == pytest.approx(math.log(2))
        assert binary_rate(-1.0) == pytest.approx(math.log(2))
        assert math.isinf(binary_rate(1.1))

    @given(st.floats(-0.99, 0.99))
    def test_symmetric(self, x):
        assert binary_rate(x) == pytest.approx(binary_rate(-x), abs=1e-15)


class TestSpectralMeasure:
    def test_binomial(self):
        mu = commuting_spectral_measure(tracial_state(), SZ, 2)
        assert np.allclose(mu.atoms, [-1, 0, 1])
        assert np.allclose(mu.weights, [0.25, 0.5, 0.25])

    @given(st.integers(1, 8), st.floats(0.05, 0.95))
    def test_biased_binomial(self, n, p):
        mu = commuting_spectral_measure(product_state(np.diag([p, 1 - p])), SZ, n)
        k = np.round((mu.atoms + 1) * n / 2).astype(int)  # number of up spins
        assert np.allclose(mu.weights, binom.pmf(k, n, p), atol=1e-12)
        assert mu.mass == pytest.approx(1.0, abs=1e-12)

    def test_single_site(self):
        mu = commuting_spectral_measure(product_state(np.diag([0.3, 0.7])), SZ, 1)
        assert np.allclose(mu.atoms, [-1, 1]) and np.allclose(mu.weights, [0.7, 0.3])

    def test_rejects_non_commuting(self):
        with pytest.raises(InvalidModelError):
            commuting_spectral_measure(product_state(np.diag([0.3, 0.7])), ChainOperator(SIGMA_X), 2)

    def test_log_integral(self):
        mu = commuting_spectral_measure(tracial_state(), SZ, 3)
        assert mu.log_integral_exp(lambda x: -3 * x) == pytest.approx(3 * math.log(math.cosh(1)), abs=1e-12)


class TestVaradhan:
    def test_tracial_square(self):
        x = np.linspace(-1, 1, 401)
        res = [varadhan_check(tracial_state(), SZ, lambda v: v**2, n, x, binary_rate(x)) for n in (4, 8, 16)]
        gaps = [r.gap for r in res]
        assert gaps[0] > gaps[1] > gaps[2]
        assert res[-1].variational_value == pytest.approx(0.0, abs=1e-12)

    def test_linear_f_is_exact_limit(self):
        # f(x) = x: finite value is log cosh 1 for every n
        x = np.linspace(-1, 1, 2001)
        r = varadhan_check(tracial_state(), SZ, lambda v: v, 5, x, binary_rate(x))
        assert r.finite_value == pytest.approx(math.log(math.cosh(1)), abs=1e-12)
        assert r.gap < 1e-5


class TestBruteForce:
    def test_product_log_trace(self):
        e = np.linalg.eigvalsh(np.diag(np.log([0.8, 0.2])) - SIGMA_X)
        assert product_log_trace(np.diag([0.8, 0.2]), SIGMA_X) == pytest.approx(math.log(np.exp(e).sum()))

    @given(seeds)
    def test_brute_force_agrees_with_product(self, seed):
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        rho = m @ m.conj().T + 0.1 * np.eye(2)
        rho /= np.trace(rho).real
        A = rng.normal(size=(2, 2))
        A = A + A.T
        assert brute_force_log_partition(rho, A) == pytest.approx(product_log_trace(rho, A), abs=1e-10)

    def test_qms_random_density_is_positive(self):
        q = random_qms(np.random.default_rng(1), [(1, 1), (1, 1)])
        D = QuantumMarkov(q).local_density(2)
        assert brute_force_log_partition(D.matrix, np.zeros((4, 4))) == pytest.approx(0.0, abs=1e-10)
