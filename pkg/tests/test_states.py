import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedlab.errors import DimensionError, InvalidModelError
from fedlab.interactions import Interaction, ising, random_interaction
from fedlab.operators import SIGMA_X, SIGMA_Z, ChainOperator, partial_trace, tensor
from fedlab.states import (
    BufferedGibbs,
    ErgodicMixture,
    FCSTriple,
    FinitelyCorrelated,
    LocalGibbs,
    QMSData,
    QuantumMarkov,
    centralizer_projectors,
    classical_markov_qms,
    entropy,
    evaluate,
    fcs_alpha,
    fcs_density,
    kraus_fcs,
    local_density,
    mean_relative_entropy_estimate,
    periodized_average,
    product_fcs,
    product_state,
    qms_density,
    qms_tilde_density,
    qms_to_fcs,
    random_density,
    random_fcs,
    random_qms,
    relative_entropy,
    tracial_state,
)

seeds = st.integers(0, 2**32 - 1)


def diag(*v):
    return ChainOperator(np.diag(v))


class TestEntropy:
    def test_maximally_mixed(self):
        assert entropy(ChainOperator(np.eye(3) / 3, (1, 1), 3)) == pytest.approx(math.log(3))

    def test_pure(self, rng):
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        v /= np.linalg.norm(v)
        assert abs(entropy(ChainOperator(np.outer(v, v.conj()), (1, 2)))) < 1e-12

    def test_binary(self):
        expect = -0.75 * math.log(0.75) - 0.25 * math.log(0.25)
        assert entropy(diag(0.75, 0.25)) == pytest.approx(expect, abs=1e-15)
        assert expect == pytest.approx(0.562335, abs=1e-6)

    def test_relative_self(self, rng):
        D = random_density(rng, (1, 2))
        assert abs(relative_entropy(D, D)) < 1e-12

    def test_relative_support_violation(self):
        assert relative_entropy(diag(1.0, 0.0), diag(0.0, 1.0)) == math.inf

    def test_relative_binary(self):
        expect = 0.5 * math.log(2 / 3) + 0.5 * math.log(2)
        assert relative_entropy(diag(0.5, 0.5), diag(0.75, 0.25)) == pytest.approx(expect, abs=1e-15)
        assert expect == pytest.approx(0.143841, abs=1e-6)

    @given(seeds)
    def test_monotone_under_partial_trace(self, seed):
        rng = np.random.default_rng(seed)
        w, p = random_density(rng, (1, 3)), random_density(rng, (1, 3))
        s3 = relative_entropy(w, p)
        s2 = relative_entropy(partial_trace(w, (1, 2)), partial_trace(p, (1, 2)))
        s1 = relative_entropy(partial_trace(w, (1, 1)), partial_trace(p, (1, 1)))
        assert s3 >= s2 - 1e-10 and s2 >= s1 - 1e-10

    @given(seeds)
    def test_superadditive_with_product_reference(self, seed):
        rng = np.random.default_rng(seed)
        w = random_density(rng, (1, 2))
        r1, r2 = random_density(rng), random_density(rng, (2, 2))
        lhs = relative_entropy(w, tensor(r1, r2))
        rhs = relative_entropy(partial_trace(w, (1, 1)), r1) + relative_entropy(partial_trace(w, (2, 2)), r2)
        assert lhs >= rhs - 1e-10


class TestModels:
    def test_product_fcs_is_product(self, rng):
        rho = random_density(rng).matrix
        D = fcs_density(product_fcs(rho), 3)
        assert np.allclose(D.matrix, np.kron(np.kron(rho, rho), rho), atol=1e-14)

    def test_single_block_qms_is_product(self, rng):
        rho = random_density(rng, real=True).matrix
        q = QMSData(((2, 1),), [[rho]], np.array([1.0]))
        for n in (1, 2, 3):
            expect = rho
            for _ in range(n - 1):
                expect = np.kron(expect, rho)
            assert np.allclose(qms_density(q, n).matrix, expect, atol=1e-14)

    def test_zero_interaction_gibbs(self):
        D = local_density(LocalGibbs(Interaction(2, {})), 2)
        assert np.allclose(D.matrix, np.eye(4) / 4)

    def test_one_site_buffered_is_exact(self):
        phi = Interaction(2, {(0,): np.diag([0.3, -0.3])})
        D = local_density(BufferedGibbs(phi, 2), 3)
        w = np.exp([-0.3, 0.3]) / np.exp([-0.3, 0.3]).sum()
        assert np.allclose(D.diagonal(), np.kron(np.kron(w, w), w))

    def test_buffer_clamped_to_cap(self):
        s = BufferedGibbs(ising(0.5), buffer=50, cap=2**10)
        assert s.buffer_used(4) == 3
        with pytest.raises(DimensionError):
            s.buffer_used(11)

    def test_buffered_gibbs_compatibility_improves_with_buffer(self):
        errs = []
        for M in (2, 4, 6, 8):
            s = BufferedGibbs(ising(0.5, 0.2), buffer=M)
            errs.append(np.max(np.abs(partial_trace(local_density(s, 4), (1, 3)).matrix - local_density(s, 3).matrix)))
        assert all(b < a / 3 for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-4

    @given(seeds, st.integers(1, 4))
    def test_densities_are_states(self, seed, n):
        rng = np.random.default_rng(seed)
        for s in [LocalGibbs(random_interaction(rng)), FinitelyCorrelated(random_fcs(rng)),
                  QuantumMarkov(random_qms(rng, [(1, 2), (1, 1)]))]:
            D = local_density(s, n)
            assert abs(D.trace() - 1) < 1e-12
            assert D.eigenvalues[0] > -1e-12

    def test_product_period_two_compatibility(self, rng):
        block = random_density(rng, (1, 2))
        s = product_state(block.matrix)
        s = type(s)(ChainOperator(block.matrix, (1, 2)))
        D4, D2 = local_density(s, 4), local_density(s, 2)
        assert np.max(np.abs(partial_trace(D4, (1, 2)).matrix - D2.matrix)) < 1e-12
        assert np.max(np.abs(partial_trace(local_density(s, 3), (1, 2)).matrix - D2.matrix)) < 1e-12


class TestFCS:
    @given(seeds, st.integers(1, 3))
    def test_compatibility(self, seed, bond):
        rng = np.random.default_rng(seed)
        f = random_fcs(rng, 2, bond)
        for n in range(1, 5):
            lhs = partial_trace(fcs_density(f, n + 1), (1, n)).matrix
            assert np.max(np.abs(lhs - fcs_density(f, n).matrix)) < 1e-10

    @given(seeds)
    def test_translation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        f = random_fcs(rng, 2, 2)
        right = partial_trace(fcs_density(f, 3), (2, 3))
        assert np.max(np.abs(right.matrix - fcs_density(f, 2).matrix)) < 1e-10

    def test_rejects_non_unital(self, rng):
        f = random_fcs(rng, 2, 2)
        with pytest.raises(InvalidModelError, match="unital"):
            FCSTriple(f.algebra_blocks, 2 * f.E, f.R)

    def test_rejects_non_cp(self):
        E = np.zeros((1, 1, 2, 2, 1, 1), dtype=complex)
        E[0, 0, :, :, 0, 0] = np.diag([1.5, -0.5])
        with pytest.raises(InvalidModelError, match="completely positive"):
            FCSTriple((1,), E, np.eye(1))

    def test_kraus_left_canonical(self, rng):
        g = rng.normal(size=(6, 3))
        V, _ = np.linalg.qr(g)
        f = kraus_fcs(V, 2)
        assert f.N == 3 and f.site_dim == 2

    def test_alpha_product(self, rng):
        f = product_fcs(random_density(rng).matrix)
        assert fcs_alpha(f, 2) == pytest.approx(1.0, abs=1e-10)

    @given(st.floats(0.05, 0.95), st.floats(0.05, 0.95))
    def test_alpha_classical_markov(self, a, b):
        P = np.array([[a, 1 - a], [1 - b, b]])
        q = classical_markov_qms(P)
        pi = q.weights
        expect = np.max(P / pi[None, :])
        for n in (1, 2, 3):
            assert fcs_alpha(qms_to_fcs(q), n) == pytest.approx(expect, rel=1e-8)


class TestQMS:
    @given(seeds)
    def test_as_fcs(self, seed):
        rng = np.random.default_rng(seed)
        q = random_qms(rng, [(1, 2), (2, 1)], real=bool(seed % 2))
        f = qms_to_fcs(q)
        for n in range(1, 5):
            assert np.max(np.abs(qms_density(q, n).matrix - fcs_density(f, n).matrix)) < 1e-10

    @given(seeds)
    def test_compatibility(self, seed):
        rng = np.random.default_rng(seed)
        q = random_qms(rng, [(1, 2), (1, 1)])
        for n in range(1, 5):
            lhs = partial_trace(qms_density(q, n + 1), (1, n)).matrix
            assert np.max(np.abs(lhs - qms_density(q, n).matrix)) < 1e-10

    def test_rejects_bad_row_sums(self, rng):
        q = random_qms(rng, [(1, 1), (1, 1)])
        T = [[2 * t for t in row] for row in q.T]
        with pytest.raises(InvalidModelError):
            QMSData(q.blocks, T, q.weights)

    def test_rejects_non_positive(self):
        T = [[np.array([[1.0, 0.0], [0.0, 0.0]])]]
        with pytest.raises(InvalidModelError):
            QMSData(((2, 1),), T, np.array([1.0]))

    def test_tilde_single_block(self, rng):
        rho = random_density(rng, real=True).matrix
        q = QMSData(((2, 1),), [[rho]], np.array([1.0]))
        t = qms_tilde_density(q, (1, 3))
        assert len(t.sectors) == 1
        assert np.allclose(t.sectors[0].matrix, np.kron(rho, rho))

    def test_tilde_adjacent_sites_unit_trace(self, rng):
        q = random_qms(rng, [(1, 2), (2, 1)])
        t = qms_tilde_density(q, (2, 3))
        assert t.trace() == pytest.approx(1.0, abs=1e-12)
        for s in t.sectors:
            expect = q.weights[s.first] * q.T[s.first][s.last]
            assert np.allclose(s.matrix, expect)

    def test_tilde_embeds_to_standard_density(self, rng):
        q = random_qms(rng, [(1, 2), (1, 1)])
        std = qms_tilde_density(q, (1, 3)).standard_density()
        assert abs(std.trace() - 1) < 1e-12
        assert std.eigenvalues[0] > -1e-12


class TestCentralizer:
    def test_scalar_density_full_commutant(self):
        q = QMSData(((2, 1),), [[np.eye(2) / 2]], np.array([1.0]))
        c = centralizer_projectors(q, (1, 3))
        dim = c.tilde.sectors[0].matrix.shape[0]
        assert len(c.units) == dim**2

    def test_nondegenerate_diagonal(self):
        rho = np.diag([0.7, 0.3])
        q = QMSData(((2, 1),), [[rho]], np.array([1.0]))
        c = centralizer_projectors(q, (1, 2))
        for _, _, X in c.units:
            assert np.count_nonzero(np.abs(X - np.diag(np.diag(X))) > 1e-12) == 0

    def test_fair_coin_path_projectors(self):
        q = classical_markov_qms(np.full((2, 2), 0.5))
        c = centralizer_projectors(q, (1, 3))
        assert len(c.projectors) == 2**3
        for P in c.embedded_projectors():
            assert np.allclose(P.matrix @ P.matrix, P.matrix)

    def test_projectors_commute_with_density(self, rng):
        q = random_qms(rng, [(1, 2), (1, 1)])
        c = centralizer_projectors(q, (1, 3))
        D = c.tilde.matrix()
        for i, j, X in c.projectors:
            idx = [s for s in range(len(c.tilde.sectors)) if (c.tilde.sectors[s].first, c.tilde.sectors[s].last) == (i, j)][0]
            S = c.tilde.sectors[idx].matrix
            assert np.max(np.abs(S @ X - X @ S)) < 1e-10
        assert D.shape[0] == sum(s.matrix.shape[0] for s in c.tilde.sectors)


class TestMeanRelativeEntropy:
    def test_equal_states(self, rng):
        s = FinitelyCorrelated(random_fcs(rng))
        seq = mean_relative_entropy_estimate(s, s, [1, 2, 3])
        assert np.max(np.abs(seq.values)) < 1e-10

    def test_products_constant(self, rng):
        a, b = random_density(rng), random_density(rng)
        seq = mean_relative_entropy_estimate(product_state(a.matrix), product_state(b.matrix), [1, 2, 3, 4])
        assert np.max(np.abs(seq.values - relative_entropy(a, b))) < 1e-10

    def test_lower_bound_metadata(self):
        P, Q = np.array([[0.7, 0.3], [0.4, 0.6]]), np.array([[0.5, 0.5], [0.2, 0.8]])
        qp, qq = classical_markov_qms(P), classical_markov_qms(Q)
        seq = mean_relative_entropy_estimate(QuantumMarkov(qp), QuantumMarkov(qq), range(2, 7), fcs=qms_to_fcs(qq))
        assert seq.metadata["alpha"] == pytest.approx(1.75)
        assert seq.metadata["bound_slack"] >= 0


class TestPeriodizedAverage:
    def test_iid_block(self, rng):
        rho = random_density(rng).matrix
        psi = periodized_average(ChainOperator(np.kron(rho, rho), (1, 2)))
        A = ChainOperator(np.kron(SIGMA_X, SIGMA_Z), (1, 2))
        assert evaluate(psi, A) == pytest.approx(evaluate(product_state(rho), A), abs=1e-12)

    def test_bell_diagonal_one_site(self, rng):
        v = np.array([1.0, 0, 0, 1.0]) / math.sqrt(2)
        w = np.array([0, 1.0, 0, 0])
        B = ChainOperator(0.6 * np.outer(v, v) + 0.4 * np.outer(w, w), (1, 2))
        psi = periodized_average(B)
        A = ChainOperator(SIGMA_Z)
        m1 = np.trace(partial_trace(B, (1, 1)).matrix @ SIGMA_Z).real
        m2 = np.trace(partial_trace(B, (2, 2)).matrix @ SIGMA_Z).real
        assert evaluate(psi, A) == pytest.approx((m1 + m2) / 2, abs=1e-12)

    @given(seeds, st.integers(2, 4))
    def test_close_to_restricted_state(self, seed, m):
        rng = np.random.default_rng(seed)
        f = random_fcs(rng, 2, 2)
        psi = periodized_average(fcs_density(f, m))
        g = rng.normal(size=(4, 4))
        A = ChainOperator(g + g.T, (1, 2))
        gap = abs(evaluate(psi, A) - evaluate(FinitelyCorrelated(f), A))
        assert gap <= 2 * 2 * A.norm() / m + 1e-12

    def test_translation_invariant_density(self, rng):
        psi = periodized_average(random_density(rng, (1, 3)))
        D4 = local_density(psi, 4)
        assert np.max(np.abs(partial_trace(D4, (2, 4)).matrix - partial_trace(D4, (1, 3)).matrix)) < 1e-12


class TestMixture:
    def test_weights_validated(self):
        with pytest.raises(InvalidModelError):
            ErgodicMixture(((0.5, tracial_state()), (0.6, tracial_state())))

    def test_density_is_average(self):
        up, dn = product_state(np.diag([1.0, 0.0])), product_state(np.diag([0.0, 1.0]))
        mix = ErgodicMixture(((0.5, up), (0.5, dn)))
        D = local_density(mix, 2)
        assert np.allclose(D.diagonal(), [0.5, 0, 0, 0.5])
