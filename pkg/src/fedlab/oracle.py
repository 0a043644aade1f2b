"""Independent closed-form and brute-force oracles.

Nothing here uses the pressure or variational code paths; translation sums
and traces are recomputed directly so the checks are genuinely independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .errors import InvalidModelError
from .operators import ChainOperator, embed_shift, translate


@dataclass(frozen=True)
class ClassicalChain:
    P: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        pi = np.asarray(self.pi, dtype=float)
        if np.max(np.abs(P.sum(axis=1) - 1)) > 1e-12 or np.any(P < 0):
            raise InvalidModelError("P must be row-stochastic")
        if np.max(np.abs(pi @ P - pi)) > 1e-10:
            raise InvalidModelError("pi is not stationary for P")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "pi", pi)

    @classmethod
    def from_transition(cls, P: np.ndarray) -> ClassicalChain:
        P = np.asarray(P, dtype=float)
        w, v = scipy.linalg.eig(P.T)
        pi = np.real(v[:, int(np.argmin(np.abs(w - 1)))])
        return cls(P, pi / pi.sum())

    @property
    def states(self) -> int:
        return self.P.shape[0]

    def path_probabilities(self, n: int) -> np.ndarray:
        """Probabilities of all length-``n`` paths, first site most significant."""
        k = self.states
        p = self.pi.copy()
        for _ in range(n - 1):
            last = np.arange(len(p)) % k  # final state of each path so far
            p = (p[:, None] * self.P[last]).ravel()
        return p


def transfer_matrix_pressure(energy: np.ndarray) -> float:
    """``log`` of the largest eigenvalue of ``[exp(-energy[a, b])]``."""
    e = np.asarray(energy, dtype=float)
    if e.shape == (1, 1):
        return -float(e[0, 0])
    return float(math.log(np.max(np.linalg.eigvalsh(np.exp(-0.5 * (e + e.T))))))


def ising_pressure(coupling: float, field: float = 0.0) -> float:
    """Pressure of ``-coupling sz sz - field sz`` via the symmetric transfer matrix."""
    s = np.array([1.0, -1.0])
    energy = -coupling * np.outer(s, s) - 0.5 * field * (s[:, None] + s[None, :])
    return transfer_matrix_pressure(energy)


def markov_kl_rate(P: np.ndarray, Q: np.ndarray, pi: np.ndarray) -> float:
    """``sum_i pi_i sum_j P_ij log(P_ij/Q_ij)``; ``inf`` on a support violation."""
    P, Q, pi = (np.asarray(a, dtype=float) for a in (P, Q, pi))
    if np.any((P > 0) & (Q <= 0)):
        return math.inf
    m = P > 0
    terms = np.zeros_like(P)
    terms[m] = P[m] * np.log(P[m] / Q[m])
    return float(pi @ terms.sum(axis=1))


def binary_rate(x: float | np.ndarray) -> np.ndarray:
    """Rate of the fair-coin mean of ``+-1`` spins."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * (1 + x) * np.log1p(x) + 0.5 * (1 - x) * np.log1p(-x)
    out = np.where(np.abs(x) == 1, math.log(2), out)
    return np.where(np.abs(x) > 1, np.inf, out)


def product_log_trace(rho: np.ndarray, A: np.ndarray) -> float:
    """``log Tr exp(log rho - A)`` for a strictly positive single-site density."""
    w, u = np.linalg.eigh(rho)
    H = (u * np.log(w)) @ u.conj().T - A
    return float(logsumexp(np.linalg.eigvalsh(0.5 * (H + H.conj().T))))


def _translation_sum(A: ChainOperator, n: int) -> ChainOperator:
    A = translate(A, 1 - A.window[0])
    acc = None
    for k in range(n - A.n_sites + 1):
        t = embed_shift(A, (1, n), k)
        acc = t if acc is None else acc + t
    return acc


@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def log_integral_exp(self, g) -> float:
        """``log sum_k w_k exp(g(x_k))`` over atoms with positive weight."""
        m = self.weights > 0
        return float(logsumexp(g(self.atoms[m]) + np.log(self.weights[m])))


def commuting_spectral_measure(state, A: ChainOperator, n: int, tol: float = 1e-10) -> DiscreteMeasure:
    """Distribution of ``s_n(A)`` in the local density, when the two commute."""
    D = state.local_density(n)
    S = _translation_sum(A, n) / n
    if D.is_diagonal and S.is_diagonal:
        vals, weights = S.data, D.data
    else:
        d, s = D.matrix, S.matrix
        comm = d @ s - s @ d
        if np.max(np.abs(comm)) > tol:
            raise InvalidModelError("density and s_n(A) do not commute")
        vals, u = np.linalg.eigh(s)
        weights = np.real(np.einsum("ki,kl,li->i", u.conj(), d, u))
    scale = max(1.0, float(np.max(np.abs(vals))))
    keys = np.round(vals / (1e-9 * scale)).astype(np.int64)
    uniq, inv = np.unique(keys, return_inverse=True)
    atoms = np.array([vals[inv == i].mean() for i in range(len(uniq))])
    w = np.bincount(inv, weights=np.clip(weights, 0, None))
    return DiscreteMeasure(atoms, w)


@dataclass(frozen=True)
class VaradhanResult:
    n: int
    finite_value: float
    variational_value: float

    @property
    def gap(self) -> float:
        return abs(self.finite_value - self.variational_value)


def varadhan_check(
    state, A: ChainOperator, f, n: int, x_grid: Sequence[float], I_values: Sequence[float]
) -> VaradhanResult:
    """``(1/n) log int exp(-n f) d mu_n`` against ``max_x {-f(x) - I(x)}``."""
    mu = commuting_spectral_measure(state, A, n)
    lhs = mu.log_integral_exp(lambda x: -n * f(x)) / n
    x = np.asarray(x_grid, dtype=float)
    I = np.asarray(I_values, dtype=float)
    ok = np.isfinite(I)
    rhs = float(np.max(-f(x[ok]) - I[ok]))
    return VaradhanResult(n, lhs, rhs)


def brute_force_log_partition(density: np.ndarray, B: np.ndarray) -> float:
    """``log Tr exp(log D - B)`` by ``scipy.linalg.logm``/``expm`` for strictly positive ``D``."""
    L = scipy.linalg.logm(density)
    return float(np.log(np.real(np.trace(scipy.linalg.expm(L - B)))))
