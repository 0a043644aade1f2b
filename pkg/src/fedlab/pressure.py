"""Partition functions and pressure sequences.

``Z(n, A, f) = Tr exp(log D_n - n f(s_n(A)))`` with ``D_n`` the local density of
the reference state and ``s_n(A) = (1/n) sum_{k=0}^{n-l} gamma^k(A)``.  Singular
densities are handled on their support.  The companion functional uses
``log Tr(D_n exp(-sum_k gamma^k(A)))`` with the same translates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import WindowError
from .interactions import Interaction, local_hamiltonian
from .operators import (
    DENSE_DIM_CAP,
    DIAGONAL_DIM_CAP,
    ChainOperator,
    check_dimension,
    log_trace_density_exp,
    matrix_function,
    min_dominating_lambda,
    perturbed_trace_exp,
    translate,
)
from .sequences import PressureSequence, extrapolate_limit, fit_inverse_powers
from .states import BufferedGibbs, FCSTriple, FinitelyCorrelated, LocalGibbs, fcs_alpha, local_density

__all__ = [
    "PressureSequence", "ScalarFunction", "extrapolate_limit", "fit_inverse_powers",
    "golden_thompson_gap", "interaction_pressure", "lambda_sandwich", "log_partition",
    "p_tilde_sequence", "partition_Z", "perturbed_interaction_pressure", "pressure_sequence",
    "s_n_observable", "subadditive_bound", "translation_sum", "derivative_probe",
]


@dataclass(frozen=True)
class ScalarFunction:
    """Polynomial ``f(x) = sum_k coeffs[k] x**k`` with a display name."""

    coeffs: tuple[float, ...]
    name: str = "polynomial"

    @classmethod
    def identity(cls) -> ScalarFunction:
        return cls((0.0, 1.0), "identity")

    @classmethod
    def square(cls) -> ScalarFunction:
        return cls((0.0, 0.0, 1.0), "square")

    @classmethod
    def constant(cls, c: float) -> ScalarFunction:
        return cls((float(c),), "constant")

    @classmethod
    def polynomial(cls, coeffs: Sequence[float]) -> ScalarFunction:
        return cls(tuple(float(c) for c in coeffs), "polynomial")

    @property
    def is_identity(self) -> bool:
        c = list(self.coeffs)
        while len(c) > 2 and c[-1] == 0:
            c.pop()
        return c == [0.0, 1.0]

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def describe(self) -> str:
        return f"{self.name}{list(self.coeffs)}"


def _at_origin(A: ChainOperator) -> ChainOperator:
    return A if A.window[0] == 1 else translate(A, 1 - A.window[0])


def translation_sum(A: ChainOperator, n: int) -> ChainOperator:
    """``sum_{k=0}^{n-l} gamma^k(A)`` on ``[1, n]``."""
    A = _at_origin(A)
    l, d = A.n_sites, A.site_dim
    if n < l:
        raise WindowError(f"n = {n} is smaller than the observable length {l}")
    check_dimension(d, n, DIAGONAL_DIM_CAP if A.is_diagonal else DENSE_DIM_CAP)
    dl = d**l
    # accumulate I_left (x) A (x) I_right in place through reshaped views
    if A.is_diagonal:
        acc = np.zeros(d**n, dtype=A.data.dtype)
        for k in range(n - l + 1):
            acc.reshape(d**k, dl, -1)[...] += A.data[None, :, None]
        return ChainOperator(acc, (1, n), d)
    acc = np.zeros((d**n, d**n), dtype=A.data.dtype)
    for k in range(n - l + 1):
        left, right = d**k, d ** (n - l - k)
        view = acc.reshape(left, dl, right, left, dl, right)
        np.einsum("aibajb->abij", view)[...] += A.data
    return ChainOperator(acc, (1, n), d)


def s_n_observable(A: ChainOperator, n: int) -> ChainOperator:
    return translation_sum(A, n) / n


def _perturbation(A: ChainOperator, f: ScalarFunction, n: int) -> ChainOperator:
    S = translation_sum(A, n)
    if f.is_identity:
        return S
    return matrix_function(S / n, f) * n


def log_partition(state, A: ChainOperator, f: ScalarFunction, n: int) -> float:
    D = local_density(state, n)
    return perturbed_trace_exp(D, _perturbation(A, f, n), with_density=False).log_z


def partition_Z(state, A: ChainOperator, f: ScalarFunction, n: int) -> float:
    return float(np.exp(log_partition(state, A, f, n)))


def _maybe_extrapolate(seq: PressureSequence, degree: int) -> PressureSequence:
    if len(seq.entries) >= max(3, degree + 2):
        extrapolate_limit(seq, degree)
    return seq


def pressure_sequence(
    state, A: ChainOperator, f: ScalarFunction, n_range: Sequence[int], degree: int = 1
) -> PressureSequence:
    entries = [(n, log_partition(state, A, f, n) / n) for n in n_range]
    meta = {"kind": "pressure", "state": type(state).__name__, "f": f.describe(),
            "observable_window": A.window}
    return _maybe_extrapolate(PressureSequence(entries, meta), degree)


def p_tilde_sequence(state, A: ChainOperator, n_range: Sequence[int], degree: int = 1) -> PressureSequence:
    entries = []
    for n in n_range:
        D = local_density(state, n)
        entries.append((n, log_trace_density_exp(D, translation_sum(A, n)) / n))
    meta = {"kind": "p_tilde", "state": type(state).__name__, "observable_window": A.window}
    return _maybe_extrapolate(PressureSequence(entries, meta), degree)


def golden_thompson_gap(state, A: ChainOperator, n: int) -> tuple[float, float, float]:
    """``(p_n, p~_n, p~_n - p_n)``; the gap is non-negative."""
    D = local_density(state, n)
    S = translation_sum(A, n)
    p = perturbed_trace_exp(D, S, with_density=False).log_z / n
    pt = log_trace_density_exp(D, S) / n
    return p, pt, pt - p


def subadditive_bound(f: FCSTriple, A: ChainOperator, m: int) -> tuple[float, float]:
    """``(p_2m(A), p_m(A) + log(alpha)/m + (l-1)||A||/m)`` for the FCS generated by ``f``.

    The first never exceeds the second: ``D_2m <= alpha D_m (x) D_m`` and the
    translation sum splits into two halves plus ``l-1`` straddling terms.
    """
    state = FinitelyCorrelated(f)
    l = A.n_sites
    lhs = log_partition(state, A, ScalarFunction.identity(), 2 * m) / (2 * m)
    p_m = log_partition(state, A, ScalarFunction.identity(), m) / m
    alpha = fcs_alpha(f, m)
    return lhs, p_m + math.log(alpha) / m + (l - 1) * A.norm() / m


def _log_trace_exp_minus(H: ChainOperator) -> float:
    return float(logsumexp(-H.eigenvalues))


def interaction_pressure(phi: Interaction, n_range: Sequence[int], degree: int = 1) -> PressureSequence:
    entries = [(n, _log_trace_exp_minus(local_hamiltonian(phi, (1, n))) / n) for n in n_range]
    meta = {"kind": "interaction_pressure", "range": phi.range, "site_dim": phi.site_dim}
    return _maybe_extrapolate(PressureSequence(entries, meta), degree)


def perturbed_interaction_pressure(
    phi: Interaction, psi: Interaction, n_range: Sequence[int],
    buffer: int | None = None, reference: float | None = None, degree: int = 1,
) -> tuple[PressureSequence, float]:
    """Sequence ``(1/n) log Tr exp(log D_n - H_n(psi))`` for the buffered Gibbs state of ``phi``.

    The residual compares the extrapolated limit with ``reference``; when no
    reference is given, ``P(phi + psi) - P(phi)`` is extrapolated from finite
    volumes on the same ``n_range``.
    """
    state = BufferedGibbs(phi, buffer)
    entries, buffers = [], []
    for n in n_range:
        D = local_density(state, n)
        H = local_hamiltonian(psi, (1, n))
        entries.append((n, perturbed_trace_exp(D, H, with_density=False).log_z / n))
        buffers.append(state.buffer_used(n))
    seq = PressureSequence(entries, {"kind": "perturbed_interaction_pressure", "buffers": buffers})
    extrapolate_limit(seq, degree)
    if reference is None:
        reference = (
            interaction_pressure(phi + psi, n_range, degree).limit
            - interaction_pressure(phi, n_range, degree).limit
        )
    seq.metadata["reference"] = reference
    return seq, abs(seq.limit - reference)


def lambda_sandwich(phi: Interaction, psi: Interaction, n: int, buffer: int | None = None) -> tuple[float, float]:
    """``(|difference of the two perturbed pressures|, log(lambda_n)/n)``.

    One uses the buffered Gibbs density, the other the local Gibbs density;
    ``lambda_n`` is their mutual domination constant.
    """
    Db = local_density(BufferedGibbs(phi, buffer), n)
    Dg = local_density(LocalGibbs(phi), n)
    H = local_hamiltonian(psi, (1, n))
    lb = perturbed_trace_exp(Db, H, with_density=False).log_z
    lg = perturbed_trace_exp(Dg, H, with_density=False).log_z
    lam = min_dominating_lambda(Dg, Db)
    return abs(lb - lg) / n, float(np.log(lam)) / n


def derivative_probe(state, A: ChainOperator, n: int, t: float, h: float = 1e-4) -> tuple[float, float]:
    """Central difference of ``t -> (1/n) log Z(n, tA)`` and ``-<s_n(A)>`` in the perturbed state."""
    D = local_density(state, n)
    S = translation_sum(A, n)
    up = perturbed_trace_exp(D, S * (t + h), with_density=False).log_z / n
    dn = perturbed_trace_exp(D, S * (t - h), with_density=False).log_z / n
    rho = perturbed_trace_exp(D, S * t).density
    return (up - dn) / (2 * h), -S.expectation(rho) / n
