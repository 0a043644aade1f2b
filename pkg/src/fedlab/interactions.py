"""Translation-invariant finite-range interactions.

An interaction is stored by one generator per translation orbit: a finite set
``X`` with ``min(X) == 0`` together with a Hermitian operator on the interval
hull ``[0, max(X)]`` that acts trivially off ``X``.  The term for ``X + k`` is the
translate by ``k``.  ``range`` is the largest hull length, so a nearest-neighbour
interaction has range 2.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import InvalidModelError
from .operators import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ChainOperator,
    as_window,
    embed_shift,
    embed_sites,
    zeros,
)


def _canonical(X: Iterable[int]) -> tuple[int, ...]:
    xs = sorted({int(x) for x in X})
    if not xs:
        raise InvalidModelError("interaction support must be non-empty")
    return tuple(x - xs[0] for x in xs)


class Interaction:
    """Finite-range translation-invariant interaction.

    ``terms`` maps a set ``X`` to a matrix on its hull (``d**(max X - min X + 1)``
    square) or to a :class:`ChainOperator`.  Sets that are translates of each
    other are merged by adding their terms.
    """

    def __init__(self, site_dim: int, terms: Mapping[Sequence[int], np.ndarray | ChainOperator] | None = None):
        self.site_dim = int(site_dim)
        merged: dict[tuple[int, ...], np.ndarray] = {}
        for X, op in (terms or {}).items():
            key = _canonical(X)
            data = op.matrix if isinstance(op, ChainOperator) else np.asarray(op)
            c = ChainOperator(data, (0, key[-1]), self.site_dim)  # validates hermiticity
            merged[key] = merged[key] + c.matrix if key in merged else c.matrix
        self._terms = {
            X: ChainOperator(m, (0, X[-1]), self.site_dim)
            for X, m in sorted(merged.items())
            if np.any(m)
        }

    @classmethod
    def from_site_operators(cls, site_dim: int, terms: Mapping[Sequence[int], np.ndarray]) -> Interaction:
        """Build from operators acting only on the sites of ``X`` (in increasing order)."""
        out = {}
        for X, op in terms.items():
            key = _canonical(X)
            out[key] = embed_sites(op, list(key), (0, key[-1]), site_dim).matrix
        return cls(site_dim, out)

    @property
    def terms(self) -> dict[tuple[int, ...], ChainOperator]:
        return dict(self._terms)

    def items(self) -> Iterator[tuple[tuple[int, ...], ChainOperator]]:
        return iter(self._terms.items())

    @property
    def range(self) -> int:
        return max((X[-1] + 1 for X in self._terms), default=0)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def is_classical(self) -> bool:
        return all(op.is_diagonal for op in self._terms.values())

    def __add__(self, other: Interaction) -> Interaction:
        if other.site_dim != self.site_dim:
            raise InvalidModelError("site dimensions differ")
        terms = {X: op.matrix for X, op in self._terms.items()}
        for X, op in other._terms.items():
            terms[X] = terms[X] + op.matrix if X in terms else op.matrix
        return Interaction(self.site_dim, terms)

    def __mul__(self, c: float) -> Interaction:
        return Interaction(self.site_dim, {X: float(c) * op.matrix for X, op in self._terms.items()})

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Interaction(d={self.site_dim}, range={self.range}, sets={list(self._terms)})"


def local_hamiltonian(phi: Interaction, window: int | Sequence[int]) -> ChainOperator:
    """Sum of all translates ``Phi(X + k)`` with ``X + k`` inside ``window``."""
    w = as_window(window)
    H = zeros(w, phi.site_dim)
    for X, op in phi.items():
        for k in range(w[0], w[1] - X[-1] + 1):
            H = H + embed_shift(op, w, k)
    return H


def surface_energy(phi: Interaction, window: int | Sequence[int]) -> ChainOperator:
    """Terms meeting both ``window`` and its complement, on the collar around it."""
    w = as_window(window)
    pad = max(phi.range - 1, 0)
    outer = (w[0] - pad, w[1] + pad)
    W = zeros(outer, phi.site_dim)
    for X, op in phi.items():
        for k in range(outer[0], outer[1] - X[-1] + 1):
            inside = sum(1 for x in X if w[0] <= x + k <= w[1])
            if 0 < inside < len(X):
                W = W + embed_shift(op, outer, k)
    return W


def mean_energy_observable(phi: Interaction) -> ChainOperator:
    """``sum over X containing 0 of Phi(X)/|X|`` on ``[-(range-1), range-1]``."""
    r = max(phi.range, 1)
    w = (-(r - 1), r - 1)
    A = zeros(w, phi.site_dim)
    for X, op in phi.items():
        for x in X:
            A = A + embed_shift(op, w, -x) / len(X)
    return A


def observable_to_interaction(A: ChainOperator) -> Interaction:
    """The interaction whose only generator is ``A`` on ``[0, l-1]``."""
    return Interaction(A.site_dim, {tuple(range(A.n_sites)): A.matrix})


def interaction_norm(phi: Interaction) -> float:
    """``sum_{X containing 0} ||Phi(X)|| + sup_n ||W_[1,n]||``.

    For ``n >= 2*range - 2`` the two boundary collars are disjoint and the
    surface energy is a fixed sum of commuting pieces, so the supremum is
    attained among ``n = 1 .. 2*range - 1``.
    """
    if phi.is_zero:
        return 0.0
    local = sum(len(X) * op.norm() for X, op in phi.items())
    n_max = max(1, 2 * phi.range - 1)
    sup_w = max(surface_energy(phi, (1, n)).norm() for n in range(1, n_max + 1))
    return float(local + sup_w)


# common fixtures


def ising(coupling: float, field: float = 0.0) -> Interaction:
    """``-coupling * sz sz - field * sz`` (classical, diagonal)."""
    terms = {(0, 1): -coupling * np.kron(SIGMA_Z, SIGMA_Z)}
    if field:
        terms[(0,)] = -field * SIGMA_Z
    return Interaction(2, terms)


def heisenberg(coupling: float, field: float = 0.0) -> Interaction:
    xx = np.kron(SIGMA_X, SIGMA_X) + np.real(np.kron(SIGMA_Y, SIGMA_Y)) + np.kron(SIGMA_Z, SIGMA_Z)
    terms = {(0, 1): coupling * xx}
    if field:
        terms[(0,)] = -field * SIGMA_Z
    return Interaction(2, terms)


def transverse_ising(coupling: float, field: float) -> Interaction:
    return Interaction(2, {(0, 1): -coupling * np.kron(SIGMA_Z, SIGMA_Z), (0,): -field * SIGMA_X})


def random_interaction(rng: np.random.Generator, site_dim: int = 2, range_: int = 2, scale: float = 1.0) -> Interaction:
    """Random Hermitian generators on every interval ``[0, r-1]``, ``r <= range_``."""
    terms = {}
    for r in range(1, range_ + 1):
        n = site_dim**r
        m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        terms[tuple(range(r))] = scale * (m + m.conj().T) / (2 * np.sqrt(n))
    return Interaction(site_dim, terms)

