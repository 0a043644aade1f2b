"""Translation-invariant states with computable local densities, and entropies.

Every model exposes ``local_density(n)``, the density of its restriction to
sites ``[1, n]``.  Finitely correlated states use a memory algebra given as a
block-diagonal subalgebra of ``M_N``; quantum Markov states are specified by
block data ``(d_i, m_i)`` and positive matrices ``T_ij``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import InvalidModelError
from .interactions import Interaction, local_hamiltonian
from .operators import (
    DENSE_DIM_CAP,
    DIAGONAL_DIM_CAP,
    SUPPORT_CUTOFF,
    ChainOperator,
    _eigh_parts,
    as_window,
    check_dimension,
    matrix_function,
    max_generalized_ratio,
    partial_trace,
    tensor,
    translate,
)
from .sequences import PressureSequence

BUFFER_TOL = 1e-6
BUFFER_DIM_CAP = 4096
FCS_DIM_CAP = 4096


# entropies


def entropy(D: ChainOperator) -> float:
    """von Neumann entropy with ``0 log 0 = 0``."""
    w = D.eigenvalues
    w = w[w > 0]
    return float(-np.sum(w * np.log(w)))


def relative_entropy(D1: ChainOperator, D2: ChainOperator) -> float:
    """``Tr D1 (log D1 - log D2)``; ``inf`` when ``supp D1`` is not inside ``supp D2``."""
    if D1.window != D2.window or D1.site_dim != D2.site_dim:
        raise InvalidModelError("relative entropy of densities on different windows")
    if D1.is_diagonal and D2.is_diagonal:
        p, q = D1.data, D2.data
        q_cut = SUPPORT_CUTOFF * float(np.max(q))
        p_pos = p > 0
        if np.any(p[q <= q_cut] > SUPPORT_CUTOFF):
            return math.inf
        m = p_pos & (q > q_cut)
        return max(0.0, float(np.sum(p[m] * (np.log(p[m]) - np.log(q[m])))))
    d1 = D1.matrix
    cross = 0.0
    parts = _eigh_parts(D2.matrix, d1)
    q_cut = SUPPORT_CUTOFF * max(float(np.max(w)) for _, w, _ in parts)
    for idx, w, u in parts:
        c = np.real(np.einsum("ki,kl,li->i", u.conj(), d1[np.ix_(idx, idx)], u))
        keep = w > q_cut
        if np.any(c[~keep] > SUPPORT_CUTOFF):
            return math.inf
        cross += float(np.dot(c[keep], np.log(w[keep])))
    return max(0.0, -entropy(D1) - cross)


# random fixtures


def random_density(
    rng: np.random.Generator, window: int | Sequence[int] = (1, 1), site_dim: int = 2,
    rank: int | None = None, real: bool = False,
) -> ChainOperator:
    w = as_window(window)
    n = site_dim ** (w[1] - w[0] + 1)
    r = n if rank is None else rank
    g = rng.normal(size=(n, r))
    if not real:
        g = g + 1j * rng.normal(size=(n, r))
    m = g @ g.conj().T
    return ChainOperator(m / np.trace(m).real, w, site_dim)


def gibbs_density(H: ChainOperator) -> ChainOperator:
    """``exp(-H)/Tr exp(-H)``, shifted for stability."""
    e_min = float(H.eigenvalues[0])
    E = matrix_function(H, lambda x: np.exp(-(x - e_min)))
    return E / float(np.real(E.trace()))


# state models


@dataclass(frozen=True)
class Product:
    """Infinite tensor product of ``block`` (a density on ``[1, m]``), period ``m``."""

    block: ChainOperator

    def __post_init__(self):
        if abs(self.block.trace() - 1) > 1e-10 or self.block.eigenvalues[0] < -1e-12:
            raise InvalidModelError("product block must be a density")

    @property
    def period(self) -> int:
        return self.block.n_sites

    @property
    def site_dim(self) -> int:
        return self.block.site_dim

    def local_density(self, n: int) -> ChainOperator:
        m = self.period
        check_dimension(self.site_dim, n, DIAGONAL_DIM_CAP if self.block.is_diagonal else DENSE_DIM_CAP)
        k = -(-n // m)
        D = _tensor_power(self.block, k)
        return D if k * m == n else partial_trace(D, (1, n))


@dataclass(frozen=True)
class PeriodizedAverage:
    """``(1/m) sum_k psi o gamma^k`` for ``psi`` the ``m``-periodic product of ``block``."""

    block: ChainOperator

    @property
    def period(self) -> int:
        return self.block.n_sites

    @property
    def site_dim(self) -> int:
        return self.block.site_dim

    def shifted_restriction(self, n: int, k: int) -> ChainOperator:
        """Density of the product state on sites ``[1+k, n+k]``, relabelled to ``[1, n]``."""
        m, B = self.period, self.block
        first, last = k + 1, k + n
        b_first, b_last = (first - 1) // m, (last - 1) // m
        pieces = []
        for b in range(b_first, b_last + 1):
            lo = max(first, b * m + 1) - b * m
            hi = min(last, (b + 1) * m) - b * m
            pieces.append(B if (lo, hi) == (1, m) else partial_trace(B, (lo, hi)))
        out = pieces[0]
        out = ChainOperator(out.data, (1, out.n_sites), out.site_dim)
        for p in pieces[1:]:
            out = tensor(out, ChainOperator(p.data, (out.window[1] + 1, out.window[1] + p.n_sites), p.site_dim))
        return out

    def local_density(self, n: int) -> ChainOperator:
        m = self.period
        check_dimension(self.site_dim, n, DIAGONAL_DIM_CAP if self.block.is_diagonal else DENSE_DIM_CAP)
        acc = self.shifted_restriction(n, 0)
        for k in range(1, m):
            acc = acc + self.shifted_restriction(n, k)
        return acc / m


@dataclass(frozen=True)
class LocalGibbs:
    phi: Interaction

    @property
    def site_dim(self) -> int:
        return self.phi.site_dim

    def local_density(self, n: int) -> ChainOperator:
        cap = DIAGONAL_DIM_CAP if self.phi.is_classical else DENSE_DIM_CAP
        check_dimension(self.site_dim, n, cap)
        return gibbs_density(local_hamiltonian(self.phi, (1, n)))


def default_buffer(phi: Interaction, tol: float = BUFFER_TOL) -> int:
    return 2 * max(phi.range, 1) * math.ceil(math.log(1.0 / tol))


@dataclass(frozen=True)
class BufferedGibbs:
    """Restriction to ``[1, n]`` of the local Gibbs state on ``[1-M, n+M]``.

    ``buffer`` is the requested ``M`` (default from :func:`default_buffer`); it
    is reduced when the buffered window would exceed ``cap``.  The value used
    is reported by :meth:`buffer_used`.
    """

    phi: Interaction
    buffer: int | None = None
    cap: int | None = None

    @property
    def site_dim(self) -> int:
        return self.phi.site_dim

    def _cap(self) -> int:
        if self.cap is not None:
            return self.cap
        return DIAGONAL_DIM_CAP if self.phi.is_classical else BUFFER_DIM_CAP

    def buffer_used(self, n: int) -> int:
        M = default_buffer(self.phi) if self.buffer is None else self.buffer
        d, cap = self.site_dim, self._cap()
        check_dimension(d, n, cap)
        while M > 0 and d ** (n + 2 * M) > cap:
            M -= 1
        return M

    def local_density(self, n: int) -> ChainOperator:
        M = self.buffer_used(n)
        H = local_hamiltonian(self.phi, (1 - M, n + M))
        return partial_trace(gibbs_density(H), (1, n))


# finitely correlated states


def _block_mask(blocks: Sequence[int]) -> np.ndarray:
    N = sum(blocks)
    mask = np.zeros((N, N), dtype=bool)
    o = 0
    for b in blocks:
        mask[o:o + b, o:o + b] = True
        o += b
    return mask


@dataclass(frozen=True)
class FCSTriple:
    """Memory algebra ``B`` (block sizes), map ``E`` and state ``rho``.

    ``E`` has shape ``(N, N, d, d, N, N)`` with
    ``E(A (x) b)[p, q] = sum E[p, q, a, a', r, s] A[a, a'] b[r, s]``, and
    ``rho(b) = Tr(R b)`` with ``R`` block diagonal.
    """

    algebra_blocks: tuple[int, ...]
    E: np.ndarray
    R: np.ndarray
    tol: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "algebra_blocks", tuple(int(b) for b in self.algebra_blocks))
        E = np.array(self.E, dtype=complex)
        R = np.array(self.R, dtype=complex)
        E.flags.writeable = False
        R.flags.writeable = False
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "R", R)
        N = sum(self.algebra_blocks)
        if E.ndim != 6 or E.shape[:2] != (N, N) or E.shape[4:] != (N, N) or E.shape[2] != E.shape[3]:
            raise InvalidModelError(f"E has shape {E.shape}, expected (N,N,d,d,N,N) with N={N}")
        problems = validate_fcs(self)
        if problems:
            raise InvalidModelError("; ".join(problems))

    @property
    def N(self) -> int:
        return sum(self.algebra_blocks)

    @property
    def site_dim(self) -> int:
        return self.E.shape[2]

    def apply(self, A: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.einsum("pqxyrs,xy,rs->pq", self.E, A, b)

    def algebra_basis(self) -> list[np.ndarray]:
        N, out, o = self.N, [], 0
        for b in self.algebra_blocks:
            for r in range(b):
                for s in range(b):
                    e = np.zeros((N, N))
                    e[o + r, o + s] = 1.0
                    out.append(e)
            o += b
        return out


def validate_fcs(f: FCSTriple) -> list[str]:
    """Complete positivity, unitality, stationarity and block compatibility."""
    tol, N, d = f.tol, f.N, f.site_dim
    mask = _block_mask(f.algebra_blocks)
    out = []
    scale = max(1.0, float(np.max(np.abs(f.E))))
    if np.max(np.abs(f.E[~mask]), initial=0.0) > tol * scale:
        out.append("E maps outside the memory algebra")
    if np.max(np.abs(f.E[:, :, :, :, ~mask]), initial=0.0) > tol * scale:
        out.append("E has weight on entries outside the memory algebra")
    if np.max(np.abs(f.R[~mask]), initial=0.0) > tol or abs(np.trace(f.R) - 1) > tol:
        out.append("rho is not a normalized block-diagonal functional")
    if np.linalg.eigvalsh(0.5 * (f.R + f.R.conj().T))[0] < -tol:
        out.append("rho is not positive")
    o = 0
    for b in f.algebra_blocks:
        sl = slice(o, o + b)
        choi = f.E[:, :, :, :, sl, sl].transpose(2, 4, 0, 3, 5, 1).reshape(d * b * N, d * b * N)
        if np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))[0] < -tol:
            out.append(f"E is not completely positive on block at offset {o}")
        o += b
    unit = np.einsum("pqxxrr->pq", f.E)
    if np.max(np.abs(unit - np.eye(N))) > tol:
        out.append("E is not unital")
    for e in f.algebra_basis():
        lhs = np.trace(f.R @ np.einsum("pqxxrs,rs->pq", f.E, e))
        if abs(lhs - np.trace(f.R @ e)) > tol:
            out.append("rho is not stationary under E(1 (x) .)")
            break
    return out


def fcs_density(f: FCSTriple, n: int, cap: int = FCS_DIM_CAP) -> ChainOperator:
    """Density of the FCS on ``[1, n]`` from the matrix-unit evaluations."""
    d = f.site_dim
    check_dimension(d, n, cap)
    # L[A, B] is the functional b -> phi(e_AB (x) b-tail) stored so that
    # Tr(L b) = sum L[s, r] b[r, s]; it starts as rho itself
    L = f.R[None, None, :, :]
    for _ in range(n - 1):
        P = L.shape[0]
        L = np.einsum("ABqp,pqxyrs->AxBysr", L, f.E).reshape(P * d, P * d, f.N, f.N)
    P = L.shape[0]
    phi = np.einsum("ABqp,pqxyrr->AxBy", L, f.E).reshape(P * d, P * d)
    D = phi.T
    if not np.any(np.abs(D.imag) > 1e-14):
        D = D.real
    return ChainOperator(D, (1, n), d)


@dataclass(frozen=True)
class FinitelyCorrelated:
    fcs: FCSTriple

    @property
    def site_dim(self) -> int:
        return self.fcs.site_dim

    def local_density(self, n: int) -> ChainOperator:
        return fcs_density(self.fcs, n)


def product_fcs(rho0: np.ndarray) -> FCSTriple:
    """Trivial memory algebra ``C`` with ``E(A (x) b) = rho0(A) b``."""
    rho0 = np.asarray(rho0)
    E = rho0.T[None, None, :, :, None, None]
    return FCSTriple((1,), E, np.eye(1))


def kraus_fcs(V: np.ndarray, site_dim: int) -> FCSTriple:
    """FCS with ``B = M_D`` and ``E(A (x) b) = V^dag (A (x) b) V``, ``V`` an isometry ``C^D -> C^d (x) C^D``."""
    dD, D = V.shape
    d = site_dim
    Vt = V.reshape(d, D, D)  # (x, r, p)
    E = np.einsum("xrp,ysq->pqxyrs", Vt.conj(), Vt)
    # stationary state of the dual of b -> E(1 (x) b)
    T = np.einsum("pqxxrs->pqrs", E).reshape(D * D, D * D)
    w, vl = scipy.linalg.eig(T, left=True, right=False)
    i = int(np.argmin(np.abs(w - 1.0)))
    R = vl[:, i].conj().reshape(D, D)
    # Tr(R T(b)) = Tr(R b): left eigenvector gives R^T entries
    R = R.T
    R = 0.5 * (R + R.conj().T)
    R = R / np.trace(R)
    if np.linalg.eigvalsh(R)[0] < 0:
        R = -R
    return FCSTriple((D,), E, R)


def random_fcs(rng: np.random.Generator, site_dim: int = 2, bond_dim: int = 2) -> FCSTriple:
    d, D = site_dim, bond_dim
    g = rng.normal(size=(d * D, D)) + 1j * rng.normal(size=(d * D, D))
    V, _ = np.linalg.qr(g)
    return kraus_fcs(V, d)


# quantum Markov states


@dataclass(frozen=True)
class QMSData:
    """Blocks ``(d_i, m_i)``, positive ``T_ij`` on ``M_{m_i} (x) M_{d_j}``, weights ``pi``.

    Site index of ``(a, b)`` in block ``i`` is ``offset_i + a*m_i + b``.
    """

    blocks: tuple[tuple[int, int], ...]
    T: tuple[tuple[np.ndarray, ...], ...]
    weights: np.ndarray
    check_n: int = 4

    def __post_init__(self):
        blocks = tuple((int(a), int(b)) for a, b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        k = len(blocks)
        T = tuple(tuple(np.array(self.T[i][j], dtype=complex) for j in range(k)) for i in range(k))
        for row in T:
            for t in row:
                t.flags.writeable = False
        object.__setattr__(self, "T", T)
        w = np.array(self.weights, dtype=float)
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        problems = validate_qms(self)
        if problems:
            raise InvalidModelError("; ".join(problems))

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def site_dim(self) -> int:
        return sum(d * m for d, m in self.blocks)

    @property
    def offsets(self) -> list[int]:
        out, o = [], 0
        for d, m in self.blocks:
            out.append(o)
            o += d * m
        return out

    def transition(self) -> np.ndarray:
        return np.array([[np.trace(self.T[i][j]).real for j in range(self.k)] for i in range(self.k)])

    def R(self, j: int) -> np.ndarray:
        """``sum_i pi_i Tr_{m_i} T_ij`` on ``C^{d_j}``."""
        dj = self.blocks[j][0]
        out = np.zeros((dj, dj), dtype=complex)
        for i, (_, mi) in enumerate(self.blocks):
            out += self.weights[i] * np.einsum("bxby->xy", self.T[i][j].reshape(mi, dj, mi, dj))
        return out

    def tau(self, i: int) -> np.ndarray:
        """``sum_j Tr_{d_j} T_ij`` on ``C^{m_i}``."""
        mi = self.blocks[i][1]
        out = np.zeros((mi, mi), dtype=complex)
        for j, (dj, _) in enumerate(self.blocks):
            out += np.einsum("xbyb->xy", self.T[i][j].reshape(mi, dj, mi, dj))
        return out

    def site_indices(self, i: int) -> np.ndarray:
        d, m = self.blocks[i]
        return self.offsets[i] + np.arange(d * m)


def validate_qms(q: QMSData, tol: float = 1e-10) -> list[str]:
    out = []
    k = q.k
    if len(q.T) != k or any(len(r) != k for r in q.T):
        return [f"T must be a {k}x{k} table"]
    for i, (di, mi) in enumerate(q.blocks):
        for j, (dj, mj) in enumerate(q.blocks):
            t = q.T[i][j]
            if t.shape != (mi * dj, mi * dj):
                out.append(f"T[{i}][{j}] has shape {t.shape}, expected {(mi * dj, mi * dj)}")
                continue
            if np.max(np.abs(t - t.conj().T)) > tol or np.linalg.eigvalsh(0.5 * (t + t.conj().T))[0] <= 0:
                out.append(f"T[{i}][{j}] is not strictly positive")
    if out:
        return out
    if q.weights.shape != (k,) or np.any(q.weights < 0) or abs(q.weights.sum() - 1) > 1e-12:
        out.append("weights must be a probability vector")
        return out
    P = q.transition()
    if np.max(np.abs(P.sum(axis=1) - 1)) > tol:
        out.append("row sums of Tr T_ij must equal 1")
    if np.max(np.abs(q.weights @ P - q.weights)) > tol:
        out.append("weights are not stationary for P_ij = Tr T_ij")
    if out:
        return out
    prev = None
    for n in range(1, q.check_n + 1):
        if q.site_dim**n > DENSE_DIM_CAP:
            break
        D = qms_density(q, n)
        if abs(D.trace() - 1) > tol:
            out.append(f"density on [1,{n}] has trace {D.trace()}")
        if prev is not None:
            if np.max(np.abs(partial_trace(D, (1, n - 1)).matrix - prev.matrix)) > tol:
                out.append(f"densities on [1,{n - 1}] and [1,{n}] are not compatible")
            if np.max(np.abs(partial_trace(D, (2, n)).data - prev.data)) > tol:
                out.append(f"density on [1,{n}] is not translation invariant")
        prev = D
    return out


def _kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def _path_indices(q: QMSData, path: Sequence[int]) -> np.ndarray:
    """Standard multi-indices of the product of block ranges along ``path``."""
    d = q.site_dim
    idx = np.zeros(1, dtype=np.int64)
    for i in path:
        idx = (idx[:, None] * d + q.site_indices(i)[None, :]).ravel()
    return idx


def qms_density(q: QMSData, n: int) -> ChainOperator:
    """Local density on ``[1, n]``, assembled path by path."""
    d = q.site_dim
    check_dimension(d, n)
    out = np.zeros((d**n, d**n), dtype=complex)
    k = q.k
    for path in itertools.product(range(k), repeat=n):
        factors = [q.R(path[0])]
        factors += [q.T[a][b] for a, b in zip(path, path[1:])]
        factors.append(q.tau(path[-1]))
        idx = _path_indices(q, path)
        out[np.ix_(idx, idx)] = _kron_all(factors)
    if not np.any(np.abs(out.imag) > 1e-14):
        out = out.real
    return ChainOperator(out, (1, n), d)


@dataclass(frozen=True)
class QuantumMarkov:
    qms: QMSData

    @property
    def site_dim(self) -> int:
        return self.qms.site_dim

    def local_density(self, n: int) -> ChainOperator:
        return qms_density(self.qms, n)


def qms_to_fcs(q: QMSData) -> FCSTriple:
    """The FCS with memory ``B = (+)_j M_{d_j}`` generating the same state."""
    blocks = tuple(dj for dj, _ in q.blocks)
    N, d = sum(blocks), q.site_dim
    boff = np.concatenate([[0], np.cumsum(blocks)])[:-1]
    E = np.zeros((N, N, d, d, N, N), dtype=complex)
    for i, (di, mi) in enumerate(q.blocks):
        for j, (dj, mj) in enumerate(q.blocks):
            t = q.T[i][j].reshape(mi, dj, mi, dj)  # (beta, c, beta', c')
            for x, xp, beta, betap, c, cp in itertools.product(
                range(di), range(di), range(mi), range(mi), range(dj), range(dj)
            ):
                a = q.offsets[i] + x * mi + beta
                ap = q.offsets[i] + xp * mi + betap
                E[boff[i] + x, boff[i] + xp, a, ap, boff[j] + c, boff[j] + cp] = t[betap, cp, beta, c]
    R = scipy.linalg.block_diag(*[q.R(j) for j in range(q.k)])
    return FCSTriple(blocks, E, R)


def _stationary(P: np.ndarray) -> np.ndarray:
    w, v = scipy.linalg.eig(P.T)
    pi = np.real(v[:, int(np.argmin(np.abs(w - 1.0)))])
    return pi / pi.sum()


def classical_markov_qms(P: np.ndarray) -> QMSData:
    """Diagonal QMS with one-dimensional blocks; ``T_ij = [P_ij]``."""
    P = np.asarray(P, dtype=float)
    k = P.shape[0]
    T = [[np.array([[P[i, j]]]) for j in range(k)] for i in range(k)]
    return QMSData(tuple((1, 1) for _ in range(k)), T, _stationary(P))


def random_qms(
    rng: np.random.Generator, blocks: Sequence[tuple[int, int]], real: bool = True
) -> QMSData:
    """Random strictly positive ``T_ij`` with unit row sums of ``Tr T_ij``."""
    k = len(blocks)
    T = [[None] * k for _ in range(k)]
    for i, (_, mi) in enumerate(blocks):
        for j, (dj, _) in enumerate(blocks):
            n = mi * dj
            g = rng.normal(size=(n, n))
            if not real:
                g = g + 1j * rng.normal(size=(n, n))
            T[i][j] = g @ g.conj().T + 0.1 * np.eye(n)
        s = sum(np.trace(t).real for t in T[i])
        T[i] = [t / s for t in T[i]]
    P = np.array([[np.trace(T[i][j]).real for j in range(k)] for i in range(k)])
    return QMSData(tuple(blocks), T, _stationary(P))


# tilde algebra


@dataclass(frozen=True)
class TildeSector:
    """Sector ``(i, j)`` of the tilde algebra: ``C^{m_i} (x) (C^d)^L (x) C^{d_j}``."""

    first: int
    last: int
    matrix: np.ndarray


@dataclass(frozen=True)
class TildeDensity:
    qms: QMSData
    window: tuple[int, int]
    sectors: tuple[TildeSector, ...]

    @property
    def interior(self) -> int:
        return self.window[1] - self.window[0] - 1

    def trace(self) -> float:
        return float(sum(np.trace(s.matrix).real for s in self.sectors))

    def matrix(self) -> np.ndarray:
        return scipy.linalg.block_diag(*[s.matrix for s in self.sectors])

    def embed(self, i: int, j: int, X: np.ndarray) -> ChainOperator:
        """``I_{d_i} (x) X (x) I_{m_j}`` placed in standard coordinates on ``window``."""
        return embed_tilde(self.qms, self.window, i, j, X)

    def standard_density(self) -> ChainOperator:
        """``(I/d_i) (x) D (x) (I/m_j)`` summed over sectors."""
        acc = None
        for s in self.sectors:
            di, mj = self.qms.blocks[s.first][0], self.qms.blocks[s.last][1]
            term = embed_tilde(self.qms, self.window, s.first, s.last, s.matrix).data / (di * mj)
            acc = term if acc is None else acc + term
        return ChainOperator(acc, self.window, self.qms.site_dim)


def _sector_indices(q: QMSData, L: int, path_interior: Sequence[int], i: int, j: int) -> np.ndarray:
    """Positions of an interior path block inside sector ``(i, j)``."""
    mi, dj = q.blocks[i][1], q.blocks[j][0]
    d = q.site_dim
    inner = _path_indices(q, path_interior) if path_interior else np.zeros(1, dtype=np.int64)
    return (
        (np.arange(mi)[:, None, None] * d**L + inner[None, :, None]) * dj
        + np.arange(dj)[None, None, :]
    ).ravel()


def qms_tilde_density(q: QMSData, window: Sequence[int]) -> TildeDensity:
    m, n = as_window(window)
    if n <= m:
        raise InvalidModelError("the tilde density needs n > m")
    L = n - m - 1
    check_dimension(q.site_dim, L + 2)
    k, d = q.k, q.site_dim
    sectors = []
    for i in range(k):
        for j in range(k):
            mi, dj = q.blocks[i][1], q.blocks[j][0]
            S = np.zeros((mi * d**L * dj,) * 2, dtype=complex)
            for inner in itertools.product(range(k), repeat=L):
                path = (i, *inner, j)
                block = q.weights[i] * _kron_all([q.T[a][b] for a, b in zip(path, path[1:])])
                idx = _sector_indices(q, L, inner, i, j)
                S[np.ix_(idx, idx)] = block
            sectors.append(TildeSector(i, j, S))
    return TildeDensity(q, (m, n), tuple(sectors))


def embed_tilde(q: QMSData, window: Sequence[int], i: int, j: int, X: np.ndarray) -> ChainOperator:
    m, n = as_window(window)
    L = n - m - 1
    d = q.site_dim
    di, mi = q.blocks[i]
    dj, mj = q.blocks[j]
    full = np.kron(np.kron(np.eye(di), X), np.eye(mj))
    a = np.arange(di)[:, None, None, None, None]
    b = np.arange(mi)[None, :, None, None, None]
    s = np.arange(d**L)[None, None, :, None, None]
    x = np.arange(dj)[None, None, None, :, None]
    y = np.arange(mj)[None, None, None, None, :]
    site_m = q.offsets[i] + a * mi + b
    site_n = q.offsets[j] + x * mj + y
    idx = ((site_m * d**L + s) * d + site_n).ravel()
    out = np.zeros((d ** (L + 2),) * 2, dtype=full.dtype)
    out[np.ix_(idx, idx)] = full
    return ChainOperator(out, (m, n), d)


@dataclass(frozen=True)
class CentralizerBasis:
    """Commutant of the tilde density, per sector.

    ``projectors`` are spectral projections of each interior-path block
    (refined by the path structure); ``units`` are matrix units ``|u><v|``
    between eigenvectors of equal eigenvalue and span the whole commutant.
    Every element is given as ``(i, j, X)`` in sector coordinates.
    """

    tilde: TildeDensity
    projectors: tuple[tuple[int, int, np.ndarray], ...]
    units: tuple[tuple[int, int, np.ndarray], ...]

    def embedded_projectors(self) -> list[ChainOperator]:
        return [self.tilde.embed(i, j, X) for i, j, X in self.projectors]


def _clusters(w: np.ndarray, tol: float) -> list[np.ndarray]:
    order = np.argsort(w)
    groups, cur = [], [order[0]]
    for a, b in zip(order, order[1:]):
        if w[b] - w[a] <= tol * max(1.0, abs(w[b])):
            cur.append(b)
        else:
            groups.append(np.array(cur))
            cur = [b]
    groups.append(np.array(cur))
    return groups


def centralizer_projectors(q: QMSData, window: Sequence[int], tol: float = 1e-9) -> CentralizerBasis:
    tilde = qms_tilde_density(q, window)
    L, k = tilde.interior, q.k
    projectors, units = [], []
    for sec in tilde.sectors:
        i, j, S = sec.first, sec.last, sec.matrix
        dim = S.shape[0]
        for inner in itertools.product(range(k), repeat=L):
            idx = _sector_indices(q, L, inner, i, j)
            w, u = np.linalg.eigh(S[np.ix_(idx, idx)])
            for g in _clusters(w, tol):
                P = np.zeros((dim, dim), dtype=complex)
                v = u[:, g]
                P[np.ix_(idx, idx)] = v @ v.conj().T
                projectors.append((i, j, P))
        w, u = np.linalg.eigh(S)
        for g in _clusters(w, tol):
            for a in g:
                for b in g:
                    units.append((i, j, np.outer(u[:, a], u[:, b].conj())))
    return CentralizerBasis(tilde, tuple(projectors), tuple(units))


# mixtures and evaluation


@dataclass(frozen=True)
class ErgodicMixture:
    components: tuple[tuple[float, object], ...]

    def __post_init__(self):
        comps = tuple((float(w), s) for w, s in self.components)
        if not comps or any(w < 0 for w, _ in comps) or abs(sum(w for w, _ in comps) - 1) > 1e-12:
            raise InvalidModelError("mixture weights must be non-negative and sum to 1")
        object.__setattr__(self, "components", comps)

    @property
    def site_dim(self) -> int:
        return self.components[0][1].site_dim

    def local_density(self, n: int) -> ChainOperator:
        acc = None
        for w, s in self.components:
            D = local_density(s, n) * w
            acc = D if acc is None else acc + D
        return acc


StateModel = Product | PeriodizedAverage | LocalGibbs | BufferedGibbs | FinitelyCorrelated | QuantumMarkov | ErgodicMixture


def local_density(state, n: int) -> ChainOperator:
    if n < 1:
        raise ValueError("n must be positive")
    return state.local_density(n)


def evaluate(state, A: ChainOperator) -> float:
    """``state(A)`` for a local observable ``A`` on any window.

    Models here are translation invariant except :class:`Product` with period
    ``m > 1``, which is evaluated on the actual window.
    """
    a, b = A.window
    if isinstance(state, Product) and state.period > 1:
        m = state.period
        shift = -((a - 1) // m) * m
        A = translate(A, shift)
        D = partial_trace(state.local_density(A.window[1]), A.window)
    else:
        D = local_density(state, A.n_sites)
        A = translate(A, 1 - a)
    return A.expectation(D)


def product_state(rho: np.ndarray) -> Product:
    rho = np.asarray(rho)
    d = rho.shape[0]
    return Product(ChainOperator(rho, (1, 1), d))


def tracial_state(site_dim: int = 2) -> Product:
    return product_state(np.eye(site_dim) / site_dim)


def periodized_average(block: ChainOperator, m: int | None = None) -> PeriodizedAverage:
    if m is not None and m != block.n_sites:
        raise InvalidModelError(f"block spans {block.n_sites} sites, period given as {m}")
    if abs(block.trace() - 1) > 1e-10 or block.eigenvalues[0] < -1e-12:
        raise InvalidModelError("block must be a density")
    return PeriodizedAverage(ChainOperator(block.data, (1, block.n_sites), block.site_dim))


def _tensor_power(B: ChainOperator, k: int) -> ChainOperator:
    m = B.n_sites
    out = ChainOperator(B.data, (1, m), B.site_dim)
    for j in range(1, k):
        out = tensor(out, ChainOperator(B.data, (j * m + 1, (j + 1) * m), B.site_dim))
    return out


# mean relative entropy and factorization constants


def fcs_alpha(f: FCSTriple, n: int) -> float:
    """Least ``alpha`` with ``D_[1,2n] <= alpha D_[1,n] (x) D_[n+1,2n]``."""
    check_dimension(f.site_dim, 2 * n, FCS_DIM_CAP)
    D2 = fcs_density(f, 2 * n)
    Dn = fcs_density(f, n)
    right = ChainOperator(Dn.data, (n + 1, 2 * n), Dn.site_dim)
    return max(1.0, max_generalized_ratio(D2, tensor(Dn, right)))


def mean_relative_entropy_estimate(
    omega, phi, n_range: Sequence[int], fcs: FCSTriple | None = None,
    alpha_split: int | None = None,
) -> PressureSequence:
    """Entries ``(n, S(omega_n, phi_n)/n)``.

    When ``fcs`` (the triple behind ``phi``) is given, the lower bound
    ``S_M >= S_m/m - log(alpha)/m`` is recorded in the metadata using the
    largest entry as the estimate of ``S_M``.
    """
    entries = []
    for n in n_range:
        s = relative_entropy(local_density(omega, n), local_density(phi, n))
        entries.append((n, s / n))
    meta = {"kind": "mean_relative_entropy", "omega": type(omega).__name__, "phi": type(phi).__name__}
    seq = PressureSequence(entries, meta, allow_infinite=True)
    if fcs is not None:
        split = alpha_split or max(1, min(min(n_range), _max_alpha_split(fcs)))
        alpha = fcs_alpha(fcs, split)
        est = entries[-1][1]
        worst = max(v - math.log(alpha) / n for n, v in entries)
        meta["alpha"] = alpha
        meta["alpha_split"] = split
        meta["bound_slack"] = est - worst
    return seq


def _max_alpha_split(f: FCSTriple) -> int:
    n = 1
    while f.site_dim ** (2 * (n + 1)) <= FCS_DIM_CAP:
        n += 1
    return n


__all__ = [
    "BufferedGibbs", "CentralizerBasis", "ErgodicMixture", "FCSTriple", "FinitelyCorrelated",
    "LocalGibbs", "PeriodizedAverage", "Product", "QMSData", "QuantumMarkov", "StateModel",
    "TildeDensity", "centralizer_projectors", "classical_markov_qms", "default_buffer",
    "embed_tilde", "entropy", "evaluate", "fcs_alpha", "fcs_density", "gibbs_density",
    "kraus_fcs", "local_density", "mean_relative_entropy_estimate", "periodized_average",
    "product_fcs", "product_state", "qms_density", "qms_tilde_density", "qms_to_fcs",
    "random_density", "random_fcs", "random_qms", "relative_entropy", "tracial_state",
]
