"""Dense operator calculus on finite chain segments.

A :class:`ChainOperator` lives on an integer window ``[a, b]`` of sites, each
carrying a ``d``-dimensional Hilbert space.  Site ``a`` is the leftmost Kronecker
factor.  Operators that are exactly diagonal are stored as a 1-D vector, which
keeps classical (commuting) computations cheap at large ``n``.

Hermitian spectral work is done by full eigendecomposition.  Before
diagonalizing, the nonzero pattern is split into connected components so that
block-diagonal operators are handled block by block.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import logsumexp

from .errors import DimensionError, NotHermitianError, SupportError, WindowError

HERMITIAN_TOL = 1e-12
SUPPORT_CUTOFF = 1e-12
DENSE_DIM_CAP = 16384
DIAGONAL_DIM_CAP = 1 << 22

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
IDENTITY_2 = np.eye(2)

Window = tuple[int, int]


def as_window(w: int | Sequence[int]) -> Window:
    if isinstance(w, (int, np.integer)):
        return int(w), int(w)
    a, b = (int(v) for v in w)
    if b < a:
        raise WindowError(f"empty window [{a},{b}]")
    return a, b


def window_length(w: Window) -> int:
    return w[1] - w[0] + 1


def check_dimension(d: int, n_sites: int, cap: int = DENSE_DIM_CAP) -> int:
    dim = d**n_sites
    if dim > cap:
        raise DimensionError(
            f"dimension {d}^{n_sites} = {dim} exceeds cap {cap}", n=n_sites
        )
    return dim


def _frozen(x: np.ndarray) -> np.ndarray:
    x = np.array(x, copy=True)
    x.flags.writeable = False
    return x


def _is_diagonal(m: np.ndarray) -> bool:
    off = m.copy()
    np.fill_diagonal(off, 0)
    return not np.any(off)


class ChainOperator:
    """Operator on the sites ``window[0]..window[1]`` with site dimension ``site_dim``.

    ``matrix`` may be a square 2-D array or a 1-D array holding a diagonal.
    When ``hermitian`` is true the input is validated to ``1e-12`` (relative to
    its max entry) and symmetrized.
    """

    def __init__(
        self,
        matrix: np.ndarray,
        window: int | Sequence[int] = (1, 1),
        site_dim: int = 2,
        hermitian: bool = True,
    ):
        self.window = as_window(window)
        self.site_dim = int(site_dim)
        if self.site_dim < 1:
            raise ValueError("site dimension must be positive")
        dim = self.site_dim ** window_length(self.window)
        m = np.asarray(matrix)
        if m.ndim == 2 and m.shape[0] == m.shape[1] and _is_diagonal(m):
            m = np.diagonal(m)
        if m.ndim == 1:
            if m.shape[0] != dim:
                raise WindowError(f"diagonal length {m.shape[0]} != {dim}")
            if hermitian:
                if np.iscomplexobj(m):
                    scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
                    if np.max(np.abs(m.imag), initial=0.0) > HERMITIAN_TOL * scale:
                        raise NotHermitianError("diagonal has imaginary entries")
                    m = m.real
                m = m.astype(float)
        elif m.ndim == 2:
            if m.shape != (dim, dim):
                raise WindowError(f"matrix shape {m.shape} != ({dim},{dim})")
            if hermitian:
                scale = max(1.0, float(np.max(np.abs(m), initial=0.0)))
                if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
                    raise NotHermitianError("matrix is not Hermitian")
                m = 0.5 * (m + m.conj().T)
                if np.iscomplexobj(m) and not np.any(m.imag):
                    m = m.real
        else:
            raise ValueError("matrix must be 1-D (diagonal) or 2-D")
        self.hermitian = bool(hermitian)
        self._data = _frozen(m)

    # basic attributes

    @property
    def n_sites(self) -> int:
        return window_length(self.window)

    @property
    def dim(self) -> int:
        return self._data.shape[0]

    @property
    def is_diagonal(self) -> bool:
        return self._data.ndim == 1

    @property
    def data(self) -> np.ndarray:
        """Raw storage: diagonal vector or dense matrix (read-only)."""
        return self._data

    @property
    def matrix(self) -> np.ndarray:
        if self.is_diagonal:
            return np.diag(self._data)
        return np.array(self._data)

    def diagonal(self) -> np.ndarray:
        return self._data if self.is_diagonal else np.diagonal(self._data)

    def _like(self, data: np.ndarray, hermitian: bool | None = None) -> ChainOperator:
        return ChainOperator(
            data, self.window, self.site_dim,
            self.hermitian if hermitian is None else hermitian,
        )

    def trace(self) -> complex | float:
        return self.diagonal().sum()

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        if not self.hermitian:
            raise NotHermitianError("eigenvalues requested for a non-Hermitian operator")
        if self.is_diagonal:
            return np.sort(self._data)
        return np.sort(np.concatenate([w for _, w, _ in _eigh_parts(self._data)]))

    def norm(self) -> float:
        """Operator norm."""
        if self.is_diagonal:
            return float(np.max(np.abs(self._data), initial=0.0))
        if self.hermitian:
            ev = self.eigenvalues
            return float(max(abs(ev[0]), abs(ev[-1])))
        return float(np.linalg.norm(self._data, 2))

    def expectation(self, density: ChainOperator) -> float:
        """``Tr(density @ self)``, real part."""
        _same_space(self, density)
        r, a = density._data, self._data
        if self.is_diagonal and density.is_diagonal:
            return float(np.real(np.dot(r, a)))
        if density.is_diagonal:
            return float(np.real(np.dot(r, np.diagonal(a))))
        if self.is_diagonal:
            return float(np.real(np.dot(np.diagonal(r), a)))
        return float(np.real(np.einsum("ij,ji->", r, a)))

    # arithmetic

    def __add__(self, other: ChainOperator) -> ChainOperator:
        _same_space(self, other)
        herm = self.hermitian and other.hermitian
        if self.is_diagonal and other.is_diagonal:
            return self._like(self._data + other._data, herm)
        return self._like(self.matrix + other.matrix, herm)

    def __sub__(self, other: ChainOperator) -> ChainOperator:
        return self + (-1.0) * other

    def __neg__(self) -> ChainOperator:
        return (-1.0) * self

    def __mul__(self, c: float) -> ChainOperator:
        herm = self.hermitian and np.isreal(c)
        return self._like(self._data * (np.real(c) if herm else c), herm)

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> ChainOperator:
        return self * (1.0 / c)

    def __matmul__(self, other: ChainOperator) -> ChainOperator:
        _same_space(self, other)
        if self.is_diagonal and other.is_diagonal:
            return self._like(self._data * other._data, self.hermitian and other.hermitian)
        return ChainOperator(self.matrix @ other.matrix, self.window, self.site_dim, False)

    def dagger(self) -> ChainOperator:
        if self.is_diagonal:
            return self._like(np.conj(self._data))
        return self._like(self._data.conj().T)

    def allclose(self, other: ChainOperator, atol: float = 1e-10) -> bool:
        _same_space(self, other)
        return max_abs_diff(self, other) <= atol

    def __repr__(self) -> str:
        kind = "diag" if self.is_diagonal else "dense"
        return f"ChainOperator(window={self.window}, d={self.site_dim}, {kind}, dim={self.dim})"


def _same_space(a: ChainOperator, b: ChainOperator) -> None:
    if a.window != b.window or a.site_dim != b.site_dim:
        raise WindowError(
            f"operators live on different spaces: {a.window}/d={a.site_dim} vs "
            f"{b.window}/d={b.site_dim}"
        )


def max_abs_diff(a: ChainOperator, b: ChainOperator) -> float:
    _same_space(a, b)
    if a.is_diagonal and b.is_diagonal:
        return float(np.max(np.abs(a.data - b.data), initial=0.0))
    return float(np.max(np.abs(a.matrix - b.matrix), initial=0.0))


def identity(window: int | Sequence[int], site_dim: int = 2) -> ChainOperator:
    w = as_window(window)
    return ChainOperator(np.ones(site_dim ** window_length(w)), w, site_dim)


def zeros(window: int | Sequence[int], site_dim: int = 2) -> ChainOperator:
    w = as_window(window)
    return ChainOperator(np.zeros(site_dim ** window_length(w)), w, site_dim)


def tensor(*ops: ChainOperator) -> ChainOperator:
    """Tensor product of operators on adjacent windows, left to right."""
    out = ops[0]
    for op in ops[1:]:
        if op.site_dim != out.site_dim or op.window[0] != out.window[1] + 1:
            raise WindowError("tensor factors must sit on adjacent windows")
        if out.is_diagonal and op.is_diagonal:
            data = np.kron(out.data, op.data)
        else:
            data = np.kron(out.matrix, op.matrix)
        out = ChainOperator(
            data, (out.window[0], op.window[1]), out.site_dim,
            out.hermitian and op.hermitian,
        )
    return out


# embeddings and translations


def embed_shift(A: ChainOperator, target: int | Sequence[int], k: int = 0) -> ChainOperator:
    """Translate ``A`` by ``k`` sites and pad it with identities to ``target``."""
    t = as_window(target)
    a, b = A.window[0] + k, A.window[1] + k
    if a < t[0] or b > t[1]:
        raise WindowError(f"shifted window [{a},{b}] not inside target {t}")
    d = A.site_dim
    left, right = d ** (a - t[0]), d ** (t[1] - b)
    if A.is_diagonal:
        data = np.kron(np.kron(np.ones(left), A.data), np.ones(right))
    else:
        data = A.data
        if left > 1:
            data = np.kron(np.eye(left), data)
        if right > 1:
            data = np.kron(data, np.eye(right))
    return ChainOperator(data, t, d, A.hermitian)


def translate(A: ChainOperator, k: int) -> ChainOperator:
    """``gamma^k(A)``: the same matrix on the window shifted by ``k``."""
    return ChainOperator(A.data, (A.window[0] + k, A.window[1] + k), A.site_dim, A.hermitian)


def embed_sites(
    op: np.ndarray, sites: Sequence[int], target: int | Sequence[int], site_dim: int = 2,
    hermitian: bool = True,
) -> ChainOperator:
    """Place ``op`` (acting on the listed sites, in order) inside ``target``.

    Sites need not be contiguous; the identity acts on every other site.
    """
    t = as_window(target)
    n = window_length(t)
    sites = [int(s) for s in sites]
    if len(set(sites)) != len(sites) or any(s < t[0] or s > t[1] for s in sites):
        raise WindowError(f"sites {sites} not distinct or not inside {t}")
    d = site_dim
    m = len(sites)
    op = np.asarray(op)
    if op.shape != (d**m, d**m):
        raise WindowError(f"operator shape {op.shape} does not match {m} sites")
    rest = [s for s in range(t[0], t[1] + 1) if s not in sites]
    full = np.kron(op, np.eye(d ** len(rest))).reshape((d,) * (2 * n))
    order = sites + rest
    # axis j of `full` holds site order[j]; move it to position site - t0
    perm = np.argsort([s - t[0] for s in order])
    full = full.transpose(list(perm) + [n + p for p in perm])
    return ChainOperator(full.reshape(d**n, d**n), t, d, hermitian)


def partial_trace(A: ChainOperator, keep: int | Sequence[int]) -> ChainOperator:
    """Trace out every site of ``A.window`` outside ``keep``."""
    k = as_window(keep)
    if k[0] < A.window[0] or k[1] > A.window[1]:
        raise WindowError(f"keep window {k} not inside {A.window}")
    d = A.site_dim
    dl, dk, dr = d ** (k[0] - A.window[0]), d ** window_length(k), d ** (A.window[1] - k[1])
    if A.is_diagonal:
        data = A.data.reshape(dl, dk, dr).sum(axis=(0, 2))
    else:
        data = np.einsum("aibajb->ij", A.data.reshape(dl, dk, dr, dl, dk, dr))
    return ChainOperator(data, k, d, A.hermitian)


# spectral calculus


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


def _components(*mats: np.ndarray) -> list[np.ndarray] | None:
    """Index sets of the connected components of the joint nonzero pattern.

    Returns ``None`` when there is a single component.
    """
    pattern = np.zeros(mats[0].shape, dtype=bool)
    for m in mats:
        pattern |= m != 0
    n_comp, labels = connected_components(csr_matrix(pattern), directed=False)
    if n_comp == 1:
        return None
    order = np.argsort(labels, kind="stable")
    splits = np.flatnonzero(np.diff(labels[order])) + 1
    return np.split(order, splits)


def _eigh_parts(m: np.ndarray, *others: np.ndarray):
    """Blockwise ``eigh`` of ``m``; blocks follow the joint pattern with ``others``."""
    comps = _components(m, *others)
    if comps is None:
        w, u = np.linalg.eigh(m)
        return [(np.arange(m.shape[0]), w, u)]
    parts = []
    for idx in comps:
        w, u = np.linalg.eigh(m[np.ix_(idx, idx)])
        parts.append((idx, w, u))
    return parts


def _require_hermitian(H: ChainOperator) -> None:
    if not H.hermitian:
        raise NotHermitianError("a Hermitian operator is required")


def spectral_decomposition(H: ChainOperator) -> SpectralDecomposition:
    _require_hermitian(H)
    n = H.dim
    if H.is_diagonal:
        order = np.argsort(H.data, kind="stable")
        u = np.zeros((n, n))
        u[order, np.arange(n)] = 1.0
        return SpectralDecomposition(_frozen(H.data[order]), _frozen(u))
    ws, us = [], np.zeros((n, n), dtype=H.data.dtype)
    col = 0
    for idx, w, u in _eigh_parts(H.data):
        us[idx, col:col + len(idx)] = u
        ws.append(w)
        col += len(idx)
    w = np.concatenate(ws)
    order = np.argsort(w, kind="stable")
    return SpectralDecomposition(_frozen(w[order]), _frozen(us[:, order]))


def _apply_parts(parts, n: int, values: Callable[[np.ndarray], np.ndarray], dtype) -> np.ndarray:
    out = np.zeros((n, n), dtype=dtype)
    for idx, w, u in parts:
        fw = values(w)
        out[np.ix_(idx, idx)] = (u * fw) @ u.conj().T
    return out


def matrix_function(H: ChainOperator, f: Callable[[np.ndarray], np.ndarray]) -> ChainOperator:
    """``U f(Lambda) U^dagger``; ``f`` must accept and return real arrays."""
    _require_hermitian(H)
    if H.is_diagonal:
        return H._like(np.asarray(f(H.data), dtype=float))
    parts = _eigh_parts(H.data)
    probe = np.asarray(f(parts[0][1]))
    dtype = np.result_type(H.data.dtype, probe.dtype)
    return ChainOperator(
        _apply_parts(parts, H.dim, f, dtype), H.window, H.site_dim,
        not np.iscomplexobj(probe),
    )


def _check_density(D: ChainOperator, parts) -> float:
    """Validate ``D >= 0``, ``D != 0``; return the largest eigenvalue."""
    all_w = np.concatenate([w for _, w, _ in parts])
    w_max = float(np.max(all_w))
    w_abs = float(np.max(np.abs(all_w)))
    if w_abs == 0.0 or w_max <= 0.0:
        raise SupportError("density operator is zero (or has no positive part)")
    if float(np.min(all_w)) < -HERMITIAN_TOL * w_abs:
        raise SupportError(f"density has a negative eigenvalue {float(np.min(all_w)):.3e}")
    return w_max


@dataclass(frozen=True)
class PerturbedTrace:
    z: float
    log_z: float
    density: ChainOperator | None


def perturbed_trace_exp(
    D: ChainOperator, B: ChainOperator, with_density: bool = True
) -> PerturbedTrace:
    """``Tr P exp(P log(D) P - P B P)`` with ``P`` the support projection of ``D``.

    Also returns the normalized perturbed density ``exp(...)/Z``, which lives
    on the support of ``D``.
    """
    _same_space(D, B)
    _require_hermitian(D)
    _require_hermitian(B)
    n = D.dim
    if D.is_diagonal:
        w = D.data
        w_max = _check_density(D, [(None, w, None)])
        mask = w > SUPPORT_CUTOFF * w_max
        idx = np.flatnonzero(mask)
        logw = np.log(w[idx])
        if B.is_diagonal:
            g = logw - B.data[idx]
            log_z = float(logsumexp(g))
            dens = None
            if with_density:
                out = np.zeros(n)
                out[idx] = np.exp(g - log_z)
                dens = D._like(out, True)
            return PerturbedTrace(float(np.exp(log_z)), log_z, dens)
        h = np.diag(logw) - B.data[np.ix_(idx, idx)]
        parts = _eigh_parts(h)
        log_z = float(logsumexp(np.concatenate([p[1] for p in parts])))
        dens = None
        if with_density:
            out = np.zeros((n, n), dtype=h.dtype)
            out[np.ix_(idx, idx)] = _apply_parts(parts, len(idx), lambda e: np.exp(e - log_z), h.dtype)
            dens = ChainOperator(out, D.window, D.site_dim)
        return PerturbedTrace(float(np.exp(log_z)), log_z, dens)

    b = B.matrix
    d_parts = _eigh_parts(D.data, b)
    w_max = _check_density(D, d_parts)
    cut = SUPPORT_CUTOFF * w_max
    logs, blocks = [], []
    for idx, w, u in d_parts:
        keep = w > cut
        if not np.any(keep):
            continue
        v = u[:, keep]
        h = np.diag(np.log(w[keep])) - v.conj().T @ b[np.ix_(idx, idx)] @ v
        h = 0.5 * (h + h.conj().T)
        e, q = np.linalg.eigh(h)
        logs.append(e)
        blocks.append((idx, v @ q, e))
    log_z = float(logsumexp(np.concatenate(logs)))
    dens = None
    if with_density:
        dtype = np.result_type(D.data.dtype, b.dtype)
        out = np.zeros((n, n), dtype=dtype)
        for idx, vq, e in blocks:
            out[np.ix_(idx, idx)] = (vq * np.exp(e - log_z)) @ vq.conj().T
        dens = ChainOperator(out, D.window, D.site_dim)
    return PerturbedTrace(float(np.exp(log_z)), log_z, dens)


def log_trace_density_exp(D: ChainOperator, H: ChainOperator) -> float:
    """``log Tr(D exp(-H))`` computed without overflow."""
    _same_space(D, H)
    if H.is_diagonal:
        c, e = np.real(D.diagonal()), H.data
    else:
        dm = D.matrix
        cs, es = [], []
        for idx, w, u in _eigh_parts(H.data, dm):
            sub = dm[np.ix_(idx, idx)]
            cs.append(np.real(np.einsum("ki,kl,li->i", u.conj(), sub, u)))
            es.append(w)
        c, e = np.concatenate(cs), np.concatenate(es)
    pos = c > 0
    if not np.any(pos):
        raise SupportError("Tr(D exp(-H)) vanishes")
    return float(logsumexp(-e[pos] + np.log(c[pos])))


def _strictly_positive(D: ChainOperator, name: str) -> None:
    ev = D.eigenvalues
    if ev[0] <= 1e-13:
        raise SupportError(
            f"{name} is singular (min eigenvalue {ev[0]:.3e}); "
            "use a support-restricted comparison such as max_generalized_ratio"
        )


def min_dominating_lambda(D_ref: ChainOperator, D_test: ChainOperator) -> float:
    """Least ``lambda >= 1`` with ``D_ref/lambda <= D_test <= lambda D_ref``."""
    _same_space(D_ref, D_test)
    _strictly_positive(D_ref, "D_ref")
    _strictly_positive(D_test, "D_test")
    if D_ref.is_diagonal and D_test.is_diagonal:
        r = D_test.data / D_ref.data
        lam = max(float(np.max(r)), float(np.max(1.0 / r)))
    else:
        g = scipy.linalg.eigh(D_test.matrix, D_ref.matrix, eigvals_only=True)
        lam = max(float(g[-1]), 1.0 / float(g[0]))
    return max(lam, 1.0)


def max_generalized_ratio(num: ChainOperator, den: ChainOperator, tol: float = 1e-10) -> float:
    """Least ``alpha`` with ``num <= alpha * den``; ``inf`` if ``num`` leaves supp(den).

    ``den`` may be singular; the comparison is restricted to its support.
    """
    _same_space(num, den)
    if num.is_diagonal and den.is_diagonal:
        dv, nv = den.data, num.data
        mask = dv > SUPPORT_CUTOFF * float(np.max(dv))
        if np.any(nv[~mask] > tol * float(np.max(np.abs(nv)))):
            return float("inf")
        return float(np.max(nv[mask] / dv[mask]))
    nm = num.matrix
    best = 0.0
    parts = _eigh_parts(den.matrix, nm)
    w_max = max(float(np.max(w)) for _, w, _ in parts)
    scale = float(np.max(np.abs(nm)))
    for idx, w, u in parts:
        keep = w > SUPPORT_CUTOFF * w_max
        sub = u.conj().T @ nm[np.ix_(idx, idx)] @ u
        off = sub[np.ix_(~keep, ~keep)]
        if off.size and np.max(np.abs(off)) > tol * scale:
            return float("inf")
        if not np.any(keep):
            continue
        s = 1.0 / np.sqrt(w[keep])
        m = (s[:, None] * sub[np.ix_(keep, keep)]) * s[None, :]
        best = max(best, float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[-1]))
    return best
