"""Rate functions, Legendre duality and variational lower bounds."""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from .operators import ChainOperator, matrix_function, perturbed_trace_exp, tensor, translate
from .pressure import ScalarFunction, s_n_observable, translation_sum
from .sequences import fit_inverse_powers, fmt
from .states import (
    ErgodicMixture,
    PeriodizedAverage,
    Product,
    entropy,
    evaluate,
    gibbs_density,
    local_density,
    random_density,
    relative_entropy,
)

log = logging.getLogger(__name__)

DEFAULT_T_POINTS = 1201
DEFAULT_T_MAX = 30.0
DEFAULT_X_POINTS = 201


# Legendre machinery


def default_t_grid(points: int = DEFAULT_T_POINTS, t_max: float = DEFAULT_T_MAX) -> np.ndarray:
    if points % 2 == 0:
        points += 1  # keep t = 0 on the grid
    return np.linspace(-t_max, t_max, points)


def default_x_grid(A: ChainOperator, points: int = DEFAULT_X_POINTS) -> np.ndarray:
    ev = A.eigenvalues
    return np.linspace(ev[0], ev[-1], points)


def legendre_transform(g: Sequence[float], t_grid: Sequence[float], x_grid: Sequence[float]) -> np.ndarray:
    """``I(x) = max_t {-t x - g(t)}`` over the grid."""
    t = np.asarray(t_grid, dtype=float)
    g = np.asarray(g, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    if t.size == 0 or x.size == 0:
        raise ValueError("empty grid")
    if g.shape != t.shape or not np.all(np.isfinite(g)):
        raise ValueError("g must be finite and match the t grid")
    return np.max(-np.outer(x, t) - g[None, :], axis=1)


def inverse_legendre(I: Sequence[float], x_grid: Sequence[float], t_grid: Sequence[float]) -> np.ndarray:
    """``g(t) = max_x {-t x - I(x)}`` over the finite part of ``I``."""
    I = np.asarray(I, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    ok = np.isfinite(I)
    if not np.any(ok):
        raise ValueError("rate function is infinite everywhere")
    return np.max(-np.outer(t, x[ok]) - I[ok][None, :], axis=1)


def lower_convex_envelope(t_grid: Sequence[float], g: Sequence[float]) -> np.ndarray:
    """Greatest convex minorant of grid data, evaluated on the grid."""
    t = np.asarray(t_grid, dtype=float)
    g = np.asarray(g, dtype=float)
    hull: list[int] = []
    for i in range(len(t)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            if (g[b] - g[a]) * (t[i] - t[a]) >= (g[i] - g[a]) * (t[b] - t[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(t, t[hull], g[hull])


@dataclass
class RoundTrip:
    error: float
    tolerance: float
    compared: int
    interior: int

    @property
    def ok(self) -> bool:
        return self.error <= self.tolerance


def legendre_round_trip_error(
    g: Sequence[float], t_grid: Sequence[float], x_grid: Sequence[float], window: int = 2
) -> RoundTrip:
    """Biconjugate over the x grid against the lower convex envelope of ``g``.

    Between the tangency points of two neighbouring x-grid slopes the
    biconjugate is piecewise linear, so its error there is at most
    ``dx * spread / 4``.  The comparison uses interior points whose envelope
    slope lies in the x range and changes by at least ``dx`` within
    ``+-window`` steps (spread ``<= 2*window*dt``), where the bound
    ``2*dt*dx`` applies.
    """
    t = np.asarray(t_grid, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    env = lower_convex_envelope(t, g)
    back = inverse_legendre(legendre_transform(g, t, x), x, t)
    slopes = np.diff(env) / np.diff(t)
    dt = float(np.max(np.diff(t)))
    dx = float(np.max(np.diff(x)))
    inner = np.arange(1, len(t) - 1)
    left, right = slopes[inner - 1], slopes[inner]
    in_range = (-right >= x[0] - 1e-12) & (-left <= x[-1] + 1e-12)
    lo = slopes[np.maximum(inner - window, 0)]
    hi = slopes[np.minimum(inner + window - 1, len(slopes) - 1)]
    resolved = hi - lo >= dx
    idx = inner[in_range & resolved]
    err = float(np.max(np.abs(back[idx] - env[idx]), initial=0.0))
    return RoundTrip(err, 2 * dt * dx, len(idx), len(inner))


@dataclass
class RateGrid:
    x_grid: np.ndarray
    I_values: np.ndarray
    t_grid: np.ndarray
    g_values: np.ndarray
    provenance: dict[str, Any] = field(default_factory=dict)

    def __call__(self, x: float) -> float:
        return float(np.interp(x, self.x_grid, self.I_values))

    def to_csv(self, path=None) -> str:
        lines = ["x,I"] + [f"{fmt(x)},{fmt(v) if np.isfinite(v) else 'inf'}" for x, v in zip(self.x_grid, self.I_values)]
        lines += [f"# {k} = {self.provenance[k]}" for k in sorted(self.provenance)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def pressure_curve(
    state, A: ChainOperator, t_grid: Sequence[float], n_range: Sequence[int],
    degree: int = 1, threads: int = 1,
) -> np.ndarray:
    """Extrapolated ``t -> p(tA)`` on the grid.

    Densities and translation sums are built once per ``n``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    per_n = [(n, local_density(state, n), translation_sum(A, n)) for n in n_range]

    def one(t: float) -> float:
        vals = [perturbed_trace_exp(D, S * t, with_density=False).log_z / n for n, D, S in per_n]
        if len(vals) >= max(3, degree + 2):
            return fit_inverse_powers([n for n, _, _ in per_n], vals, degree)[0]
        return vals[-1]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return np.array(list(ex.map(one, t_grid)))
    return np.array([one(t) for t in t_grid])


def rate_function(
    state, A: ChainOperator, t_grid: Sequence[float] | None = None,
    n_range: Sequence[int] = (1, 2, 3), x_grid: Sequence[float] | None = None,
    degree: int = 1, threads: int = 1,
) -> RateGrid:
    """``I_A(x) = max_t {-t x - p(tA)}``; ``+inf`` outside the spectrum of ``A``."""
    t = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    x = default_x_grid(A) if x_grid is None else np.asarray(x_grid, dtype=float)
    g = pressure_curve(state, A, t, n_range, degree, threads)
    I = legendre_transform(g, t, x)
    ev = A.eigenvalues
    span = max(1.0, abs(ev[0]), abs(ev[-1]))
    I[(x < ev[0] - 1e-12 * span) | (x > ev[-1] + 1e-12 * span)] = np.inf
    prov = {"state": type(state).__name__, "n_range": list(n_range), "t_min": t[0], "t_max": t[-1],
            "t_points": len(t), "degree": degree}
    return RateGrid(x, I, t, g, prov)


# functional side


def expected_f(omega, A: ChainOperator, f: ScalarFunction) -> float:
    """``sum_j nu_j f(psi_j(A))`` over the ergodic components of ``omega``."""
    if isinstance(omega, ErgodicMixture):
        return float(sum(w * f(evaluate(psi, A)) for w, psi in omega.components))
    return float(f(evaluate(omega, A)))


def hermitian_basis(dim: int) -> list[np.ndarray]:
    """Traceless orthonormal Hermitian basis (generalized Gell-Mann)."""
    out = []
    for j in range(dim):
        for k in range(j + 1, dim):
            s = np.zeros((dim, dim), dtype=complex)
            s[j, k] = s[k, j] = 1 / np.sqrt(2)
            a = np.zeros((dim, dim), dtype=complex)
            a[j, k], a[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            out += [s, a]
    for l in range(1, dim):
        h = np.zeros((dim, dim), dtype=complex)
        h[np.arange(l), np.arange(l)] = 1.0
        h[l, l] = -l
        out.append(h / np.sqrt(l * (l + 1)))
    return out


def ansatz_block(theta: np.ndarray, basis: Sequence[np.ndarray], m: int, site_dim: int) -> ChainOperator:
    G = np.tensordot(theta, np.array(basis), axes=1)
    G = ChainOperator(G, (1, m), site_dim)
    return gibbs_density(-1.0 * G)


def mean_relative_entropy_periodized(
    block: ChainOperator, phi, j_max: int | None = None, dim_cap: int = 4096, degree: int = 1,
) -> float:
    """``S_M(psi_bar, phi) = (1/m) lim_j S(block^{(x)j}, phi_[1,jm]) / j``.

    Exact for product references with period 1; otherwise fitted in ``1/j``.
    """
    m, d = block.n_sites, block.site_dim
    if isinstance(phi, Product) and phi.period == 1:
        return relative_entropy(block, local_density(phi, m)) / m
    j_top = 1
    while d ** (m * (j_top + 1)) <= dim_cap:
        j_top += 1
    if j_max is not None:
        j_top = min(j_top, j_max)
    js, vals = [], []
    D = ChainOperator(block.data, (1, m), d)
    for j in range(1, j_top + 1):
        if j > 1:
            D = tensor(D, ChainOperator(block.data, ((j - 1) * m + 1, j * m), d))
        vals.append(relative_entropy(D, local_density(phi, j * m)) / (j * m))
        js.append(j)
    if any(math.isinf(v) for v in vals):
        return math.inf
    if len(js) >= max(3, degree + 2):
        return fit_inverse_powers(js, vals, degree)[0]
    return vals[-1]


@dataclass
class VariationalResult:
    value: float
    block: ChainOperator
    theta: np.ndarray
    mean: float
    s_mean: float
    converged: bool
    restarts: list[float]
    trace: list[str]

    @property
    def state(self) -> PeriodizedAverage:
        return PeriodizedAverage(self.block)


def variational_pressure(
    phi, A: ChainOperator, f: ScalarFunction, period: int = 1, restarts: int = 3,
    seed: int = 0, tol: float = 1e-8, max_sweeps: int = 200, j_max: int | None = None,
) -> VariationalResult:
    """Best ``-f(psi_bar(A)) - S_M(psi_bar, phi)`` over periodized-average ansatz states.

    Coordinate-wise golden-section search over the exponential parametrization
    ``D = exp(G(theta))/Tr``, from ``theta = 0`` and ``restarts - 1`` random
    starts.  The returned value is a lower bound on the functional pressure.
    """
    d, m = A.site_dim, period
    dim = d**m
    basis = hermitian_basis(dim)
    rng = np.random.default_rng(seed)
    A0 = translate(A, 1 - A.window[0])

    def objective(theta):
        block = ansatz_block(theta, basis, m, d)
        psi = PeriodizedAverage(block)
        mean = evaluate(psi, A0)
        s = mean_relative_entropy_periodized(block, phi, j_max)
        return -float(f(mean)) - s, mean, s

    best, trace, finals, all_converged = None, [], [], True
    for r in range(restarts):
        theta = np.zeros(len(basis)) if r == 0 else rng.normal(size=len(basis))
        val = objective(theta)[0]
        converged = False
        for sweep in range(max_sweeps):
            start = val
            for k in range(len(theta)):
                def neg(x, k=k):
                    th = theta.copy()
                    th[k] = x
                    v = objective(th)[0]
                    return -v if np.isfinite(v) else 1e300

                res = minimize_scalar(neg, bracket=(theta[k] - 0.5, theta[k] + 0.5), method="golden",
                                      options={"xtol": 1e-10})
                if -res.fun > val:
                    theta[k] = res.x
                    val = -res.fun
                    trace.append(f"restart={r} sweep={sweep} coord={k} value={fmt(val)}")
                    log.debug(trace[-1])
            if val - start < tol:
                converged = True
                break
        all_converged &= converged
        finals.append(val)
        if best is None or val > best[0]:
            best = (val, theta.copy())
    if not all_converged:
        warnings.warn("variational search hit max_sweeps before converging; best-so-far returned")
    val, theta = best
    value, mean, s = objective(theta)
    return VariationalResult(value, ansatz_block(theta, basis, m, d), theta, mean, s,
                             all_converged, finals, trace)


def finite_lower_bound(phi, omega, A: ChainOperator, f: ScalarFunction, n: int) -> tuple[float, float]:
    """``(-omega(f(s_n(A))) - S(omega_n, phi_n)/n, (1/n) log Z_n)``; the first never exceeds the second."""
    D = local_density(phi, n)
    W = local_density(omega, n)
    S = s_n_observable(A, n)
    B = S * n if f.is_identity else matrix_function(S, f) * n
    log_z = perturbed_trace_exp(D, B, with_density=False).log_z
    bound = -B.expectation(W) / n - relative_entropy(W, D) / n
    return bound, log_z / n


@dataclass
class IdentityReport:
    residual: float
    max_random_excess: float
    log_z: float


def finite_variational_identity(
    H: ChainOperator, rng: np.random.Generator | None = None, n_random: int = 20
) -> IdentityReport:
    """Residual of ``log Tr e^{-H} = -omega_G(H) + S(omega_G)`` and a dominance check."""
    log_z = float(logsumexp(-H.eigenvalues))
    G = gibbs_density(H)
    residual = abs(log_z - (-H.expectation(G) + entropy(G)))
    excess = -math.inf
    rng = rng or np.random.default_rng(0)
    for _ in range(n_random):
        w = random_density(rng, H.window, H.site_dim)
        excess = max(excess, -H.expectation(w) + entropy(w) - log_z)
    return IdentityReport(residual, excess, log_z)
