"""Command-line experiment runner.

    fed <task> --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]

Exit status: 0 when every check passes, 1 when any fails, 2 on a config or
dimension-cap error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import ConfigError, DimensionError, FedlabError
from .operators import SIGMA_Z, ChainOperator, partial_trace, perturbed_trace_exp
from .oracle import (
    binary_rate,
    brute_force_log_partition,
    ising_pressure,
    markov_kl_rate,
    varadhan_check,
)
from .pressure import (
    ScalarFunction,
    golden_thompson_gap,
    interaction_pressure,
    pressure_sequence,
)
from .sequences import fmt
from .states import (
    classical_markov_qms,
    fcs_density,
    product_state,
    qms_density,
    qms_to_fcs,
    random_density,
    random_fcs,
    random_qms,
    tracial_state,
)
from .variational import (
    finite_lower_bound,
    finite_variational_identity,
    legendre_round_trip_error,
    rate_function,
    variational_pressure,
)

log = logging.getLogger("fedlab")


@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} value={fmt(self.value)} tol={fmt(self.tolerance)}"


def _le(name: str, value: float, tol: float) -> Check:
    return Check(name, value, tol, bool(value <= tol))


# tasks


def run_pressure(cfg: ExperimentConfig, out: Path, threads: int) -> list[Check]:
    ns, degree = cfg.n_range(), cfg.degree()
    checks = []
    if not cfg.has("observable"):
        phi = cfg.interaction()
        if phi is None:
            raise cfg.error("model", "kind", "interaction pressure needs an interaction model")
        seq = interaction_pressure(phi, ns, degree)
        seq.to_csv(out / "pressure.csv")
        coupling = cfg.get_float("model", "coupling")
        if cfg.get("model", "kind") == "ising":
            exact = ising_pressure(coupling, cfg.get_float("model", "field", 0.0))
            checks.append(_le("extrapolated pressure vs transfer matrix", abs(seq.limit - exact), cfg.tol("extrapolation")))
        return checks
    state = cfg.state()
    A = cfg.observable(state.site_dim)
    f = cfg.function()
    seq = pressure_sequence(state, A, f, ns, degree)
    seq.to_csv(out / "pressure.csv")
    checks.append(Check("all entries finite", 0.0, 0.0, bool(np.all(np.isfinite(seq.values)))))
    ref = cfg.get_float("reference", "value")
    if ref is not None:
        worst = float(np.max(np.abs(seq.values - ref)))
        checks.append(_le("entries vs reference value", worst, cfg.tol("product_exact")))
    if cfg.get_bool("reference", "golden_thompson") and f.is_identity:
        gaps = [golden_thompson_gap(state, A, n)[2] for n in ns]
        checks.append(_le("golden-thompson gap (negated minimum)", -min(gaps), cfg.tol("golden_thompson")))
    return checks


def run_rate(cfg: ExperimentConfig, out: Path, threads: int) -> list[Check]:
    state = cfg.state()
    A = cfg.observable(state.site_dim)
    rg = rate_function(state, A, cfg.t_grid(), cfg.n_range(), cfg.x_grid(A), cfg.degree(), threads)
    rg.to_csv(out / "rate.csv")
    fin = np.isfinite(rg.I_values)
    I = rg.I_values[fin]
    checks = [
        _le("rate non-negative (negated minimum)", -float(np.min(I)), 1e-12),
        _le("rate minimum vanishes", float(np.min(I)), cfg.tol("rate_minimum")),
        _le("rate convexity (negated min second difference)", -float(np.min(np.diff(I, 2), initial=0.0)),
            cfg.tol("rate_convexity")),
    ]
    rt = legendre_round_trip_error(rg.g_values, rg.t_grid, rg.x_grid)
    checks.append(_le(f"legendre round trip ({rt.compared} points)", rt.error, rt.tolerance))
    if cfg.get("reference", "kind") == "binary_rate":
        xs = cfg.get_floats("reference", "x") or [0.0, 0.25, -0.25, 0.5, -0.5]
        err = max(abs(rg(x) - float(binary_rate(x))) for x in xs)
        checks.append(_le("rate vs binary closed form", err, cfg.tol("rate_closed_form")))
    return checks


def run_variational(cfg: ExperimentConfig, out: Path, threads: int) -> list[Check]:
    state = cfg.state()
    A = cfg.observable(state.site_dim)
    f = cfg.function()
    ns = cfg.n_range()
    res = variational_pressure(
        state, A, f, period=cfg.get_int("variational", "period", 1),
        restarts=cfg.get_int("variational", "restarts", 3), seed=cfg.seed,
    )
    seq = pressure_sequence(state, A, f, ns, cfg.degree())
    seq.to_csv(out / "pressure.csv")
    lines = [f"value = {fmt(res.value)}", f"mean = {fmt(res.mean)}", f"mean_relative_entropy = {fmt(res.s_mean)}",
             f"converged = {res.converged}", f"restarts = {' '.join(fmt(v) for v in res.restarts)}"]
    (out / "variational.txt").write_text("\n".join(lines) + "\n")
    if cfg.get_bool("variational", "trace"):
        (out / "optimizer_trace.txt").write_text("\n".join(res.trace) + "\n")
    upper = seq.limit if seq.extrapolated else seq.values[-1]
    checks = [
        Check("optimizer converged", 0.0, 0.0, res.converged),
        _le("variational value minus extrapolated pressure", res.value - upper, cfg.tol("sandwich")),
    ]
    worst = -math.inf
    for n in ns:
        bound, p_n = finite_lower_bound(state, res.state, A, f, n)
        worst = max(worst, bound - p_n)
    checks.append(_le("finite-n lower bound excess", worst, cfg.tol("finite_bound")))
    return checks


def run_oracle(cfg: ExperimentConfig, out: Path, threads: int) -> list[Check]:
    rows, checks = [], []
    kind = cfg.get("model", "kind")
    if kind == "ising":
        J, h = cfg.get_float("model", "coupling", 1.0), cfg.get_float("model", "field", 0.0)
        exact = ising_pressure(J, h)
        rows.append(("transfer_matrix_pressure", exact))
        if cfg.has("grid"):
            seq = interaction_pressure(cfg.interaction(), cfg.n_range(), cfg.degree())
            rows.append(("extrapolated_pressure", seq.limit))
            checks.append(_le("extrapolated pressure vs transfer matrix", abs(seq.limit - exact), cfg.tol("extrapolation")))
    if kind == "classical_markov":
        P = cfg.get_matrix("model", "transition")
        Q = cfg.get_matrix("oracle", "reference_transition")
        if Q is not None:
            qP = classical_markov_qms(P)
            rate = markov_kl_rate(P, Q, qP.weights)
            rows.append(("markov_kl_rate", rate))
    if cfg.get_bool("oracle", "varadhan"):
        state = cfg.state()
        A = cfg.observable(state.site_dim)
        f = cfg.function()
        rg = rate_function(state, A, cfg.t_grid(), cfg.n_range(), cfg.x_grid(A), cfg.degree(), threads)
        ns = [int(v) for v in cfg.get_floats("oracle", "varadhan_n") or [cfg.n_range()[-1]]]
        gaps = []
        for n in ns:
            r = varadhan_check(state, A, f, n, rg.x_grid, rg.I_values)
            rows.append((f"varadhan_finite_n{n}", r.finite_value))
            gaps.append(r.gap)
        rows.append(("varadhan_variational", r.variational_value))
        checks.append(_le(f"varadhan gap at n={ns[-1]}", gaps[-1], cfg.tol("varadhan")))
        if len(gaps) > 1:
            checks.append(Check("varadhan gap decreasing", float(np.max(np.diff(gaps))), 0.0,
                                bool(np.all(np.diff(gaps) < 0))))
    text = "name,value\n" + "".join(f"{k},{fmt(v)}\n" for k, v in rows)
    (out / "oracle.csv").write_text(text)
    return checks


def run_check(cfg: ExperimentConfig, out: Path, threads: int) -> list[Check]:
    """Fixed identity and inequality suite on seeded random fixtures."""
    rng = np.random.default_rng(cfg.seed)
    checks = []
    tol = cfg.tol("identity")

    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 5))
        m = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
        r = finite_variational_identity(ChainOperator(m + m.conj().T, (1, n)), rng, 5)
        worst = max(worst, r.residual, r.max_random_excess)
    checks.append(_le("finite variational identity", worst, tol))

    Z = ChainOperator(SIGMA_Z)
    seq = pressure_sequence(tracial_state(), Z, ScalarFunction.identity(), range(1, 9))
    checks.append(_le("product exactness", float(np.max(np.abs(seq.values - math.log(math.cosh(1))))),
                      cfg.tol("product_exact")))

    worst = -math.inf
    for _ in range(20):
        st = product_state(random_density(rng).matrix)
        A = random_density(rng, (1, 2)) * 3.0 - ChainOperator(np.eye(4), (1, 2)) * 0.75
        worst = max(worst, -golden_thompson_gap(st, A, int(rng.integers(2, 6)))[2])
    checks.append(_le("golden-thompson (negated minimum gap)", worst, cfg.tol("golden_thompson")))

    D = random_density(rng, (1, 3))
    B = random_density(rng, (1, 3)) * 5.0
    ours = perturbed_trace_exp(D, B, with_density=False).log_z
    checks.append(_le("perturbed trace vs logm/expm", abs(ours - brute_force_log_partition(D.matrix, B.matrix)), 1e-10))

    q = random_qms(rng, [(1, 2), (1, 1)])
    F = qms_to_fcs(q)
    worst = max(float(np.max(np.abs(qms_density(q, n).matrix - fcs_density(F, n).matrix))) for n in range(1, 5))
    checks.append(_le("quantum Markov vs finitely correlated densities", worst, cfg.tol("compatibility")))

    f = random_fcs(rng, 2, 2)
    worst = max(float(np.max(np.abs(partial_trace(fcs_density(f, n + 1), (1, n)).matrix - fcs_density(f, n).matrix)))
                for n in range(1, 5))
    checks.append(_le("finitely correlated compatibility", worst, cfg.tol("compatibility")))

    t = np.linspace(-30, 30, 1201)
    rt = legendre_round_trip_error(np.log(np.cosh(t)), t, np.linspace(-1, 1, 201))
    checks.append(_le("legendre round trip", rt.error, rt.tolerance))
    return checks


TASK_RUNNERS = {
    "pressure": run_pressure,
    "rate": run_rate,
    "variational": run_variational,
    "oracle": run_oracle,
    "check": run_check,
}


def run_experiment(cfg: ExperimentConfig, out: Path | None = None, threads: int = 1) -> tuple[int, list[Check]]:
    out = Path(out) if out is not None else cfg.output
    out.mkdir(parents=True, exist_ok=True)
    checks = TASK_RUNNERS[cfg.task](cfg, out, threads)
    summary = [f"task = {cfg.task}", f"seed = {cfg.seed}"] + [c.line() for c in checks]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    return (0 if all(c.passed for c in checks) else 1), checks


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fed", description="Free energy density laboratory for quantum spin chains")
    p.add_argument("task", choices=sorted(TASK_RUNNERS))
    p.add_argument("--config", required=True, help="experiment config (INI format)")
    p.add_argument("--out", help="output directory (overrides [experiment] output)")
    p.add_argument("--seed", type=int, help="random seed, unsigned 64-bit (overrides config)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for grid evaluation")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.task)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError(f"--seed {args.seed} is not an unsigned 64-bit integer")
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        status, checks = run_experiment(cfg, Path(args.out) if args.out else None, args.threads)
    except DimensionError as e:
        print(f"error: dimension cap exceeded at n={e.n}: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FedlabError as e:
        # invalid models or windows are configuration problems too
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    for c in checks:
        print(c.line())
    return status


if __name__ == "__main__":
    sys.exit(main())
