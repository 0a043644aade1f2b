"""Experiment configuration: INI-style ``key = value`` text with ``[section]`` headers."""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .interactions import Interaction, ising
from .operators import SIGMA_X, SIGMA_Y, SIGMA_Z, ChainOperator
from .pressure import ScalarFunction
from .serialization import load_interaction, load_state
from .states import (
    BufferedGibbs,
    FinitelyCorrelated,
    LocalGibbs,
    QuantumMarkov,
    classical_markov_qms,
    product_state,
    random_fcs,
    random_qms,
    tracial_state,
)
from .variational import default_t_grid

TASKS = ("pressure", "rate", "variational", "check", "oracle")

DEFAULT_TOLERANCES = {
    "identity": 1e-10,
    "golden_thompson": 1e-12,
    "product_exact": 1e-10,
    "extrapolation": 1e-3,
    "rate_closed_form": 1e-3,
    "rate_minimum": 1e-6,
    "rate_convexity": 1e-9,
    "sandwich": 1e-2,
    "finite_bound": 1e-10,
    "compatibility": 1e-10,
    "varadhan": 5e-2,
}


@dataclass
class ExperimentConfig:
    task: str
    seed: int
    output: Path
    sections: dict[str, dict[str, str]]
    path: Path | None = None
    text: str = ""
    tolerances: dict[str, float] = field(default_factory=dict)

    # error reporting

    def line_of(self, section: str, key: str | None = None) -> int | None:
        current = None
        for i, raw in enumerate(self.text.splitlines(), start=1):
            line = raw.strip()
            m = re.fullmatch(r"\[(.+)\]", line)
            if m:
                current = m.group(1).strip()
                if key is None and current == section:
                    return i
                continue
            if current == section and key is not None:
                k = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
                if k == key.lower():
                    return i
        return None

    def error(self, section: str, key: str | None, message: str) -> ConfigError:
        where = str(self.path) if self.path else "<config>"
        line = self.line_of(section, key)
        loc = f"{where}:{line}" if line else where
        label = f"[{section}]" + (f" {key}" if key else "")
        return ConfigError(f"{loc}: {label}: {message}")

    # typed accessors

    def has(self, section: str) -> bool:
        return section in self.sections

    def get(self, section: str, key: str, default: Any = None) -> str | None:
        return self.sections.get(section, {}).get(key, default)

    def require(self, section: str, key: str) -> str:
        v = self.get(section, key)
        if v is None:
            raise self.error(section, None, f"missing required key '{key}'")
        return v

    def get_float(self, section: str, key: str, default: float | None = None) -> float | None:
        v = self.get(section, key)
        if v is None:
            return default
        try:
            return float(v)
        except ValueError:
            raise self.error(section, key, f"expected a number, got '{v}'") from None

    def get_int(self, section: str, key: str, default: int | None = None) -> int | None:
        v = self.get(section, key)
        if v is None:
            return default
        try:
            return int(v)
        except ValueError:
            raise self.error(section, key, f"expected an integer, got '{v}'") from None

    def get_bool(self, section: str, key: str, default: bool = False) -> bool:
        v = self.get(section, key)
        if v is None:
            return default
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise self.error(section, key, f"expected a boolean, got '{v}'")

    def get_matrix(self, section: str, key: str) -> np.ndarray | None:
        v = self.get(section, key)
        if v is None:
            return None
        try:
            rows = [[complex(x.replace("i", "j")) for x in r.split()] for r in v.split(";")]
            m = np.array(rows)
        except ValueError:
            raise self.error(section, key, "matrix rows must be numbers separated by ';'") from None
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise self.error(section, key, f"matrix must be square, got shape {m.shape}")
        return m.real if not np.any(m.imag) else m

    def get_floats(self, section: str, key: str) -> list[float] | None:
        v = self.get(section, key)
        if v is None:
            return None
        try:
            return [float(x) for x in v.replace(",", " ").split()]
        except ValueError:
            raise self.error(section, key, f"expected numbers, got '{v}'") from None

    def file_path(self, section: str, key: str) -> Path | None:
        v = self.get(section, key)
        if v is None:
            return None
        p = Path(v)
        if not p.is_absolute() and self.path is not None:
            p = self.path.parent / p
        if not p.exists():
            raise self.error(section, key, f"file not found: {p}")
        return p

    # domain builders

    def n_range(self) -> list[int]:
        v = self.get("grid", "n")
        if v is None:
            raise self.error("grid", None, "missing required key 'n'")
        out: list[int] = []
        try:
            for part in v.replace(",", " ").split():
                if "-" in part:
                    a, b = part.split("-")
                    out += list(range(int(a), int(b) + 1))
                else:
                    out.append(int(part))
        except ValueError:
            raise self.error("grid", "n", f"cannot parse n range '{v}'") from None
        if not out or any(n < 1 for n in out) or sorted(set(out)) != out:
            raise self.error("grid", "n", "n values must be positive and strictly increasing")
        return out

    def t_grid(self) -> np.ndarray:
        pts = self.get_int("grid", "t_points", 1201)
        tmax = self.get_float("grid", "t_max", 30.0)
        if pts < 1 or tmax <= 0:
            raise self.error("grid", "t_points", "t grid must be non-empty with t_max > 0")
        return default_t_grid(pts, tmax)

    def x_grid(self, A: ChainOperator) -> np.ndarray:
        pts = self.get_int("grid", "x_points", 201)
        if pts < 1:
            raise self.error("grid", "x_points", "x grid must be non-empty")
        ev = A.eigenvalues
        return np.linspace(ev[0], ev[-1], pts)

    def degree(self) -> int:
        return self.get_int("grid", "degree", 1)

    def interaction(self) -> Interaction | None:
        kind = self.get("model", "kind")
        if kind == "ising":
            return ising(self.get_float("model", "coupling", 1.0), self.get_float("model", "field", 0.0))
        if kind == "interaction_file":
            return load_interaction(self.file_path("model", "file").read_text())
        return None

    def state(self):
        if not self.has("model"):
            raise self.error("model", None, "section is missing")
        kind = self.require("model", "kind")
        rng = np.random.default_rng(self.seed)
        if kind in ("ising", "interaction_file"):
            phi = self.interaction()
            variant = self.get("model", "variant", "local")
            if variant == "local":
                return LocalGibbs(phi)
            if variant == "buffered":
                return BufferedGibbs(phi, self.get_int("model", "buffer"))
            raise self.error("model", "variant", f"unknown variant '{variant}' (local | buffered)")
        if kind == "tracial":
            return tracial_state(self.get_int("model", "site_dim", 2))
        if kind == "product":
            rho = self.get_matrix("model", "rho")
            if rho is None:
                diag = self.get_floats("model", "diag")
                if diag is None:
                    raise self.error("model", None, "product model needs 'rho' or 'diag'")
                rho = np.diag(diag)
            return product_state(rho)
        if kind == "classical_markov":
            P = self.get_matrix("model", "transition")
            if P is None:
                raise self.error("model", None, "classical_markov needs 'transition'")
            return QuantumMarkov(classical_markov_qms(P))
        if kind == "random_qms":
            nums = self.get_floats("model", "blocks") or [1, 2, 1, 1]
            blocks = [(int(a), int(b)) for a, b in zip(nums[0::2], nums[1::2])]
            return QuantumMarkov(random_qms(rng, blocks))
        if kind == "random_fcs":
            return FinitelyCorrelated(random_fcs(
                rng, self.get_int("model", "site_dim", 2), self.get_int("model", "bond_dim", 2)))
        if kind == "state_file":
            return load_state(self.file_path("model", "file").read_text())
        raise self.error("model", "kind", f"unknown model kind '{kind}'")

    def observable(self, site_dim: int) -> ChainOperator:
        if not self.has("observable"):
            raise self.error("observable", None, "section is missing")
        name = self.get("observable", "name", "sz")
        scale = self.get_float("observable", "scale", 1.0)
        named = {"sz": SIGMA_Z, "sx": SIGMA_X, "sy": SIGMA_Y, "szsz": np.kron(SIGMA_Z, SIGMA_Z),
                 "sxsx": np.kron(SIGMA_X, SIGMA_X)}
        if name in named:
            if site_dim != 2:
                raise self.error("observable", "name", f"'{name}' needs site dimension 2")
            m = named[name]
        elif name == "matrix":
            m = self.get_matrix("observable", "matrix")
            if m is None:
                raise self.error("observable", None, "name = matrix needs a 'matrix' key")
        else:
            raise self.error("observable", "name", f"unknown observable '{name}'")
        sites = int(round(np.log(m.shape[0]) / np.log(site_dim)))
        if site_dim**sites != m.shape[0]:
            raise self.error("observable", "matrix", f"dimension {m.shape[0]} is not a power of {site_dim}")
        try:
            return ChainOperator(scale * m, (1, sites), site_dim)
        except ValueError as e:
            raise self.error("observable", "matrix", str(e)) from None

    def function(self) -> ScalarFunction:
        name = self.get("function", "name", "identity")
        if name == "identity":
            return ScalarFunction.identity()
        if name == "square":
            return ScalarFunction.square()
        if name == "constant":
            return ScalarFunction.constant(self.get_float("function", "value", 0.0))
        if name == "polynomial":
            coeffs = self.get_floats("function", "coeffs")
            if not coeffs:
                raise self.error("function", None, "polynomial needs 'coeffs'")
            return ScalarFunction.polynomial(coeffs)
        raise self.error("function", "name", f"unknown function '{name}'")

    def tol(self, key: str) -> float:
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])


def parse_config(text: str, path: Path | None = None, task: str | None = None) -> ExperimentConfig:
    where = str(path) if path else "<config>"
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";;"), interpolation=None)
    try:
        cp.read_string(text, source=where)
    except configparser.ParsingError as e:
        lineno = e.errors[0][0] if e.errors else "?"
        raise ConfigError(f"{where}:{lineno}: cannot parse line {e.errors[0][1] if e.errors else ''}") from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as e:
        raise ConfigError(f"{where}:{e.lineno}: {e.message if hasattr(e, 'message') else e}") from None
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError(f"{where}:{e.lineno}: key outside of a [section]") from None
    sections = {s: dict(cp[s]) for s in cp.sections()}
    cfg = ExperimentConfig("", 0, Path("."), sections, path, text)
    cfg.task = task or cfg.get("experiment", "task", "")
    if cfg.task not in TASKS:
        raise cfg.error("experiment", "task", f"task must be one of {', '.join(TASKS)}; got '{cfg.task}'")
    cfg.seed = cfg.get_int("experiment", "seed", 0)
    if cfg.seed < 0 or cfg.seed >= 2**64:
        raise cfg.error("experiment", "seed", "seed must be an unsigned 64-bit integer")
    out = cfg.get("experiment", "output", "out")
    cfg.output = Path(out) if Path(out).is_absolute() or path is None else path.parent / out
    for k, v in sections.get("tolerances", {}).items():
        if k not in DEFAULT_TOLERANCES:
            raise cfg.error("tolerances", k, f"unknown tolerance '{k}'")
        try:
            cfg.tolerances[k] = float(v)
        except ValueError:
            raise cfg.error("tolerances", k, f"expected a number, got '{v}'") from None
    return cfg


def load_config(path: str | Path, task: str | None = None) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{p}: config file not found")
    return parse_config(p.read_text(), p, task)
