"""Finite-n sequences and their 1/n extrapolation."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .errors import ExtrapolationError


def fmt(x: float) -> str:
    """17 significant digits, enough for an exact float round trip."""
    return format(float(x), ".17g")


@dataclass
class PressureSequence:
    """Entries ``(n, value)`` with model metadata and an optional fitted limit."""

    entries: list[tuple[int, float]]
    metadata: dict[str, Any] = field(default_factory=dict)
    extrapolated: tuple[float, float] | None = None
    allow_infinite: bool = False

    def __post_init__(self):
        self.entries = [(int(n), float(v)) for n, v in self.entries]
        ns = [n for n, _ in self.entries]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError(f"n values must be strictly increasing: {ns}")
        for n, v in self.entries:
            if math.isnan(v) or (math.isinf(v) and not self.allow_infinite):
                raise ValueError(f"non-finite value {v} at n={n}")

    @property
    def ns(self) -> np.ndarray:
        return np.array([n for n, _ in self.entries], dtype=int)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.entries], dtype=float)

    @property
    def limit(self) -> float:
        if self.extrapolated is None:
            extrapolate_limit(self)
        return self.extrapolated[0]

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        buf.write("n,value\n")
        for n, v in self.entries:
            buf.write(f"{n},{fmt(v)}\n")
        for key in sorted(self.metadata):
            buf.write(f"# {key} = {self.metadata[key]}\n")
        if self.extrapolated is not None:
            buf.write(f"# limit = {fmt(self.extrapolated[0])}\n")
            buf.write(f"# residual = {fmt(self.extrapolated[1])}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, text: str) -> PressureSequence:
        entries, meta, extra = [], {}, {}
        for line in text.splitlines()[1:]:
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                key, val = key.strip(), val.strip()
                if key in ("limit", "residual"):
                    extra[key] = float(val)
                else:
                    meta[key] = val
            elif line.strip():
                n, v = line.split(",")
                entries.append((int(n), float(v)))
        ext = (extra["limit"], extra["residual"]) if "limit" in extra else None
        return cls(entries, meta, ext, allow_infinite=True)


def fit_inverse_powers(ns: Iterable[int], values: Iterable[float], degree: int = 1) -> tuple[float, float]:
    """Least-squares fit ``v(n) = p + sum_k c_k / n**k``; returns ``(p, rms residual)``."""
    ns = np.asarray(list(ns), dtype=float)
    vs = np.asarray(list(values), dtype=float)
    if len(ns) < degree + 2:
        raise ExtrapolationError(
            f"need at least {degree + 2} points for a degree-{degree} fit, got {len(ns)}"
        )
    if not np.all(np.isfinite(vs)):
        raise ExtrapolationError("cannot extrapolate a sequence with infinite entries")
    X = np.vander(1.0 / ns, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(X, vs, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - vs) ** 2)))
    return float(coef[0]), resid


def extrapolate_limit(seq: PressureSequence, degree: int = 1) -> tuple[float, float]:
    """Fit ``p + c/n`` (or higher inverse powers) and store the result on ``seq``."""
    if len(seq.entries) < 3:
        raise ExtrapolationError("extrapolation needs at least 3 entries")
    seq.extrapolated = fit_inverse_powers(seq.ns, seq.values, degree)
    return seq.extrapolated
