"""Plain-text serialization of interactions and state models.

Numbers are written with 17 significant digits so floats round-trip exactly.
Complex arrays are written as row-major ``re im`` pairs on one line after an
``array <name> <shape...>`` header.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .errors import ConfigError
from .interactions import Interaction
from .operators import ChainOperator
from .sequences import fmt
from .states import (
    BufferedGibbs,
    ErgodicMixture,
    FCSTriple,
    FinitelyCorrelated,
    LocalGibbs,
    PeriodizedAverage,
    Product,
    QMSData,
    QuantumMarkov,
)


def _array_lines(name: str, a: np.ndarray) -> list[str]:
    a = np.asarray(a, dtype=complex)
    flat = a.ravel()
    nums = " ".join(f"{fmt(z.real + 0.0)} {fmt(z.imag + 0.0)}" for z in flat)  # no signed zeros
    return [f"array {name} {' '.join(str(s) for s in a.shape)}", nums]


class _Reader:
    def __init__(self, text: str):
        self.lines = [l.strip() for l in text.splitlines() if l.strip() and not l.strip().startswith("#")]
        self.pos = 0

    def next(self) -> list[str]:
        if self.pos >= len(self.lines):
            raise ConfigError("unexpected end of serialized data")
        tok = self.lines[self.pos].split()
        self.pos += 1
        return tok

    def expect(self, *head: str) -> list[str]:
        tok = self.next()
        if tok[: len(head)] != list(head):
            raise ConfigError(f"expected '{' '.join(head)}', found '{' '.join(tok)}'")
        return tok[len(head):]

    def array(self, name: str) -> np.ndarray:
        shape = tuple(int(s) for s in self.expect("array", name))
        vals = np.array([float(v) for v in self.next()])
        z = vals[0::2] + 1j * vals[1::2]
        if not np.any(z.imag):
            z = z.real
        return z.reshape(shape)


def dump_interaction(phi: Interaction) -> str:
    return "\n".join(_interaction_lines(phi)) + "\n"


def _interaction_lines(phi: Interaction) -> list[str]:
    out = ["begin interaction", f"site_dim {phi.site_dim}", f"terms {len(phi.terms)}"]
    for X, op in phi.items():
        out.append("set " + " ".join(str(x) for x in X))
        out += _array_lines("term", op.matrix)
    out.append("end interaction")
    return out


def _read_interaction(r: _Reader) -> Interaction:
    r.expect("begin", "interaction")
    d = int(r.expect("site_dim")[0])
    count = int(r.expect("terms")[0])
    terms = {}
    for _ in range(count):
        X = tuple(int(x) for x in r.expect("set"))
        terms[X] = r.array("term")
    r.expect("end", "interaction")
    return Interaction(d, terms)


def load_interaction(text: str) -> Interaction:
    return _read_interaction(_Reader(text))


def _op_lines(name: str, op: ChainOperator) -> list[str]:
    return [f"operator {name} {op.window[0]} {op.window[1]} {op.site_dim}"] + _array_lines(name, op.matrix)


def _read_op(r: _Reader, name: str) -> ChainOperator:
    a, b, d = (int(v) for v in r.expect("operator", name))
    return ChainOperator(r.array(name), (a, b), d)


def _state_lines(s) -> list[str]:
    if isinstance(s, Product):
        return ["begin state product", *_op_lines("block", s.block), "end state"]
    if isinstance(s, PeriodizedAverage):
        return ["begin state periodized_average", *_op_lines("block", s.block), "end state"]
    if isinstance(s, LocalGibbs):
        return ["begin state local_gibbs", *_interaction_lines(s.phi), "end state"]
    if isinstance(s, BufferedGibbs):
        buf = "none" if s.buffer is None else str(s.buffer)
        cap = "none" if s.cap is None else str(s.cap)
        return ["begin state buffered_gibbs", f"buffer {buf}", f"cap {cap}", *_interaction_lines(s.phi), "end state"]
    if isinstance(s, FinitelyCorrelated):
        f = s.fcs
        return ["begin state finitely_correlated",
                "algebra_blocks " + " ".join(str(b) for b in f.algebra_blocks),
                *_array_lines("E", f.E), *_array_lines("R", f.R), "end state"]
    if isinstance(s, QuantumMarkov):
        q = s.qms
        out = ["begin state quantum_markov",
               "blocks " + " ".join(f"{d} {m}" for d, m in q.blocks),
               "weights " + " ".join(fmt(w) for w in q.weights)]
        for i in range(q.k):
            for j in range(q.k):
                out += _array_lines(f"T_{i}_{j}", q.T[i][j])
        return out + ["end state"]
    if isinstance(s, ErgodicMixture):
        out = ["begin state ergodic_mixture", f"components {len(s.components)}"]
        for w, c in s.components:
            out.append(f"weight {fmt(w)}")
            out += _state_lines(c)
        return out + ["end state"]
    raise TypeError(f"cannot serialize {type(s).__name__}")


def dump_state(s) -> str:
    return "\n".join(_state_lines(s)) + "\n"


def _read_state(r: _Reader):
    kind = r.expect("begin", "state")[0]
    if kind == "product":
        s = Product(_read_op(r, "block"))
    elif kind == "periodized_average":
        s = PeriodizedAverage(_read_op(r, "block"))
    elif kind == "local_gibbs":
        s = LocalGibbs(_read_interaction(r))
    elif kind == "buffered_gibbs":
        buf = r.expect("buffer")[0]
        cap = r.expect("cap")[0]
        s = BufferedGibbs(_read_interaction(r), None if buf == "none" else int(buf),
                          None if cap == "none" else int(cap))
    elif kind == "finitely_correlated":
        blocks = tuple(int(b) for b in r.expect("algebra_blocks"))
        s = FinitelyCorrelated(FCSTriple(blocks, r.array("E"), r.array("R")))
    elif kind == "quantum_markov":
        nums = [int(v) for v in r.expect("blocks")]
        blocks = tuple(zip(nums[0::2], nums[1::2]))
        weights = np.array([float(v) for v in r.expect("weights")])
        k = len(blocks)
        T = [[r.array(f"T_{i}_{j}") for j in range(k)] for i in range(k)]
        s = QuantumMarkov(QMSData(blocks, T, weights))
    elif kind == "ergodic_mixture":
        count = int(r.expect("components")[0])
        comps = []
        for _ in range(count):
            w = float(r.expect("weight")[0])
            comps.append((w, _read_state(r)))
        s = ErgodicMixture(tuple(comps))
    else:
        raise ConfigError(f"unknown state kind '{kind}'")
    r.expect("end", "state")
    return s


def load_state(text: str):
    return _read_state(_Reader(text))


def iter_blocks(text: str) -> Iterator[str]:
    """Split concatenated top-level blocks."""
    depth, cur = 0, []
    for line in text.splitlines():
        tok = line.split()
        if tok[:1] == ["begin"]:
            depth += 1
        cur.append(line)
        if tok[:1] == ["end"]:
            depth -= 1
            if depth == 0:
                yield "\n".join(cur) + "\n"
                cur = []
