"""Binary constraint optimization problems: storage, validation, energies and the
``ncop v1`` text format."""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    CoopError,
    DimensionMismatch,
    IndexOutOfRange,
    LabelOutOfRange,
    NonFiniteEnergy,
    SelfLoop,
)

Edge = tuple[int, int]


def canonical_edge(i: int, j: int) -> Edge:
    return (i, j) if i <= j else (j, i)


def _frozen(arr) -> np.ndarray:
    a = np.array(arr, dtype=float)
    a.setflags(write=False)
    return a


class Problem:
    """Unary and pairwise energy tables over variables with finite label sets.

    Pairs are stored once under ``i < j``; a table supplied as ``(j, i)`` is
    transposed on the way in. The instance is read-only after construction.
    Value checks (shapes, NaN, self pairs) live in :func:`validate_problem` so
    that a malformed problem can still be built and inspected.
    """

    def __init__(
        self,
        domain_sizes: Sequence[int],
        unary: Sequence[Sequence[float]],
        binary: Mapping[tuple[int, int], Sequence[Sequence[float]]] | None = None,
    ):
        self.domain_sizes = tuple(int(s) for s in domain_sizes)
        if len(unary) != len(self.domain_sizes):
            raise DimensionMismatch(
                f"{len(unary)} unary tables for {len(self.domain_sizes)} variables"
            )
        self.unary = tuple(_frozen(u) for u in unary)
        tables: dict[Edge, np.ndarray] = {}
        for (i, j), t in (binary or {}).items():
            i, j = int(i), int(j)
            t = np.array(t, dtype=float)
            if i > j:
                i, j, t = j, i, t.T
            if (i, j) in tables:
                raise DimensionMismatch(f"pair ({i}, {j}) given twice")
            t.setflags(write=False)
            tables[(i, j)] = t
        self.binary: Mapping[Edge, np.ndarray] = MappingProxyType(
            dict(sorted(tables.items()))
        )
        self.edges: tuple[Edge, ...] = tuple(self.binary)
        self._adj: list[list[int]] = [[] for _ in self.domain_sizes]
        for i, j in self.edges:
            if 0 <= i < self.n and 0 <= j < self.n and i != j:
                self._adj[i].append(j)
                self._adj[j].append(i)
        for a in self._adj:
            a.sort()

    @property
    def n(self) -> int:
        return len(self.domain_sizes)

    @property
    def num_configurations(self) -> int:
        return math.prod(self.domain_sizes)

    def table(self, i: int, j: int) -> np.ndarray:
        """Pair table indexed ``[x_i, x_j]`` whatever the stored orientation."""
        if i < j:
            return self.binary[(i, j)]
        return self.binary[(j, i)].T

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def __repr__(self) -> str:
        return f"Problem(n={self.n}, edges={len(self.edges)})"


def _check_index(p: Problem, i: int) -> None:
    if not 0 <= i < p.n:
        raise IndexOutOfRange(f"variable {i} not in 0..{p.n - 1}")


def neighbors(p: Problem, i: int) -> list[int]:
    """Sorted indices of the variables sharing a pair term with ``i``."""
    _check_index(p, i)
    return list(p._adj[i])


def adjacency_matrix(p: Problem) -> np.ndarray:
    a = np.zeros((p.n, p.n), dtype=int)
    for i, j in p.edges:
        if i != j:
            a[i, j] = a[j, i] = 1
    return a


def connected_components(n: int, edges: Iterable[Edge]) -> list[int]:
    """Component label per node (label = smallest node in the component)."""
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    return [find(x) for x in range(n)]


def is_connected(p: Problem) -> bool:
    if p.n == 0:
        return True
    edges = [(i, j) for i, j in p.edges if 0 <= i < p.n and 0 <= j < p.n]
    return len(set(connected_components(p.n, edges))) == 1


@dataclass
class ProblemReport:
    errors: list[CoopError] = field(default_factory=list)
    connected: bool = True

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_first(self) -> None:
        if self.errors:
            raise self.errors[0]


def validate_problem(p: Problem) -> ProblemReport:
    """Collect every invariant violation instead of stopping at the first."""
    report = ProblemReport()
    for i, size in enumerate(p.domain_sizes):
        if size < 1:
            report.errors.append(DimensionMismatch(f"domain of {i} has size {size}"))
        u = p.unary[i]
        if u.shape != (size,):
            report.errors.append(
                DimensionMismatch(f"unary {i}: shape {u.shape}, expected ({size},)")
            )
        if np.isnan(u).any():
            report.errors.append(NonFiniteEnergy(f"unary {i} contains NaN"))
    for (i, j), t in p.binary.items():
        if i == j:
            report.errors.append(SelfLoop(f"pair ({i}, {i})"))
            continue
        if not (0 <= i < p.n and 0 <= j < p.n):
            report.errors.append(IndexOutOfRange(f"pair ({i}, {j}) outside 0..{p.n - 1}"))
            continue
        expected = (p.domain_sizes[i], p.domain_sizes[j])
        if t.shape != expected:
            report.errors.append(
                DimensionMismatch(f"pair ({i}, {j}): shape {t.shape}, expected {expected}")
            )
        if np.isnan(t).any():
            report.errors.append(NonFiniteEnergy(f"pair ({i}, {j}) contains NaN"))
    report.connected = is_connected(p)
    return report


def as_assignment(p: Problem, labels: Sequence[int]) -> np.ndarray:
    a = np.asarray(labels, dtype=np.int64)
    if a.shape != (p.n,):
        raise DimensionMismatch(f"assignment of length {a.size} for {p.n} variables")
    sizes = np.asarray(p.domain_sizes)
    bad = np.flatnonzero((a < 0) | (a >= sizes))
    if bad.size:
        i = int(bad[0])
        raise LabelOutOfRange(f"label {a[i]} for variable {i} with domain {sizes[i]}")
    return a


def evaluate_energy(p: Problem, labels: Sequence[int]) -> float:
    a = as_assignment(p, labels)
    total = 0.0
    for i in range(p.n):
        total += p.unary[i][a[i]]
    for (i, j), t in p.binary.items():
        total += t[a[i], a[j]]
    return float(total)


def evaluate_energies(p: Problem, assignments: np.ndarray) -> np.ndarray:
    """Energies of many assignments at once; rows of ``assignments`` are labelings."""
    a = np.asarray(assignments, dtype=np.int64)
    out = np.zeros(a.shape[0])
    for i in range(p.n):
        out += p.unary[i][a[:, i]]
    for (i, j), t in p.binary.items():
        out += t[a[:, i], a[:, j]]
    return out


# --- ncop v1 text format ----------------------------------------------------


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_ncop(p: Problem, dest: str | os.PathLike | io.TextIOBase) -> None:
    lines = ["ncop 1", str(p.n)]
    lines += [f"dom {i} {s}" for i, s in enumerate(p.domain_sizes)]
    lines += [
        f"unary {i} " + " ".join(_fmt(v) for v in u) for i, u in enumerate(p.unary)
    ]
    for (i, j), t in p.binary.items():
        lines.append(f"binary {i} {j}")
        lines += [" ".join(_fmt(v) for v in row) for row in t]
    text = "\n".join(lines) + "\n"
    if isinstance(dest, io.TextIOBase):
        dest.write(text)
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)


def dumps_ncop(p: Problem) -> str:
    buf = io.StringIO()
    write_ncop(p, buf)
    return buf.getvalue()


def loads_ncop(text: str) -> Problem:
    tokens: list[str] = []
    for line in text.splitlines():
        tokens += line.split("#", 1)[0].split()
    pos = 0

    def take() -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise CoopError("ncop: unexpected end of input")
        pos += 1
        return tokens[pos - 1]

    if take() != "ncop" or take() != "1":
        raise CoopError("ncop: missing 'ncop 1' header")
    n = int(take())
    sizes = [0] * n
    unary: list[list[float] | None] = [None] * n
    binary: dict[Edge, np.ndarray] = {}
    while pos < len(tokens):
        kind = take()
        if kind == "dom":
            i, s = int(take()), int(take())
            sizes[i] = s
        elif kind == "unary":
            i = int(take())
            unary[i] = [float(take()) for _ in range(sizes[i])]
        elif kind == "binary":
            i, j = int(take()), int(take())
            vals = [float(take()) for _ in range(sizes[i] * sizes[j])]
            binary[(i, j)] = np.array(vals).reshape(sizes[i], sizes[j])
        else:
            raise CoopError(f"ncop: unknown record {kind!r}")
    missing = [i for i, u in enumerate(unary) if u is None]
    if missing:
        raise CoopError(f"ncop: no unary record for variables {missing}")
    return Problem(sizes, unary, binary)


def read_ncop(path: str | os.PathLike) -> Problem:
    with open(path, encoding="utf-8") as fh:
        return loads_ncop(fh.read())
