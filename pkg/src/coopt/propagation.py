"""Propagation matrices: nonnegative, column-stochastic mixing weights that
decide how much of agent ``j``'s soft decision reaches agent ``i``."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ColumnSumOff, DimensionMismatch, IsolatedNode, NegativeEntry, Reducible
from .problem import Problem

COLUMN_TOL = 1e-12


class PropagationMatrix:
    """Column-compressed ``n x n`` matrix; ``w[i, j]`` weighs agent j's message to i."""

    def __init__(self, w):
        self.w = sp.csc_matrix(w, dtype=float)
        self.w.sort_indices()
        if self.w.shape[0] != self.w.shape[1]:
            raise DimensionMismatch(f"propagation matrix must be square, got {self.w.shape}")

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def dense(self) -> np.ndarray:
        return self.w.toarray()

    def row(self, i: int) -> dict[int, float]:
        """Nonzero weights ``{j: w_ij}`` feeding agent ``i``."""
        r = self.w.getrow(i).tocoo()
        return {int(j): float(v) for j, v in sorted(zip(r.col, r.data)) if v != 0}

    def triplets(self) -> list[tuple[int, int, float]]:
        coo = self.w.tocoo()
        return sorted((int(i), int(j), float(v)) for i, j, v in zip(coo.row, coo.col, coo.data))

    def dump(self) -> str:
        return "".join(f"{i} {j} {format(v, '.17g')}\n" for i, j, v in self.triplets())


def neighbor_degree_matrix(p: Problem) -> PropagationMatrix:
    """``w_ij = 1/d_j`` for adjacent ``i, j``: each agent splits its message evenly
    over its neighbors."""
    rows, cols, vals = [], [], []
    for j in range(p.n):
        d = p.degree(j)
        if d == 0:
            raise IsolatedNode(f"variable {j} has no neighbors")
        for i in p._adj[j]:
            rows.append(i)
            cols.append(j)
            vals.append(1.0 / d)
    return PropagationMatrix(sp.csc_matrix((vals, (rows, cols)), shape=(p.n, p.n)))


def self_loop_degree_matrix(p: Problem) -> PropagationMatrix:
    """``w_ij = 1/(d_j + 1)`` over neighbors and the agent itself."""
    rows, cols, vals = [], [], []
    for j in range(p.n):
        share = 1.0 / (p.degree(j) + 1)
        for i in sorted(p._adj[j] + [j]):
            rows.append(i)
            cols.append(j)
            vals.append(share)
    return PropagationMatrix(sp.csc_matrix((vals, (rows, cols)), shape=(p.n, p.n)))


def is_irreducible(wm: PropagationMatrix) -> bool:
    """Irreducible iff the directed support graph is strongly connected."""
    if wm.n <= 1:
        return True
    support = wm.w.copy()
    support.data = (support.data != 0).astype(float)
    support.eliminate_zeros()
    count, _ = connected_components(support, directed=True, connection="strong")
    return count == 1


def validate_propagation(
    wm: PropagationMatrix, require_irreducible: bool = True, n: int | None = None
) -> None:
    if n is not None and wm.n != n:
        raise DimensionMismatch(f"matrix is {wm.n}x{wm.n}, expected {n}x{n}")
    if (wm.w.data < 0).any():
        raise NegativeEntry("propagation weights must be nonnegative")
    sums = np.asarray(wm.w.sum(axis=0)).ravel()
    off = np.flatnonzero(np.abs(sums - 1.0) > COLUMN_TOL)
    if off.size:
        j = int(off[0])
        raise ColumnSumOff(f"column {j} sums to {sums[j]!r}")
    if require_irreducible and not is_irreducible(wm):
        raise Reducible("support graph is not strongly connected")


# the 5x5 matrix printed for the five-variable example
SIMPLE5_W = np.array(
    [
        [0, 1 / 3, 0, 0, 1 / 3],
        [1 / 2, 0, 1 / 2, 0, 1 / 3],
        [0, 1 / 3, 0, 1 / 2, 0],
        [0, 0, 1 / 2, 0, 1 / 3],
        [1 / 2, 1 / 3, 0, 1 / 2, 0],
    ]
)
