"""Splitting an energy into per-variable sub-objectives.

A sub-objective is a coefficient-weighted selection of the problem's unary and
pairwise terms. Every builder here returns one sub-objective per variable,
each made of one or more tree-structured parts that the solver can minimize
exactly by dynamic programming.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    CoefficientSumMismatch,
    DimensionMismatch,
    Disconnected,
    EdgeUncovered,
    EnergySumMismatch,
    HasCycle,
    NotAGrid,
    NotSpanning,
)
from .generators import grid_edges
from .problem import Edge, Problem, canonical_edge, evaluate_energies, is_connected

COEFF_TOL = 1e-12
ENERGY_RTOL = 1e-9


@dataclass(frozen=True)
class TreePart:
    """One tree- or forest-structured weighted selection of problem terms.

    ``variables`` is the part's scope; a variable may sit in the scope with a
    zero unary coefficient (its pair terms or soft-decision input still count).
    """

    variables: tuple[int, ...]
    unary_coeff: np.ndarray
    edges: tuple[Edge, ...]
    edge_coeff: np.ndarray

    @classmethod
    def build(cls, unary: dict[int, float], edges: dict[Edge, float]) -> "TreePart":
        scope = set(unary)
        for i, j in edges:
            scope.update((i, j))
        variables = tuple(sorted(scope))
        u = np.array([unary.get(v, 0.0) for v in variables], dtype=float)
        es = tuple(sorted(edges))
        ec = np.array([edges[e] for e in es], dtype=float)
        u.setflags(write=False)
        ec.setflags(write=False)
        return cls(variables, u, es, ec)

    def energies(self, p: Problem, assignments: np.ndarray) -> np.ndarray:
        a = np.asarray(assignments, dtype=np.int64)
        out = np.zeros(a.shape[0])
        for v, c in zip(self.variables, self.unary_coeff):
            if c:
                out += c * p.unary[v][a[:, v]]
        for (i, j), c in zip(self.edges, self.edge_coeff):
            if c:
                out += c * p.binary[(i, j)][a[:, i], a[:, j]]
        return out


@dataclass(frozen=True)
class Decomposition:
    n: int
    parts: tuple[tuple[TreePart, ...], ...]
    kind: str = "custom"

    @property
    def m(self) -> int:
        return len(self.parts)

    def scope(self, i: int) -> tuple[int, ...]:
        s: set[int] = set()
        for part in self.parts[i]:
            s.update(part.variables)
        return tuple(sorted(s))

    def unary_coeff(self) -> np.ndarray:
        """Dense ``m x n`` matrix: coefficient of ``f_j`` inside sub-objective ``i``."""
        out = np.zeros((self.m, self.n))
        for i, parts in enumerate(self.parts):
            for part in parts:
                out[i, list(part.variables)] += part.unary_coeff
        return out

    def binary_coeff(self, i: int) -> dict[Edge, float]:
        out: dict[Edge, float] = {}
        for part in self.parts[i]:
            for e, c in zip(part.edges, part.edge_coeff):
                out[e] = out.get(e, 0.0) + float(c)
        return out

    def structure(self, i: int) -> list[Edge]:
        """Edges carrying a nonzero coefficient in sub-objective ``i``."""
        return sorted(e for e, c in self.binary_coeff(i).items() if c != 0)

    def sub_energies(self, p: Problem, assignments: np.ndarray) -> np.ndarray:
        """``(m, K)`` array of sub-objective values for ``K`` assignments."""
        a = np.atleast_2d(np.asarray(assignments, dtype=np.int64))
        return np.array(
            [sum((part.energies(p, a) for part in parts), np.zeros(a.shape[0]))
             for parts in self.parts]
        )

    def dump(self) -> str:
        """Text listing: ``u i j coeff`` and ``b i (j,k) coeff`` per nonzero term."""
        lines = []
        u = self.unary_coeff()
        for i in range(self.m):
            for j in np.flatnonzero(u[i]):
                lines.append(f"u {i} {j} {format(u[i, j], '.17g')}")
            for (j, k), c in sorted(self.binary_coeff(i).items()):
                if c:
                    lines.append(f"b {i} ({j},{k}) {format(c, '.17g')}")
        return "\n".join(lines) + "\n"


def straightforward_decomposition(p: Problem) -> Decomposition:
    """Each variable keeps its own unary term and half of every incident pair term."""
    parts = []
    for i in range(p.n):
        unary = {i: 1.0}
        edges = {canonical_edge(i, j): 0.5 for j in p._adj[i]}
        parts.append((TreePart.build(unary, edges),))
    return Decomposition(p.n, tuple(parts), "straightforward")


@dataclass(frozen=True)
class TreeSet:
    trees: tuple[tuple[Edge, ...], ...]

    @property
    def coverage(self) -> dict[Edge, int]:
        cover: dict[Edge, int] = {}
        for tree in self.trees:
            for e in tree:
                cover[e] = cover.get(e, 0) + 1
        return dict(sorted(cover.items()))


def check_spanning_tree(n: int, tree: Sequence[Edge], graph: set[Edge]) -> None:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e in tree:
        e = canonical_edge(*e)
        if e not in graph:
            raise NotSpanning(f"edge {e} is not an edge of the problem graph")
        ri, rj = find(e[0]), find(e[1])
        if ri == rj:
            raise HasCycle(f"edge {e} closes a cycle")
        parent[ri] = rj
    if len({find(x) for x in range(n)}) > 1:
        raise NotSpanning("tree does not reach every variable")


def _bfs_tree(p: Problem, root: int) -> tuple[list[Edge], dict[int, int], dict[int, int]]:
    parent = {root: -1}
    depth = {root: 0}
    edges = []
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in p._adj[u]:
            if v not in parent:
                parent[v] = u
                depth[v] = depth[u] + 1
                edges.append(canonical_edge(u, v))
                queue.append(v)
    return edges, parent, depth


def default_tree_set(p: Problem) -> TreeSet:
    """Breadth-first spanning tree rooted at every variable, neighbors visited in
    ascending order.

    A BFS tree contains every edge at its root, so coverage holds by
    construction; the repair loop below only swaps an uncovered edge into the
    tree of its lower endpoint (dropping the cycle edge farthest from that
    root) should that ever stop being true.
    """
    if not is_connected(p):
        raise Disconnected("spanning trees need a connected problem graph")
    trees = []
    depths = []
    for root in range(p.n):
        edges, _, depth = _bfs_tree(p, root)
        trees.append(sorted(edges))
        depths.append(depth)
    covered = {e for t in trees for e in t}
    for e in p.edges:
        if e in covered:
            continue
        u, v = e
        tree = trees[u]
        path = _tree_path(p.n, tree, u, v)
        farthest = max(path, key=lambda f: (max(depths[u][f[0]], depths[u][f[1]]), f))
        tree.remove(farthest)
        tree.append(e)
        tree.sort()
        covered = {x for t in trees for x in t}
    return TreeSet(tuple(tuple(t) for t in trees))


def _tree_path(n: int, tree: Sequence[Edge], a: int, b: int) -> list[Edge]:
    adj: dict[int, list[int]] = {x: [] for x in range(n)}
    for i, j in tree:
        adj[i].append(j)
        adj[j].append(i)
    prev = {a: -1}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        for v in sorted(adj[u]):
            if v not in prev:
                prev[v] = u
                queue.append(v)
    path = []
    x = b
    while prev[x] != -1:
        path.append(canonical_edge(prev[x], x))
        x = prev[x]
    return path


def spanning_tree_decomposition(p: Problem, trees: TreeSet) -> Decomposition:
    """Unary terms at weight ``1/n`` in every tree; each pair term at
    ``1/m(e)`` in the ``m(e)`` trees that contain it."""
    if not is_connected(p):
        raise Disconnected("spanning trees need a connected problem graph")
    if len(trees.trees) != p.n:
        raise DimensionMismatch(f"{len(trees.trees)} trees for {p.n} variables")
    graph = set(p.edges)
    for tree in trees.trees:
        check_spanning_tree(p.n, tree, graph)
    cover = trees.coverage
    uncovered = [e for e in p.edges if e not in cover]
    if uncovered:
        raise EdgeUncovered(f"edges not in any tree: {uncovered}")
    unary = {j: 1.0 / p.n for j in range(p.n)}
    parts = []
    for tree in trees.trees:
        edges = {canonical_edge(*e): 1.0 / cover[canonical_edge(*e)] for e in tree}
        parts.append((TreePart.build(unary, edges),))
    return Decomposition(p.n, tuple(parts), "spanning-tree")


@dataclass(frozen=True)
class GridCoefficients:
    """Weights of the horizontal/vertical tree pair: unary, horizontal, vertical."""

    rows: int
    cols: int

    @property
    def a(self) -> float:
        return 1.0 / (2 * self.rows * self.cols)

    @property
    def b(self) -> float:
        return 1.0 / (self.rows * self.cols + self.cols)

    @property
    def c(self) -> float:
        return 1.0 / (self.rows * self.cols + self.rows)

    def exact(self) -> tuple[Fraction, Fraction, Fraction]:
        mn = self.rows * self.cols
        return Fraction(1, 2 * mn), Fraction(1, mn + self.cols), Fraction(1, mn + self.rows)


def check_grid(p: Problem, rows: int, cols: int) -> None:
    if rows < 1 or cols < 1 or p.n != rows * cols or list(p.edges) != grid_edges(rows, cols):
        raise NotAGrid(f"problem graph is not the {rows}x{cols} 4-connected grid")


def grid_hv_decomposition(rows: int, cols: int, p: Problem) -> Decomposition:
    """Per node, a horizontal tree (its row plus every column) and a vertical
    tree (its column plus every row), kept as two separate parts."""
    check_grid(p, rows, cols)
    k = GridCoefficients(rows, cols)
    unary = {j: k.a for j in range(p.n)}
    horizontal = [(i, j) for i, j in p.edges if j == i + 1 and i // cols == j // cols]
    vertical = [(i, j) for i, j in p.edges if j == i + cols]
    parts = []
    for i in range(p.n):
        r, c = divmod(i, cols)
        h_edges = {e: k.b for e in horizontal if e[0] // cols == r}
        h_edges.update({e: k.c for e in vertical})
        v_edges = {e: k.c for e in vertical if e[0] % cols == c}
        v_edges.update({e: k.b for e in horizontal})
        parts.append((TreePart.build(unary, h_edges), TreePart.build(unary, v_edges)))
    return Decomposition(p.n, tuple(parts), "grid-hv")


def validate_decomposition(
    p: Problem, d: Decomposition, samples: int = 1000, seed: int = 0
) -> None:
    """Raise unless the sub-objectives add up to the full energy.

    Checks coefficient sums per term (to 1e-12) and the energy identity on
    ``samples`` seeded random assignments, or on all of them when the space
    is that small.
    """
    if d.n != p.n:
        raise DimensionMismatch(f"decomposition over {d.n} variables, problem has {p.n}")
    graph = set(p.edges)
    u = d.unary_coeff()
    if (u < 0).any():
        raise CoefficientSumMismatch("negative unary coefficient")
    bad = np.flatnonzero(np.abs(u.sum(axis=0) - 1.0) > COEFF_TOL)
    if bad.size:
        j = int(bad[0])
        raise CoefficientSumMismatch(f"unary {j} coefficients sum to {u[:, j].sum()!r}")
    edge_sum = {e: 0.0 for e in graph}
    for i in range(d.m):
        for e, c in d.binary_coeff(i).items():
            if e not in graph:
                raise DimensionMismatch(f"sub-objective {i} uses unknown pair {e}")
            if c < 0:
                raise CoefficientSumMismatch(f"negative coefficient on {e} in {i}")
            edge_sum[e] += c
    for e, s in sorted(edge_sum.items()):
        if abs(s - 1.0) > COEFF_TOL:
            raise CoefficientSumMismatch(f"pair {e} coefficients sum to {s!r}")

    if p.num_configurations <= samples:
        grids = np.indices(p.domain_sizes).reshape(p.n, -1).T
    else:
        rng = np.random.default_rng(seed)
        grids = np.column_stack(
            [rng.integers(0, s, size=samples) for s in p.domain_sizes]
        )
    full = evaluate_energies(p, grids)
    parts = d.sub_energies(p, grids).sum(axis=0)
    finite = np.isfinite(full)
    if not np.array_equal(finite, np.isfinite(parts)):
        raise EnergySumMismatch("infinite terms disagree between E and its parts")
    err = np.abs(full[finite] - parts[finite])
    lim = ENERGY_RTOL * (1.0 + np.abs(full[finite]))
    if (err > lim).any():
        k = int(np.argmax(err - lim))
        raise EnergySumMismatch(
            f"E = {full[finite][k]!r} but sub-objectives sum to {parts[finite][k]!r}"
        )


def _bareiss_det(m: list[list[int]]) -> int:
    """Fraction-free integer determinant."""
    a = [row[:] for row in m]
    n = len(a)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((r for r in range(k + 1, n) if a[r][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def count_spanning_trees(p: Problem) -> int:
    """Number of spanning trees from the reduced Laplacian determinant (exact)."""
    if not is_connected(p):
        raise Disconnected("a disconnected graph has no spanning tree")
    q = [[0] * p.n for _ in range(p.n)]
    for i, j in p.edges:
        q[i][j] = q[j][i] = 1
    for i in range(p.n):
        q[i][i] = -p.degree(i)
    minor = [row[1:] for row in q[1:]]
    return abs(_bareiss_det(minor))
