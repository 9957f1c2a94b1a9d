"""Graph shapes and random problem instances used by tests, the bench suite and
the CLI."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .problem import Edge, Problem

# x_1..x_5 of the five-variable example, zero based
SIMPLE5_EDGES: tuple[Edge, ...] = ((0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 4))


def chain_edges(n: int) -> list[Edge]:
    return [(i, i + 1) for i in range(n - 1)]


def ring_edges(n: int) -> list[Edge]:
    return chain_edges(n) + ([(0, n - 1)] if n > 2 else [])


def complete_edges(n: int) -> list[Edge]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def star_edges(n_leaves: int) -> list[Edge]:
    return [(0, j) for j in range(1, n_leaves + 1)]


def random_tree_edges(n: int, rng: np.random.Generator) -> list[Edge]:
    """Random recursive tree: node ``k`` hangs off a uniformly chosen earlier node."""
    return sorted((int(rng.integers(0, k)), k) for k in range(1, n))


def grid_index(row: int, col: int, cols: int) -> int:
    return row * cols + col


def grid_edges(rows: int, cols: int) -> list[Edge]:
    """4-connected grid over row-major node indices."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = grid_index(r, c, cols)
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return sorted(edges)


def random_connected_edges(n: int, extra: int, rng: np.random.Generator) -> list[Edge]:
    """Random tree plus up to ``extra`` additional distinct edges."""
    edges = set(random_tree_edges(n, rng))
    candidates = [e for e in complete_edges(n) if e not in edges]
    rng.shuffle(candidates)
    edges.update(map(tuple, candidates[:extra]))
    return sorted(edges)


def random_problem(
    edges: Sequence[Edge],
    domain_sizes: Sequence[int],
    rng: np.random.Generator,
    low: float = 0.0,
    high: float = 10.0,
    integer: bool = False,
) -> Problem:
    """Uniform random tables on the given graph (nonnegative by default)."""

    def draw(shape):
        if integer:
            return rng.integers(int(low), int(high) + 1, size=shape).astype(float)
        return rng.uniform(low, high, size=shape)

    unary = [draw(s) for s in domain_sizes]
    binary = {(i, j): draw((domain_sizes[i], domain_sizes[j])) for i, j in edges}
    return Problem(domain_sizes, unary, binary)


def instance_suite(count: int, seed: int) -> list[tuple[str, Problem]]:
    """Mixed desk-scale instances: chains, trees, rings and the five-variable graph.

    ``n`` is drawn from 4..8 and domain sizes from 2..4, capped so that the
    full configuration space stays enumerable.
    """
    rng = np.random.default_rng(seed)
    out = []
    kinds = ("chain", "tree", "ring", "simple5")
    for idx in range(count):
        kind = kinds[idx % len(kinds)]
        n = 5 if kind == "simple5" else int(rng.integers(4, 9))
        sizes = [int(rng.integers(2, 5)) for _ in range(n)]
        while np.prod(sizes) > 4096:
            sizes[int(np.argmax(sizes))] -= 1
        if kind == "chain":
            edges = chain_edges(n)
        elif kind == "tree":
            edges = random_tree_edges(n, rng)
        elif kind == "ring":
            edges = ring_edges(n)
        else:
            edges = list(SIMPLE5_EDGES)
        out.append((f"{kind}-{idx}", random_problem(edges, sizes, rng)))
    return out
