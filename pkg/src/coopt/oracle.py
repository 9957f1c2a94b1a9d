"""Reference solvers used to check the fast paths on small instances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotATree, TooLarge
from .problem import Problem, connected_components, evaluate_energies, evaluate_energy

MAX_CONFIGURATIONS = 2**22
_CHUNK = 1 << 16


@dataclass(frozen=True)
class OracleResult:
    energy: float
    assignment: tuple[int, ...]
    visited: int


def brute_force_min(p: Problem) -> OracleResult:
    """Exhaustive minimum; configurations enumerated in lexicographic order with
    variable 0 most significant, so ties resolve to the smallest assignment."""
    total = p.num_configurations
    if total > MAX_CONFIGURATIONS:
        raise TooLarge(f"{total} configurations exceed {MAX_CONFIGURATIONS}")
    best_e, best_idx = np.inf, 0
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        labels = np.column_stack(np.unravel_index(idx, p.domain_sizes)) if p.n else np.zeros((idx.size, 0), int)
        e = evaluate_energies(p, labels)
        k = int(np.argmin(e))
        # strict: an equal energy later in the order never replaces the earlier one
        if e[k] < best_e or (start == 0 and k == 0):
            best_e, best_idx = float(e[k]), int(idx[k])
    labels = tuple(int(x) for x in np.unravel_index(best_idx, p.domain_sizes)) if p.n else ()
    return OracleResult(evaluate_energy(p, labels), labels, total)


def tree_exact_min(p: Problem) -> OracleResult:
    """Exact min-sum dynamic programming on a tree or forest.

    Each component is rooted at its smallest variable; ties in the backtrack
    pick the lowest label.
    """
    n = p.n
    comp = connected_components(n, p.edges)
    if len(p.edges) != n - len(set(comp)):
        raise NotATree("problem graph contains a cycle")

    order: list[int] = []
    parent = [-1] * n
    seen = [False] * n
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        stack = [root]
        while stack:
            u = stack.pop()
            order.append(u)
            for v in p._adj[u]:
                if not seen[v]:
                    seen[v] = True
                    parent[v] = u
                    stack.append(v)

    belief = [np.array(p.unary[i], dtype=float) for i in range(n)]
    choice: dict[int, np.ndarray] = {}
    for u in reversed(order):
        par = parent[u]
        if par < 0:
            continue
        # cost[x_par, x_u]
        cost = p.table(par, u) + belief[u][None, :]
        choice[u] = np.argmin(cost, axis=1)
        belief[par] = belief[par] + cost.min(axis=1)

    labels = [0] * n
    for u in order:
        if parent[u] < 0:
            labels[u] = int(np.argmin(belief[u]))
        else:
            labels[u] = int(choice[u][labels[parent[u]]])
    return OracleResult(evaluate_energy(p, labels), tuple(labels), 0)
