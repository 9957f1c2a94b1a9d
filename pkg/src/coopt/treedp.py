"""Exact min-marginal of a tree-structured part by leaf-to-root message passing."""

from __future__ import annotations

from collections import deque
from typing import Mapping

import numpy as np

from .decomposition import TreePart
from .errors import NotATree
from .problem import Problem, connected_components


class TreePlan:
    """A :class:`TreePart` rooted at one variable, with its traversal order and
    coefficient-scaled tables precomputed so repeated minimizations only pay
    for the message passes.

    Components of the part that do not contain the root are kept as sub-plans
    rooted at their smallest variable; they contribute a constant.
    """

    def __init__(self, p: Problem, part: TreePart, root: int):
        if root not in part.variables:
            raise NotATree(f"root {root} is not in the part's scope")
        edges = [e for e, c in zip(part.edges, part.edge_coeff) if c != 0]
        coeff = {e: float(c) for e, c in zip(part.edges, part.edge_coeff) if c != 0}
        variables = list(part.variables)
        local = {v: k for k, v in enumerate(variables)}
        comp = connected_components(len(variables), [(local[i], local[j]) for i, j in edges])
        if len(edges) != len(variables) - len(set(comp)):
            raise NotATree("part contains a cycle")

        adj: dict[int, list[int]] = {v: [] for v in variables}
        for i, j in edges:
            adj[i].append(j)
            adj[j].append(i)
        for v in adj:
            adj[v].sort()

        self.root = root
        self.variables = tuple(variables)
        self.unary = {
            v: c * p.unary[v] for v, c in zip(part.variables, part.unary_coeff) if c != 0
        }
        self._unary_coeff = {
            v: float(c) for v, c in zip(part.variables, part.unary_coeff) if c != 0
        }
        self._coeff = coeff
        self.order, self.parent, self.children = self._bfs(root, adj)
        # edge table oriented [x_parent, x_child], already weighted
        self.edge_table = {
            u: coeff[(min(u, par), max(u, par))] * p.table(par, u)
            for u, par in self.parent.items()
            if par >= 0
        }
        reached = set(self.order)
        self.others: list[tuple[list[int], dict[int, int], dict[int, list[int]]]] = []
        for v in variables:
            if v not in reached:
                order, parent, children = self._bfs(v, adj)
                reached.update(order)
                self.others.append((order, parent, children))
                for u, par in parent.items():
                    if par >= 0:
                        self.edge_table[u] = coeff[(min(u, par), max(u, par))] * p.table(par, u)
        self._edges = edges
        self._p = p

    @staticmethod
    def _bfs(root, adj):
        order, parent, children = [root], {root: -1}, {root: []}
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in parent:
                    parent[v] = u
                    children[v] = []
                    children[u].append(v)
                    order.append(v)
                    queue.append(v)
        return order, parent, children

    def _potential(self, v, extra, scale):
        pot = np.zeros(self._p.domain_sizes[v])
        base = self.unary.get(v)
        if base is not None and scale != 0:
            pot = pot + scale * base
        ex = extra.get(v) if extra else None
        if ex is not None:
            pot = pot + ex
        return pot

    def _collect(self, order, parent, children, extra, scale):
        """Belief at every node of one component after the upward pass."""
        belief: dict[int, np.ndarray] = {}
        for u in reversed(order):
            b = self._potential(u, extra, scale)
            for ch in children[u]:
                b = b + belief.pop(ch)
            if parent[u] >= 0:
                if scale == 0:
                    belief[u] = np.full(self._p.domain_sizes[parent[u]], b.min())
                    continue
                tab = self.edge_table[u] if scale == 1 else scale * self.edge_table[u]
                belief[u] = (tab + b[None, :]).min(axis=1)
            else:
                belief[u] = b
        return belief

    def profile(self, extra: Mapping[int, np.ndarray] | None = None, scale: float = 1.0) -> np.ndarray:
        """``x_root -> min over the rest of (scale * part + sum of extra unaries)``."""
        prof = self._collect(self.order, self.parent, self.children, extra, scale)[self.root]
        for order, parent, children in self.others:
            prof = prof + self._collect(order, parent, children, extra, scale)[order[0]].min()
        return prof

    def value(self, labels, extra: Mapping[int, np.ndarray] | None = None, scale: float = 1.0) -> float:
        """The same function evaluated at a full assignment."""
        total = 0.0
        if scale != 0:
            for v, c in self._unary_coeff.items():
                total += scale * c * self._p.unary[v][labels[v]]
            for (i, j) in self._edges:
                total += scale * self._coeff[(i, j)] * self._p.binary[(i, j)][labels[i], labels[j]]
        if extra:
            for v in self.variables:
                ex = extra.get(v)
                if ex is not None:
                    total += ex[labels[v]]
        return float(total)


def tree_min_profile(
    p: Problem,
    part: TreePart,
    extra_unary: Mapping[int, np.ndarray] | None,
    root: int,
    scale: float = 1.0,
) -> np.ndarray:
    return TreePlan(p, part, root).profile(extra_unary, scale)
