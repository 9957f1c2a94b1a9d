import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopt.decomposition import TreePart
from coopt.errors import NotATree
from coopt.generators import chain_edges, random_problem, random_tree_edges, ring_edges, star_edges
from coopt.problem import Problem
from coopt.treedp import TreePlan, tree_min_profile


def brute_profile(p, part, extra, root, scale):
    plan = TreePlan(p, part, root)
    out = np.full(p.domain_sizes[root], np.inf)
    sizes = [p.domain_sizes[v] for v in part.variables]
    for combo in itertools.product(*map(range, sizes)):
        labels = dict(zip(part.variables, combo))
        val = plan.value(labels, extra, scale)
        out[labels[root]] = min(out[labels[root]], val)
    return out


def full_part(p):
    return TreePart.build({v: 1.0 for v in range(p.n)}, {e: 1.0 for e in p.edges})


class TestProfile:
    def test_chain_example(self):
        # x0 - x1 with a disagreement penalty and no unaries: both labels reachable at 0
        p = Problem([2, 2], [np.zeros(2)] * 2, {(0, 1): np.array([[0.0, 1.0], [1.0, 0.0]])})
        np.testing.assert_array_equal(tree_min_profile(p, full_part(p), None, 0), [0.0, 0.0])

    def test_star_closed_form(self):
        rng = np.random.default_rng(4)
        p = random_problem(star_edges(4), [3] * 5, rng)
        prof = tree_min_profile(p, full_part(p), None, 0)
        expect = p.unary[0] + sum(
            (p.table(0, leaf) + p.unary[leaf][None, :]).min(axis=1) for leaf in range(1, 5)
        )
        np.testing.assert_allclose(prof, expect, atol=1e-12)

    @given(st.integers(1, 6), st.integers(0, 10_000), st.sampled_from([0.0, 0.5, 1.0]))
    @settings(max_examples=60, deadline=None)
    def test_matches_enumeration(self, n, seed, scale):
        rng = np.random.default_rng(seed)
        p = random_problem(random_tree_edges(n, rng), [int(rng.integers(1, 4)) for _ in range(n)], rng)
        part = TreePart.build(
            {v: float(rng.uniform(0, 1)) for v in range(n)},
            {e: float(rng.uniform(0, 1)) for e in p.edges},
        )
        extra = {v: rng.uniform(-2, 2, p.domain_sizes[v]) for v in range(n) if rng.random() < 0.5}
        root = int(rng.integers(0, n))
        got = TreePlan(p, part, root).profile(extra, scale)
        np.testing.assert_allclose(got, brute_profile(p, part, extra, root, scale), atol=1e-9)

    def test_forest_part_adds_constant(self):
        p = random_problem([(0, 1), (2, 3)], [2] * 4, np.random.default_rng(0))
        part = full_part(p)
        np.testing.assert_allclose(
            TreePlan(p, part, 0).profile(), brute_profile(p, part, None, 0, 1.0), atol=1e-12
        )

    def test_cycle_rejected(self):
        p = random_problem(ring_edges(3), [2] * 3, np.random.default_rng(0))
        with pytest.raises(NotATree):
            TreePlan(p, full_part(p), 0)

    def test_root_outside_scope(self):
        p = random_problem(chain_edges(3), [2] * 3, np.random.default_rng(0))
        part = TreePart.build({0: 1.0, 1: 1.0}, {(0, 1): 1.0})
        with pytest.raises(NotATree):
            TreePlan(p, part, 2)

    def test_zero_scale_with_infinite_entries(self):
        p = Problem([2, 2], [np.array([np.inf, 0.0]), np.zeros(2)], {(0, 1): np.full((2, 2), np.inf)})
        prof = TreePlan(p, full_part(p), 0).profile({1: np.array([1.0, 2.0])}, 0.0)
        np.testing.assert_array_equal(prof, [1.0, 1.0])
