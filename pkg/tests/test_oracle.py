import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopt.errors import NotATree, TooLarge
from coopt.generators import chain_edges, random_problem, random_tree_edges, ring_edges
from coopt.oracle import brute_force_min, tree_exact_min
from coopt.problem import Problem, evaluate_energy

from conftest import two_var


class TestBruteForce:
    def test_fixture_golden(self, simple5):
        res = brute_force_min(simple5)
        assert res.energy == 32.0
        assert res.assignment == (0, 2, 2, 0, 2)
        assert res.visited == 243

    def test_two_variable(self):
        res = brute_force_min(two_var())
        assert res.energy == 0.0
        assert res.assignment == (0, 1)

    def test_ties_go_to_first_in_order(self):
        p = Problem([2, 2], [np.zeros(2)] * 2, {(0, 1): np.zeros((2, 2))})
        assert brute_force_min(p).assignment == (0, 0)

    def test_too_large(self):
        p = Problem([2] * 23, [np.zeros(2)] * 23, {})
        with pytest.raises(TooLarge):
            brute_force_min(p)

    def test_chunk_boundary(self):
        # more than one enumeration chunk; optimum deep in the order
        rng = np.random.default_rng(2)
        p = random_problem(chain_edges(17), [2] * 17, rng)
        res = brute_force_min(p)
        assert res.energy == pytest.approx(tree_exact_min(p).energy, abs=1e-9)


class TestTreeDP:
    @given(st.integers(1, 9), st.integers(0, 2**31 - 1))
    @settings(max_examples=500, deadline=None)
    def test_matches_brute_force_on_random_trees(self, n, seed):
        rng = np.random.default_rng(seed)
        sizes = [int(rng.integers(1, 4)) for _ in range(n)]
        p = random_problem(random_tree_edges(n, rng), sizes, rng, integer=bool(seed % 2))
        exact = brute_force_min(p)
        dp = tree_exact_min(p)
        assert dp.energy == pytest.approx(exact.energy, abs=1e-9)
        assert evaluate_energy(p, dp.assignment) == pytest.approx(dp.energy, abs=1e-12)

    def test_forest(self):
        p = random_problem([(0, 1), (2, 3)], [3] * 4, np.random.default_rng(1))
        assert tree_exact_min(p).energy == pytest.approx(brute_force_min(p).energy)

    def test_cycle_rejected(self):
        p = random_problem(ring_edges(4), [2] * 4, np.random.default_rng(0))
        with pytest.raises(NotATree):
            tree_exact_min(p)

    def test_infinite_entries(self):
        p = Problem(
            [2, 2],
            [np.array([0.0, np.inf]), np.zeros(2)],
            {(0, 1): np.array([[np.inf, 1.0], [0.0, 0.0]])},
        )
        res = tree_exact_min(p)
        assert res.energy == 1.0 and res.assignment == (0, 1)
