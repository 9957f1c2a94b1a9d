"""Cooperative optimization for discrete energy minimization."""

__version__ = "0.1.0"

from .decomposition import (  # noqa: E402
    Decomposition,
    TreePart,
    TreeSet,
    count_spanning_trees,
    default_tree_set,
    grid_hv_decomposition,
    spanning_tree_decomposition,
    straightforward_decomposition,
    validate_decomposition,
)
from .oracle import brute_force_min, tree_exact_min  # noqa: E402
from .problem import (  # noqa: E402
    Problem,
    adjacency_matrix,
    evaluate_energy,
    neighbors,
    read_ncop,
    validate_problem,
    write_ncop,
)
from .propagation import (  # noqa: E402
    PropagationMatrix,
    neighbor_degree_matrix,
    self_loop_degree_matrix,
    validate_propagation,
)
from .schedule import LambdaSchedule, schedule_divergent, schedule_product  # noqa: E402
from .solver import SolverConfig, SolverState, run  # noqa: E402
