"""Greedy permutations and greedy trees via incremental finite Voronoi
diagrams, with a brute-force verification suite and a CLI."""

from .algorithms import (
    RunTelemetry,
    clarkson,
    clarkson_bb,
    gonzalez,
    gt_build,
    gt_merge,
    gt_refine,
)
from .fvd import (
    MOVE,
    SPLIT,
    STAY,
    Cell,
    FVDConfig,
    FiniteVoronoi,
    InsertionReport,
    NeighborGraph,
    RunObserver,
    classify_entry,
    locate_node,
    neighbors_within_two_hops,
)
from .greedy_tree import (
    GreedyTree,
    Permutation,
    RadiusBoundUnavailable,
    TreeNode,
    deserialize,
    exact_radius,
    heap_order_traversal,
    node_points,
    radius_ub,
    serialize,
    split,
    triangle_radius_bounds,
    trees_equal,
)
from .metric import (
    DistanceCounter,
    DuplicatePointError,
    EmptyInputError,
    MetricSpace,
    ParseError,
    dist_to_set,
    load_points,
    spread,
)
from .queues import BucketQueue, ExactMaxHeap, heap_invariant_holds

__version__ = "0.1.0"
