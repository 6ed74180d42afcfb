"""Minimax-optimal robust mean estimation under star-shaped constraints."""

from .comparisons import (TestConstants, TestVerdict, add_aux_noise,
                          compute_constants, constants_for_preset,
                          discriminants, hybrid_test, median_test,
                          practical_constants, symmetric_test, trimmed_mean,
                          verify_constants)
from .estimator import (EstimateResult, EstimatorConfig, WinnerChain,
                        compute_J_star, estimate, estimate_bounded,
                        estimate_unbounded, membership_radius, r_zero_bound,
                        run_chain, tournament_winner)
from .geometry import (ConstraintSet, EntropyProfile, delta_star,
                       euclidean_ball, full_space, greedy_packing, l0_ball,
                       l1_ball, local_entropy, maximal_packing, segment,
                       segment_union, single_point)
from .tree import Forest, PrunedTree, build_forest, build_tree, verify_tree

__all__ = [
    "ConstraintSet", "EntropyProfile", "EstimateResult", "EstimatorConfig",
    "Forest", "PrunedTree", "TestConstants", "TestVerdict", "WinnerChain",
    "add_aux_noise", "build_forest", "build_tree", "compute_J_star",
    "compute_constants", "constants_for_preset", "delta_star", "discriminants",
    "estimate", "estimate_bounded", "estimate_unbounded", "euclidean_ball",
    "full_space", "greedy_packing", "hybrid_test", "l0_ball", "l1_ball",
    "local_entropy", "maximal_packing", "median_test", "membership_radius",
    "practical_constants", "r_zero_bound", "run_chain", "segment",
    "segment_union", "single_point", "symmetric_test", "tournament_winner",
    "trimmed_mean", "verify_constants", "verify_tree",
]

__version__ = "0.1.0"
