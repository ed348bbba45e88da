"""estor：有界并发程序执行图（Mazurkiewicz 迹）的精确计数与蒙特卡洛估计。"""

from estor.dtree import classify_node, d_children, enumerate_d_tree, is_maximally_revisitable, visit_options
from estor.estimators import (
    DporProvider,
    LoggedTreeProvider,
    TransitionProvider,
    exact_output_distribution,
    genmc_estimate,
    knuth_estimate,
    pitt_estimate,
    se_estimate,
)
from estor.graph import ExecutionGraph, canonical_key, is_sc_consistent, restrict, sc_maximal_events
from estor.models import (
    CapExceeded,
    ConvergenceConfig,
    ConvergenceReport,
    EstimateTrial,
    NodeClass,
    OutputDistribution,
    TreeStats,
    WeightMode,
)
from estor.program import Program, ProgramError, next_events, parse_program, replay_thread
from estor.subexp import approx_count, enumerate_first_leaves
from estor.tdag import enumerate_t_sinks, t_predecessor_count, t_successors

__all__ = [
    "CapExceeded",
    "ConvergenceConfig",
    "ConvergenceReport",
    "DporProvider",
    "EstimateTrial",
    "ExecutionGraph",
    "LoggedTreeProvider",
    "NodeClass",
    "OutputDistribution",
    "Program",
    "ProgramError",
    "TransitionProvider",
    "TreeStats",
    "WeightMode",
    "approx_count",
    "canonical_key",
    "classify_node",
    "d_children",
    "enumerate_d_tree",
    "enumerate_first_leaves",
    "enumerate_t_sinks",
    "exact_output_distribution",
    "genmc_estimate",
    "is_maximally_revisitable",
    "is_sc_consistent",
    "knuth_estimate",
    "next_events",
    "parse_program",
    "pitt_estimate",
    "replay_thread",
    "restrict",
    "sc_maximal_events",
    "se_estimate",
    "t_predecessor_count",
    "t_successors",
    "visit_options",
]
