"""Model-agnostic fairness-constrained re-ranking for recommender systems.

Measures the recommendation-quality gap between advantaged and
disadvantaged user groups and re-selects top-K lists by solving a 0-1
selection problem that maximizes total preference score subject to an
epsilon bound on that gap.
"""

from .core import (
    Candidate,
    CandidateSet,
    DatasetSplit,
    FairRerankError,
    GroupAssignment,
    GroupReport,
    Interaction,
    InteractionLog,
    RerankProblem,
    RerankSolution,
)
from .grouping import GroupingConfig, assign_groups
from .ingest import NegativeSamplingConfig, parse_interactions, sample_candidates, split_dataset
from .metrics import f1_at_k, f1_linear_coeffs, group_report, ndcg_at_k
from .mf import FactorModel, TrainConfig, train_bpr
from .rerank import (
    SolverConfig,
    build_problem,
    epsilon_from_baseline,
    finalize,
    solve,
    solve_exact,
    solve_lagrangian,
    solve_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "Candidate",
    "CandidateSet",
    "DatasetSplit",
    "FactorModel",
    "FairRerankError",
    "GroupAssignment",
    "GroupReport",
    "GroupingConfig",
    "Interaction",
    "InteractionLog",
    "NegativeSamplingConfig",
    "RerankProblem",
    "RerankSolution",
    "SolverConfig",
    "TrainConfig",
    "assign_groups",
    "build_problem",
    "epsilon_from_baseline",
    "f1_at_k",
    "f1_linear_coeffs",
    "finalize",
    "group_report",
    "ndcg_at_k",
    "parse_interactions",
    "sample_candidates",
    "solve",
    "solve_exact",
    "solve_lagrangian",
    "solve_oracle",
    "split_dataset",
    "train_bpr",
]
