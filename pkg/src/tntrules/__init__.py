"""Rule-based explanations of Bayesian-optimization results.

A GP surrogate is sampled over the search space, the samples are grouped
by hierarchical clustering cut on target variance, and every group
becomes a box rule ``IF x in box THEN f in interval`` ranked by
interestingness.
"""

from .bayes_opt import BayesianOptimizer, BOTrace, expected_improvement, run_bo
from .clustering import LinkageTree, VariancePruningClustering, build_linkage, distance_prune, variance_prune
from .dataset import ExplanationDataset, generate_dataset
from .estimator import TNTRules
from .gp import GaussianProcessRegressor, SEKernel
from .problems import PROBLEMS, ConfigError, Objective, ProblemConfig, SearchSpace, default_config, get_problem, load_config
from .rules import Rule, RuleSet, construct_rules, score_rules
from .sensitivity import sensitivity
from .tuning import TuningContext, evaluate_ts, nsga2_tune, scalar_tune

__version__ = "0.1.0"

__all__ = [
    "BayesianOptimizer",
    "BOTrace",
    "ConfigError",
    "ExplanationDataset",
    "GaussianProcessRegressor",
    "LinkageTree",
    "Objective",
    "PROBLEMS",
    "ProblemConfig",
    "Rule",
    "RuleSet",
    "SEKernel",
    "SearchSpace",
    "TNTRules",
    "TuningContext",
    "VariancePruningClustering",
    "build_linkage",
    "construct_rules",
    "default_config",
    "distance_prune",
    "evaluate_ts",
    "expected_improvement",
    "generate_dataset",
    "get_problem",
    "load_config",
    "nsga2_tune",
    "run_bo",
    "scalar_tune",
    "score_rules",
    "sensitivity",
    "variance_prune",
]
