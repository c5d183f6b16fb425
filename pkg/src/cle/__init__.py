"""Local explanations of black-box classifiers with feature-combination terms."""
from .errors import *  # noqa: F401,F403
from .explainer import (ExplainConfig, Explanation, Term, calibrate, estimate_cost, explain,
                        explain_cle, explain_greedy, explain_lime, explain_random)
from .representation import (BinaryRepr, CombinationSpec, ExtendedRepr,
                             extend_with_combinations, reconstruct)
from .sampler import KernelConfig, distance, kernel_weight, perturb
from .solver import LinearExplanationModel, k_lasso, lasso_cd, weighted_lstsq

__version__ = "0.1.0"
