"""Catalyst-regularised structured pruning for dense networks, with the
supporting dynamics and geometry checks."""
from .dynamics import DynamicsState, Outcome, gd_step, recurrence_step, simulate_trajectory
from .ext import ExtendedSubmodule, c_ratios, catalyst_reg, catalyst_reg_grad, embed, psi
from .geometry import check_thm1_equivalence, dist_to_Xtgt, in_Xtgt, witness_D
from .nn import Activation, Model, PruneSet, Submodule, filter_norms, forward_submodule
from .pipeline import RunLog, TrainConfig, catalyst_prune_full
from .prune import contract, prune, select_prune_indices, verify_function_preservation

__version__ = "0.1.0"
