"""Synthetic testbeds with exact ground truth, the training loop and run traces."""

from .common import StepSample
from .quadratic import QuadraticProblem, quad_exact_moments, quad_sample_gradients
from .toy_policy import (
    RolloutBatch,
    ToyPolicyProblem,
    group_advantages,
    rl_gradient_variance,
    rollout_group,
    toy_exact_gradients,
    toy_exact_kl,
    toy_losses,
)
from .trace import COLUMNS, RunTrace
from .training import Arm, LyapunovSpec, lyapunov_potential, run_training

__all__ = [
    "COLUMNS",
    "Arm",
    "LyapunovSpec",
    "QuadraticProblem",
    "RolloutBatch",
    "RunTrace",
    "StepSample",
    "ToyPolicyProblem",
    "group_advantages",
    "lyapunov_potential",
    "quad_exact_moments",
    "quad_sample_gradients",
    "rl_gradient_variance",
    "rollout_group",
    "run_training",
    "toy_exact_gradients",
    "toy_exact_kl",
    "toy_losses",
]
