"""Noise-aware adaptive mixing of SFT and RL gradient signals."""

from .alpha_controller import AlphaConfig, AlphaState, hysteresis_step, update_alpha
from .controller import (
    ControllerConfig,
    ControllerState,
    PriorSchedule,
    StepInput,
    compose_loss,
    controller_step,
    prior_mu,
)
from .estimator import (
    BiasSpec,
    DegenerateMomentsError,
    NoiseMoments,
    grid_oracle_mu,
    mse_objective,
    optimal_mu,
    optimal_mu_biased,
    optimal_mu_correlated,
)

__version__ = "0.1.0"
