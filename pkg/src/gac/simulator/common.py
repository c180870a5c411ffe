from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..controller import StepInput
from ..proxies import TokenCoefficients


@dataclass
class StepSample:
    """Everything one training step draws from a testbed."""

    seq_advantages: np.ndarray
    nll_per_sample: np.ndarray
    token_coeffs: TokenCoefficients
    grad_s: np.ndarray
    grad_r: np.ndarray
    loss_s: float
    loss_r: float
    reward_variance: float

    def step_input(self, kl_raw: float) -> StepInput:
        return StepInput(self.seq_advantages, self.nll_per_sample, self.token_coeffs, kl_raw)
