"""Closed-form mixture weights and the brute-force grid oracle that checks them.

The mixed gradient ``mu * g_s + (1 - mu) * g_r`` is compared against the
target ``alpha * g_s* + (1 - alpha) * g_r*``.  Its expected squared error is a
quadratic in ``mu`` whose minimizer has a closed form; the correlated and
biased variants add a trace cross-covariance ``c`` and a bias correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS_DEN = 1e-12


class DegenerateMomentsError(ValueError):
    """Raised when the MSE curvature vanishes and no unique minimizer exists."""


@dataclass(frozen=True)
class NoiseMoments:
    sigma_s_sq: float
    sigma_r_sq: float
    delta_g_sq: float
    cross_cov: float = 0.0

    def __post_init__(self):
        for name in ("sigma_s_sq", "sigma_r_sq", "delta_g_sq"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
        if not math.isfinite(self.cross_cov):
            raise ValueError(f"cross_cov must be finite, got {self.cross_cov!r}")


@dataclass(frozen=True)
class BiasSpec:
    """Bias correction terms.

    ``bias_inner`` is the inner product of the bias difference ``b_r - b_s``
    with the target gradient and ``bias_norm_sq`` its squared norm.  The
    caller owns the construction of both; :meth:`isotropic` builds the inner
    product from an alignment coefficient ``gamma``.
    """

    bias_inner: float = 0.0
    bias_norm_sq: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.bias_norm_sq) or self.bias_norm_sq < 0:
            raise ValueError(f"bias_norm_sq must be finite and >= 0, got {self.bias_norm_sq!r}")
        if not math.isfinite(self.bias_inner):
            raise ValueError(f"bias_inner must be finite, got {self.bias_inner!r}")

    @classmethod
    def isotropic(cls, gamma: float, target_norm_sq: float, bias_norm_sq: float) -> "BiasSpec":
        return cls(bias_inner=gamma * target_norm_sq, bias_norm_sq=bias_norm_sq, gamma=gamma)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    return alpha


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def mse_objective(mu, m: NoiseMoments, alpha: float):
    """Expected squared error of the mixed gradient; ``mu`` may be an array."""
    return (
        (mu - alpha) ** 2 * m.delta_g_sq
        + mu**2 * m.sigma_s_sq
        + (1 - mu) ** 2 * m.sigma_r_sq
        + 2 * mu * (1 - mu) * m.cross_cov
    )


def biased_objective(mu, m: NoiseMoments, b: BiasSpec, alpha: float):
    """Bias-aware surrogate whose stationary point is :func:`optimal_mu_biased`.

    Adds ``mu**2 * |db|^2 - 2 * mu * <db, g_bar>`` to :func:`mse_objective`;
    both extra terms vanish with the bias.
    """
    return mse_objective(mu, m, alpha) + mu**2 * b.bias_norm_sq - 2 * mu * b.bias_inner


def optimal_mu(m: NoiseMoments, alpha: float) -> float:
    """Unique minimizer of the independent-noise MSE (``cross_cov`` is ignored)."""
    alpha = _check_alpha(alpha)
    num = alpha * m.delta_g_sq + m.sigma_r_sq
    den = m.delta_g_sq + m.sigma_s_sq + m.sigma_r_sq
    if den <= 0:
        raise DegenerateMomentsError("delta_g_sq + sigma_s_sq + sigma_r_sq must be > 0")
    mu = num / den
    # num <= den whenever alpha <= 1, so this only absorbs rounding
    assert -1e-12 <= mu <= 1 + 1e-12, mu
    return _clip01(mu)


def _guarded(num: float, den: float, m: NoiseMoments, alpha: float, return_flag: bool):
    if den <= EPS_DEN:
        mu, fell_back = optimal_mu(m, alpha), True
    else:
        mu, fell_back = _clip01(num / den), False
    return (mu, fell_back) if return_flag else mu


def optimal_mu_correlated(m: NoiseMoments, alpha: float, *, return_flag: bool = False):
    """Minimizer with trace cross-covariance, clipped to [0, 1].

    A denominator at or below ``EPS_DEN`` falls back to :func:`optimal_mu`;
    pass ``return_flag=True`` to receive ``(mu, fell_back)``.
    """
    alpha = _check_alpha(alpha)
    c = m.cross_cov
    num = alpha * m.delta_g_sq + m.sigma_r_sq - c
    den = m.delta_g_sq + m.sigma_s_sq + m.sigma_r_sq - 2 * c
    return _guarded(num, den, m, alpha, return_flag)


def optimal_mu_biased(m: NoiseMoments, b: BiasSpec, alpha: float, *, return_flag: bool = False):
    alpha = _check_alpha(alpha)
    c = m.cross_cov
    num = alpha * m.delta_g_sq + m.sigma_r_sq - c + b.bias_inner
    den = m.delta_g_sq + m.sigma_s_sq + m.sigma_r_sq - 2 * c + b.bias_norm_sq
    return _guarded(num, den, m, alpha, return_flag)


def mu_grid(step: float) -> np.ndarray:
    if not 0 < step <= 0.1:
        raise ValueError(f"grid step must lie in (0, 0.1], got {step!r}")
    n = int(math.floor(1.0 / step + 1e-9))
    grid = np.arange(n + 1) * step
    if grid[-1] < 1.0:
        grid = np.append(grid, 1.0)
    return np.minimum(grid, 1.0)


def grid_oracle_mu(m: NoiseMoments, alpha: float, step: float = 1e-4, bias: BiasSpec | None = None) -> float:
    """Exhaustive scan of the objective over a uniform grid on [0, 1].

    Ties go to the smaller ``mu`` (``argmin`` returns the first index).
    """
    grid = mu_grid(step)
    if bias is None:
        values = mse_objective(grid, m, alpha)
    else:
        values = biased_objective(grid, m, bias, alpha)
    return float(grid[int(np.argmin(values))])
