"""Stochastic two-objective quadratic testbed with exact noise moments.

``L_s(theta) = 0.5 (theta - theta_s)^T A_s (theta - theta_s)`` and likewise
for ``L_r``.  Gradient samples add per-coordinate Gaussian noise with the
configured variances and cross-covariance, plus fixed bias vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..estimator import NoiseMoments
from ..proxies import TokenCoefficients
from .common import StepSample


def _as_matrix(a: np.ndarray) -> np.ndarray:
    return np.diag(a) if a.ndim == 1 else a


@dataclass
class QuadraticProblem:
    """Curvatures are diagonals (1-D) or full symmetric matrices (2-D).

    Noise variances and the cross-covariance are per coordinate; the
    moments seen by the estimator are their traces.
    """

    a_s: np.ndarray
    a_r: np.ndarray
    theta_s: np.ndarray
    theta_r: np.ndarray
    sigma_s_sq: float = 0.0
    sigma_r_sq: float = 0.0
    cross_cov: float = 0.0
    bias_s: np.ndarray | None = None
    bias_r: np.ndarray | None = None
    theta_init: np.ndarray | None = None
    batch_size: int = 16
    kl_scale: float = 0.005
    alpha_ref: float = 0.5
    name: str = field(default="quadratic", repr=False)

    def __post_init__(self):
        self.a_s = np.asarray(self.a_s, dtype=float)
        self.a_r = np.asarray(self.a_r, dtype=float)
        self.theta_s = np.asarray(self.theta_s, dtype=float)
        self.theta_r = np.asarray(self.theta_r, dtype=float)
        d = self.theta_s.shape[0]
        if self.theta_r.shape != (d,):
            raise ValueError("theta_s and theta_r must share one dimension")
        for a in (self.a_s, self.a_r):
            m = _as_matrix(a)
            if m.shape != (d, d) or not np.allclose(m, m.T):
                raise ValueError("curvature must be a length-d diagonal or a symmetric d x d matrix")
            if np.linalg.eigvalsh(m).min() <= 0:
                raise ValueError("curvature must be positive definite")
        if self.sigma_s_sq < 0 or self.sigma_r_sq < 0:
            raise ValueError("noise variances must be >= 0")
        if self.cross_cov**2 > self.sigma_s_sq * self.sigma_r_sq + 1e-15:
            raise ValueError("cross_cov^2 must not exceed sigma_s_sq * sigma_r_sq")
        self.bias_s = np.zeros(d) if self.bias_s is None else np.asarray(self.bias_s, dtype=float)
        self.bias_r = np.zeros(d) if self.bias_r is None else np.asarray(self.bias_r, dtype=float)
        self.theta_init = np.zeros(d) if self.theta_init is None else np.asarray(self.theta_init, dtype=float)
        if self.batch_size < 3:
            raise ValueError("batch_size must be >= 3 for the trimmed SFT variance")

    @property
    def dim(self) -> int:
        return self.theta_s.shape[0]

    @property
    def smoothness(self) -> float:
        return float(max(np.linalg.eigvalsh(_as_matrix(a)).max() for a in (self.a_s, self.a_r)))

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator, **kw) -> "QuadraticProblem":
        """Diagonal instance with curvatures in [0.5, 2] and optima a unit-ish distance apart."""
        a_s = rng.uniform(0.5, 2.0, dim)
        a_r = rng.uniform(0.5, 2.0, dim)
        theta_s = rng.normal(0.0, 1.0 / math.sqrt(dim), dim)
        theta_r = theta_s + rng.normal(0.0, 1.0 / math.sqrt(dim), dim)
        kw.setdefault("theta_init", rng.normal(0.0, 3.0 / math.sqrt(dim), dim))
        return cls(a_s=a_s, a_r=a_r, theta_s=theta_s, theta_r=theta_r, **kw)

    def _apply(self, a: np.ndarray, x: np.ndarray) -> np.ndarray:
        return a * x if a.ndim == 1 else x @ a.T

    def grad_s(self, theta: np.ndarray) -> np.ndarray:
        return self._apply(self.a_s, theta - self.theta_s)

    def grad_r(self, theta: np.ndarray) -> np.ndarray:
        return self._apply(self.a_r, theta - self.theta_r)

    def loss_s(self, theta: np.ndarray) -> float:
        diff = theta - self.theta_s
        return 0.5 * float(diff @ self._apply(self.a_s, diff))

    def loss_r(self, theta: np.ndarray) -> float:
        diff = theta - self.theta_r
        return 0.5 * float(diff @ self._apply(self.a_r, diff))

    def mixture_optimum(self, mu: float) -> np.ndarray:
        a = mu * _as_matrix(self.a_s) + (1 - mu) * _as_matrix(self.a_r)
        b = mu * _as_matrix(self.a_s) @ self.theta_s + (1 - mu) * _as_matrix(self.a_r) @ self.theta_r
        return np.linalg.solve(a, b)

    def kl(self, theta: np.ndarray) -> float:
        diff = theta - self.theta_init
        return self.kl_scale * float(diff @ diff)

    def init_params(self) -> np.ndarray:
        return self.theta_init.copy()

    def theta_star(self) -> np.ndarray:
        return self.mixture_optimum(self.alpha_ref)

    def sample_step(self, theta: np.ndarray, rng: np.random.Generator) -> StepSample:
        g_s, g_r = quad_sample_gradients(self, theta, rng, n=self.batch_size)
        adv = g_r.sum(axis=1)
        summary_s = g_s.sum(axis=1)
        nll = summary_s - summary_s.min()
        coeffs = TokenCoefficients(g_r, g_s, np.ones_like(g_r, dtype=bool))
        return StepSample(
            seq_advantages=adv,
            nll_per_sample=nll,
            token_coeffs=coeffs,
            grad_s=g_s.mean(axis=0),
            grad_r=g_r.mean(axis=0),
            loss_s=self.loss_s(theta),
            loss_r=self.loss_r(theta),
            reward_variance=float(np.var(adv)),
        )


def quad_exact_moments(p: QuadraticProblem, theta) -> NoiseMoments:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (p.dim,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({p.dim},)")
    diff = p.grad_s(theta) - p.grad_r(theta)
    d = p.dim
    return NoiseMoments(
        sigma_s_sq=d * p.sigma_s_sq,
        sigma_r_sq=d * p.sigma_r_sq,
        delta_g_sq=float(diff @ diff),
        cross_cov=d * p.cross_cov,
    )


def quad_sample_gradients(p: QuadraticProblem, theta, rng, n: int | None = None):
    """Noisy, biased gradient draws; shape ``(d,)`` or ``(n, d)`` when ``n`` is given.

    ``rng`` is a Generator or an integer seed.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    theta = np.asarray(theta, dtype=float)
    shape = (p.dim,) if n is None else (n, p.dim)
    z1 = rng.standard_normal(shape)
    z2 = rng.standard_normal(shape)
    ss, sr, c = p.sigma_s_sq, p.sigma_r_sq, p.cross_cov
    sd_s = math.sqrt(ss)
    # 2x2 Cholesky of [[ss, c], [c, sr]] per coordinate
    l21 = c / sd_s if sd_s > 0 else 0.0
    l22 = math.sqrt(max(sr - l21 * l21, 0.0))
    eps_s = sd_s * z1
    eps_r = l21 * z1 + l22 * z2
    g_s = p.grad_s(theta) + p.bias_s + eps_s
    g_r = p.grad_r(theta) + p.bias_r + eps_r
    return g_s, g_r
