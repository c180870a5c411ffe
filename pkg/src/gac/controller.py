"""Guided adaptive controller: the guarded online update of the mixing weight.

Every ``update_freq`` steps the proxy statistics are refreshed and folded
into their EMAs.  Every step the KL controller moves ``alpha``, the closed
form gives ``mu_star``, and the deployed weight is

    mu_ada   = beta * mu_prev + (1 - beta) * mu_star
    mu_blend = (1 - lambda) * mu_prior(t) + lambda * mu_ada
    mu_t     = clip(mu_prev + clip(mu_blend - mu_prev, +-cap), [mu_min, mu_max])
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .alpha_controller import AlphaConfig, AlphaState, update_alpha
from .estimator import EPS_DEN, NoiseMoments, optimal_mu
from .proxies import (
    DegradationMode,
    EmaEstimates,
    RawProxies,
    TokenCoefficients,
    advantage_dispersion,
    apply_degradation,
    disagreement_proxy,
    ema_update,
    trimmed_nll_variance,
)

PRIOR_KINDS = ("warmup_cosine", "constant", "linear")


@dataclass(frozen=True)
class PriorSchedule:
    kind: str = "warmup_cosine"
    warmup_steps: int = 0
    total_steps: int = 800
    mu_start: float = 0.85
    mu_peak: float = 0.85
    mu_end: float = 0.15

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}; expected one of {PRIOR_KINDS}")
        if self.total_steps <= 0 or not 0 <= self.warmup_steps <= self.total_steps:
            raise ValueError("need total_steps > 0 and 0 <= warmup_steps <= total_steps")
        for name in ("mu_start", "mu_peak", "mu_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def prior_mu(t: int, p: PriorSchedule) -> float:
    if t < 0:
        raise ValueError("step index must be >= 0")
    if p.kind == "constant":
        return p.mu_start
    if t >= p.total_steps:
        return p.mu_end
    if p.kind == "linear":
        return p.mu_start + (p.mu_end - p.mu_start) * t / p.total_steps
    if t < p.warmup_steps:
        return p.mu_start + (p.mu_peak - p.mu_start) * t / p.warmup_steps
    if t == p.warmup_steps:
        return p.mu_peak
    progress = (t - p.warmup_steps) / (p.total_steps - p.warmup_steps)
    return p.mu_end + 0.5 * (p.mu_peak - p.mu_end) * (1.0 + math.cos(math.pi * progress))


@dataclass(frozen=True)
class ControllerConfig:
    beta_ema: float = 0.99
    cap: float | None = 0.01
    blend_lambda: float = 0.5
    update_freq: int = 10
    mu_min: float = 0.0
    mu_max: float = 1.0
    mu_init: float = 0.5
    prior: PriorSchedule = field(default_factory=PriorSchedule)
    alpha: AlphaConfig = field(default_factory=AlphaConfig)
    stats_decay: float = 0.9
    trim_frac: float = 0.1
    degradation: DegradationMode = field(default_factory=DegradationMode)
    early_update_freq: int | None = None
    early_steps: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta_ema <= 1.0:
            raise ValueError("beta_ema must lie in [0, 1]")
        if self.cap is not None and not self.cap > 0:
            raise ValueError("cap must be > 0 (or None to disable)")
        if not 0.0 <= self.blend_lambda <= 1.0:
            raise ValueError("blend_lambda must lie in [0, 1]")
        if self.update_freq < 1 or (self.early_update_freq is not None and self.early_update_freq < 1):
            raise ValueError("update frequencies must be >= 1")
        if not 0.0 <= self.mu_min < self.mu_max <= 1.0:
            raise ValueError("need 0 <= mu_min < mu_max <= 1")
        if not self.mu_min <= self.mu_init <= self.mu_max:
            raise ValueError("mu_init must lie in [mu_min, mu_max]")
        if not 0.0 <= self.stats_decay <= 1.0:
            raise ValueError("stats_decay must lie in [0, 1]")

    def refresh_due(self, t: int) -> bool:
        freq = self.update_freq
        if self.early_update_freq is not None and t < self.early_steps:
            freq = self.early_update_freq
        return t % freq == 0


@dataclass(frozen=True)
class StepInput:
    seq_advantages: np.ndarray
    nll_per_sample: np.ndarray
    token_coeffs: TokenCoefficients
    kl_raw: float


@dataclass(frozen=True)
class Diagnostics:
    step: int
    mu: float
    mu_star: float
    mu_ada: float
    mu_blend: float
    mu_prior: float
    alpha: float
    kl_ema: float
    raw: RawProxies | None
    ema: RawProxies
    refreshed: bool
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ControllerState:
    mu_prev: float
    alpha_state: AlphaState
    ema: EmaEstimates
    step: int = 0
    last: Diagnostics | None = None

    @classmethod
    def initial(cls, cfg: ControllerConfig) -> "ControllerState":
        return cls(
            mu_prev=cfg.mu_init,
            alpha_state=AlphaState.initial(cfg.alpha),
            ema=EmaEstimates(decay=cfg.stats_decay),
        )


def raw_proxies(inp: StepInput, trim_frac: float) -> tuple[RawProxies, bool]:
    dg, degenerate = disagreement_proxy(inp.token_coeffs, return_flag=True)
    raw = RawProxies(
        trimmed_nll_variance(inp.nll_per_sample, trim_frac),
        advantage_dispersion(inp.seq_advantages),
        dg,
    )
    return raw, degenerate


def controller_step(
    state: ControllerState, inp: StepInput, cfg: ControllerConfig
) -> tuple[ControllerState, float, Diagnostics]:
    """Advance the controller by one training step.

    Pure: the input state is never mutated, so a proxy error leaves the
    caller's state exactly as it was.
    """
    t = state.step
    flags: list[str] = []
    ema, raw = state.ema, None
    refreshed = cfg.refresh_due(t)
    if refreshed:
        raw, degenerate = raw_proxies(inp, cfg.trim_frac)
        if degenerate:
            flags.append("zero_spread_coeffs")
        if cfg.degradation.kind != "none":
            rng = np.random.default_rng([cfg.degradation.seed, t])
            raw = apply_degradation(cfg.degradation, raw, inp.token_coeffs, rng)
        ema = ema_update(ema, raw)

    alpha_state = update_alpha(state.alpha_state, inp.kl_raw, cfg.alpha)
    alpha = alpha_state.alpha

    est = ema.values()
    moments = NoiseMoments(sigma_s_sq=est.sigma_s_sq, sigma_r_sq=est.sigma_r_sq, delta_g_sq=est.delta_g_sq)
    if moments.delta_g_sq + moments.sigma_s_sq + moments.sigma_r_sq <= EPS_DEN:
        # no information in the proxies: hold the current weight
        mu_star = state.mu_prev
        flags.append("degenerate_moments")
    else:
        mu_star = optimal_mu(moments, alpha)

    beta, lam = cfg.beta_ema, cfg.blend_lambda
    mu_ada = beta * state.mu_prev + (1 - beta) * mu_star
    mu_prior = prior_mu(t, cfg.prior)
    mu_blend = (1 - lam) * mu_prior + lam * mu_ada

    delta = mu_blend - state.mu_prev
    if cfg.cap is not None and abs(delta) > cfg.cap:
        mu_t = state.mu_prev + math.copysign(cfg.cap, delta)
        flags.append("capped")
    else:
        mu_t = mu_blend
    mu_t = min(cfg.mu_max, max(cfg.mu_min, mu_t))

    diag = Diagnostics(
        step=t,
        mu=mu_t,
        mu_star=mu_star,
        mu_ada=mu_ada,
        mu_blend=mu_blend,
        mu_prior=mu_prior,
        alpha=alpha,
        kl_ema=alpha_state.kl_ema,
        raw=raw,
        ema=est,
        refreshed=refreshed,
        flags=tuple(flags),
    )
    new_state = replace(state, mu_prev=mu_t, alpha_state=alpha_state, ema=ema, step=t + 1, last=diag)
    return new_state, mu_t, diag


def compose_loss(mu: float, loss_rl: float, loss_sft: float) -> float:
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu!r}")
    return (1 - mu) * loss_rl + mu * loss_sft
