"""KL-feedback controller for the target SFT share ``alpha``.

The smoothed KL is compared to its target; outside a dead band the share is
scaled by ``exp(step)`` and clipped to its bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class AlphaConfig:
    kl_target: float = 0.02
    alpha_min: float = 0.1
    alpha_max: float = 0.95
    eta_up: float = 0.2
    eta_down: float = 0.3
    hysteresis_h: float = 0.1
    kl_ema_decay: float = 0.9
    alpha_init: float = 0.5

    def __post_init__(self):
        if not self.kl_target > 0:
            raise ValueError("kl_target must be > 0")
        if not 0.0 <= self.alpha_min < self.alpha_max <= 1.0:
            raise ValueError("need 0 <= alpha_min < alpha_max <= 1")
        if not (self.eta_up > 0 and self.eta_down > 0):
            raise ValueError("eta_up and eta_down must be > 0")
        if self.hysteresis_h < 0:
            raise ValueError("hysteresis_h must be >= 0")
        if not 0.0 <= self.kl_ema_decay < 1.0:
            raise ValueError("kl_ema_decay must lie in [0, 1)")
        if not self.alpha_min <= self.alpha_init <= self.alpha_max:
            raise ValueError("alpha_init must lie in [alpha_min, alpha_max]")


@dataclass(frozen=True)
class AlphaState:
    alpha: float
    kl_ema: float = 0.0
    initialized: bool = False

    @classmethod
    def initial(cls, cfg: AlphaConfig) -> "AlphaState":
        return cls(alpha=cfg.alpha_init)


def hysteresis_step(kl_ratio: float, cfg: AlphaConfig) -> float:
    if not kl_ratio > 0:
        raise ValueError(f"kl_ratio must be > 0, got {kl_ratio!r}")
    h = cfg.hysteresis_h
    if kl_ratio > 1 + h:
        return cfg.eta_up * (kl_ratio - 1)
    if kl_ratio < 1 - h:
        return -cfg.eta_down * (1 - kl_ratio)
    return 0.0


def update_alpha(s: AlphaState, kl_raw: float, cfg: AlphaConfig) -> AlphaState:
    kl_raw = float(kl_raw)
    if not math.isfinite(kl_raw) or kl_raw < 0:
        raise ValueError(f"kl_raw must be finite and >= 0, got {kl_raw!r}")
    if s.initialized:
        d = cfg.kl_ema_decay
        kl_ema = d * s.kl_ema + (1 - d) * kl_raw
    else:
        kl_ema = kl_raw
    # zero KL has no defined ratio; treat it as far below target
    ratio = kl_ema / cfg.kl_target if kl_ema > 0 else 1e-300
    step = hysteresis_step(ratio, cfg)
    alpha = s.alpha
    if step != 0.0:
        # past this exponent alpha is clipped anyway; bounding it keeps exp finite
        step = min(step, math.log(cfg.alpha_max / cfg.alpha_min) if cfg.alpha_min > 0 else 50.0)
        alpha = min(cfg.alpha_max, max(cfg.alpha_min, alpha * math.exp(step)))
    return replace(s, alpha=alpha, kl_ema=kl_ema, initialized=True)
