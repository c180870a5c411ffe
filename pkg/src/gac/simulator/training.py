"""Plain gradient-descent training loop shared by both testbeds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..baselines import BaselineController, BaselineRule, Observation
from ..controller import ControllerConfig, ControllerState, compose_loss, controller_step, raw_proxies

NAN = float("nan")


@dataclass(frozen=True)
class Arm:
    """One comparison arm: the guided controller or a rule-based baseline."""

    name: str
    controller: ControllerConfig | None = None
    rule: BaselineRule | None = None

    def __post_init__(self):
        if (self.controller is None) == (self.rule is None):
            raise ValueError("an arm needs exactly one of controller or rule")


@dataclass(frozen=True)
class LyapunovSpec:
    theta_star: np.ndarray
    alpha_ref: float = 0.5
    rho: float = 1.0
    smoothness: float = math.inf
    step_bound: float = 0.1

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be >= 0")


def lyapunov_potential(theta, mu: float, spec: LyapunovSpec) -> float:
    """``|theta - theta*|^2 + rho * (mu - alpha_ref)^2``."""
    diff = np.asarray(theta, dtype=float) - spec.theta_star
    return float(np.sum(diff * diff)) + spec.rho * (mu - spec.alpha_ref) ** 2


def default_lyapunov(problem) -> LyapunovSpec | None:
    star = getattr(problem, "theta_star", None)
    if star is None:
        return None
    return LyapunovSpec(theta_star=star(), alpha_ref=problem.alpha_ref, smoothness=problem.smoothness)


@dataclass
class _KlTracker:
    decay: float
    value: float = NAN

    def update(self, kl: float) -> float:
        self.value = kl if math.isnan(self.value) else self.decay * self.value + (1 - self.decay) * kl
        return self.value


def run_training(
    problem,
    arm: Arm,
    steps: int,
    learning_rate: float,
    seed: int,
    lyapunov: LyapunovSpec | None = None,
    meta: dict | None = None,
    record_inputs: list | None = None,
):
    """Train ``problem`` for ``steps`` steps under ``arm`` and record every step.

    A non-finite loss or parameter stops the run; the partial trace is
    returned with ``trace.error`` set.  When ``record_inputs`` is a list,
    every controller input is appended to it so the same stream can be
    replayed through other controller settings.
    """
    from .trace import RunTrace

    if not learning_rate > 0:
        raise ValueError("learning_rate must be > 0")
    rng = np.random.default_rng(seed)
    theta = problem.init_params()
    if lyapunov is None:
        lyapunov = default_lyapunov(problem)

    cfg = arm.controller
    trim = cfg.trim_frac if cfg is not None else 0.1
    state = ControllerState.initial(cfg) if cfg is not None else None
    rule = BaselineController(arm.rule) if arm.rule is not None else None
    kl_tracker = _KlTracker(decay=cfg.alpha.kl_ema_decay if cfg is not None else 0.9)
    hist_s: list[float] = []
    hist_r: list[float] = []

    mu0 = cfg.mu_init if cfg is not None else NAN
    trace = RunTrace(
        meta={
            "arm": arm.name,
            "seed": seed,
            "steps": steps,
            "learning_rate": learning_rate,
            "potential_initial": lyapunov_potential(theta, mu0, lyapunov) if lyapunov and cfg else NAN,
            **(meta or {}),
        }
    )

    for t in range(steps):
        sample = problem.sample_step(theta, rng)
        kl = problem.kl(theta)
        if not (math.isfinite(kl) and math.isfinite(sample.loss_s) and math.isfinite(sample.loss_r)):
            trace.error = f"non-finite loss or KL at step {t}"
            break
        inp = sample.step_input(kl)
        if record_inputs is not None:
            record_inputs.append(inp)
        raw, _ = raw_proxies(inp, trim)
        flags: tuple[str, ...] = ()
        if cfg is not None:
            state, mu, diag = controller_step(state, inp, cfg)
            alpha, kl_ema, ema = diag.alpha, diag.kl_ema, diag.ema
            mu_star, mu_ada, mu_blend, mu_prior = diag.mu_star, diag.mu_ada, diag.mu_blend, diag.mu_prior
            refreshed, flags = diag.refreshed, diag.flags
        else:
            kl_ema = kl_tracker.update(kl)
            obs = Observation(
                t=t,
                kl=kl,
                reward_variance=sample.reward_variance,
                grad_norm_s=float(np.linalg.norm(sample.grad_s)),
                grad_norm_r=float(np.linalg.norm(sample.grad_r)),
                loss_history_s=tuple(hist_s),
                loss_history_r=tuple(hist_r),
            )
            mu = rule(obs)
            alpha = mu_star = mu_ada = mu_blend = mu_prior = NAN
            ema = (NAN, NAN, NAN)
            refreshed = False

        loss = compose_loss(mu, sample.loss_r, sample.loss_s)
        new_theta = theta - learning_rate * ((1 - mu) * sample.grad_r + mu * sample.grad_s)
        step_norm = float(np.linalg.norm(new_theta - theta))
        if not (math.isfinite(loss) and np.all(np.isfinite(new_theta))):
            trace.error = f"non-finite loss or parameters at step {t}"
            break
        theta = new_theta
        hist_s.append(sample.loss_s)
        hist_r.append(sample.loss_r)
        potential = lyapunov_potential(theta, mu, lyapunov) if lyapunov else NAN
        trace.append(
            step=t,
            mu=mu,
            alpha=alpha,
            kl=kl,
            kl_ema=kl_ema,
            sigma_s_sq_raw=raw.sigma_s_sq,
            sigma_r_sq_raw=raw.sigma_r_sq,
            delta_g_sq_raw=raw.delta_g_sq,
            sigma_s_sq_ema=ema[0],
            sigma_r_sq_ema=ema[1],
            delta_g_sq_ema=ema[2],
            mu_star=mu_star,
            mu_ada=mu_ada,
            mu_blend=mu_blend,
            mu_prior=mu_prior,
            loss_s=sample.loss_s,
            loss_r=sample.loss_r,
            loss=loss,
            potential=potential,
            step_norm=step_norm,
            refreshed=refreshed,
            flags="|".join(flags),
        )
    trace.meta["final_theta_norm"] = float(np.linalg.norm(theta))
    return trace
