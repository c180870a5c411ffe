"""Fixed simulator suites shared by the ablation command and the acceptance tests.

Every suite is fully determined by its constants and the seed list, so the
numbers it produces are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import QCM_MU, BaselineRule
from .controller import ControllerConfig, ControllerState, controller_step, prior_mu
from .metrics import kl_area, large_shift_rate, oscillation_power_ratio
from .proxies import DegradationMode
from .simulator import Arm, LyapunovSpec, QuadraticProblem, RunTrace, ToyPolicyProblem, run_training

SEEDS = (0, 1, 2)


@dataclass(frozen=True)
class ToySuite:
    problem: dict = field(default_factory=dict)
    steps: int = 800
    learning_rate: float = 1.0
    seeds: tuple[int, ...] = SEEDS
    kl_target: float = 0.02
    shift_threshold: float = 0.02

    def make_problem(self, seed: int) -> ToyPolicyProblem:
        return ToyPolicyProblem(instance_seed=seed, **self.problem)

    def run(self, arm: Arm, seed: int, record_inputs: list | None = None) -> RunTrace:
        return run_training(
            self.make_problem(seed), arm, self.steps, self.learning_rate, seed, record_inputs=record_inputs
        )


TOY_SUITE = ToySuite()


def full_arm(cfg: ControllerConfig | None = None) -> Arm:
    return Arm("full", controller=cfg or ControllerConfig())


def constant_arm(value: float = QCM_MU) -> Arm:
    return Arm("constant", rule=BaselineRule(kind="constant", value=value))


def degradation_arms(base: ControllerConfig | None = None) -> list[Arm]:
    base = base or ControllerConfig()
    modes = {
        "const_sigma_r": DegradationMode("constant_sigma_r", 1.0),
        "shuffled_delta_g": DegradationMode("shuffled_delta_g"),
        "random_delta_g": DegradationMode("random_delta_g"),
    }
    return [Arm(name, controller=replace(base, degradation=m)) for name, m in modes.items()]


def ablation_arms(base: ControllerConfig | None = None) -> list[Arm]:
    """The fixed ablation grid: each arm removes or alters one component."""
    base = base or ControllerConfig()
    return [
        Arm("full", controller=base),
        Arm("no_cap", controller=replace(base, cap=None)),
        Arm("no_ema", controller=replace(base, beta_ema=0.0)),
        Arm("lambda_1", controller=replace(base, blend_lambda=1.0)),
        Arm("lambda_0", controller=replace(base, blend_lambda=0.0, mu_init=prior_mu(0, base.prior))),
        Arm("no_trim", controller=replace(base, trim_frac=0.0)),
        *degradation_arms(base),
    ]


def window_shift_rates(suite: ToySuite, arms: list[Arm]) -> dict[str, list[float]]:
    """Per-seed large-shift rate measured across refresh windows."""
    out: dict[str, list[float]] = {}
    for arm in arms:
        window = arm.controller.update_freq if arm.controller else 10
        out[arm.name] = [
            large_shift_rate(suite.run(arm, s), suite.shift_threshold, window) for s in suite.seeds
        ]
    return out


def kl_areas(suite: ToySuite, arms: list[Arm]) -> dict[str, list[float]]:
    return {arm.name: [kl_area(suite.run(arm, s), suite.kl_target) for s in suite.seeds] for arm in arms}


def replay_mu(cfg: ControllerConfig, inputs) -> np.ndarray:
    """Drive a fresh controller with a recorded input stream; returns the mu series."""
    state = ControllerState.initial(cfg)
    mus = []
    for inp in inputs:
        state, mu, _ = controller_step(state, inp, cfg)
        mus.append(mu)
    return np.asarray(mus)


def ema_power_ratios(suite: ToySuite = TOY_SUITE, beta: float = 0.99, cutoff_frac: float = 0.5) -> list[float]:
    """High-frequency mu power with the mu-EMA relative to without, on matched inputs.

    Each seed's input stream is recorded once from a full-controller run and
    replayed through both settings, so the noise is identical.
    """
    ratios = []
    for s in suite.seeds:
        inputs: list = []
        suite.run(full_arm(), s, record_inputs=inputs)
        with_ema = replay_mu(ControllerConfig(beta_ema=beta), inputs)
        without = replay_mu(ControllerConfig(beta_ema=0.0), inputs)
        ratios.append(oscillation_power_ratio(with_ema, without, cutoff_frac))
    return ratios


# quadratic suite ----------------------------------------------------------

QUAD_DIM = 10
QUAD_NOISE = dict(sigma_s_sq=0.01, sigma_r_sq=0.04, cross_cov=0.0)


def quadratic_problem(seed: int, **kw) -> QuadraticProblem:
    params = {**QUAD_NOISE, **kw}
    return QuadraticProblem.random(QUAD_DIM, np.random.default_rng(10_000 + seed), **params)


@dataclass
class LyapunovResult:
    v0: float
    v_final: float
    mean_delta_outside: float
    steps_outside: int
    neighborhood: float


def lyapunov_run(seed: int, steps: int = 800, cap: float = 0.01, tail_frac: float = 0.2) -> LyapunovResult:
    """Quadratic run at ``eta = 1/(2L)`` with the potential tracked every step.

    The terminal neighborhood is ``V <= 2 * mean(V over the last tail_frac of
    steps)``; the mean one-step change is taken over steps starting outside it.
    """
    prob = quadratic_problem(seed)
    lr = 1.0 / (2.0 * prob.smoothness)
    cfg = ControllerConfig(cap=cap, prior=replace(ControllerConfig().prior, total_steps=steps))
    spec = LyapunovSpec(theta_star=prob.theta_star(), alpha_ref=prob.alpha_ref, smoothness=prob.smoothness)
    trace = run_training(prob, Arm("full", controller=cfg), steps, lr, seed, lyapunov=spec)
    v = np.concatenate([[trace.meta["potential_initial"]], trace.column("potential")])
    tail = v[-max(1, int(tail_frac * steps)) :]
    radius = 2.0 * float(tail.mean())
    dv = np.diff(v)
    outside = v[:-1] > radius
    mean_dv = float(dv[outside].mean()) if outside.any() else math.nan
    return LyapunovResult(float(v[0]), float(v[-1]), mean_dv, int(outside.sum()), radius)
