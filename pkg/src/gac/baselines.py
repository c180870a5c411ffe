"""Rule-based mixing controllers used as comparison arms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .controller import PriorSchedule, prior_mu

RULE_KINDS = ("constant", "schedule", "kl_ctrl", "rewvar_ctrl", "gradnorm_ctrl", "dwa")

# the only constant weight the fixed-schedule comparison arm is ever quoted at
QCM_MU = 0.58


class MissingObservationError(KeyError):
    pass


@dataclass(frozen=True)
class BaselineRule:
    kind: str = "constant"
    value: float = QCM_MU
    kappa: float = 0.1
    floor: float = 1e-3
    calibration_window: int = 50
    temperature: float = 2.0
    schedule: PriorSchedule = field(default_factory=PriorSchedule)

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}; expected one of {RULE_KINDS}")
        if self.kappa <= 0 or self.floor <= 0 or self.temperature <= 0 or self.calibration_window < 1:
            raise ValueError("kappa, floor, temperature and calibration_window must be positive")


@dataclass
class Observation:
    t: int = 0
    kl: float | None = None
    reward_variance: float | None = None
    grad_norm_s: float | None = None
    grad_norm_r: float | None = None
    loss_history_s: Sequence[float] = ()
    loss_history_r: Sequence[float] = ()


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _require(obs: Observation, *names: str) -> list[float]:
    out = []
    for name in names:
        value = getattr(obs, name)
        if value is None or not math.isfinite(value):
            raise MissingObservationError(f"rule needs a finite {name!r} observation")
        out.append(float(value))
    return out


class BaselineController:
    """Stateful wrapper: the reward-variance rule keeps its calibration window here."""

    def __init__(self, rule: BaselineRule):
        self.rule = rule
        self._inv_var: list[float] = []

    def __call__(self, obs: Observation) -> float:
        return baseline_mu(self.rule, obs, self)


def baseline_mu(rule: BaselineRule, obs: Observation, ctrl: BaselineController | None = None) -> float:
    kind = rule.kind
    if kind == "constant":
        return _clip01(rule.value)
    if kind == "schedule":
        return _clip01(prior_mu(obs.t, rule.schedule))
    if kind == "kl_ctrl":
        (kl,) = _require(obs, "kl")
        return _clip01(1.0 - kl / rule.kappa)
    if kind == "rewvar_ctrl":
        (var,) = _require(obs, "reward_variance")
        inv = 1.0 / (max(var, 0.0) + rule.floor)
        # scale so the mean output over the calibration window is 0.5
        history = ctrl._inv_var if ctrl is not None else []
        if len(history) < rule.calibration_window:
            history.append(inv)
        scale = 0.5 / (sum(history) / len(history)) if history else 0.5 / inv
        return _clip01(scale * inv)
    if kind == "gradnorm_ctrl":
        gs, gr = _require(obs, "grad_norm_s", "grad_norm_r")
        total = abs(gs) + abs(gr)
        return 0.5 if total == 0 else _clip01(abs(gs) / total)
    # dwa: softmax over the last loss ratio of each objective
    hs, hr = list(obs.loss_history_s), list(obs.loss_history_r)
    if len(hs) < 2 or len(hr) < 2:
        return 0.5
    ratios = []
    for h in (hs, hr):
        prev = h[-2]
        ratios.append(h[-1] / prev if prev != 0 else 1.0)
    top = max(ratios)
    ws, wr = (math.exp((r - top) / rule.temperature) for r in ratios)
    return _clip01(ws / (ws + wr))
