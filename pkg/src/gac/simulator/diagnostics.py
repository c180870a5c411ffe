"""Proxy-versus-ground-truth diagnostics on the toy policy testbed.

Each diagnostic point is a policy state.  At every point a few rollout
batches are drawn; the online proxies are computed from the batch tensors
and compared with quantities from the exact tabular gradients of the same
batches.  Batches where a coefficient stream has zero spread are skipped,
because the disagreement proxy is undefined there (it takes its guard
value instead).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..proxies import advantage_dispersion, disagreement_proxy, pearson_r, shuffle_stream
from .toy_policy import ToyPolicyProblem, rl_gradient_variance, toy_exact_gradients


@dataclass
class ProxyDiagnostics:
    dg_proxy: np.ndarray
    dg_exact: np.ndarray
    dg_exact_unit: np.ndarray  # same, with both gradients scaled to unit norm
    dg_shuffled: np.ndarray
    sr_proxy: np.ndarray
    sr_exact: np.ndarray

    def __len__(self) -> int:
        return self.dg_proxy.size

    def correlations(self) -> dict[str, float]:
        return {
            "delta_g": pearson_r(self.dg_proxy, self.dg_exact),
            "delta_g_unit": pearson_r(self.dg_proxy, self.dg_exact_unit),
            "delta_g_shuffled": pearson_r(self.dg_shuffled, self.dg_exact),
            "sigma_r": pearson_r(self.sr_proxy, self.sr_exact),
        }


def _unit(g: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(g)
    return g / n if n > 0 else g


def proxy_diagnostics(
    seed: int,
    disagreements=tuple(np.linspace(0.0, 0.8, 10)),
    checkpoints: int = 6,
    batches_per_point: int = 4,
    steps_between: int = 40,
    learning_rate: float = 1.0,
    mix: float = 0.5,
    max_draws: int = 1000,
    **problem_kw,
) -> ProxyDiagnostics:
    """Collect ``len(disagreements) * checkpoints`` diagnostic points.

    One toy instance per disagreement level; the policy moves between
    checkpoints by plain descent on the ``mix``-weighted loss.
    """
    rng = np.random.default_rng(seed)
    cols: dict[str, list[float]] = {k: [] for k in ProxyDiagnostics.__dataclass_fields__}
    for k, dis in enumerate(disagreements):
        prob = ToyPolicyProblem(instance_seed=1000 * seed + k, disagreement=float(dis), **problem_kw)
        theta = prob.init_params()
        for _ in range(checkpoints):
            acc: dict[str, list[float]] = {key: [] for key in cols}
            draws = 0
            while len(acc["dg_proxy"]) < batches_per_point:
                draws += 1
                if draws > max_draws:
                    raise RuntimeError("could not draw enough non-degenerate batches")
                batch = prob.sample_batch(theta, rng)
                weights = prob.sft_weights(theta, batch)
                coeffs = prob.token_coefficients(theta, batch)
                value, flat = disagreement_proxy(coeffs, return_flag=True)
                if flat:
                    continue
                g_s, g_r = toy_exact_gradients(prob, theta, batch, weights)
                acc["dg_proxy"].append(value)
                acc["dg_exact"].append(float(np.sum((g_s - g_r) ** 2)))
                acc["dg_exact_unit"].append(float(np.sum((_unit(g_s) - _unit(g_r)) ** 2)))
                acc["dg_shuffled"].append(disagreement_proxy(shuffle_stream(coeffs, rng, "rl")))
                acc["sr_proxy"].append(advantage_dispersion(batch.advantages))
                acc["sr_exact"].append(rl_gradient_variance(prob, theta, batch))
            for key in cols:
                cols[key].append(float(np.mean(acc[key])))
            for _ in range(steps_between):
                batch = prob.sample_batch(theta, rng)
                g_s, g_r = toy_exact_gradients(prob, theta, batch)
                theta = theta - learning_rate * (mix * g_s + (1 - mix) * g_r)
    return ProxyDiagnostics(**{k: np.asarray(v) for k, v in cols.items()})
