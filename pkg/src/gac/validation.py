"""Self-check of the closed-form estimators against the brute-force grid oracle."""

from __future__ import annotations

import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .estimator import BiasSpec, NoiseMoments, grid_oracle_mu, optimal_mu, optimal_mu_biased, optimal_mu_correlated


def random_moments(rng: np.random.Generator, n: int) -> list[tuple[NoiseMoments, float]]:
    """``n`` random ``(moments, alpha)`` pairs with log-uniform magnitudes over four decades."""
    out = []
    for _ in range(n):
        ss, sr, dg = (float(v) for v in 10.0 ** rng.uniform(-2, 2, 3))
        alpha = float(rng.uniform(0.0, 1.0))
        out.append((NoiseMoments(sigma_s_sq=ss, sigma_r_sq=sr, delta_g_sq=dg), alpha))
    return out


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def check_grid_oracle(
    cases, mu_fn: Callable = optimal_mu, grid_step: float = 1e-4, tol: float | None = None
) -> CheckResult:
    tol = 1.1 * grid_step if tol is None else tol
    start = time.perf_counter()
    worst, worst_case = 0.0, None
    for m, alpha in cases:
        err = abs(mu_fn(m, alpha) - grid_oracle_mu(m, alpha, grid_step))
        if err > worst:
            worst, worst_case = err, (m, alpha)
    elapsed = time.perf_counter() - start
    name = f"closed form vs grid oracle ({len(cases)} tuples, step {grid_step:g})"
    if worst > tol:
        m, alpha = worst_case
        return CheckResult(
            name,
            False,
            f"max error {worst:.3g} > {tol:.3g} at sigma_s_sq={m.sigma_s_sq!r}, sigma_r_sq={m.sigma_r_sq!r}, "
            f"delta_g_sq={m.delta_g_sq!r}, alpha={alpha!r}",
        )
    return CheckResult(name, True, f"max error {worst:.3g} <= {tol:.3g} in {elapsed:.2f}s")


def check_limits(cases, mu_fn: Callable = optimal_mu) -> list[CheckResult]:
    bad_iv, bad_big = None, None
    for m, alpha in cases:
        zero = NoiseMoments(m.sigma_s_sq, m.sigma_r_sq, 0.0)
        if mu_fn(zero, alpha) != m.sigma_r_sq / (m.sigma_s_sq + m.sigma_r_sq) and bad_iv is None:
            bad_iv = (m, alpha)
        huge = NoiseMoments(m.sigma_s_sq, m.sigma_r_sq, 1e12)
        if abs(mu_fn(huge, alpha) - alpha) >= 1e-6 and bad_big is None:
            bad_big = (m, alpha)
    return [
        CheckResult(
            "zero disagreement gives inverse-variance weighting",
            bad_iv is None,
            "exact on every tuple" if bad_iv is None else f"mismatch at {bad_iv}",
        ),
        CheckResult(
            "huge disagreement gives the target ratio",
            bad_big is None,
            "|mu - alpha| < 1e-6 on every tuple" if bad_big is None else f"mismatch at {bad_big}",
        ),
    ]


def check_reductions(cases, mu_fn: Callable = optimal_mu) -> list[CheckResult]:
    bad_c, bad_b = None, None
    no_bias = BiasSpec(0.0, 0.0)
    for m, alpha in cases:
        ref = mu_fn(m, alpha)
        if optimal_mu_correlated(m, alpha) != ref and bad_c is None:
            bad_c = (m, alpha)
        if optimal_mu_biased(m, no_bias, alpha) != ref and bad_b is None:
            bad_b = (m, alpha)
    return [
        CheckResult(
            "correlated form at c=0 equals the independent form",
            bad_c is None,
            "bit-exact" if bad_c is None else f"mismatch at {bad_c}",
        ),
        CheckResult(
            "biased form at b=0, c=0 equals the independent form",
            bad_b is None,
            "bit-exact" if bad_b is None else f"mismatch at {bad_b}",
        ),
    ]


def validate_suite(
    mu_fn: Callable = optimal_mu, grid_step: float = 1e-4, n: int = 1000, seed: int = 0
) -> list[CheckResult]:
    cases = random_moments(np.random.default_rng(seed), n)
    return [check_grid_oracle(cases, mu_fn, grid_step), *check_limits(cases, mu_fn), *check_reductions(cases, mu_fn)]


def format_results(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'PASS' if r.passed else 'FAIL'}  {r.name.ljust(width)}  {r.detail}" for r in results]
    return "\n".join(lines) + "\n"
