"""Online proxies for the noise moments, computed from ordinary batch tensors.

* RL noise: dispersion of sequence-level advantages.
* SFT noise: trimmed variance of length-normalized NLLs.
* Disagreement: mean squared gap between z-normalized per-token RL and SFT
  coefficients, averaged per sample then over the batch.

Variances are population (1/n) variances throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np


class ProxyError(ValueError):
    pass


class RawProxies(NamedTuple):
    sigma_s_sq: float
    sigma_r_sq: float
    delta_g_sq: float


@dataclass(frozen=True)
class TokenCoefficients:
    """Per-token gradient coefficients, one row per sample (padded to a common length).

    ``rl_coeff`` carries advantages, ``sft_coeff`` the SFT token weights, and
    ``mask`` selects real response tokens.
    """

    rl_coeff: np.ndarray
    sft_coeff: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        rl = np.atleast_2d(np.asarray(self.rl_coeff, dtype=float))
        sft = np.atleast_2d(np.asarray(self.sft_coeff, dtype=float))
        mask = np.atleast_2d(np.asarray(self.mask, dtype=bool))
        if not (rl.shape == sft.shape == mask.shape):
            raise ProxyError(f"coefficient shapes differ: {rl.shape}, {sft.shape}, {mask.shape}")
        if not mask.any(axis=1).all():
            raise ProxyError("every sample needs at least one response token")
        object.__setattr__(self, "rl_coeff", rl)
        object.__setattr__(self, "sft_coeff", sft)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_samples(cls, rl: list, sft: list) -> "TokenCoefficients":
        """Pack ragged per-sample lists into padded arrays."""
        if len(rl) != len(sft):
            raise ProxyError("rl and sft must hold the same number of samples")
        width = max(len(r) for r in rl)
        shape = (len(rl), width)
        rl_arr, sft_arr, mask = np.zeros(shape), np.zeros(shape), np.zeros(shape, dtype=bool)
        for i, (r, s) in enumerate(zip(rl, sft)):
            if len(r) != len(s):
                raise ProxyError(f"sample {i}: rl and sft lengths differ")
            rl_arr[i, : len(r)] = r
            sft_arr[i, : len(s)] = s
            mask[i, : len(r)] = True
        return cls(rl_arr, sft_arr, mask)


def phi(p):
    """Token weight ``p * (1 - p)``: zero at certainty, 0.25 at p = 0.5."""
    arr = np.asarray(p, dtype=float)
    if np.any((arr < 0) | (arr > 1)) or np.any(np.isnan(arr)):
        raise ProxyError("phi expects probabilities in [0, 1]")
    out = arr * (1.0 - arr)
    return float(out) if out.ndim == 0 else out


def _population_var(x: np.ndarray) -> float:
    mean = x.mean()
    return float(np.mean((x - mean) ** 2))


def advantage_dispersion(seq_advantages) -> float:
    a = np.asarray(seq_advantages, dtype=float).ravel()
    if a.size == 0:
        raise ProxyError("advantage_dispersion needs a non-empty batch")
    return _population_var(a)


def trimmed_nll_variance(nll, trim_frac: float = 0.1) -> float:
    """Population variance after dropping ``floor(trim_frac * n)`` values from each tail."""
    if not 0.0 <= trim_frac <= 0.4:
        raise ProxyError(f"trim_frac must lie in [0, 0.4], got {trim_frac!r}")
    x = np.sort(np.asarray(nll, dtype=float).ravel())
    k = int(math.floor(trim_frac * x.size))
    kept = x[k : x.size - k]
    if kept.size < 2:
        raise ProxyError(f"only {kept.size} values survive trimming; need >= 2")
    return _population_var(kept)


def _zscore(values: np.ndarray) -> tuple[np.ndarray, bool]:
    std = values.std()
    # rounding leaves a constant float stream with a std near 1e-17, not 0
    if not std > 1e-12 * np.abs(values).max():
        return np.zeros_like(values), True
    return (values - values.mean()) / std, False


def disagreement_proxy(coeffs: TokenCoefficients, *, return_flag: bool = False):
    """Mean over samples of the per-sample mean squared z-score gap.

    Both streams are z-normalized jointly over every masked token in the
    batch.  A stream with zero spread gets all-zero z-scores and the result
    is flagged as degenerate.
    """
    mask = coeffs.mask
    z_r, flat_r = _zscore(coeffs.rl_coeff[mask])
    z_s, flat_s = _zscore(coeffs.sft_coeff[mask])
    gap = np.zeros(mask.shape)
    gap[mask] = (z_s - z_r) ** 2
    per_sample = gap.sum(axis=1) / mask.sum(axis=1)
    value = float(per_sample.mean())
    return (value, flat_r or flat_s) if return_flag else value


@dataclass(frozen=True)
class EmaEstimates:
    decay: float = 0.9
    sigma_s_sq_ema: float | None = None
    sigma_r_sq_ema: float | None = None
    delta_g_sq_ema: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise ProxyError(f"decay must lie in [0, 1], got {self.decay!r}")

    @property
    def initialized(self) -> bool:
        return self.sigma_s_sq_ema is not None

    def values(self) -> RawProxies:
        if not self.initialized:
            raise ProxyError("EMA estimates read before the first update")
        return RawProxies(self.sigma_s_sq_ema, self.sigma_r_sq_ema, self.delta_g_sq_ema)


def ema_update(e: EmaEstimates, raw) -> EmaEstimates:
    raw = RawProxies(*(float(v) for v in raw))
    for name, v in zip(RawProxies._fields, raw):
        if not math.isfinite(v) or v < 0:
            raise ProxyError(f"raw {name} must be finite and >= 0, got {v!r}")
    if not e.initialized:
        new = raw
    else:
        d = e.decay
        new = RawProxies(*(d * old + (1 - d) * r for old, r in zip(e.values(), raw)))
    return replace(e, sigma_s_sq_ema=new[0], sigma_r_sq_ema=new[1], delta_g_sq_ema=new[2])


DEGRADATION_KINDS = ("none", "constant_sigma_r", "shuffled_delta_g", "random_delta_g")


@dataclass(frozen=True)
class DegradationMode:
    kind: str = "none"
    value: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEGRADATION_KINDS:
            raise ProxyError(f"unknown degradation kind {self.kind!r}; expected one of {DEGRADATION_KINDS}")


def shuffle_stream(coeffs: TokenCoefficients, rng: np.random.Generator, stream: str = "rl") -> TokenCoefficients:
    """Permute one coefficient stream across all masked tokens of the batch."""
    field = {"rl": "rl_coeff", "sft": "sft_coeff"}[stream]
    arr = getattr(coeffs, field).copy()
    arr[coeffs.mask] = rng.permutation(arr[coeffs.mask])
    return replace(coeffs, **{field: arr})


def apply_degradation(
    mode: DegradationMode,
    raw: RawProxies,
    coeffs: TokenCoefficients | None = None,
    rng: np.random.Generator | None = None,
) -> RawProxies:
    raw = RawProxies(*raw)
    if mode.kind == "none":
        return raw
    if rng is None:
        rng = np.random.default_rng(mode.seed)
    if mode.kind == "constant_sigma_r":
        return raw._replace(sigma_r_sq=float(mode.value))
    if mode.kind == "random_delta_g":
        return raw._replace(delta_g_sq=float(rng.uniform(0.0, 1.0)))
    if coeffs is None:
        raise ProxyError("shuffled_delta_g needs the token coefficients")
    return raw._replace(delta_g_sq=disagreement_proxy(shuffle_stream(coeffs, rng)))


def estimate_cross_cov(pairs, window: int = 20) -> tuple[float, float]:
    """Cross-covariance of paired noise summaries and its coefficient of variation.

    The CV is the spread of the covariance over sliding windows of length
    ``window`` divided by the magnitude of its mean; it is NaN when fewer
    than two windows fit and infinite when the windowed mean is zero.
    """
    xy = np.asarray(pairs, dtype=float)
    if xy.ndim != 2 or xy.shape[1] != 2 or xy.shape[0] < 2:
        raise ProxyError("estimate_cross_cov needs at least 2 (x, y) pairs")
    x, y = xy[:, 0], xy[:, 1]
    c = float(np.mean((x - x.mean()) * (y - y.mean())))
    n = xy.shape[0]
    if window < 2 or n - window + 1 < 2:
        return c, float("nan")
    xs = np.lib.stride_tricks.sliding_window_view(x, window)
    ys = np.lib.stride_tricks.sliding_window_view(y, window)
    cw = np.mean((xs - xs.mean(axis=1, keepdims=True)) * (ys - ys.mean(axis=1, keepdims=True)), axis=1)
    mean = abs(cw.mean())
    cv = float(cw.std() / mean) if mean > 0 else float("inf")
    return c, cv


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size or x.size < 3:
        raise ProxyError("pearson_r needs two equal-length series of length >= 3")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx <= 0 or syy <= 0:
        raise ProxyError("pearson_r is undefined for a series with zero variance")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))
