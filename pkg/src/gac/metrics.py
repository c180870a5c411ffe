"""Stability metrics over run traces and their seed-aggregated report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .simulator.trace import RunTrace


def _series(x, column: str) -> np.ndarray:
    if isinstance(x, RunTrace):
        return x.column(column)
    return np.asarray(x, dtype=float)


def kl_area(trace_or_kl, kl_target: float) -> float:
    """One-sided excess of the smoothed KL over its target, unit step width."""
    kl = _series(trace_or_kl, "kl_ema")
    if kl.size == 0:
        raise ValueError("kl_area needs a non-empty trace")
    return float(np.sum(np.maximum(0.0, kl - kl_target)))


def large_shift_rate(trace_or_mu, threshold: float = 0.02, window: int = 1) -> float:
    """Fraction of transitions with ``|delta mu| > threshold``.

    ``window=1`` compares consecutive steps; ``window=f`` compares ``mu``
    at the ends of consecutive ``f``-step windows.
    """
    mu = _series(trace_or_mu, "mu")[::window]
    if mu.size < 2:
        raise ValueError("large_shift_rate needs at least two points")
    return float(np.mean(np.abs(np.diff(mu)) > threshold))


def _detrend(x: np.ndarray, mode: str) -> np.ndarray:
    if mode == "constant":
        return x - x.mean()
    if mode == "linear":
        t = np.arange(x.size)
        slope, intercept = np.polyfit(t, x, 1)
        return x - (slope * t + intercept)
    raise ValueError(f"unknown detrend mode {mode!r}")


def _taper(n: int, kind: str | None) -> np.ndarray:
    if kind is None:
        return np.ones(n)
    if kind == "hann":
        return np.hanning(n)
    raise ValueError(f"unknown taper {kind!r}")


def high_frequency_power(
    x, cutoff_frac: float = 0.5, detrend: str = "constant", taper: str | None = "hann"
) -> float:
    """Periodogram power strictly above ``cutoff_frac`` of the Nyquist frequency.

    The Hann taper keeps a slow drift (mu following its schedule, say) from
    leaking into the high band through the start/end mismatch of the DFT.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 8:
        raise ValueError("spectral metrics need at least 8 points")
    spec = np.abs(np.fft.rfft(_detrend(x, detrend) * _taper(x.size, taper))) ** 2
    freqs = np.fft.rfftfreq(x.size)
    return float(spec[freqs > cutoff_frac * 0.5].sum())


def oscillation_power_ratio(
    mu_with, mu_without, cutoff_frac: float = 0.5, detrend: str = "constant", taper: str | None = "hann"
) -> float:
    """High-frequency power of ``mu_with`` relative to ``mu_without``."""
    a = _series(mu_with, "mu")
    b = _series(mu_without, "mu")
    if a.size != b.size:
        raise ValueError("series must have equal lengths")
    num = high_frequency_power(a, cutoff_frac, detrend, taper)
    den = high_frequency_power(b, cutoff_frac, detrend, taper)
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return num / den


def step_norm_check(trace: RunTrace, bound: float) -> tuple[float, float]:
    """Fraction of steps whose parameter move exceeds ``bound`` and the worst move / bound."""
    norms = trace.column("step_norm")
    return float(np.mean(norms > bound)), float(norms.max() / bound)


def mean_std(values) -> tuple[float, float]:
    """Mean and population standard deviation."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values to aggregate")
    return float(v.mean()), float(v.std())


@dataclass
class StabilityReport:
    arms: dict[str, dict[str, dict]] = field(default_factory=dict)
    reference: str | None = None
    reductions: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {"reference": self.reference, "arms": self.arms, "reductions": self.reductions}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def to_table(self, columns=("kl_area", "shift_rate", "shift_rate_window", "final_loss")) -> str:
        header = ["arm", *columns]
        rows = [header]
        for name, metrics in self.arms.items():
            cells = [name]
            for c in columns:
                m = metrics[c]
                cells.append(f"{m['mean']:.4g} +- {m['std']:.2g}")
            rows.append(cells)
        if self.reference is not None:
            for name, red in self.reductions.items():
                cells = [f"reduct. {name} vs {self.reference}"]
                cells += [f"{red[c]:+.1f}%" if c in red else "" for c in columns]
                rows.append(cells)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def trace_metrics(trace: RunTrace, kl_target: float, threshold: float = 0.02, window: int = 10) -> dict[str, float]:
    """Per-run metrics; a rate needing more points than the run has is NaN."""
    pot = trace.column("potential")
    n = len(trace)
    return {
        "kl_area": kl_area(trace, kl_target),
        "shift_rate": large_shift_rate(trace, threshold) if n >= 2 else math.nan,
        "shift_rate_window": large_shift_rate(trace, threshold, window) if n > window else math.nan,
        "final_loss": float(trace.column("loss")[-1]),
        "final_loss_s": float(trace.column("loss_s")[-1]),
        "final_loss_r": float(trace.column("loss_r")[-1]),
        "potential_start": float(trace.meta.get("potential_initial", math.nan)),
        "potential_end": float(pot[-1]),
    }


def summarize(
    traces: dict[str, list[RunTrace]],
    kl_target: float,
    threshold: float = 0.02,
    window: int = 10,
    reference: str | None = None,
) -> StabilityReport:
    report = StabilityReport(reference=reference)
    for arm, runs in traces.items():
        if not runs:
            raise ValueError(f"arm {arm!r} has no traces")
        per_seed = [trace_metrics(t, kl_target, threshold, window) for t in runs]
        report.arms[arm] = {}
        for key in per_seed[0]:
            values = [m[key] for m in per_seed]
            mean, std = mean_std(values)
            report.arms[arm][key] = {"mean": mean, "std": std, "per_seed": values}
    if reference is not None:
        if reference not in report.arms:
            raise KeyError(f"reference arm {reference!r} not among {list(report.arms)}")
        ref = report.arms[reference]
        for arm, metrics in report.arms.items():
            if arm == reference:
                continue
            red = {}
            for key in ("kl_area", "shift_rate", "shift_rate_window"):
                base = ref[key]["mean"]
                if base != 0:
                    red[key] = 100.0 * (metrics[key]["mean"] - base) / base
            report.reductions[arm] = red
    return report
