"""Per-step run records and their CSV / JSON serialization.

The CSV column order is frozen; see ``COLUMNS``.  Floats are written with
``repr`` so a rerun with the same config and seed is byte-identical.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

COLUMNS = (
    "step",
    "mu",
    "alpha",
    "kl",
    "kl_ema",
    "sigma_s_sq_raw",
    "sigma_r_sq_raw",
    "delta_g_sq_raw",
    "sigma_s_sq_ema",
    "sigma_r_sq_ema",
    "delta_g_sq_ema",
    "mu_star",
    "mu_ada",
    "mu_blend",
    "mu_prior",
    "loss_s",
    "loss_r",
    "loss",
    "potential",
    "step_norm",
    "refreshed",
    "flags",
)

_INT_COLUMNS = {"step", "refreshed"}
_STR_COLUMNS = {"flags"}


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


@dataclass
class RunTrace:
    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    error: str | None = None

    def append(self, **row) -> None:
        missing = set(COLUMNS) - row.keys()
        if missing:
            raise KeyError(f"trace row is missing columns {sorted(missing)}")
        if self.rows and row["step"] <= self.rows[-1]["step"]:
            raise ValueError("trace steps must be strictly increasing")
        self.rows.append({k: row[k] for k in COLUMNS})

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        if name not in COLUMNS:
            raise KeyError(name)
        if name in _STR_COLUMNS:
            return np.array([r[name] for r in self.rows], dtype=object)
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in self.rows:
            writer.writerow([_fmt(r[c]) for c in COLUMNS])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def read_csv(cls, path) -> "RunTrace":
        trace = cls()
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != COLUMNS:
                raise ValueError(f"{path}: unexpected CSV header")
            for raw in reader:
                row = {}
                for c in COLUMNS:
                    if c in _STR_COLUMNS:
                        row[c] = raw[c]
                    elif c in _INT_COLUMNS:
                        row[c] = int(raw[c])
                    else:
                        row[c] = float(raw[c])
                trace.rows.append(row)
        return trace

    def summary(self) -> dict:
        def last(name):
            return self.rows[-1][name] if self.rows else math.nan

        return {
            "meta": self.meta,
            "steps": len(self.rows),
            "error": self.error,
            "final_mu": last("mu"),
            "final_loss_s": last("loss_s"),
            "final_loss_r": last("loss_r"),
            "final_kl": last("kl"),
        }

    def write_summary(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True, allow_nan=True) + "\n")
