"""Command-line experiment runner.

Subcommands: ``run``, ``validate``, ``ablate``, ``sweep``.  Exit codes: 0
success, 1 failed validation, 2 invalid config, 3 a run hit a non-finite
value (its partial trace is still written).
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, TestbedConfig, load_config, override_controller, parse_config
from .controller import ControllerConfig
from .metrics import summarize
from .simulator import Arm, RunTrace, run_training
from .suites import ablation_arms
from .validation import format_results, validate_suite

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG, EXIT_NONFINITE = 0, 1, 2, 3


@dataclass(frozen=True)
class Task:
    subdir: str
    arm: Arm
    seed: int
    testbed: TestbedConfig
    steps: int
    learning_rate: float
    config_hash: str


def _execute(task: Task) -> RunTrace:
    problem = task.testbed.make(task.seed)
    meta = {"config_hash": task.config_hash, "testbed": task.testbed.kind}
    return run_training(problem, task.arm, task.steps, task.learning_rate, task.seed, meta=meta)


def _run_all(tasks: list[Task], workers: int) -> list[RunTrace]:
    if workers <= 1 or len(tasks) <= 1:
        return [_execute(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute, tasks))


def _write_artifacts(out: Path, tasks: list[Task], traces: list[RunTrace], cfg: ExperimentConfig):
    """One CSV per run and one summary JSON per arm directory; returns the grouped traces."""
    groups: dict[str, list[tuple[Task, RunTrace]]] = {}
    for task, trace in zip(tasks, traces):
        d = out / task.subdir
        d.mkdir(parents=True, exist_ok=True)
        trace.write_csv(d / f"seed_{task.seed}.csv")
        groups.setdefault(task.subdir, []).append((task, trace))
    m = cfg.metrics
    by_arm: dict[str, list[RunTrace]] = {}
    for subdir, items in groups.items():
        runs = [t for _, t in items]
        complete = [t for t in runs if t.error is None and len(t) >= 2]
        payload = {
            "arm": items[0][0].arm.name,
            "config_hash": cfg.digest(),
            "runs": [t.summary() for t in runs],
        }
        if complete:
            report = summarize({"arm": complete}, m.kl_target, m.shift_threshold, m.window)
            payload["metrics"] = report.arms["arm"]
            by_arm[subdir] = complete
        (out / subdir / "summary.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return by_arm


def _tasks(cfg: ExperimentConfig, arms, seeds, prefix: str = "") -> list[Task]:
    digest = cfg.digest()
    return [
        Task(f"{prefix}{arm.name}", arm, seed, cfg.testbed, cfg.steps, cfg.learning_rate, digest)
        for arm in arms
        for seed in seeds
    ]


def _failed(traces: list[RunTrace]) -> list[str]:
    return [f"{t.meta.get('arm')} seed {t.meta.get('seed')}: {t.error}" for t in traces if t.error]


def _report_failures(traces) -> int:
    failed = _failed(traces)
    for line in failed:
        print(f"error: {line}", file=sys.stderr)
    return EXIT_NONFINITE if failed else EXIT_OK


def cmd_run(cfg: ExperimentConfig, out: Path, workers: int = 1) -> int:
    tasks = _tasks(cfg, cfg.arms, cfg.seeds)
    traces = _run_all(tasks, workers)
    _write_artifacts(out, tasks, traces, cfg)
    print(f"wrote {len(traces)} trace(s) for {len(cfg.arms)} arm(s) to {out}")
    return _report_failures(traces)


def cmd_validate(grid_step: float = 1e-4, n: int = 1000, mu_fn=None) -> int:
    kwargs = {"grid_step": grid_step, "n": n}
    if mu_fn is not None:
        kwargs["mu_fn"] = mu_fn
    results = validate_suite(**kwargs)
    print(format_results(results), end="")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


def _base_controller(cfg: ExperimentConfig) -> ControllerConfig:
    for arm in cfg.arms:
        if arm.controller is not None:
            return arm.controller
    return ControllerConfig()


def cmd_ablate(cfg: ExperimentConfig, out: Path, workers: int = 1) -> int:
    arms = ablation_arms(_base_controller(cfg))
    tasks = _tasks(cfg, arms, cfg.seeds)
    traces = _run_all(tasks, workers)
    by_arm = _write_artifacts(out, tasks, traces, cfg)
    m = cfg.metrics
    report = summarize(by_arm, m.kl_target, m.shift_threshold, m.window, reference="full" if "full" in by_arm else None)
    (out / "ablation.json").write_text(report.to_json())
    table = report.to_table()
    (out / "ablation.txt").write_text(table)
    print(table, end="")
    return _report_failures(traces)


def _point_label(point: dict) -> str:
    return ",".join(f"{k}={v}" for k, v in point.items())


def cmd_sweep(cfg: ExperimentConfig, out: Path, workers: int = 1) -> int:
    if not cfg.sweep:
        raise ConfigError("$.sweep", "sweep needs a non-empty parameter grid")
    keys = list(cfg.sweep)
    points = [dict(zip(keys, combo)) for combo in itertools.product(*(cfg.sweep[k] for k in keys))]
    ctrl_arms = [a for a in cfg.arms if a.controller is not None]
    if not ctrl_arms:
        raise ConfigError("$.arms", "sweep needs at least one controller arm")
    tasks: list[Task] = []
    for point in points:
        arms = []
        for arm in ctrl_arms:
            c = arm.controller
            for key, value in point.items():
                c = override_controller(c, key, value, f"$.sweep.{key}")
            arms.append(Arm(arm.name, controller=c))
        tasks += _tasks(cfg, arms, cfg.seeds, prefix=f"{_point_label(point)}/")
    traces = _run_all(tasks, workers)
    by_arm = _write_artifacts(out, tasks, traces, cfg)
    m = cfg.metrics
    summary = {}
    for point in points:
        label = _point_label(point)
        arms = {k.split("/", 1)[1]: v for k, v in by_arm.items() if k.split("/", 1)[0] == label}
        report = summarize(arms, m.kl_target, m.shift_threshold, m.window) if arms else None
        summary[label] = {"point": point, "arms": report.arms if report else {}}
    (out / "sweep.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(traces)} trace(s) over {len(points)} grid point(s) to {out}")
    return _report_failures(traces)


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}") from exc
    if not seeds:
        raise argparse.ArgumentTypeError("need at least one seed")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gac", description="Noise-aware SFT/RL mixing experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("run", "run every (arm, seed) pair of a config"),
        ("ablate", "run the fixed ablation grid"),
        ("sweep", "run the cross-product of the config's sweep grid"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="JSON config file (defaults to the mainline config)")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--seeds", type=_parse_seeds, help="comma-separated seeds (overrides the config)")
        p.add_argument("--workers", type=int, default=1, help="parallel runs (default 1)")
    v = sub.add_parser("validate", help="check the closed-form estimators against the grid oracle")
    v.add_argument("--grid-step", type=float, default=1e-4)
    v.add_argument("--tuples", type=int, default=1000)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.grid_step, args.tuples)
    try:
        cfg = load_config(args.config) if args.config else parse_config({"version": 1})
        if args.seeds:
            cfg = replace(cfg, seeds=args.seeds)
        if args.workers < 1:
            raise ConfigError("--workers", "must be >= 1")
        out = args.out or Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        command = {"run": cmd_run, "ablate": cmd_ablate, "sweep": cmd_sweep}[args.command]
        return command(cfg, out, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
