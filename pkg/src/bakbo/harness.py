"""Experiment harness: strategy sweeps, aggregation, comparison, CSV, CLI.

A bundle is self-describing: it echoes its configuration, the
normalization constant, package version and wall clock, so any emitted
artifact can be regenerated from the summary alone.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml
from scipy.stats import t as student_t

from . import __version__
from .acquisition import AcquisitionConfig
from .benchmarks import (
    BenchmarkSetting,
    SETTING_NAMES,
    get_setting,
    normalization_constant,
    normalized_cost,
)
from .optimizer import (
    STRATEGY_KINDS,
    RunTrace,
    as_objective_spec,
    best_so_far_curve,
    make_strategy,
    run_bo,
    run_random_search,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "AggregateCurve",
    "Comparison",
    "ResultBundle",
    "run_experiment",
    "aggregate",
    "compare_strategies",
    "emit_csv",
    "load_curves",
    "write_summary",
    "main",
]

ALPHA = 0.05
CI_Z = 1.96  # normal 95% band on the mean


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    setting: str
    strategies: tuple[str, ...] = STRATEGY_KINDS
    runs: int = 40
    budget: int | None = None  # None: 80 in two dimensions, 100 otherwise
    base_seed: int = 0
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    noise_variance: float = 1e-4
    p_alt: float = 0.5
    jobs: int = 1

    def __post_init__(self) -> None:
        strategies = tuple(self.strategies)
        if not strategies:
            raise ConfigError("at least one strategy is required")
        unknown = [s for s in strategies if s not in STRATEGY_KINDS]
        if unknown:
            raise ConfigError(
                f"unknown strategies {unknown}; choose from {', '.join(STRATEGY_KINDS)}"
            )
        if len(set(strategies)) != len(strategies):
            raise ConfigError("strategies must not repeat")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if self.budget is not None and self.budget < 1:
            raise ConfigError("budget must be at least 1")
        if not 0.0 <= self.p_alt <= 1.0:
            raise ConfigError("p_alt must lie in [0, 1]")
        if not math.isfinite(self.noise_variance) or self.noise_variance < 0:
            raise ConfigError("noise variance must be finite and nonnegative")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        object.__setattr__(self, "strategies", strategies)


@dataclass(frozen=True, eq=False)
class AggregateCurve:
    strategy: str
    mean: np.ndarray
    ci_halfwidth: np.ndarray
    n_runs: int


@dataclass(frozen=True)
class Comparison:
    a: str
    b: str
    iteration: int
    mean_a: float
    mean_b: float
    p_value: float  # one-sided Welch p for "a is better (lower) than b"
    verdict: str    # a_better | b_better | indistinguishable


@dataclass(frozen=True, eq=False)
class ResultBundle:
    config: ExperimentConfig
    budget: int
    traces: dict[str, list[RunTrace]]
    curves: dict[str, AggregateCurve]
    y_max: float
    version: str
    wall_clock: dict[str, float]


def resolved_budget(config: ExperimentConfig, setting: BenchmarkSetting) -> int:
    if config.budget is not None:
        return config.budget
    return 80 if setting.dimension <= 2 else 100


def _run_task(args: tuple) -> tuple[str, int, float, RunTrace]:
    setting_name, kind, seed, budget, acquisition, noise_variance, p_alt = args
    setting = get_setting(setting_name)
    objective = as_objective_spec(setting)
    started = time.perf_counter()
    if kind == "random":
        trace = run_random_search(objective, budget, seed)
    else:
        strategy = make_strategy(kind, objective, p_alt)
        trace = run_bo(
            objective,
            strategy,
            budget,
            seed,
            acquisition=acquisition,
            noise_variance=noise_variance,
        )
    return kind, seed, time.perf_counter() - started, trace


def run_experiment(config: ExperimentConfig) -> ResultBundle:
    """Run every (strategy, seed) pair and aggregate the curves."""
    try:
        setting = get_setting(config.setting)
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    budget = resolved_budget(config, setting)

    tasks = [
        (
            config.setting,
            kind,
            config.base_seed + r,
            budget,
            config.acquisition,
            config.noise_variance,
            config.p_alt,
        )
        for kind in config.strategies
        for r in range(config.runs)
    ]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(task) for task in tasks]

    traces: dict[str, list[RunTrace]] = {kind: [] for kind in config.strategies}
    wall_clock: dict[str, float] = {kind: 0.0 for kind in config.strategies}
    for kind, _seed, seconds, trace in results:
        traces[kind].append(trace)
        wall_clock[kind] += seconds

    curves = {kind: aggregate(traces[kind], setting) for kind in config.strategies}
    return ResultBundle(
        config=config,
        budget=budget,
        traces=traces,
        curves=curves,
        y_max=normalization_constant(setting),
        version=__version__,
        wall_clock=wall_clock,
    )


def aggregate(traces: list[RunTrace], setting: BenchmarkSetting) -> AggregateCurve:
    """Mean normalized best-so-far curve with a 95% band on the mean."""
    if not traces:
        raise ValueError("cannot aggregate zero traces")
    labels = {trace.strategy for trace in traces}
    lengths = {len(trace.records) for trace in traces}
    if len(labels) != 1 or len(lengths) != 1:
        raise ValueError("traces must share one strategy and one budget")
    matrix = np.array(
        [normalized_cost(setting, best_so_far_curve(trace)) for trace in traces]
    )
    n = matrix.shape[0]
    mean = matrix.mean(axis=0)
    if n > 1:
        halfwidth = CI_Z * matrix.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        halfwidth = np.zeros_like(mean)
    return AggregateCurve(
        strategy=labels.pop(), mean=mean, ci_halfwidth=halfwidth, n_runs=n
    )


def _values_at(bundle: ResultBundle, strategy: str, iteration: int) -> np.ndarray:
    setting = get_setting(bundle.config.setting)
    if strategy not in bundle.traces:
        raise KeyError(f"bundle has no strategy {strategy!r}")
    if not 1 <= iteration <= bundle.budget:
        raise ValueError(f"iteration must lie in [1, {bundle.budget}]")
    return np.array(
        [
            normalized_cost(setting, best_so_far_curve(trace)[iteration - 1])
            for trace in bundle.traces[strategy]
        ]
    )


def compare_strategies(
    bundle: ResultBundle, a: str, b: str, at_iteration: int
) -> Comparison:
    """One-sided Welch test of "a reaches lower cost than b" at an iteration."""
    va = _values_at(bundle, a, at_iteration)
    vb = _values_at(bundle, b, at_iteration)
    mean_a = float(va.mean())
    mean_b = float(vb.mean())
    var_a = float(va.var(ddof=1)) if va.size > 1 else 0.0
    var_b = float(vb.var(ddof=1)) if vb.size > 1 else 0.0
    pooled = var_a / va.size + var_b / vb.size
    if pooled == 0.0:
        # degenerate spread: fall back to a pure mean comparison
        p_value = 0.5 if mean_a == mean_b else (0.0 if mean_a < mean_b else 1.0)
    else:
        t_stat = (mean_a - mean_b) / math.sqrt(pooled)
        dof_a = (var_a / va.size) ** 2 / (va.size - 1) if va.size > 1 and var_a > 0 else 0.0
        dof_b = (var_b / vb.size) ** 2 / (vb.size - 1) if vb.size > 1 and var_b > 0 else 0.0
        dof = pooled**2 / (dof_a + dof_b)
        p_value = float(student_t.cdf(t_stat, dof))
    if p_value < ALPHA:
        verdict = "a_better"
    elif 1.0 - p_value < ALPHA:
        verdict = "b_better"
    else:
        verdict = "indistinguishable"
    return Comparison(
        a=a,
        b=b,
        iteration=at_iteration,
        mean_a=mean_a,
        mean_b=mean_b,
        p_value=p_value,
        verdict=verdict,
    )


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def emit_csv(bundle: ResultBundle, out_dir) -> tuple[Path, Path]:
    """Write trials.csv and curves.csv; floats carry full precision."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    setting = get_setting(bundle.config.setting)
    d = setting.dimension

    trials_path = out / "trials.csv"
    with trials_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["run_seed", "strategy", "iteration", "kernel_label", "theta"]
            + [f"x_{i}" for i in range(d)]
            + ["y", "best_so_far"]
        )
        for kind in bundle.config.strategies:
            for trace in sorted(bundle.traces[kind], key=lambda t: t.seed):
                for record in trace.records:
                    theta = "" if record.theta is None else _fmt(record.theta)
                    writer.writerow(
                        [str(trace.seed), kind, str(record.iteration), record.kernel_label, theta]
                        + [_fmt(v) for v in record.x]
                        + [_fmt(record.y), _fmt(record.best_so_far)]
                    )

    curves_path = out / "curves.csv"
    with curves_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["strategy", "iteration", "mean", "ci_halfwidth", "n_runs"])
        for kind in bundle.config.strategies:
            curve = bundle.curves[kind]
            for i in range(curve.mean.size):
                writer.writerow(
                    [
                        kind,
                        str(i + 1),
                        _fmt(curve.mean[i]),
                        _fmt(curve.ci_halfwidth[i]),
                        str(curve.n_runs),
                    ]
                )
    return trials_path, curves_path


def load_curves(path) -> dict[str, AggregateCurve]:
    """Read back a curves.csv written by emit_csv."""
    rows: dict[str, list[tuple[int, float, float, int]]] = {}
    with Path(path).open(newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            rows.setdefault(row["strategy"], []).append(
                (
                    int(row["iteration"]),
                    float(row["mean"]),
                    float(row["ci_halfwidth"]),
                    int(row["n_runs"]),
                )
            )
    curves = {}
    for strategy, entries in rows.items():
        entries.sort()
        curves[strategy] = AggregateCurve(
            strategy=strategy,
            mean=np.array([e[1] for e in entries]),
            ci_halfwidth=np.array([e[2] for e in entries]),
            n_runs=entries[0][3],
        )
    return curves


def write_summary(bundle: ResultBundle, out_dir) -> Path:
    """Machine-readable metadata: config echo, comparisons, wall clock."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    comparisons = []
    for a in bundle.config.strategies:
        for b in bundle.config.strategies:
            if a != b:
                comparisons.append(asdict(compare_strategies(bundle, a, b, bundle.budget)))
    payload = {
        "config": {
            **asdict(bundle.config),
            "strategies": list(bundle.config.strategies),
            "acquisition": asdict(bundle.config.acquisition),
        },
        "budget": bundle.budget,
        "normalization_y_max": bundle.y_max,
        "final_mean": {k: float(c.mean[-1]) for k, c in bundle.curves.items()},
        "comparisons_at_final_iteration": comparisons,
        "wall_clock_seconds": bundle.wall_clock,
        "version": bundle.version,
    }
    path = out / "summary.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    return path


# --- command line -----------------------------------------------------------

_CONFIG_KEYS = {
    "setting",
    "strategies",
    "runs",
    "budget",
    "seed",
    "p_alt",
    "acq",
    "beta",
    "candidate_count",
    "refine_steps",
    "noise",
    "out",
    "jobs",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bakbo",
        description="Benchmark kernel strategies for Bayesian optimization.",
    )
    parser.add_argument("--config", help="YAML file with the same keys as the flags")
    parser.add_argument("--setting", choices=SETTING_NAMES, help="benchmark setting name")
    parser.add_argument("--strategies", help="comma-separated subset of: " + ",".join(STRATEGY_KINDS))
    parser.add_argument("--runs", type=int, help="repeats per strategy (default 40)")
    parser.add_argument("--budget", type=int, help="evaluations per run (default by setting)")
    parser.add_argument("--seed", type=int, help="base seed; run r uses seed+r (default 0)")
    parser.add_argument("--p-alt", dest="p_alt", type=float, help="alternation probability (default 0.5)")
    parser.add_argument("--acq", choices=["ei", "lcb"], help="acquisition kind (default ei)")
    parser.add_argument("--beta", type=float, help="LCB exploration weight (default 2.0)")
    parser.add_argument("--noise", type=float, help="observation noise variance (default 1e-4)")
    parser.add_argument("--out", help="directory for trials.csv, curves.csv, summary.json")
    parser.add_argument("--jobs", type=int, help="worker processes (default 1)")
    return parser


def _load_config_file(path: str) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping of option names to values")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return raw


def _parse_strategies(value) -> tuple[str, ...]:
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    if isinstance(value, (list, tuple)):
        return tuple(str(part) for part in value)
    raise ConfigError("strategies must be a comma-separated string or a list")


def _merge_options(args: argparse.Namespace) -> dict:
    options = _load_config_file(args.config) if args.config else {}
    for key in ("setting", "strategies", "runs", "budget", "seed", "p_alt",
                "acq", "beta", "noise", "out", "jobs"):
        value = getattr(args, key)
        if value is not None:
            options[key] = value
    return options


def _config_from_options(options: dict) -> tuple[ExperimentConfig, str | None]:
    if "setting" not in options:
        raise ConfigError("a setting is required (--setting or config file)")
    acquisition = AcquisitionConfig()
    updates = {}
    if "acq" in options:
        updates["kind"] = str(options["acq"])
    if "beta" in options:
        updates["beta"] = float(options["beta"])
    if "candidate_count" in options:
        updates["candidate_count"] = int(options["candidate_count"])
    if "refine_steps" in options:
        updates["refine_steps"] = int(options["refine_steps"])
    try:
        if updates:
            acquisition = replace(acquisition, **updates)
        config = ExperimentConfig(
            setting=str(options["setting"]),
            strategies=_parse_strategies(options.get("strategies", STRATEGY_KINDS)),
            runs=int(options.get("runs", 40)),
            budget=None if options.get("budget") is None else int(options["budget"]),
            base_seed=int(options.get("seed", 0)),
            acquisition=acquisition,
            noise_variance=float(options.get("noise", 1e-4)),
            p_alt=float(options.get("p_alt", 0.5)),
            jobs=int(options.get("jobs", 1)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if config.setting not in SETTING_NAMES:
        raise ConfigError(
            f"unknown setting {config.setting!r}; choose one of {', '.join(SETTING_NAMES)}"
        )
    out = options.get("out")
    return config, None if out is None else str(out)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config, out_dir = _config_from_options(_merge_options(args))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        bundle = run_experiment(config)
        if out_dir is not None:
            emit_csv(bundle, out_dir)
            write_summary(bundle, out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure, distinct exit code
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for kind in config.strategies:
        curve = bundle.curves[kind]
        print(
            f"{config.setting} {kind}: final mean {curve.mean[-1]:.4f} "
            f"+/- {curve.ci_halfwidth[-1]:.4f} over {curve.n_runs} runs"
        )
    if out_dir is not None:
        print(f"artifacts written to {Path(out_dir).resolve()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
