"""
试验运行器、收敛判定与基准套件报告。

种子混合：第 i 次 trial 的 RNG 为 default_rng(SeedSequence([base_seed, i]))，
与执行顺序、并行方式无关；多种子收敛实验中第 j 个种子的 base_seed 为 base_seed + j。
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, TextIO

import numpy as np

from estor.corpus import BenchmarkSpec, get_benchmark
from estor.estimators import SuccessorProvider, check_algorithm, make_provider, run_estimator
from estor.models import ConvergenceConfig, ConvergenceReport, EstimateTrial, SeedResult, WeightMode
from estor.program import Program

logger = logging.getLogger(__name__)

REPORT_COLUMNS = (
    "benchmark",
    "alg",
    "budget",
    "weight",
    "exact",
    "mean",
    "rel_error",
    "success_ratio",
    "trials_to_converge",
    "seeds",
    "error",
)


def trial_rng(base_seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([base_seed, trial]))


@dataclass
class TrialRun:
    trials: list[EstimateTrial]
    running_means: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.array([t.value for t in self.trials], dtype=float)


def running_means(values: Iterable[float]) -> np.ndarray:
    arr = np.asarray(list(values), dtype=float)
    return np.cumsum(arr) / np.arange(1, len(arr) + 1)


def run_trials(
    p: Program,
    alg: str,
    n_trials: int,
    base_seed: int = 0,
    *,
    budget: int | None = None,
    weight: WeightMode = WeightMode.MAXIMAL,
    provider: SuccessorProvider | None = None,
) -> TrialRun:
    check_algorithm(alg, weight, budget)
    provider = provider or make_provider(p, alg)
    trials = []
    for i in range(n_trials):
        t = run_estimator(p, alg, trial_rng(base_seed, i), budget=budget, weight=weight, provider=provider)
        trials.append(replace(t, seed=base_seed, trial=i, budget=budget if alg == "se" else None))
    return TrialRun(trials, running_means(t.value for t in trials))


def detect_convergence(
    trajectory: Iterable[float], exact: float, cfg: ConvergenceConfig
) -> tuple[bool, int | None]:
    """
    收敛于第一个 t：running mean 在 [t, t+stable_window) 内都落在 exact·(1±band) 中，
    且尾随 flat_window 的简单移动平均在窗口首尾的相对变化小于 flat_threshold。
    返回 (是否收敛, trial 数 t+1)。
    """
    if exact <= 0:
        raise ValueError("exact value must be positive")
    m = np.asarray(list(trajectory), dtype=float)
    stable, flat = cfg.stable_window, cfg.flat_window
    if len(m) < max(stable, flat):
        return False, None
    inside = (m >= exact * (1 - cfg.band)) & (m <= exact * (1 + cfg.band))
    window_inside = np.lib.stride_tricks.sliding_window_view(inside, stable).all(axis=1)
    csum = np.concatenate(([0.0], np.cumsum(m)))
    # sma[t] 为 m[t-flat+1 .. t] 的均值，仅 t >= flat-1 有定义
    sma = np.full(len(m), np.nan)
    sma[flat - 1 :] = (csum[flat:] - csum[:-flat]) / flat
    for t in range(flat - 1, len(m) - stable + 1):
        if not window_inside[t]:
            continue
        start, end = sma[t], sma[t + stable - 1]
        if start > 0 and abs(end - start) / start < cfg.flat_threshold:
            return True, t + 1
    return False, None


def converge(
    p: Program,
    alg: str,
    exact: int,
    cfg: ConvergenceConfig,
    *,
    budget: int | None = None,
    weight: WeightMode = WeightMode.MAXIMAL,
    base_seed: int = 0,
    provider: SuccessorProvider | None = None,
) -> ConvergenceReport:
    provider = provider or make_provider(p, alg)
    report = ConvergenceReport(exact, success_quorum=cfg.success_quorum)
    for j in range(cfg.seeds):
        seed = base_seed + j
        run = run_trials(p, alg, cfg.max_trials, seed, budget=budget, weight=weight, provider=provider)
        ok, at = detect_convergence(run.running_means, exact, cfg)
        final = float(run.running_means[-1]) if len(run.running_means) else 0.0
        rel = abs(final - exact) / exact if exact else None
        logger.info("seed %d: %s (final mean %r)", seed, f"converged after {at} trials" if ok else "not converged", final)
        report.seeds.append(SeedResult(seed, run.running_means.tolist(), ok, at, rel))
    return report


# ------------------------- 套件 -------------------------


@dataclass
class SuiteRow:
    benchmark: str
    alg: str
    budget: int | None
    weight: str
    exact: int | None = None
    mean: float | None = None
    rel_error: float | None = None
    success_ratio: float | None = None
    trials_to_converge: float | str | None = None
    seeds: list[dict[str, Any]] = field(default_factory=list)
    error: str | None = None

    def to_json(self) -> dict[str, Any]:
        return {c: getattr(self, c) for c in REPORT_COLUMNS}


def _run_cell(
    bench: BenchmarkSpec, alg: str, budget: int | None, weight: WeightMode, cfg: ConvergenceConfig, base_seed: int
) -> SuiteRow:
    row = SuiteRow(bench.name, alg, budget, weight.value)
    try:
        check_algorithm(alg, weight, budget)
        row.exact = bench.exact(weight)
        report = converge(
            bench.program, alg, row.exact, cfg, budget=budget, weight=weight, base_seed=base_seed
        )
    except Exception as e:
        logger.warning("%s / %s / B=%s failed: %s", bench.name, alg, budget, e)
        row.error = f"{type(e).__name__}: {e}"
        return row
    row.mean = report.final_mean
    row.rel_error = report.rel_error
    row.success_ratio = report.success_ratio
    row.trials_to_converge = report.mean_trials_to_converge if report.quorum_met else "failed"
    row.seeds = [
        {
            "seed": s.seed,
            "converged": s.converged,
            "trials_to_converge": s.trials_to_converge,
            "final_mean": s.running_means[-1] if s.running_means else None,
            "rel_error": s.rel_error,
        }
        for s in report.seeds
    ]
    return row


def _run_cell_by_name(args: tuple[str, str, int | None, str, dict[str, Any], int]) -> SuiteRow:
    name, alg, budget, weight, cfg, base_seed = args
    return _run_cell(get_benchmark(name), alg, budget, WeightMode(weight), ConvergenceConfig(**cfg), base_seed)


def suite_cells(
    benchmarks: Iterable[BenchmarkSpec], algs: Iterable[str], budgets: Iterable[int]
) -> list[tuple[BenchmarkSpec, str, int | None]]:
    """(基准, 算法, 预算) 网格；只有 se 使用预算。"""
    budgets = list(budgets)
    cells = []
    for bench in benchmarks:
        for alg in algs:
            for budget in budgets if alg == "se" else [None]:
                cells.append((bench, alg, budget))
    return list(dict.fromkeys(cells))


def run_benchmark_suite(
    benchmarks: Iterable[BenchmarkSpec],
    cfg: ConvergenceConfig,
    *,
    algs: Iterable[str] = ("se",),
    budgets: Iterable[int] = (20,),
    weight: WeightMode = WeightMode.MAXIMAL,
    base_seed: int = 0,
    workers: int = 1,
) -> list[SuiteRow]:
    """逐格运行收敛实验；单格失败记录在行的 error 列，套件继续。行顺序与 workers 无关。"""
    cells = suite_cells(benchmarks, list(algs), budgets)
    if workers <= 1 or len(cells) <= 1:
        return [_run_cell(b, alg, budget, weight, cfg, base_seed) for b, alg, budget in cells]
    jobs = [(b.name, alg, budget, weight.value, cfg.to_json(), base_seed) for b, alg, budget in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell_by_name, jobs))


# ------------------------- 报告 -------------------------


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return json.dumps(value, sort_keys=True)
    return str(value)


def write_csv(rows: Iterable[SuiteRow], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow([_cell(getattr(row, c)) for c in REPORT_COLUMNS])


def write_json(rows: Iterable[SuiteRow], out: TextIO) -> None:
    json.dump([row.to_json() for row in rows], out, indent=2)
    out.write("\n")


def write_trials_jsonl(trials: Iterable[EstimateTrial], out: TextIO) -> None:
    """每个 trial 一行 JSON：{alg, B, weight, seed, trial, value}。"""
    for t in trials:
        out.write(json.dumps(t.to_json()) + "\n")
