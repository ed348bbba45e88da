"""
estor CLI：解析程序、精确计数、随机估计、精确分布、收敛实验、近似计数与基准套件。

程序参数可以是 .cp 文件路径，也可以是 `corpus:<名称>`（如 `corpus:hairbrush(8)`）。
"""

from __future__ import annotations

import json
import logging
import math
import sys
from contextlib import contextmanager
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Iterator, Optional

import numpy as np
import typer

from estor.corpus import SUITES, get_benchmark, suite
from estor.cli_config import DEFAULTS, clear_config, effective, load_config, parse_setting, save_config
from estor.dtree import enumerate_d_tree, to_dot as d_to_dot, write_tree_log
from estor.estimators import exact_output_distribution
from estor.harness import converge, run_benchmark_suite, run_trials, write_csv, write_json, write_trials_jsonl
from estor.models import CapExceeded, ConvergenceConfig, WeightMode
from estor.program import Program, format_program, parse_program
from estor.subexp import PaddedTreeParams, approx_count
from estor.tdag import enumerate_t_sinks, materialize_t_dag, to_dot as t_to_dot

app = typer.Typer(
    name="estor",
    help="Count and estimate execution graphs (Mazurkiewicz traces) of bounded concurrent programs.",
)


class Semantics(str, Enum):
    TDAG = "tdag"
    DTREE = "dtree"


class Alg(str, Enum):
    KNUTH_T = "knuth-t"
    PITT = "pitt"
    TRUST = "trust"
    SE = "se"
    GENMC = "genmc"


class DistAlg(str, Enum):
    KNUTH_T = "knuth-t"
    PITT = "pitt"
    TRUST = "trust"


_program_arg: type = Annotated[str, typer.Argument(help="Program file (.cp) or corpus:<name>, e.g. corpus:hairbrush(8)")]
_weight_option: type = Annotated[
    WeightMode, typer.Option("--weight", "-w", help="maximal: count maximal graphs; cost: count explored graphs")
]
_seed_option: type = Annotated[int, typer.Option("--seed", "-s", help="Base seed")]


@app.callback()
def _root(
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging on stderr")] = False,
    quiet: Annotated[bool, typer.Option("--quiet", "-q", help="Only warnings and errors on stderr")] = False,
) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


@contextmanager
def _errors() -> Iterator[None]:
    """库异常 → `error: ...` + 退出码 1。"""
    try:
        yield
    except (ValueError, CapExceeded, OSError) as e:
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(1)


def _load_program(source: str) -> Program:
    if source.startswith("corpus:"):
        return get_benchmark(source[len("corpus:") :]).program
    path = Path(source)
    if not path.exists():
        raise ValueError(f"not found: {path}")
    return parse_program(path.read_text(encoding="utf-8"))


def _fmt_fraction(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


# ------------------------- parse -------------------------


@app.command("parse", help="Parse and pretty-print a program")
def parse_cmd(program: _program_arg) -> None:
    with _errors():
        p = _load_program(program)
    typer.echo(format_program(p), nl=False)
    typer.echo(f"# threads={len(p.threads)} instructions={p.size} locations={','.join(p.locations) or '-'}")


# ------------------------- count -------------------------


@app.command("count", help="Exact count by full traversal of T(P) or D(P)")
def count_cmd(
    program: _program_arg,
    semantics: Annotated[Semantics, typer.Option("--semantics", help="tdag: interleaving DAG; dtree: DPOR tree")] = Semantics.DTREE,
    weight: _weight_option = WeightMode.MAXIMAL,
    node_cap: Annotated[Optional[int], typer.Option("--node-cap", help="Node cap (default from config)")] = None,
    collapse: Annotated[bool, typer.Option("--collapse", help="Report widths of the chain-collapsed tree")] = False,
    as_json: Annotated[bool, typer.Option("--json", help="Print JSON")] = False,
    dot: Annotated[Optional[Path], typer.Option("--dot", help="Write a Graphviz DOT file (small programs)")] = None,
    tree_log: Annotated[Optional[Path], typer.Option("--tree-log", help="Write the D(P) tree log (dtree only)")] = None,
) -> None:
    cap = effective("node_cap", node_cap)
    with _errors():
        p = _load_program(program)
        if semantics is Semantics.TDAG:
            if weight is WeightMode.COST:
                raise ValueError("cost weighting needs --semantics dtree")
            sinks = enumerate_t_sinks(p, cap)
            out = {"count": sinks.count, "dag_nodes": sinks.dag_nodes, "blocked_sinks": sinks.blocked_sinks}
            if dot is not None:
                dot.write_text(t_to_dot(materialize_t_dag(p, cap)), encoding="utf-8")
        else:
            stats = enumerate_d_tree(p, weight, collapse=collapse, node_cap=cap)
            out = {
                "count": stats.maximal_leaves,
                "total_weight": stats.total_weight,
                "weight": weight.value,
                "maximal_leaves": stats.maximal_leaves,
                "blocked_leaves": stats.blocked_leaves,
                "inconsistent_leaves": stats.inconsistent_leaves,
                "internal_nodes": stats.internal_nodes,
                "explored": stats.explored,
                "max_depth": stats.max_depth,
                "max_out_degree": stats.max_out_degree,
                "max_width": stats.max_width,
                "max_width_per_depth": stats.width_per_depth,
            }
            if dot is not None:
                dot.write_text(d_to_dot(p), encoding="utf-8")
            if tree_log is not None:
                with tree_log.open("w", encoding="utf-8") as f:
                    write_tree_log(p, f, WeightMode.COST, collapse=collapse, node_cap=cap)
    if as_json:
        typer.echo(json.dumps(out))
        return
    for k, v in out.items():
        typer.echo(f"{k}: {v}")


# ------------------------- estimate -------------------------


@app.command("estimate", help="Run a randomized estimator for N trials")
def estimate_cmd(
    program: _program_arg,
    alg: Annotated[Alg, typer.Option("--alg", "-a", help="Estimator")] = Alg.TRUST,
    budget: Annotated[Optional[int], typer.Option("--budget", "-B", help="Population budget (se only)")] = None,
    weight: _weight_option = WeightMode.MAXIMAL,
    trials: Annotated[int, typer.Option("--trials", "-n", help="Number of trials")] = 1000,
    seed: _seed_option = 0,
    json_out: Annotated[Optional[Path], typer.Option("--json", help="Write the trial stream (one JSON object per line)")] = None,
) -> None:
    if alg is Alg.SE and budget is None:
        budget = 20
    with _errors():
        if trials < 1:
            raise ValueError("trials must be >= 1")
        p = _load_program(program)
        run = run_trials(p, alg.value, trials, seed, budget=budget, weight=weight)
        if json_out is not None:
            with json_out.open("w", encoding="utf-8") as f:
                write_trials_jsonl(run.trials, f)
    values = run.values
    stderr = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    typer.echo(f"alg: {alg.value}" + (f" B={budget}" if alg is Alg.SE else ""))
    typer.echo(f"trials: {len(values)}")
    typer.echo(f"mean: {float(run.running_means[-1])!r}")
    typer.echo(f"stderr: {stderr!r}")
    typer.echo(f"min: {float(values.min())!r}  max: {float(values.max())!r}")


# ------------------------- dist -------------------------


@app.command("dist", help="Exact output distribution of an estimator")
def dist_cmd(
    program: _program_arg,
    alg: Annotated[DistAlg, typer.Option("--alg", "-a", help="Estimator")] = DistAlg.TRUST,
    weight: _weight_option = WeightMode.MAXIMAL,
    path_cap: Annotated[Optional[int], typer.Option("--path-cap", help="Path cap (default from config)")] = None,
    as_json: Annotated[bool, typer.Option("--json", help="Print JSON")] = False,
) -> None:
    with _errors():
        p = _load_program(program)
        d = exact_output_distribution(p, alg.value, weight, path_cap=effective("path_cap", path_cap))
    if as_json:
        typer.echo(
            json.dumps(
                {
                    "triples": [[_fmt_fraction(v), n, den] for v, n, den in d.triples()],
                    "mean": _fmt_fraction(d.mean),
                    "second_moment": _fmt_fraction(d.second_moment),
                    "variance": _fmt_fraction(d.variance),
                }
            )
        )
        return
    for v, n, den in d.triples():
        typer.echo(f"{_fmt_fraction(v)}\t{n}/{den}")
    typer.echo(f"mean: {_fmt_fraction(d.mean)}")
    typer.echo(f"second_moment: {_fmt_fraction(d.second_moment)}")
    typer.echo(f"variance: {_fmt_fraction(d.variance)}")


# ------------------------- converge -------------------------


def _convergence_config(**overrides: object) -> ConvergenceConfig:
    return ConvergenceConfig.from_mapping(load_config(), **overrides)


@app.command("converge", help="Convergence experiment over several seeds")
def converge_cmd(
    program: _program_arg,
    alg: Annotated[Alg, typer.Option("--alg", "-a", help="Estimator")] = Alg.SE,
    budget: Annotated[int, typer.Option("--budget", "-B", help="Population budget (se only)")] = 20,
    weight: _weight_option = WeightMode.MAXIMAL,
    band: Annotated[Optional[float], typer.Option("--band", help="Relative band half-width")] = None,
    stable: Annotated[Optional[int], typer.Option("--stable", help="Stability window (trials)")] = None,
    flat: Annotated[Optional[float], typer.Option("--flat", help="Flatness threshold (relative)")] = None,
    flat_window: Annotated[Optional[int], typer.Option("--flat-window", help="Moving-average window")] = None,
    max_trials: Annotated[Optional[int], typer.Option("--max-trials", help="Trials per seed")] = None,
    seeds: Annotated[Optional[int], typer.Option("--seeds", help="Number of seeds")] = None,
    quorum: Annotated[Optional[int], typer.Option("--quorum", help="Seeds that must converge")] = None,
    seed: _seed_option = 0,
    json_out: Annotated[Optional[Path], typer.Option("--json", help="Write the report as JSON")] = None,
) -> None:
    with _errors():
        cfg = _convergence_config(
            band=band,
            stable_window=stable,
            flat_threshold=flat,
            flat_window=flat_window,
            max_trials=max_trials,
            seeds=seeds,
            success_quorum=quorum,
        )
        p = _load_program(program)
        exact = enumerate_d_tree(p, weight, node_cap=effective("node_cap")).total_weight
        if exact <= 0:
            raise ValueError("exact total is 0; nothing to converge to")
        report = converge(
            p, alg.value, exact, cfg, budget=budget if alg is Alg.SE else None, weight=weight, base_seed=seed
        )
    for s in report.seeds:
        verdict = f"converged after {s.trials_to_converge}" if s.converged else "not converged"
        typer.echo(f"seed {s.seed}: {verdict}, rel_error {s.rel_error!r}")
    typer.echo(f"exact: {exact}")
    typer.echo(f"success_ratio: {report.success_ratio!r}")
    mean_trials = report.mean_trials_to_converge if report.quorum_met else "failed"
    typer.echo(f"trials_to_converge: {mean_trials}")
    if json_out is not None:
        data = {
            "exact": exact,
            "success_ratio": report.success_ratio,
            "trials_to_converge": mean_trials,
            "rel_error": report.rel_error,
            "config": cfg.to_json(),
            "seeds": [
                {"seed": s.seed, "converged": s.converged, "trials_to_converge": s.trials_to_converge, "rel_error": s.rel_error}
                for s in report.seeds
            ],
        }
        json_out.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


# ------------------------- approx -------------------------


@app.command("approx", help="Subexponential (r, rho)-approximate counter")
def approx_cmd(
    program: _program_arg,
    r: Annotated[float, typer.Option("--r", help="Approximation factor (> 1)")] = 2.0,
    rho: Annotated[float, typer.Option("--rho", help="Failure probability in (0, 1)")] = 0.25,
    seed: _seed_option = 0,
    theta: Annotated[Optional[int], typer.Option("--theta", help="Override the Act One leaf threshold")] = None,
    branching: Annotated[Optional[int], typer.Option("--b", help="Padded branching factor (with --h)")] = None,
    height: Annotated[Optional[int], typer.Option("--h", help="Padded height (with --b)")] = None,
) -> None:
    with _errors():
        if (branching is None) != (height is None):
            raise ValueError("--b and --h must be given together")
        params = PaddedTreeParams(branching, height) if branching is not None and height is not None else None
        p = _load_program(program)
        result = approx_count(p, r, rho, np.random.default_rng(seed), params=params, theta=theta)
    typer.echo(json.dumps(result.to_json()))


# ------------------------- bench -------------------------


@app.command("bench", help="Run a benchmark suite and write a CSV or JSON report")
def bench_cmd(
    suite_name: Annotated[str, typer.Option("--suite", help=f"One of: {', '.join(SUITES)}")] = "paper-micro",
    out: Annotated[Optional[Path], typer.Option("--out", "-o", help="Report file (.csv or .json); default: CSV on stdout")] = None,
    algs: Annotated[Optional[list[Alg]], typer.Option("--alg", "-a", help="Estimator (repeatable)")] = None,
    budgets: Annotated[Optional[list[int]], typer.Option("--budget", "-B", help="SE budget (repeatable)")] = None,
    weight: _weight_option = WeightMode.MAXIMAL,
    workers: Annotated[Optional[int], typer.Option("--workers", "-j", help="Parallel worker processes")] = None,
    max_trials: Annotated[Optional[int], typer.Option("--max-trials", help="Trials per seed")] = None,
    seeds: Annotated[Optional[int], typer.Option("--seeds", help="Number of seeds")] = None,
    quorum: Annotated[Optional[int], typer.Option("--quorum", help="Seeds that must converge")] = None,
    seed: _seed_option = 0,
) -> None:
    with _errors():
        cfg = _convergence_config(max_trials=max_trials, seeds=seeds, success_quorum=quorum)
        benchmarks = suite(suite_name)
        rows = run_benchmark_suite(
            benchmarks,
            cfg,
            algs=[a.value for a in (algs or [Alg.SE])],
            budgets=budgets or [20],
            weight=weight,
            base_seed=seed,
            workers=effective("workers", workers),
        )
        if out is None:
            write_csv(rows, sys.stdout)
        else:
            with out.open("w", encoding="utf-8", newline="") as f:
                (write_json if out.suffix == ".json" else write_csv)(rows, f)
    failed = sum(1 for r in rows if r.error)
    if out is not None:
        typer.echo(f"Wrote {len(rows)} row(s) to {out}" + (f" ({failed} failed)" if failed else ""))


# ------------------------- config -------------------------

config_app = typer.Typer(help="Saved defaults (~/.config/estor/config.json)")
app.add_typer(config_app, name="config")


@config_app.command("show", help="Show effective settings and where they come from")
def config_show() -> None:
    cfg = load_config() or {}
    for key, default in DEFAULTS.items():
        source = "saved" if key in cfg else "default"
        typer.echo(f"{key}: {cfg.get(key, default)} ({source})")


@config_app.command("set", help="Save settings: KEY=VALUE ...")
def config_set(pairs: Annotated[list[str], typer.Argument(help="KEY=VALUE pairs")]) -> None:
    cfg = load_config() or {}
    with _errors():
        for pair in pairs:
            key, value = parse_setting(pair)
            cfg[key] = value
        ConvergenceConfig.from_mapping(cfg)
        save_config(cfg)
    typer.echo("Saved.")


@config_app.command("reset", help="Delete saved settings")
def config_reset() -> None:
    if clear_config():
        typer.echo("Cleared.")
    else:
        typer.echo("No saved settings.")


# ------------------------- main -------------------------


def main() -> None:
    app()


if __name__ == "__main__":
    main()
