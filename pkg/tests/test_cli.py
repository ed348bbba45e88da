"""
CLI（typer）单元测试：通过 CliRunner 调用各命令，程序取自内置 corpus 或临时文件。
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest
from typer.testing import CliRunner

from estor.cli import app

from tests.config import R_W_W

runner = CliRunner()


@pytest.fixture(autouse=True)
def _patch_config_path(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    """将配置路径指向临时目录。"""
    config_dir = tmp_path / "estor"
    config_dir.mkdir(parents=True, exist_ok=True)

    def _config_dir():
        return config_dir

    monkeypatch.setattr("estor.cli_config._config_dir", _config_dir)


# ------------------------- parse -------------------------


def test_parse_corpus_program() -> None:
    result = runner.invoke(app, ["parse", "corpus:r+w+w"])
    assert result.exit_code == 0
    assert "thread 1" in result.stdout
    assert "# threads=3 instructions=3 locations=x" in result.stdout


def test_parse_file(tmp_path: Path) -> None:
    f = tmp_path / "rww.cp"
    f.write_text(R_W_W, encoding="utf-8")
    result = runner.invoke(app, ["parse", str(f)])
    assert result.exit_code == 0
    assert "write x 2" in result.stdout


def test_parse_missing_file_exits_1(tmp_path: Path) -> None:
    result = runner.invoke(app, ["parse", str(tmp_path / "nope.cp")])
    assert result.exit_code == 1
    assert "error: not found" in result.output


def test_parse_syntax_error_exits_1(tmp_path: Path) -> None:
    """语法错误带行列号输出到 stderr，退出码 1。"""
    f = tmp_path / "bad.cp"
    f.write_text("thread 1\n  a = reed x\n", encoding="utf-8")
    result = runner.invoke(app, ["parse", str(f)])
    assert result.exit_code == 1
    assert "line 2, column 7" in result.output


def test_unknown_corpus_name_exits_1() -> None:
    result = runner.invoke(app, ["count", "corpus:nonsense"])
    assert result.exit_code == 1
    assert "unknown benchmark" in result.output


# ------------------------- count -------------------------


@pytest.mark.parametrize("semantics", ["dtree", "tdag"])
def test_count(semantics: str) -> None:
    result = runner.invoke(app, ["count", "corpus:r+w+w", "--semantics", semantics])
    assert result.exit_code == 0
    assert "count: 6" in result.stdout


def test_count_json_cost() -> None:
    result = runner.invoke(app, ["count", "corpus:wrww+rr", "--weight", "cost", "--json"])
    assert result.exit_code == 0
    data = json.loads(result.stdout)
    assert data["count"] == 4
    assert data["weight"] == "cost"
    assert data["total_weight"] == data["explored"]


def test_count_tdag_rejects_cost() -> None:
    result = runner.invoke(app, ["count", "corpus:r+w+w", "--semantics", "tdag", "--weight", "cost"])
    assert result.exit_code == 1
    assert "dtree" in result.output


def test_count_node_cap_exits_1() -> None:
    result = runner.invoke(app, ["count", "corpus:hairbrush(5)", "--node-cap", "3"])
    assert result.exit_code == 1
    assert "cap of 3 exceeded" in result.output


def test_count_writes_dot_and_tree_log(tmp_path: Path) -> None:
    dot = tmp_path / "d.dot"
    log = tmp_path / "tree.log"
    result = runner.invoke(app, ["count", "corpus:r+w+w", "--dot", str(dot), "--tree-log", str(log)])
    assert result.exit_code == 0
    assert dot.read_text(encoding="utf-8").startswith("digraph D {")
    assert log.read_text(encoding="utf-8").splitlines()[0] == "0 internal 1 0 1"


# ------------------------- estimate / dist -------------------------


def test_estimate_knuth_t(tmp_path: Path) -> None:
    out = tmp_path / "trials.jsonl"
    result = runner.invoke(app, ["estimate", "corpus:r+w+w", "--alg", "knuth-t", "-n", "20", "--json", str(out)])
    assert result.exit_code == 0
    assert "mean: 6.0" in result.stdout
    assert "stderr: 0.0" in result.stdout
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 20
    assert json.loads(lines[0])["alg"] == "knuth-t"


def test_estimate_se_default_budget() -> None:
    result = runner.invoke(app, ["estimate", "corpus:hairbrush(4)", "--alg", "se", "-n", "10"])
    assert result.exit_code == 0
    assert "alg: se B=20" in result.stdout
    assert "mean: 5.0" in result.stdout


def test_estimate_errors() -> None:
    assert runner.invoke(app, ["estimate", "corpus:r+w+w", "-n", "0"]).exit_code == 1
    result = runner.invoke(app, ["estimate", "corpus:r+w+w", "--alg", "pitt", "--weight", "cost"])
    assert result.exit_code == 1
    assert "cost weighting" in result.output


def test_dist_trust() -> None:
    result = runner.invoke(app, ["dist", "corpus:r+w+w"])
    assert result.exit_code == 0
    lines = result.stdout.splitlines()
    assert lines[:3] == ["4\t1/2", "6\t1/3", "12\t1/6"]
    assert "mean: 6" in lines
    assert "second_moment: 44" in lines
    assert "variance: 8" in lines


def test_dist_json_pitt() -> None:
    result = runner.invoke(app, ["dist", "corpus:r+rr", "--alg", "pitt", "--json"])
    assert result.exit_code == 0
    data = json.loads(result.stdout)
    assert data["triples"] == [["1/2", 1, 2], ["1", 1, 4], ["2", 1, 4]]
    assert data["mean"] == "1"
    assert data["variance"] == "3/8"


# ------------------------- converge / approx -------------------------


def test_converge_constant_estimator(tmp_path: Path) -> None:
    out = tmp_path / "conv.json"
    args = ["converge", "corpus:r+r+r", "--alg", "genmc", "--max-trials", "30", "--flat-window", "10"]
    args += ["--stable", "5", "--seeds", "3", "--quorum", "2", "--json", str(out)]
    result = runner.invoke(app, args)
    assert result.exit_code == 0
    assert "success_ratio: 1.0" in result.stdout
    assert "trials_to_converge: 10.0" in result.stdout
    data = json.loads(out.read_text(encoding="utf-8"))
    assert data["exact"] == 1
    assert data["config"]["max_trials"] == 30
    assert len(data["seeds"]) == 3


def test_converge_invalid_config_exits_1() -> None:
    result = runner.invoke(app, ["converge", "corpus:r+r+r", "--seeds", "2", "--quorum", "3"])
    assert result.exit_code == 1
    assert "success_quorum" in result.output


def test_approx_act_one() -> None:
    result = runner.invoke(app, ["approx", "corpus:r+w+w"])
    assert result.exit_code == 0
    data = json.loads(result.stdout)
    assert data["act"] == "one"
    assert data["exact"] == 6
    assert (data["b"], data["h"]) == (3, 4)


def test_approx_act_two_with_overrides() -> None:
    result = runner.invoke(app, ["approx", "corpus:r+w+w", "--b", "3", "--h", "4", "--theta", "3", "--seed", "1"])
    assert result.exit_code == 0
    data = json.loads(result.stdout)
    assert data["act"] == "two"
    assert data["M"] == "121"
    assert data["z"] == 158


def test_approx_needs_both_b_and_h() -> None:
    result = runner.invoke(app, ["approx", "corpus:r+w+w", "--b", "3"])
    assert result.exit_code == 1
    assert "--b and --h" in result.output


# ------------------------- bench -------------------------


def test_bench_writes_csv(tmp_path: Path) -> None:
    out = tmp_path / "report.csv"
    args = ["bench", "--suite", "paper-micro", "--alg", "genmc", "--max-trials", "20", "--seeds", "1"]
    args += ["--quorum", "1", "--out", str(out)]
    result = runner.invoke(app, args)
    assert result.exit_code == 0
    assert "Wrote 12 row(s)" in result.stdout
    rows = list(csv.DictReader(out.open(encoding="utf-8")))
    assert len(rows) == 12
    assert rows[0]["benchmark"] == "r+w+w"
    assert rows[0]["exact"] == "6"


def test_bench_json_to_file(tmp_path: Path) -> None:
    out = tmp_path / "report.json"
    args = ["bench", "--suite", "cost", "--alg", "se", "-B", "100000", "--max-trials", "2", "--seeds", "1"]
    args += ["--quorum", "1", "--out", str(out)]
    result = runner.invoke(app, args)
    assert result.exit_code == 0
    data = json.loads(out.read_text(encoding="utf-8"))
    assert [r["benchmark"] for r in data] == ["incrementor(4)", "guarded-incrementor(4,2)"]
    assert all(r["mean"] == r["exact"] for r in data)


def test_bench_unknown_suite_exits_1() -> None:
    result = runner.invoke(app, ["bench", "--suite", "nope"])
    assert result.exit_code == 1
    assert "unknown suite" in result.output


# ------------------------- config -------------------------


def test_config_set_show_reset() -> None:
    result = runner.invoke(app, ["config", "set", "workers=2", "band=0.1"])
    assert result.exit_code == 0
    assert "Saved." in result.stdout

    from estor.cli_config import load_config

    assert load_config() == {"workers": 2, "band": 0.1}

    shown = runner.invoke(app, ["config", "show"]).stdout
    assert "workers: 2 (saved)" in shown
    assert "node_cap: 200000 (default)" in shown

    assert "Cleared." in runner.invoke(app, ["config", "reset"]).stdout
    assert "No saved settings." in runner.invoke(app, ["config", "reset"]).stdout


def test_config_set_rejects_bad_pairs() -> None:
    result = runner.invoke(app, ["config", "set", "colour=red"])
    assert result.exit_code == 1
    assert "KEY=VALUE" in result.output
    result = runner.invoke(app, ["config", "set", "seeds=2"])
    assert result.exit_code == 1
    assert "success_quorum" in result.output


def test_saved_settings_feed_commands() -> None:
    """保存的 node_cap 在未传 --node-cap 时生效。"""
    runner.invoke(app, ["config", "set", "node_cap=3"])
    result = runner.invoke(app, ["count", "corpus:hairbrush(5)"])
    assert result.exit_code == 1
    assert "cap of 3" in result.output
