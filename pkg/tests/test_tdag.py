"""
T(P)：后继、前驱计数（入度 = sc 极大事件数）与汇点枚举。
"""

from __future__ import annotations

import pytest

from estor.corpus import get_benchmark
from estor.dtree import enumerate_d_tree
from estor.graph import INIT, Event, ExecutionGraph, canonical_key
from estor.models import CapExceeded
from estor.program import Program
from estor.tdag import enumerate_t_sinks, materialize_t_dag, t_predecessor_count, t_successors, to_dot

from tests.config import EXACT_COUNTS, SMALL_CORPUS


def test_t_successors_root(rww: Program) -> None:
    succs = t_successors(rww, ExecutionGraph.initial())
    assert [tid for tid, _ in succs] == [1, 2, 3]
    assert all(len(g) == 2 for _, g in succs)


def test_t_successors_read_reads_latest_write(rww: Program) -> None:
    g = ExecutionGraph.initial().with_write(Event(2, 0, "W", "x", 1), INIT)
    (tid, child), *_ = t_successors(rww, g)
    assert tid == 1
    assert child.rf[(1, 0)] == (2, 0)
    assert child.event((1, 0)).val == 1


def test_t_successors_maximal_is_empty(rww: Program) -> None:
    g = ExecutionGraph.initial()
    while succs := t_successors(rww, g):
        g = succs[0][1]
    assert len(g) == 4
    assert t_successors(rww, g) == []


def test_t_successors_r_rr_after_t1(rrr2: Program) -> None:
    """r+rr 只执行了 t1 的读：唯一后继是 t2 的第一个读。"""
    g = ExecutionGraph.initial().with_read(Event(1, 0, "R", "y"), INIT)
    succs = t_successors(rrr2, g)
    assert len(succs) == 1
    assert succs[0][0] == 2


def test_t_predecessor_count(rrr2: Program) -> None:
    g = ExecutionGraph.initial().with_read(Event(1, 0, "R", "y"), INIT)
    assert t_predecessor_count(g) == 1
    g3 = g.with_read(Event(2, 0, "R", "x"), INIT)
    assert t_predecessor_count(g3) == 2
    with pytest.raises(ValueError):
        t_predecessor_count(ExecutionGraph.initial())


@pytest.mark.parametrize("name", SMALL_CORPUS)
def test_in_degree_equals_sc_maximal_count(name: str) -> None:
    """物化 T(P) 的每个非根节点：显式入度 == sc 极大事件数。"""
    dag = materialize_t_dag(get_benchmark(name).program)
    for key, g in dag.nodes.items():
        if key == dag.root:
            continue
        assert dag.in_degree[key] == t_predecessor_count(g), name


@pytest.mark.parametrize("name", sorted(EXACT_COUNTS))
def test_enumerate_t_sinks_counts(name: str) -> None:
    assert enumerate_t_sinks(get_benchmark(name).program).count == EXACT_COUNTS[name]


@pytest.mark.parametrize("name", SMALL_CORPUS)
def test_sinks_equal_d_tree_leaves(name: str) -> None:
    """D(P) 的极大叶子两两不同，且与 T(P) 的汇点集合相同。"""
    p = get_benchmark(name).program
    leaves = enumerate_d_tree(p).leaf_keys
    assert len(leaves) == len(set(leaves))
    assert set(leaves) == enumerate_t_sinks(p).sinks


def test_blocked_sinks_are_not_counted(blocking: Program) -> None:
    result = enumerate_t_sinks(blocking)
    assert result.count == 1
    assert result.blocked_sinks == 1


def test_dag_nodes_reported(rww: Program) -> None:
    result = enumerate_t_sinks(rww)
    assert result.dag_nodes == len(materialize_t_dag(rww).nodes)
    assert canonical_key(ExecutionGraph.initial()) not in result.sinks


def test_node_cap_exceeded(rww: Program) -> None:
    with pytest.raises(CapExceeded) as exc:
        enumerate_t_sinks(rww, node_cap=3)
    assert exc.value.cap == 3
    assert exc.value.explored == 3


def test_to_dot(rww: Program) -> None:
    dot = to_dot(materialize_t_dag(rww))
    assert dot.startswith("digraph T {")
    assert dot.count("peripheries=2") == 6
    assert '[label="t1"]' in dot
