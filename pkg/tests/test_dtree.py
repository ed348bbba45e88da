"""
D(P)：访问选项、极大可重访性、子节点生成、节点分类与完整遍历。
"""

from __future__ import annotations

import io
from fractions import Fraction
from itertools import combinations

import pytest

from estor.corpus import get_benchmark, hairbrush
from estor.dtree import (
    Direction,
    SchedulerViolation,
    classify_node,
    d_children,
    enumerate_d_tree,
    is_maximally_revisitable,
    iter_d_tree,
    to_dot,
    visit_options,
    write_tree_log,
)
from estor.graph import INIT, Event, ExecutionGraph, GraphError, canonical_key, is_sc_consistent, restrict
from estor.models import NodeClass, WeightMode
from estor.program import PendingEvent, Program, next_events, parse_program
from estor.tdag import materialize_t_dag, t_successors

from tests.config import EXACT_COUNTS, SMALL_CORPUS

R = Event(1, 0, "R", "x")
W1 = Event(2, 0, "W", "x", 1)


def _after_read() -> ExecutionGraph:
    """r+w+w 中读了初值之后的节点。"""
    return ExecutionGraph.initial().with_read(R, INIT)


def _leaf_probabilities(p: Program) -> list[Fraction]:
    """Algorithm T 到达每个极大叶子的概率（DFS 顺序）。"""
    out: list[Fraction] = []
    stack = [(ExecutionGraph.initial(), Fraction(1))]
    while stack:
        g, prob = stack.pop()
        kids, _ = d_children(p, g)
        if not kids:
            if classify_node(p, g) is NodeClass.MAXIMAL_LEAF:
                out.append(prob)
            continue
        stack.extend((c, prob / len(kids)) for _, c in reversed(kids))
    return out


# ------------------------- visit_options -------------------------


def test_visit_options_write_has_forward_and_backward(rww: Program) -> None:
    g = _after_read()
    e = next_events(rww, g)[0]
    h = g.with_write(W1, INIT)
    opts = visit_options(g, e, h, rww)
    assert [(o.dir, o.target) for o in opts] == [(Direction.FWD, INIT), (Direction.BWD, R.id)]


def test_visit_options_read_with_only_init(rww: Program) -> None:
    g = ExecutionGraph.initial()
    e = next_events(rww, g)[0]
    opts = visit_options(g, e, g.with_read(R, INIT), rww)
    assert len(opts) == 1
    assert opts[0].dir is Direction.FWD
    assert opts[0].target == INIT


def test_visit_options_skips_porf_prefix_reads(wrww_rr: Program) -> None:
    """线程 1 自己先前的读在新写的 porf 前缀里，不能被后向重访。"""
    g = ExecutionGraph.initial().with_write(Event(1, 0, "W", "x", 1), INIT)
    g = g.with_read(Event(1, 1, "R", "x"), (1, 0))
    e = next_events(wrww_rr, g)[0]
    assert (e.tid, e.idx, e.kind) == (1, 2, "W")
    h = g.with_write(Event(1, 2, "W", "x", 2), (1, 0))
    opts = visit_options(g, e, h, wrww_rr)
    assert [o.dir for o in opts] == [Direction.FWD, Direction.FWD]


def test_visit_options_scheduler_violation(rww: Program) -> None:
    g = ExecutionGraph.initial()
    e = PendingEvent(2, 0, "W", "x", 1)
    with pytest.raises(SchedulerViolation):
        visit_options(g, e, g.with_write(W1, INIT), rww)


# ------------------------- is_maximally_revisitable -------------------------


def test_last_inserted_event_always_peels() -> None:
    g = _after_read().with_write(W1, INIT)
    assert is_maximally_revisitable(g, {W1.id})
    assert is_maximally_revisitable(_after_read(), {R.id})


def test_revisit_of_read_from_init() -> None:
    """读初值、w1 在其后：w2 的后向重访删除 {R, w1} 是合法的。"""
    g = _after_read().with_write(W1, INIT)
    assert is_maximally_revisitable(g, {R.id, W1.id})


def test_read_of_non_maximal_write_does_not_peel() -> None:
    """R 读 w1 且 w1 在 R 之后插入：剥掉 {R, w1} 时 R 读的不是当时的 mo 最大写。"""
    g = _after_read().with_write(W1, INIT).with_rf(R.id, W1.id)
    assert not is_maximally_revisitable(g, {R.id, W1.id})


def _peel_oracle(p: Program, g: ExecutionGraph, d_set: set, reachable: set) -> bool:
    """暴力：是否存在 T(P) 路径，最后 |D| 步按插入顺序恰好加入 D。"""
    try:
        h = restrict(g, set(g.ins) - d_set)
    except GraphError:
        return False
    if canonical_key(h) not in reachable:
        return False
    for d in sorted(d_set, key=g.ins.index):
        try:
            target = restrict(g, set(h.ins) | {d})
        except GraphError:
            return False
        key = canonical_key(target)
        if not any(canonical_key(c) == key for _, c in t_successors(p, h)):
            return False
        h = target
    return True


@pytest.mark.parametrize("name", ["r+w+w", "wrww+rr", "hairbrush(2)", "store-buffering"])
def test_maximal_revisitability_matches_brute_force(name: str) -> None:
    p = get_benchmark(name).program
    reachable = set(materialize_t_dag(p).nodes)
    for _, node in iter_d_tree(p):
        g = node.graph
        events = [e for e in g.ins if e != INIT]
        for k in range(1, min(len(events), 4) + 1):
            for subset in combinations(events, k):
                d_set = set(subset)
                assert is_maximally_revisitable(g, d_set) == _peel_oracle(p, g, d_set, reachable), (g, d_set)


# ------------------------- d_children -------------------------


def test_d_children_order(rww: Program) -> None:
    kids, inconsistent = d_children(rww, _after_read())
    assert inconsistent == 0
    assert [lab.dir for lab, _ in kids] == [Direction.FWD, Direction.BWD]
    bwd_label, bwd = kids[1]
    assert bwd_label.target == R.id
    assert bwd_label.anchor == INIT
    assert bwd.rf[R.id] == W1.id
    assert bwd.event(R.id).val == 1
    assert bwd.ins == (INIT, R.id, W1.id)


def test_r_w_w_leaf_probabilities(rww: Program) -> None:
    probs = _leaf_probabilities(rww)
    assert sorted(probs) == sorted(map(Fraction, ["1/6", "1/6", "1/12", "1/12", "1/4", "1/4"]))


@pytest.mark.parametrize("fixture", ["rrr", "rrr2"])
def test_single_path_trees(fixture: str, request: pytest.FixtureRequest) -> None:
    p = request.getfixturevalue(fixture)
    stats = enumerate_d_tree(p)
    assert stats.maximal_leaves == 1
    assert stats.max_out_degree == 1


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_hairbrush_shape(n: int) -> None:
    """向右倾斜：每个分叉点恰好两个子节点，折叠后每层宽度不超过 2。"""
    p = parse_program(hairbrush(n))
    stats = enumerate_d_tree(p, collapse=True)
    assert stats.maximal_leaves == n + 1
    assert stats.max_out_degree == 2
    assert stats.max_width <= 2
    assert stats.max_leaf_width <= 2
    assert _leaf_probabilities(p)[-1] == Fraction(1, 2**n)


def test_every_node_is_consistent_and_unique(wrww_rr: Program) -> None:
    seen = set()
    for _, node in iter_d_tree(wrww_rr):
        assert is_sc_consistent(node.graph)
        key = canonical_key(node.graph, with_insertion=True)
        assert key not in seen
        seen.add(key)


# ------------------------- classify_node -------------------------


def test_classify_node(rww: Program, blocking: Program) -> None:
    assert classify_node(rww, ExecutionGraph.initial()) is NodeClass.INTERNAL
    full = _after_read().with_write(W1, INIT).with_write(Event(3, 0, "W", "x", 2), W1.id)
    assert classify_node(rww, full) is NodeClass.MAXIMAL_LEAF
    g = _after_read()
    assert classify_node(blocking, g) is NodeClass.INTERNAL
    assert classify_node(blocking, g.with_write(W1, INIT)) is NodeClass.BLOCKED_LEAF


# ------------------------- enumerate_d_tree -------------------------


@pytest.mark.parametrize("name", sorted(EXACT_COUNTS))
def test_enumerate_d_tree_counts(name: str) -> None:
    assert enumerate_d_tree(get_benchmark(name).program).maximal_leaves == EXACT_COUNTS[name]


@pytest.mark.parametrize("name", SMALL_CORPUS)
def test_weights_and_collapse(name: str) -> None:
    """MAXIMAL 总权重 = C(P)，COST 总权重 = 探索图总数；折叠不改变任何计数。"""
    p = get_benchmark(name).program
    plain = enumerate_d_tree(p, WeightMode.COST)
    folded = enumerate_d_tree(p, WeightMode.COST, collapse=True)
    assert plain.total_weight == plain.explored
    assert folded.total_weight == plain.total_weight
    assert folded.maximal_leaves == plain.maximal_leaves
    assert folded.leaf_keys == plain.leaf_keys
    assert enumerate_d_tree(p).total_weight == plain.maximal_leaves
    size = p.size
    assert plain.max_depth <= size * (size + 1)


def test_blocked_leaves_counted(blocking: Program) -> None:
    stats = enumerate_d_tree(blocking, WeightMode.COST)
    assert stats.maximal_leaves == 1
    assert stats.blocked_leaves == 1
    assert stats.total_weight == stats.explored


def test_write_tree_log(rww: Program) -> None:
    buf = io.StringIO()
    n = write_tree_log(rww, buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == n
    assert lines[0] == "0 internal 1 0 1"
    assert sum(1 for line in lines if line.split()[1] == "maximal") == 6
    stats = enumerate_d_tree(rww, WeightMode.COST)
    assert n == stats.explored - stats.inconsistent_leaves


def test_to_dot(rww: Program) -> None:
    dot = to_dot(rww)
    assert dot.startswith("digraph D {")
    assert dot.count("peripheries=2") == 6
    assert 'label="B W(x,1)"' in dot
