"""
无状态最优 DPOR 树 D(P)：访问选项、前向/后向重访、极大可重访性检查、子节点生成、节点分类，
以及完整遍历（精确“模型检查器”）。

子节点顺序固定：先前向（按锚点写在 mo 中的位置），再后向（按被重访读的插入位置、锚点 mo 位置）。
因此 D(P) 是一棵确定的有序树，subexp 的中序编号依赖这一点。

折叠模式（collapse=True）下，只有一个一致子节点的节点不单独出现：沿单链走到下一个分叉点或叶子，
链上各节点的权重与不一致子节点数累加到链末节点。

树日志格式（write_tree_log），先序每节点一行：

    <depth> <class> <childCount> <inconsistentCount> <weight>

class ∈ {internal, maximal, blocked}。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, TextIO

from estor.graph import (
    Event,
    EventId,
    EventKind,
    ExecutionGraph,
    canonical_key,
    format_graph,
    is_sc_consistent,
    porf_prefix,
    restrict,
)
from estor.models import CapExceeded, NodeClass, TreeStats, WeightMode
from estor.program import PendingEvent, Program, ThreadStatus, next_events, replay_thread, thread_states

logger = logging.getLogger(__name__)

DEFAULT_NODE_CAP = 200_000


class SchedulerViolation(ValueError):
    """visit_options 收到的不是调度器选中的最小待执行事件。"""


class Direction(str, Enum):
    FWD = "Fwd"
    BWD = "Bwd"


@dataclass(frozen=True)
class TransitionLabel:
    """
    ⟨dir, e, target⟩：e 为新加入的事件；前向时 target 为 rf/mo 锚点写，后向时为被重访的读，
    后向子节点的 mo 锚点写放在 anchor。
    """

    dir: Direction
    e: Event
    target: EventId
    anchor: EventId | None = None


Child = tuple[TransitionLabel, ExecutionGraph]


def _as_event(pe: PendingEvent) -> Event:
    return Event(pe.tid, pe.idx, pe.kind, pe.loc, pe.value if pe.value is not None else 0)


def visit_options(
    g: ExecutionGraph, e: PendingEvent, h: ExecutionGraph, p: Program | None = None
) -> list[TransitionLabel]:
    """
    读：每个 loc(e) 上的写（含 init，按 mo 顺序）一个前向选项；
    写：同上的前向选项，外加每个不在 e 的 porf 前缀中（在 h 里计算）的 loc(e) 上的读一个后向选项。
    后向选项的 anchor 留空，由 d_children 在删除后的图上展开。
    """
    if p is not None:
        pending = next_events(p, g)
        if not pending or pending[0] != e:
            raise SchedulerViolation(f"event t{e.tid}.{e.idx} is not the scheduler's minimal pending event")
    ev = _as_event(e)
    opts = [TransitionLabel(Direction.FWD, ev, w) for w in g.mo_list(e.loc)]
    if e.kind is EventKind.WRITE:
        prefix = porf_prefix(h, ev.id)
        opts += [TransitionLabel(Direction.BWD, ev, r) for r in g.reads_at(e.loc) if r not in prefix]
    return opts


def is_maximally_revisitable(g: ExecutionGraph, d_set: set[EventId]) -> bool:
    """
    d_1..d_k 为 d_set 按插入顺序排列；当且仅当存在 T(P) 路径 H_1 →d_1→ … →d_k→ G（忽略插入顺序）时为真：
    H_i = g 去掉 {d_i..d_k}；d_i 恰是其线程在 H_i 中的下一个事件；读必须读 H_i 中的 mo 最大写；
    写在 g 的 mo 中必须位于 H_i 所有同位置写之后。
    """
    order = sorted(d_set, key=g.ins.index)
    survivors = set(g.ins) - d_set
    for r, w in g.rf.items():
        if r in survivors and w not in survivors:
            return False
    for d in order:
        ev = g.event(d)
        # 线程结构：H_i 中该线程恰好有 idx 0..d.idx-1
        if any((ev.tid, i) not in survivors for i in range(ev.idx)):
            return False
        if any(x.idx > ev.idx and x.id in survivors for x in g.thread_events(ev.tid)):
            return False
        assert ev.loc is not None
        mo_order = g.mo_list(ev.loc)
        if ev.kind is EventKind.READ:
            latest = [w for w in mo_order if w in survivors][-1]
            if g.rf[d] != latest:
                return False
        else:
            pos = mo_order.index(d)
            if any(w in survivors for w in mo_order[pos + 1 :]):
                return False
        survivors.add(d)
    return True


def d_children(p: Program, g: ExecutionGraph) -> tuple[list[Child], int]:
    """按固定顺序生成 g 的一致子节点；不一致的候选只计数。"""
    pending = next_events(p, g)
    if not pending:
        return [], 0
    e = pending[0]
    ev = _as_event(e)
    latest = g.mo_list(e.loc)[-1]
    h = g.with_read(ev, latest) if e.kind is EventKind.READ else g.with_write(ev, latest)
    children: list[Child] = []
    inconsistent = 0

    def offer(label: TransitionLabel, child: ExecutionGraph) -> None:
        nonlocal inconsistent
        if is_sc_consistent(child):
            children.append((label, child))
        else:
            inconsistent += 1

    for opt in visit_options(g, e, h):
        if opt.dir is Direction.FWD:
            child = g.with_read(ev, opt.target) if e.kind is EventKind.READ else g.with_write(ev, opt.target)
            offer(TransitionLabel(Direction.FWD, child.event(ev.id), opt.target), child)
            continue
        r = opt.target
        prefix = porf_prefix(h, ev.id)
        pos = g.ins.index(r)
        deleted = {x for x in g.ins[pos + 1 :] if x not in prefix}
        if not is_maximally_revisitable(g, deleted | {r}):
            continue
        base = restrict(g, set(g.ins) - deleted)
        for w in base.mo_list(e.loc):
            child = base.with_write(ev, w).with_rf(r, ev.id)
            # 被重访读的线程在新值下必须仍可重放
            replay_thread(p, r[0], child)
            offer(TransitionLabel(Direction.BWD, ev, r, w), child)
    return children, inconsistent


def classify_node(p: Program, g: ExecutionGraph) -> NodeClass:
    statuses = [st.status for st in thread_states(p, g)]
    if ThreadStatus.RUNNING in statuses:
        return NodeClass.INTERNAL
    if all(s is ThreadStatus.DONE for s in statuses):
        return NodeClass.MAXIMAL_LEAF
    return NodeClass.BLOCKED_LEAF


def node_weight(cls: NodeClass, inconsistent: int, weight: WeightMode) -> int:
    if weight is WeightMode.MAXIMAL:
        return 1 if cls is NodeClass.MAXIMAL_LEAF else 0
    return 1 + inconsistent


@dataclass(frozen=True)
class DNode:
    """
    D(P) 中的一个（可能折叠的）节点：graph 为链末节点，children 为其一致子节点；
    weight / inconsistent / internal 为整条链的累计值，length 为链上原始节点数。
    """

    graph: ExecutionGraph
    node_class: NodeClass
    children: tuple[Child, ...]
    inconsistent: int
    weight: int
    length: int = 1
    internal: int = 0


def expand_node(p: Program, g: ExecutionGraph, weight: WeightMode, collapse: bool = False) -> DNode:
    total = inconsistent = length = internal = 0
    while True:
        cls = classify_node(p, g)
        kids, bad = d_children(p, g) if cls is NodeClass.INTERNAL else ([], 0)
        total += node_weight(cls, bad, weight)
        inconsistent += bad
        length += 1
        internal += cls is NodeClass.INTERNAL
        if collapse and len(kids) == 1:
            g = kids[0][1]
            continue
        return DNode(g, cls, tuple(kids), inconsistent, total, length, internal)


def iter_d_tree(
    p: Program,
    weight: WeightMode = WeightMode.MAXIMAL,
    *,
    collapse: bool = False,
    node_cap: int = DEFAULT_NODE_CAP,
) -> Iterator[tuple[int, DNode]]:
    """按 d_children 顺序的先序遍历，产出 (深度, 节点)；原始节点数超过 node_cap 时抛出 CapExceeded。"""
    explored = 0
    stack: list[tuple[int, ExecutionGraph]] = [(0, ExecutionGraph.initial())]
    while stack:
        depth, g = stack.pop()
        node = expand_node(p, g, weight, collapse)
        explored += node.length
        if explored > node_cap:
            logger.warning("D(P) node cap %d exceeded", node_cap)
            raise CapExceeded("D(P) node", explored, node_cap)
        yield depth, node
        stack.extend((depth + 1, child) for _, child in reversed(node.children))


def enumerate_d_tree(
    p: Program,
    weight: WeightMode = WeightMode.MAXIMAL,
    *,
    collapse: bool = False,
    node_cap: int = DEFAULT_NODE_CAP,
) -> TreeStats:
    """完整遍历 D(P)。计数类字段与折叠无关；宽度、深度、出度按（折叠后的）树形统计。"""
    stats = TreeStats()
    for depth, node in iter_d_tree(p, weight, collapse=collapse, node_cap=node_cap):
        stats.internal_nodes += node.internal
        stats.inconsistent_leaves += node.inconsistent
        stats.total_weight += node.weight
        if node.node_class is NodeClass.MAXIMAL_LEAF:
            stats.maximal_leaves += 1
            stats.leaf_keys.append(canonical_key(node.graph))
        elif node.node_class is NodeClass.BLOCKED_LEAF:
            stats.blocked_leaves += 1
        while len(stats.width_per_depth) <= depth:
            stats.width_per_depth.append(0)
            stats.leaf_width_per_depth.append(0)
        stats.width_per_depth[depth] += 1
        if not node.children:
            stats.leaf_width_per_depth[depth] += 1
        stats.max_depth = max(stats.max_depth, depth)
        stats.max_out_degree = max(stats.max_out_degree, len(node.children))
    logger.debug(
        "D(P): %d maximal, %d blocked, %d inconsistent, %d internal",
        stats.maximal_leaves,
        stats.blocked_leaves,
        stats.inconsistent_leaves,
        stats.internal_nodes,
    )
    return stats


def write_tree_log(
    p: Program,
    out: TextIO,
    weight: WeightMode = WeightMode.COST,
    *,
    collapse: bool = False,
    node_cap: int = DEFAULT_NODE_CAP,
) -> int:
    """先序写出树日志，返回行数。"""
    n = 0
    for depth, node in iter_d_tree(p, weight, collapse=collapse, node_cap=node_cap):
        out.write(f"{depth} {node.node_class.value} {len(node.children)} {node.inconsistent} {node.weight}\n")
        n += 1
    return n


def to_dot(p: Program, node_cap: int = 2_000) -> str:
    """小规模 D(P) 的 Graphviz DOT；边标签 F/B 加新事件。"""
    lines = ["digraph D {", "  node [shape=box, fontname=monospace];"]
    counter = 0
    stack: list[tuple[str | None, TransitionLabel | None, ExecutionGraph]] = [(None, None, ExecutionGraph.initial())]
    while stack:
        parent, label, g = stack.pop()
        name = f"n{counter}"
        counter += 1
        if counter > node_cap:
            raise CapExceeded("D(P) node", counter - 1, node_cap)
        cls = classify_node(p, g)
        kids, bad = d_children(p, g) if cls is NodeClass.INTERNAL else ([], 0)
        body = format_graph(g).replace("\n", "\\l")
        extra = {NodeClass.MAXIMAL_LEAF: ", peripheries=2", NodeClass.BLOCKED_LEAF: ", style=dashed"}.get(cls, "")
        note = f"\\linconsistent: {bad}\\l" if bad else ""
        lines.append(f'  {name} [label="{body}{note}"{extra}];')
        if parent is not None and label is not None:
            tag = "F" if label.dir is Direction.FWD else "B"
            lines.append(f'  {parent} -> {name} [label="{tag} {label.e.label}"];')
        stack.extend((name, lab, child) for lab, child in reversed(kids))
    lines.append("}")
    return "\n".join(lines) + "\n"
