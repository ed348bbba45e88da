"""
交错迁移系统 T(P)：后继生成、前驱计数（= sc 极大事件数），以及汇点的精确枚举（C(P) 的基准真值）。

T(P) 中没有插入顺序，节点以 canonical_key 去重；被 assume 阻塞、尚未结束的线程不产生后继，
这样的汇点记为阻塞汇点，不计入 C(P)。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from estor.graph import Event, EventKind, ExecutionGraph, canonical_key, format_graph, sc_maximal_events
from estor.models import CapExceeded
from estor.program import Program, ThreadStatus, next_events, thread_states

logger = logging.getLogger(__name__)

DEFAULT_NODE_CAP = 200_000


def t_successors(p: Program, g: ExecutionGraph) -> list[tuple[int, ExecutionGraph]]:
    """每个待执行事件一个后继：读从 mo 最大写读取，写追加为 mo 最大；新事件插入顺序最后。"""
    out: list[tuple[int, ExecutionGraph]] = []
    for pe in next_events(p, g):
        latest = g.mo_list(pe.loc)[-1]
        if pe.kind is EventKind.READ:
            child = g.with_read(Event(pe.tid, pe.idx, EventKind.READ, pe.loc), latest)
        else:
            assert pe.value is not None
            child = g.with_write(Event(pe.tid, pe.idx, EventKind.WRITE, pe.loc, pe.value), latest)
        out.append((pe.tid, child))
    return out


def t_predecessor_count(g: ExecutionGraph) -> int:
    """T(P) 中 g 的入度 = sc 极大事件个数；根节点没有前驱，调用方需自行约定（Algorithm P 取 1）。"""
    if g.is_initial:
        raise ValueError("the initial graph has no predecessors")
    return len(sc_maximal_events(g))


def is_done(p: Program, g: ExecutionGraph) -> bool:
    return all(st.status is ThreadStatus.DONE for st in thread_states(p, g))


@dataclass
class TDag:
    """物化的 T(P)；节点以 canonical_key 标识。"""

    root: tuple
    nodes: dict[tuple, ExecutionGraph] = field(default_factory=dict)
    edges: list[tuple[tuple, tuple, int]] = field(default_factory=list)
    in_degree: dict[tuple, int] = field(default_factory=dict)
    sinks: set[tuple] = field(default_factory=set)
    blocked_sinks: set[tuple] = field(default_factory=set)


@dataclass(frozen=True)
class TSinks:
    count: int
    sinks: frozenset[tuple]
    dag_nodes: int
    blocked_sinks: int = 0


def materialize_t_dag(p: Program, node_cap: int = DEFAULT_NODE_CAP, *, keep_edges: bool = True) -> TDag:
    """带记忆的 DFS 物化 T(P)；节点数超过 node_cap 时抛出 CapExceeded。"""
    root = ExecutionGraph.initial()
    root_key = canonical_key(root)
    dag = TDag(root_key, {root_key: root}, in_degree={root_key: 0})
    stack = [root]
    while stack:
        g = stack.pop()
        key = canonical_key(g)
        succs = t_successors(p, g)
        if not succs:
            (dag.sinks if is_done(p, g) else dag.blocked_sinks).add(key)
            continue
        for tid, child in succs:
            ckey = canonical_key(child)
            if keep_edges:
                dag.edges.append((key, ckey, tid))
            dag.in_degree[ckey] = dag.in_degree.get(ckey, 0) + 1
            if ckey in dag.nodes:
                continue
            if len(dag.nodes) >= node_cap:
                logger.warning("T(P) node cap %d exceeded", node_cap)
                raise CapExceeded("T(P) node", len(dag.nodes), node_cap)
            dag.nodes[ckey] = child
            stack.append(child)
    logger.debug("T(P): %d nodes, %d sinks, %d blocked", len(dag.nodes), len(dag.sinks), len(dag.blocked_sinks))
    return dag


def enumerate_t_sinks(p: Program, node_cap: int = DEFAULT_NODE_CAP) -> TSinks:
    """C(P) = 不同的极大图个数；同时报告 DAG 节点总数。"""
    dag = materialize_t_dag(p, node_cap, keep_edges=False)
    return TSinks(len(dag.sinks), frozenset(dag.sinks), len(dag.nodes), len(dag.blocked_sinks))


def to_dot(dag: TDag) -> str:
    """Graphviz DOT；节点标签为 format_graph 的事件段。"""
    ids = {key: f"n{i}" for i, key in enumerate(dag.nodes)}
    lines = ["digraph T {", "  node [shape=box, fontname=monospace];"]
    for key, g in dag.nodes.items():
        body = format_graph(g).replace("\n", "\\l")
        extra = ", peripheries=2" if key in dag.sinks else (", style=dashed" if key in dag.blocked_sinks else "")
        lines.append(f'  {ids[key]} [label="{body}"{extra}];')
    for src, dst, tid in dag.edges:
        lines.append(f'  {ids[src]} -> {ids[dst]} [label="t{tid}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
