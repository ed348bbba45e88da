"""
随机估计器与精确输出分布。

- knuth_estimate：Knuth 随机探测，Σ w(v_i)·Π_{j<i} d_j；在 T(P) 上有偏（DAG），在 D(P) 上即 Algorithm T；
- pitt_estimate：T(P) 上的随机游走，Π d_i/e_i，e_i 为入度（根取 1）；
- se_estimate：随机枚举（population 大小 ≤ B），B=1 时与 Algorithm T 相同；
  默认走折叠的 D(P)，单子节点链不占层，hairbrush(n) 上 B=2 因而每层不必抽样、输出恒为 n+1；
- genmc_estimate：有偏基线（只做前向选择，后向重访改为计数器 +1）；
- exact_output_distribution：枚举全部根到终点的路径，给出输出值的精确分布。

估计值以 Fraction 精确计算，EstimateTrial 中保存 float。
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Hashable, Iterable, Protocol

import numpy as np

from estor.dtree import expand_node
from estor.graph import Event, EventKind, ExecutionGraph, canonical_key, is_sc_consistent, porf_prefix
from estor.models import CapExceeded, EstimateTrial, NodeClass, OutputDistribution, WeightMode
from estor.program import Program, next_events
from estor.tdag import is_done, t_predecessor_count, t_successors

ALGORITHMS = ("knuth-t", "pitt", "trust", "se", "genmc")
DISTRIBUTION_ALGORITHMS = ("knuth-t", "pitt", "trust")
DEFAULT_PATH_CAP = 100_000


@dataclass(frozen=True)
class Expansion:
    children: tuple[Any, ...]
    node_class: NodeClass
    weight: int


class SuccessorProvider(Protocol):
    """树/DAG 抽象：root() 给出根状态，expand() 给出有序子状态与该节点在 weight 下的权重。"""

    def root(self) -> Any: ...

    def expand(self, state: Any, weight: WeightMode) -> Expansion: ...


class TransitionProvider:
    """T(P)：子节点为 t_successors；in_degree 为前驱数（根为 1）。"""

    def __init__(self, p: Program):
        self.p = p

    def root(self) -> ExecutionGraph:
        return ExecutionGraph.initial()

    def expand(self, state: ExecutionGraph, weight: WeightMode) -> Expansion:
        children = tuple(g for _, g in t_successors(self.p, state))
        if children:
            cls = NodeClass.INTERNAL
        else:
            cls = NodeClass.MAXIMAL_LEAF if is_done(self.p, state) else NodeClass.BLOCKED_LEAF
        if weight is WeightMode.MAXIMAL:
            w = int(cls is NodeClass.MAXIMAL_LEAF)
        else:
            w = 1
        return Expansion(children, cls, w)

    def in_degree(self, state: ExecutionGraph) -> int:
        return 1 if state.is_initial else t_predecessor_count(state)


class DporProvider:
    """
    D(P)：子节点为 d_children 的一致子节点。collapse=True 时走折叠树（单子节点链合并）。
    cache_size > 0 时按（含插入顺序的）规范键缓存展开结果，供大量 trial 复用。
    """

    def __init__(self, p: Program, *, collapse: bool = False, cache_size: int = 50_000):
        self.p = p
        self.collapse = collapse
        self.cache_size = cache_size
        self._cache: dict[Hashable, Expansion] = {}

    def root(self) -> ExecutionGraph:
        return ExecutionGraph.initial()

    def expand(self, state: ExecutionGraph, weight: WeightMode) -> Expansion:
        key = (canonical_key(state, with_insertion=True), weight) if self.cache_size else None
        if key is not None and key in self._cache:
            return self._cache[key]
        node = expand_node(self.p, state, weight, self.collapse)
        ex = Expansion(tuple(g for _, g in node.children), node.node_class, node.weight)
        if key is not None and len(self._cache) < self.cache_size:
            self._cache[key] = ex
        return ex


class LoggedTreeProvider:
    """
    由树日志（dtree.write_tree_log 的输出）重建的树；状态为先序下标。
    COST 权重取日志中记录的权重（日志需以 cost 模式写出），MAXIMAL 权重由节点类别推出。
    """

    def __init__(self, lines: Iterable[str]):
        self.nodes: list[tuple[NodeClass, int]] = []
        self.children: list[list[int]] = []
        # (节点下标, 剩余子节点数)
        open_nodes: list[tuple[int, int]] = []
        for lineno, raw in enumerate(lines, start=1):
            if not raw.strip():
                continue
            try:
                depth_s, cls_s, count_s, _inc_s, weight_s = raw.split()
                depth, count, w = int(depth_s), int(count_s), int(weight_s)
                cls = NodeClass(cls_s)
            except ValueError as e:
                raise ValueError(f"tree log line {lineno}: malformed entry {raw.strip()!r}") from e
            while open_nodes and open_nodes[-1][1] == 0:
                open_nodes.pop()
            if depth != len(open_nodes):
                raise ValueError(f"tree log line {lineno}: depth {depth} does not match preorder position")
            idx = len(self.nodes)
            self.nodes.append((cls, w))
            self.children.append([])
            if open_nodes:
                parent, left = open_nodes[-1]
                self.children[parent].append(idx)
                open_nodes[-1] = (parent, left - 1)
            open_nodes.append((idx, count))
        if not self.nodes:
            raise ValueError("tree log is empty")
        if any(left for _, left in open_nodes):
            raise ValueError("tree log ends before all children are listed")

    def root(self) -> int:
        return 0

    def expand(self, state: int, weight: WeightMode) -> Expansion:
        cls, w = self.nodes[state]
        if weight is WeightMode.MAXIMAL:
            w = int(cls is NodeClass.MAXIMAL_LEAF)
        return Expansion(tuple(self.children[state]), cls, w)


def _pick(rng: np.random.Generator, n: int) -> int:
    return int(rng.integers(n))


# ------------------------- 估计器 -------------------------


def knuth_estimate(
    provider: SuccessorProvider, weight: WeightMode, rng: np.random.Generator, *, alg: str = "knuth"
) -> EstimateTrial:
    """随机根到终点路径，返回 Σ_i w(v_i)·Π_{j<i} d_j。"""
    state = provider.root()
    total = 0
    mult = 1
    length = 0
    while True:
        ex = provider.expand(state, weight)
        total += ex.weight * mult
        length += 1
        if not ex.children:
            break
        mult *= len(ex.children)
        state = ex.children[_pick(rng, len(ex.children))]
    return EstimateTrial(float(total), length, None, alg, None, weight.value)


def pitt_estimate(p: Program, rng: np.random.Generator, provider: TransitionProvider | None = None) -> EstimateTrial:
    """T(P) 上的随机游走，返回 Π d_i/e_i；终点 d=1；阻塞汇点返回 0。"""
    provider = provider or TransitionProvider(p)
    g = provider.root()
    value = Fraction(1)
    length = 0
    while True:
        ex = provider.expand(g, WeightMode.MAXIMAL)
        length += 1
        value *= Fraction(max(len(ex.children), 1), provider.in_degree(g))
        if not ex.children:
            if ex.node_class is NodeClass.BLOCKED_LEAF:
                value = Fraction(0)
            break
        g = ex.children[_pick(rng, len(ex.children))]
    return EstimateTrial(float(value), length, None, "pitt", None, WeightMode.MAXIMAL.value)


def se_estimate(
    p: Program,
    budget: int,
    weight: WeightMode,
    rng: np.random.Generator,
    provider: SuccessorProvider | None = None,
) -> EstimateTrial:
    """
    随机枚举：H_1 = {root}；每层 S(H_i) 为全部成员的一致子节点，超过 B 个时均匀取 B 个子集。
    返回 Σ_i (Π_{j<i} |S(H_j)|/|H_j|)·w(H_i)/|H_i|。默认在折叠的 D(P) 上运行。
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    provider = provider or DporProvider(p, collapse=True)
    population = [provider.root()]
    mult = Fraction(1)
    total = Fraction(0)
    depth = 0
    while population:
        expansions = [provider.expand(s, weight) for s in population]
        total += mult * Fraction(sum(ex.weight for ex in expansions), len(population))
        depth += 1
        successors = [c for ex in expansions for c in ex.children]
        if not successors:
            break
        mult *= Fraction(len(successors), len(population))
        if len(successors) > budget:
            chosen = np.sort(rng.choice(len(successors), size=budget, replace=False))
            population = [successors[i] for i in chosen]
        else:
            population = successors
    return EstimateTrial(float(total), depth, None, "se", budget, weight.value)


def genmc_estimate(p: Program, rng: np.random.Generator) -> EstimateTrial:
    """
    有偏基线：优先调度待执行的写（在写之间均匀），否则在读之间均匀；
    读的计数器 = 一致的 rf 选项数，写的计数器 = 一致的 mo 位置数；
    每加入一个写，同位置上不在其 porf 前缀中的已有读的计数器 +1；返回所有计数器之积。
    """
    g = ExecutionGraph.initial()
    counters: dict[tuple[int, int], int] = {}
    length = 0
    while True:
        pending = next_events(p, g)
        length += 1
        if not pending:
            if not is_done(p, g):
                return EstimateTrial(0.0, length, None, "genmc")
            break
        writes = [pe for pe in pending if pe.kind is EventKind.WRITE]
        pool = writes or pending
        pe = pool[_pick(rng, len(pool))]
        ev = Event(pe.tid, pe.idx, pe.kind, pe.loc, pe.value if pe.value is not None else 0)
        if pe.kind is EventKind.READ:
            options = [c for c in (g.with_read(ev, w) for w in g.mo_list(pe.loc)) if is_sc_consistent(c)]
        else:
            options = [c for c in (g.with_write(ev, w) for w in g.mo_list(pe.loc)) if is_sc_consistent(c)]
        counters[ev.id] = len(options)
        nxt = options[_pick(rng, len(options))]
        if pe.kind is EventKind.WRITE:
            prefix = porf_prefix(nxt, ev.id)
            for r in g.reads_at(pe.loc):
                if r not in prefix:
                    counters[r] += 1
        g = nxt
    value = 1
    for c in counters.values():
        value *= c
    return EstimateTrial(float(value), length, None, "genmc")


# ------------------------- 统一入口 -------------------------


def make_provider(p: Program, alg: str, *, collapse: bool = True) -> SuccessorProvider | None:
    if alg in ("knuth-t", "pitt"):
        return TransitionProvider(p)
    if alg == "trust":
        return DporProvider(p, collapse=False)
    if alg == "se":
        return DporProvider(p, collapse=collapse)
    return None


def check_algorithm(alg: str, weight: WeightMode, budget: int | None = None) -> None:
    if alg not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {alg!r} (expected one of {', '.join(ALGORITHMS)})")
    if alg in ("pitt", "genmc") and weight is WeightMode.COST:
        raise ValueError(f"algorithm {alg!r} does not support cost weighting")
    if alg == "se" and (budget is None or budget < 1):
        raise ValueError("budget must be >= 1")


def run_estimator(
    p: Program,
    alg: str,
    rng: np.random.Generator,
    *,
    budget: int | None = None,
    weight: WeightMode = WeightMode.MAXIMAL,
    provider: SuccessorProvider | None = None,
) -> EstimateTrial:
    """按算法名分派一次估计；provider 可在多次 trial 间复用（见 make_provider）。"""
    check_algorithm(alg, weight, budget)
    if provider is None:
        provider = make_provider(p, alg)
    if alg == "knuth-t":
        assert provider is not None
        return knuth_estimate(provider, weight, rng, alg="knuth-t")
    if alg == "trust":
        assert provider is not None
        return knuth_estimate(provider, weight, rng, alg="trust")
    if alg == "pitt":
        assert isinstance(provider, TransitionProvider)
        return pitt_estimate(p, rng, provider)
    if alg == "se":
        assert budget is not None
        return se_estimate(p, budget, weight, rng, provider)
    return genmc_estimate(p, rng)


# ------------------------- 精确分布 -------------------------


def exact_output_distribution(
    p: Program,
    alg: str,
    weight: WeightMode = WeightMode.MAXIMAL,
    *,
    path_cap: int = DEFAULT_PATH_CAP,
) -> OutputDistribution:
    """枚举全部根到终点路径（精确有理概率与输出值）；路径数超过 path_cap 时抛出 CapExceeded。"""
    if alg not in DISTRIBUTION_ALGORITHMS:
        raise ValueError(f"no exact distribution for {alg!r} (expected one of {', '.join(DISTRIBUTION_ALGORITHMS)})")
    check_algorithm(alg, weight)
    provider: SuccessorProvider
    if alg == "trust":
        provider = DporProvider(p, collapse=True, cache_size=0)
    else:
        provider = TransitionProvider(p)
    probs: dict[Fraction, Fraction] = {}
    paths = 0
    # (状态, 概率, 累计值, 路径乘积)
    stack: list[tuple[Any, Fraction, Fraction, Fraction]] = [(provider.root(), Fraction(1), Fraction(0), Fraction(1))]
    while stack:
        state, prob, acc, mult = stack.pop()
        ex = provider.expand(state, weight)
        d = len(ex.children)
        if alg == "pitt":
            assert isinstance(provider, TransitionProvider)
            mult *= Fraction(max(d, 1), provider.in_degree(state))
        else:
            acc += ex.weight * mult
            mult *= max(d, 1)
        if not ex.children:
            if alg == "pitt":
                value = Fraction(0) if ex.node_class is NodeClass.BLOCKED_LEAF else mult
            else:
                value = acc
            probs[value] = probs.get(value, Fraction(0)) + prob
            paths += 1
            if paths > path_cap:
                raise CapExceeded("path", paths, path_cap)
            continue
        stack.extend((c, prob / d, acc, mult) for c in ex.children)
    return OutputDistribution(probs)
