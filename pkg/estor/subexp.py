"""
近似计数器：把 D(P) 嵌入高度 h、分支 b 的完全 b 叉树 H(P)（不存在的位置为 dummy），
用中序编号做无状态的区间下降。

- 第一幕：按 ≺ 顺序精确枚举前 θ+1 个极大叶子；不超过 θ 个则直接返回精确值；
- 第二幕：在 H(P) 的 M 个节点上均匀抽 z 个节点，命中极大叶子 y 次，估计 (M/z)·y。

编号约定：高度 k 的子树共有 T(k) = b^k + b(b^k−1)/(b−1) 个编号；偏移为 o 的内部节点
的第 i 个编号是 o + i·(T(k−1)+1)，第 i 个子树偏移 o + (i−1)(T(k−1)+1)；叶子编号 {o+1}。
所有整数运算都用 Python 任意精度 int。
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any

import numpy as np

from estor.dtree import expand_node, enumerate_d_tree
from estor.graph import ExecutionGraph, canonical_key
from estor.models import NodeClass, WeightMode
from estor.program import Program

logger = logging.getLogger(__name__)

TreePath = tuple[int, ...]


@dataclass(frozen=True)
class PaddedTreeParams:
    b: int
    h: int

    def __post_init__(self) -> None:
        if self.b < 2:
            raise ValueError("branching factor must be >= 2")
        if self.h < 0:
            raise ValueError("height must be >= 0")

    def subtree_numbers(self, k: int) -> int:
        """高度 k 的子树中的编号个数 T(k)。"""
        b = self.b
        return b**k + b * (b**k - 1) // (b - 1)

    @property
    def M(self) -> int:
        return (self.b ** (self.h + 1) - 1) // (self.b - 1)

    @property
    def N(self) -> int:
        return self.subtree_numbers(self.h)


@dataclass(frozen=True)
class Interval:
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo < 1 or self.lo > self.hi:
            raise ValueError(f"invalid interval [{self.lo}, {self.hi}]")


def _check_path(params: PaddedTreeParams, path: TreePath) -> None:
    if len(path) > params.h:
        raise ValueError(f"path of length {len(path)} exceeds height {params.h}")
    if any(not 1 <= i <= params.b for i in path):
        raise ValueError(f"child indices must lie in [1, {params.b}]")


def node_offset(params: PaddedTreeParams, path: TreePath) -> tuple[int, int]:
    """自顶向下的偏移递推：返回 (偏移 o, 子树高度 k)。"""
    _check_path(params, path)
    o = 0
    k = params.h
    for i in path:
        o += (i - 1) * (params.subtree_numbers(k - 1) + 1)
        k -= 1
    return o, k


def inorder_set(params: PaddedTreeParams, path: TreePath) -> frozenset[int]:
    o, k = node_offset(params, path)
    if k == 0:
        return frozenset({o + 1})
    step = params.subtree_numbers(k - 1) + 1
    return frozenset(o + i * step for i in range(1, params.b + 1))


def subtree_range(params: PaddedTreeParams, path: TreePath) -> Interval:
    o, k = node_offset(params, path)
    return Interval(o + 1, o + params.subtree_numbers(k))


def locate_interval(params: PaddedTreeParams, interval: Interval) -> TreePath:
    """与区间相交的所有节点的最近公共祖先：只要区间整体落在某个子树里就继续下降。"""
    if interval.hi > params.N:
        raise ValueError(f"interval [{interval.lo}, {interval.hi}] exceeds [1, {params.N}]")
    path: TreePath = ()
    o, k = 0, params.h
    while k > 0:
        size = params.subtree_numbers(k - 1)
        step = size + 1
        for i in range(1, params.b + 1):
            lo = o + (i - 1) * step + 1
            if lo <= interval.lo and interval.hi <= lo + size - 1:
                path += (i,)
                o += (i - 1) * step
                k -= 1
                break
        else:
            return path
    return path


class DporNodeKind(str, Enum):
    REAL_INTERNAL = "internal"
    REAL_MAXIMAL_LEAF = "maximal"
    DUMMY = "dummy"


@dataclass
class DporOracle:
    """沿子节点下标从 G_init 下降判断 H(P) 节点是否属于 D(P)；按路径缓存已展开的节点。"""

    p: Program
    _nodes: dict[TreePath, tuple[ExecutionGraph, NodeClass, tuple[ExecutionGraph, ...]]] = field(
        default_factory=dict
    )

    def _node(self, path: TreePath) -> tuple[ExecutionGraph, NodeClass, tuple[ExecutionGraph, ...]] | None:
        if path in self._nodes:
            return self._nodes[path]
        if path:
            parent = self._node(path[:-1])
            if parent is None:
                return None
            _, _, kids = parent
            if path[-1] > len(kids):
                return None
            g = kids[path[-1] - 1]
        else:
            g = ExecutionGraph.initial()
        node = expand_node(self.p, g, WeightMode.MAXIMAL)
        entry = (g, node.node_class, tuple(c for _, c in node.children))
        self._nodes[path] = entry
        return entry

    def kind(self, path: TreePath) -> DporNodeKind:
        node = self._node(path)
        if node is None:
            return DporNodeKind.DUMMY
        return DporNodeKind.REAL_MAXIMAL_LEAF if node[1] is NodeClass.MAXIMAL_LEAF else DporNodeKind.REAL_INTERNAL

    def graph(self, path: TreePath) -> ExecutionGraph:
        node = self._node(path)
        if node is None:
            raise ValueError(f"path {path} is not a node of D(P)")
        return node[0]


def _reject_assume(p: Program) -> None:
    if p.has_assume:
        raise ValueError("approximate counting does not support programs with assume")


def is_dpor_node(p: Program, path: TreePath) -> DporNodeKind:
    _reject_assume(p)
    return DporOracle(p).kind(path)


def measure_params(p: Program, *, measure: bool = True) -> PaddedTreeParams:
    """由一次完整遍历测得的最大出度与深度给出 (b, h)；measure=False 时用 d² 上界（d = 指令总数）。"""
    if not measure:
        d2 = max(p.size, 2) ** 2
        return PaddedTreeParams(d2, d2)
    stats = enumerate_d_tree(p)
    return PaddedTreeParams(max(2, stats.max_out_degree), stats.max_depth)


def _first_leaf_from(
    params: PaddedTreeParams, oracle: DporOracle, path: TreePath, a: int
) -> TreePath | None:
    """path 子树中第一个（≺ 顺序）子树起点 ≥ a 的极大叶子。"""
    kind = oracle.kind(path)
    if kind is DporNodeKind.DUMMY:
        return None
    rng_ = subtree_range(params, path)
    if rng_.hi < a:
        return None
    if kind is DporNodeKind.REAL_MAXIMAL_LEAF:
        return path if rng_.lo >= a else None
    if len(path) == params.h:
        return None
    for i in range(1, params.b + 1):
        found = _first_leaf_from(params, oracle, path + (i,), a)
        if found is not None:
            return found
    return None


def first_leaf_paths(
    p: Program, theta: int, params: PaddedTreeParams | None = None, oracle: DporOracle | None = None
) -> list[TreePath]:
    _reject_assume(p)
    if theta <= 0:
        return []
    params = params or measure_params(p)
    oracle = oracle or DporOracle(p)
    leaves: list[TreePath] = []
    a = 1
    while len(leaves) < theta and a <= params.N:
        z = locate_interval(params, Interval(a, params.N))
        if oracle.kind(z) is DporNodeKind.DUMMY:
            break
        leaf = _first_leaf_from(params, oracle, z, a)
        if leaf is None:
            break
        leaves.append(leaf)
        a = subtree_range(params, leaf).hi + 1
    return leaves


def enumerate_first_leaves(
    p: Program, theta: int, params: PaddedTreeParams | None = None, oracle: DporOracle | None = None
) -> list[tuple]:
    """前 min(θ, C(P)) 个极大叶子的规范键（≺ 顺序 = d_children 顺序下的 DFS 叶子顺序）。"""
    oracle = oracle or DporOracle(p)
    return [canonical_key(oracle.graph(path)) for path in first_leaf_paths(p, theta, params, oracle)]


def uniform_node(params: PaddedTreeParams, rnd: random.Random) -> TreePath:
    """H(P) 上的均匀节点：深度按层大小 b^depth 加权，再取均匀的子节点下标。"""
    u = rnd.randrange(params.M)
    depth = 0
    level = 1
    while u >= level:
        u -= level
        depth += 1
        level *= params.b
    digits = []
    for _ in range(depth):
        u, d = divmod(u, params.b)
        digits.append(d + 1)
    return tuple(reversed(digits))


@dataclass(frozen=True)
class ApproxResult:
    act: str
    M: int
    N: int
    b: int
    h: int
    theta: int
    exact: int | None = None
    estimate: Fraction | None = None
    z: int | None = None
    hits: int | None = None

    @property
    def value(self) -> Fraction:
        return Fraction(self.exact) if self.exact is not None else self.estimate or Fraction(0)

    def to_json(self) -> dict[str, Any]:
        return {
            "act": self.act,
            "exact": self.exact,
            "estimate": float(self.estimate) if self.estimate is not None else None,
            "z": self.z,
            "hits": self.hits,
            "theta": self.theta,
            "M": str(self.M),
            "N": str(self.N),
            "b": self.b,
            "h": self.h,
        }


def _ceil_sqrt(n: int) -> int:
    s = math.isqrt(n)
    return s if s * s == n else s + 1


def approx_count(
    p: Program,
    r: Fraction | float,
    rho: Fraction | float,
    rng: np.random.Generator,
    *,
    params: PaddedTreeParams | None = None,
    theta: int | None = None,
) -> ApproxResult:
    """
    θ 默认 ⌈√M⌉。第一幕找到的叶子不超过 θ 个时返回精确值；
    否则第二幕抽 z = ⌈(1/ρ)·(1/(r−1)²)·(M/θ − 1)⌉ 个均匀节点，返回 (M/z)·y。
    """
    r = Fraction(r)
    rho = Fraction(rho)
    if r <= 1:
        raise ValueError("r must be > 1")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    _reject_assume(p)
    params = params or measure_params(p)
    M = params.M
    theta = _ceil_sqrt(M) if theta is None else theta
    if theta < 1:
        raise ValueError("theta must be >= 1")
    logger.debug("padded tree b=%d h=%d M=%d N=%d theta=%d", params.b, params.h, M, params.N, theta)
    oracle = DporOracle(p)
    leaves = first_leaf_paths(p, theta + 1, params, oracle)
    if len(leaves) <= theta:
        return ApproxResult("one", M, params.N, params.b, params.h, theta, exact=len(leaves))
    z = max(1, math.ceil(1 / rho / (r - 1) ** 2 * (Fraction(M, theta) - 1)))
    rnd = random.Random(int(rng.integers(2**63)))
    hits = sum(oracle.kind(uniform_node(params, rnd)) is DporNodeKind.REAL_MAXIMAL_LEAF for _ in range(z))
    logger.debug("act two: z=%d hits=%d", z, hits)
    return ApproxResult(
        "two", M, params.N, params.b, params.h, theta, estimate=Fraction(M, z) * hits, z=z, hits=hits
    )
