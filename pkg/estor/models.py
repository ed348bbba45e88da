"""
estor 数据模型：各模块共享的结果类型与配置。

- NodeClass / WeightMode：D(P) 节点分类与权重模式（代价模型）；
- EstimateTrial：一次随机估计及其来源（算法、预算、种子）；
- OutputDistribution：估计器输出的精确分布（值 → 有理概率）；
- TreeStats：D(P) 完整遍历的统计；
- ConvergenceConfig / ConvergenceReport：收敛判定参数与结果。
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from fractions import Fraction
from typing import Any, Mapping


class CapExceeded(RuntimeError):
    """精确遍历超过节点/路径上限；explored 为已完成的部分进度。"""

    def __init__(self, what: str, explored: int, cap: int):
        self.explored = explored
        self.cap = cap
        super().__init__(f"{what} cap of {cap} exceeded (explored {explored})")


class NodeClass(str, Enum):
    INTERNAL = "internal"
    MAXIMAL_LEAF = "maximal"
    BLOCKED_LEAF = "blocked"


class WeightMode(str, Enum):
    """
    MAXIMAL：极大叶子权重 1，其余 0，总权重 = C(P)；
    COST：每个一致节点权重 1，外加每个不一致子节点 1（阻塞叶子本身就是节点，权重 1），总权重 = 探索图总数。
    """

    MAXIMAL = "maximal"
    COST = "cost"


@dataclass(frozen=True)
class EstimateTrial:
    value: float
    path_length: int
    seed: int | None
    alg: str
    budget: int | None = None
    weight: str = WeightMode.MAXIMAL.value
    trial: int | None = None

    def to_json(self) -> dict[str, Any]:
        return {
            "alg": self.alg,
            "B": self.budget,
            "weight": self.weight,
            "seed": self.seed,
            "trial": self.trial,
            "value": self.value,
        }


@dataclass(frozen=True)
class OutputDistribution:
    """值 → 精确概率；概率之和恰为 1。"""

    probs: Mapping[Fraction, Fraction]

    def __post_init__(self) -> None:
        total = sum(self.probs.values(), Fraction(0))
        if total != 1:
            raise ValueError(f"probabilities sum to {total}, expected 1")

    @property
    def mean(self) -> Fraction:
        return sum((v * p for v, p in self.probs.items()), Fraction(0))

    @property
    def second_moment(self) -> Fraction:
        return sum((v * v * p for v, p in self.probs.items()), Fraction(0))

    @property
    def variance(self) -> Fraction:
        return self.second_moment - self.mean**2

    @property
    def support(self) -> list[Fraction]:
        return sorted(self.probs)

    def triples(self) -> list[tuple[Fraction, int, int]]:
        """按值排序的 (value, 分子, 分母)。"""
        return [(v, self.probs[v].numerator, self.probs[v].denominator) for v in self.support]


@dataclass
class TreeStats:
    maximal_leaves: int = 0
    blocked_leaves: int = 0
    inconsistent_leaves: int = 0
    internal_nodes: int = 0
    total_weight: int = 0
    max_depth: int = 0
    max_out_degree: int = 0
    # 每层节点数 / 每层叶子数（下标 = 深度，根为 0）
    width_per_depth: list[int] = field(default_factory=list)
    leaf_width_per_depth: list[int] = field(default_factory=list)
    # 按 DFS 顺序的极大叶子规范键（不含插入顺序）
    leaf_keys: list[tuple] = field(default_factory=list)

    @property
    def max_width(self) -> int:
        return max(self.width_per_depth, default=0)

    @property
    def max_leaf_width(self) -> int:
        return max(self.leaf_width_per_depth, default=0)

    @property
    def explored(self) -> int:
        """代价模型下的探索图总数。"""
        return self.internal_nodes + self.maximal_leaves + self.blocked_leaves + self.inconsistent_leaves


@dataclass(frozen=True)
class ConvergenceConfig:
    band: float = 0.20
    stable_window: int = 50
    flat_threshold: float = 0.02
    flat_window: int = 100
    max_trials: int = 2000
    seeds: int = 5
    success_quorum: int = 3

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"{f.name} must be positive")
        if self.band >= 1:
            raise ValueError("band must be < 1")
        if self.success_quorum > self.seeds:
            raise ValueError("success_quorum cannot exceed seeds")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, Any] | None, **overrides: Any) -> ConvergenceConfig:
        """存储值覆盖默认值，非 None 的 overrides（命令行参数）再覆盖存储值。"""
        values: dict[str, Any] = {}
        for f in fields(cls):
            if cfg and cfg.get(f.name) is not None:
                values[f.name] = cfg[f.name]
            if overrides.get(f.name) is not None:
                values[f.name] = overrides[f.name]
        for f in fields(cls):
            if f.name in values:
                values[f.name] = (float if f.type == "float" else int)(values[f.name])
        return cls(**values)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class SeedResult:
    seed: int
    running_means: list[float]
    converged: bool
    trials_to_converge: int | None
    rel_error: float | None


@dataclass
class ConvergenceReport:
    exact: int | None
    seeds: list[SeedResult] = field(default_factory=list)
    success_quorum: int = 3

    @property
    def success_ratio(self) -> float:
        if not self.seeds:
            return 0.0
        return sum(s.converged for s in self.seeds) / len(self.seeds)

    @property
    def quorum_met(self) -> bool:
        return sum(s.converged for s in self.seeds) >= self.success_quorum

    @property
    def mean_trials_to_converge(self) -> float | None:
        done = [s.trials_to_converge for s in self.seeds if s.converged and s.trials_to_converge is not None]
        return sum(done) / len(done) if done else None

    @property
    def final_mean(self) -> float | None:
        finals = [s.running_means[-1] for s in self.seeds if s.running_means]
        return sum(finals) / len(finals) if finals else None

    @property
    def rel_error(self) -> float | None:
        errs = [s.rel_error for s in self.seeds if s.rel_error is not None]
        return sum(errs) / len(errs) if errs else None
