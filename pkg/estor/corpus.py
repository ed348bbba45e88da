"""
内置基准程序（DSL 源码生成器）与基准套件。

名称格式为 `family` 或 `family(arg, ...)`，例如 `hairbrush(8)`、`reader-writers(3,4)`。
精确计数不写死在这里，由 oracle 按需计算并按源码缓存。
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass
from typing import Callable

from estor.dtree import enumerate_d_tree
from estor.models import TreeStats, WeightMode
from estor.program import Program, parse_program


def _thread(tid: int, *lines: str) -> str:
    return "\n".join([f"thread {tid}", *(f"  {line}" for line in lines)])


def _join(*threads: str) -> str:
    return "\n".join(threads) + "\n"


def r_w_w() -> str:
    return _join(_thread(1, "a = read x"), _thread(2, "write x 1"), _thread(3, "write x 2"))


def r_r_r(n: int = 3) -> str:
    return _join(*(_thread(i, "a = read x") for i in range(1, n + 1)))


def r_nr(n: int = 2) -> str:
    """一个线程读 y，另一个线程连续读 n 次 x；n=2 即 r+rr。"""
    return _join(_thread(1, "a = read y"), _thread(2, *(f"a{i} = read x" for i in range(1, n + 1))))


def r_rr() -> str:
    return r_nr(2)


def wrww_rr() -> str:
    return _join(
        _thread(1, "write x 1", "a = read x", "write x 2", "write y 1"),
        _thread(2, "a = read x", "if a != 2 goto done", "b = read y", "done:"),
    )


def hairbrush(n: int) -> str:
    """r+nw：一个读，另一个线程依次写 1..n。"""
    return _join(_thread(1, "a = read x"), _thread(2, *(f"write x {i}" for i in range(1, n + 1))))


def store_buffering() -> str:
    return _join(_thread(1, "write x 1", "a = read y"), _thread(2, "write y 1", "b = read x"))


def incrementor(k: int) -> str:
    """k 个线程各执行一次非原子的 x++。"""
    return _join(*(_thread(i, "a = read x", "write x a+1") for i in range(1, k + 1)))


def guarded_incrementor(k: int, guards: int) -> str:
    """
    在 incrementor(k) 前加 guards 对守卫线程：`assume` 读到 1 的读线程 + 写 1 的线程。
    读到初值的分支全部阻塞，所以 C 不变，探索代价成倍增加。
    """
    threads = []
    tid = 1
    for i in range(1, guards + 1):
        threads.append(_thread(tid, f"a = read z{i}", "assume a == 1"))
        threads.append(_thread(tid + 1, f"write z{i} 1"))
        tid += 2
    threads += [_thread(tid + j, "a = read x", "write x a+1") for j in range(k)]
    return _join(*threads)


def fine_counter(k: int) -> str:
    """k 个线程各自递增私有计数器，再写共享标志。"""
    return _join(
        *(_thread(i, f"a = read c{i}", f"write c{i} a+1", f"write flag {i}") for i in range(1, k + 1))
    )


def reader_writers(n: int, m: int) -> str:
    """n 个读线程、m 个写线程（写入 1..m），同一位置。"""
    readers = [_thread(i, "a = read x") for i in range(1, n + 1)]
    writers = [_thread(n + j, f"write x {j}") for j in range(1, m + 1)]
    return _join(*readers, *writers)


FAMILIES: dict[str, Callable[..., str]] = {
    "r+w+w": r_w_w,
    "r+r+r": r_r_r,
    "r+rr": r_rr,
    "r+nr": r_nr,
    "wrww+rr": wrww_rr,
    "hairbrush": hairbrush,
    "r+nw": hairbrush,
    "store-buffering": store_buffering,
    "incrementor": incrementor,
    "guarded-incrementor": guarded_incrementor,
    "fine-counter": fine_counter,
    "reader-writers": reader_writers,
}

_NAME_RE = re.compile(r"^\s*([a-z+\-]+)\s*(?:\(\s*([0-9,\s]*)\))?\s*$")


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    source: str

    @property
    def program(self) -> Program:
        return _parse_cached(self.source)

    def exact(self, weight: WeightMode = WeightMode.MAXIMAL) -> int:
        """精确总权重（MAXIMAL 即 C(P)），由 D(P) 完整遍历得到。"""
        return exact_stats(self.source, weight).total_weight


@functools.lru_cache(maxsize=64)
def _parse_cached(source: str) -> Program:
    return parse_program(source)


@functools.lru_cache(maxsize=64)
def exact_stats(source: str, weight: WeightMode = WeightMode.MAXIMAL) -> TreeStats:
    return enumerate_d_tree(_parse_cached(source), weight)


def get_benchmark(name: str) -> BenchmarkSpec:
    m = _NAME_RE.match(name)
    if not m or m.group(1) not in FAMILIES:
        raise ValueError(f"unknown benchmark {name!r} (families: {', '.join(sorted(FAMILIES))})")
    args = [int(a) for a in (m.group(2) or "").split(",") if a.strip()]
    try:
        source = FAMILIES[m.group(1)](*args)
    except TypeError as e:
        raise ValueError(f"bad arguments for benchmark {name!r}: {e}") from e
    canonical = m.group(1) + (f"({','.join(map(str, args))})" if args else "")
    return BenchmarkSpec(canonical, source)


SUITES: dict[str, list[str]] = {
    "paper-micro": ["r+w+w", "r+r+r", "r+rr", "wrww+rr", *(f"hairbrush({n})" for n in range(1, 9))],
    "parametric": [
        "incrementor(5)",
        "reader-writers(3,4)",
        "reader-writers(4,3)",
        "fine-counter(7)",
        "hairbrush(20)",
    ],
    "cost": ["incrementor(4)", "guarded-incrementor(4,2)"],
}
SUITES["all"] = list(dict.fromkeys(SUITES["paper-micro"] + SUITES["parametric"] + SUITES["cost"]))


def suite(name: str) -> list[BenchmarkSpec]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r} (expected one of {', '.join(SUITES)})")
    return [get_benchmark(b) for b in SUITES[name]]
