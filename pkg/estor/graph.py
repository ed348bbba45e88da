"""
执行图：事件、rf / mo / 插入顺序，派生关系（po、fr、porf、sc），SC 一致性检查，
sc 极大事件，以及忽略插入顺序的规范键。

图是不可变值：所有修改操作都返回新图，可在并行 trial 之间共享。

调试文本格式（format_graph）：

    events:
      0.0 init
      1.0 R(x,0)
      2.0 W(x,1)
    rf:
      1.0 <- 0.0
    mo:
      x: 0.0 < 2.0

事件写作 `tid.idx`；events 段按插入顺序；rf 段按读事件排序；mo 段按位置名排序。
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping

EventId = tuple[int, int]
INIT: EventId = (0, 0)

Relation = frozenset[tuple[EventId, EventId]]


class GraphError(ValueError):
    """执行图结构错误（例如 restrict 后出现悬空的 rf 源）。"""


class EventKind(str, Enum):
    INIT = "init"
    READ = "R"
    WRITE = "W"


@dataclass(frozen=True)
class Event:
    """线程事件 ⟨tid, idx, label⟩；init 的 tid=0, idx=0。kind 也接受 "init" / "R" / "W"。"""

    tid: int
    idx: int
    kind: EventKind
    loc: str | None = None
    val: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", EventKind(self.kind))

    @property
    def id(self) -> EventId:
        return (self.tid, self.idx)

    @property
    def label(self) -> str:
        if self.kind is EventKind.INIT:
            return "init"
        return f"{self.kind.value}({self.loc},{self.val})"

    def writes(self, loc: str) -> bool:
        return self.kind is EventKind.INIT or (self.kind is EventKind.WRITE and self.loc == loc)


INIT_EVENT = Event(0, 0, EventKind.INIT)


class ExecutionGraph:
    """
    G = (E, rf, mo, ≤)。

    - events：EventId → Event；ins：插入顺序（init 在最前）；
    - rf：读事件 → 写事件；
    - mo：位置 → 该位置写事件的全序（init 在最前）；未写过的位置不出现。
    """

    __slots__ = ("_events", "ins", "rf", "mo", "_threads")

    def __init__(
        self,
        events: Mapping[EventId, Event],
        ins: tuple[EventId, ...],
        rf: Mapping[EventId, EventId],
        mo: Mapping[str, tuple[EventId, ...]],
    ):
        self._events = dict(events)
        self.ins = ins
        self.rf = dict(rf)
        self.mo = {loc: order for loc, order in mo.items() if len(order) > 1}
        self._threads: dict[int, list[Event]] | None = None

    @classmethod
    def initial(cls) -> ExecutionGraph:
        return cls({INIT: INIT_EVENT}, (INIT,), {}, {})

    # ------------------------- 查询 -------------------------

    def __len__(self) -> int:
        return len(self.ins)

    def __contains__(self, eid: object) -> bool:
        return eid in self._events

    def event(self, eid: EventId) -> Event:
        return self._events[eid]

    @property
    def events(self) -> tuple[Event, ...]:
        """按插入顺序的事件。"""
        return tuple(self._events[e] for e in self.ins)

    @property
    def is_initial(self) -> bool:
        return len(self.ins) == 1

    def thread_events(self, tid: int) -> list[Event]:
        if self._threads is None:
            threads: dict[int, list[Event]] = {}
            for e in self._events.values():
                if e.tid:
                    threads.setdefault(e.tid, []).append(e)
            for evs in threads.values():
                evs.sort(key=lambda e: e.idx)
            self._threads = threads
        return self._threads.get(tid, [])

    def mo_list(self, loc: str) -> tuple[EventId, ...]:
        """loc 的 mo 序（含 init）。"""
        return self.mo.get(loc, (INIT,))

    def reads_at(self, loc: str) -> list[EventId]:
        """loc 上的读事件，按插入顺序。"""
        return [e for e in self.ins if self._events[e].kind is EventKind.READ and self._events[e].loc == loc]

    def ins_position(self, eid: EventId) -> int:
        return self.ins.index(eid)

    # ------------------------- 构造新图 -------------------------

    def with_read(self, ev: Event, source: EventId) -> ExecutionGraph:
        """追加读事件 ev（插入顺序最后），rf(ev) = source，值取自 source。"""
        ev = replace(ev, val=self._events[source].val)
        events = dict(self._events)
        events[ev.id] = ev
        rf = dict(self.rf)
        rf[ev.id] = source
        return ExecutionGraph(events, self.ins + (ev.id,), rf, self.mo)

    def with_write(self, ev: Event, after: EventId) -> ExecutionGraph:
        """追加写事件 ev（插入顺序最后），在 mo 中紧接 after 之后。"""
        assert ev.loc is not None
        order = self.mo_list(ev.loc)
        pos = order.index(after) + 1
        mo = dict(self.mo)
        mo[ev.loc] = order[:pos] + (ev.id,) + order[pos:]
        events = dict(self._events)
        events[ev.id] = ev
        return ExecutionGraph(events, self.ins + (ev.id,), self.rf, mo)

    def with_rf(self, read: EventId, source: EventId) -> ExecutionGraph:
        """把 read 的 rf 源改为 source，并把 read 的值改写为 source 的值。"""
        events = dict(self._events)
        events[read] = replace(events[read], val=events[source].val)
        rf = dict(self.rf)
        rf[read] = source
        return ExecutionGraph(events, self.ins, rf, self.mo)

    def __repr__(self) -> str:
        return f"ExecutionGraph({', '.join(self._events[e].label + '@' + _fmt_id(e) for e in self.ins)})"


# ------------------------- 关系 -------------------------


def _fmt_id(e: EventId) -> str:
    return f"{e[0]}.{e[1]}"


def _po_succ(g: ExecutionGraph, e: Event) -> list[EventId]:
    """po 的直接后继（init 指向每个线程的第一个事件）。"""
    if e.kind is EventKind.INIT:
        return [x for x in g.ins if x != INIT and x[1] == 0]
    nxt = (e.tid, e.idx + 1)
    return [nxt] if nxt in g else []


def _sc_successors(g: ExecutionGraph) -> dict[EventId, list[EventId]]:
    """po ∪ rf ∪ mo ∪ fr 的生成边（传递闭包与完整关系相同）。"""
    succ: dict[EventId, list[EventId]] = {e: [] for e in g.ins}
    # init 出现在每个位置的 mo 中，后继必须按位置区分
    mo_next: dict[tuple[str, EventId], EventId] = {}
    for loc, order in g.mo.items():
        for a, b in zip(order, order[1:]):
            succ[a].append(b)
            mo_next[(loc, a)] = b
    for e in g.ins:
        succ[e].extend(_po_succ(g, g.event(e)))
    for r, w in g.rf.items():
        succ[w].append(r)
        # fr = rf⁻¹;mo，只需连到 rf 源在 mo 中的直接后继
        r_loc = g.event(r).loc
        if r_loc is not None and (later := mo_next.get((r_loc, w))) is not None:
            succ[r].append(later)
    return succ


def is_sc_consistent(g: ExecutionGraph) -> bool:
    """(po ∪ rf ∪ mo ∪ fr)+ 无自环 ⇔ 生成边无环。"""
    succ = _sc_successors(g)
    # 0 未访问，1 在栈上，2 完成
    color = dict.fromkeys(succ, 0)
    for root in g.ins:
        if color[root]:
            continue
        stack = [(root, iter(succ[root]))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            for nxt in it:
                c = color[nxt]
                if c == 1:
                    return False
                if c == 0:
                    color[nxt] = 1
                    stack.append((nxt, iter(succ[nxt])))
                    break
            else:
                color[node] = 2
                stack.pop()
    return True


def sc_maximal_events(g: ExecutionGraph) -> set[Event]:
    """sc 中没有后继的事件。"""
    succ = _sc_successors(g)
    return {g.event(e) for e, out in succ.items() if not out}


def mo_max_write(g: ExecutionGraph, loc: str) -> Event:
    return g.event(g.mo_list(loc)[-1])


def porf_prefix(g: ExecutionGraph, eid: EventId) -> set[EventId]:
    """{e' | (e', eid) ∈ (po ∪ rf)*}，含 eid 自身。"""
    seen = {eid}
    stack = [eid]
    while stack:
        cur = stack.pop()
        tid, idx = cur
        preds: list[EventId] = []
        if cur != INIT:
            preds.append((tid, idx - 1) if idx > 0 else INIT)
        if cur in g.rf:
            preds.append(g.rf[cur])
        for p in preds:
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def restrict(g: ExecutionGraph, keep: Iterable[EventId]) -> ExecutionGraph:
    """G|keep：保留事件上的 events / rf / mo / ins，相对顺序不变。"""
    keep = set(keep)
    if INIT not in keep:
        raise GraphError("restriction must keep the init event")
    rf: dict[EventId, EventId] = {}
    for r, w in g.rf.items():
        if r not in keep:
            continue
        if w not in keep:
            raise GraphError(f"read {_fmt_id(r)} would lose its rf source {_fmt_id(w)}")
        rf[r] = w
    events = {e: g.event(e) for e in g.ins if e in keep}
    ins = tuple(e for e in g.ins if e in keep)
    mo = {loc: tuple(w for w in order if w in keep) for loc, order in g.mo.items()}
    return ExecutionGraph(events, ins, rf, mo)


def canonical_key(g: ExecutionGraph, *, with_insertion: bool = False) -> tuple:
    """忽略插入顺序的规范键：(事件, rf, mo) 的有序序列化；可用于哈希与记忆化。"""
    events = tuple(sorted((e.tid, e.idx, e.kind.value, e.loc or "", e.val) for e in g.events))
    rf = tuple(sorted(g.rf.items()))
    mo = tuple(sorted(g.mo.items()))
    if with_insertion:
        return (events, rf, mo, g.ins)
    return (events, rf, mo)


# ------------------------- 显式关系（测试与调试用） -------------------------


def transitive_closure(pairs: Iterable[tuple[EventId, EventId]]) -> Relation:
    succ: dict[EventId, set[EventId]] = {}
    for a, b in pairs:
        succ.setdefault(a, set()).add(b)
    closure: set[tuple[EventId, EventId]] = set()
    for start in list(succ):
        seen: set[EventId] = set()
        stack = list(succ[start])
        while stack:
            cur = stack.pop()
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(succ.get(cur, ()))
        closure.update((start, x) for x in seen)
    return frozenset(closure)


def po(g: ExecutionGraph) -> Relation:
    out = set()
    for a in g.events:
        for b in g.events:
            if a.kind is EventKind.INIT and b.kind is not EventKind.INIT:
                out.add((a.id, b.id))
            elif a.tid and a.tid == b.tid and a.idx < b.idx:
                out.add((a.id, b.id))
    return frozenset(out)


def rf(g: ExecutionGraph) -> Relation:
    return frozenset((w, r) for r, w in g.rf.items())


def mo(g: ExecutionGraph) -> Relation:
    return frozenset((a, b) for order in g.mo.values() for i, a in enumerate(order) for b in order[i + 1 :])


def fr(g: ExecutionGraph) -> Relation:
    """rf⁻¹;mo。"""
    out = set()
    for r, w in g.rf.items():
        order = g.mo_list(g.event(r).loc or "")
        if w in order:
            out.update((r, later) for later in order[order.index(w) + 1 :])
    return frozenset(out)


def porf(g: ExecutionGraph) -> Relation:
    return transitive_closure(po(g) | rf(g))


def sc(g: ExecutionGraph) -> Relation:
    return transitive_closure(po(g) | rf(g) | mo(g) | fr(g))


# ------------------------- 调试输出 -------------------------


def format_graph(g: ExecutionGraph) -> str:
    lines = ["events:"]
    lines += [f"  {_fmt_id(e)} {g.event(e).label}" for e in g.ins]
    lines.append("rf:")
    lines += [f"  {_fmt_id(r)} <- {_fmt_id(w)}" for r, w in sorted(g.rf.items())]
    lines.append("mo:")
    lines += [f"  {loc}: {' < '.join(_fmt_id(w) for w in order)}" for loc, order in sorted(g.mo.items())]
    return "\n".join(lines) + "\n"
