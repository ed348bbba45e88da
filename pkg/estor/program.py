"""
有界并发程序 DSL：语法树、解析器、打印器，以及按线程重放的解释器（next_P(G) 的实现）。

文件格式（扩展名 .cp），每行一条指令，`thread <n>` 开始一个线程：

    # 注释
    thread 1
      a = read x
      if a == 2 goto L
      write y 1
      L: assume a < 3

- 标签写作 `<name>:` 前缀，也可以单独占一行（绑定到下一条指令，可以是线程末尾）；
- `goto` 只能向后跳（目标下标严格大于当前指令），所以每次运行长度不超过程序大小；
- 表达式：常量、寄存器、寄存器±常量；条件：操作数 cmp 操作数，cmp ∈ {==, !=, <, <=}；
- 整数为带符号 64 位十进制。
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Union

from estor.graph import EventKind

if TYPE_CHECKING:
    from estor.graph import ExecutionGraph

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

KEYWORDS = frozenset({"thread", "read", "write", "if", "goto", "assume"})
COMPARISONS = ("==", "!=", "<=", "<")


class ProgramError(ValueError):
    """DSL 解析/校验错误；line/column 从 1 开始。"""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class ReplayMismatch(ValueError):
    """执行图中某线程的事件与程序在该位置的指令不一致。"""


# ------------------------- 语法树 -------------------------


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Reg:
    name: str


@dataclass(frozen=True)
class RegPlus:
    name: str
    offset: int


Operand = Union[Const, Reg]
Expr = Union[Const, Reg, RegPlus]


@dataclass(frozen=True)
class Cond:
    left: Operand
    op: str
    right: Operand


@dataclass(frozen=True)
class ReadInto:
    reg: str
    loc: str


@dataclass(frozen=True)
class Write:
    loc: str
    expr: Expr


@dataclass(frozen=True)
class Branch:
    """cond 为 None 表示无条件 goto。"""

    cond: Cond | None
    target: int


@dataclass(frozen=True)
class Assume:
    cond: Cond


Instruction = Union[ReadInto, Write, Branch, Assume]


@dataclass(frozen=True)
class Thread:
    tid: int
    instructions: tuple[Instruction, ...]


@dataclass(frozen=True)
class Program:
    threads: tuple[Thread, ...] = ()

    def thread(self, tid: int) -> Thread:
        return self.threads[tid - 1]

    @property
    def size(self) -> int:
        """指令总数（也是 T(P) 任一路径长度的上界）。"""
        return sum(len(t.instructions) for t in self.threads)

    @property
    def has_assume(self) -> bool:
        return any(isinstance(i, Assume) for t in self.threads for i in t.instructions)

    @property
    def locations(self) -> list[str]:
        locs = {i.loc for t in self.threads for i in t.instructions if isinstance(i, (ReadInto, Write))}
        return sorted(locs)


# ------------------------- 解析 -------------------------

_TOKEN_RE = re.compile(r"\s*(?:(?P<int>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>==|!=|<=|<|=|\+|-|:))")


@dataclass
class _Tok:
    text: str
    kind: str
    col: int


def _tokenize(text: str, lineno: int) -> list[_Tok]:
    toks: list[_Tok] = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            col = pos + 1 + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ProgramError(f"unexpected character {text[col - 1]!r}", lineno, col)
        kind = m.lastgroup or "op"
        toks.append(_Tok(m.group(kind), kind, m.start(kind) + 1))
        pos = m.end()
    return toks


class _LineParser:
    def __init__(self, toks: list[_Tok], lineno: int, line_len: int):
        self.toks = toks
        self.pos = 0
        self.lineno = lineno
        self.line_len = line_len

    def error(self, message: str, tok: _Tok | None = None) -> ProgramError:
        col = tok.col if tok is not None else self.line_len + 1
        return ProgramError(message, self.lineno, col)

    def peek(self, offset: int = 0) -> _Tok | None:
        i = self.pos + offset
        return self.toks[i] if i < len(self.toks) else None

    def next(self, what: str) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise self.error(f"expected {what}, found end of line")
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Tok:
        tok = self.next(repr(text))
        if tok.text != text:
            raise self.error(f"expected {text!r}, found {tok.text!r}", tok)
        return tok

    def ident(self, what: str) -> _Tok:
        tok = self.next(what)
        if tok.kind != "ident" or tok.text in KEYWORDS:
            raise self.error(f"expected {what}, found {tok.text!r}", tok)
        return tok

    def integer(self) -> int:
        tok = self.peek()
        sign = 1
        if tok is not None and tok.text == "-":
            self.pos += 1
            sign = -1
        tok = self.next("integer")
        if tok.kind != "int":
            raise self.error(f"expected integer, found {tok.text!r}", tok)
        value = sign * int(tok.text)
        if not INT64_MIN <= value <= INT64_MAX:
            raise self.error("integer out of signed 64-bit range", tok)
        return value

    def operand(self) -> tuple[Operand, _Tok]:
        tok = self.peek()
        if tok is None:
            raise self.error("expected operand, found end of line")
        if tok.kind == "ident":
            return Reg(self.ident("register").text), tok
        return Const(self.integer()), tok

    def expr(self) -> tuple[Expr, _Tok]:
        base, tok = self.operand()
        nxt = self.peek()
        if isinstance(base, Reg) and nxt is not None and nxt.text in ("+", "-"):
            self.pos += 1
            offset = self.integer()
            return RegPlus(base.name, offset if nxt.text == "+" else -offset), tok
        return base, tok

    def cond(self) -> tuple[Cond, list[_Tok]]:
        left, ltok = self.operand()
        op = self.next("comparison")
        if op.text not in COMPARISONS:
            raise self.error(f"expected one of {', '.join(COMPARISONS)}, found {op.text!r}", op)
        right, rtok = self.operand()
        return Cond(left, op.text, right), [ltok, rtok]

    def end(self) -> None:
        tok = self.peek()
        if tok is not None:
            raise self.error(f"unexpected {tok.text!r}", tok)


@dataclass
class _PendingThread:
    tid: int
    line: int
    instructions: list[Instruction] = field(default_factory=list)
    # 每条指令对应的 (行, 使用的寄存器 token)
    uses: list[list[tuple[str, int, int]]] = field(default_factory=list)
    lines: list[int] = field(default_factory=list)
    labels: dict[str, int] = field(default_factory=dict)
    gotos: list[tuple[int, str, int, int]] = field(default_factory=list)


def _regs_of(operands: list[tuple[Expr, _Tok]], lineno: int) -> list[tuple[str, int, int]]:
    out = []
    for op, tok in operands:
        if isinstance(op, (Reg, RegPlus)):
            out.append((op.name, lineno, tok.col))
    return out


def parse_program(text: str) -> Program:
    """解析 DSL 源码为 Program；错误抛出 ProgramError（带行列号）。"""
    threads: list[_PendingThread] = []
    current: _PendingThread | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = _tokenize(line, lineno)
        if not toks:
            continue
        lp = _LineParser(toks, lineno, len(line.rstrip()))
        head = lp.peek()
        assert head is not None
        if head.text == "thread":
            lp.pos += 1
            tok = lp.peek()
            tid = lp.integer()
            lp.end()
            if any(t.tid == tid for t in threads):
                raise ProgramError(f"duplicate thread id {tid}", lineno, tok.col if tok else None)
            current = _PendingThread(tid, lineno)
            threads.append(current)
            continue
        if current is None:
            raise ProgramError("instruction outside of a thread block", lineno, head.col)
        # 标签前缀
        while lp.peek() is not None and lp.peek(1) is not None and lp.peek(1).text == ":":
            label = lp.ident("label")
            lp.pos += 1
            if label.text in current.labels:
                raise ProgramError(f"duplicate label {label.text!r}", lineno, label.col)
            current.labels[label.text] = len(current.instructions)
        if lp.peek() is None:
            continue
        _parse_instruction(lp, current, lineno)

    for t in threads:
        for index, label, lineno, col in t.gotos:
            target = t.labels.get(label)
            if target is None:
                raise ProgramError(f"unknown label {label!r}", lineno, col)
            if target <= index:
                raise ProgramError(f"backward branch to {label!r}", lineno, col)
            old = t.instructions[index]
            assert isinstance(old, Branch)
            t.instructions[index] = Branch(old.cond, target)
        _check_registers(t)

    threads.sort(key=lambda t: t.tid)
    for expected, t in enumerate(threads, start=1):
        if t.tid != expected:
            raise ProgramError(f"thread ids must be contiguous from 1 (missing {expected})", t.line, 1)
    return Program(tuple(Thread(t.tid, tuple(t.instructions)) for t in threads))


def _parse_instruction(lp: _LineParser, t: _PendingThread, lineno: int) -> None:
    head = lp.peek()
    assert head is not None
    uses: list[tuple[str, int, int]] = []
    if head.text == "write":
        lp.pos += 1
        loc = lp.ident("location").text
        expr, tok = lp.expr()
        instr: Instruction = Write(loc, expr)
        uses = _regs_of([(expr, tok)], lineno)
    elif head.text == "assume":
        lp.pos += 1
        cond, toks = lp.cond()
        instr = Assume(cond)
        uses = _regs_of(list(zip((cond.left, cond.right), toks)), lineno)
    elif head.text == "if":
        lp.pos += 1
        cond, toks = lp.cond()
        lp.expect("goto")
        label = lp.ident("label")
        instr = Branch(cond, -1)
        uses = _regs_of(list(zip((cond.left, cond.right), toks)), lineno)
        t.gotos.append((len(t.instructions), label.text, lineno, label.col))
    elif head.text == "goto":
        lp.pos += 1
        label = lp.ident("label")
        instr = Branch(None, -1)
        t.gotos.append((len(t.instructions), label.text, lineno, label.col))
    else:
        reg = lp.ident("register")
        lp.expect("=")
        lp.expect("read")
        loc = lp.ident("location").text
        instr = ReadInto(reg.text, loc)
    lp.end()
    t.instructions.append(instr)
    t.uses.append(uses)
    t.lines.append(lineno)


def _check_registers(t: _PendingThread) -> None:
    """前向数据流：每条路径上寄存器都必须先被 read 写入再使用。"""
    n = len(t.instructions)
    defined: list[frozenset[str] | None] = [None] * (n + 1)
    defined[0] = frozenset()

    def flow(j: int, regs: frozenset[str]) -> None:
        cur = defined[j]
        defined[j] = regs if cur is None else cur & regs

    for i, instr in enumerate(t.instructions):
        regs = defined[i]
        if regs is None:
            continue  # 不可达
        for name, lineno, col in t.uses[i]:
            if name not in regs:
                raise ProgramError(f"register {name!r} may be used before it is read", lineno, col)
        out = regs | {instr.reg} if isinstance(instr, ReadInto) else regs
        if isinstance(instr, Branch):
            flow(instr.target, out)
            if instr.cond is not None:
                flow(i + 1, out)
        else:
            flow(i + 1, out)


# ------------------------- 打印 -------------------------


def _fmt_operand(op: Expr) -> str:
    if isinstance(op, Const):
        return str(op.value)
    if isinstance(op, Reg):
        return op.name
    sign = "+" if op.offset >= 0 else "-"
    return f"{op.name}{sign}{abs(op.offset)}"


def _fmt_cond(c: Cond) -> str:
    return f"{_fmt_operand(c.left)} {c.op} {_fmt_operand(c.right)}"


def format_program(p: Program) -> str:
    """打印为 DSL 文本；parse_program(format_program(p)) == p。"""
    lines: list[str] = []
    for t in p.threads:
        lines.append(f"thread {t.tid}")
        targets = {i.target for i in t.instructions if isinstance(i, Branch)}
        for idx, instr in enumerate(t.instructions):
            prefix = f"L{idx}: " if idx in targets else ""
            if isinstance(instr, ReadInto):
                body = f"{instr.reg} = read {instr.loc}"
            elif isinstance(instr, Write):
                body = f"write {instr.loc} {_fmt_operand(instr.expr)}"
            elif isinstance(instr, Assume):
                body = f"assume {_fmt_cond(instr.cond)}"
            elif instr.cond is None:
                body = f"goto L{instr.target}"
            else:
                body = f"if {_fmt_cond(instr.cond)} goto L{instr.target}"
            lines.append(f"  {prefix}{body}")
        if len(t.instructions) in targets:
            lines.append(f"  L{len(t.instructions)}:")
    return "\n".join(lines) + ("\n" if lines else "")


# ------------------------- 重放 -------------------------


class ThreadStatus(str, Enum):
    RUNNING = "running"
    BLOCKED = "blocked"
    DONE = "done"


@dataclass(frozen=True)
class ThreadReplayState:
    tid: int
    pc: int
    regs: dict[str, int]
    status: ThreadStatus
    # 已消费的事件数，也即下一个事件的 idx
    next_idx: int


@dataclass(frozen=True)
class PendingEvent:
    """线程的下一个内存事件；读事件的 value 为 None，选定 rf 源后才确定。"""

    tid: int
    idx: int
    kind: EventKind
    loc: str
    value: int | None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", EventKind(self.kind))


def _eval(e: Expr, regs: dict[str, int]) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Reg):
        return regs[e.name]
    return regs[e.name] + e.offset


_CMP = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
}


def _holds(c: Cond, regs: dict[str, int]) -> bool:
    return _CMP[c.op](_eval(c.left, regs), _eval(c.right, regs))


def replay_thread(p: Program, tid: int, g: ExecutionGraph) -> ThreadReplayState:
    """按 idx 顺序把 g 中该线程读事件的值喂给 ReadInto，重建线程状态。"""
    code = p.thread(tid).instructions
    events = g.thread_events(tid)
    regs: dict[str, int] = {}
    pc = 0
    consumed = 0
    while pc < len(code):
        instr = code[pc]
        if isinstance(instr, Branch):
            pc = instr.target if instr.cond is None or _holds(instr.cond, regs) else pc + 1
            continue
        if isinstance(instr, Assume):
            if not _holds(instr.cond, regs):
                if consumed < len(events):
                    raise ReplayMismatch(f"thread {tid}: events after a failed assume at pc {pc}")
                return ThreadReplayState(tid, pc, regs, ThreadStatus.BLOCKED, consumed)
            pc += 1
            continue
        if consumed == len(events):
            return ThreadReplayState(tid, pc, regs, ThreadStatus.RUNNING, consumed)
        ev = events[consumed]
        if ev.idx != consumed:
            raise ReplayMismatch(f"thread {tid}: events are not a prefix (expected idx {consumed}, got {ev.idx})")
        if isinstance(instr, ReadInto):
            if ev.kind is not EventKind.READ or ev.loc != instr.loc:
                raise ReplayMismatch(f"thread {tid} event {consumed}: expected read of {instr.loc}, got {ev.label}")
            regs[instr.reg] = ev.val
        else:
            value = _eval(instr.expr, regs)
            if ev.kind is not EventKind.WRITE or ev.loc != instr.loc or ev.val != value:
                raise ReplayMismatch(
                    f"thread {tid} event {consumed}: expected W({instr.loc},{value}), got {ev.label}"
                )
        consumed += 1
        pc += 1
    if consumed < len(events):
        raise ReplayMismatch(f"thread {tid}: {len(events) - consumed} event(s) beyond the end of the thread")
    return ThreadReplayState(tid, pc, regs, ThreadStatus.DONE, consumed)


def thread_states(p: Program, g: ExecutionGraph) -> list[ThreadReplayState]:
    return [replay_thread(p, t.tid, g) for t in p.threads]


def pending_of(p: Program, st: ThreadReplayState) -> PendingEvent:
    instr = p.thread(st.tid).instructions[st.pc]
    if isinstance(instr, ReadInto):
        return PendingEvent(st.tid, st.next_idx, EventKind.READ, instr.loc, None)
    assert isinstance(instr, Write)
    return PendingEvent(st.tid, st.next_idx, EventKind.WRITE, instr.loc, _eval(instr.expr, st.regs))


def next_events(p: Program, g: ExecutionGraph) -> list[PendingEvent]:
    """每个 running 线程一个待执行事件，按 tid 升序（固定调度器）。"""
    return [pending_of(p, st) for st in thread_states(p, g) if st.status is ThreadStatus.RUNNING]
