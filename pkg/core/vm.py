"""
Deterministic interpreter with simulated threads, shared memory,
reliability-partitioned storage, and crash/hang detection.

Threads are simulated: the machine is one sequential state machine whose
interleaving is fixed by ``sched_seed``. Preemption only happens at
instruction boundaries.
"""

import bisect
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .errors import BenchmarkDefectError, ConfigurationError
from .ir import (
    REG_COUNT, FuncRef, GlobalRef, Imm, LabelRef, Program, Reg, Word,
    bits_to_float, float_to_bits,
)
from .utils import MASK64, splitmix64

DEFAULT_MEMORY_WORDS = 65_536
DEFAULT_BUDGET = 10_000_000
HANG_MULTIPLIER = 10
HANG_FLOOR = 100_000
MAX_QUANTUM = 16

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

HALTED = "halted"
CRASHED = "crashed"
HUNG = "hung"

OOB_MEMORY = "oob_memory"
DIV_BY_ZERO = "div_by_zero"
BAD_JUMP = "bad_jump"
JOIN_INVALID_TID = "join_invalid_tid"
DEADLOCK = "deadlock"
BUDGET_NEVER = "budget_never"  # reserved
CRASH_CAUSES = (OOB_MEMORY, DIV_BY_ZERO, BAD_JUMP, JOIN_INVALID_TID, DEADLOCK, BUDGET_NEVER)

RUNNABLE = "runnable"
BLOCKED_JOIN = "blocked_join"
BLOCKED_LOCK = "blocked_lock"
FINISHED = "finished"

INJECTION_APPLIED = "applied"
INJECTION_MASKED = "masked"

_SIGN = 1 << 63
_CANONICAL_NAN = 0x7FF8000000000000

# hook(site_id, dynamic_instance, destination value or None) -> replacement or None
FaultHook = Callable[[int, int, Optional[Word]], Optional[Word]]


@dataclass(frozen=True)
class Region:
    start: int
    length: int
    reliable: bool = True

    @property
    def end(self) -> int:
        return self.start + self.length


@dataclass(frozen=True)
class ReliabilityMap:
    """Storage and sites modeled as fault-immune. Empty map == baseline."""
    reliable_registers: FrozenSet[int] = frozenset()
    regions: Tuple[Region, ...] = ()
    reliable_sites: FrozenSet[int] = frozenset()
    _starts: Tuple[int, ...] = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "reliable_registers", frozenset(self.reliable_registers))
        object.__setattr__(self, "reliable_sites", frozenset(self.reliable_sites))
        for index in self.reliable_registers:
            if not 0 <= index < REG_COUNT:
                raise ValueError(f"reliable register r{index} out of range")
        object.__setattr__(self, "regions", coalesce_regions(self.regions))
        object.__setattr__(self, "_starts", tuple(r.start for r in self.regions))

    @property
    def is_empty(self) -> bool:
        return not (self.reliable_registers or self.regions or self.reliable_sites)

    @property
    def reliable_words(self) -> int:
        return sum(r.length for r in self.regions)

    def protects_register(self, index: int) -> bool:
        return index in self.reliable_registers

    def protects_site(self, site_id: int) -> bool:
        return site_id in self.reliable_sites

    def protects_address(self, address: int) -> bool:
        i = bisect.bisect_right(self._starts, address) - 1
        return i >= 0 and address < self.regions[i].end

    def region_table(self, memory_words: int) -> List[Region]:
        """Disjoint regions covering [0, memory_words); gaps are unreliable."""
        table: List[Region] = []
        cursor = 0
        for region in self.regions:
            if region.end > memory_words:
                raise ValueError(f"region [{region.start}, {region.end}) exceeds memory")
            if region.start > cursor:
                table.append(Region(cursor, region.start - cursor, reliable=False))
            table.append(region)
            cursor = region.end
        if cursor < memory_words:
            table.append(Region(cursor, memory_words - cursor, reliable=False))
        return table


def coalesce_regions(regions: Iterable[Region]) -> Tuple[Region, ...]:
    """Sort reliable regions and merge overlapping or adjacent ones."""
    merged: List[List[int]] = []
    for region in sorted((r for r in regions if r.reliable and r.length > 0),
                         key=lambda r: r.start):
        if region.start < 0:
            raise ValueError(f"region start {region.start} is negative")
        if merged and region.start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], region.end)
        else:
            merged.append([region.start, region.end])
    return tuple(Region(start, end - start) for start, end in merged)


EMPTY_MAP = ReliabilityMap()


@dataclass
class MemoryImage:
    words: List[Word]
    region_table: List[Region]

    @classmethod
    def for_program(cls, program: Program, memory_words: int,
                    rmap: ReliabilityMap = EMPTY_MAP,
                    input_words: Sequence[int] = ()) -> "MemoryImage":
        if program.global_words > memory_words:
            raise ConfigurationError(
                f"globals need {program.global_words} words, memory has {memory_words}")
        words = [0] * memory_words
        layout = program.global_layout()
        for decl in program.globals:
            base = layout[decl.name][0]
            words[base:base + len(decl.init)] = list(decl.init)
        if input_words:
            if "input" not in layout:
                raise ConfigurationError("program declares no 'input' global")
            base, size = layout["input"]
            if len(input_words) > size:
                raise ConfigurationError(
                    f"{len(input_words)} input words given, 'input' holds {size}")
            words[base:base + len(input_words)] = [w & MASK64 for w in input_words]
        return cls(words, rmap.region_table(memory_words))


@dataclass(frozen=True)
class ExecutionResult:
    termination: str
    cause: Optional[str]
    output: bytes
    dynamic_count: int
    trace_digest: int
    per_site_dynamic_counts: Dict[int, int]
    # provenance only; a masked run still equals the fault-free run
    injection: Optional[str] = field(default=None, compare=False)

    @property
    def halted(self) -> bool:
        return self.termination == HALTED

    @property
    def crashed(self) -> bool:
        return self.termination == CRASHED

    @property
    def hung(self) -> bool:
        return self.termination == HUNG

    def to_dict(self) -> Dict[str, object]:
        return {
            "termination": self.termination,
            "cause": self.cause,
            "output_bytes": len(self.output),
            "dynamic_count": self.dynamic_count,
            "trace_digest": f"{self.trace_digest:016x}",
        }


@dataclass(frozen=True)
class GoldenRecord:
    """Fault-free reference run plus the provenance needed to replay it."""
    result: ExecutionResult
    sched_seed: int
    input_words: Tuple[int, ...] = ()
    benchmark: Optional[str] = None

    @property
    def output(self) -> bytes:
        return self.result.output

    @property
    def dynamic_count(self) -> int:
        return self.result.dynamic_count

    @property
    def per_site_dynamic_counts(self) -> Dict[int, int]:
        return self.result.per_site_dynamic_counts

    def hang_budget(self) -> int:
        return hang_budget(self.dynamic_count)

    def to_dict(self) -> Dict[str, object]:
        return {
            "benchmark": self.benchmark,
            "sched_seed": self.sched_seed,
            "input": list(self.input_words),
            **self.result.to_dict(),
        }


class ExecutionObserver:
    """Receives execution events; the profiler is the main implementation."""

    def on_thread_start(self, tid: int, function: str) -> None:
        pass

    def on_step(self, tid: int, site_id: int, address: Optional[int]) -> None:
        pass

    def on_call(self, tid: int, function: str) -> None:
        pass

    def on_return(self, tid: int) -> None:
        pass


def hang_budget(golden_dynamic_count: int, floor: int = HANG_FLOOR) -> int:
    """Timeout policy for trials: max(10 x golden length, floor)."""
    return max(HANG_MULTIPLIER * golden_dynamic_count, floor)


def schedule_next(runnable: Sequence[int], sched_seed: int, step: int) -> int:
    """Seeded round-robin: rotate through the runnable tids by slot number."""
    if not runnable:
        raise ValueError("no runnable thread")
    if len(runnable) == 1:
        return runnable[0]
    ordered = sorted(runnable)
    return ordered[(step + splitmix64(sched_seed & MASK64)) % len(ordered)]


def quantum_length(sched_seed: int, step: int) -> int:
    """Seeded time slice in [1, MAX_QUANTUM] instructions."""
    mixed = splitmix64((sched_seed + step * 0x9E3779B97F4A7C15) & MASK64)
    return 1 + mixed % MAX_QUANTUM


# ---------------------------------------------------------------------------
# Compilation to flat tuples: (op, site, a, b, c, c_is_imm)

(OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_MOD, OP_AND, OP_OR, OP_XOR, OP_SHL, OP_SHR,
 OP_CMP, OP_MOV, OP_MOVI, OP_LOAD, OP_STORE, OP_BR, OP_BRZ, OP_BRNZ, OP_CALL,
 OP_RET, OP_SPAWN, OP_JOIN, OP_LOCK, OP_UNLOCK, OP_PRINT, OP_HALT, OP_FADD,
 OP_FSUB, OP_FMUL, OP_FDIV) = range(30)

_OPCODE_NUMBERS = {
    "add": OP_ADD, "sub": OP_SUB, "mul": OP_MUL, "div": OP_DIV, "mod": OP_MOD,
    "and": OP_AND, "or": OP_OR, "xor": OP_XOR, "shl": OP_SHL, "shr": OP_SHR,
    "cmp": OP_CMP, "mov": OP_MOV, "movi": OP_MOVI, "load": OP_LOAD,
    "store": OP_STORE, "br": OP_BR, "brz": OP_BRZ, "brnz": OP_BRNZ,
    "call": OP_CALL, "ret": OP_RET, "spawn": OP_SPAWN, "join": OP_JOIN,
    "lock": OP_LOCK, "unlock": OP_UNLOCK, "print": OP_PRINT, "halt": OP_HALT,
    "fadd": OP_FADD, "fsub": OP_FSUB, "fmul": OP_FMUL, "fdiv": OP_FDIV,
}


@dataclass(frozen=True)
class _Compiled:
    names: Tuple[str, ...]
    bodies: Tuple[Tuple[tuple, ...], ...]
    entry: int
    site_count: int


@lru_cache(maxsize=64)
def _compile(program: Program) -> _Compiled:
    names = tuple(fn.name for fn in program.functions)
    index = {name: i for i, name in enumerate(names)}

    def value(operand: object) -> Tuple[int, bool]:
        if isinstance(operand, Reg):
            return operand.index, False
        if isinstance(operand, Imm):
            return operand.value, True
        if isinstance(operand, GlobalRef):
            return program.global_base(operand.name), True
        raise TypeError(operand)

    bodies = []
    for fn in program.functions:
        body = []
        for ins in fn.body:
            op = _OPCODE_NUMBERS[ins.opcode]
            ops = ins.operands
            a = b = c = 0
            c_imm = False
            if op in (OP_MOV, OP_JOIN):
                a, b = ops[0].index, ops[1].index  # type: ignore[union-attr]
            elif op == OP_MOVI:
                a = ops[0].index  # type: ignore[union-attr]
                c, c_imm = value(ops[1])
            elif op in (OP_BR,):
                c = fn.labels[ops[0].name]  # type: ignore[union-attr]
            elif op in (OP_BRZ, OP_BRNZ):
                b = ops[0].index  # type: ignore[union-attr]
                c = fn.labels[ops[1].name]  # type: ignore[union-attr]
            elif op == OP_CALL:
                c = index[ops[0].name]  # type: ignore[union-attr]
            elif op == OP_SPAWN:
                a = ops[0].index  # type: ignore[union-attr]
                c = index[ops[1].name]  # type: ignore[union-attr]
                b = ops[2].index  # type: ignore[union-attr]
            elif op in (OP_LOCK, OP_UNLOCK):
                c, c_imm = value(ops[0])
            elif op == OP_PRINT:
                b = ops[0].index  # type: ignore[union-attr]
                c = ops[1].value if len(ops) > 1 else 10  # type: ignore[union-attr]
            elif op in (OP_RET, OP_HALT):
                pass
            else:
                # binary ALU/float ops, load, store
                a, b = ops[0].index, ops[1].index  # type: ignore[union-attr]
                c, c_imm = value(ops[2])
            body.append((op, ins.site_id, a, b, c, c_imm))
        bodies.append(tuple(body))
    return _Compiled(names, tuple(bodies), index[program.entry], program.static_count)


class _Thread:
    __slots__ = ("tid", "regs", "func", "pc", "stack", "status", "wait_on", "exit_value")

    def __init__(self, tid: int, func: int, arg: Word = 0):
        self.tid = tid
        self.regs: List[Word] = [0] * REG_COUNT
        self.regs[0] = arg
        self.func = func
        self.pc = 0
        self.stack: List[Tuple[int, int]] = []
        self.status = RUNNABLE
        self.wait_on = 0
        self.exit_value: Word = 0


def _float_op(op: int, a: Word, b: Word) -> Word:
    x = bits_to_float(a)
    y = bits_to_float(b)
    if op == OP_FADD:
        r = x + y
    elif op == OP_FSUB:
        r = x - y
    elif op == OP_FMUL:
        r = x * y
    elif y == 0.0:
        if x == 0.0 or math.isnan(x):
            r = math.nan
        else:
            r = math.copysign(math.inf, x) * math.copysign(1.0, y)
    else:
        r = x / y
    if math.isnan(r):
        return _CANONICAL_NAN
    return float_to_bits(r)


def _format_word(value: Word, radix: int) -> str:
    if radix == 16:
        return f"{value:016x}\n"
    return f"{value - (1 << 64) if value & _SIGN else value}\n"


class VirtualMachine:
    """Interpreter for toy-IR programs; one instance per worker."""

    def __init__(self, memory_words: int = DEFAULT_MEMORY_WORDS):
        if memory_words <= 0:
            raise ConfigurationError("memory size must be positive")
        self.memory_words = memory_words
        self.logger = logging.getLogger(__name__)

    def run(self, program: Program, input_words: Sequence[int] = (),
            sched_seed: int = 0, budget: int = DEFAULT_BUDGET,
            rmap: Optional[ReliabilityMap] = None,
            hook: Optional[FaultHook] = None,
            observer: Optional[ExecutionObserver] = None) -> ExecutionResult:
        """Execute ``program`` to completion, crash, or budget exhaustion."""
        if budget <= 0:
            raise ConfigurationError("instruction budget must be positive")
        rmap = rmap if rmap is not None else EMPTY_MAP
        compiled = _compile(program)
        image = MemoryImage.for_program(program, self.memory_words, rmap, input_words)
        mem = image.words
        mem_size = self.memory_words
        bodies = compiled.bodies
        names = compiled.names

        reliable_sites = rmap.reliable_sites
        reliable_regs = rmap.reliable_registers
        protects_address = rmap.protects_address

        threads: List[_Thread] = [_Thread(0, compiled.entry)]
        locks: Dict[int, int] = {}
        out: List[str] = []
        counts = [0] * compiled.site_count
        steps = 0
        digest = FNV_OFFSET
        slot = 0
        quantum = 0
        injection: Optional[str] = None
        termination = HALTED
        cause: Optional[str] = None

        if observer is not None:
            observer.on_thread_start(0, names[compiled.entry])

        cur = threads[0]
        tid = 0
        regs = cur.regs
        code = bodies[cur.func]
        pc = 0

        while True:
            if quantum <= 0 or cur.status is not RUNNABLE:
                cur.pc = pc
                runnable = []
                for t in threads:
                    status = t.status
                    if status is RUNNABLE:
                        runnable.append(t.tid)
                    elif status is BLOCKED_LOCK:
                        if t.wait_on not in locks:
                            t.status = RUNNABLE
                            runnable.append(t.tid)
                    elif status is BLOCKED_JOIN:
                        if threads[t.wait_on].status is FINISHED:
                            t.status = RUNNABLE
                            runnable.append(t.tid)
                if not runnable:
                    termination, cause = CRASHED, DEADLOCK
                    break
                slot += 1
                cur = threads[schedule_next(runnable, sched_seed, slot)]
                quantum = quantum_length(sched_seed, slot)
                tid = cur.tid
                regs = cur.regs
                code = bodies[cur.func]
                pc = cur.pc

            if steps >= budget:
                termination = HUNG
                break

            try:
                ins = code[pc]
            except IndexError:
                termination, cause = CRASHED, BAD_JUMP
                break
            op = ins[0]
            site = ins[1]
            dest_kind = 0  # 0 none, 1 register ins[2], 2 memory at dest_addr
            dest_value = 0
            dest_addr = 0
            address: Optional[int] = None
            finish = False
            entered: Optional[str] = None
            returned = False

            if op == OP_LOAD:
                addr = (regs[ins[3]] + ins[4]) & MASK64
                if addr >= mem_size:
                    termination, cause = CRASHED, OOB_MEMORY
                    break
                dest_value = mem[addr]
                dest_kind = 1
                address = addr
                pc += 1
            elif op <= OP_CMP:
                x = regs[ins[3]]
                y = ins[4] if ins[5] else regs[ins[4]]
                if op == OP_ADD:
                    dest_value = (x + y) & MASK64
                elif op == OP_SUB:
                    dest_value = (x - y) & MASK64
                elif op == OP_MUL:
                    dest_value = (x * y) & MASK64
                elif op == OP_AND:
                    dest_value = x & y
                elif op == OP_CMP:
                    dest_value = 1 if (x ^ _SIGN) < (y ^ _SIGN) else 0
                elif op == OP_OR:
                    dest_value = x | y
                elif op == OP_XOR:
                    dest_value = x ^ y
                elif op == OP_SHL:
                    dest_value = (x << (y & 63)) & MASK64
                elif op == OP_SHR:
                    dest_value = x >> (y & 63)
                else:
                    if y == 0:
                        termination, cause = CRASHED, DIV_BY_ZERO
                        break
                    sx = x - (1 << 64) if x & _SIGN else x
                    sy = y - (1 << 64) if y & _SIGN else y
                    q = abs(sx) // abs(sy)
                    if (sx < 0) != (sy < 0):
                        q = -q
                    dest_value = (q if op == OP_DIV else sx - sy * q) & MASK64
                dest_kind = 1
                pc += 1
            elif op == OP_BRZ:
                pc = ins[4] if regs[ins[3]] == 0 else pc + 1
            elif op == OP_BRNZ:
                pc = ins[4] if regs[ins[3]] != 0 else pc + 1
            elif op == OP_BR:
                pc = ins[4]
            elif op == OP_STORE:
                addr = (regs[ins[3]] + ins[4]) & MASK64
                if addr >= mem_size:
                    termination, cause = CRASHED, OOB_MEMORY
                    break
                dest_value = regs[ins[2]]
                dest_kind = 2
                dest_addr = addr
                address = addr
                pc += 1
            elif op == OP_MOVI:
                dest_value = ins[4]
                dest_kind = 1
                pc += 1
            elif op == OP_MOV:
                dest_value = regs[ins[3]]
                dest_kind = 1
                pc += 1
            elif op >= OP_FADD:
                y = ins[4] if ins[5] else regs[ins[4]]
                dest_value = _float_op(op, regs[ins[3]], y)
                dest_kind = 1
                pc += 1
            elif op == OP_CALL:
                cur.stack.append((cur.func, pc + 1))
                cur.func = ins[4]
                code = bodies[cur.func]
                pc = 0
                entered = names[cur.func]
            elif op == OP_RET:
                returned = True
                if cur.stack:
                    cur.func, pc = cur.stack.pop()
                    code = bodies[cur.func]
                elif tid == 0:
                    finish = True
                else:
                    cur.status = FINISHED
                    cur.exit_value = regs[0]
                    quantum = 0
            elif op == OP_PRINT:
                out.append(_format_word(regs[ins[3]], ins[4]))
                pc += 1
            elif op == OP_LOCK:
                lock_id = ins[4] if ins[5] else regs[ins[4]]
                if lock_id in locks:
                    cur.status = BLOCKED_LOCK
                    cur.wait_on = lock_id
                    quantum = 0
                    continue
                locks[lock_id] = tid
                pc += 1
            elif op == OP_UNLOCK:
                lock_id = ins[4] if ins[5] else regs[ins[4]]
                if locks.get(lock_id) == tid:
                    del locks[lock_id]
                pc += 1
            elif op == OP_SPAWN:
                child = _Thread(len(threads), ins[4], regs[ins[3]])
                threads.append(child)
                dest_value = child.tid
                dest_kind = 1
                pc += 1
                if observer is not None:
                    observer.on_thread_start(child.tid, names[child.func])
            elif op == OP_JOIN:
                target = regs[ins[3]]
                if target >= len(threads) or target == tid:
                    termination, cause = CRASHED, JOIN_INVALID_TID
                    break
                if threads[target].status is not FINISHED:
                    cur.status = BLOCKED_JOIN
                    cur.wait_on = target
                    quantum = 0
                    continue
                dest_value = threads[target].exit_value
                dest_kind = 1
                pc += 1
            else:  # OP_HALT
                finish = True

            steps += 1
            digest = ((digest ^ site) * FNV_PRIME) & MASK64
            digest = ((digest ^ tid) * FNV_PRIME) & MASK64
            if hook is not None:
                if dest_kind:
                    replacement = hook(site, counts[site], dest_value)
                    if replacement is not None:
                        if (site in reliable_sites
                                or (dest_kind == 1 and ins[2] in reliable_regs)
                                or (dest_kind == 2 and protects_address(dest_addr))):
                            injection = INJECTION_MASKED
                        else:
                            dest_value = replacement & MASK64
                            injection = INJECTION_APPLIED
                else:
                    hook(site, counts[site], None)
            counts[site] += 1
            if dest_kind == 1:
                regs[ins[2]] = dest_value
            elif dest_kind == 2:
                mem[dest_addr] = dest_value
            if observer is not None:
                observer.on_step(tid, site, address)
                if entered is not None:
                    observer.on_call(tid, entered)
                elif returned:
                    observer.on_return(tid)
            if finish:
                break
            quantum -= 1

        per_site = {s: n for s, n in enumerate(counts) if n}
        return ExecutionResult(
            termination=termination,
            cause=cause,
            output="".join(out).encode("ascii"),
            dynamic_count=steps,
            trace_digest=digest,
            per_site_dynamic_counts=per_site,
            injection=injection,
        )


def run(program: Program, input_words: Sequence[int] = (), sched_seed: int = 0,
        budget: int = DEFAULT_BUDGET, rmap: Optional[ReliabilityMap] = None,
        hook: Optional[FaultHook] = None,
        memory_words: int = DEFAULT_MEMORY_WORDS) -> ExecutionResult:
    """Run ``program`` once on a fresh machine."""
    return VirtualMachine(memory_words).run(
        program, input_words, sched_seed, budget, rmap, hook)


def golden_run(program: Program, input_words: Sequence[int] = (), sched_seed: int = 0,
               benchmark: Optional[str] = None, budget: int = DEFAULT_BUDGET,
               memory_words: int = DEFAULT_MEMORY_WORDS) -> GoldenRecord:
    """Fault-free reference run; a benchmark that does not halt is defective."""
    result = VirtualMachine(memory_words).run(program, input_words, sched_seed, budget)
    if not result.halted:
        raise BenchmarkDefectError(benchmark or program.entry, result.termination, result.cause)
    logging.getLogger(__name__).debug(
        f"Golden run of {benchmark or program.entry}: {result.dynamic_count} instructions")
    return GoldenRecord(result, sched_seed, tuple(input_words), benchmark)
