"""
Fault-free dynamic profiling: call counts, inclusive/exclusive shares and
per-site read/write statistics.

Dynamic instruction count is the time proxy. Every simulated thread keeps
its own call stack, rooted at the program entry function (the process
host), so the entry function's inclusive share is always 100% while a
spawned function's time accrues to itself, not to its spawner.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import pandas as pd

from .errors import BenchmarkDefectError
from .ir import Program, THREAD_PRIMITIVE, IO, classify_opcode
from .vm import DEFAULT_BUDGET, DEFAULT_MEMORY_WORDS, ExecutionObserver, VirtualMachine

TIME_SHARE_COLUMNS = ["function", "calls", "incl_pct", "excl_pct", "avg_incl", "avg_excl"]
PRIMITIVE_COLUMNS = ["primitive", "calls"]


@dataclass
class FunctionProfile:
    calls: int = 0
    inclusive: int = 0
    exclusive: int = 0


@dataclass
class SiteProfile:
    exec_count: int = 0
    dest_write_count: int = 0
    mem_read_count: int = 0
    mem_write_count: int = 0
    # global name -> accesses by this load/store site
    globals_touched: Dict[str, int] = field(default_factory=dict)
    # memory address -> accesses by this load/store site
    addresses: Dict[int, int] = field(default_factory=dict)


@dataclass
class ProfileReport:
    entry: str
    per_function: Dict[str, FunctionProfile]
    per_site: Dict[int, SiteProfile]
    total_dynamic: int
    primitive_calls: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "entry": self.entry,
            "total_dynamic": self.total_dynamic,
            "per_function": {
                name: vars(fp).copy() for name, fp in sorted(self.per_function.items())
            },
            "per_site": {
                str(site): {
                    "exec_count": sp.exec_count,
                    "dest_write_count": sp.dest_write_count,
                    "mem_read_count": sp.mem_read_count,
                    "mem_write_count": sp.mem_write_count,
                    "globals_touched": dict(sorted(sp.globals_touched.items())),
                }
                for site, sp in sorted(self.per_site.items())
            },
            "primitive_calls": dict(sorted(self.primitive_calls.items())),
        }


@dataclass(frozen=True)
class SiteStat:
    site_id: int
    instr_class: str
    exec_count: int
    read_refs: int
    write_mods: int


class Profiler(ExecutionObserver):
    """Collects a ProfileReport while observing one fault-free run."""

    def __init__(self, program: Program):
        self.program = program
        self.logger = logging.getLogger(__name__)
        self._opcodes = [ins.opcode for ins in program.instructions]
        self._writes_register = [ins.dest_register is not None for ins in program.instructions]
        self._calls: Counter = Counter()
        self._inclusive: Counter = Counter()
        self._exclusive: Counter = Counter()
        self._stacks: Dict[int, List[str]] = {}
        self._active: Dict[int, Counter] = {}
        self._sites: Dict[int, SiteProfile] = defaultdict(SiteProfile)
        self._primitives: Counter = Counter()
        self._total = 0

    def _push(self, tid: int, function: str) -> None:
        self._stacks[tid].append(function)
        self._active[tid][function] += 1

    def on_thread_start(self, tid: int, function: str) -> None:
        entry = self.program.entry
        self._stacks[tid] = []
        self._active[tid] = Counter()
        self._push(tid, entry)
        if function != entry:
            self._push(tid, function)
        self._calls[function] += 1

    def on_step(self, tid: int, site_id: int, address: Optional[int]) -> None:
        self._total += 1
        stack = self._stacks[tid]
        self._exclusive[stack[-1]] += 1
        for function in self._active[tid]:
            self._inclusive[function] += 1

        stat = self._sites[site_id]
        stat.exec_count += 1
        if self._writes_register[site_id]:
            stat.dest_write_count += 1
        opcode = self._opcodes[site_id]
        if address is not None:
            if opcode == "load":
                stat.mem_read_count += 1
            else:
                stat.mem_write_count += 1
            stat.addresses[address] = stat.addresses.get(address, 0) + 1
            name = self.program.global_at(address)
            if name is not None:
                stat.globals_touched[name] = stat.globals_touched.get(name, 0) + 1
        if classify_opcode(opcode) in (THREAD_PRIMITIVE, IO):
            self._primitives[opcode] += 1

    def on_call(self, tid: int, function: str) -> None:
        self._calls[function] += 1
        self._push(tid, function)

    def on_return(self, tid: int) -> None:
        stack = self._stacks[tid]
        if stack:
            function = stack.pop()
            active = self._active[tid]
            active[function] -= 1
            if not active[function]:
                del active[function]

    def report(self) -> ProfileReport:
        names = set(self._calls) | set(self._inclusive)
        per_function = {
            name: FunctionProfile(
                calls=self._calls[name],
                inclusive=self._inclusive[name],
                exclusive=self._exclusive[name],
            )
            for name in names
        }
        return ProfileReport(
            entry=self.program.entry,
            per_function=per_function,
            per_site=dict(self._sites),
            total_dynamic=self._total,
            primitive_calls=dict(self._primitives),
        )


def profile(program: Program, input_words: Sequence[int] = (), sched_seed: int = 0,
            benchmark: Optional[str] = None, budget: int = DEFAULT_BUDGET,
            memory_words: int = DEFAULT_MEMORY_WORDS) -> ProfileReport:
    """Profile one fault-free run of ``program``."""
    profiler = Profiler(program)
    result = VirtualMachine(memory_words).run(
        program, input_words, sched_seed, budget, observer=profiler)
    if not result.halted:
        raise BenchmarkDefectError(benchmark or program.entry, result.termination, result.cause)
    report = profiler.report()
    profiler.logger.debug(
        f"Profiled {benchmark or program.entry}: {report.total_dynamic} instructions, "
        f"{len(report.per_function)} functions")
    return report


def time_shares(report: ProfileReport) -> pd.DataFrame:
    """One row per called function, sorted by inclusive share."""
    if report.total_dynamic <= 0:
        raise ValueError("profile has no dynamic instructions")
    rows = []
    for name, fp in report.per_function.items():
        if fp.calls == 0:
            continue
        rows.append({
            "function": name,
            "calls": fp.calls,
            "incl_pct": 100.0 * fp.inclusive / report.total_dynamic,
            "excl_pct": 100.0 * fp.exclusive / report.total_dynamic,
            "avg_incl": fp.inclusive / fp.calls,
            "avg_excl": fp.exclusive / fp.calls,
        })
    table = pd.DataFrame(rows, columns=TIME_SHARE_COLUMNS)
    if table.empty:
        return table
    table = table.sort_values(
        by=["incl_pct", "function"], ascending=[False, True], kind="mergesort")
    return table.reset_index(drop=True)


def site_stats(report: ProfileReport, program: Program) -> List[SiteStat]:
    """Read/write reference statistics for every static site."""
    stats = []
    for ins in program.instructions:
        sp = report.per_site.get(ins.site_id, SiteProfile())
        stats.append(SiteStat(
            site_id=ins.site_id,
            instr_class=ins.instr_class,
            exec_count=sp.exec_count,
            read_refs=sp.exec_count + sp.mem_read_count,
            write_mods=sp.dest_write_count + sp.mem_write_count,
        ))
    return stats


def primitive_table(report: ProfileReport) -> pd.DataFrame:
    """Call counts of thread-primitive and output opcodes, one row each."""
    return pd.DataFrame(
        [{"primitive": opcode, "calls": count}
         for opcode, count in sorted(report.primitive_calls.items())],
        columns=PRIMITIVE_COLUMNS,
    )
