"""
Reliability planning for the hybrid SRAM/STT-RAM architecture.

Sites are ranked by the "high referencing, low modification" policy
(read_refs / (write_mods + 1)); thread primitives are always protected.
Reliable registers and memory regions are derived from the selected sites,
and a simple technology model prices the extra STT-RAM latency and energy.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import ConfigurationError
from .injector import Selector
from .ir import LOAD_STORE, REG_COUNT, THREAD_PRIMITIVE, Program
from .profiler import ProfileReport, SiteStat, site_stats
from .vm import EMPTY_MAP, Region, ReliabilityMap

MANDATORY_PROTECTION_ERROR = "budget below mandatory protection"


@dataclass(frozen=True)
class TechParams:
    """Per-access latency (cycles) and energy (pJ) for each technology."""
    sram_read_latency: float = 1.0
    stt_read_latency: float = 1.0
    sram_write_latency: float = 1.0
    stt_write_latency: float = 5.0
    sram_read_energy: float = 1.0
    stt_read_energy: float = 1.0
    sram_write_energy: float = 1.0
    stt_write_energy: float = 10.0

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not value > 0:
                raise ConfigurationError(f"tech parameter {name} must be positive, got {value}")
        if self.stt_write_latency < self.sram_write_latency:
            raise ConfigurationError("stt_write_latency must not be below sram_write_latency")

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "TechParams":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown tech parameters: {sorted(unknown)}")
        try:
            return cls(**{k: float(v) for k, v in data.items()})  # type: ignore[arg-type]
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"malformed tech parameters: {e}") from None

    def to_dict(self) -> Dict[str, float]:
        return dict(vars(self))


@dataclass(frozen=True)
class PlanBudget:
    site_fraction: float
    register_count: int = REG_COUNT
    memory_words: int = 0
    target_coverage: Optional[float] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.site_fraction <= 1.0:
            raise ConfigurationError(f"site_fraction {self.site_fraction} outside [0, 1]")
        if not 0 <= self.register_count <= REG_COUNT:
            raise ConfigurationError(f"register_count {self.register_count} outside [0, {REG_COUNT}]")
        if self.memory_words < 0:
            raise ConfigurationError("memory_words must not be negative")
        if self.target_coverage is not None and not 0.0 < self.target_coverage <= 1.0:
            raise ConfigurationError(f"target_coverage {self.target_coverage} outside (0, 1]")

    def site_limit(self, static_count: int) -> int:
        """ceil(f * N), tolerant of binary rounding in f."""
        return math.ceil(round(self.site_fraction * static_count, 9))

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "PlanBudget":
        if "site_fraction" not in data:
            raise ConfigurationError("budget needs a site_fraction")
        try:
            target = data.get("target_coverage")
            return cls(
                site_fraction=float(data["site_fraction"]),  # type: ignore[arg-type]
                register_count=int(data.get("register_count", REG_COUNT)),  # type: ignore[arg-type]
                memory_words=int(data.get("memory_words", 0)),  # type: ignore[arg-type]
                target_coverage=float(target) if target is not None else None,  # type: ignore[arg-type]
            )
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"malformed budget: {e}") from None

    def to_dict(self) -> Dict[str, object]:
        return {
            "site_fraction": self.site_fraction,
            "register_count": self.register_count,
            "memory_words": self.memory_words,
            "target_coverage": self.target_coverage,
        }


@dataclass(frozen=True)
class SiteScore:
    site_id: int
    score: float
    forced: bool = False


@dataclass(frozen=True)
class ReliabilityPlan:
    rmap: ReliabilityMap
    tech: TechParams = field(default_factory=TechParams)
    budget: Optional[PlanBudget] = None
    scores: Tuple[SiteScore, ...] = ()
    coverage: Optional[float] = None

    @property
    def reliable_sites(self) -> frozenset:
        return self.rmap.reliable_sites

    @property
    def reliable_registers(self) -> frozenset:
        return self.rmap.reliable_registers

    @property
    def regions(self) -> Tuple[Region, ...]:
        return self.rmap.regions

    def to_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {
            "reliable_sites": sorted(self.rmap.reliable_sites),
            "reliable_registers": sorted(self.rmap.reliable_registers),
            "regions": [{"start": r.start, "len": r.length} for r in self.rmap.regions],
            "tech": self.tech.to_dict(),
        }
        if self.budget is not None:
            data["budget"] = self.budget.to_dict()
        if self.coverage is not None:
            data["coverage"] = self.coverage
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, object],
                  program: Optional[Program] = None) -> "ReliabilityPlan":
        """Rebuild a plan from JSON, validating it against ``program`` if given."""
        try:
            sites = frozenset(int(s) for s in data.get("reliable_sites", []))  # type: ignore[union-attr]
            registers = frozenset(int(r) for r in data.get("reliable_registers", []))  # type: ignore[union-attr]
            regions = tuple(
                Region(int(r["start"]), int(r["len"]))
                for r in data.get("regions", [])  # type: ignore[union-attr]
            )
            rmap = ReliabilityMap(registers, regions, sites)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"malformed plan: {e}") from None
        if program is not None:
            bad = sorted(s for s in sites if not 0 <= s < program.static_count)
            if bad:
                raise ConfigurationError(f"plan names unknown sites {bad}")
        tech = TechParams.from_dict(data["tech"]) if data.get("tech") else TechParams()  # type: ignore[arg-type]
        budget = PlanBudget.from_dict(data["budget"]) if data.get("budget") else None  # type: ignore[arg-type]
        coverage = data.get("coverage")
        return cls(rmap, tech, budget, (), float(coverage) if coverage is not None else None)  # type: ignore[arg-type]


EMPTY_PLAN = ReliabilityPlan(EMPTY_MAP)


@dataclass(frozen=True)
class OverheadReport:
    delta_cycles: float
    delta_energy: float
    slowdown: float
    baseline_cycles: int

    def to_dict(self) -> Dict[str, float]:
        return {
            "delta_cycles": self.delta_cycles,
            "delta_energy": self.delta_energy,
            "slowdown": self.slowdown,
            "baseline_cycles": self.baseline_cycles,
        }


def score_sites(stats: Sequence[SiteStat]) -> List[SiteScore]:
    """Rank sites by (forced, read_refs / (write_mods + 1), -site_id), best first."""
    scores = [
        SiteScore(
            site_id=stat.site_id,
            score=stat.read_refs / (stat.write_mods + 1),
            forced=stat.instr_class == THREAD_PRIMITIVE,
        )
        for stat in stats
    ]
    return sorted(scores, key=lambda s: (s.forced, s.score, -s.site_id), reverse=True)


def plan_coverage(plan: ReliabilityPlan, program: Program, profile: ProfileReport,
                  selector: Optional[Selector] = None) -> float:
    """Share of dynamic candidate instances whose destination the plan protects."""
    return _coverage(plan.rmap, program, profile, selector)


def _coverage(rmap: ReliabilityMap, program: Program, profile: ProfileReport,
              selector: Optional[Selector]) -> float:
    covered = total = 0
    for site_id, sp in profile.per_site.items():
        ins = program.instruction(site_id)
        if not ins.has_destination or not sp.exec_count:
            continue
        if selector is not None and not selector.matches(ins.instr_class, site_id):
            continue
        total += sp.exec_count
        dest = ins.dest_register
        if rmap.protects_site(site_id) or (dest is not None and rmap.protects_register(dest)):
            covered += sp.exec_count
        elif ins.writes_memory:
            covered += sum(n for addr, n in sp.addresses.items() if rmap.protects_address(addr))
    return covered / total if total else 0.0


def _derive_map(selected: Sequence[int], program: Program, profile: ProfileReport,
                budget: PlanBudget) -> ReliabilityMap:
    """Registers and regions follow from the selected sites."""
    register_writes: Counter = Counter()
    global_refs: Counter = Counter()
    for site_id in selected:
        ins = program.instruction(site_id)
        sp = profile.per_site.get(site_id)
        if sp is None:
            continue
        if ins.dest_register is not None and sp.dest_write_count:
            register_writes[ins.dest_register] += sp.dest_write_count
        if ins.instr_class == LOAD_STORE:
            global_refs.update(sp.globals_touched)

    ranked_registers = sorted(register_writes.items(), key=lambda kv: (-kv[1], kv[0]))
    registers = [reg for reg, _ in ranked_registers[:budget.register_count]]

    layout = program.global_layout()
    regions = []
    remaining = budget.memory_words
    for name, _ in sorted(global_refs.items(), key=lambda kv: (-kv[1], kv[0])):
        base, size = layout[name]
        if size <= remaining:
            regions.append(Region(base, size))
            remaining -= size
    return ReliabilityMap(frozenset(registers), tuple(regions), frozenset(selected))


def build_plan(scores: Sequence[SiteScore], program: Program, profile: ProfileReport,
               budget: PlanBudget, tech: Optional[TechParams] = None,
               selector: Optional[Selector] = None) -> ReliabilityPlan:
    """Greedy plan: forced sites first, then by score until the site budget is spent."""
    tech = tech if tech is not None else TechParams()
    if len(scores) != program.static_count:
        raise ConfigurationError(
            f"{len(scores)} site scores for a program with {program.static_count} sites")
    ordered = sorted(scores, key=lambda s: (s.forced, s.score, -s.site_id), reverse=True)
    limit = budget.site_limit(program.static_count)
    forced = [s.site_id for s in ordered if s.forced]
    if len(forced) > limit:
        raise ConfigurationError(
            f"{MANDATORY_PROTECTION_ERROR}: {len(forced)} thread-primitive sites, "
            f"site budget {limit}")

    logger = logging.getLogger(__name__)
    selected: List[int] = []
    for position, score in enumerate(ordered[:limit]):
        selected.append(score.site_id)
        if budget.target_coverage is None or score.forced:
            continue
        rmap = _derive_map(selected, program, profile, budget)
        if _coverage(rmap, program, profile, selector) >= budget.target_coverage:
            logger.debug(f"Target coverage reached after {position + 1} sites")
            break
    rmap = _derive_map(selected, program, profile, budget)
    coverage = _coverage(rmap, program, profile, selector)
    logger.debug(
        f"Plan: {len(rmap.reliable_sites)} sites, {len(rmap.reliable_registers)} registers, "
        f"{rmap.reliable_words} words, coverage {coverage:.3f}")
    return ReliabilityPlan(rmap, tech, budget, tuple(ordered), coverage)


def estimate_overhead(profile: ProfileReport, plan: ReliabilityPlan,
                      params: Optional[TechParams] = None) -> OverheadReport:
    """Extra cycles and energy from running protected sites on STT-RAM."""
    tech = params if params is not None else plan.tech
    write_latency = tech.stt_write_latency - tech.sram_write_latency
    read_latency = tech.stt_read_latency - tech.sram_read_latency
    write_energy = tech.stt_write_energy - tech.sram_write_energy
    read_energy = tech.stt_read_energy - tech.sram_read_energy

    delta_cycles = 0.0
    delta_energy = 0.0
    for site_id in sorted(plan.reliable_sites):
        sp = profile.per_site.get(site_id)
        if sp is None:
            continue
        read_refs = sp.exec_count + sp.mem_read_count
        write_mods = sp.dest_write_count + sp.mem_write_count
        delta_cycles += write_mods * write_latency + read_refs * read_latency
        delta_energy += write_mods * write_energy + read_refs * read_energy
    baseline = profile.total_dynamic
    return OverheadReport(
        delta_cycles=delta_cycles,
        delta_energy=delta_energy,
        slowdown=delta_cycles / baseline if baseline else 0.0,
        baseline_cycles=baseline,
    )


class ReliabilityPlanner:
    """Scores a profiled program and builds plans for it."""

    def __init__(self, program: Program, profile: ProfileReport,
                 tech: Optional[TechParams] = None):
        self.program = program
        self.profile = profile
        self.tech = tech if tech is not None else TechParams()
        self.scores = score_sites(site_stats(profile, program))
        self.logger = logging.getLogger(__name__)

    def plan(self, budget: PlanBudget, selector: Optional[Selector] = None) -> ReliabilityPlan:
        plan = build_plan(self.scores, self.program, self.profile, budget, self.tech, selector)
        self.logger.info(
            f"Planned {len(plan.reliable_sites)}/{self.program.static_count} reliable sites "
            f"(coverage {plan.coverage:.1%})")
        return plan

    def overhead(self, plan: ReliabilityPlan) -> OverheadReport:
        return estimate_overhead(self.profile, plan, self.tech)
