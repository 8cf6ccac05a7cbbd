"""
Three-step fault injection: candidate selection, instrumentation through
the VM hook, and seeded choice of one dynamic instance.

Faults perturb the destination value of an instruction right after it
executes. SEU flips one bit; MBU flips ``width`` contiguous bits of the
same 64-bit word.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError, InvalidTrialError
from .ir import (
    ARITHMETIC, INSTRUCTION_CLASSES, LOAD_STORE, WORD_BITS, Program, Word,
)
from .vm import (
    DEFAULT_MEMORY_WORDS, EMPTY_MAP, ExecutionObserver, ExecutionResult, GoldenRecord,
    ReliabilityMap, VirtualMachine, golden_run,
)
from .utils import MASK64

SEU = "seu"
MBU = "mbu"
MIN_MBU_WIDTH = 2
MAX_MBU_WIDTH = 8
DEFAULT_MBU_WIDTHS = {2: 1 / 3, 3: 1 / 3, 4: 1 / 3}

SELECTOR_NAMES = {
    "all": frozenset(INSTRUCTION_CLASSES),
    "arith": frozenset({ARITHMETIC}),
    "loadstore": frozenset({LOAD_STORE}),
}


@dataclass(frozen=True)
class Selector:
    """Static filter over fault sites; filters compose by intersection."""
    class_filter: FrozenSet[str]
    site_filter: Optional[FrozenSet[int]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "class_filter", frozenset(self.class_filter))
        if self.site_filter is not None:
            object.__setattr__(self, "site_filter", frozenset(self.site_filter))
        if not self.class_filter:
            raise ConfigurationError("selector must name at least one instruction class")
        unknown = self.class_filter - set(INSTRUCTION_CLASSES)
        if unknown:
            raise ConfigurationError(f"unknown instruction classes: {sorted(unknown)}")

    @classmethod
    def named(cls, name: str) -> "Selector":
        try:
            return cls(SELECTOR_NAMES[name])
        except KeyError:
            raise ConfigurationError(
                f"unknown selector '{name}' (choose from {', '.join(SELECTOR_NAMES)})") from None

    @property
    def name(self) -> str:
        for name, classes in SELECTOR_NAMES.items():
            if classes == self.class_filter and self.site_filter is None:
                return name
        return "custom"

    def matches(self, instr_class: str, site_id: int) -> bool:
        if instr_class not in self.class_filter:
            return False
        return self.site_filter is None or site_id in self.site_filter

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "classes": sorted(self.class_filter),
            "sites": sorted(self.site_filter) if self.site_filter is not None else None,
        }


@dataclass(frozen=True)
class FaultModel:
    kind: str
    widths: Tuple[Tuple[int, float], ...] = ((1, 1.0),)

    def __post_init__(self) -> None:
        if self.kind == SEU:
            if self.widths != ((1, 1.0),):
                raise ConfigurationError("an SEU flips exactly one bit")
            return
        if self.kind != MBU:
            raise ConfigurationError(f"unknown fault model '{self.kind}'")
        if not self.widths:
            raise ConfigurationError("MBU model needs a width distribution")
        for width, probability in self.widths:
            if not MIN_MBU_WIDTH <= width <= MAX_MBU_WIDTH:
                raise ConfigurationError(
                    f"MBU width {width} outside [{MIN_MBU_WIDTH}, {MAX_MBU_WIDTH}]")
            if probability < 0:
                raise ConfigurationError(f"negative probability for width {width}")
        total = sum(p for _, p in self.widths)
        if abs(total - 1.0) > 1e-12:
            raise ConfigurationError(f"MBU width probabilities sum to {total}, not 1")

    @classmethod
    def seu(cls) -> "FaultModel":
        return cls(SEU)

    @classmethod
    def mbu(cls, widths: Optional[Mapping[int, float]] = None) -> "FaultModel":
        distribution = widths if widths is not None else DEFAULT_MBU_WIDTHS
        return cls(MBU, tuple(sorted((int(k), float(v)) for k, v in distribution.items())))

    @classmethod
    def fixed(cls, width: int) -> "FaultModel":
        """Every fault flips exactly ``width`` bits."""
        return cls.seu() if width == 1 else cls.mbu({width: 1.0})

    @classmethod
    def named(cls, name: str) -> "FaultModel":
        if name == SEU:
            return cls.seu()
        if name == MBU:
            return cls.mbu()
        raise ConfigurationError(f"unknown fault model '{name}' (choose seu or mbu)")

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "FaultModel":
        kind = data.get("kind")
        if kind == SEU:
            return cls.seu()
        if kind != MBU:
            raise ConfigurationError(f"unknown fault model '{kind}'")
        raw = data.get("widths")
        if raw is None:
            return cls.mbu()
        if not isinstance(raw, dict):
            raise ConfigurationError("'widths' must map width -> probability")
        try:
            return cls.mbu({int(k): float(v) for k, v in raw.items()})
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"malformed MBU widths: {e}") from None

    def to_dict(self) -> Dict[str, object]:
        if self.kind == SEU:
            return {"kind": SEU}
        return {"kind": MBU, "widths": {str(k): p for k, p in self.widths}}


@dataclass(frozen=True)
class FaultSpec:
    """A fully determined fault: where, which execution, which bits."""
    site_id: int
    dynamic_instance: int
    start_bit: int
    width: int
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.width < 1 or not 0 <= self.start_bit or self.start_bit + self.width > WORD_BITS:
            raise ValueError(
                f"invalid flip window start={self.start_bit} width={self.width}")
        if self.dynamic_instance < 0:
            raise ValueError("dynamic instance must be non-negative")

    @property
    def kind(self) -> str:
        return SEU if self.width == 1 else MBU

    @property
    def mask(self) -> Word:
        return flip_mask(self.start_bit, self.width)

    def to_dict(self) -> Dict[str, object]:
        return {
            "site": self.site_id,
            "instance": self.dynamic_instance,
            "start_bit": self.start_bit,
            "width": self.width,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class CandidateSet:
    """Fault-injectable sites with their dynamic execution counts."""
    counts: Tuple[Tuple[int, int], ...]
    _cumulative: np.ndarray = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "_cumulative",
            np.cumsum(np.array([n for _, n in self.counts], dtype=np.int64)))

    @property
    def total_instances(self) -> int:
        return int(self._cumulative[-1]) if self.counts else 0

    @property
    def site_ids(self) -> Tuple[int, ...]:
        return tuple(site for site, _ in self.counts)

    def as_dict(self) -> Dict[int, int]:
        return dict(self.counts)

    def locate(self, ordinal: int) -> Tuple[int, int]:
        """Map a global instance ordinal to (site_id, dynamic_instance)."""
        if not 0 <= ordinal < self.total_instances:
            raise IndexError(ordinal)
        index = int(np.searchsorted(self._cumulative, ordinal, side="right"))
        before = int(self._cumulative[index - 1]) if index else 0
        return self.counts[index][0], ordinal - before

    def __len__(self) -> int:
        return len(self.counts)


def flip_mask(start_bit: int, width: int) -> Word:
    return ((1 << width) - 1) << start_bit


def apply_flip(word: Word, start_bit: int, width: int) -> Word:
    """XOR ``width`` contiguous bits starting at ``start_bit``."""
    if width < 1 or start_bit < 0 or start_bit + width > WORD_BITS:
        raise ValueError(f"invalid flip window start={start_bit} width={width}")
    return (word ^ flip_mask(start_bit, width)) & MASK64


def enumerate_candidates(golden: GoldenRecord, program: Program,
                         selector: Selector) -> CandidateSet:
    """Sites matching ``selector`` that executed and write a destination."""
    counts = []
    for site_id, count in sorted(golden.per_site_dynamic_counts.items()):
        ins = program.instruction(site_id)
        if count > 0 and ins.has_destination and selector.matches(ins.instr_class, site_id):
            counts.append((site_id, count))
    if not counts:
        raise ConfigurationError(
            f"empty candidate set for selector '{selector.name}'")
    return CandidateSet(tuple(counts))


def draw_fault(candidates: CandidateSet, model: FaultModel, seed: int) -> FaultSpec:
    """Uniform over all dynamic instances, then a flip window per ``model``."""
    total = candidates.total_instances
    if total <= 0:
        raise ConfigurationError("cannot draw from an empty candidate set")
    rng = np.random.default_rng(seed)
    site_id, instance = candidates.locate(int(rng.integers(total)))
    if model.kind == SEU:
        width = 1
    else:
        widths = np.array([w for w, _ in model.widths])
        probabilities = np.array([p for _, p in model.widths])
        width = int(rng.choice(widths, p=probabilities / probabilities.sum()))
    start_bit = int(rng.integers(0, WORD_BITS - width + 1))
    return FaultSpec(site_id, instance, start_bit, width, seed)


def enumerate_seu_faults(candidates: CandidateSet) -> Iterator[FaultSpec]:
    """Every (dynamic instance x bit) single-bit fault, in a fixed order."""
    for site_id, count in candidates.counts:
        for instance in range(count):
            for bit in range(WORD_BITS):
                yield FaultSpec(site_id, instance, bit, 1)


class _FlipHook:
    __slots__ = ("site_id", "instance", "mask")

    def __init__(self, spec: FaultSpec):
        self.site_id = spec.site_id
        self.instance = spec.dynamic_instance
        self.mask = spec.mask

    def __call__(self, site_id: int, instance: int, value: Optional[Word]) -> Optional[Word]:
        if site_id == self.site_id and instance == self.instance and value is not None:
            return value ^ self.mask
        return None


def inject_run(program: Program, input_words: Sequence[int], sched_seed: int,
               spec: FaultSpec, rmap: Optional[ReliabilityMap] = None,
               budget: Optional[int] = None,
               memory_words: int = DEFAULT_MEMORY_WORDS,
               golden: Optional[GoldenRecord] = None,
               observer: Optional[ExecutionObserver] = None) -> ExecutionResult:
    """Run with ``spec`` applied at exactly its (site, dynamic instance).

    Without an explicit ``budget`` the hang policy of the golden run
    applies; the golden run is computed here when not given.
    """
    if budget is None:
        if golden is None:
            golden = golden_run(program, input_words, sched_seed, memory_words=memory_words)
        budget = golden.hang_budget()
    result = VirtualMachine(memory_words).run(
        program, input_words, sched_seed, budget,
        rmap=rmap if rmap is not None else EMPTY_MAP, hook=_FlipHook(spec), observer=observer)
    if result.injection is None:
        raise InvalidTrialError(
            f"site {spec.site_id} instance {spec.dynamic_instance} was never reached")
    return result


class FaultInjector:
    """Binds a program and its golden run for repeated fault trials."""

    def __init__(self, program: Program, golden: GoldenRecord,
                 selector: Selector, model: FaultModel,
                 budget: Optional[int] = None,
                 memory_words: int = DEFAULT_MEMORY_WORDS):
        self.program = program
        self.golden = golden
        self.selector = selector
        self.model = model
        self.budget = budget if budget is not None else golden.hang_budget()
        self.memory_words = memory_words
        self.candidates = enumerate_candidates(golden, program, selector)
        self.logger = logging.getLogger(__name__)
        self.logger.debug(
            f"{len(self.candidates)} candidate sites, "
            f"{self.candidates.total_instances} dynamic instances")

    def draw(self, seed: int) -> FaultSpec:
        return draw_fault(self.candidates, self.model, seed)

    def inject(self, spec: FaultSpec, rmap: Optional[ReliabilityMap] = None) -> ExecutionResult:
        return inject_run(
            self.program, self.golden.input_words, self.golden.sched_seed, spec,
            rmap, self.budget, self.memory_words)

    def exhaustive_faults(self) -> List[FaultSpec]:
        return list(enumerate_seu_faults(self.candidates))
