"""
Outcome classification against the golden run, and histogram aggregation.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Tuple, Union

from .injector import FaultSpec
from .ir import INSTRUCTION_CLASSES, Program
from .vm import ExecutionResult, GoldenRecord

CRASH = "crash"
SDC = "sdc"
HANG = "hang"
BENIGN = "benign"
OUTCOME_TAGS = (CRASH, SDC, HANG, BENIGN)
NON_BENIGN_TAGS = (CRASH, SDC, HANG)


@dataclass(frozen=True)
class Outcome:
    tag: str
    # crash cause, or byte offset of the first output divergence for sdc
    detail: Optional[Union[str, int]] = None

    def __post_init__(self) -> None:
        if self.tag not in OUTCOME_TAGS:
            raise ValueError(f"unknown outcome tag '{self.tag}'")

    @property
    def benign(self) -> bool:
        return self.tag == BENIGN

    def to_dict(self) -> Dict[str, object]:
        return {"outcome": self.tag, "detail": self.detail}


def first_divergence(output: bytes, golden: bytes) -> int:
    """Byte offset where two outputs first differ (shorter length if a prefix)."""
    for offset, (a, b) in enumerate(zip(output, golden)):
        if a != b:
            return offset
    return min(len(output), len(golden))


def classify(trial: ExecutionResult, golden: GoldenRecord) -> Outcome:
    """Map a trial run onto crash / hang / sdc / benign."""
    if not golden.result.halted:
        raise ValueError("golden run did not halt")
    if trial.crashed:
        return Outcome(CRASH, trial.cause)
    if trial.hung:
        return Outcome(HANG)
    if trial.output != golden.output:
        return Outcome(SDC, first_divergence(trial.output, golden.output))
    return Outcome(BENIGN)


def _empty_counts() -> Dict[str, int]:
    return {tag: 0 for tag in OUTCOME_TAGS}


@dataclass
class OutcomeHistogram:
    """Outcome counts with per-class and per-width breakdowns."""
    counts: Dict[str, int] = field(default_factory=_empty_counts)
    by_class: Dict[str, Dict[str, int]] = field(default_factory=dict)
    by_width: Dict[int, Dict[str, int]] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def non_benign(self) -> int:
        return sum(self.counts[tag] for tag in NON_BENIGN_TAGS)

    @property
    def non_benign_rate(self) -> float:
        return self.non_benign / self.total if self.total else 0.0

    def rate(self, tag: str) -> float:
        return self.counts[tag] / self.total if self.total else 0.0

    def add(self, instr_class: str, width: int, outcome: Outcome) -> None:
        self.counts[outcome.tag] += 1
        self.by_class.setdefault(instr_class, _empty_counts())[outcome.tag] += 1
        self.by_width.setdefault(width, _empty_counts())[outcome.tag] += 1

    def merge(self, other: "OutcomeHistogram") -> "OutcomeHistogram":
        """Sum two histograms; associative and commutative."""
        merged = OutcomeHistogram(
            counts=dict(Counter(self.counts) + Counter(other.counts)))
        for tag in OUTCOME_TAGS:
            merged.counts.setdefault(tag, 0)
        for mine, theirs, target in ((self.by_class, other.by_class, merged.by_class),
                                     (self.by_width, other.by_width, merged.by_width)):
            for key in set(mine) | set(theirs):
                target[key] = {
                    tag: mine.get(key, {}).get(tag, 0) + theirs.get(key, {}).get(tag, 0)
                    for tag in OUTCOME_TAGS
                }
        return merged

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OutcomeHistogram):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> Dict[str, object]:
        total = self.total
        data: Dict[str, object] = {"total": total}
        data.update({tag: self.counts[tag] for tag in OUTCOME_TAGS})
        data["by_class"] = {k: dict(v) for k, v in sorted(self.by_class.items())}
        data["by_width"] = {str(k): dict(v) for k, v in sorted(self.by_width.items())}
        data["percent"] = {
            tag: (100.0 * self.counts[tag] / total if total else 0.0) for tag in OUTCOME_TAGS
        }
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "OutcomeHistogram":
        def counts_of(raw: Mapping[str, object]) -> Dict[str, int]:
            return {tag: int(raw.get(tag, 0)) for tag in OUTCOME_TAGS}  # type: ignore[arg-type]

        by_class = data.get("by_class") or {}
        by_width = data.get("by_width") or {}
        return cls(
            counts=counts_of(data),
            by_class={k: counts_of(v) for k, v in by_class.items()},  # type: ignore[union-attr]
            by_width={int(k): counts_of(v) for k, v in by_width.items()},  # type: ignore[union-attr]
        )


def aggregate(outcomes: Iterable[Tuple[FaultSpec, Outcome]], program: Program) -> OutcomeHistogram:
    """Exact outcome counts keyed by instruction class and fault width."""
    histogram = OutcomeHistogram()
    for spec, outcome in outcomes:
        histogram.add(program.instruction(spec.site_id).instr_class, spec.width, outcome)
    if histogram.total == 0:
        raise ValueError("cannot aggregate an empty outcome sequence")
    return histogram


def class_marginals(histogram: OutcomeHistogram) -> Dict[str, int]:
    """Per-class trial totals, one entry for every instruction class."""
    return {
        cls: sum(histogram.by_class.get(cls, {}).values()) for cls in INSTRUCTION_CLASSES
    }
