"""
Campaign orchestration: golden run, fault trials, architecture comparison
and report files.

Trial ``i`` draws its fault from ``derive_seed(master_seed, i)``, so a
campaign is fully determined by its configuration. Trials may run in
worker processes; results are merged back in trial order.
"""

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .benchmarks import (
    BENCHMARKS, CRASH_DOMINANT, LEAST_SENSITIVE, SDC_DOMINANT, load_benchmark,
)
from .classifier import CRASH, HANG, SDC, Outcome, OutcomeHistogram, aggregate, classify
from .errors import ConfigurationError, InvalidTrialError, PairingError, ReportIOError, SoftflipError
from .injector import SEU, FaultInjector, FaultModel, FaultSpec, Selector
from .planner import OverheadReport, ReliabilityPlan, estimate_overhead, plan_coverage
from .profiler import profile as profile_program
from .utils import derive_seed, ensure_directory, worker_count
from .vm import (
    DEFAULT_BUDGET, DEFAULT_MEMORY_WORDS, EMPTY_MAP, HANG_FLOOR, INJECTION_MASKED,
    GoldenRecord, golden_run, hang_budget,
)

DEFAULT_TRIALS = 1000
BASELINE = "baseline"
PROTECTED = "protected"
ARCHITECTURES = (BASELINE, PROTECTED)
MAX_REDRAWS = 8
SIGMA_TOLERANCE = 3.0
CSV_COLUMNS = ["trial", "seed", "site", "instance", "start_bit", "width", "outcome", "detail"]
REPORT_FORMATS = ("json", "csv")


@dataclass(frozen=True)
class CampaignConfig:
    benchmark: str
    trials: int = DEFAULT_TRIALS
    model: FaultModel = field(default_factory=FaultModel.seu)
    selector: Selector = field(default_factory=lambda: Selector.named("all"))
    master_seed: int = 0
    input_words: Tuple[int, ...] = ()
    sched_seed: int = 0
    plan: Optional[ReliabilityPlan] = None
    exhaustive: bool = False
    hang_floor: int = HANG_FLOOR
    memory_words: int = DEFAULT_MEMORY_WORDS
    workers: Optional[int] = None

    def __post_init__(self) -> None:
        if self.benchmark not in BENCHMARKS:
            raise ConfigurationError(
                f"unknown benchmark '{self.benchmark}' (choose from {', '.join(BENCHMARKS)})")
        if self.trials < 1 and not self.exhaustive:
            raise ConfigurationError("trials must be at least 1")
        if self.exhaustive and self.model.kind != "seu":
            raise ConfigurationError("exhaustive campaigns enumerate single-bit faults only")
        if self.master_seed < 0 or self.master_seed >= 1 << 64:
            raise ConfigurationError("master seed must be an unsigned 64-bit integer")
        if self.hang_floor < 1:
            raise ConfigurationError("hang floor must be positive")
        object.__setattr__(self, "input_words", tuple(self.input_words))

    @property
    def architecture(self) -> str:
        return PROTECTED if self.plan is not None else BASELINE

    def to_dict(self) -> Dict[str, object]:
        """Config echo, without the worker count."""
        return {
            "benchmark": self.benchmark,
            "trials": self.trials,
            "model": self.model.to_dict(),
            "selector": self.selector.to_dict(),
            "master_seed": self.master_seed,
            "input": list(self.input_words),
            "sched_seed": self.sched_seed,
            "architecture": self.architecture,
            "plan": self.plan.to_dict() if self.plan is not None else None,
            "exhaustive": self.exhaustive,
            "hang_floor": self.hang_floor,
            "memory_words": self.memory_words,
        }


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: Optional[int]
    fault: FaultSpec
    outcome: Outcome
    injection: Optional[str] = None
    redraws: int = 0

    @property
    def masked(self) -> bool:
        return self.injection == INJECTION_MASKED

    def to_row(self) -> Dict[str, object]:
        return {
            "trial": self.trial,
            "seed": self.seed,
            "site": self.fault.site_id,
            "instance": self.fault.dynamic_instance,
            "start_bit": self.fault.start_bit,
            "width": self.fault.width,
            "outcome": self.outcome.tag,
            "detail": self.outcome.detail,
        }

    def to_dict(self) -> Dict[str, object]:
        return {**self.to_row(), "injection": self.injection, "redraws": self.redraws}

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "TrialRecord":
        seed = data.get("seed")
        fault = FaultSpec(
            int(data["site"]), int(data["instance"]),  # type: ignore[arg-type]
            int(data["start_bit"]), int(data["width"]),  # type: ignore[arg-type]
            int(seed) if seed is not None else None,  # type: ignore[arg-type]
        )
        return cls(
            trial=int(data["trial"]),  # type: ignore[arg-type]
            seed=fault.seed,
            fault=fault,
            outcome=Outcome(str(data["outcome"]), _parse_detail(data.get("detail"))),
            injection=data.get("injection"),  # type: ignore[arg-type]
            redraws=int(data.get("redraws", 0)),  # type: ignore[arg-type]
        )


def _parse_detail(raw: object) -> Optional[Union[str, int]]:
    if raw is None or (isinstance(raw, float) and math.isnan(raw)) or raw == "":
        return None
    if isinstance(raw, (int, np.integer)):
        return int(raw)
    if isinstance(raw, float) and raw.is_integer():
        return int(raw)
    text = str(raw)
    return int(text) if text.isdigit() else text


@dataclass
class CampaignReport:
    config: Dict[str, object]
    histogram: OutcomeHistogram
    trials: List[TrialRecord]
    golden: Dict[str, object]
    overhead: Optional[OverheadReport] = None
    coverage: Optional[float] = None
    wall_clock: float = 0.0
    notes: List[str] = field(default_factory=list)

    @property
    def benchmark(self) -> str:
        return str(self.config["benchmark"])

    @property
    def architecture(self) -> str:
        return str(self.config.get("architecture", BASELINE))

    @property
    def masked_trials(self) -> int:
        return sum(1 for t in self.trials if t.masked)

    def to_dict(self, include_wall_clock: bool = True) -> Dict[str, object]:
        data: Dict[str, object] = {
            "config": self.config,
            "golden": self.golden,
            "histogram": self.histogram.to_dict(),
            "masked_trials": self.masked_trials,
            "coverage": self.coverage,
            "overhead": self.overhead.to_dict() if self.overhead is not None else None,
            "notes": list(self.notes),
            "trials": [t.to_dict() for t in self.trials],
        }
        if include_wall_clock:
            data["wall_clock"] = self.wall_clock
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "CampaignReport":
        try:
            overhead = data.get("overhead")
            return cls(
                config=dict(data["config"]),  # type: ignore[call-overload]
                histogram=OutcomeHistogram.from_dict(data["histogram"]),  # type: ignore[arg-type]
                trials=[TrialRecord.from_dict(t) for t in data.get("trials", [])],  # type: ignore[union-attr]
                golden=dict(data.get("golden") or {}),  # type: ignore[call-overload]
                overhead=OverheadReport(**overhead) if overhead else None,  # type: ignore[arg-type]
                coverage=data.get("coverage"),  # type: ignore[arg-type]
                wall_clock=float(data.get("wall_clock", 0.0)),  # type: ignore[arg-type]
                notes=list(data.get("notes", [])),  # type: ignore[call-overload]
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"malformed campaign report: {e}") from None


@dataclass(frozen=True)
class ResilienceDelta:
    benchmark: str
    trials: int
    baseline_non_benign_rate: float
    protected_non_benign_rate: float
    relative_reduction: float
    masked_trials: int
    coverage: Optional[float] = None
    changed_unmasked: int = 0

    @property
    def masking_fraction(self) -> float:
        return self.masked_trials / self.trials if self.trials else 0.0

    def masking_within_tolerance(self, sigmas: float = SIGMA_TOLERANCE) -> bool:
        """Masked share agrees with plan coverage q within sigmas * sqrt(q(1-q)/n)."""
        if self.coverage is None:
            return True
        return abs(self.masking_fraction - self.coverage) <= sigmas * binomial_sigma(
            self.coverage, self.trials) + 1e-12

    def to_dict(self) -> Dict[str, object]:
        return {
            "benchmark": self.benchmark,
            "trials": self.trials,
            "baseline_non_benign_rate": self.baseline_non_benign_rate,
            "protected_non_benign_rate": self.protected_non_benign_rate,
            "relative_reduction": self.relative_reduction,
            "masked_trials": self.masked_trials,
            "masking_fraction": self.masking_fraction,
            "coverage": self.coverage,
            "changed_unmasked": self.changed_unmasked,
        }


@dataclass
class WidthSweep:
    benchmark: str
    reports: Dict[int, CampaignReport]
    notes: List[str] = field(default_factory=list)

    def rates(self) -> Dict[int, float]:
        return {w: r.histogram.non_benign_rate for w, r in sorted(self.reports.items())}

    @property
    def trend_holds(self) -> bool:
        return not self.notes

    def to_dict(self) -> Dict[str, object]:
        return {
            "benchmark": self.benchmark,
            "non_benign_rate": {str(w): rate for w, rate in self.rates().items()},
            "histograms": {str(w): r.histogram.to_dict() for w, r in sorted(self.reports.items())},
            "notes": list(self.notes),
        }


@dataclass
class CorpusReport:
    reports: Dict[str, CampaignReport]
    notes: List[str] = field(default_factory=list)

    def to_dict(self, include_wall_clock: bool = True) -> Dict[str, object]:
        return {
            "benchmarks": {
                name: report.to_dict(include_wall_clock) for name, report in self.reports.items()
            },
            "notes": list(self.notes),
        }


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n) if n else 0.0


# ---------------------------------------------------------------------------
# Trial execution

@dataclass(frozen=True)
class _TrialContext:
    benchmark: str
    golden: GoldenRecord
    selector: Selector
    model: FaultModel
    plan: Optional[ReliabilityPlan]
    budget: int
    master_seed: int
    memory_words: int


_worker_injector: Optional[FaultInjector] = None
_worker_context: Optional[_TrialContext] = None


def _make_injector(context: _TrialContext) -> FaultInjector:
    return FaultInjector(
        load_benchmark(context.benchmark), context.golden, context.selector,
        context.model, context.budget, context.memory_words)


def _init_worker(context: _TrialContext) -> None:
    global _worker_injector, _worker_context
    _worker_context = context
    _worker_injector = _make_injector(context)


def _run_trial(injector: FaultInjector, context: _TrialContext, trial: int,
               fault: Optional[FaultSpec] = None) -> TrialRecord:
    rmap = context.plan.rmap if context.plan is not None else EMPTY_MAP
    logger = logging.getLogger(__name__)
    for attempt in range(MAX_REDRAWS):
        seed = None
        spec = fault
        if spec is None:
            seed = derive_seed(context.master_seed, trial, attempt)
            spec = injector.draw(seed)
        try:
            result = injector.inject(spec, rmap)
        except InvalidTrialError as e:
            logger.warning(f"Trial {trial}: {e}; redrawing")
            if fault is not None:
                raise
            continue
        outcome = classify(result, context.golden)
        return TrialRecord(trial, seed, spec, outcome, result.injection, attempt)
    raise SoftflipError(f"trial {trial}: no valid fault after {MAX_REDRAWS} draws")


def _run_chunk(chunk: Sequence[Tuple[int, Optional[FaultSpec]]]) -> List[TrialRecord]:
    assert _worker_injector is not None and _worker_context is not None
    return [_run_trial(_worker_injector, _worker_context, i, f) for i, f in chunk]


def _chunks(items: Sequence, size: int) -> Iterable[Sequence]:
    for start in range(0, len(items), size):
        yield items[start:start + size]


class CampaignRunner:
    """Runs one campaign configuration end to end."""

    def __init__(self, config: CampaignConfig):
        self.config = config
        self.logger = logging.getLogger(__name__)

    def run(self) -> CampaignReport:
        cfg = self.config
        started = time.perf_counter()
        program = load_benchmark(cfg.benchmark)
        golden = golden_run(
            program, cfg.input_words, cfg.sched_seed, cfg.benchmark,
            DEFAULT_BUDGET, cfg.memory_words)
        budget = hang_budget(golden.dynamic_count, cfg.hang_floor)
        self.logger.info(
            f"Golden run of {cfg.benchmark}: {golden.dynamic_count} instructions, "
            f"{len(golden.output)} output bytes")

        context = _TrialContext(
            cfg.benchmark, golden, cfg.selector, cfg.model, cfg.plan, budget,
            cfg.master_seed, cfg.memory_words)
        injector = _make_injector(context)

        work: List[Tuple[int, Optional[FaultSpec]]]
        if cfg.exhaustive:
            work = list(enumerate(injector.exhaustive_faults()))
        else:
            work = [(i, None) for i in range(cfg.trials)]

        workers = min(cfg.workers or worker_count(), max(1, len(work)))
        self.logger.info(
            f"Dispatching {len(work)} {cfg.architecture} trials "
            f"({cfg.model.kind}, selector {cfg.selector.name}) on {workers} worker(s)")
        records = self._execute(injector, context, work, workers)

        histogram = aggregate(((r.fault, r.outcome) for r in records), program)
        overhead = coverage = None
        if cfg.plan is not None:
            prof = profile_program(
                program, cfg.input_words, cfg.sched_seed, cfg.benchmark,
                DEFAULT_BUDGET, cfg.memory_words)
            overhead = estimate_overhead(prof, cfg.plan)
            coverage = plan_coverage(cfg.plan, program, prof, cfg.selector)

        echo = cfg.to_dict()
        echo["trials"] = len(work)
        golden_info = golden.to_dict()
        golden_info["hang_budget"] = budget
        report = CampaignReport(
            config=echo,
            histogram=histogram,
            trials=records,
            golden=golden_info,
            overhead=overhead,
            coverage=coverage,
            wall_clock=time.perf_counter() - started,
        )
        if cfg.plan is None and cfg.model.kind == SEU and cfg.selector.name == "all":
            note = ordering_note(cfg.benchmark, histogram)
            if note is not None:
                self.logger.warning(note)
                report.notes.append(note)
        self.logger.info(
            f"{cfg.benchmark}: {histogram.non_benign}/{histogram.total} non-benign "
            f"(crash {histogram.counts[CRASH]}, sdc {histogram.counts[SDC]}, "
            f"hang {histogram.counts[HANG]})")
        return report

    def _execute(self, injector: FaultInjector, context: _TrialContext,
                 work: List[Tuple[int, Optional[FaultSpec]]], workers: int) -> List[TrialRecord]:
        if workers <= 1:
            records = [_run_trial(injector, context, i, f) for i, f in work]
        else:
            size = max(1, math.ceil(len(work) / (workers * 4)))
            with ProcessPoolExecutor(
                    max_workers=workers, initializer=_init_worker, initargs=(context,)) as pool:
                records = [r for chunk in pool.map(_run_chunk, _chunks(work, size)) for r in chunk]
        for record in records:
            self.logger.debug(
                f"trial {record.trial}: site {record.fault.site_id}#{record.fault.dynamic_instance} "
                f"bits {record.fault.start_bit}+{record.fault.width} -> {record.outcome.tag}")
        return records


def run_campaign(cfg: CampaignConfig) -> CampaignReport:
    return CampaignRunner(cfg).run()


def _check_pairing(base: CampaignReport, prot: CampaignReport) -> None:
    for key in ("benchmark", "model", "selector", "master_seed", "input", "sched_seed",
                "trials", "exhaustive"):
        if base.config.get(key) != prot.config.get(key):
            raise PairingError(f"reports differ in '{key}'; campaigns are not paired")
    if base.architecture != BASELINE or prot.architecture != PROTECTED:
        raise PairingError("compare needs a baseline report and a protected report")
    if len(base.trials) != len(prot.trials):
        raise PairingError("reports have different trial counts")
    for b, p in zip(base.trials, prot.trials):
        if b.trial != p.trial or b.seed != p.seed or b.fault != p.fault:
            raise PairingError(f"trial {b.trial} was drawn with a different seed or fault")


def compare_arch(base: CampaignReport, prot: CampaignReport) -> ResilienceDelta:
    """Paired comparison of a baseline and a protected campaign."""
    _check_pairing(base, prot)
    logger = logging.getLogger(__name__)
    changed = 0
    for b, p in zip(base.trials, prot.trials):
        if p.masked:
            if not p.outcome.benign:
                raise SoftflipError(
                    f"trial {p.trial}: masked fault produced {p.outcome.tag}")
        elif p.outcome != b.outcome:
            changed += 1
    if changed:
        logger.warning(f"{changed} unmasked trials changed outcome between architectures")

    base_rate = base.histogram.non_benign_rate
    prot_rate = prot.histogram.non_benign_rate
    reduction = 1.0 - prot_rate / base_rate if base_rate > 0 else 0.0
    return ResilienceDelta(
        benchmark=base.benchmark,
        trials=len(base.trials),
        baseline_non_benign_rate=base_rate,
        protected_non_benign_rate=prot_rate,
        relative_reduction=reduction,
        masked_trials=prot.masked_trials,
        coverage=prot.coverage,
        changed_unmasked=changed,
    )


def run_paired(cfg: CampaignConfig, plan: ReliabilityPlan) -> Tuple[CampaignReport, CampaignReport, ResilienceDelta]:
    """Baseline and protected campaigns over the same seeds, plus their delta."""
    base = run_campaign(replace(cfg, plan=None))
    prot = run_campaign(replace(cfg, plan=plan))
    return base, prot, compare_arch(base, prot)


def run_width_sweep(cfg: CampaignConfig, widths: Sequence[int]) -> WidthSweep:
    """Fixed-width campaigns sharing seeds; flags drops beyond 3 sigma."""
    if not widths:
        raise ConfigurationError("width sweep needs at least one width")
    reports = {w: run_campaign(replace(cfg, model=FaultModel.fixed(w))) for w in sorted(set(widths))}
    sweep = WidthSweep(cfg.benchmark, reports)
    ordered = sorted(reports)
    for narrow, wide in zip(ordered, ordered[1:]):
        p_narrow = reports[narrow].histogram.non_benign_rate
        p_wide = reports[wide].histogram.non_benign_rate
        n = reports[wide].histogram.total
        slack = SIGMA_TOLERANCE * math.sqrt(
            binomial_sigma(p_narrow, n) ** 2 + binomial_sigma(p_wide, n) ** 2)
        if p_wide < p_narrow - slack:
            sweep.notes.append(
                f"{cfg.benchmark}: non-benign rate drops from {p_narrow:.3f} at width "
                f"{narrow} to {p_wide:.3f} at width {wide} (beyond 3 sigma)")
    for note in sweep.notes:
        logging.getLogger(__name__).warning(note)
    return sweep


def ordering_note(name: str, hist: OutcomeHistogram) -> Optional[str]:
    """Note when a benchmark's SDC/crash ordering misses its expected one by 3 sigma."""
    n = hist.total
    sdc, crash = hist.rate(SDC), hist.rate(CRASH)
    slack = SIGMA_TOLERANCE * math.sqrt(
        binomial_sigma(sdc, n) ** 2 + binomial_sigma(crash, n) ** 2)
    if name in SDC_DOMINANT and sdc < crash - slack:
        return f"{name}: expected SDC >= crash, measured sdc {sdc:.3f} < crash {crash:.3f}"
    if name in CRASH_DOMINANT and crash < sdc - slack:
        return f"{name}: expected crash >= SDC, measured crash {crash:.3f} < sdc {sdc:.3f}"
    return None


def behavior_notes(histograms: Dict[str, OutcomeHistogram]) -> List[str]:
    """Compare SDC/crash ordering with the expected per-benchmark behavior."""
    notes = [note for note in (ordering_note(name, hist) for name, hist in histograms.items())
             if note is not None]
    if LEAST_SENSITIVE in histograms and len(histograms) > 1:
        rates = {name: h.non_benign_rate for name, h in histograms.items()}
        lowest = min(rates, key=lambda name: (rates[name], name))
        if lowest != LEAST_SENSITIVE:
            notes.append(
                f"{LEAST_SENSITIVE}: expected the lowest non-benign rate "
                f"({rates[LEAST_SENSITIVE]:.3f}), but {lowest} is lower ({rates[lowest]:.3f})")
    return notes


def run_corpus(cfg: CampaignConfig, benchmarks: Sequence[str] = BENCHMARKS) -> CorpusReport:
    """Same campaign settings over several benchmarks, with behavior notes."""
    reports = {name: run_campaign(replace(cfg, benchmark=name)) for name in benchmarks}
    notes = behavior_notes({name: r.histogram for name, r in reports.items()})
    for note in notes:
        report = reports[note.split(":", 1)[0]]
        if note not in report.notes:
            logging.getLogger(__name__).warning(note)
            report.notes.append(note)
    return CorpusReport(reports, notes)


# ---------------------------------------------------------------------------
# Report files

Emittable = Union[CampaignReport, ResilienceDelta, WidthSweep, CorpusReport]


def report_frame(report: CampaignReport) -> pd.DataFrame:
    """One row per trial, in CSV column order."""
    # object dtype keeps int details and 64-bit seeds from turning into floats
    return pd.DataFrame([t.to_row() for t in report.trials], columns=CSV_COLUMNS, dtype=object)


def emit_report(report: Emittable, path: Union[str, Path], fmt: str = "json") -> Path:
    """Write ``report`` as JSON or CSV; I/O failures name the path."""
    if fmt not in REPORT_FORMATS:
        raise ConfigurationError(f"unknown report format '{fmt}'")
    target = Path(path)
    try:
        if target.parent != Path(""):
            ensure_directory(target.parent)
        if fmt == "json":
            with open(target, "w", encoding="utf-8") as f:
                json.dump(report.to_dict(), f, indent=2, sort_keys=True)
                f.write("\n")
        elif isinstance(report, CampaignReport):
            report_frame(report).to_csv(target, index=False)
        elif isinstance(report, ResilienceDelta):
            pd.DataFrame([report.to_dict()]).to_csv(target, index=False)
        elif isinstance(report, WidthSweep):
            rows = [
                {"width": w, "non_benign_rate": r.histogram.non_benign_rate, **r.histogram.counts}
                for w, r in sorted(report.reports.items())
            ]
            pd.DataFrame(rows).to_csv(target, index=False)
        else:
            raise ConfigurationError("CSV output needs a single benchmark report")
    except OSError as e:
        raise ReportIOError(str(target), str(e)) from None
    logging.getLogger(__name__).info(f"Report written to {target}")
    return target


def load_report(path: Union[str, Path]) -> CampaignReport:
    """Read a campaign report back from JSON or per-trial CSV."""
    source = Path(path)
    if not source.exists():
        raise ReportIOError(str(source), "no such file")
    try:
        if source.suffix.lower() == ".csv":
            return _report_from_frame(pd.read_csv(source, dtype={"seed": str, "detail": str}))
        with open(source, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ReportIOError(str(source), str(e)) from None
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{source} is not a JSON report: {e}") from None
    return CampaignReport.from_dict(data)


def _report_from_frame(frame: pd.DataFrame) -> CampaignReport:
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigurationError(f"CSV report lacks columns {missing}")
    frame = frame.astype(object).where(frame.notna(), None)
    trials = [TrialRecord.from_dict(row) for row in frame.to_dict(orient="records")]
    return CampaignReport(config={}, histogram=_trial_histogram(trials), trials=trials, golden={})


def _trial_histogram(trials: Sequence[TrialRecord]) -> OutcomeHistogram:
    """Outcome and width counts; instruction classes need the program."""
    histogram = OutcomeHistogram()
    for record in trials:
        histogram.counts[record.outcome.tag] += 1
        histogram.by_width.setdefault(record.fault.width, {t: 0 for t in histogram.counts})[
            record.outcome.tag] += 1
    return histogram


def summarize(report: CampaignReport) -> Dict[str, object]:
    """Histogram of a report, re-aggregated from its per-trial log when present."""
    if report.trials:
        histogram = _trial_histogram(report.trials)
        if report.histogram.by_class:
            histogram.by_class = {k: dict(v) for k, v in report.histogram.by_class.items()}
        if histogram.counts != report.histogram.counts:
            raise ConfigurationError("report histogram does not match its trial log")
        return histogram.to_dict()
    return report.histogram.to_dict()
