"""
CLI entry point for softflip.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from core import (
    BenchmarkDefectError,
    CampaignConfig,
    ConfigurationError,
    FaultModel,
    IRParseError,
    PlanBudget,
    ReliabilityPlan,
    ReliabilityPlanner,
    ReportIOError,
    Selector,
    TechParams,
    emit_report,
    golden_run,
    list_benchmarks,
    load_benchmark,
    load_config,
    load_report,
    profile,
    save_config,
    setup_logger,
)
from core.benchmarks import demo_budget
from core.campaign import (
    ARCHITECTURES,
    BASELINE,
    DEFAULT_TRIALS,
    PROTECTED,
    REPORT_FORMATS,
    run_campaign,
    run_corpus,
    run_paired,
    run_width_sweep,
    summarize,
)
from core.injector import SELECTOR_NAMES
from core.profiler import primitive_table, time_shares
from core.vm import HANG_FLOOR

COMMANDS = ["golden", "profile", "plan", "campaign", "compare", "summarize"]
DEFAULT_OUTPUT_DIR = "softflip_output"

EXIT_OK = 0
EXIT_INTERRUPTED = 1
EXIT_CONFIG = 2
EXIT_DEFECT = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Soft-error fault injection campaigns on multithreaded IR benchmarks",
        prog="softflip"
    )

    parser.add_argument(
        "command",
        choices=COMMANDS,
        help="Command to execute"
    )

    parser.add_argument(
        "--benchmark",
        type=str,
        default="factorial",
        help=f"Benchmark name ({', '.join(list_benchmarks())}; 'all' for campaign)"
    )

    parser.add_argument(
        "--input",
        type=str,
        default="",
        help="Comma-separated input words overriding the benchmark's 'input' global"
    )

    parser.add_argument(
        "--seed",
        type=int,
        default=0,
        help="Master seed for fault draws (default: 0)"
    )

    parser.add_argument(
        "--sched-seed",
        type=int,
        default=0,
        help="Scheduler seed fixing the thread interleaving (default: 0)"
    )

    parser.add_argument(
        "--trials",
        type=int,
        default=DEFAULT_TRIALS,
        help=f"Number of fault-injection trials (default: {DEFAULT_TRIALS})"
    )

    parser.add_argument(
        "--model",
        choices=["seu", "mbu"],
        default="seu",
        help="Fault model (default: seu)"
    )

    parser.add_argument(
        "--model-config",
        type=str,
        help="JSON fault model block, e.g. {\"kind\":\"mbu\",\"widths\":{\"2\":0.5,\"3\":0.5}}"
    )

    parser.add_argument(
        "--select",
        choices=list(SELECTOR_NAMES),
        default="all",
        help="Instruction classes eligible for faults (default: all)"
    )

    parser.add_argument(
        "--arch",
        choices=list(ARCHITECTURES),
        default=BASELINE,
        help="Architecture for the campaign command (default: baseline)"
    )

    parser.add_argument(
        "--plan",
        type=str,
        help="Reliability plan JSON (from the plan command)"
    )

    parser.add_argument(
        "--budget",
        type=str,
        help="Plan budget JSON (default: the shipped demo budget)"
    )

    parser.add_argument(
        "--tech",
        type=str,
        help="Technology parameters JSON (latencies and energies)"
    )

    parser.add_argument(
        "--widths",
        type=str,
        help="Comma-separated fixed fault widths for a severity sweep, e.g. 1,2,3,4"
    )

    parser.add_argument(
        "--exhaustive",
        action="store_true",
        help="Enumerate every single-bit fault instead of sampling"
    )

    parser.add_argument(
        "--hang-floor",
        type=int,
        default=HANG_FLOOR,
        help=f"Minimum instruction budget before a trial counts as hung (default: {HANG_FLOOR})"
    )

    parser.add_argument(
        "--workers",
        type=int,
        help="Parallel trial workers (default: CPU count, capped by SOFTFLIP_WORKERS)"
    )

    parser.add_argument(
        "--report",
        type=str,
        help="Report file to read (summarize)"
    )

    parser.add_argument(
        "--out",
        type=str,
        help=f"Output path (default: ./{DEFAULT_OUTPUT_DIR}/<command>_<benchmark>.<format>)"
    )

    parser.add_argument(
        "--format",
        choices=list(REPORT_FORMATS),
        default="json",
        help="Report format (default: json)"
    )

    parser.add_argument(
        "--log-file",
        type=str,
        help="Also write log output to this file"
    )

    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Enable verbose logging"
    )

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Setup logging
    log_level = "DEBUG" if args.verbose else "INFO"
    logger = setup_logger("softflip", level=log_level, log_file=args.log_file)

    handlers = {
        "golden": run_golden,
        "profile": run_profile,
        "plan": run_plan,
        "campaign": run_campaign_command,
        "compare": run_compare,
        "summarize": run_summarize,
    }

    try:
        handlers[args.command](args, logger)
        return EXIT_OK
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_INTERRUPTED
    except (ConfigurationError, ReportIOError, IRParseError) as e:
        logger.error(f"Configuration error: {e}")
        _maybe_traceback(args)
        return EXIT_CONFIG
    except BenchmarkDefectError as e:
        logger.error(str(e))
        _maybe_traceback(args)
        return EXIT_DEFECT
    except Exception as e:
        logger.error(f"{args.command} failed: {e}")
        _maybe_traceback(args)
        return EXIT_INTERRUPTED


def _maybe_traceback(args: argparse.Namespace) -> None:
    if args.verbose:
        import traceback
        traceback.print_exc()


# ---------------------------------------------------------------------------
# Argument helpers

def parse_word_list(text: str, what: str) -> List[int]:
    if not text:
        return []
    try:
        return [int(token, 0) for token in text.split(",") if token.strip()]
    except ValueError:
        raise ConfigurationError(f"invalid {what} list '{text}'") from None


def output_path(args: argparse.Namespace, stem: str, fmt: Optional[str] = None) -> Path:
    if args.out:
        return Path(args.out)
    return Path(DEFAULT_OUTPUT_DIR) / f"{stem}.{fmt or args.format}"


def fault_model(args: argparse.Namespace) -> FaultModel:
    # --model-config wins over --model
    if args.model_config:
        return FaultModel.from_dict(load_config(args.model_config))
    return FaultModel.named(args.model)


def tech_params(args: argparse.Namespace) -> TechParams:
    return TechParams.from_dict(load_config(args.tech)) if args.tech else TechParams()


def plan_budget(args: argparse.Namespace) -> PlanBudget:
    return PlanBudget.from_dict(load_config(args.budget) if args.budget else demo_budget())


def resolve_plan(args: argparse.Namespace, benchmark: str, logger: logging.Logger) -> ReliabilityPlan:
    """Plan from --plan, or built on the spot from --budget."""
    program = load_benchmark(benchmark)
    if args.plan:
        logger.info(f"Loading plan from {args.plan}")
        return ReliabilityPlan.from_dict(load_config(args.plan), program)
    inputs = parse_word_list(args.input, "input")
    report = profile(program, inputs, args.sched_seed, benchmark)
    planner = ReliabilityPlanner(program, report, tech_params(args))
    return planner.plan(plan_budget(args), Selector.named(args.select))


def campaign_config(args: argparse.Namespace, benchmark: str,
                    plan: Optional[ReliabilityPlan] = None) -> CampaignConfig:
    return CampaignConfig(
        benchmark=benchmark,
        trials=args.trials,
        model=fault_model(args),
        selector=Selector.named(args.select),
        master_seed=args.seed,
        input_words=tuple(parse_word_list(args.input, "input")),
        sched_seed=args.sched_seed,
        plan=plan,
        exhaustive=args.exhaustive,
        hang_floor=args.hang_floor,
        workers=args.workers,
    )


# ---------------------------------------------------------------------------
# Commands

def run_golden(args: argparse.Namespace, logger: logging.Logger) -> None:
    """Fault-free reference run."""
    program = load_benchmark(args.benchmark)
    golden = golden_run(program, parse_word_list(args.input, "input"), args.sched_seed,
                        args.benchmark)
    sys.stdout.write(golden.output.decode("ascii"))
    print(f"🏁 {args.benchmark}: halted after {golden.dynamic_count} instructions, "
          f"trace {golden.result.trace_digest:016x}")
    if args.out:
        save_config({**golden.to_dict(), "output": golden.output.decode("ascii")}, args.out)
        logger.info(f"Golden record saved to {args.out}")


def run_profile(args: argparse.Namespace, logger: logging.Logger) -> None:
    """Call counts and inclusive/exclusive time shares."""
    program = load_benchmark(args.benchmark)
    report = profile(program, parse_word_list(args.input, "input"), args.sched_seed,
                     args.benchmark)
    shares = time_shares(report)
    primitives = primitive_table(report)
    print(shares.to_string(index=False))
    if not primitives.empty:
        print()
        print(primitives.to_string(index=False))
    path = output_path(args, f"profile_{args.benchmark}")
    if args.format == "csv":
        # primitive counts live in a sibling file
        primitives_path = path.with_name(f"{path.stem}_primitives{path.suffix}")
        for frame, target in ((shares, path), (primitives, primitives_path)):
            try:
                target.parent.mkdir(parents=True, exist_ok=True)
                frame.to_csv(target, index=False)
            except OSError as e:
                raise ReportIOError(str(target), str(e)) from None
        logger.info(f"Primitive call counts saved to {primitives_path}")
    else:
        save_config(report.to_dict(), path)
    logger.info(f"Profile saved to {path}")


def run_plan(args: argparse.Namespace, logger: logging.Logger) -> None:
    """Build a reliability plan under a budget."""
    program = load_benchmark(args.benchmark)
    report = profile(program, parse_word_list(args.input, "input"), args.sched_seed,
                     args.benchmark)
    planner = ReliabilityPlanner(program, report, tech_params(args))
    plan = planner.plan(plan_budget(args), Selector.named(args.select))
    overhead = planner.overhead(plan)
    print(f"🛡️  {len(plan.reliable_sites)}/{program.static_count} sites, "
          f"{len(plan.reliable_registers)} registers, {plan.rmap.reliable_words} memory words "
          f"reliable; coverage {plan.coverage:.1%}, slowdown {overhead.slowdown:.3f}")
    path = output_path(args, f"plan_{args.benchmark}", "json")
    save_config({**plan.to_dict(), "overhead": overhead.to_dict()}, path)
    logger.info(f"Plan saved to {path}")


def run_campaign_command(args: argparse.Namespace, logger: logging.Logger) -> None:
    """Monte Carlo (or exhaustive) fault-injection campaign."""
    if args.benchmark == "all":
        if args.arch == PROTECTED:
            raise ConfigurationError("a protected corpus run needs one plan per benchmark")
        corpus = run_corpus(campaign_config(args, list_benchmarks()[0]))
        for name, report in corpus.reports.items():
            print(f"📊 {name}: {_rates(report.histogram.to_dict())}")
        for note in corpus.notes:
            print(f"⚠️  {note}")
        emit_report(corpus, output_path(args, "campaign_all"), args.format)
        return

    plan = resolve_plan(args, args.benchmark, logger) if args.arch == PROTECTED else None
    cfg = campaign_config(args, args.benchmark, plan)
    if args.widths:
        sweep = run_width_sweep(cfg, parse_word_list(args.widths, "width"))
        for width, rate in sweep.rates().items():
            print(f"📊 width {width}: non-benign {rate:.3f}")
        for note in sweep.notes:
            print(f"⚠️  {note}")
        emit_report(sweep, output_path(args, f"widths_{args.benchmark}"), args.format)
        return

    report = run_campaign(cfg)
    print(f"📊 {args.benchmark} ({cfg.architecture}): {_rates(report.histogram.to_dict())}")
    for note in report.notes:
        print(f"⚠️  {note}")
    emit_report(report, output_path(args, f"campaign_{args.benchmark}_{cfg.architecture}"),
                args.format)


def run_compare(args: argparse.Namespace, logger: logging.Logger) -> None:
    """Paired baseline vs protected campaigns."""
    plan = resolve_plan(args, args.benchmark, logger)
    base, prot, delta = run_paired(campaign_config(args, args.benchmark), plan)
    print(f"📊 baseline:  {_rates(base.histogram.to_dict())}")
    print(f"📊 protected: {_rates(prot.histogram.to_dict())}")
    print(f"🛡️  relative reduction {delta.relative_reduction:.3f} "
          f"({delta.masked_trials}/{delta.trials} trials masked, coverage "
          f"{(delta.coverage or 0.0):.3f})")
    if not delta.masking_within_tolerance():
        logger.warning("Masked share is outside 3 sigma of the plan coverage")
    emit_report(delta, output_path(args, f"compare_{args.benchmark}"), args.format)


def run_summarize(args: argparse.Namespace, logger: logging.Logger) -> None:
    """Print the histogram of a saved report."""
    if not args.report:
        raise ConfigurationError("summarize needs --report PATH")
    histogram = summarize(load_report(args.report))
    print(json.dumps(histogram, indent=2, sort_keys=True))
    if args.out:
        save_config(histogram, args.out)
        logger.info(f"Summary saved to {args.out}")


def _rates(histogram: dict) -> str:
    percent = histogram["percent"]
    return (f"{histogram['total']} trials, crash {percent['crash']:.1f}%, "
            f"sdc {percent['sdc']:.1f}%, hang {percent['hang']:.1f}%, "
            f"benign {percent['benign']:.1f}%")


if __name__ == "__main__":
    sys.exit(main())
