"""
Core module for softflip - the heart of all modules.
Contains the IR, the virtual machine, profiling, fault injection,
outcome classification, reliability planning and campaign orchestration.
"""

__version__ = "0.1.0"
__author__ = "softflip team"

from .errors import (
    SoftflipError,
    IRParseError,
    ConfigurationError,
    PairingError,
    BenchmarkDefectError,
    InvalidTrialError,
    ReportIOError,
)
from .ir import Program, parse_program, print_program, classify_opcode
from .vm import VirtualMachine, ReliabilityMap, Region, run, golden_run
from .profiler import Profiler, profile, time_shares, site_stats
from .injector import (
    FaultInjector,
    FaultModel,
    FaultSpec,
    Selector,
    apply_flip,
    draw_fault,
    enumerate_candidates,
    inject_run,
)
from .classifier import Outcome, OutcomeHistogram, classify, aggregate
from .planner import (
    ReliabilityPlanner,
    ReliabilityPlan,
    PlanBudget,
    TechParams,
    score_sites,
    build_plan,
    estimate_overhead,
    plan_coverage,
)
from .campaign import (
    CampaignRunner,
    CampaignConfig,
    CampaignReport,
    ResilienceDelta,
    run_campaign,
    compare_arch,
    emit_report,
    load_report,
)
from .benchmarks import load_benchmark, list_benchmarks
from .utils import setup_logger, load_config, save_config

__all__ = [
    "SoftflipError",
    "IRParseError",
    "ConfigurationError",
    "PairingError",
    "BenchmarkDefectError",
    "InvalidTrialError",
    "ReportIOError",
    "Program",
    "parse_program",
    "print_program",
    "classify_opcode",
    "VirtualMachine",
    "ReliabilityMap",
    "Region",
    "run",
    "golden_run",
    "Profiler",
    "profile",
    "time_shares",
    "site_stats",
    "FaultInjector",
    "FaultModel",
    "FaultSpec",
    "Selector",
    "apply_flip",
    "draw_fault",
    "enumerate_candidates",
    "inject_run",
    "Outcome",
    "OutcomeHistogram",
    "classify",
    "aggregate",
    "ReliabilityPlanner",
    "ReliabilityPlan",
    "PlanBudget",
    "TechParams",
    "score_sites",
    "build_plan",
    "estimate_overhead",
    "plan_coverage",
    "CampaignRunner",
    "CampaignConfig",
    "CampaignReport",
    "ResilienceDelta",
    "run_campaign",
    "compare_arch",
    "emit_report",
    "load_report",
    "load_benchmark",
    "list_benchmarks",
    "setup_logger",
    "load_config",
    "save_config",
]
