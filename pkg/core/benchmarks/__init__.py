"""
The bundled benchmark corpus, authored in the softflip IR.
"""

import json
from functools import lru_cache
from importlib import resources
from typing import Dict, List

from ..errors import ConfigurationError
from ..ir import Program, parse_program

BENCHMARKS = (
    "blackscholes",
    "specrand",
    "mm",
    "qs",
    "factorial",
    "circular_buffer",
    "stack",
)

# Benchmarks whose SEU campaigns are expected to be SDC-heavy or crash-heavy.
SDC_DOMINANT = ("specrand", "factorial")
CRASH_DOMINANT = ("mm", "qs", "stack")
LEAST_SENSITIVE = "circular_buffer"

DEMO_BUDGET = "demo_budget.json"


def list_benchmarks() -> List[str]:
    return list(BENCHMARKS)


def benchmark_source(name: str) -> str:
    if name not in BENCHMARKS:
        raise ConfigurationError(
            f"unknown benchmark '{name}' (choose from {', '.join(BENCHMARKS)})")
    return resources.files(__name__).joinpath(f"{name}.ir").read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def load_benchmark(name: str) -> Program:
    """Parse a bundled benchmark; the result is shared and immutable."""
    return parse_program(benchmark_source(name))


def demo_budget() -> Dict[str, object]:
    """The shipped plan budget used by the resilience demo."""
    text = resources.files(__name__).joinpath(DEMO_BUDGET).read_text(encoding="utf-8")
    return json.loads(text)
