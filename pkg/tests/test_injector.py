"""
Tests for fault models, candidate selection, fault draws and injection runs.
"""

import unittest

from hypothesis import given, strategies as st

from core.benchmarks import load_benchmark
from core.classifier import BENIGN, CRASH, SDC, classify
from core.errors import ConfigurationError, InvalidTrialError
from core.injector import (
    MBU, SEU, CandidateSet, FaultInjector, FaultModel, FaultSpec, Selector,
    apply_flip, draw_fault, enumerate_candidates, enumerate_seu_faults, flip_mask,
    inject_run,
)
from core.ir import ARITHMETIC, LOAD_STORE, parse_program
from core.utils import MASK64
from core.vm import (
    CRASHED, FNV_OFFSET, FNV_PRIME, HALTED, INJECTION_APPLIED, INJECTION_MASKED, OOB_MEMORY,
    ExecutionObserver, ReliabilityMap, VirtualMachine, golden_run,
)

words = st.integers(0, (1 << 64) - 1)
windows = st.integers(1, 64).flatmap(
    lambda width: st.tuples(st.integers(0, 64 - width), st.just(width)))


class TestApplyFlip(unittest.TestCase):
    """Test the bit-flip primitive."""

    def test_examples(self):
        """Test known flips."""
        self.assertEqual(apply_flip(0, 0, 1), 1)
        self.assertEqual(apply_flip(0xFF, 4, 4), 0x0F)
        self.assertEqual(apply_flip(0, 63, 1), 1 << 63)
        self.assertEqual(apply_flip(0, 0, 64), (1 << 64) - 1)

    def test_invalid_windows(self):
        """Test windows outside the word are rejected."""
        for start, width in ((63, 2), (-1, 1), (0, 0), (0, 65)):
            with self.assertRaises(ValueError):
                apply_flip(0, start, width)

    @given(words, windows)
    def test_involution(self, word, window):
        """Test flipping twice restores the word."""
        start, width = window
        self.assertEqual(apply_flip(apply_flip(word, start, width), start, width), word)

    @given(words, windows)
    def test_locality(self, word, window):
        """Test exactly the window's bits change."""
        start, width = window
        changed = apply_flip(word, start, width) ^ word
        self.assertEqual(changed, flip_mask(start, width))
        self.assertEqual(bin(changed).count("1"), width)


class TestSelector(unittest.TestCase):
    """Test site selectors."""

    def test_named(self):
        """Test the named selectors."""
        self.assertEqual(Selector.named("arith").class_filter, frozenset({ARITHMETIC}))
        self.assertEqual(Selector.named("loadstore").name, "loadstore")
        self.assertEqual(Selector.named("all").name, "all")

    def test_unknown_name(self):
        """Test unknown selector names."""
        with self.assertRaises(ConfigurationError):
            Selector.named("branches")

    def test_empty_classes(self):
        """Test a selector must admit some class."""
        with self.assertRaises(ConfigurationError):
            Selector(frozenset())

    def test_site_filter_intersects(self):
        """Test site filters narrow the class filter."""
        selector = Selector(frozenset({ARITHMETIC}), frozenset({3}))
        self.assertTrue(selector.matches(ARITHMETIC, 3))
        self.assertFalse(selector.matches(ARITHMETIC, 4))
        self.assertFalse(selector.matches(LOAD_STORE, 3))
        self.assertEqual(selector.name, "custom")


class TestFaultModel(unittest.TestCase):
    """Test fault model construction and validation."""

    def test_seu(self):
        """Test the single-bit model."""
        model = FaultModel.seu()
        self.assertEqual(model.kind, SEU)
        self.assertEqual(model.to_dict(), {"kind": "seu"})

    def test_mbu_from_dict(self):
        """Test a width distribution block."""
        model = FaultModel.from_dict({"kind": "mbu", "widths": {"2": 0.34, "3": 0.33, "4": 0.33}})
        self.assertEqual(model.kind, MBU)
        self.assertEqual(model.widths, ((2, 0.34), (3, 0.33), (4, 0.33)))

    def test_mbu_default(self):
        """Test the default MBU distribution."""
        model = FaultModel.from_dict({"kind": "mbu"})
        self.assertEqual([w for w, _ in model.widths], [2, 3, 4])

    def test_fixed(self):
        """Test fixed-width models."""
        self.assertEqual(FaultModel.fixed(1), FaultModel.seu())
        self.assertEqual(FaultModel.fixed(3).widths, ((3, 1.0),))

    def test_invalid(self):
        """Test malformed models are configuration errors."""
        for data in ({"kind": "mbu", "widths": {"2": 0.5, "3": 0.4}},
                     {"kind": "mbu", "widths": {"9": 1.0}},
                     {"kind": "mbu", "widths": {"1": 1.0}},
                     {"kind": "mbu", "widths": {"2": -0.5, "3": 1.5}},
                     {"kind": "mbu", "widths": [2, 3]},
                     {"kind": "cosmic"}):
            with self.assertRaises(ConfigurationError, msg=str(data)):
                FaultModel.from_dict(data)
        with self.assertRaises(ConfigurationError):
            FaultModel(SEU, ((2, 1.0),))


class TestFaultSpec(unittest.TestCase):
    """Test fault specifications."""

    def test_kind_and_mask(self):
        """Test kind follows width."""
        self.assertEqual(FaultSpec(0, 0, 5, 1).kind, SEU)
        spec = FaultSpec(0, 0, 4, 3)
        self.assertEqual(spec.kind, MBU)
        self.assertEqual(spec.mask, 0b1110000)

    def test_invalid(self):
        """Test windows must fit the word."""
        with self.assertRaises(ValueError):
            FaultSpec(0, 0, 62, 4)
        with self.assertRaises(ValueError):
            FaultSpec(0, -1, 0, 1)


class TestCandidates(unittest.TestCase):
    """Test candidate enumeration."""

    def setUp(self):
        self.program = load_benchmark("factorial")
        self.golden = golden_run(self.program)

    def test_arith_candidates(self):
        """Test only mul and sub qualify under the arith selector."""
        candidates = enumerate_candidates(self.golden, self.program, Selector.named("arith"))
        self.assertEqual(candidates.as_dict(), {3: 5, 4: 5})
        self.assertEqual(candidates.total_instances, 10)

    def test_all_candidates(self):
        """Test branches and output never qualify."""
        candidates = enumerate_candidates(self.golden, self.program, Selector.named("all"))
        self.assertEqual(candidates.as_dict(), {0: 1, 1: 1, 3: 5, 4: 5})

    def test_empty_candidate_set(self):
        """Test a selector with no executed candidates is an error."""
        program = parse_program("fn main\n    movi r1, 3\n    print r1\n    halt\n")
        with self.assertRaises(ConfigurationError) as ctx:
            enumerate_candidates(golden_run(program), program, Selector.named("loadstore"))
        self.assertIn("empty candidate set", str(ctx.exception))

    def test_locate(self):
        """Test ordinals map onto (site, instance)."""
        candidates = CandidateSet(((3, 2), (7, 1), (9, 3)))
        located = [candidates.locate(i) for i in range(6)]
        self.assertEqual(located, [(3, 0), (3, 1), (7, 0), (9, 0), (9, 1), (9, 2)])
        with self.assertRaises(IndexError):
            candidates.locate(6)

    def test_exhaustive_enumeration(self):
        """Test every instance and bit appears once."""
        faults = list(enumerate_seu_faults(CandidateSet(((3, 2), (4, 1)))))
        self.assertEqual(len(faults), 3 * 64)
        self.assertEqual(len(set(faults)), 3 * 64)


class TestDrawFault(unittest.TestCase):
    """Test seeded fault draws."""

    def test_deterministic(self):
        """Test equal seeds draw equal faults."""
        candidates = CandidateSet(((3, 5), (4, 5)))
        for seed in range(20):
            self.assertEqual(draw_fault(candidates, FaultModel.mbu(), seed),
                             draw_fault(candidates, FaultModel.mbu(), seed))

    def test_single_candidate(self):
        """Test one candidate instance is always chosen."""
        candidates = CandidateSet(((6, 1),))
        for seed in range(10):
            spec = draw_fault(candidates, FaultModel.seu(), seed)
            self.assertEqual((spec.site_id, spec.dynamic_instance, spec.width), (6, 0, 1))
            self.assertEqual(spec.seed, seed)

    def test_mbu_widths(self):
        """Test MBU draws use widths from the distribution."""
        candidates = CandidateSet(((0, 100),))
        model = FaultModel.mbu({2: 0.5, 4: 0.5})
        widths = set()
        for seed in range(200):
            spec = draw_fault(candidates, model, seed)
            widths.add(spec.width)
            self.assertLessEqual(spec.start_bit + spec.width, 64)
        self.assertEqual(widths, {2, 4})

    def test_uniform_over_instances(self):
        """Test draws are uniform over dynamic instances, not sites."""
        candidates = CandidateSet(((0, 900), (1, 100)))
        n = 10_000
        hits = sum(draw_fault(candidates, FaultModel.seu(), seed).site_id == 0
                   for seed in range(n))
        expected = (0.9 * n, 0.1 * n)
        observed = (hits, n - hits)
        chi2 = sum((o - e) ** 2 / e for o, e in zip(observed, expected))
        # one degree of freedom, p = 0.001
        self.assertLess(chi2, 10.828)

    def test_empty_candidates(self):
        """Test drawing from nothing fails."""
        with self.assertRaises(ConfigurationError):
            draw_fault(CandidateSet(()), FaultModel.seu(), 0)


class TestInjectRun(unittest.TestCase):
    """Test single fault-injection runs."""

    def setUp(self):
        self.factorial = load_benchmark("factorial")
        self.golden = golden_run(self.factorial)

    def test_sdc(self):
        """Test a flip in the running product corrupts the output."""
        result = inject_run(self.factorial, (), 0, FaultSpec(3, 0, 0, 1))
        self.assertEqual(result.injection, INJECTION_APPLIED)
        self.assertEqual(classify(result, self.golden).tag, SDC)

    def test_dead_value_is_benign(self):
        """Test flipping an overwritten value has no effect."""
        program = parse_program(
            "fn main\n    movi r1, 5\n    movi r1, 7\n    print r1\n    halt\n")
        golden = golden_run(program)
        result = inject_run(program, (), 0, FaultSpec(0, 0, 10, 1))
        self.assertEqual(result.injection, INJECTION_APPLIED)
        self.assertEqual(classify(result, golden).tag, BENIGN)

    def test_unreached_instance(self):
        """Test targeting an instance that never executes."""
        with self.assertRaises(InvalidTrialError):
            inject_run(self.factorial, (), 0, FaultSpec(3, 5, 0, 1))

    def test_masked_by_reliable_register(self):
        """Test a protected destination register masks the fault."""
        rmap = ReliabilityMap(reliable_registers=frozenset({3}))
        result = inject_run(self.factorial, (), 0, FaultSpec(3, 1, 7, 1), rmap)
        self.assertEqual(result.injection, INJECTION_MASKED)
        self.assertEqual(result.output, self.golden.output)
        self.assertEqual(classify(result, self.golden).tag, BENIGN)

    def test_load_address_flip_crashes(self):
        """Test a high-bit flip of a load address crashes out of bounds."""
        program = load_benchmark("stack")
        golden = golden_run(program)
        site = next(ins.site_id for ins in program.function("main").body
                    if ins.opcode == "add" and ins.dest_register == 10)
        result = inject_run(program, (), 0, FaultSpec(site, 0, 63, 1))
        self.assertEqual(result.termination, CRASHED)
        self.assertEqual(result.cause, OOB_MEMORY)
        outcome = classify(result, golden)
        self.assertEqual((outcome.tag, outcome.detail), (CRASH, OOB_MEMORY))

        protected = inject_run(program, (), 0, FaultSpec(site, 0, 63, 1),
                               ReliabilityMap(reliable_registers=frozenset({10})))
        self.assertEqual(protected.termination, HALTED)
        self.assertEqual(protected.output, golden.output)

    def test_hang_budget(self):
        """Test a runaway loop counter is cut off by the budget."""
        # r2 is the loop counter; a high bit makes the loop effectively endless
        result = inject_run(self.factorial, (), 0, FaultSpec(4, 0, 40, 1), budget=500)
        self.assertEqual(result.dynamic_count, 500)
        self.assertTrue(result.hung)

    def test_default_budget_follows_golden(self):
        """Test the default budget is the golden run's hang budget."""
        spec = FaultSpec(4, 0, 62, 1)
        result = inject_run(self.factorial, (), 0, spec)
        self.assertTrue(result.hung)
        self.assertEqual(result.dynamic_count, self.golden.hang_budget())
        self.assertEqual(result.dynamic_count, 100_000)
        given_golden = inject_run(self.factorial, (), 0, spec, golden=self.golden)
        self.assertEqual(given_golden, result)


class TraceRecorder(ExecutionObserver):
    def __init__(self):
        self.trace = []

    def on_step(self, tid, site_id, address):
        self.trace.append((site_id, tid))


def fnv_digest(trace):
    digest = FNV_OFFSET
    for site_id, tid in trace:
        digest = ((digest ^ site_id) * FNV_PRIME) & MASK64
        digest = ((digest ^ tid) * FNV_PRIME) & MASK64
    return digest


class TestPrefixEquality(unittest.TestCase):
    """Test injected runs replay the golden trace up to the fault."""

    def setUp(self):
        self.program = load_benchmark("mm")
        self.golden = golden_run(self.program)
        recorder = TraceRecorder()
        VirtualMachine().run(self.program, observer=recorder)
        self.golden_trace = recorder.trace

    def test_digest_covers_site_and_thread(self):
        """Test the golden digest is FNV over the executed (site, tid) pairs."""
        self.assertEqual(len(self.golden_trace), self.golden.dynamic_count)
        self.assertEqual(fnv_digest(self.golden_trace), self.golden.result.trace_digest)

    def test_prefix_matches_golden(self):
        """Test everything up to the injected instance matches the golden run."""
        candidates = enumerate_candidates(self.golden, self.program, Selector.named("all"))
        for seed in range(8):
            spec = draw_fault(candidates, FaultModel.seu(), seed)
            position = [i for i, (site, _) in enumerate(self.golden_trace)
                        if site == spec.site_id][spec.dynamic_instance]
            recorder = TraceRecorder()
            inject_run(self.program, (), 0, spec, golden=self.golden, observer=recorder)
            prefix = self.golden_trace[:position + 1]
            self.assertEqual(recorder.trace[:position + 1], prefix, spec)
            self.assertEqual(fnv_digest(recorder.trace[:position + 1]), fnv_digest(prefix))


class TestFaultInjector(unittest.TestCase):
    """Test the bound injector."""

    def test_draw_and_inject(self):
        """Test drawn faults are valid and replayable."""
        program = load_benchmark("factorial")
        injector = FaultInjector(program, golden_run(program), Selector.named("all"),
                                 FaultModel.seu(), budget=1000)
        self.assertEqual(injector.candidates.total_instances, 12)
        for seed in range(10):
            spec = injector.draw(seed)
            first = injector.inject(spec)
            second = injector.inject(spec)
            self.assertEqual(first, second)
        self.assertEqual(len(injector.exhaustive_faults()), 12 * 64)


if __name__ == '__main__':
    unittest.main()
