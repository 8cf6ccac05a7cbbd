"""
Tests for campaign orchestration, architecture comparison and report files.
"""

import json
import os
import shutil
import tempfile
import unittest
from dataclasses import replace
from unittest.mock import patch
from pathlib import Path

import pandas as pd
import pytest

from core.benchmarks import load_benchmark
from core.campaign import (
    BASELINE, PROTECTED, CampaignConfig, CampaignReport, ResilienceDelta,
    behavior_notes, binomial_sigma, compare_arch, emit_report, load_report, ordering_note,
    run_campaign, run_paired, run_width_sweep, summarize,
)
from core.classifier import BENIGN, CRASH, SDC, Outcome, OutcomeHistogram, aggregate, classify
from core.errors import ConfigurationError, PairingError, ReportIOError
from core.injector import FaultModel, Selector, enumerate_candidates, enumerate_seu_faults, inject_run
from core.ir import INSTRUCTION_CLASSES
from core.planner import EMPTY_PLAN, ReliabilityPlan
from core.vm import ReliabilityMap, golden_run, hang_budget

HANG_FLOOR = 1000


def factorial_config(**kwargs):
    settings = dict(benchmark="factorial", trials=60, master_seed=11,
                    hang_floor=HANG_FLOOR, workers=1)
    settings.update(kwargs)
    return CampaignConfig(**settings)


def histogram(crash=0, sdc=0, hang=0, benign=0):
    h = OutcomeHistogram()
    h.counts.update({"crash": crash, "sdc": sdc, "hang": hang, "benign": benign})
    return h


class TestCampaignConfig(unittest.TestCase):
    """Test configuration validation."""

    def test_unknown_benchmark(self):
        """Test unknown benchmarks are rejected."""
        with self.assertRaises(ConfigurationError):
            CampaignConfig(benchmark="doom")

    def test_trials_positive(self):
        """Test trial counts must be positive."""
        with self.assertRaises(ConfigurationError):
            CampaignConfig(benchmark="factorial", trials=0)

    def test_exhaustive_needs_seu(self):
        """Test exhaustive enumeration is single-bit only."""
        with self.assertRaises(ConfigurationError):
            CampaignConfig(benchmark="factorial", exhaustive=True, model=FaultModel.mbu())

    def test_architecture(self):
        """Test a plan makes the campaign protected."""
        self.assertEqual(factorial_config().architecture, BASELINE)
        self.assertEqual(factorial_config(plan=EMPTY_PLAN).architecture, PROTECTED)
        self.assertNotIn("workers", factorial_config().to_dict())


class TestRunCampaign(unittest.TestCase):
    """Test campaign execution."""

    def test_histogram_totals(self):
        """Test every trial lands in exactly one outcome."""
        report = run_campaign(factorial_config())
        self.assertEqual(report.histogram.total, 60)
        self.assertEqual(len(report.trials), 60)
        self.assertEqual([t.trial for t in report.trials], list(range(60)))
        self.assertEqual(report.golden["hang_budget"], HANG_FLOOR)
        self.assertEqual(report.config["trials"], 60)

    def test_deterministic(self):
        """Test equal configurations give identical reports."""
        first = run_campaign(factorial_config(model=FaultModel.mbu()))
        second = run_campaign(factorial_config(model=FaultModel.mbu()))
        self.assertEqual(first.to_dict(include_wall_clock=False),
                         second.to_dict(include_wall_clock=False))

    def test_seed_changes_faults(self):
        """Test different master seeds draw different faults."""
        first = run_campaign(factorial_config(master_seed=1))
        second = run_campaign(factorial_config(master_seed=2))
        self.assertNotEqual([t.fault for t in first.trials], [t.fault for t in second.trials])

    def test_selector_restricts_sites(self):
        """Test faults only land on selected classes."""
        report = run_campaign(factorial_config(selector=Selector.named("loadstore")))
        self.assertEqual({t.fault.site_id for t in report.trials} - {0, 1}, set())

    @pytest.mark.slow
    def test_parallel_matches_serial(self):
        """Test worker processes produce the serial result."""
        serial = run_campaign(factorial_config(trials=80))
        parallel = run_campaign(factorial_config(trials=80, workers=2))
        self.assertEqual(serial.to_dict(include_wall_clock=False),
                         parallel.to_dict(include_wall_clock=False))

    def test_trial_outcomes_replay(self):
        """Test each logged trial replays to its recorded outcome."""
        report = run_campaign(factorial_config(trials=30))
        program = load_benchmark("factorial")
        golden = golden_run(program)
        for record in report.trials:
            result = inject_run(program, (), 0, record.fault,
                                budget=hang_budget(golden.dynamic_count, HANG_FLOOR))
            self.assertEqual(classify(result, golden), record.outcome)


@pytest.mark.acceptance
class TestExhaustiveOracle(unittest.TestCase):
    """Test sampled and exhaustive campaigns against brute force."""

    @classmethod
    def setUpClass(cls):
        cls.program = load_benchmark("factorial")
        cls.golden = golden_run(cls.program, (3,))
        budget = hang_budget(cls.golden.dynamic_count, HANG_FLOOR)
        candidates = enumerate_candidates(cls.golden, cls.program, Selector.named("all"))
        cls.oracle = {}
        for spec in enumerate_seu_faults(candidates):
            result = inject_run(cls.program, (3,), 0, spec, budget=budget)
            cls.oracle[(spec.site_id, spec.dynamic_instance, spec.start_bit)] = classify(
                result, cls.golden)

    def test_exhaustive_histogram(self):
        """Test the exhaustive campaign equals the brute-force histogram."""
        report = run_campaign(factorial_config(input_words=(3,), exhaustive=True))
        self.assertEqual(report.histogram.total, 8 * 64)
        self.assertEqual(report.config["trials"], 8 * 64)
        expected = aggregate(
            ((record.fault, self.oracle[(record.fault.site_id, record.fault.dynamic_instance,
                                         record.fault.start_bit)]) for record in report.trials),
            self.program)
        self.assertEqual(report.histogram, expected)
        self.assertEqual(report.histogram.counts,
                         {tag: sum(1 for o in self.oracle.values() if o.tag == tag)
                          for tag in report.histogram.counts})

    def test_sampled_trials_match_oracle(self):
        """Test every sampled trial's outcome equals the oracle's."""
        report = run_campaign(factorial_config(input_words=(3,), trials=200))
        for record in report.trials:
            key = (record.fault.site_id, record.fault.dynamic_instance, record.fault.start_bit)
            self.assertEqual(record.outcome, self.oracle[key])


class TestCompareArch(unittest.TestCase):
    """Test paired baseline/protected comparison."""

    def test_empty_plan_changes_nothing(self):
        """Test an empty plan masks nothing and reduces nothing."""
        base, prot, delta = run_paired(factorial_config(), EMPTY_PLAN)
        self.assertEqual(delta.masked_trials, 0)
        self.assertEqual(delta.relative_reduction, 0.0)
        self.assertEqual(base.histogram.counts, prot.histogram.counts)
        self.assertEqual(delta.changed_unmasked, 0)

    def test_full_plan_masks_everything(self):
        """Test protecting every site makes every trial benign."""
        program = load_benchmark("factorial")
        plan = ReliabilityPlan(ReliabilityMap(reliable_sites=frozenset(range(program.static_count))))
        base, prot, delta = run_paired(factorial_config(), plan)
        self.assertGreater(base.histogram.non_benign, 0)
        self.assertEqual(prot.histogram.non_benign, 0)
        self.assertEqual(delta.masked_trials, 60)
        self.assertEqual(delta.relative_reduction, 1.0)
        self.assertEqual(prot.coverage, 1.0)

    def test_masking_tracks_coverage(self):
        """Test masked trials are benign and track plan coverage."""
        plan = ReliabilityPlan(ReliabilityMap(reliable_registers=frozenset({3})))
        base, prot, delta = run_paired(factorial_config(trials=400), plan)
        self.assertAlmostEqual(prot.coverage, 0.5)
        self.assertTrue(delta.masking_within_tolerance())
        masked_non_benign = sum(
            1 for b, p in zip(base.trials, prot.trials) if p.masked and not b.outcome.benign)
        self.assertEqual(prot.histogram.non_benign, base.histogram.non_benign - masked_non_benign)
        for record in prot.trials:
            if record.masked:
                self.assertTrue(record.outcome.benign)
        self.assertIsNotNone(prot.overhead)

    def test_pairing_checks(self):
        """Test mismatched campaigns cannot be compared."""
        base = run_campaign(factorial_config(trials=10))
        other_seed = run_campaign(factorial_config(trials=10, master_seed=99, plan=EMPTY_PLAN))
        with self.assertRaises(PairingError):
            compare_arch(base, other_seed)
        with self.assertRaises(PairingError):
            compare_arch(base, base)
        prot = run_campaign(factorial_config(trials=10, plan=EMPTY_PLAN))
        with self.assertRaises(PairingError):
            compare_arch(prot, base)

    def test_masking_tolerance(self):
        """Test the 3-sigma agreement check."""
        sigma = binomial_sigma(0.5, 400)
        self.assertAlmostEqual(sigma, 0.025)
        inside = ResilienceDelta("x", 400, 0.5, 0.25, 0.5, 230, 0.5)
        outside = ResilienceDelta("x", 400, 0.5, 0.25, 0.5, 240, 0.5)
        self.assertTrue(inside.masking_within_tolerance())
        self.assertFalse(outside.masking_within_tolerance())


class TestWidthSweep(unittest.TestCase):
    """Test fixed-width severity sweeps."""

    def test_widths_are_fixed(self):
        """Test each sweep report uses only its width."""
        sweep = run_width_sweep(factorial_config(trials=40), [2, 1])
        self.assertEqual(sorted(sweep.reports), [1, 2])
        for width, report in sweep.reports.items():
            self.assertEqual({t.fault.width for t in report.trials}, {width})
        self.assertEqual(set(sweep.to_dict()["non_benign_rate"]), {"1", "2"})

    def test_empty_widths(self):
        """Test a sweep needs widths."""
        with self.assertRaises(ConfigurationError):
            run_width_sweep(factorial_config(), [])


class TestBehaviorNotes(unittest.TestCase):
    """Test expected-behavior discrepancy notes."""

    def test_sdc_dominant_violation(self):
        """Test a crash-heavy SDC benchmark is noted."""
        notes = behavior_notes({"specrand": histogram(crash=80, sdc=10, benign=10)})
        self.assertEqual(len(notes), 1)
        self.assertTrue(notes[0].startswith("specrand:"))

    def test_expected_behavior_is_quiet(self):
        """Test matching orderings produce no notes."""
        notes = behavior_notes({
            "specrand": histogram(sdc=80, crash=10, benign=10),
            "mm": histogram(crash=50, sdc=20, benign=30),
            "circular_buffer": histogram(sdc=5, benign=95),
        })
        self.assertEqual(notes, [])

    def test_least_sensitive(self):
        """Test circular_buffer must have the lowest non-benign rate."""
        notes = behavior_notes({
            "circular_buffer": histogram(sdc=50, benign=50),
            "stack": histogram(crash=10, benign=90),
        })
        self.assertEqual(len(notes), 1)
        self.assertIn("stack", notes[0])

    def test_crash_dominant_violation(self):
        """Test an SDC-heavy crash benchmark is noted."""
        note = ordering_note("qs", histogram(crash=25, sdc=56, benign=19))
        self.assertTrue(note.startswith("qs: expected crash >= SDC"))
        self.assertIsNone(ordering_note("qs", histogram(crash=40, sdc=38, benign=22)))
        self.assertIsNone(ordering_note("blackscholes", histogram(sdc=90, benign=10)))

    @patch('core.campaign.ordering_note')
    def test_baseline_seu_report_carries_note(self, mock_note):
        """Test single baseline SEU campaigns record their ordering note."""
        mock_note.return_value = "factorial: expected SDC >= crash"
        report = run_campaign(factorial_config(trials=5))
        self.assertEqual(report.notes, ["factorial: expected SDC >= crash"])
        self.assertEqual(report.to_dict()["notes"], report.notes)

    @patch('core.campaign.ordering_note')
    def test_other_campaigns_skip_ordering(self, mock_note):
        """Test MBU and arith-only campaigns are not held to the SEU ordering."""
        mock_note.return_value = "factorial: expected SDC >= crash"
        self.assertEqual(run_campaign(factorial_config(trials=5, model=FaultModel.mbu())).notes, [])
        self.assertEqual(
            run_campaign(factorial_config(trials=5, selector=Selector.named("arith"))).notes, [])
        mock_note.assert_not_called()


class TestReportFiles(unittest.TestCase):
    """Test JSON and CSV report files."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.report = run_campaign(factorial_config(trials=25))

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_json_round_trip(self):
        """Test a JSON report loads back with its histogram and trials."""
        path = emit_report(self.report, os.path.join(self.temp_dir, "r.json"))
        loaded = load_report(path)
        self.assertEqual(loaded.histogram, self.report.histogram)
        self.assertEqual(loaded.trials, self.report.trials)
        self.assertEqual(summarize(loaded), self.report.histogram.to_dict())
        with open(path) as f:
            data = json.load(f)
        self.assertIn("wall_clock", data)
        self.assertEqual(data["config"]["benchmark"], "factorial")

    def test_csv_rows(self):
        """Test one CSV row per trial with the fixed columns."""
        path = emit_report(self.report, os.path.join(self.temp_dir, "r.csv"), "csv")
        frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns),
                         ["trial", "seed", "site", "instance", "start_bit", "width",
                          "outcome", "detail"])
        self.assertEqual(len(frame), 25)

    def test_single_trial_csv(self):
        """Test a one-trial CSV is a header plus one row."""
        report = run_campaign(factorial_config(trials=1))
        path = emit_report(report, os.path.join(self.temp_dir, "one.csv"), "csv")
        self.assertEqual(len(Path(path).read_text().splitlines()), 2)

    def test_csv_summary_matches_json(self):
        """Test CSV and JSON reports summarize to the same counts."""
        json_path = emit_report(self.report, os.path.join(self.temp_dir, "r.json"))
        csv_path = emit_report(self.report, os.path.join(self.temp_dir, "r.csv"), "csv")
        from_json = summarize(load_report(json_path))
        from_csv = summarize(load_report(csv_path))
        for key in ("total", "crash", "sdc", "hang", "benign", "by_width"):
            self.assertEqual(from_csv[key], from_json[key], key)
        reloaded = load_report(csv_path).trials
        self.assertEqual([(t.trial, t.fault, t.outcome) for t in reloaded],
                         [(t.trial, t.fault, t.outcome) for t in self.report.trials])

    def test_exhaustive_csv_has_no_seeds(self):
        """Test exhaustive trials reload with empty seeds."""
        report = run_campaign(factorial_config(input_words=(0,), exhaustive=True))
        path = emit_report(report, os.path.join(self.temp_dir, "ex.csv"), "csv")
        loaded = load_report(path)
        self.assertEqual(len(loaded.trials), 2 * 64)
        self.assertTrue(all(t.seed is None for t in loaded.trials))

    def test_compare_report(self):
        """Test a resilience delta can be written in both formats."""
        _, _, delta = run_paired(factorial_config(trials=10), EMPTY_PLAN)
        json_path = emit_report(delta, os.path.join(self.temp_dir, "d.json"))
        csv_path = emit_report(delta, os.path.join(self.temp_dir, "d.csv"), "csv")
        with open(json_path) as f:
            self.assertEqual(json.load(f)["trials"], 10)
        self.assertEqual(len(pd.read_csv(csv_path)), 1)

    def test_unwritable_path(self):
        """Test write failures name the path."""
        blocker = os.path.join(self.temp_dir, "file.txt")
        Path(blocker).write_text("x")
        with self.assertRaises(ReportIOError) as ctx:
            emit_report(self.report, os.path.join(blocker, "r.json"))
        self.assertIn("file.txt", str(ctx.exception))

    def test_missing_report(self):
        """Test loading a missing report."""
        with self.assertRaises(ReportIOError):
            load_report(os.path.join(self.temp_dir, "absent.json"))

    def test_malformed_json(self):
        """Test loading a non-report JSON file."""
        path = os.path.join(self.temp_dir, "bad.json")
        Path(path).write_text("{not json")
        with self.assertRaises(ConfigurationError):
            load_report(path)

    def test_unknown_format(self):
        """Test only json and csv are supported."""
        with self.assertRaises(ConfigurationError):
            emit_report(self.report, os.path.join(self.temp_dir, "r.xml"), "xml")

    def test_report_from_dict(self):
        """Test CampaignReport.from_dict inverts to_dict."""
        restored = CampaignReport.from_dict(self.report.to_dict())
        self.assertEqual(restored.to_dict(), self.report.to_dict())

    def test_by_class_keys(self):
        """Test class breakdowns use instruction class names."""
        self.assertTrue(set(self.report.histogram.by_class) <= set(INSTRUCTION_CLASSES))


class TestOutcomeRecords(unittest.TestCase):
    """Test trial detail parsing through reports."""

    def test_crash_detail_survives_csv(self):
        """Test crash causes and SDC offsets reload with their types."""
        report = run_campaign(replace(factorial_config(trials=60), benchmark="stack"))
        temp_dir = tempfile.mkdtemp()
        try:
            path = emit_report(report, os.path.join(temp_dir, "s.csv"), "csv")
            loaded = load_report(path)
        finally:
            shutil.rmtree(temp_dir)
        for original, reloaded in zip(report.trials, loaded.trials):
            self.assertEqual(reloaded.outcome, original.outcome)
            if reloaded.outcome.tag == SDC:
                self.assertIsInstance(reloaded.outcome.detail, int)
            elif reloaded.outcome.tag == CRASH:
                self.assertIsInstance(reloaded.outcome.detail, str)
            elif reloaded.outcome.tag == BENIGN:
                self.assertEqual(reloaded.outcome, Outcome(BENIGN))


if __name__ == '__main__':
    unittest.main()
