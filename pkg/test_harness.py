"""
Harness Tests
Experiment configuration, verdicts, reports, reproducible streams and the self-test
"""

import json

import pandas as pd
import pytest

from bounds import BoundReport
from errors import InvalidConfigurationError, InvalidInputError
from harness import (VERDICTS, ExperimentConfig, VerificationReport, build_indicator_model, checks_verdict,
                     matern_convergence, metric_between, read_config_file, render_verdict,
                     reproduce_conditioning_gap, reproduce_relation_flip, run_experiment, run_streams,
                     selftest, selftest_json, substreams)
from metrics import EstimateWithError


def bound(total):
    return BoundReport.build("t", {"x": total}, ["x"])


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


# =========================================================================
# CONFIGURATION
# =========================================================================

class TestExperimentConfig:

    def test_defaults_are_merged(self):
        cfg = ExperimentConfig("matern", {"r": 0.01})
        assert cfg.params["r"] == 0.01
        assert cfg.params["mu"] == 100.0

    def test_unknown_kind(self):
        with pytest.raises(InvalidConfigurationError):
            ExperimentConfig("voronoi")

    def test_unknown_parameter(self):
        with pytest.raises(InvalidConfigurationError):
            ExperimentConfig("matern", {"radius": 0.01})

    def test_statistical_kinds_need_three_replicates(self):
        with pytest.raises(InvalidConfigurationError):
            ExperimentConfig("occupancy", replicates=2)

    def test_reproductions_need_no_replicates(self):
        assert ExperimentConfig("reproduce", replicates=1).replicates == 1

    def test_merged_skips_none_and_maps_format(self):
        cfg = ExperimentConfig("matern").merged(samples=None, seed=7, format="csv", params={"r": None, "d": 3})
        assert cfg.samples == 200
        assert cfg.seed == 7
        assert cfg.fmt == "csv"
        assert cfg.params["r"] == 0.005 and cfg.params["d"] == 3

    @pytest.mark.parametrize("value", ["10", 2.5, True])
    def test_merged_rejects_non_integers(self, value):
        with pytest.raises(InvalidConfigurationError):
            ExperimentConfig("matern").merged(samples=value)

    def test_kind_cannot_change(self):
        with pytest.raises(InvalidConfigurationError):
            ExperimentConfig("matern").merged(kind="occupancy")

    def test_hash_ignores_output_workers_and_format(self):
        base = ExperimentConfig("matern")
        same = base.merged(output="elsewhere", workers=4, fmt="csv")
        assert base.config_hash() == same.config_hash()
        assert base.config_hash() != base.merged(seed=1).config_hash()
        assert len(base.config_hash()) == 16

    def test_from_settings_reads_environment(self, monkeypatch):
        monkeypatch.setenv("PPA_SEED", "99")
        monkeypatch.setenv("PPA_REPLICATES", "1")
        cfg = ExperimentConfig.from_settings("matern")
        assert cfg.seed == 99
        assert cfg.replicates == 3

    def test_from_mapping(self):
        cfg = ExperimentConfig.from_mapping({"kind": "occupancy", "params": {"s": 300}, "samples": 50})
        assert cfg.params["s"] == 300 and cfg.samples == 50

    def test_from_mapping_needs_kind(self):
        with pytest.raises(InvalidConfigurationError):
            ExperimentConfig.from_mapping({"samples": 50})

    def test_config_file_errors(self, tmp_path):
        with pytest.raises(InvalidConfigurationError):
            read_config_file(write_json(tmp_path / "list.json", [1, 2]))
        with pytest.raises(InvalidConfigurationError):
            read_config_file(write_json(tmp_path / "extra.json", {"kind": "matern", "colour": "red"}))
        with pytest.raises(InvalidConfigurationError):
            read_config_file(str(tmp_path / "missing.json"))

    def test_from_json(self, tmp_path):
        path = write_json(tmp_path / "cfg.json", {"kind": "matern", "params": {"mu": 80.0}, "format": "csv"})
        cfg = ExperimentConfig.from_json(path)
        assert cfg.params["mu"] == 80.0 and cfg.fmt == "csv"


# =========================================================================
# VERDICTS
# =========================================================================

class TestVerdicts:

    def test_vacuous(self):
        assert render_verdict(bound(1.5), EstimateWithError(0.1, 0.01, 5)) == "bound-vacuous"

    def test_holds_after_baseline(self):
        verdict = render_verdict(bound(0.5), EstimateWithError(0.1, 0.01, 5), EstimateWithError(0.05, 0.01, 5))
        assert verdict == "bound-holds"

    def test_violation(self):
        assert render_verdict(bound(0.5), EstimateWithError(0.9, 0.01, 5)) == "violation"

    def test_inconclusive(self):
        assert render_verdict(bound(0.5), EstimateWithError(0.55, 0.05, 5)) == "inconclusive"

    def test_zero_bound_met_by_zero_estimate(self):
        assert render_verdict(bound(0.0), EstimateWithError(0.01, 0.01, 5)) == "bound-holds"

    def test_checks_verdict(self):
        ok = {"passed": True}
        assert checks_verdict({"a": ok}) == "bound-holds"
        assert checks_verdict({"a": ok, "power": {"passed": False, "power": True}}) == "inconclusive"
        assert checks_verdict({"a": {"passed": False}, "power": {"passed": False, "power": True}}) == "violation"


# =========================================================================
# STREAMS AND REPORTS
# =========================================================================

class TestStreams:

    def test_substreams_are_reproducible(self):
        first = [g.random() for g in substreams(5, 3)]
        again = [g.random() for g in substreams(5, 3)]
        assert first == again
        assert len(set(first)) == 3

    def test_prefix_of_streams_is_stable(self):
        short = [g.random() for g in substreams(5, 3)]
        long = [g.random() for g in substreams(5, 4)]
        assert short == long[:3]

    def test_results_come_back_in_task_order(self):
        tasks = [lambda rng, k=k: (k, rng.random()) for k in range(6)]
        serial = run_streams(tasks, substreams(1, 6), workers=1)
        threaded = run_streams(tasks, substreams(1, 6), workers=3)
        assert serial == threaded
        assert [k for k, _ in serial] == list(range(6))


class TestReport:

    @pytest.fixture
    def report(self):
        cfg = ExperimentConfig("reproduce")
        return VerificationReport(cfg, "bound-holds", bound=bound(0.25), estimate=EstimateWithError(0.1, 0.02, 5),
                                  baseline=EstimateWithError(0.04, 0.01, 5), checks={"c": {"passed": True}},
                                  details={"lambda": 1.5, "label": "text"})

    def test_corrected_estimate(self, report):
        assert report.corrected.value == pytest.approx(0.06)

    def test_rows(self, report):
        frame = report.to_frame()
        assert list(frame.columns) == ["term", "value"]
        terms = set(frame["term"])
        assert {"t.total", "corrected.value", "check.c.passed", "detail.lambda"} <= terms
        assert "detail.label" not in terms

    def test_write_to_directory(self, report, tmp_path):
        json_path, csv_path = report.write(str(tmp_path / "out"))
        assert json_path.name == f"reproduce-{report.config.config_hash()}.json"
        data = json.loads(json_path.read_text())
        assert data["verdict"] == "bound-holds"
        assert data["config_hash"] == report.config.config_hash()
        assert pd.read_csv(csv_path).shape[1] == 2

    def test_write_to_explicit_file(self, report, tmp_path):
        json_path, csv_path = report.write(str(tmp_path / "named.json"))
        assert json_path.name == "named.json" and csv_path.name == "named.csv"
        assert csv_path.exists()


# =========================================================================
# REPRODUCTIONS
# =========================================================================

class TestReproductions:

    def test_conditioning_gap(self):
        res = reproduce_conditioning_gap(0.1)
        assert res["left"] == pytest.approx(0.009, abs=1e-15)
        assert res["right"] == pytest.approx(0.0095, abs=1e-15)
        assert not res["equal"]
        assert res["local_dependence"] == pytest.approx(0.0, abs=1e-15)

    def test_conditioning_gap_range(self):
        with pytest.raises(InvalidInputError):
            reproduce_conditioning_gap(1.5)

    @pytest.mark.parametrize("b, direction", [(2.0, "<"), (1.0, "="), (0.5, ">")])
    def test_relation_flip(self, b, direction):
        res = reproduce_relation_flip(b, 0.01)
        assert res["conditional"] == pytest.approx(1e-4, abs=1e-15)
        assert res["unconditional"] == pytest.approx(b * 1e-4, abs=1e-15)
        assert res["observed_direction"] == direction == res["expected_direction"]
        for row in res["identity"].values():
            assert row["residual"] == pytest.approx(0.0, abs=1e-12)


# =========================================================================
# EXPERIMENTS
# =========================================================================

class TestExperiments:

    def test_reproduce_experiment(self):
        report = run_experiment(ExperimentConfig("reproduce", {"which": "relation-flip"}))
        assert report.verdict == "bound-holds"
        assert report.details["family_relation"] == "positive"

    def test_reproduce_accepts_published_names(self):
        report = run_experiment(ExperimentConfig("reproduce", {"which": "remark-3.7"}))
        assert report.details["left"] == pytest.approx(0.009)
        assert report.details["right"] == pytest.approx(0.0095)

    def test_small_matern_run(self):
        cfg = ExperimentConfig("matern", samples=20, replicates=3, seed=7)
        report = run_experiment(cfg)
        assert report.verdict in VERDICTS
        assert report.bound.total == pytest.approx(0.8744, abs=5e-4)
        assert report.estimate.sample_count == 3

    def test_worker_count_does_not_change_results(self):
        cfg = ExperimentConfig("matern", {"mu": 30.0, "r": 0.02}, samples=15, replicates=3, seed=11)
        one = run_experiment(cfg)
        three = run_experiment(cfg.merged(workers=3))
        assert one.estimate == three.estimate
        assert one.baseline == three.baseline

    def test_marked_trials_picks_smallest_bound(self):
        cfg = ExperimentConfig("marked-trials", {"p": [0.1, 0.2, 0.15]}, samples=10, replicates=3)
        report = run_experiment(cfg)
        totals = [report.bound.total] + [b.total for b in report.extra_bounds if b.tag != "count-tv"]
        assert report.bound.total == min(totals)
        assert report.details["bound_mode"] == "exact"

    def test_explicit_model_needs_pmf(self):
        with pytest.raises(InvalidConfigurationError):
            build_indicator_model({**ExperimentConfig("marked-trials").params, "model": "explicit"})

    def test_unknown_marks(self):
        with pytest.raises(InvalidConfigurationError):
            build_indicator_model({**ExperimentConfig("marked-trials").params, "marks": "spiral"})

    def test_errors_carry_kind_and_hash(self):
        cfg = ExperimentConfig("matern", {"r": -1.0})
        with pytest.raises(InvalidInputError, match=rf"matern \[{cfg.config_hash()}\].*r=-1"):
            run_experiment(cfg)

    def test_metrics_selftest_experiment(self):
        cfg = ExperimentConfig("metrics-selftest", {"instances": 20, "triples": 50})
        assert run_experiment(cfg).verdict == "bound-holds"

    def test_convergence_rows(self):
        rows = matern_convergence(50.0, 0.01, sample_sizes=(10, 20), replicates=3, seed=3)
        assert [row["N"] for row in rows] == [10, 20]
        assert all(row["stderr"] >= 0 for row in rows)


# =========================================================================
# AD-HOC DISTANCES
# =========================================================================

class TestMetricBetween:

    def test_rho1dd_between_files(self, tmp_path):
        a = write_json(tmp_path / "a.json", [0.2, 0.8])
        b = write_json(tmp_path / "b.json", [0.3, 0.7])
        assert metric_between("rho1dd", a, b) == pytest.approx(0.2)
        assert metric_between("rho1", a, b, ground="zero") == 0.0

    def test_d2_between_samples(self, tmp_path):
        a = write_json(tmp_path / "a.json", [[0.4], [0.2, 0.8]])
        b = write_json(tmp_path / "b.json", [[0.5], [0.3, 0.7]])
        assert metric_between("d2", a, b) == pytest.approx(0.1)

    def test_d2_pads_shorter_list_with_seed(self, tmp_path):
        a = write_json(tmp_path / "a.json", [[0.4], [0.4], [0.4]])
        b = write_json(tmp_path / "b.json", [[0.4]])
        assert metric_between("d2", a, b, seed=3) == 0.0
        with pytest.raises(InvalidInputError):
            metric_between("d2", a, b)

    def test_d2_needs_lists(self, tmp_path):
        a = write_json(tmp_path / "a.json", [0.4])
        with pytest.raises(InvalidInputError):
            metric_between("d2", a, a)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(InvalidInputError):
            metric_between("rho1", str(tmp_path / "none.json"), str(tmp_path / "none.json"))


# =========================================================================
# SELF-TEST
# =========================================================================

class TestSelftest:

    def test_reproductions_suite_passes(self):
        summary = selftest(1, suites=["reproductions", "bounds"])
        assert summary["passed"]
        assert set(summary["suites"]) == {"reproductions", "bounds"}

    def test_injected_fault_is_caught(self):
        summary = selftest(1, fault="reproductions", suites=["reproductions"])
        assert not summary["passed"]
        assert summary["suites"]["reproductions"]["failures"]

    def test_unknown_suite(self):
        with pytest.raises(InvalidInputError):
            selftest(1, suites=["nonsense"])

    def test_output_is_reproducible(self):
        suites = ["assignment", "estimators"]
        assert selftest_json(selftest(3, suites=suites)) == selftest_json(selftest(3, suites=suites))

    @pytest.mark.slow
    def test_full_selftest(self):
        assert selftest(20240917)["passed"]
