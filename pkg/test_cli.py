"""
CLI Tests
Subcommands, configuration layering and exit codes
"""

import json

from cli import build_parser, main


def write_json(path, data):
    path.write_text(json.dumps(data))
    return str(path)


# =========================================================================
# PARSER
# =========================================================================

class TestParser:

    def test_common_flags_on_subcommands(self):
        args = build_parser().parse_args(["experiment", "matern", "--seed", "3", "--r", "0.01"])
        assert args.seed == 3 and args.r == 0.01 and args.kind == "matern"

    def test_probability_lists(self):
        args = build_parser().parse_args(["experiment", "occupancy", "--p", "0.5,0.25,0.25"])
        assert args.p == [0.5, 0.25, 0.25]

    def test_json_flags(self):
        args = build_parser().parse_args(["experiment", "marked-trials", "--neighborhoods", "[[0, 1], [1]]"])
        assert args.neighborhoods == [[0, 1], [1]]

    def test_usage_error_exit_code(self, capsys):
        assert main(["experiment", "matern", "--bogus"]) == 2

    def test_missing_command(self, capsys):
        assert main([]) == 2


# =========================================================================
# COMMANDS
# =========================================================================

class TestCommands:

    def test_reproduce_conditioning_gap(self, capsys, tmp_path):
        assert main(["reproduce", "conditioning-gap", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "= 0.009\n" in out and "= 0.0095\n" in out
        assert list(tmp_path.glob("reproduce-*.json")) and list(tmp_path.glob("reproduce-*.csv"))

    def test_reproduce_remark_name(self, capsys):
        assert main(["reproduce", "remark-3.7"]) == 0
        out = capsys.readouterr().out
        assert "= 0.009\n" in out and "= 0.0095\n" in out

    def test_reproduce_counterexample_name(self, capsys):
        assert main(["reproduce", "counterexample-4.7"]) == 0
        out = capsys.readouterr().out
        assert "= 0.0001\n" in out and "= 0.0002\n" in out
        assert "positively related family" in out

    def test_reproduce_relation_flip(self, capsys):
        assert main(["reproduce", "relation-flip", "--b", "2"]) == 0
        out = capsys.readouterr().out
        assert "direction: < (positively related family)" in out

    def test_csv_format_echoes_csv_path(self, capsys, tmp_path):
        assert main(["reproduce", "relation-flip", "--out", str(tmp_path), "--format", "csv"]) == 0
        report_line = [line for line in capsys.readouterr().out.splitlines() if line.startswith("📄")][0]
        assert report_line.endswith(".csv")

    def test_config_file_overrides_flags(self, capsys, tmp_path):
        cfg = write_json(tmp_path / "cfg.json", {"kind": "reproduce", "params": {"q": 0.2}})
        assert main(["reproduce", "conditioning-gap", "--q", "0.1", "--config", cfg]) == 0
        assert "= 0.032\n" in capsys.readouterr().out

    def test_config_file_of_another_kind(self, capsys, tmp_path):
        cfg = write_json(tmp_path / "cfg.json", {"kind": "matern"})
        assert main(["reproduce", "conditioning-gap", "--config", cfg]) == 2
        assert "InvalidConfigurationError" in capsys.readouterr().err

    def test_fasta_only_for_palindromes(self, capsys, tmp_path):
        assert main(["experiment", "matern", "--fasta", str(tmp_path / "x.fa")]) == 2

    def test_invalid_model_parameter(self, capsys):
        assert main(["experiment", "matern", "--r", "-1"]) == 2
        assert "r=-1" in capsys.readouterr().err

    def test_too_few_replicates(self, capsys):
        assert main(["experiment", "occupancy", "--replicates", "2"]) == 2

    def test_small_experiment(self, capsys, tmp_path):
        code = main(["experiment", "matern", "--samples", "20", "--replicates", "3", "--seed", "7",
                     "--out", str(tmp_path)])
        out = capsys.readouterr().out
        assert code in (0, 1)
        assert "🎲 seed 7" in out and "verdict:" in out
        assert list(tmp_path.glob("matern-*.json"))

    def test_selftest_subset(self, capsys, tmp_path):
        out_file = tmp_path / "summary.json"
        assert main(["selftest", "--suite", "reproductions", "--out", str(out_file)]) == 0
        assert json.loads(out_file.read_text())["passed"] is True

    def test_selftest_fault(self, capsys):
        assert main(["selftest", "--suite", "reproductions", "--fault", "reproductions"]) == 1

    def test_metrics(self, capsys, tmp_path):
        a = write_json(tmp_path / "a.json", [0.2, 0.8])
        b = write_json(tmp_path / "b.json", [0.3, 0.7])
        assert main(["metrics", "rho1", "--a", a, "--b", b]) == 0
        assert "rho1 = 0.1\n" in capsys.readouterr().out

    def test_metrics_bad_file(self, capsys, tmp_path):
        a = write_json(tmp_path / "a.json", {"points": []})
        assert main(["metrics", "rho1", "--a", a, "--b", a]) == 2
