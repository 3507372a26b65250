"""Tests for the config parser, experiment runner, CSV output, and CLI."""

import csv
import os

import numpy as np
import pytest

from sparsecomm import cli
from sparsecomm.harness import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_PRECONDITION,
    RISK_COLUMNS,
    ConfigParseError,
    InsufficientData,
    NonPositiveValue,
    fit_slope,
    format_cell,
    load_experiment,
    parse_config_text,
    parse_spec_string,
    parse_value,
    run,
    write_csv_atomic,
)


def write_config(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


SWEEP_CFG = """
command = SweepRisk
n = 8
k = [10, 12, 16]
d = 32
s = 4
trials = 120
seed = 5
out = {out}
workers = 1
"""


class TestParseValue:
    def test_scalars(self):
        assert parse_value("42") == 42
        assert parse_value("-3") == -3
        assert parse_value("0.5") == 0.5
        assert parse_value("1e-3") == 0.001
        assert parse_value("true") is True
        assert parse_value("false") is False
        assert parse_value("flat") == "flat"
        assert parse_value('"all"') == "all"

    def test_lists(self):
        assert parse_value("[1, 2, 3]") == [1, 2, 3]
        assert parse_value("[]") == []
        assert parse_value("[flat, corner]") == ["flat", "corner"]

    def test_nested_lists(self):
        assert parse_value("[[0, 0.2], [2000, 0.05]]") == [[0, 0.2], [2000, 0.05]]

    def test_errors(self):
        with pytest.raises(ValueError):
            parse_value("[1, 2")
        with pytest.raises(ValueError):
            parse_value("")


class TestParseConfigText:
    def test_comments_and_blanks(self):
        text = "# header\nn = 3   # inline\n\nk = [1, 2]\n"
        assert parse_config_text(text) == {"n": 3, "k": [1, 2]}

    def test_bad_line_reports_lineno(self):
        with pytest.raises(ConfigParseError, match="line 2"):
            parse_config_text("n = 3\nnot a kv line\n")

    def test_duplicate_key(self):
        with pytest.raises(ConfigParseError, match="duplicate key 'n'"):
            parse_config_text("n = 3\nn = 4\n")

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigParseError, match="key 'k'"):
            parse_config_text("k = [1, 2\n")


class TestLoadExperiment:
    def test_unknown_key_is_named(self, tmp_path):
        path = write_config(tmp_path, "command = Bounds\nn=1\nk=1\nd=4\ns=2\nbogus = 1\nout = x.csv\n")
        with pytest.raises(ConfigParseError, match="bogus"):
            load_experiment(path)

    def test_missing_required_key(self, tmp_path):
        path = write_config(tmp_path, "command = SweepRisk\nn = 2\nk = 10\nd = 32\nout = x.csv\n")
        with pytest.raises(ConfigParseError, match="missing required key 's'"):
            load_experiment(path)

    def test_command_mismatch(self, tmp_path):
        path = write_config(tmp_path, "command = Bounds\nn=1\nk=1\nd=4\ns=2\nout=x.csv\n")
        with pytest.raises(ConfigParseError, match="Bounds"):
            load_experiment(path, command="Train")

    def test_overrides(self, tmp_path):
        path = write_config(
            tmp_path, "command = Bounds\nn=1\nk=12\nd=16\ns=4\nseed=1\nout=a.csv\n"
        )
        config = load_experiment(path, seed=99, out="b.csv")
        assert config.seed == 99
        assert config.out == "b.csv"

    def test_type_mismatch(self, tmp_path):
        path = write_config(tmp_path, "command = SweepRisk\nn=2\nk=10\nd=32\ns=4\ntrials=lots\nout=x.csv\n")
        with pytest.raises(ConfigParseError, match="trials"):
            load_experiment(path)

    def test_missing_file(self):
        with pytest.raises(ConfigParseError, match="cannot read"):
            load_experiment("/nonexistent/path.cfg")


class TestRiskCommands:
    def test_sweep_writes_expected_rows(self, tmp_path, capsys):
        out = str(tmp_path / "sweep.csv")
        path = write_config(tmp_path, SWEEP_CFG.format(out=out))
        assert run(path) == EXIT_OK
        rows = read_rows(out)
        assert len(rows) == 3
        with open(out, newline="") as fh:
            header = fh.readline().strip().split(",")
        assert header == RISK_COLUMNS
        # the 10 documented columns lead, in order
        assert header[:10] == [
            "n", "k", "d", "s", "trials", "risk", "std_err",
            "upper_bound", "lower_bound", "centralized",
        ]
        summary = capsys.readouterr().out
        assert summary.count("risk=") == 2  # k=10 is degenerate at d=32

    def test_doubling_budget_sweep_shape(self, tmp_path):
        # k in {10, 20, 40, 80} at d=32, s=4, n=64: exactly four rows with
        # the documented columns; k=10 is degenerate but still present.
        cfg = (
            "command = SweepRisk\nn = 64\nk = [10, 20, 40, 80]\nd = 32\ns = 4\n"
            "trials = 100\nseed = 1\nout = {out}\n"
        )
        out = str(tmp_path / "doubling.csv")
        path = write_config(tmp_path, cfg.format(out=out))
        assert run(path) == EXIT_OK
        rows = read_rows(out)
        assert [row["k"] for row in rows] == ["10", "20", "40", "80"]
        assert rows[0]["status"] == "degenerate_codec"
        # k=40 already saturates the codebook (kprime = d): risk equals the
        # uncoded sample mean's from there on
        assert rows[2]["kprime"] == "32" and rows[3]["kprime"] == "32"

    def test_degenerate_rows_are_flagged_not_dropped(self, tmp_path):
        out = str(tmp_path / "sweep.csv")
        path = write_config(tmp_path, SWEEP_CFG.format(out=out))
        run(path)
        rows = read_rows(out)
        by_k = {row["k"]: row for row in rows}
        assert by_k["10"]["status"] == "degenerate_codec"
        assert by_k["10"]["risk"] == ""
        assert by_k["10"]["centralized"] != ""
        assert by_k["12"]["status"] == "ok"
        assert float(by_k["12"]["risk"]) > 0

    def test_byte_identical_reruns_and_worker_counts(self, tmp_path):
        out1 = str(tmp_path / "a.csv")
        out2 = str(tmp_path / "b.csv")
        base = SWEEP_CFG.format(out=out1)
        path1 = write_config(tmp_path, base, "a.cfg")
        path2 = write_config(
            tmp_path, base.replace("workers = 1", "workers = 2").format(out=out2), "b.cfg"
        )
        assert run(path1) == EXIT_OK
        assert run(path2, out=out2) == EXIT_OK
        assert open(out1, "rb").read() == open(out2, "rb").read()

    def test_estimate_risk_rejects_lists(self, tmp_path):
        cfg = "command = EstimateRisk\nn = [2, 4]\nk = 12\nd = 32\ns = 4\ntrials=120\nout = {o}\n"
        out = str(tmp_path / "e.csv")
        path = write_config(tmp_path, cfg.format(o=out))
        assert run(path) == EXIT_PRECONDITION

    def test_trials_floor_is_a_precondition(self, tmp_path):
        cfg = SWEEP_CFG.replace("trials = 120", "trials = 50")
        out = str(tmp_path / "s.csv")
        path = write_config(tmp_path, cfg.format(out=out))
        assert run(path) == EXIT_PRECONDITION

    def test_budget_below_header_is_a_precondition(self, tmp_path):
        cfg = "command = SweepRisk\nn = 4\nk = 3\nd = 32\ns = 4\ntrials = 120\nout = {o}\n"
        out = str(tmp_path / "s.csv")
        path = write_config(tmp_path, cfg.format(o=out))
        assert run(path) == EXIT_PRECONDITION

    def test_oversized_budget_probe_is_a_precondition(self, tmp_path):
        cfg = "command = SweepRisk\nn = 4\nk = 12\nd = 8\ns = 6\ntrials = 120\nout = {o}\n"
        path = write_config(tmp_path, cfg.format(o=str(tmp_path / "s.csv")))
        assert run(path) == EXIT_PRECONDITION

    def test_perturbed_sweep_runs(self, tmp_path):
        cfg = (
            "command = EstimateRisk\nn = 4\nk = 10\nd = 8\ns = 2\ntrials = 150\n"
            "perturb_halfwidth = 0.49\nout = {o}\n"
        )
        out = str(tmp_path / "p.csv")
        path = write_config(tmp_path, cfg.format(o=out))
        assert run(path) == EXIT_OK
        assert read_rows(out)[0]["status"] == "ok"


class TestCodecRoundtripCommand:
    def test_exhaustive_summary_line(self, tmp_path, capsys):
        cfg = "command = CodecRoundtrip\nd = 8\nk = 10\nsamples = 0\nout = {o}\n"
        out = str(tmp_path / "c.csv")
        path = write_config(tmp_path, cfg.format(o=out))
        assert run(path) == EXIT_OK
        assert "roundtrips: 256/256 ok" in capsys.readouterr().out
        rows = read_rows(out)
        assert rows[0]["failures"] == "0"

    def test_exhaustive_cap(self, tmp_path):
        cfg = "command = CodecRoundtrip\nd = 20\nk = 12\nsamples = 0\n"
        path = write_config(tmp_path, cfg)
        assert run(path) == EXIT_PRECONDITION

    def test_out_is_optional(self, tmp_path, capsys):
        cfg = "command = CodecRoundtrip\nd = 6\nk = [8, 9]\nsamples = 0\n"
        path = write_config(tmp_path, cfg)
        assert run(path) == EXIT_OK
        assert capsys.readouterr().out.count("roundtrips: 64/64 ok") == 2


class TestTrainCommands:
    def test_train_writes_per_round_rows(self, tmp_path):
        cfg = (
            "command = Train\nobjective = quadratic\nd = 20\nn = 3\nbatch_size = 4\n"
            "k = 2\nsteps = 30\neta = 0.05\nobj_samples = 60\nout = {o}\n"
        )
        out = str(tmp_path / "t.csv")
        path = write_config(tmp_path, cfg.format(o=out))
        assert run(path) == EXIT_OK
        rows = read_rows(out)
        assert len(rows) == 30
        assert [int(r["t"]) for r in rows] == list(range(30))
        assert all(float(r["loss"]) >= 0 for r in rows)
        assert rows[0]["comm_entries"] == "6"

    def test_piecewise_schedule_accepted(self, tmp_path):
        cfg = (
            "command = Train\nd = 10\nn = 2\nk = 2\nsteps = 12\n"
            "eta = [[0, 0.1], [6, 0.01]]\nobj_samples = 40\nout = {o}\n"
        )
        out = str(tmp_path / "t.csv")
        path = write_config(tmp_path, cfg.format(o=out))
        assert run(path) == EXIT_OK

    def test_bad_window_is_a_precondition(self, tmp_path):
        cfg = "command = Train\nd = 10\nn = 2\nk = 4\nr = 2\nsteps = 5\nout = {o}\n"
        path = write_config(tmp_path, cfg.format(o=str(tmp_path / "t.csv")))
        assert run(path) == EXIT_PRECONDITION

    def test_compare_rows_per_spec(self, tmp_path):
        cfg = (
            "command = CompareSparsifiers\nd = 30\nn = 2\nbatch_size = 4\nk = 3\n"
            "steps = 15\neta = 0.05\nobj_samples = 50\n"
            "specs = [rtop:6:3, top:3, random:3]\nseeds = [1, 2]\nout = {o}\n"
        )
        out = str(tmp_path / "cmp.csv")
        path = write_config(tmp_path, cfg.format(o=out))
        assert run(path) == EXIT_OK
        rows = read_rows(out)
        assert [r["spec"] for r in rows] == ["rtop_r6_k3", "top_3", "random_3"]
        assert all(r["comm_entries_per_round"] == "6" for r in rows)

    def test_concentrated_objective_available(self, tmp_path):
        cfg = (
            "command = Train\nobjective = concentrated_quadratic\nd = 40\n"
            "obj_heavy = 4\nobj_samples = 60\nn = 2\nk = 2\nsteps = 10\nout = {o}\n"
        )
        out = str(tmp_path / "cq.csv")
        path = write_config(tmp_path, cfg.format(o=out))
        assert run(path) == EXIT_OK
        assert len(read_rows(out)) == 10

    def test_mismatched_budgets_pre(self, tmp_path):
        cfg = (
            "command = CompareSparsifiers\nd = 30\nn = 2\nk = 3\nsteps = 5\n"
            "specs = [top:3, random:4]\nseeds = [1]\nout = {o}\n"
        )
        path = write_config(tmp_path, cfg.format(o=str(tmp_path / "x.csv")))
        assert run(path) == EXIT_PRECONDITION

    def test_spec_string_parsing(self):
        assert parse_spec_string("top:5", 100, 4).label == "top_5"
        assert parse_spec_string("random:3", 100, 4).label == "random_3"
        assert parse_spec_string("rtop:25:5", 100, 4).label == "rtop_r25_k5"
        assert parse_spec_string("rtop:5", 100, 4).label == "rtop_r20_k5"
        from sparsecomm.harness import PreconditionError

        with pytest.raises(PreconditionError):
            parse_spec_string("rtop", 100, 4)


class TestBoundsCommand:
    def test_grid_and_regime_flags(self, tmp_path):
        cfg = (
            "command = Bounds\nn = [16, 64]\nk = [8, 24]\nd = 64\ns = 8\nout = {o}\n"
        )
        out = str(tmp_path / "b.csv")
        path = write_config(tmp_path, cfg.format(o=out))
        assert run(path) == EXIT_OK
        rows = read_rows(out)
        assert len(rows) == 4
        by = {(r["n"], r["k"]): r for r in rows}
        # k=8 < 2*ceil(log2 65) = 14: upper curve out of regime, cell empty
        assert by[("16", "8")]["upper_bound"] == ""
        assert "k=8" in by[("16", "8")]["upper_regime"]
        assert by[("16", "24")]["upper_regime"] == "ok"
        assert float(by[("16", "24")]["upper_bound"]) > 0
        assert float(by[("64", "24")]["centralized"]) == pytest.approx(7.0 / 64)


class TestFitSlope:
    def test_exact_inverse_law(self):
        rows = [{"x": x, "y": 7.0 / x} for x in (1, 2, 4, 8)]
        slope, err = fit_slope(rows, "x", "y")
        assert slope == pytest.approx(-1.0, abs=1e-12)
        assert err == pytest.approx(0.0, abs=1e-9)

    def test_exact_square_law(self):
        rows = [{"x": x, "y": 3.5 * x * x} for x in (1, 3, 9, 27)]
        slope, _ = fit_slope(rows, "x", "y")
        assert slope == pytest.approx(2.0, abs=1e-12)

    def test_reads_csv_files(self, tmp_path):
        out = str(tmp_path / "pow.csv")
        write_csv_atomic(out, ["x", "y"], [{"x": x, "y": 5.0 / x} for x in (1, 2, 4)])
        slope, _ = fit_slope(out, "x", "y")
        assert slope == pytest.approx(-1.0, abs=1e-12)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            fit_slope([{"x": 1, "y": 1}, {"x": 2, "y": 2}], "x", "y")

    def test_non_positive_and_empty_cells(self):
        with pytest.raises(NonPositiveValue):
            fit_slope([{"x": 1, "y": 0}, {"x": 2, "y": 1}, {"x": 3, "y": 1}], "x", "y")
        with pytest.raises(NonPositiveValue):
            fit_slope([{"x": 1, "y": ""}, {"x": 2, "y": 1}, {"x": 3, "y": 1}], "x", "y")


class TestCsvFormatting:
    def test_seventeen_significant_digits(self):
        assert format_cell(1 / 3) == "0.33333333333333331"
        assert format_cell(None) == ""
        assert format_cell(5) == "5"
        assert format_cell("ok") == "ok"

    def test_atomic_write_creates_dirs(self, tmp_path):
        target = tmp_path / "deep" / "dir" / "out.csv"
        write_csv_atomic(str(target), ["a"], [{"a": 1}])
        assert target.read_text() == "a\n1\n"

    def test_no_temp_files_left_behind(self, tmp_path):
        target = tmp_path / "out.csv"
        write_csv_atomic(str(target), ["a"], [{"a": 1.5}])
        assert [p.name for p in tmp_path.iterdir()] == ["out.csv"]


class TestGoldenFile:
    """Pins the frozen CSV schema: header order, float formatting, and the
    seeded values themselves (byte-for-byte)."""

    def test_sweep_matches_golden_bytes(self, tmp_path):
        cfg = (
            "command = SweepRisk\nn = 8\nk = [10, 12, 16]\nd = 32\ns = 4\n"
            "trials = 150\nseed = 2024\nworkers = 1\nprobes = [flat, corner]\n"
        )
        out = str(tmp_path / "sweep.csv")
        path = write_config(tmp_path, cfg)
        assert run(path, out=out) == EXIT_OK
        golden = os.path.join(os.path.dirname(__file__), "golden", "sweep_small.csv")
        assert open(out, "rb").read() == open(golden, "rb").read()


class TestCli:
    def test_subcommand_runs_config(self, tmp_path, capsys):
        out = str(tmp_path / "sweep.csv")
        path = write_config(tmp_path, SWEEP_CFG.format(out=out))
        assert cli.main(["sweep-risk", "--config", path]) == EXIT_OK
        assert os.path.exists(out)

    def test_error_line_is_machine_readable(self, tmp_path, capsys):
        path = write_config(tmp_path, "command = SweepRisk\nwat = 1\n")
        code = cli.main(["sweep-risk", "--config", path])
        assert code == EXIT_CONFIG
        err = capsys.readouterr().err
        assert err.startswith("ERROR code=2 kind=ConfigParseError")
        assert "wat" in err

    def test_subcommand_must_match_config(self, tmp_path):
        path = write_config(tmp_path, "command = Bounds\nn=1\nk=12\nd=16\ns=4\nout=x.csv\n")
        assert cli.main(["train", "--config", path]) == EXIT_CONFIG

    def test_no_subcommand_prints_help(self, capsys):
        assert cli.main([]) == EXIT_CONFIG
        assert "sweep-risk" in capsys.readouterr().out

    def test_seed_and_out_overrides(self, tmp_path):
        out_a = str(tmp_path / "a.csv")
        out_b = str(tmp_path / "b.csv")
        path = write_config(tmp_path, SWEEP_CFG.format(out=out_a))
        assert cli.main(["sweep-risk", "--config", path, "--out", out_b, "--seed", "5"]) == EXIT_OK
        assert os.path.exists(out_b) and not os.path.exists(out_a)
        # same seed through either route gives identical bytes
        assert cli.main(["sweep-risk", "--config", path]) == EXIT_OK
        assert open(out_a, "rb").read() == open(out_b, "rb").read()
