"""Output files and the command-line front end."""

from __future__ import annotations

import json

import numpy as np
import pytest

from bricklayers import cli, gibbs, io, rates


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestTables:
    """CSV files with a JSON header line."""

    def test_round_trip(self, tmp_path):
        path = io.write_table(tmp_path / "t.csv", {"a": 1, "b": [1.5]}, ["x", "y"], [(1, 0.1), (2, 1 / 3)])
        header, cols, data = io.read_table(path)
        assert header == {"a": 1, "b": [1.5]} and cols == ["x", "y"]
        np.testing.assert_array_equal(data, [[1, 0.1], [2, 1 / 3]])

    def test_lossless_floats(self, tmp_path):
        value = 0.1 + 0.2
        io.write_table(tmp_path / "t.csv", {}, ["v"], [(value,)])
        assert io.read_table(tmp_path / "t.csv")[2][0, 0] == value

    def test_row_length_checked(self, tmp_path):
        with pytest.raises(ValueError):
            io.write_table(tmp_path / "t.csv", {}, ["x", "y"], [(1,)])

    def test_missing_header(self, tmp_path):
        (tmp_path / "bad.csv").write_text("x\n1\n")
        with pytest.raises(ValueError):
            io.read_table(tmp_path / "bad.csv")

    def test_marginal_export(self, tmp_path, ebl1):
        m = gibbs.build_marginal(ebl1, 0.3)
        header, cols, data = io.read_table(io.export_marginal(tmp_path / "m.csv", m))
        assert cols == ["z", "pmf"] and header["theta"] == 0.3
        np.testing.assert_array_equal(data[:, 1], m.pmf)

    def test_rate_function_files(self, tmp_path, perturbed):
        back = io.load_rate_function(io.save_rate_function(tmp_path / "r.json", perturbed))
        np.testing.assert_array_equal(back.log_table, perturbed.log_table)

    def test_json_handles_numpy_and_infinity(self):
        doc = json.loads(io.dumps({"a": np.int64(3), "b": np.array([1.0, 2.0]), "c": float("inf"), "d": np.bool_(True)}))
        assert doc == {"a": 3, "b": [1.0, 2.0], "c": "inf", "d": True}


class TestExitCodes:
    """0 when every check passes, 1 on failure, 2 on a malformed configuration."""

    def test_missing_rate(self, tmp_path, capsys):
        code, _, err = run(["shock", "--seed", "1", "--output", str(tmp_path)], capsys)
        assert code == 2 and "'rate'" in err

    def test_missing_seed_for_stochastic_kind(self, tmp_path, capsys):
        code, _, err = run(["equilibrium", "--beta", "1", "--output", str(tmp_path)], capsys)
        assert code == 2 and "'seed'" in err

    def test_config_kind_mismatch(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"kind": "shock", "seed": 1}))
        code, _, err = run(["tracer", "--config", str(cfg), "--beta", "1"], capsys)
        assert code == 2 and "'kind'" in err

    def test_unreadable_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text("{not json")
        code, _, _ = run(["marginal", "--config", str(cfg)], capsys)
        assert code == 2

    def test_runtime_failure(self, tmp_path, capsys):
        rate = tmp_path / "r.json"
        io.save_rate_function(rate, rates.perturbed_ebl(1.0, m=20))
        code, _, err = run(["marginal", "--rate", str(rate), "--theta-left", "40", "--output", str(tmp_path)], capsys)
        assert code == 1 and "run failed" in err

    def test_failed_check_exits_one(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"tolerances": {"tv": 1e-9}}))
        argv = ["equilibrium", "--config", str(cfg), "--beta", "1", "--seed", "2", "--n-sites", "32",
                "--n-samples", "320", "--t-end", "2", "--output", str(tmp_path)]
        code, out, _ = run(argv, capsys)
        summary = json.loads(out)
        assert code == 1 and summary["pass"] is False and summary["checks"]["tv"]["pass"] is False


class TestSubcommands:
    """Files and summaries written by each subcommand."""

    def test_marginal(self, tmp_path, capsys):
        code, out, _ = run(["marginal", "--beta", "1", "--output", str(tmp_path)], capsys)
        summary = json.loads(out)
        assert code == 0 and summary["seed"] == 0
        assert summary["outputs"] == ["marginal.csv", "rate.json", "summary.json"]
        np.testing.assert_allclose(np.exp(summary["results"]["log_Z"]), 2.5066282880, rtol=1e-10)
        assert json.loads((tmp_path / "summary.json").read_text()) == summary

    def test_equilibrium_with_event_log(self, tmp_path, capsys):
        argv = ["equilibrium", "--beta", "1", "--seed", "4", "--n-sites", "32", "--n-samples", "640",
                "--t-end", "5", "--event-log", "25", "--output", str(tmp_path)]
        code, out, _ = run(argv, capsys)
        assert code == 0
        _, cols, data = io.read_table(tmp_path / "events.csv")
        assert cols[:2] == ["time", "bond"] and data.shape == (25, 6)
        # every logged move lowers the left slope and raises the right one
        np.testing.assert_array_equal(data[:, 4] - data[:, 2], -1)
        np.testing.assert_array_equal(data[:, 5] - data[:, 3], 1)

    def test_tracer(self, tmp_path, capsys):
        argv = ["tracer", "--beta", "1", "--seed", "2", "--window", "16", "--t-end", "500", "--n-samples", "2000",
                "--output", str(tmp_path)]
        code, out, _ = run(argv, capsys)
        summary = json.loads(out)
        assert summary["results"]["stationary_measure"] == "ConsistentWithZero"
        assert set(summary["outputs"]) == {"trajectory.csv", "marginal_left.csv", "marginal_origin.csv", "summary.json"}
        assert code == (0 if summary["pass"] else 1)

    def test_convexity(self, tmp_path, capsys):
        code, out, _ = run(["convexity", "--beta", "1", "--output", str(tmp_path)], capsys)
        assert code == 0 and json.loads(out)["results"]["interval"] == [-2.0, 2.0]
        _, cols, data = io.read_table(tmp_path / "convexity.csv")
        assert cols == ["theta", "u", "J", "d2J_du2"] and np.all(data[:, 3] > 0)

    def test_verify_stationary(self, tmp_path, capsys):
        argv = ["verify-stationary", "--beta", "1", "--theta-left", "1", "--theta-right", "0", "--m", "10",
                "--output", str(tmp_path)]
        code, out, _ = run(argv, capsys)
        assert code == 0 and json.loads(out)["results"]["tracer_frame"] == "ConsistentWithZero"

    def test_verify_theorem(self, tmp_path, capsys):
        code, out, _ = run(["verify-theorem", "--beta", "1", "--grid", "41", "--output", str(tmp_path)], capsys)
        summary = json.loads(out)
        assert code == 0
        assert summary["results"]["verdict"] == "EBL pair found at θ_l−θ_r≈1.0"
        _, cols, data = io.read_table(tmp_path / "scan.csv")
        assert data.shape == (41 * 41, 3)

    def test_output_dir_from_environment(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(io.OUTPUT_DIR_ENV, str(tmp_path / "env"))
        code, _, _ = run(["marginal", "--beta", "2"], capsys)
        assert code == 0 and (tmp_path / "env" / "summary.json").exists()

    def test_flag_overrides_config(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"kind": "marginal", "rate": rates.to_document(rates.make_ebl(2.0)), "theta_left": 0.1}))
        code, out, _ = run(["marginal", "--config", str(cfg), "--theta-left", "0.5", "--output", str(tmp_path)], capsys)
        summary = json.loads(out)
        assert code == 0 and summary["inputs"]["theta_left"] == 0.5 and summary["inputs"]["rate"]["beta"] == 2.0


class TestDeterminism:
    """The same command with the same seed writes the same bytes."""

    def test_shock_twice(self, tmp_path, capsys):
        argv = ["shock", "--beta", "1", "--theta-left", "1", "--theta-right", "0", "--seed", "7"]
        codes = []
        for name in ("a", "b"):
            code, _, _ = run(argv + ["--output", str(tmp_path / name)], capsys)
            codes.append(code)
        assert codes == [0, 0]
        for f in ("profile.csv", "front.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        a, b = (json.loads((tmp_path / n / "summary.json").read_text()) for n in "ab")
        a["inputs"].pop("output"), b["inputs"].pop("output")
        assert a == b
