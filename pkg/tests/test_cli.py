import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from specedge import cli


@pytest.fixture()
def runner():
    return CliRunner()


def _read_lines(path):
    return Path(path).read_text().splitlines()


class TestSpectrum:
    def test_deterministic_rerun(self, runner, tmp_path):
        args = ["spectrum", "--L", "100", "--k", "3", "--ensemble", "2",
                "--seed", "7", "--out"]
        r1 = runner.invoke(cli.main, args + [str(tmp_path / "a")])
        assert r1.exit_code == 0, r1.output
        r2 = runner.invoke(cli.main, args + [str(tmp_path / "b")])
        assert r2.exit_code == 0
        for name in ("samples.jsonl", "summary.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b

    def test_missing_out_dir_created(self, runner, tmp_path):
        out = tmp_path / "deep" / "nested" / "dir"
        r = runner.invoke(
            cli.main,
            ["spectrum", "--L", "60", "--k", "2", "--ensemble", "1",
             "--seed", "0", "--out", str(out)],
        )
        assert r.exit_code == 0
        assert (out / "samples.jsonl").exists()
        assert (out / "fig_spectrum.png").exists()

    def test_k_too_large_is_config_error(self, runner, tmp_path):
        r = runner.invoke(
            cli.main,
            ["spectrum", "--L", "10", "--k", "50", "--ensemble", "1",
             "--out", str(tmp_path)],
        )
        assert r.exit_code == 2

    def test_meta_line_embeds_config(self, runner, tmp_path):
        r = runner.invoke(
            cli.main,
            ["spectrum", "--L", "60", "--k", "2", "--ensemble", "1",
             "--seed", "3", "--out", str(tmp_path)],
        )
        assert r.exit_code == 0
        meta = json.loads(_read_lines(tmp_path / "samples.jsonl")[0])
        assert meta["type"] == "meta"
        assert meta["command"] == "spectrum"
        assert meta["config"]["seed"] == 3
        assert meta["version"]
        rec = json.loads(_read_lines(tmp_path / "samples.jsonl")[1])
        assert rec["n_components"] >= 1
        assert len(rec["heights"]) == 2  # rescaled against the estimated level

    def test_replay_reproduces_bytes(self, runner, tmp_path):
        out1 = tmp_path / "orig"
        r = runner.invoke(
            cli.main,
            ["spectrum", "--L", "80", "--k", "2", "--ensemble", "2",
             "--seed", "11", "--out", str(out1)],
        )
        assert r.exit_code == 0
        out2 = tmp_path / "replayed"
        r2 = runner.invoke(
            cli.main,
            ["spectrum", "--replay", str(out1 / "samples.jsonl"), "--out", str(out2)],
        )
        assert r2.exit_code == 0
        assert (out1 / "samples.jsonl").read_bytes() == (out2 / "samples.jsonl").read_bytes()
        assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()

    def test_replay_from_csv_stamp(self, runner, tmp_path):
        out1 = tmp_path / "orig"
        r = runner.invoke(
            cli.main,
            ["spectrum", "--L", "80", "--k", "2", "--ensemble", "2",
             "--seed", "11", "--out", str(out1)],
        )
        assert r.exit_code == 0
        out2 = tmp_path / "replayed"
        r2 = runner.invoke(
            cli.main,
            ["spectrum", "--replay", str(out1 / "summary.csv"), "--out", str(out2)],
        )
        assert r2.exit_code == 0, r2.output
        assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()

    def test_replay_wrong_command_rejected(self, runner, tmp_path):
        r = runner.invoke(
            cli.main,
            ["spectrum", "--L", "60", "--k", "2", "--ensemble", "1",
             "--out", str(tmp_path)],
        )
        assert r.exit_code == 0
        r2 = runner.invoke(
            cli.main, ["chi", "--replay", str(tmp_path / "samples.jsonl")]
        )
        assert r2.exit_code == 2

    def test_threads_do_not_change_output(self, runner, tmp_path):
        base = ["spectrum", "--L", "100", "--k", "2", "--ensemble", "3", "--seed", "5"]
        r1 = runner.invoke(cli.main, base + ["--threads", "1", "--out", str(tmp_path / "t1")])
        r2 = runner.invoke(cli.main, base + ["--threads", "2", "--out", str(tmp_path / "t2")])
        assert r1.exit_code == 0 and r2.exit_code == 0
        a = (tmp_path / "t1" / "samples.jsonl").read_bytes()
        b = (tmp_path / "t2" / "samples.jsonl").read_bytes()
        assert a == b


class TestVerifyCommand:
    def test_truncation_campaign_exit_zero(self, runner, tmp_path):
        r = runner.invoke(
            cli.main,
            ["verify", "--theorem", "truncation", "--instances", "25",
             "--seed", "1", "--out", str(tmp_path)],
        )
        assert r.exit_code == 0, r.output
        assert (tmp_path / "reports.jsonl").exists()
        assert (tmp_path / "summary.csv").exists()
        assert (tmp_path / "fig_margins_truncation.png").exists()

    def test_injected_fault_exits_one(self, runner, tmp_path):
        r = runner.invoke(
            cli.main,
            ["verify", "--theorem", "truncation", "--instances", "5",
             "--seed", "1", "--inject-fault", "--out", str(tmp_path)],
        )
        assert r.exit_code == 1
        assert (tmp_path / "witness.json").exists()
        assert "WITNESS" in r.output

    def test_multiple_theorems(self, runner, tmp_path):
        r = runner.invoke(
            cli.main,
            ["verify", "--theorem", "l2", "--theorem", "gap",
             "--instances", "10", "--seed", "2", "--out", str(tmp_path)],
        )
        assert r.exit_code == 0, r.output
        rows = (tmp_path / "summary.csv").read_text().splitlines()
        assert rows[0].startswith("# specedge")
        assert len(rows) == 4  # stamp + header + one row per theorem

    def test_unknown_theorem_rejected(self, runner, tmp_path):
        r = runner.invoke(
            cli.main, ["verify", "--theorem", "fermat", "--out", str(tmp_path)]
        )
        assert r.exit_code == 2

    def test_inapplicable_parameters_warn_but_pass(self, runner, tmp_path):
        # a config pinning (A, R) with eps_R > A/2 makes every instance
        # inapplicable: reported, warned about, exit 0
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "theorems": ["truncation"], "instances": 8, "seed": 4,
            "A": 0.5, "R": 1,
        }))
        r = runner.invoke(
            cli.main, ["verify", "--config", str(cfg), "--out", str(tmp_path)]
        )
        assert r.exit_code == 0, r.output
        assert "inapplicable" in r.output
        rows = (tmp_path / "summary.csv").read_text().splitlines()
        assert rows[2].split(",")[4] == "8"  # not_applicable column


class TestChiCommand:
    def test_single_site_row_exact(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"chi_n_max": 2}))
        r = runner.invoke(
            cli.main,
            ["chi", "--rho", "1.5", "--d", "1", "--config", str(cfg),
             "--out", str(tmp_path)],
        )
        assert r.exit_code == 0, r.output
        rows = (tmp_path / "chi_table.csv").read_text().splitlines()
        header = rows[1].split(",")
        first = dict(zip(header, rows[2].split(",")))
        assert first["n"] == "0"
        assert float(first["chi"]) == 2.0

    def test_chi_decreasing_column(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"chi_n_max": 3, "rho": 1.0, "d": 1}))
        r = runner.invoke(cli.main, ["chi", "--config", str(cfg), "--out", str(tmp_path)])
        assert r.exit_code == 0, r.output
        rows = (tmp_path / "chi_table.csv").read_text().splitlines()[2:]
        chis = [float(row.split(",")[4]) for row in rows]
        assert all(a >= b - 1e-12 for a, b in zip(chis, chis[1:]))
        assert (tmp_path / "fig_chi.png").exists()


class TestEvtCommand:
    def test_emits_quantile_columns_and_reruns_identically(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "L_values": [300], "k": 3, "ensemble": 120, "rho": 2.0,
            "seed": 9, "a_mc": 600, "N_L": 30,
        }))
        r1 = runner.invoke(
            cli.main, ["evt", "--config", str(cfg), "--out", str(tmp_path / "a")]
        )
        assert r1.exit_code == 0, r1.output
        qq = (tmp_path / "a" / "qq_L300.csv").read_text().splitlines()
        assert qq[1] == "exp1_quantile,empirical_increment"
        assert len(qq) == 2 + 120 * 3
        assert (tmp_path / "a" / "fig_qq_L300.png").exists()
        assert (tmp_path / "a" / "evt_summary.csv").exists()
        r2 = runner.invoke(
            cli.main, ["evt", "--config", str(cfg), "--out", str(tmp_path / "b")]
        )
        assert r2.exit_code == 0
        assert (tmp_path / "a" / "evt_summary.csv").read_bytes() == (
            tmp_path / "b" / "evt_summary.csv"
        ).read_bytes()
        assert (tmp_path / "a" / "clouds_L300.jsonl").read_text().splitlines()[1:] == (
            tmp_path / "b" / "clouds_L300.jsonl"
        ).read_text().splitlines()[1:]

    def test_bad_override_is_config_error(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"L_values": [100], "N_L": 100, "ensemble": 100}))
        r = runner.invoke(cli.main, ["evt", "--config", str(cfg), "--out", str(tmp_path)])
        assert r.exit_code == 2


class TestSampleCommand:
    def test_writes_field_and_tails(self, runner, tmp_path):
        r = runner.invoke(
            cli.main,
            ["sample", "--L", "2000", "--rho", "1.0", "--seed", "4",
             "--out", str(tmp_path)],
        )
        assert r.exit_code == 0, r.output
        lines = _read_lines(tmp_path / "field.jsonl")
        rec = json.loads(lines[1])
        assert rec["type"] == "field"
        assert len(rec["field"]["values"]) == 1999
        tails = (tmp_path / "tails.csv").read_text().splitlines()
        assert tails[0].startswith("# specedge 0.1.0 sample config=")
        assert tails[1] == "r,empirical,theoretical,mc_stderr"
        assert len(tails) == 5
        assert (tmp_path / "fig_tails.png").exists()


class TestConfig:
    def test_schema_published(self):
        schema = cli.config_schema()
        assert schema["type"] == "object"
        assert "seed" in schema["properties"]

    def test_bad_config_file(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text("{not json")
        r = runner.invoke(cli.main, ["spectrum", "--config", str(cfg)])
        assert r.exit_code == 2

    def test_unknown_key_rejected(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"frobnicate": 1}))
        r = runner.invoke(cli.main, ["spectrum", "--config", str(cfg)])
        assert r.exit_code == 2

    def test_schema_violation_rejected(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"rho": -2.0}))
        r = runner.invoke(cli.main, ["spectrum", "--config", str(cfg)])
        assert r.exit_code == 2

    def test_flags_override_file(self, runner, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"L": 40, "k": 1, "ensemble": 1, "seed": 1}))
        r = runner.invoke(
            cli.main,
            ["spectrum", "--config", str(cfg), "--L", "60", "--out", str(tmp_path)],
        )
        assert r.exit_code == 0
        meta = json.loads(_read_lines(tmp_path / "samples.jsonl")[0])
        assert meta["config"]["L"] == 60
