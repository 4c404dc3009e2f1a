"""Command-line interface tests (in-process)."""

import json
from pathlib import Path

import pytest

from cvqkdsim import cli
from cvqkdsim import configio
from cvqkdsim.errors import CalibrationError

TINY = """
[tx]
v_mod = 3.7
samples_per_symbol = 16

[channel]
transmittance = 0.5147058823529411
freq_offset = 1e6
injected_excess_noise = 0.003

[rx]
block_size_samples = 16384

[run]
blocks = 2
seed = 7
label = "tiny"
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY)
    return path


class TestRun:
    def test_run_writes_reports(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["run", str(tiny_config), "--out-dir", str(out)])
        assert code == 0
        assert (out / "report.json").exists()
        assert (out / "report.csv").exists()
        assert (out / "phase_track.csv").exists()
        data = json.loads((out / "report.json").read_text())
        assert set(data["policies"]) == {"averaged", "worst_case"}

    def test_byte_identical_reruns(self, tiny_config, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert cli.main(["run", str(tiny_config), "--out-dir", str(out_a)]) == 0
        assert cli.main(["run", str(tiny_config), "--out-dir", str(out_b)]) == 0
        for name in ("report.json", "report.csv", "phase_track.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_seed_changes_output(self, tiny_config, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cli.main(["run", str(tiny_config), "--out-dir", str(out_a)])
        cli.main(["run", str(tiny_config), "--out-dir", str(out_b), "--seed", "8"])
        assert (out_a / "report.json").read_bytes() != (out_b / "report.json").read_bytes()

    def test_blocks_zero_calibration_only(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli.main(["run", str(tiny_config), "--blocks", "0", "--out-dir", str(out)])
        assert code == 0
        data = json.loads((out / "report.json").read_text())
        assert data["blocks"] == 0
        res = data["policies"]["averaged"]
        assert res["n0"] > 0
        assert res["xi_det"] > 0
        captured = capsys.readouterr()
        assert "N0=" in captured.out

    def test_preset_name_accepted(self, tmp_path):
        code = cli.main(
            ["run", "table1_13km", "--blocks", "1", "--out-dir", str(tmp_path / "o")]
        )
        assert code == 0

    def test_format_restriction(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        cli.main(["run", str(tiny_config), "--out-dir", str(out), "--format", "json"])
        assert (out / "report.json").exists()
        assert not (out / "report.csv").exists()


class TestCalibrate:
    def test_calibrate_verb(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        code = cli.main(["calibrate", str(tiny_config), "--out-dir", str(out)])
        assert code == 0
        data = json.loads((out / "report.json").read_text())
        assert data["blocks"] == 0


class TestSweep:
    def test_transmittance_sweep(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "out"
        code = cli.main(
            [
                "sweep",
                str(tiny_config),
                "--axis",
                "transmittance",
                "--values",
                "0.60,0.35",
                "--out-dir",
                str(out),
            ]
        )
        assert code == 0
        rows = (out / "sweep.csv").read_text().splitlines()
        assert rows[0].startswith("axis_value")
        assert len(rows) == 1 + 2 * 2  # two values x two policies

    def test_empty_values(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        code = cli.main(
            ["sweep", str(tiny_config), "--axis", "transmittance", "--values", "", "--out-dir", str(out)]
        )
        assert code == 0
        rows = (out / "sweep.csv").read_text().splitlines()
        assert len(rows) == 1  # header only

    def test_unknown_axis(self, tiny_config, capsys):
        code = cli.main(
            ["sweep", str(tiny_config), "--axis", "bogus", "--values", "1,2"]
        )
        assert code == 2
        err = capsys.readouterr().err
        assert "transmittance" in err  # lists valid axes


class TestAbSuppression:
    def test_ab_runs(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        code = cli.main(
            [
                "ab-suppression",
                str(tiny_config),
                "--values",
                "inf,0",
                "--out-dir",
                str(out),
            ]
        )
        assert code == 0
        rows = (out / "ab_suppression.csv").read_text().splitlines()
        assert rows[0].split(",")[0] == "carrier_suppression_db"
        assert len(rows) == 5

    def test_single_value_rejected(self, tiny_config):
        assert cli.main(["ab-suppression", str(tiny_config), "--values", "0"]) == 2


class TestExitCodes:
    def test_missing_config(self):
        assert cli.main(["run", "/nonexistent/path.toml"]) == 2

    def test_rate_mismatch(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(TINY + "\n[dsp]\nbpf_center = 9e8\n")
        assert cli.main(["run", str(path)]) == 2

    def test_schema_violation(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[tx]\nnot_a_field = 1\n")
        assert cli.main(["run", str(path)]) == 2

    def test_sync_failure(self, tmp_path):
        # healthy pilot, essentially no quantum signal: correlation floor
        path = tmp_path / "nosig.toml"
        path.write_text(
            """
[tx]
v_mod = 1e-9
pilot_amplitude = 2e5

[rx]
block_size_samples = 16384

[run]
blocks = 1
seed = 3
"""
        )
        assert cli.main(["run", str(path)]) == 3

    def test_calibration_error_mapping(self, tiny_config, monkeypatch):
        def boom(cfg, **kwargs):
            raise CalibrationError("synthetic")

        monkeypatch.setattr(cli.xp, "run_experiment", boom)
        assert cli.main(["run", str(tiny_config)]) == 4

    def test_presets_verb(self, capsys):
        assert cli.main(["presets"]) == 0
        out = capsys.readouterr().out
        assert "table1_13km" in out


class TestConfigIO:
    def test_all_presets_load_and_validate(self):
        for name in configio.list_presets():
            cfg = configio.load_preset(name)
            cfg.validate()

    def test_unknown_preset(self):
        with pytest.raises(Exception):
            configio.load_preset("not_a_preset")

    def test_schema_is_valid_json_schema(self):
        import jsonschema

        jsonschema.Draft202012Validator.check_schema(configio.schema())
