import json
import hashlib
import warnings
from pathlib import Path

import numpy as np
import pytest

from dressedspin.cli import ConfigError, ConfigWarning, main, parse_config, serialize_config
from dressedspin.experiments import ExperimentResult

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

NOISY_RAMSEY = """\
[run]
seed = 7

[spin]
omega_ghz = 3.394

[noise]
kind = quasi-static
sigma_khz = 300

[experiment]
type = ramsey
sweep_start_us = 0
sweep_stop_us = 1
sweep_points = 11
rabi_mhz = 50
detuning_mhz = 3
shots = 40
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_minimal_config_parses():
    cfg = parse_config((CONFIGS / "bare_rabi.ini").read_text())
    assert cfg.get("spin", "omega") == pytest.approx(3.394e9)
    assert cfg.get("experiment", "sweep_stop") == pytest.approx(200e-9)
    assert cfg.get("experiment", "sweep_points") == 81
    assert cfg.seed is None


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.ini")))
def test_shipped_configs_round_trip(name):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConfigWarning)
        cfg = parse_config((CONFIGS / name).read_text())
        text = serialize_config(cfg)
        again = parse_config(text)
    assert again == cfg
    assert serialize_config(again) == text


def test_units_are_canonicalised():
    a = parse_config("[spin]\nomega_ghz = 3.394\ndressing_rabi_khz = 76000\n")
    b = parse_config("[spin]\nomega_mhz = 3394\ndressing_rabi_mhz = 76\n")
    assert a.sha256() == b.sha256()


@pytest.mark.parametrize("text,line,column", [
    ("[spin]\nomega_ghz = 3.394\n\n[bogus]\nx = 1\n", 4, 1),
    ("[spin]\nomega_ghz = 3.394\n  \ncolour_mhz = 5\n", 4, 1),
    ("[spin]\nomega = 3.394\n", 2, 1),
])
def test_errors_carry_location(text, line, column):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert (info.value.line, info.value.column) == (line, column)
    assert f"line {line}" in str(info.value)


def test_missing_unit_suffix_is_named():
    with pytest.raises(ConfigError, match="unit suffix"):
        parse_config("[spin]\nomega = 3.394e9\n")


def test_bad_value_and_choice():
    with pytest.raises(ConfigError):
        parse_config("[spin]\nomega_ghz = fast\n")
    with pytest.raises(ConfigError):
        parse_config("[noise]\nkind = pink\n")


def test_noisy_config_needs_seed():
    text = NOISY_RAMSEY.replace("[run]\nseed = 7\n", "")
    with pytest.raises(ConfigError, match="seed"):
        parse_config(text)
    assert parse_config(text, seed=3).seed == 3


def test_duty_above_plan_warns():
    text = "[device]\nrf_power_mw = 2.3\nduty_percent = 80\n"
    with pytest.warns(ConfigWarning, match="duty"):
        parse_config(text)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConfigWarning)
        parse_config("[device]\nrf_power_mw = 2.3\nduty_percent = 40\n")


def test_dressed_ramsey_config_is_accepted():
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConfigWarning)
        cfg = parse_config((CONFIGS / "ramsey_dressed.ini").read_text())
    assert cfg.get("spin", "dressing_rabi") == pytest.approx(76e6)
    assert cfg.get("noise", "sigma") == pytest.approx(165.5e3)
    assert cfg.seed == 1


# main ---------------------------------------------------------------------

def test_rabi_run_writes_result_and_manifest(tmp_path, capsys):
    code = main(["rabi", "--config", str(CONFIGS / "bare_rabi.ini"), "--out", str(tmp_path)])
    assert code == 0
    result = ExperimentResult.from_csv(tmp_path / "result.csv")
    assert result.sweep_values.size == 81
    manifest = json.loads((tmp_path / "result_manifest.json").read_text())
    assert manifest["command"] == "rabi"
    assert manifest["seed"] is None
    assert manifest["config_sha256"] == hashlib.sha256(manifest["config_text"].encode()).hexdigest()
    names = {f["path"] for f in manifest["files"]}
    assert {"result.csv", "result_fit.txt", "result_fit.json"} <= names
    for entry in manifest["files"]:
        assert hashlib.sha256((tmp_path / entry["path"]).read_bytes()).hexdigest() == entry["sha256"]
    fit = json.loads((tmp_path / "result_fit.json").read_text())
    assert "frequency" in json.dumps(fit)
    assert "frequency" in capsys.readouterr().out


def test_json_format(tmp_path):
    assert main(["rabi", "--config", str(CONFIGS / "bare_rabi.ini"), "--out", str(tmp_path), "--format", "json"]) == 0
    records = json.loads((tmp_path / "result.json").read_text())
    assert len(records) == 81
    assert not (tmp_path / "result.csv").exists()


def test_noisy_output_is_byte_identical_across_runs_and_threads(tmp_path):
    cfg = write(tmp_path, "ramsey.ini", NOISY_RAMSEY)
    outs = []
    for k, threads in enumerate(("1", "1", "2")):
        out = tmp_path / f"run{k}"
        assert main(["ramsey", "--config", cfg, "--out", str(out), "--threads", threads]) == 0
        outs.append((out / "result.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    other = tmp_path / "other"
    assert main(["ramsey", "--config", cfg, "--out", str(other), "--seed", "8"]) == 0
    assert (other / "result.csv").read_bytes() != outs[0]


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = write(tmp_path, "bad.ini", "[spin]\nomega_ghz = 3.394\nwobble_mhz = 3\n")
    assert main(["rabi", "--config", cfg, "--out", str(tmp_path)]) == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["exit_code"] == 2
    assert record["line"] == 3
    assert main(["rabi", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path)]) == 2


def test_threads_must_be_positive(tmp_path):
    assert main(["rabi", "--config", str(CONFIGS / "bare_rabi.ini"), "--out", str(tmp_path), "--threads", "0"]) == 2


def test_tune_recovers_field_and_amplitude(tmp_path, capsys):
    assert main(["tune", "--config", str(CONFIGS / "tune.ini"), "--out", str(tmp_path), "--format", "json"]) == 0
    rec = {r["quantity"]: r["value"] for r in json.loads((tmp_path / "result_tune.json").read_text())}
    assert rec["B"] == pytest.approx(1.2, abs=1e-6)
    assert rec["A"] == pytest.approx(1.0, abs=1e-6)
    assert abs(rec["residual_1"]) < 1e3 and abs(rec["residual_2"]) < 1e3


def test_tune_without_solution_exits_3(tmp_path):
    text = (CONFIGS / "tune.ini").read_text().replace("omega_c_hz = 3297537887.4876466", "omega_c_ghz = 3.5")
    assert main(["tune", "--config", write(tmp_path, "t.ini", text), "--out", str(tmp_path)]) == 3
    assert (tmp_path / "result_manifest.json").exists()


def test_fit_on_flat_curve_exits_4(tmp_path):
    flat = ExperimentResult("odar", "probe-frequency", np.linspace(3.3e9, 3.34e9, 21), np.full(21, 0.1),
                            np.zeros(21), 1)
    flat.to_csv(tmp_path / "flat.csv")
    assert main(["fit", "--input", str(tmp_path / "flat.csv"), "--model", "peak", "--out", str(tmp_path)]) == 4
    assert main(["fit", "--input", str(tmp_path / "flat.csv"), "--out", str(tmp_path)]) == 2


def test_fit_command_recovers_rabi(tmp_path):
    assert main(["rabi", "--config", str(CONFIGS / "bare_rabi.ini"), "--out", str(tmp_path)]) == 0
    out = tmp_path / "refit"
    assert main(["fit", "--input", str(tmp_path / "result.csv"), "--model", "damped-sine", "--out", str(out)]) == 0
    fit = json.loads((out / "result_fit.json").read_text())
    params = {p["parameter"]: p["value"] for p in fit["parameters"]}
    assert fit["converged"]
    assert params["frequency"] == pytest.approx(20e6, rel=1e-3)


def test_device_report(tmp_path, capsys):
    assert main(["device-report", "--config", str(CONFIGS / "device.ini"), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "result_device.txt").read_text()
    assert "net_gain" in text and "duty_cycle" in text
    assert text == capsys.readouterr().out
