import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from holevo.cli import main
from holevo.io import ConfigValidationError, apply_override, csv_text, validate_config

ROOT = Path(__file__).resolve().parents[1]


def _write(tmp_path, cfg, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(cfg))
    return p


BOUNDS = {"schema_version": 1, "command": "bounds", "model": {"kind": "spin", "dim": 2, "coords": [0.4, 0.0, 0.0]}}


def test_bounds_report(tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(_write(tmp_path, BOUNDS)), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["bounds"]["hel"] == pytest.approx(0.59, abs=1e-9)
    assert rep["bounds"]["hn"] == pytest.approx(0.99, abs=1e-9)
    assert rep["provenance"]["schema_version"] == 1
    assert "shot-noise" in rep["units"]


def test_repeat_runs_byte_identical(tmp_path):
    cfg = _write(tmp_path, {**BOUNDS, "command": "simulate-linear", "scheme": {"samples": 5000}, "seed": 3})
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", str(cfg), "--out", str(a)])
    main(["run", "--config", str(cfg), "--out", str(b)])
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    # the thread count enters the config hash but not the numbers
    c = tmp_path / "c"
    main(["run", "--config", str(cfg), "--out", str(c), "--threads", "3"])
    ra, rc = (json.loads((d / "report.json").read_text())["run"] for d in (a, c))
    assert ra["scaled_error"] == rc["scaled_error"]


def test_seed_flag_changes_provenance(tmp_path):
    cfg = _write(tmp_path, {**BOUNDS, "command": "simulate-linear", "scheme": {"samples": 2000}})
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "s"), "--seed", "11"])
    rep = json.loads((tmp_path / "s" / "report.json").read_text())
    assert rep["provenance"]["seed"] == 11


def test_unknown_key_is_config_error(tmp_path, capsys):
    cfg = _write(tmp_path, {**BOUNDS, "colour": "blue"})
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigValidationError"
    assert "colour" in err["message"]


def test_missing_model_file(tmp_path, capsys):
    cfg = _write(tmp_path, {"schema_version": 1, "command": "bounds", "model": {"file": "nope.yaml"}})
    assert main(["run", "--config", str(cfg)]) == 2


def test_empty_sweep_refused(tmp_path, capsys):
    cfg = _write(tmp_path, {**BOUNDS, "command": "simulate-linear", "sweep": {"axis": "M", "values": []}})
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "at least one value" in json.loads(capsys.readouterr().err)["message"]


def test_linear_sweep_writes_csv(tmp_path):
    cfg = _write(tmp_path, {**BOUNDS, "command": "simulate-linear", "scheme": {"samples": 2000}})
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfg), "--axis", "M", "--values", "100,200", "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("# units:")
    assert lines[1].startswith("value,")
    assert len(lines) == 4


def test_override_parsing():
    cfg = apply_override({"scheme": {"M": 1}}, "scheme.M=20")
    assert cfg["scheme"]["M"] == 20
    with pytest.raises(ConfigValidationError):
        apply_override({}, "no-equals")


def test_schema_rejects_bad_types():
    with pytest.raises(ConfigValidationError):
        validate_config({**BOUNDS, "scheme": {"M": "many"}})
    with pytest.raises(ConfigValidationError):
        validate_config({"schema_version": 1, "command": "bounds"})


def test_csv_header():
    text = csv_text(["a", "b"], [[1, 0.5]])
    assert text.splitlines() == ["# units: shot-noise units (vacuum quadrature variance 1/2), hbar = 1", "a,b", "1,0.5"]


@pytest.mark.parametrize("name", sorted(p.name for p in (ROOT / "configs").glob("*.yaml")))
def test_shipped_configs_validate(name):
    from holevo.io import load_config

    cfg, _ = load_config(ROOT / "configs" / name)
    validate_config(cfg)


def test_validate_command(tmp_path):
    out = subprocess.run(
        [sys.executable, "-m", "holevo.cli", "validate", "--out", str(tmp_path / "v")],
        capture_output=True, text=True,
    )
    assert out.returncode == 0, out.stdout + out.stderr
    assert out.stdout.count("PASS") == 8
