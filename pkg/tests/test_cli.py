import json
import subprocess
import sys

import pytest

from degensde.cli import CliError, check_hypotheses, main, run


def write_config(tmp_path, name="config.json", **overrides):
    config = {
        "schema_version": 1,
        "kind": "nonexplosion",
        "name": "powerlaw-smoke",
        "budget": 150,
        "family": {"name": "power_law", "dim": 3, "alpha": 0.3},
        "sim": {"step": 0.01, "horizon": 0.25, "seed": 7},
        "start": [1.0, 0.0, 0.0],
        "params": {},
    }
    config.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return path


def load_report(out_dir, base="powerlaw-smoke"):
    return json.loads((out_dir / f"{base}_report.json").read_text())


def load_manifest(out_dir):
    return json.loads((out_dir / "run_manifest.json").read_text())


# --------------------------------------------------------------------- run


def test_run_writes_report_csv_and_manifest(tmp_path, capsys):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    code = main(["run", str(config), "--out", str(out)])
    assert code == 0
    report = load_report(out)
    manifest = load_manifest(out)
    assert (out / "powerlaw-smoke_report.csv").exists()
    assert manifest["config_hash"] == report["config_hash"]
    assert manifest["seed"] == 7
    assert manifest["seed_generated"] is False
    assert manifest["passed"] is True
    assert manifest["exit_status"] == 0
    assert sorted(manifest["artifacts"]) == [
        "powerlaw-smoke_report.csv",
        "powerlaw-smoke_report.json",
    ]
    stdout = capsys.readouterr().out
    assert "passed       yes" in stdout
    assert "no_explosions" in stdout


def test_run_is_reproducible_modulo_timestamp(tmp_path):
    config = write_config(tmp_path)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["run", str(config), "--out", str(out_a)]) == 0
    assert main(["run", str(config), "--out", str(out_b)]) == 0
    first = load_report(out_a)
    second = load_report(out_b)
    first.pop("timestamp")
    second.pop("timestamp")
    assert first == second


def test_run_threads_do_not_change_results(tmp_path):
    config = write_config(tmp_path, budget=300)
    out_a = tmp_path / "serial"
    out_b = tmp_path / "threaded"
    assert main(["run", str(config), "--out", str(out_a)]) == 0
    assert main(["run", str(config), "--out", str(out_b), "--threads", "3"]) == 0
    first = load_report(out_a)
    second = load_report(out_b)
    first.pop("timestamp")
    second.pop("timestamp")
    assert first == second
    assert load_manifest(out_b)["threads"] == 3


def test_run_failing_verdict_exits_one(tmp_path):
    config = write_config(
        tmp_path,
        name="cubic.json",
        kind="nonexplosion",
        family={"name": "cubic_drift", "dim": 3},
        sim={"step": 1e-4, "horizon": 0.5, "seed": 3},
        start=[2.0, 0.0, 0.0],
        budget=100,
    )
    out = tmp_path / "out"
    code = main(["run", str(config), "--out", str(out)])
    assert code == 1
    manifest = load_manifest(out)
    assert manifest["passed"] is False
    assert manifest["exit_status"] == 1


def test_run_seed_flag_overrides_config(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(config), "--out", str(out), "--seed", "99"]) == 0
    assert load_manifest(out)["seed"] == 99
    assert load_report(out)["seed"] == 99


def test_run_missing_seed_is_drawn_and_recorded(tmp_path):
    config = write_config(tmp_path, sim={"step": 0.01, "horizon": 0.25})
    out = tmp_path / "out"
    assert main(["run", str(config), "--out", str(out)]) == 0
    manifest = load_manifest(out)
    assert manifest["seed_generated"] is True
    assert manifest["seed"] == load_report(out)["seed"]
    assert 0 <= manifest["seed"] < 2**63


def test_run_override_changes_resolved_config_and_hash(tmp_path):
    config = write_config(tmp_path)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["run", str(config), "--out", str(out_a)]) == 0
    assert (
        main(
            [
                "run",
                str(config),
                "--out",
                str(out_b),
                "--override",
                "sim.step=0.005",
                "--override",
                "family.alpha=0.1",
            ]
        )
        == 0
    )
    base = load_manifest(out_a)
    patched = load_manifest(out_b)
    assert patched["resolved_config"]["sim"]["step"] == 0.005
    assert patched["resolved_config"]["family"]["alpha"] == 0.1
    assert patched["config_hash"] != base["config_hash"]


# ------------------------------------------------------------ config errors


def test_inadmissible_alpha_is_a_config_error(tmp_path, capsys):
    config = write_config(
        tmp_path, family={"name": "power_law", "dim": 3, "alpha": 0.5}
    )
    code = main(["run", str(config), "--out", str(tmp_path / "out")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "0.375" in err


def test_low_dimension_is_a_config_error(tmp_path, capsys):
    config = write_config(
        tmp_path, family={"name": "power_law", "dim": 2, "alpha": 0.1}
    )
    assert main(["run", str(config), "--out", str(tmp_path / "out")]) == 2
    assert ">= 3" in capsys.readouterr().err


def test_unknown_config_field_is_rejected(tmp_path, capsys):
    config = write_config(tmp_path, extra_field=1)
    assert main(["run", str(config), "--out", str(tmp_path / "out")]) == 2
    assert "extra_field" in capsys.readouterr().err


def test_wrong_schema_version_is_rejected(tmp_path):
    config = write_config(tmp_path, schema_version=2)
    assert main(["run", str(config), "--out", str(tmp_path / "out")]) == 2


def test_missing_and_malformed_configs_are_usage_errors(tmp_path, capsys):
    assert main(["run", str(tmp_path / "absent.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", str(bad)]) == 2
    assert "JSON" in capsys.readouterr().err


def test_bad_override_is_a_usage_error(tmp_path):
    config = write_config(tmp_path)
    assert main(["run", str(config), "--override", "nonsense"]) == 2


def test_run_rejects_bad_thread_flag(tmp_path):
    config = write_config(tmp_path)
    with pytest.raises(SystemExit):
        main(["run", str(config), "--threads"])
    assert main(["run", str(config), "--threads", "0"]) == 2


# ------------------------------------------------------------------- check


def test_check_power_law_passes_all_hypotheses(tmp_path, capsys):
    config = write_config(
        tmp_path,
        check={
            "n0": 1,
            "window_center": [2.0, 0.0, 0.0],
            "window_radius": 0.5,
            "exponent_margin": 1.0,
        },
    )
    code = main(["check", str(config)])
    out = capsys.readouterr().out
    assert code == 0
    lines = [line for line in out.splitlines() if line]
    assert len(lines) == 4
    for tag, line in zip(("H1", "H2", "H3", "H4"), lines):
        assert line.startswith(tag)
        assert "PASS" in line
    assert "q_tilde" in lines[3]


def test_check_cubic_drift_fails_growth_bound(tmp_path, capsys):
    config = write_config(
        tmp_path,
        name="cubic.json",
        family={"name": "cubic_drift", "dim": 3},
        start=[2.0, 0.0, 0.0],
    )
    code = main(["check", str(config)])
    out = capsys.readouterr().out
    assert code == 1
    h2_line = next(line for line in out.splitlines() if line.startswith("H2"))
    assert "FAIL" in h2_line
    assert "at x =" in h2_line


def test_check_requires_family(tmp_path):
    config = write_config(tmp_path, family=None)
    assert main(["check", str(config)]) == 2


def test_check_rejects_unknown_check_fields(tmp_path):
    config = write_config(tmp_path, check={"mystery": 1})
    assert main(["check", str(config)]) == 2


def test_check_alpha_zero_notes_limiting_choice(tmp_path, capsys):
    config = write_config(
        tmp_path, family={"name": "power_law", "dim": 3, "alpha": 0.0}
    )
    assert main(["check", str(config)]) == 0
    out = capsys.readouterr().out
    assert "limiting choice" in out


# --------------------------------------------------------------- interfaces


def test_python_api_mirrors_main(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    assert run(str(config), out_dir=str(out)) == 0
    assert check_hypotheses(str(config)) == 0
    with pytest.raises(CliError):
        run(str(tmp_path / "absent.json"))


def test_module_entry_point_subprocess(tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "out"
    proc = subprocess.run(
        [
            sys.executable,
            "-m",
            "degensde.cli",
            "run",
            str(config),
            "--out",
            str(out),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "passed       yes" in proc.stdout
    assert (out / "run_manifest.json").exists()


def test_console_script_help_exits_clean():
    proc = subprocess.run(
        [sys.executable, "-m", "degensde.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "run" in proc.stdout and "check" in proc.stdout
