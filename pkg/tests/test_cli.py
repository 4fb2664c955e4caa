# Global imports
import json

import pytest

from jumpfisher.__main__ import get_parser, main


def _read_json(path):
    with open(path, encoding="utf-8") as source:
        return json.load(source)


def test_model_list(capsys):
    assert main(["model", "list"]) == 0
    output = capsys.readouterr().out
    assert "qubit-thermometer" in output
    assert "coupled-qubits" in output


def test_model_describe(capsys):
    assert main(["model", "describe", "coupled-qubits", "--set", "g=0.2"]) == 0
    assert "renewal: False" in capsys.readouterr().out
    assert main(["model", "describe"]) == 2


def test_missing_command():
    assert main([]) == 2


def test_unknown_option():
    assert main(["fisher", "--bogus"]) == 2


def test_global_flags_follow_the_command():
    arguments = vars(get_parser().parse_args(["simulate", "--seed", "5", "--debug"]))
    assert arguments["seed"] == 5
    assert arguments["debug"]


def test_renewal_fisher_of_fluorescence(tmp_path):
    code = main(
        [
            "fisher",
            "--model",
            "resonant-fluorescence",
            "--param",
            "Omega",
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 0
    report = _read_json(tmp_path / "fisher_renewal.json")
    assert report["fisher"] == pytest.approx(12.0, rel=1e-6)
    assert report["param"] == "Omega"
    manifest = _read_json(tmp_path / "manifest.json")
    assert manifest["command"] == "fisher"
    assert "fisher_renewal.json" in manifest["outputs"]
    assert manifest["config"]["model_params"] == {"Omega": 1.0, "Gamma": 1.0}


def test_renewal_sweep(tmp_path):
    code = main(
        [
            "fisher",
            "--model",
            "qubit-thermometer",
            "--param",
            "nbar",
            "--sweep",
            "Omega=0.5:1.5:3",
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 0
    lines = (tmp_path / "renewal_sweep.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4


def test_renewal_mode_rejects_coupled_qubits(tmp_path):
    code = main(["fisher", "--model", "coupled-qubits", "--out-dir", str(tmp_path)])
    assert code == 4
    assert not (tmp_path / "manifest.json").exists()


def test_monte_carlo_mode_needs_a_stop_rule(tmp_path):
    assert main(["simulate", "--model", "qubit-thermometer"]) == 2
    code = main(
        ["fisher", "--mode", "gillespie", "--model", "qubit-thermometer"]
    )
    assert code == 2


def test_simulation_is_reproducible(tmp_path):
    outputs = []
    for name, threads in (("first", "1"), ("second", "3")):
        out_dir = tmp_path / name
        code = main(
            [
                "simulate",
                "--model",
                "qubit-thermometer",
                "--stop-jumps",
                "5",
                "--trajectories",
                "4",
                "--seed",
                "7",
                "--threads",
                threads,
                "--out-dir",
                str(out_dir),
            ]
        )
        assert code == 0
        outputs.append((out_dir / "records.jsonl").read_text(encoding="utf-8"))
    assert outputs[0] == outputs[1]
    assert len(outputs[0].splitlines()) == 4


def test_config_file_settings(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(
        json.dumps(
            {
                "model": "qubit-thermometer",
                "params": {"nbar": 0.8},
                "settings": {"seed": 3, "trajectories": 2},
            }
        ),
        encoding="utf-8",
    )
    code = main(
        [
            "simulate",
            "--config",
            str(config),
            "--stop-time",
            "2",
            "--trajectories",
            "3",
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 0
    records = (tmp_path / "records.jsonl").read_text(encoding="utf-8").splitlines()
    # the command line wins over the file
    assert len(records) == 3
    assert json.loads(records[0])["seed"] == 3
    manifest = _read_json(tmp_path / "manifest.json")
    assert manifest["seed"] == 3
    assert manifest["config"]["model_params"]["nbar"] == 0.8


def test_invalid_settings(tmp_path):
    code = main(
        [
            "simulate",
            "--model",
            "qubit-thermometer",
            "--stop-jumps",
            "3",
            "--trajectories",
            "0",
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 2


def test_estimate_from_empty_records(tmp_path):
    records = tmp_path / "records.jsonl"
    records.write_text("", encoding="utf-8")
    code = main(
        [
            "estimate",
            "--model",
            "resonant-fluorescence",
            "--records",
            str(records),
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 2


def test_estimation_study(tmp_path):
    code = main(
        [
            "estimate",
            "--model",
            "resonant-fluorescence",
            "--param",
            "Omega",
            "--stop-jumps",
            "20",
            "--trajectories",
            "6",
            "--estimator",
            "mle-renewal",
            "--interval",
            "0.3:3",
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 0
    summary = _read_json(tmp_path / "study_summary.json")
    assert summary["records"] == 6
    assert summary["estimator"] == "mle-renewal"
    # renewal reference: 20 jumps at 12 per jump
    assert summary["cr_bound"] == pytest.approx(1.0 / 240.0, rel=1e-5)
    assert (tmp_path / "records.jsonl").exists()
    assert (tmp_path / "study_estimates.csv").exists()


def test_unknown_compression_mode(tmp_path):
    code = main(
        [
            "compress",
            "--model",
            "resonant-fluorescence",
            "--stop-jumps",
            "5",
            "--modes",
            "labels-only",
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 2


def test_sample_mean_compression(tmp_path):
    code = main(
        [
            "compress",
            "--model",
            "resonant-fluorescence",
            "--param",
            "Omega",
            "--stop-jumps",
            "10",
            "--modes",
            "sample-mean,channels-only",
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 0
    lines = (tmp_path / "compression.csv").read_text(encoding="utf-8").splitlines()
    assert lines[1].startswith("sample-mean,")
    assert lines[2].startswith("channels-only,")
