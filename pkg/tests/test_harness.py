import json

import pytest

from ddident import __version__
from ddident.cli import main
from ddident.config import ExperimentConfig, fixture_path, load_config, validate_identify
from ddident.errors import ConfigError
from ddident.harness import run_density, run_identify, run_verify, write_outputs


def write_cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def fixture_dict(name):
    return json.loads(fixture_path(name).read_text())


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


# -- config ------------------------------------------------------------------

@pytest.mark.parametrize("name", ["noiseless_k4.cfg", "noise_sweep.cfg", "density_lattice.cfg",
                                  "density_pattern.cfg", "verify_default.cfg"])
def test_config_round_trip(name):
    cfg = load_config(fixture_path(name))
    again = ExperimentConfig.from_dict(json.loads(cfg.dumps()))
    assert again == cfg
    assert again.dumps() == cfg.dumps()
    assert again.digest() == cfg.digest()


def test_unknown_field_rejected():
    with pytest.raises(ConfigError, match="probe.bandwith"):
        ExperimentConfig.from_dict({"probe": {"bandwith": 1.0}})
    with pytest.raises(ConfigError, match="extras"):
        ExperimentConfig.from_dict({"extras": {}})


def test_m_below_2k_rejected_before_compute(monkeypatch):
    import ddident.harness as harness
    data = fixture_dict("noiseless_k4.cfg")
    data["plan"]["M"] = 2 * data["scenario"]["K"] - 1
    data["plan"]["nu_window"] = [-0.4, 0.4]
    cfg = ExperimentConfig.from_dict(data)

    def boom(*a, **k):
        raise AssertionError("simulation ran before validation")

    monkeypatch.setattr(harness, "apply_channel", boom)
    with pytest.raises(ConfigError, match="plan.M"):
        run_identify(cfg)


@pytest.mark.parametrize("section, key, value, field", [
    ("plan", "nu_window", [-4.0, 4.0], "plan.nu_window"),
    ("probe", "T", 7.0, "probe.T"),
    ("scenario", "K", 0, "scenario.K"),
])
def test_identify_validation_fields(section, key, value, field):
    data = fixture_dict("noiseless_k4.cfg")
    data[section][key] = value
    with pytest.raises(ConfigError, match=field):
        validate_identify(ExperimentConfig.from_dict(data))


def test_singular_lattice_rejected(tmp_path, capsys):
    data = fixture_dict("density_lattice.cfg")
    data["lattice"] = [[1, 2], [2, 4]]
    code, _, err = run_cli(capsys, "density", "--config", write_cfg(tmp_path, data),
                           "--out", str(tmp_path / "o"))
    assert code == 2 and "lattice" in err


# -- runners -----------------------------------------------------------------

def test_identify_fixture_recovers_taps():
    out = run_identify(load_config(fixture_path("noiseless_k4.cfg")))
    assert out.passed
    assert out.payload["max_relative_error"] <= 1e-6


def test_pattern_scenario_identifies():
    data = fixture_dict("noiseless_k4.cfg")
    data["scenario"] = {"mode": "pattern", "seed": 3, "index_box": [[0, 2], [-3, 3]],
                        "pattern": {"modulus": 2, "residues": [0]}}
    out = run_identify(ExperimentConfig.from_dict(data))
    assert out.passed and len(out.payload["truth"]) == 6


def test_explicit_scenario():
    data = fixture_dict("noiseless_k4.cfg")
    data["scenario"] = {"mode": "explicit", "seed": 1,
                        "taps": [{"a_re": 1.0, "a_im": 0.0, "tau": 0.0, "nu": 0.0},
                                 {"a_re": 0.0, "a_im": -0.5, "tau": 2.0, "nu": 3.0}]}
    assert run_identify(ExperimentConfig.from_dict(data)).passed


def test_density_lattice_verdict():
    out = run_density(load_config(fixture_path("density_lattice.cfg")))
    assert out.payload["verdict"] == "Identifiable" and out.passed


def test_density_pattern_report():
    out = run_density(load_config(fixture_path("density_pattern.cfg")))
    assert out.payload["exact_density"] == 0.25
    assert out.payload["verdict"] == "Boundary"


def test_verify_zero_signal_is_degenerate():
    data = fixture_dict("verify_default.cfg")
    data["verify"]["signal"] = "zero"
    data["verify"]["trials"] = 3
    out = run_verify(ExperimentConfig.from_dict(data))
    stft = out.payload["stft_bargmann"]
    assert stft["degenerate"] and stft["passed"] and stft["max_abs_err"] == 0.0


def test_verify_coarse_grid_reports_finite_error():
    data = fixture_dict("verify_default.cfg")
    data["verify"]["trials"] = 2
    fine = run_verify(ExperimentConfig.from_dict(data)).payload["stft_bargmann"]["max_abs_err"]
    data["verify"]["stft_dt"] *= 2
    coarse = run_verify(ExperimentConfig.from_dict(data)).payload["stft_bargmann"]["max_abs_err"]
    assert fine < coarse < float("inf")


def test_verify_ratios_stay_within_sharp_constant():
    out = run_verify(load_config(fixture_path("verify_default.cfg")))
    assert out.payload["ratio"]["within_synthesis_bound"]
    assert out.payload["stft_bargmann"]["passed"]


# -- outputs and CLI ---------------------------------------------------------

def test_manifest_contents(tmp_path):
    cfg = load_config(fixture_path("density_lattice.cfg"))
    write_outputs(run_density(cfg), cfg, tmp_path)
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["config_sha256"] == cfg.digest()
    assert man["seed"] == cfg.scenario.seed and man["version"] == __version__
    assert set(man["files"]) == {"density.json", "density.csv"}


@pytest.mark.parametrize("command", ["identify", "density", "verify", "sweep"])
def test_same_seed_is_byte_identical(tmp_path, capsys, command, monkeypatch):
    if command in ("verify", "sweep"):
        # shrink the Monte Carlo work; determinism does not depend on trial count
        name = {"verify": "verify_default.cfg", "sweep": "noise_sweep.cfg"}[command]
        data = fixture_dict(name)
        data["verify" if command == "verify" else "noise"]["trials"] = 5
        cfg = ["--config", write_cfg(tmp_path, data)]
    else:
        cfg = []
    a, b = tmp_path / "a", tmp_path / "b"
    run_cli(capsys, command, *cfg, "--seed", "7", "--out", str(a))
    run_cli(capsys, command, *cfg, "--seed", "7", "--out", str(b))
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) and names
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_seed_changes_outputs(tmp_path, capsys):
    run_cli(capsys, "identify", "--seed", "7", "--out", str(tmp_path / "a"))
    run_cli(capsys, "identify", "--seed", "8", "--out", str(tmp_path / "b"))
    assert ((tmp_path / "a" / "truth.csv").read_bytes()
            != (tmp_path / "b" / "truth.csv").read_bytes())


def test_exit_codes(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "identify", "--check", "--out", str(tmp_path / "ok"))
    assert code == 0 and json.loads(out)["status"] == "PASS"

    data = fixture_dict("density_lattice.cfg")
    data["density"]["expected_verdict"] = "NotIdentifiable"
    code, out, _ = run_cli(capsys, "density", "--config", write_cfg(tmp_path, data),
                           "--out", str(tmp_path / "t"), "--check")
    assert code == 1 and json.loads(out)["status"] == "FAIL"
    code, _, _ = run_cli(capsys, "density", "--config", write_cfg(tmp_path, data),
                         "--out", str(tmp_path / "t2"))
    assert code == 0

    code, _, err = run_cli(capsys, "identify", "--config", str(tmp_path / "missing.cfg"))
    assert code == 2

    data = fixture_dict("noiseless_k4.cfg")
    data["probe"]["B"] = 40.0
    data["plan"]["tau_min"] = -100.0
    code, _, err = run_cli(capsys, "identify", "--config", write_cfg(tmp_path, data, "u.json"),
                           "--out", str(tmp_path / "u"))
    assert code == 2 and "underflow" in err.lower()


def test_numerical_error_exit_code(tmp_path, capsys, monkeypatch):
    import ddident.harness as harness
    from ddident.errors import DegeneratePoleError

    def bad(*a, **k):
        raise DegeneratePoleError("pole at origin")

    monkeypatch.setattr(harness, "estimate_channel", bad)
    code, _, err = run_cli(capsys, "identify", "--out", str(tmp_path / "n"))
    assert code == 3 and "numerical" in err


def test_global_flags_before_subcommand(tmp_path, capsys):
    out = tmp_path / "g"
    code, stdout, _ = run_cli(capsys, "--seed", "7", "--out", str(out), "density")
    assert code == 0 and (out / "density.json").exists()
