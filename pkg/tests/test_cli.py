import re

import pytest

from homogamy.cli import main
from homogamy.config import ConfigError, manifest_text, read_config_file, resolve


def _outputs(tmp_path, command):
    csvs = sorted(tmp_path.glob(f"{command}-*.csv"))
    manifests = sorted(tmp_path.glob(f"{command}-*.manifest"))
    return csvs, manifests


def test_missing_config_names_path(tmp_path):
    path = tmp_path / "nope.cfg"
    with pytest.raises(ConfigError, match=re.escape(str(path))):
        resolve({}, path)


def test_unknown_key_is_rejected(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[model]\nbeta3 = 0.1\n")
    with pytest.raises(ConfigError, match="beta3"):
        read_config_file(cfg)


def test_key_in_wrong_section(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[ensemble]\nbeta1 = 0.1\n")
    with pytest.raises(ConfigError, match="belongs to"):
        read_config_file(cfg)


def test_beta2_validation_message():
    with pytest.raises(ConfigError, match="0 <= beta2 <= 1"):
        resolve({"beta2": 1.5})


def test_precedence_and_manifest_records_both(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\n[model]\nK = 1000  # trailing\nbeta1 = 0.7\n")
    rc = resolve({"K": [2000.0]}, cfg)
    assert rc["K"] == (2000.0,)
    assert rc["beta1"] == 0.7 and rc.sources["beta1"] == "file"
    assert rc["beta2"] == 0.3 and rc.sources["beta2"] == "default"
    text = manifest_text(rc)
    assert "overridden: K = 1000.0 (file) replaced by 2000.0 (flag)" in text
    assert "K = 2000.0" in text


def test_manifest_round_trip(tmp_path):
    rc = resolve({"seed": 5, "mu": 0.2, "K": [500.0, 1000.0], "mutant": "a"})
    path = tmp_path / "m.manifest"
    path.write_text(manifest_text(rc, {"lambda": 0.1}))
    again = resolve({}, path)
    assert again.values == rc.values


def test_extinction_prob_prints_closed_form(tmp_path, capsys):
    assert main(["extinction-prob", "--rho-a", "1", "--beta1", "0.5", "--out", str(tmp_path)]) == 0
    assert "q_A=0.8 " in capsys.readouterr().out
    csvs, manifests = _outputs(tmp_path, "extinction-prob")
    assert len(csvs) == 1 and len(manifests) == 1
    text = manifests[0].read_text()
    for key in ("lambda", "q_A", "q_a", "pi_A"):
        assert f"# derived: {key} = " in text


def test_check_rates(tmp_path, capsys):
    assert main(["check-rates", "--samples", "1000", "--seed", "7", "--out", str(tmp_path)]) == 0
    worst = float(re.search(r"max-discrepancy=(\S+)", capsys.readouterr().out).group(1))
    assert worst < 1e-12


def test_meanfield_preset(tmp_path, capsys):
    assert main(["meanfield", "--preset", "prop35", "--out", str(tmp_path)]) == 0
    dist = float(re.search(r"distance_to_chi_AP=(\S+)", capsys.readouterr().out).group(1))
    assert dist < 1e-6


def test_meanfield_preset_rejects_bad_start(tmp_path):
    assert main(["meanfield", "--preset", "prop35", "--beta1", "0.2", "--beta2", "0.7",
                 "--out", str(tmp_path)]) == 1


def test_validation_exit_code(tmp_path, capsys):
    assert main(["extinction-prob", "--beta2", "1.5", "--out", str(tmp_path)]) == 1
    assert "0 <= beta2 <= 1" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path, capsys):
    assert main(["figure1", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert "missing.cfg" in capsys.readouterr().err


def test_internal_error_exit_code(tmp_path, monkeypatch):
    import homogamy.cli as cli

    def boom(cfg, out):
        raise RuntimeError("boom")
    monkeypatch.setitem(cli.COMMANDS, "figure1", boom)
    assert main(["figure1", "--out", str(tmp_path)]) == 2


def test_simulate_and_ensemble(tmp_path):
    assert main(["simulate", "--K", "300", "--seed", "2", "--out", str(tmp_path)]) == 0
    assert main(["ensemble", "--K", "300", "--K", "400", "--replicas", "10",
                 "--out", str(tmp_path)]) == 0
    csvs, _ = _outputs(tmp_path, "ensemble")
    assert len(csvs) == 2
    main_csv = [p for p in csvs if not p.name.endswith("-summary.csv")][0]
    assert len(main_csv.read_text().splitlines()) == 21


def test_ensemble_refuses_subcritical(tmp_path):
    args = ["ensemble", "--K", "300", "--replicas", "5", "--beta1", "0.2", "--beta2", "0.7",
            "--rho-a", "0.5", "--out", str(tmp_path)]
    assert main(args) == 1
    assert main(args + ["--allow-subcritical"]) == 0


def test_single_K_commands_reject_schedules(tmp_path):
    assert main(["simulate", "--K", "300", "--K", "400", "--out", str(tmp_path)]) == 1


def test_rerun_from_manifest_is_byte_identical(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["ensemble", "--K", "300", "--replicas", "8", "--seed", "11",
                 "--out", str(first)]) == 0
    manifest = next(first.glob("*.manifest"))
    assert main(["ensemble", "--config", str(manifest), "--out", str(second)]) == 0
    for name in ("", "-summary"):
        a = next(p for p in first.glob("*.csv") if p.name.endswith(f"{name}.csv")
                 and (name or not p.name.endswith("-summary.csv")))
        b = next(p for p in second.glob("*.csv") if p.name.endswith(f"{name}.csv")
                 and (name or not p.name.endswith("-summary.csv")))
        assert a.read_bytes() == b.read_bytes()
