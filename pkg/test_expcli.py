import csv
import json
import math

import numpy as np
import pytest

import expcli
from expcli import ConfigError


IDEAL_INI = """
[scenario]
id = ideal
seed = 5
tier = ideal

[source]
alpha_sq = 0.5

[channel]
mode = depolarizing
transmittance = 1.0
"""

FULL_INI = """
[scenario]
id = full_small
seed = 3
cutoff = 2

[source]
gamma = 2e-3
mu = 0.09
visibility = 0.95  # mode overlap

[channel]
mode = fixed
upper = 45, 0, 45 deg
lower = 0, 0, 0 deg

[tomography]
shots = 5000
bootstrap = 3
"""


def write_config(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_json(path):
    with open(path) as f:
        return json.load(f)


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_parse_config_defaults_and_settings():
    cfg = expcli.parse_config(FULL_INI)
    assert cfg.scenario_id == "full_small"
    assert cfg.tier == "full"
    assert cfg.channel_mode == "fixed"
    assert cfg.source.visibility == pytest.approx(0.95)
    assert cfg.upper.as_degrees() == pytest.approx((45, 0, 45))
    assert cfg.upper_back is None
    assert cfg.shots == 5000
    assert cfg.t_values == expcli.DEFAULT_T_VALUES
    assert cfg.text == FULL_INI


def test_parse_config_overrides():
    cfg = expcli.parse_config(FULL_INI, {"seed": 11, "shots": None})
    assert cfg.seed == 11
    assert cfg.shots is None


def test_parse_config_calibrate_and_exact():
    text = IDEAL_INI.replace("alpha_sq = 0.5",
                             "alpha_sq = 0.5\nvisibility = calibrate")
    text += "\n[tomography]\nshots = exact\n"
    cfg = expcli.parse_config(text)
    assert cfg.calibrate
    assert cfg.shots is None
    # the ideal tier has no visibility to calibrate
    assert expcli.resolve_visibility(cfg) is cfg


@pytest.mark.parametrize("text, fragment", [
    ("[scenario]\nid = a\n[bogus]\nx = 1\n", "[bogus]"),
    ("[scenario]\nid = a\nspeed = 3\n", "speed"),
    ("[source]\nmu = 0.1\n", "id"),
    ("[scenario]\nid = a\n[channel]\ntransmittance = 1.4\n", "transmittance"),
    ("[scenario]\nid = a\ncutoff = 1\n", "cutoff"),
    ("[scenario]\nid = a\n[source]\nmu = lots\n", "mu"),
    ("[scenario]\nid = a\n[channel]\nupper = 1, 2 deg\n", "upper"),
    ("[scenario]\nid = a\n[channel]\nmode = random\n", "mode"),
    ("[scenario]\nid = a\n[tomography]\nshots = 0\n", "shots"),
    ("[scenario]\nid = a\n[source]\nalpha_sq = 1.5\n", "source"),
    ("[scenario]\nid = a\n[sweep]\nt_values = 1.0, 0.0\n", "t_values"),
])
def test_parse_config_errors_name_the_field(text, fragment):
    with pytest.raises(ConfigError) as e:
        expcli.parse_config(text)
    assert fragment in str(e.value)


@pytest.mark.parametrize("channel, fragment", [
    ("upper_back = 0, 0, 0 deg\n", "upper_back"),
    ("lower_back = 0, 0, 0 deg\ncollective = yes\n", "lower_back"),
    ("collective = no\n", "collective"),
])
def test_fixed_channel_backward_keys_must_agree(channel, fragment):
    text = FULL_INI.replace("lower = 0, 0, 0 deg\n",
                            "lower = 0, 0, 0 deg\n" + channel)
    with pytest.raises(ConfigError) as e:
        expcli.parse_config(text)
    assert fragment in str(e.value)


def test_backward_keys_need_fixed_mode():
    text = IDEAL_INI + "collective = no\nupper_back = 0, 0, 0 deg\n"
    with pytest.raises(ConfigError) as e:
        expcli.parse_config(text)
    assert "only used with mode = fixed" in str(e.value)


def test_decorrelated_fixed_channel():
    text = FULL_INI.replace("lower = 0, 0, 0 deg\n",
                            "lower = 0, 0, 0 deg\ncollective = no\n"
                            "upper_back = 0, 0, 0 deg\n")
    cfg = expcli.parse_config(text)
    channel = expcli._fixed_channel(cfg)
    assert channel.upper_back is cfg.upper_back
    assert channel.lower_back is None
    collective = expcli._fixed_channel(expcli.parse_config(FULL_INI))
    assert collective.upper_back is None and collective.lower_back is None
    ops, same = channel.operators(), collective.operators()
    assert np.allclose(ops.mf.mat, same.mf.mat)
    assert np.allclose(ops.nb.mat, same.nb.mat)
    assert not np.allclose(ops.mb.mat, same.mb.mat)


def test_ideal_tier_with_cutoff_one_is_allowed():
    cfg = expcli.parse_config(IDEAL_INI.replace("tier = ideal",
                                                "tier = ideal\ncutoff = 1"))
    assert cfg.cutoff == 1


def test_bad_config_exits_2_without_output(tmp_path, capsys):
    path = write_config(tmp_path, "[scenario]\nid = a\nbad_key = 1\n")
    out = tmp_path / "out"
    code = expcli.main(["run", "--config", path, "--out", str(out)])
    assert code == expcli.EXIT_CONFIG
    assert not out.exists()
    assert "bad_key" in capsys.readouterr().err


def test_oversized_space_exits_3_without_output(tmp_path, capsys):
    path = write_config(tmp_path, FULL_INI.replace("cutoff = 2",
                                                   "cutoff = 10"))
    out = tmp_path / "out"
    code = expcli.main(["run", "--config", path, "--out", str(out),
                        "--exact"])
    assert code == expcli.EXIT_NUMERIC
    assert not out.exists()
    assert "numerical error" in capsys.readouterr().err


def test_missing_config_file_exits_2(tmp_path):
    code = expcli.main(["run", "--config", str(tmp_path / "none.ini"),
                        "--out", str(tmp_path)])
    assert code == expcli.EXIT_CONFIG


def test_validate(tmp_path, capsys):
    path = write_config(tmp_path, IDEAL_INI)
    assert expcli.main(["validate", "--config", path]) == expcli.EXIT_OK
    assert "ideal: ok" in capsys.readouterr().out


def test_run_ideal_scenario(tmp_path):
    path = write_config(tmp_path, IDEAL_INI)
    out = tmp_path / "out"
    assert expcli.main(["run", "--config", path, "--out", str(out)]) == 0

    result = read_json(out / "ideal" / "results.json")
    assert result["success_prob"] == pytest.approx(0.125)
    assert result["fidelity"] == pytest.approx(1, abs=1e-9)
    assert result["rate_hz"] == pytest.approx(0.125 * 80e6)
    assert (out / "ideal" / "config.ini").read_text() == IDEAL_INI
    assert not (out / "ideal" / "counts.csv").exists()


def test_run_is_deterministic(tmp_path):
    path = write_config(tmp_path, FULL_INI)
    first, second = tmp_path / "a", tmp_path / "b"
    for out in (first, second):
        assert expcli.main(["run", "--config", path, "--out", str(out)]) == 0

    one = (first / "full_small" / "results.json").read_bytes()
    two = (second / "full_small" / "results.json").read_bytes()
    assert one == two
    counts = (first / "full_small" / "counts.csv").read_text().splitlines()
    assert counts[0] == "setting_a,setting_b,counts,total"
    assert len(counts) == 37

    result = read_json(first / "full_small" / "results.json")
    assert result["shots"] == 5000
    assert set(result["errors"]) == {"fidelity", "purity", "concurrence",
                                     "eof"}
    assert 0.5 < result["fidelity"] <= 1


def test_seed_override_changes_counts(tmp_path):
    path = write_config(tmp_path, FULL_INI)
    for seed, out in (("3", "a"), ("4", "b")):
        expcli.main(["run", "--config", path, "--out",
                     str(tmp_path / out), "--seed", seed])
    one = (tmp_path / "a" / "full_small" / "counts.csv").read_text()
    two = (tmp_path / "b" / "full_small" / "counts.csv").read_text()
    assert one != two


def test_exact_flag_skips_sampling(tmp_path):
    path = write_config(tmp_path, FULL_INI)
    out = tmp_path / "out"
    assert expcli.main(["run", "--config", path, "--out", str(out),
                        "--exact"]) == 0
    result = read_json(out / "full_small" / "results.json")
    assert result["shots"] is None
    assert result["errors"] == {}
    assert not (out / "full_small" / "counts.csv").exists()


def test_zero_success_reports_no_state(tmp_path):
    text = IDEAL_INI.replace("mode = depolarizing", "mode = fixed\n"
                             "upper = 0, -45, 0 deg")
    cfg = expcli.parse_config(text)
    record = expcli.cmd_run(cfg, str(tmp_path))
    assert record.success_prob == pytest.approx(0, abs=1e-14)
    assert record.fidelity is None


def test_fit_exponent():
    ts = [1.0, 0.48, 0.17]
    slope, stderr, intercept = expcli.fit_exponent(ts, [3.0 * t for t in ts])
    assert slope == pytest.approx(1.0)
    assert stderr == pytest.approx(0, abs=1e-9)
    assert math.exp(intercept) == pytest.approx(3.0)
    slope, _, _ = expcli.fit_exponent(ts, [0.5 * t ** 2 for t in ts])
    assert slope == pytest.approx(2.0)
    slope, stderr, _ = expcli.fit_exponent([1.0, 0.5], [2.0, 0.5])
    assert slope == pytest.approx(2.0)
    assert stderr == 0.0


def test_fit_exponent_needs_two_points():
    with pytest.raises(expcli.NeedTwoPoints):
        expcli.fit_exponent([1.0], [1.0])
    with pytest.raises(expcli.NeedTwoPoints):
        expcli.fit_exponent([1.0, 0.5], [1.0, 0.0])


def test_sweep_t_ideal(tmp_path):
    cfg = expcli.parse_config(IDEAL_INI)
    summary = expcli.cmd_sweep_t(cfg, str(tmp_path))
    # both directions lose photons in the ideal tier
    assert summary["exponent"] == pytest.approx(2.0)
    rows = read_rows(tmp_path / "ideal" / "sweep_t.csv")
    assert [float(r["transmittance"]) for r in rows] == [1.0, 0.48, 0.17]
    for r in rows:
        assert float(r["fidelity"]) == pytest.approx(1, abs=1e-9)
    saved = read_json(tmp_path / "ideal" / "results.json")
    assert len(saved["points"]) == 3


def test_sweep_t_single_point_exits_2(tmp_path):
    path = write_config(tmp_path, IDEAL_INI + "\n[sweep]\nt_values = 0.5\n")
    code = expcli.main(["sweep-t", "--config", path, "--out",
                        str(tmp_path)])
    assert code == expcli.EXIT_CONFIG


def test_alpha_sweep_ideal(tmp_path):
    cfg = expcli.parse_config(IDEAL_INI)
    summary = expcli.cmd_alpha_sweep(cfg, str(tmp_path),
                                     alpha_sq_values=(0.0, 0.25, 0.5))
    assert summary["min_fidelity"] == pytest.approx(1, abs=1e-9)
    rows = read_rows(tmp_path / "ideal" / "alpha_sweep.csv")
    assert list(rows[0]) == ["alpha_sq", "fidelity", "eof_initial",
                             "eof_final", "success_prob"]
    assert float(rows[0]["eof_initial"]) == pytest.approx(0, abs=1e-9)
    assert float(rows[2]["eof_initial"]) == pytest.approx(1)
    assert float(rows[2]["eof_final"]) == pytest.approx(1, abs=1e-6)


def test_process_tomo_depolarizing(tmp_path):
    cfg = expcli.parse_config(IDEAL_INI.replace("id = ideal", "id = proc"))
    forward, backward = expcli.cmd_process_tomo(cfg, str(tmp_path))
    assert np.allclose(np.diag(forward.mat).real, 0.25, atol=1e-9)
    assert np.allclose(np.diag(backward.mat).real, 0.25, atol=1e-9)
    rows = read_rows(tmp_path / "proc" / "chi_forward.csv")
    assert len(rows) == 16
    assert list(rows[0]) == ["row", "col", "real", "imag"]


def test_process_tomo_fixed_pauli(tmp_path):
    text = IDEAL_INI.replace("mode = depolarizing",
                             "mode = fixed\nupper = 45, 0, 45 deg")
    forward, backward = expcli.cmd_process_tomo(expcli.parse_config(text),
                                                str(tmp_path))
    assert forward["Z", "Z"].real == pytest.approx(1, abs=1e-9)
    assert backward["Z", "Z"].real == pytest.approx(1, abs=1e-9)
    saved = read_json(tmp_path / "ideal" / "results.json")
    assert saved["forward_dominant"][0] == "Z"


def test_process_tomo_with_shots(tmp_path):
    text = IDEAL_INI + "\n[tomography]\nshots = 20000\n"
    forward, _ = expcli.cmd_process_tomo(expcli.parse_config(text),
                                         str(tmp_path))
    assert np.allclose(np.diag(forward.mat).real, 0.25, atol=0.03)


def test_reciprocity_check():
    report = expcli.cmd_reciprocity_check(500, seed=7)
    assert report["max_residual"] < 1e-12
    assert report["pauli_max_residual"] < 1e-12
    assert not report["flagged"]


def test_reciprocity_check_flags_faraday_rotation():
    report = expcli.cmd_reciprocity_check(50, seed=7, faraday=0.3)
    assert report["flagged"]
    assert report["max_residual"] > 0.1


def test_reciprocity_check_cli(capsys):
    code = expcli.main(["reciprocity-check", "--samples", "200",
                        "--seed", "1"])
    assert code == expcli.EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["samples"] == 200
    assert report["flagged"] is False
    assert expcli.main(["reciprocity-check", "--samples", "0"]) == 2


def test_jobs_must_be_positive(tmp_path):
    path = write_config(tmp_path, IDEAL_INI)
    assert expcli.main(["run", "--config", path, "--jobs", "0"]) == 2
