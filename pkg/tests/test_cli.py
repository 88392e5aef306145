import json

import numpy as np
import pytest

from qthermo.cli import main, run, validate


def write_config(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def engine_config(tmp_path, **overrides):
    cfg = {
        "experiment": "heat-engine",
        "seed": 7,
        "params": {"eps_d": 2.0, "T_c": 0.3, "T_h": 0.8, "mu_c": 1.0,
                   "mu_h": 0.0, "kappa_c": 1.0, "kappa_h": 1.0},
        "sweep": {"name": "eps_d", "start": 0.2, "stop": 4.2, "steps": 9},
        "output": {"path": str(tmp_path / "out.csv"), "format": "csv"},
    }
    cfg.update(overrides)
    return write_config(tmp_path / "config.json", cfg)


def read_body(path):
    """CSV lines without the '#' metadata block."""
    with open(path) as fh:
        return [line for line in fh if not line.startswith("#")]


class TestConfigParsing:
    def test_unknown_top_level_key_rejected(self, tmp_path):
        path = engine_config(tmp_path)
        raw = json.loads(open(path).read())
        raw["bogus"] = 1
        path = write_config(tmp_path / "bad.json", raw)
        assert main(["run", path]) == 2

    def test_unknown_param_rejected(self, tmp_path):
        path = engine_config(tmp_path)
        raw = json.loads(open(path).read())
        raw["params"]["extra"] = 3.0
        path = write_config(tmp_path / "bad.json", raw)
        assert main(["run", path]) == 2

    def test_missing_config_file(self):
        assert main(["run", "/nonexistent/cfg.json"]) == 2

    def test_invalid_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["run", str(bad)]) == 2

    def test_sweep_needs_two_steps(self, tmp_path):
        path = engine_config(
            tmp_path, sweep={"name": "eps_d", "start": 0.0, "stop": 1.0,
                             "steps": 1})
        assert main(["run", path]) == 2

    def test_sweep_bounds_must_be_finite(self, tmp_path):
        cfg = json.loads(open(engine_config(tmp_path)).read())
        cfg["sweep"]["stop"] = 1e400  # json encodes as Infinity -> invalid
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(cfg).replace("Infinity", "1e999"))
        assert main(["run", str(bad)]) == 2

    def test_unknown_experiment(self, tmp_path):
        path = write_config(tmp_path / "c.json",
                            {"experiment": "warp-drive"})
        assert main(["run", path]) == 2


class TestHeatEngineRuns:
    def test_regime_transitions_along_level_sweep(self, tmp_path):
        path = engine_config(tmp_path)
        assert main(["run", path]) == 0
        body = read_body(tmp_path / "out.csv")
        header = body[0].strip().split(",")
        assert header == ["eps_d[param]", "P[kref^2]", "J_c[kref^2]",
                          "J_h[kref^2]", "eta[1]", "regime[-]"]
        regimes = [line.strip().split(",")[-1] for line in body[1:]]
        assert regimes[0] == "joint_heating"
        assert "refrigerator" in regimes
        assert regimes[-1] == "heat_engine"

    def test_lasso_reaches_carnot_at_stopping_voltage(self, tmp_path):
        path = engine_config(
            tmp_path,
            sweep={"name": "mu_c", "start": 0.0, "stop": 1.25, "steps": 26})
        assert main(["run", path]) == 0
        rows = [line.strip().split(",") for line in
                read_body(tmp_path / "out.csv")[1:]]
        power = np.array([float(r[1]) for r in rows])
        eta = np.array([float(r[4]) for r in rows])
        assert power[0] == 0.0 and eta[0] == 0.0
        assert abs(power[-1]) < 1e-12
        assert eta[-1] == pytest.approx(1 - 0.3 / 0.8, abs=1e-12)
        assert power.max() > 0

    def test_rerun_is_byte_identical(self, tmp_path):
        path = engine_config(tmp_path)
        assert main(["run", path]) == 0
        first = read_body(tmp_path / "out.csv")
        assert main(["run", path]) == 0
        assert read_body(tmp_path / "out.csv") == first

    def test_thread_count_does_not_change_output(self, tmp_path, monkeypatch):
        path = engine_config(tmp_path)
        monkeypatch.setenv("QTHERMO_NUM_THREADS", "1")
        assert main(["run", path]) == 0
        serial = read_body(tmp_path / "out.csv")
        monkeypatch.setenv("QTHERMO_NUM_THREADS", "7")
        assert main(["run", path]) == 0
        assert read_body(tmp_path / "out.csv") == serial

    def test_json_output(self, tmp_path):
        out = tmp_path / "out.json"
        path = engine_config(tmp_path, output={"path": str(out),
                                               "format": "json"})
        assert main(["run", path]) == 0
        payload = json.loads(out.read_text())
        assert payload["columns"][0] == "eps_d"
        assert len(payload["rows"]) == 9
        assert all(len(r) == 6 for r in payload["rows"])

    def test_overrides(self, tmp_path):
        alt = tmp_path / "alt.csv"
        path = engine_config(tmp_path)
        assert main(["run", path, "--out", str(alt), "--seed", "99",
                     "--format", "csv"]) == 0
        assert alt.exists()
        meta = [l for l in open(alt) if l.startswith("# seed")]
        assert meta == ["# seed: 99\n"]

    def test_numerical_failure_exit_code(self, tmp_path):
        # eta is undefined at eps_d = mu_h; sweep crossing it aborts
        path = engine_config(
            tmp_path, sweep={"name": "eps_d", "start": -1.0, "stop": 1.0,
                             "steps": 3})
        assert main(["run", path]) == 3


class TestOtherExperiments:
    def test_double_dot_sweep(self, tmp_path):
        path = write_config(tmp_path / "dd.json", {
            "experiment": "double-dot",
            "params": {"eps": 0.0, "g": 0.31, "T_L": 0.01, "T_R": 0.01,
                       "mu_L": 2.0, "mu_R": -2.0, "kappa_L": 1.0,
                       "kappa_R": 1.0},
            "sweep": {"name": "g", "start": 0.05, "stop": 1.4, "steps": 12},
            "output": {"path": str(tmp_path / "dd.csv"), "format": "csv"}})
        assert main(["run", path]) == 0
        rows = [l.strip().split(",") for l in read_body(tmp_path / "dd.csv")[1:]]
        conc = [float(r[1]) for r in rows]
        flags = [int(r[4]) for r in rows]
        assert max(conc) > 0.30
        assert any(flags) and not all(flags)

    def test_single_dot_time_series(self, tmp_path):
        path = write_config(tmp_path / "sd.json", {
            "experiment": "single-dot",
            "params": {"eps_d": 1.0, "p1_initial": 0.9, "t_max": 6.0,
                       "steps": 40,
                       "reservoirs": {"B": {"temperature": 0.5,
                                            "chemical_potential": 0.1,
                                            "coupling": 0.8}}},
            "output": {"path": str(tmp_path / "sd.csv"), "format": "csv"}})
        assert main(["run", path]) == 0
        rows = [l.strip().split(",") for l in read_body(tmp_path / "sd.csv")[1:]]
        p1 = [float(r[1]) for r in rows]
        sigma = [float(r[-1]) for r in rows]
        assert p1[0] == pytest.approx(0.9)
        assert all(a >= b for a, b in zip(p1, p1[1:]))  # relaxes downward
        assert all(s >= -1e-9 for s in sigma)

    def test_absorption_transient_dip(self, tmp_path):
        path = write_config(tmp_path / "abs.json", {
            "experiment": "absorption",
            "params": {"eps_c": 0.3, "eps_h": 1.0, "g": 0.05, "T_c": 0.4,
                       "T_r": 1.0, "T_h": 2.0, "kappa_c": 0.005,
                       "kappa_h": 0.005, "kappa_r": 0.005, "steps": 200},
            "output": {"path": str(tmp_path / "abs.csv"), "format": "csv"}})
        assert main(["run", path]) == 0
        rows = [l.strip().split(",") for l in read_body(tmp_path / "abs.csv")[1:]]
        theta = np.array([float(r[2]) for r in rows])
        on = np.array([int(r[3]) for r in rows])
        assert on[0] == 1 and on[-1] == 0
        # the switched-off tail stays below the starting temperature
        assert theta[on == 0].max() < theta[0]

    def test_absorption_steady_sweep(self, tmp_path):
        path = write_config(tmp_path / "abs2.json", {
            "experiment": "absorption",
            "params": {"eps_c": 0.3, "eps_h": 1.0, "g": 0.05, "T_c": 0.4,
                       "T_r": 1.0, "T_h": 2.0, "kappa_c": 0.02,
                       "kappa_h": 0.03, "kappa_r": 0.025},
            "sweep": {"name": "eps_c", "start": 0.2, "stop": 0.45,
                      "steps": 6},
            "output": {"path": str(tmp_path / "abs2.csv"), "format": "csv"}})
        assert main(["run", path]) == 0
        rows = [l.strip().split(",") for l in
                read_body(tmp_path / "abs2.csv")[1:]]
        cooling = [int(r[-1]) for r in rows]
        assert cooling[0] == 1 and cooling[-1] == 0

    def test_fcs_experiment(self, tmp_path):
        path = write_config(tmp_path / "fcs.json", {
            "experiment": "fcs",
            "params": {"eps_d": 1.0, "T_L": 0.5, "T_R": 0.5, "mu_L": 0.8,
                       "mu_R": -0.8, "kappa_L": 0.6, "kappa_R": 0.4},
            "output": {"path": str(tmp_path / "fcs.csv"), "format": "csv"}})
        assert main(["run", path]) == 0
        rows = [l.strip().split(",") for l in read_body(tmp_path / "fcs.csv")[1:]]
        assert len(rows) == 1
        row = [float(x) for x in rows[0]]
        c1, c2, tur_ratio, tur_bound, tur_ok = (row[0], row[1], row[6],
                                                row[7], row[8])
        assert c1 > 0 and c2 > 0
        assert tur_ratio >= tur_bound and tur_ok == 1

    def test_tpm_experiment(self, tmp_path):
        path = write_config(tmp_path / "tpm.json", {
            "experiment": "tpm",
            "seed": 5,
            "params": {"eps0": 1.0, "angle": 0.9, "beta": 1.0, "tau": 0.7,
                       "n_samples": 20000},
            "output": {"path": str(tmp_path / "tpm.csv"), "format": "csv"}})
        assert main(["run", path]) == 0
        rows = [l.strip().split(",") for l in read_body(tmp_path / "tpm.csv")[1:]]
        assert len(rows) == 4
        p_fwd = sum(float(r[3]) for r in rows)
        counts = sum(int(r[5]) for r in rows)
        assert p_fwd == pytest.approx(1.0, abs=1e-10)
        assert counts == 20000

    def test_trajectories_experiment(self, tmp_path):
        path = write_config(tmp_path / "tj.json", {
            "experiment": "trajectories",
            "seed": 11,
            "params": {"eps_d": 1.0, "T_L": 0.5, "T_R": 0.5, "mu_L": 0.8,
                       "mu_R": -0.8, "kappa_L": 1.0, "kappa_R": 1.0,
                       "tau": 2.0, "n_traj": 20000},
            "output": {"path": str(tmp_path / "tj.csv"), "format": "csv"}})
        assert main(["run", path]) == 0
        rows = {r[0]: (float(r[1]), float(r[2]))
                for r in (l.strip().split(",") for l in
                          read_body(tmp_path / "tj.csv")[1:])}
        est, err = rows["ift_estimate"]
        assert abs(est - 1.0) < 4 * err
        assert rows["negative_sigma_fraction"][0] > 0


class TestValidate:
    def test_local_mode_margin_warning(self, tmp_path, capsys):
        path = write_config(tmp_path / "v.json", {
            "experiment": "double-dot",
            "params": {"eps": 1.0, "g": 1.0, "T_L": 0.5, "T_R": 0.5,
                       "mu_L": 0.2, "mu_R": -0.2, "kappa_L": 1.0,
                       "kappa_R": 1.0, "mode": "local"}})
        assert main(["validate", path]) == 0
        out = capsys.readouterr().out
        assert "warning" in out and "interdot" in out

    def test_fridge_resonance_violation_is_hard_error(self, tmp_path, capsys):
        path = write_config(tmp_path / "v.json", {
            "experiment": "absorption",
            "params": {"eps_c": 0.3, "eps_h": 1.0, "eps_r": 1.2, "g": 0.05,
                       "T_c": 0.4, "T_r": 1.0, "T_h": 2.0, "kappa_c": 0.02,
                       "kappa_h": 0.03, "kappa_r": 0.025}})
        assert main(["validate", path]) == 2
        assert "resonance" in capsys.readouterr().err

    def test_valid_config_silent(self, tmp_path, capsys):
        path = write_config(tmp_path / "v.json", {
            "experiment": "heat-engine",
            "params": {"eps_d": 2.0, "T_c": 0.3, "T_h": 0.8, "mu_c": 1.0,
                       "mu_h": 0.0, "kappa_c": 0.01, "kappa_h": 0.01}})
        assert main(["validate", path]) == 0
        assert capsys.readouterr().out == ""
