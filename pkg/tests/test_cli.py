import json

import numpy as np
import pytest

from barriertop.cli import run


def write_config(tmp_path, **overrides):
    cfg = {
        "model": {"dim": 1, "lambdas": [1.0], "kind": "schrodinger_barrier"},
        "scenario": {"epsilon": 0.1, "domain_radius": 1.3},
        "spectral": {"h": [0.1], "z": [[0.0, 0.0]], "C0": 0.6, "C1": 0.6,
                     "nu": 0.05},
        "lattice": {"bound": 0.2},
        "transition": {"x_targets": [[0.5], [-0.5]]},
        "output_dir": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def strip_stamp(path):
    return [ln for ln in path.read_text().splitlines()
            if not ln.startswith("#")]


class TestSubcommands:
    def test_lattice_rows(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run("lattice", cfg) == 0
        rows = strip_stamp(tmp_path / "out" / "lattice.csv")
        assert rows[0] == "re,im,alpha_0"
        assert rows[1].split(",") == ["0.0", "-0.05", "0"]
        assert rows[2].split(",")[2] == "1"
        assert abs(float(rows[2].split(",")[1]) + 0.15) < 1e-12

    def test_model_report(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run("model", cfg) == 0
        rep = json.loads((tmp_path / "out" / "model.json").read_text())
        assert rep["eigenvalues"] == [-1.0, 1.0]
        assert rep["linear_field"] == [[0.0, 2.0], [0.5, 0.0]]
        assert "config_sha256" in rep and "tool_version" in rep

    def test_flow_energy_column(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run("flow", cfg) == 0
        rows = strip_stamp(tmp_path / "out" / "trajectory.csv")
        energies = [float(r.split(",")[-1]) for r in rows[1:]]
        assert np.ptp(energies) <= 1e-9

    def test_transition_and_determinism(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run("transition", cfg) == 0
        body1 = strip_stamp(tmp_path / "out" / "transition.csv")
        assert run("transition", cfg) == 0
        body2 = strip_stamp(tmp_path / "out" / "transition.csv")
        assert body1 == body2
        val = float(body1[1].split(",")[4]) + 1j * float(body1[1].split(",")[5])
        assert abs(val) == pytest.approx(np.sqrt(np.pi * 0.1 / 0.5), rel=1e-6)

    def test_transition_parallel_matches(self, tmp_path):
        cfg = write_config(tmp_path,
                           spectral={"h": [0.1], "z": [[0.0, 0.0], [0.02, 0.0]],
                                     "C0": 0.6, "C1": 0.6, "nu": 0.05})
        assert run("transition", cfg) == 0
        serial = strip_stamp(tmp_path / "out" / "transition.csv")
        assert run("transition", cfg, jobs=2) == 0
        parallel = strip_stamp(tmp_path / "out" / "transition.csv")
        assert serial == parallel

    def test_verify_report(self, tmp_path):
        cfg = write_config(tmp_path, verify={
            "z_scaled": [0.0], "h_list": [0.1, 0.05], "x_target": -1.0,
            "resonance_count": 3, "resonance_h": [0.1],
            "tube_thickness": 0.15})
        assert run("verify", cfg) == 0
        rep = json.loads((tmp_path / "out" / "verify.json").read_text())
        t2 = rep["oracle_rows"][0]["T_oracle_abs"] ** 2
        assert t2 == pytest.approx(0.5, abs=1e-5)
        assert rep["resonance_match"][0]["max_rel_err"] <= 1e-4


class TestErrors:
    def test_malformed_config(self, tmp_path):
        cfg = write_config(tmp_path,
                           model={"dim": 1, "lambdas": [-1.0],
                                  "kind": "schrodinger_barrier"})
        assert run("lattice", cfg) == 2

    def test_unparseable_config(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        assert run("lattice", path) == 2

    def test_numerical_failure_exit_code(self, tmp_path):
        # z pinned on the amplitude pole: transition must exit 3
        cfg = write_config(
            tmp_path,
            spectral={"h": [0.1], "z": [[0.0, -0.05]], "C0": 0.6, "C1": 0.6,
                      "nu": 0.05})
        assert run("transition", cfg, out=str(tmp_path / "out")) == 3
