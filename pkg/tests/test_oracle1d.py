import numpy as np
import pytest

from barriertop.errors import PoleError, ValidationError
from barriertop.models import resonance_lattice
from barriertop.oracle1d import (assemble_crossing_solution,
                                 barrier_connection, compare_transition,
                                 scaled_resonances)


class TestBarrierConnection:
    def test_top_transmission(self):
        r = barrier_connection(1.0, 0.0, 0.1, 0.1)
        _, trans = r.outgoing_amplitudes
        assert abs(trans) ** 2 == pytest.approx(0.5, abs=1e-6)
        assert abs(trans) ** 2 == pytest.approx(0.5, abs=2 * r.estimated_error + 1e-7)

    def test_exact_formula_both_signs(self):
        h = 0.1
        for zf in (0.3, -0.3):
            r = barrier_connection(1.0, zf * h, h, 0.1)
            _, trans = r.outgoing_amplitudes
            want = 1.0 / (1.0 + np.exp(-2 * np.pi * zf))
            assert abs(trans) ** 2 == pytest.approx(want, rel=1e-5)

    def test_monotone_in_energy(self):
        h = 0.1
        vals = []
        for zf in (-0.4, -0.2, 0.0, 0.2, 0.4):
            r = barrier_connection(1.0, zf * h, h, 0.1)
            vals.append(abs(r.outgoing_amplitudes[1]) ** 2)
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_unitarity_tight(self):
        r = barrier_connection(1.0, 0.02, 0.05, 0.1, match_tol=1e-9)
        refl, trans = r.outgoing_amplitudes
        assert abs(abs(refl) ** 2 + abs(trans) ** 2 - 1.0) <= 1e-8

    def test_radius_doubling_stability(self):
        # moduli move below 1e-8 under doubling at a tight matching budget
        r = barrier_connection(1.0, 0.0, 0.05, 0.1, match_tol=1e-9)
        assert r.estimated_error <= 1e-8

    def test_radius_floor(self):
        with pytest.raises(ValidationError):
            barrier_connection(1.0, 0.0, 0.1, 0.1, X0=0.5)
        with pytest.raises(ValidationError):
            barrier_connection(1.0, 0.0, 0.1, 0.1, tol=1e-16)


class TestScaledResonances:
    def test_string_values(self):
        res = scaled_resonances(1.0, 0.05, 3)
        want = [-0.025j, -0.075j, -0.125j]
        for r, w in zip(res, want):
            assert abs(r - w) / abs(w) <= 1e-4

    def test_matches_lattice(self):
        h = 0.05
        res = scaled_resonances(1.0, h, 4)
        lat = resonance_lattice([1.0], h, 0.5)
        for k, r in enumerate(res):
            assert abs(r - lat.points[k]) / abs(lat.points[k]) <= 1e-4

    def test_spacing(self):
        h = 0.1
        res = scaled_resonances(1.0, h, 4)
        gaps = np.diff([r.imag for r in res])
        assert np.allclose(gaps, -h, atol=1e-4 * h)

    def test_validation(self):
        with pytest.raises(ValidationError):
            scaled_resonances(1.0, 0.1, 3, grid_size=500)
        with pytest.raises(ValidationError):
            scaled_resonances(1.0, 0.1, 11)


class TestCompareTransition:
    def test_pointwise_and_slope(self, scenario_1d):
        rep = compare_transition(scenario_1d, [0.0, 0.3, -0.3], [0.1, 0.05],
                                 x_target=-1.0, z_in_units_of_lambda_h=True)
        for row in rep["rows"]:
            assert row["rel_err_modulus"] <= 0.5 * row["h"]
        assert rep["loglog_slope"] >= 0.9

    def test_csv_report(self, tmp_path, scenario_1d):
        path = tmp_path / "cmp.csv"
        compare_transition(scenario_1d, [0.0], [0.1], x_target=-1.0,
                           z_in_units_of_lambda_h=True, csv_path=path)
        header = path.read_text().splitlines()[0].split(",")
        assert header[:6] == ["z_re", "z_im", "h", "T_oracle_abs", "T_J_abs",
                              "rel_err_modulus"]

    def test_near_lattice_behavior(self, scenario_1d):
        # the operator refuses z on the spectral string; the oracle stays
        # finite there
        from barriertop.transition import transition_symbol

        h = scenario_1d.spectral.h
        z = -0.5j * h
        with pytest.raises(PoleError):
            transition_symbol(scenario_1d.with_z(z), [0.5])
        r = barrier_connection(1.0, z, h, 0.1)
        assert np.isfinite(abs(r.outgoing_amplitudes[1]))


class TestAssembledSolution:
    def test_pieces_present(self, scenario_1d):
        h = scenario_1d.spectral.h
        dx = np.sqrt(h) / 6
        xg = np.linspace(-1.2, 1.2, int(np.ceil(2.4 / dx)))
        u = assemble_crossing_solution(scenario_1d, xg)
        mag = np.abs(u.values)
        assert mag[np.abs(xg - 0.5) < 0.05].max() > 0.5
        assert mag[np.abs(xg + 0.5) < 0.05].max() > 0.2
        assert u.boundary_decay() <= 1e-8
