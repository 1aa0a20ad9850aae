import numpy as np
import pytest

from barriertop.errors import ValidationError
from barriertop.microlocal import (BallRegion, ComplementRegion, GridFunction,
                                   TubeRegion, fbi_transform, frequency_mass,
                                   pde_residual, weyl_apply)


def gaussian_state(h, width_scale=1.0, xmax=None, n=None):
    w = width_scale * np.sqrt(h)
    xmax = xmax if xmax is not None else 14 * w
    n = n if n is not None else max(256, int(12 * xmax / np.sqrt(h)))
    x = np.linspace(-xmax, xmax, n)
    return GridFunction((x,), np.exp(-x**2 / (2 * h * width_scale**2)), h)


class TestGridFunction:
    def test_validation(self):
        with pytest.raises(ValidationError):
            GridFunction((np.array([0.0, 1.0, 3.0]),), np.zeros(3), 0.1)
        with pytest.raises(ValidationError):
            GridFunction((np.linspace(0, 1, 4),), np.zeros(5), 0.1)

    def test_norm_and_decay(self):
        u = gaussian_state(0.05)
        want = (np.pi * 0.05) ** 0.25
        assert u.norm_l2() == pytest.approx(want, rel=1e-6)
        assert u.boundary_decay() <= 1e-8

    def test_csv_round_trip(self, tmp_path):
        u = gaussian_state(0.1, n=64, xmax=2.0)
        path = tmp_path / "grid.csv"
        u.save_csv(path)
        v = GridFunction.load_csv(path)
        assert v.h == u.h
        assert np.allclose(v.values, u.values)
        assert np.allclose(v.axes[0], u.axes[0])


class TestFbiTransform:
    def test_gaussian_closed_form(self):
        h = 0.05
        u = gaussian_state(h)
        xa = np.linspace(-0.5, 0.5, 41)
        xia = np.linspace(-0.5, 0.5, 41)
        tu = fbi_transform(u, xa, xia)
        c = 2**-0.5 * (np.pi * h) ** -0.75
        X, XI = np.meshgrid(xa, xia, indexing="ij")
        want = (c * np.sqrt(np.pi * h) * np.exp(1j * X * XI / (2 * h))
                * np.exp(-(X**2 + XI**2) / (4 * h)))
        assert np.max(np.abs(tu.values - want)) <= 1e-8 * np.abs(want).max()
        peak = np.unravel_index(np.argmax(np.abs(tu.values)), tu.values.shape)
        assert xa[peak[0]] == pytest.approx(0.0, abs=1e-12)
        assert xia[peak[1]] == pytest.approx(0.0, abs=1e-12)

    def test_plane_wave_ridge(self):
        h = 0.02
        xi0 = 0.3
        x = np.linspace(-1.5, 1.5, 1200)
        win = np.exp(-(x / 0.7) ** 8)
        u = GridFunction((x,), win * np.exp(1j * x * xi0 / h), h)
        xia = np.linspace(-1.0, 1.0, 201)
        tu = fbi_transform(u, np.array([-0.05, 0.0, 0.05]), xia)
        ridge = xia[np.argmax(np.abs(tu.values[1]))]
        assert ridge == pytest.approx(xi0, abs=xia[1] - xia[0])

    def test_linearity(self):
        h = 0.05
        u = gaussian_state(h)
        v = GridFunction(u.axes, u.values * np.exp(1j * u.axes[0] / h), h)
        xa = np.linspace(-0.3, 0.3, 11)
        xia = np.linspace(-0.5, 1.5, 21)
        t1 = fbi_transform(u, xa, xia).values
        t2 = fbi_transform(v, xa, xia).values
        w = GridFunction(u.axes, 2 * u.values + 1j * v.values, h)
        t3 = fbi_transform(w, xa, xia).values
        assert np.max(np.abs(t3 - 2 * t1 - 1j * t2)) <= 1e-12 * np.abs(t3).max()

    def test_plancherel(self):
        h = 0.02
        u = gaussian_state(h)
        lim = 8 * np.sqrt(h) + 0.1
        xa = np.linspace(-lim, lim, 160)
        xia = np.linspace(-lim, lim, 160)
        tu = fbi_transform(u, xa, xia)
        assert tu.norm_l2() ** 2 == pytest.approx(u.norm_l2() ** 2, rel=1e-3)

    def test_boundary_decay_required(self):
        x = np.linspace(-1, 1, 200)
        u = GridFunction((x,), np.ones(200), 0.05)
        with pytest.raises(ValidationError):
            fbi_transform(u, x, x)


class TestFrequencyMass:
    def test_full_grid_is_total(self):
        h = 0.02
        u = gaussian_state(h)
        lim = 8 * np.sqrt(h) + 0.1
        xa = np.linspace(-lim, lim, 150)
        xia = np.linspace(-lim, lim, 150)
        tu = fbi_transform(u, xa, xia)
        full = BallRegion([0, 0], 10 * lim)

        class Everywhere:
            def mask(self, pts):
                return np.ones(pts.shape[:-1], dtype=bool)

            def bounds(self):
                return None, None

        m = frequency_mass(tu, Everywhere())
        assert m == pytest.approx(u.norm_l2() ** 2, rel=1e-3)

    def test_coherent_state_tail(self):
        masses = {}
        for h in (0.02, 0.01):
            u = gaussian_state(h)
            lim = 1.0
            xa = np.linspace(-lim, lim, 180)
            xia = np.linspace(-lim, lim, 180)
            tu = fbi_transform(u, xa, xia)
            out = ComplementRegion(BallRegion([0.0, 0.0], 0.5),
                                   within=BallRegion([0.0, 0.0], 3.0))
            masses[h] = frequency_mass(tu, out) / u.norm_l2() ** 2
        assert masses[0.02] <= 1e-2
        # halving h at least squares the tail ratio
        assert masses[0.01] <= masses[0.02] ** 2 * 1.5

    def test_empty_region(self):
        u = gaussian_state(0.05)
        tu = fbi_transform(u, np.linspace(-0.4, 0.4, 30),
                           np.linspace(-0.4, 0.4, 30))
        assert frequency_mass(tu, BallRegion([0.013, 0.013], 1e-6)) == 0.0

    def test_region_exceeding_grid(self):
        u = gaussian_state(0.05)
        tu = fbi_transform(u, np.linspace(-0.4, 0.4, 30),
                           np.linspace(-0.4, 0.4, 30))
        with pytest.raises(ValidationError):
            frequency_mass(tu, BallRegion([0.0, 0.0], 2.0))

    def test_tube_region_mask(self):
        tube = TubeRegion([lambda x: x / 2], 0.2, x_bound=1.0)
        pts = np.array([[0.4, 0.2], [0.4, 0.35], [2.0, 1.0]])
        assert list(tube.mask(pts)) == [True, False, False]


class TestWeylApply:
    def test_kinetic_on_plane_wave(self, quad1):
        h = 0.05
        xi0 = 0.4
        x = np.linspace(-2, 2, 1024)
        # ramp smooth to high order so the spectral derivative is clean
        win = np.exp(-(((np.abs(x) - 0.7).clip(0) / 0.35) ** 6) * 6)
        u = GridFunction((x,), win * np.exp(1j * x * xi0 / h), h)
        from barriertop.polynomial import Polynomial

        p = Polynomial.from_terms(2, {(0, 2): 1.0})
        pu = weyl_apply(p, u, h)
        sel = np.abs(x) < 0.5
        assert np.max(np.abs(pu.values[sel] - xi0**2 * u.values[sel])) <= 1e-8

    def test_potential_is_pointwise(self):
        h = 0.05
        u = gaussian_state(h)
        from barriertop.polynomial import Polynomial

        p = Polynomial.from_terms(2, {(2, 0): -0.25})
        pu = weyl_apply(p, u, h)
        want = -0.25 * u.axes[0] ** 2 * u.values
        assert np.max(np.abs(pu.values - want)) <= 1e-12

    def test_mixed_term_symmetrized(self):
        # Op(x xi) = (h/i)(x d/dx + 1/2); on a Gaussian this is
        # (h/i)(-x^2/h + 1/2) u
        h = 0.05
        u = gaussian_state(h)
        from barriertop.polynomial import Polynomial

        p = Polynomial.from_terms(2, {(1, 1): 1.0})
        pu = weyl_apply(p, u, h)
        x = u.axes[0]
        want = (h / 1j) * (-(x**2) / h + 0.5) * u.values
        sel = np.abs(x) < 6 * np.sqrt(h)
        assert np.max(np.abs(pu.values[sel] - want[sel])) <= 1e-8

    def test_real_symbol_symmetry(self, bar1):
        h = 0.05
        u = gaussian_state(h)
        v = GridFunction(u.axes, u.values * np.exp(1j * u.axes[0] * 0.2 / h), h)
        pv = weyl_apply(bar1, v, h)
        ip = np.vdot(v.values, pv.values)
        assert abs(ip.imag) <= 1e-8 * abs(ip)

    def test_unsupported_term(self):
        from barriertop.polynomial import Polynomial

        u = gaussian_state(0.05)
        p = Polynomial.from_terms(2, {(2, 1): 1.0})
        with pytest.raises(ValidationError):
            weyl_apply(p, u, 0.05)


class TestResidual:
    def test_wkb_slope(self, bar1, scenario_1d):
        # amplitude-one incoming state: residual is O(h) from the
        # transport term, slope about 1 in h
        resids = []
        hs = (0.1, 0.05, 0.025)
        for h in hs:
            x = np.linspace(-1.6, 1.6, int(3.2 / (np.sqrt(h) / 6)))
            win = np.exp(-(((np.abs(x) - 0.85) / 0.45).clip(0) ** 2) * 4)
            phi = np.array([scenario_1d.chart_minus.value([v]) for v in x])
            u = GridFunction((x,), win * np.exp(1j * phi / h), h)
            resids.append(pde_residual(bar1, 0.0, h, u,
                                       interior=([-0.6], [0.6])))
        slope = np.polyfit(np.log(hs), np.log(resids), 1)[0]
        assert 0.8 <= slope <= 1.3

    def test_eigenstate_residual(self, bar1):
        # an exact eigenvector of the discretized operator has residual at
        # the discretization level
        h = 0.1
        n = 96
        x = np.linspace(-1.5, 1.5, n)
        cols = []
        for k in range(n):
            e = np.zeros(n, dtype=complex)
            e[k] = 1.0
            cols.append(weyl_apply(bar1, GridFunction((x,), e, h), h).values)
        A = np.stack(cols, axis=1)
        vals, vecs = np.linalg.eig(A)
        k = int(np.argmin(np.abs(vals)))
        u = GridFunction((x,), vecs[:, k], h)
        r = pde_residual(bar1, vals[k], h, u)
        assert r <= 1e-10

    def test_noise_is_order_one(self, bar1):
        rng = np.random.default_rng(3)
        h = 0.05
        x = np.linspace(-2, 2, 400)
        vals = rng.normal(size=400) * np.exp(-(x / 1.2) ** 10)
        u = GridFunction((x,), vals, h)
        assert pde_residual(bar1, 0.0, h, u, interior=([-1.0], [1.0])) >= 0.05
