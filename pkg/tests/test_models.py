import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barriertop.errors import ValidationError
from barriertop.models import (PhasePoint, branch_roots, distance_to_lattice,
                               lattice_to_csv, linearize, load_model_file,
                               make_barrier_model, make_quadratic_model,
                               model_from_spec, resonance_lattice,
                               spectral_params)


class TestQuadraticModel:
    def test_on_outgoing_subspace(self, quad1):
        # p0 = (xi^2 - x^2)/2 vanishes on xi = x
        assert quad1.p0([2.0], [2.0]) == pytest.approx(0.0, abs=1e-14)

    def test_direct_substitution(self):
        m = make_quadratic_model([1.0, 2.0])
        assert m.p0([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.5)

    def test_eigenvalues(self):
        m = make_quadratic_model([3.0])
        lin = linearize(m)
        assert np.allclose(sorted(lin.eigenvalues), [-3.0, 3.0], atol=1e-12)
        # outgoing tangent spanned by (1, 1)
        assert lin.unstable_graph == pytest.approx(np.array([[1.0]]))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            make_quadratic_model([1.0, -2.0])
        with pytest.raises(ValidationError):
            make_quadratic_model([])

    def test_sorts_internally(self):
        m = make_quadratic_model([2.0, 1.0])
        assert np.allclose(m.lambdas, [1.0, 2.0])


class TestBarrierModel:
    def test_linear_field_matrix(self, bar1):
        lin = linearize(bar1)
        assert np.allclose(lin.F_p, [[0.0, 2.0], [0.5, 0.0]], atol=1e-14)
        assert np.allclose(sorted(lin.eigenvalues), [-1.0, 1.0], atol=1e-12)

    def test_cubic_keeps_critical_point(self):
        m = make_barrier_model([1.0], {(3,): 0.1})
        g = m.grad_p0(np.zeros(1), np.zeros(1))
        assert np.max(np.abs(g)) <= 1e-14

    def test_quartic_keeps_hessian(self):
        m0 = make_barrier_model([1.0, 2.0])
        m = make_barrier_model([1.0, 2.0], {(4, 0): 0.05})
        h0 = m0.hess_p0(np.zeros(2), np.zeros(2))
        h = m.hess_p0(np.zeros(2), np.zeros(2))
        assert np.allclose(h, h0, atol=1e-14)

    def test_low_order_perturbation_rejected(self):
        with pytest.raises(ValidationError):
            make_barrier_model([1.0], {(2,): 0.1})
        with pytest.raises(ValidationError):
            make_barrier_model([1.0], {(3,): 0.1, (7,): 0.1})

    def test_block_eigenvalues(self, bar12):
        lin = linearize(bar12)
        assert np.allclose(lin.eigenvalues, [-2, -1, 1, 2], atol=1e-12)

    def test_graphs(self, bar12):
        lin = linearize(bar12)
        assert np.allclose(lin.unstable_graph, np.diag([0.5, 1.0]), atol=1e-10)
        assert np.allclose(lin.stable_graph, np.diag([-0.5, -1.0]), atol=1e-10)


class TestBranchRoots:
    def test_quadratic_roots(self, quad1):
        # (xi^2 - eps^2)/2 = 0 has roots +-eps
        eps = 0.4
        fm, fp = branch_roots(quad1, [eps])
        assert fm == pytest.approx(-eps, abs=1e-12)
        assert fp == pytest.approx(+eps, abs=1e-12)

    def test_barrier_roots(self, bar1):
        fm, fp = branch_roots(bar1, [0.3])
        assert (fm, fp) == (pytest.approx(-0.15), pytest.approx(0.15))

    def test_perturbed_radicand(self, bar1_pert):
        fm, fp = branch_roots(bar1_pert, [0.3])
        want = np.sqrt(0.3**2 / 4 - 0.1 * 0.3**3)
        assert fp == pytest.approx(want, abs=1e-12)
        assert fm == pytest.approx(-want, abs=1e-12)

    def test_forbidden_gives_principal_branch(self, bar1):
        fm, fp = branch_roots(bar1, [0.1], np.array([]))
        assert fp.imag == 0
        m = make_barrier_model([1.0, 2.0])
        fm, fp = branch_roots(m, [0.0, 0.0], [0.3])
        assert fp == pytest.approx(0.3j)

    def test_residual_property(self, bar12_pert):
        rng = np.random.default_rng(0)
        for _ in range(40):
            x = rng.uniform(-0.3, 0.3, size=2)
            xi_p = rng.uniform(-0.05, 0.05, size=1)
            fm, fp = branch_roots(bar12_pert, x, xi_p)
            if isinstance(fp, complex):
                continue
            assert fm <= fp
            for f in (fm, fp):
                xi = np.concatenate([[f], xi_p])
                assert abs(bar12_pert.p0(x, xi)) <= 1e-10

    def test_custom_model_newton(self):
        from barriertop.models import make_custom_model

        def p0(x, xi):
            return xi[0] ** 2 - 0.25 * x[0] ** 2 + 0.05 * x[0] ** 4

        def grad(x, xi):
            return np.array([-0.5 * x[0] + 0.2 * x[0] ** 3, 2 * xi[0]])

        def hess(x, xi):
            return np.array([[-0.5 + 0.6 * x[0] ** 2, 0.0], [0.0, 2.0]])

        m = make_custom_model(1, [1.0], p0, grad, hess)
        fm, fp = branch_roots(m, [0.3])
        assert abs(m.p0([0.3], [fp])) <= 1e-10


class TestSpectralParams:
    def test_direct_substitution(self):
        sp = spectral_params(0.1 * 0.1, 0.1, 1.0, 2.0, 0.1, [1.0, 2.0])
        assert sp.S == pytest.approx(1.5 - 0.1j)

    def test_truncation_index(self):
        sp = spectral_params(0.0, 0.1, 1.0, 1.0, 0.1, [1.0])
        assert sp.K1 == 1

    def test_vanishing_at_lowest_point(self):
        h = 0.1
        sp = spectral_params(-0.5j * h, h, 1.0, 1.0, 0.1, [1.0])
        assert abs(sp.S) <= 1e-14

    def test_box_validation(self):
        with pytest.raises(ValidationError):
            spectral_params(1.0, 0.1, 1.0, 1.0, 0.1, [1.0])

    def test_real_imaginary_split(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            lam = np.sort(rng.uniform(0.5, 3.0, size=3))
            h = rng.uniform(0.01, 0.3)
            z = complex(rng.uniform(-1, 1), rng.uniform(-1, 1)) * h
            sp = spectral_params(z, h, 1.0, 1.0, 0.1, lam)
            assert sp.S.real == pytest.approx(np.sum(lam) / 2 + z.imag / h)
            assert sp.S.imag == pytest.approx(-z.real / h)


def brute_force_lattice(lambdas, h, bound):
    lam = np.sort(np.asarray(lambdas, dtype=float))
    d = lam.size
    kmax = [int(np.floor(bound / h / l)) + 1 for l in lam]
    pts = []
    for alpha in np.ndindex(*[k + 1 for k in kmax]):
        val = h * float(np.dot(alpha, lam) + lam.sum() / 2)
        if val <= bound + 1e-12:
            pts.append((val, tuple(alpha)))
    pts.sort()
    return pts


class TestLattice:
    def test_basic_points(self):
        lat = resonance_lattice([1.0], 0.1, 0.2)
        assert np.allclose(lat.points, [-0.05j, -0.15j])
        assert lat.multi_indices == ((0,), (1,))

    def test_two_rates(self):
        lat = resonance_lattice([1.0, 2.0], 0.1, 0.16)
        assert np.allclose(lat.points, [-0.15j])
        assert lat.multi_indices == ((0, 0),)

    def test_degenerate_rates_keep_indices(self):
        lat = resonance_lattice([1.0, 1.0], 0.1, 0.25)
        twos = [a for p, a in zip(lat.points, lat.multi_indices)
                if abs(p + 0.2j) < 1e-12]
        assert sorted(twos) == [(0, 1), (1, 0)]

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            d = rng.integers(1, 4)
            lam = np.sort(rng.uniform(0.3, 3.0, size=d))
            h = rng.uniform(0.02, 0.3)
            bound = rng.uniform(0.5, 3.0) * h * lam.sum()
            lat = resonance_lattice(lam, h, bound)
            bf = brute_force_lattice(lam, h, bound)
            assert len(lat.points) == len(bf)
            assert np.allclose(np.abs(lat.points), [v for v, _ in bf],
                               atol=1e-12)

    def test_empty_allowed(self):
        lat = resonance_lattice([1.0], 0.1, 0.01)
        assert len(lat.points) == 0

    def test_distance_examples(self):
        lat = resonance_lattice([1.0], 0.1, 0.6)
        assert distance_to_lattice(0.0, lat) == pytest.approx(0.05)
        assert distance_to_lattice(-0.05j, lat) == pytest.approx(0.0, abs=1e-15)
        d = distance_to_lattice(0.03 - 0.04j, lat)
        assert d == pytest.approx(np.sqrt(0.0009 + 0.0001), abs=1e-12)

    def test_distance_needs_big_bound(self):
        lat = resonance_lattice([1.0], 0.1, 0.05)
        with pytest.raises(ValidationError):
            distance_to_lattice(0.3, lat)

    def test_csv_export(self, tmp_path):
        lat = resonance_lattice([1.0], 0.1, 0.2)
        path = tmp_path / "lat.csv"
        lattice_to_csv(lat, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "re,im,alpha_0"
        assert lines[1].split(",") == ["0.0", "-0.05", "0"]


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.3, 3.0), min_size=1, max_size=3))
def test_model_invariants_random(lams):
    m = make_barrier_model(sorted(lams))
    g = m.grad_p0(np.zeros(m.dim), np.zeros(m.dim))
    assert np.max(np.abs(g)) <= 1e-12
    ev = np.sort(np.linalg.eigvals(m.linear_field_matrix()).real)
    want = np.sort(np.concatenate([-m.lambdas, m.lambdas]))
    assert np.max(np.abs(ev - want)) <= 1e-10


class TestModelFiles:
    def test_round_trip(self, tmp_path):
        spec = {"dim": 2, "lambdas": [1.0, 2.0], "kind": "schrodinger_barrier",
                "perturbation": [{"exponents": [3, 0], "coeff": 0.05}]}
        path = tmp_path / "model.json"
        path.write_text(json.dumps(spec))
        m = load_model_file(path)
        assert m.kind == "schrodinger_barrier"
        assert m.perturbation_scale == pytest.approx(0.05)

    def test_bad_spec(self):
        with pytest.raises(ValidationError):
            model_from_spec({"dim": 2, "lambdas": [1.0], "kind": "schrodinger_barrier"})
        with pytest.raises(ValidationError):
            model_from_spec({"dim": 1, "lambdas": [1.0], "kind": "nope"})


def test_phase_point_validation():
    with pytest.raises(ValidationError):
        PhasePoint([1.0], [np.inf])
    p = PhasePoint([1.0, 2.0], [0.0, 1.0])
    assert p.dim == 2
    assert np.allclose(p.as_vector(), [1, 2, 0, 1])
