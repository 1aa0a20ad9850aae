import numpy as np
import pytest

from barriertop._kernels import backend_name, integrate_poly, integrate_poly_python
from barriertop.errors import DomainEscapeError
from barriertop.flow import (flow, flow_states, flow_with_jacobian,
                             symplectic_defect, trajectory_to_csv)
from barriertop.models import PhasePoint, make_barrier_model


class TestFlow:
    def test_exact_contraction(self, quad1):
        p = PhasePoint([1.0], [-1.0])
        q = flow(quad1, p, np.log(2.0))
        assert np.allclose(q.x, [0.5], atol=1e-10)
        assert np.allclose(q.xi, [-0.5], atol=1e-10)

    def test_exact_backward(self, quad1):
        q = flow(quad1, PhasePoint([1.0], [1.0]), -np.log(2.0))
        assert np.allclose(q.as_vector(), [0.5, 0.5], atol=1e-10)

    def test_perturbed_decay_self_convergence(self, bar1_pert):
        from barriertop.models import branch_roots

        fm, _ = branch_roots(bar1_pert, [0.3])
        p = PhasePoint([0.3], [fm])
        q1 = flow(bar1_pert, p, 5.0, tol=1e-10, rmax=1.0)
        q2 = flow(bar1_pert, p, 5.0, tol=1e-12, rmax=1.0)
        assert abs(q1.x[0]) <= 0.3 * np.exp(-4.5) * 1.2
        assert np.max(np.abs(q1.as_vector() - q2.as_vector())) <= 1e-8

    def test_energy_conservation(self, bar12_pert):
        p = PhasePoint([0.1, 0.05], [0.02, -0.03])
        e0 = bar12_pert.p0(p.x, p.xi)
        s = flow_states(bar12_pert, p, np.linspace(0.3, 3.0, 10), tol=1e-10,
                        rmax=np.inf)
        drift = np.max(np.abs(s.energies(bar12_pert) - e0))
        assert drift <= 1e-8

    def test_reversibility_random(self, bar12):
        rng = np.random.default_rng(1)
        tol = 1e-10
        for _ in range(100):
            w = rng.uniform(-0.3, 0.3, size=4)
            t = rng.uniform(-2.0, 2.0)
            if t == 0:
                continue
            q = flow(bar12, PhasePoint(w[:2], w[2:]), t, tol=tol)
            back = flow(bar12, q, -t, tol=tol)
            assert np.max(np.abs(back.as_vector() - w)) <= 10 * tol * 100

    def test_domain_escape(self):
        m = make_barrier_model([1.0], {(3,): 0.4})
        p = PhasePoint([m.validity_radius * 0.9], [m.validity_radius * 0.5])
        with pytest.raises(DomainEscapeError) as err:
            flow(m, p, 8.0)
        assert err.value.exit_time is not None


class TestJacobian:
    def test_exact_quadratic_jacobian(self, quad1):
        t = 0.7
        _, J = flow_with_jacobian(quad1, PhasePoint([0.2], [0.1]), t)
        want = np.array([[np.cosh(t), np.sinh(t)], [np.sinh(t), np.cosh(t)]])
        assert np.max(np.abs(J - want)) <= 1e-9

    def test_identity_at_zero(self, bar1):
        _, J = flow_with_jacobian(bar1, PhasePoint([0.1], [0.0]), 0.0)
        assert np.array_equal(J, np.eye(2))

    def test_cocycle(self, bar1):
        p = PhasePoint([0.15], [0.04])
        q_half, J_half = flow_with_jacobian(bar1, p, 0.5)
        _, J_half2 = flow_with_jacobian(bar1, q_half, 0.5)
        _, J_full = flow_with_jacobian(bar1, p, 1.0)
        assert np.max(np.abs(J_half2 @ J_half - J_full)) <= 1e-8

    def test_symplectic_defect(self, bar12_pert):
        rng = np.random.default_rng(2)
        for _ in range(20):
            w = rng.uniform(-0.15, 0.15, size=4)
            t = rng.uniform(-2, 2)
            _, J = flow_with_jacobian(bar12_pert, PhasePoint(w[:2], w[2:]), t,
                                      rmax=np.inf)
            assert symplectic_defect(J) <= 1e-8


class TestBackends:
    @pytest.mark.skipif(backend_name() != "native",
                        reason="compiled backend unavailable")
    def test_native_matches_python(self, bar12_pert):
        tables = bar12_pert.hamilton_tables()
        w0 = np.array([0.12, -0.08, 0.03, 0.05])
        times = np.linspace(0.2, 4.0, 12)
        for with_jac in (False, True):
            Wn, Jn, nn, sn, _ = integrate_poly(tables, 2, w0, times,
                                               1e-11, 1e-11, with_jac, np.inf)
            Wp, Jp, np_, sp_, _ = integrate_poly_python(tables, 2, w0, times,
                                                        1e-11, 1e-11, with_jac,
                                                        np.inf)
            assert (nn, sn) == (np_, sp_)
            assert np.max(np.abs(Wn - Wp)) <= 5e-12
            if with_jac:
                scale = np.maximum(np.abs(Jn), 1.0)
                assert np.max(np.abs(Jn - Jp) / scale) <= 1e-12

    @pytest.mark.skipif(backend_name() != "native",
                        reason="compiled backend unavailable")
    def test_escape_agreement(self, bar1):
        tables = bar1.hamilton_tables()
        w0 = np.array([0.5, 0.3])
        times = np.linspace(0.5, 8.0, 8)
        rn = integrate_poly(tables, 1, w0, times, 1e-10, 1e-10, False, 1.0)
        rp = integrate_poly_python(tables, 1, w0, times, 1e-10, 1e-10, False, 1.0)
        assert rn[2] == rp[2] and rn[3] == rp[3]
        assert abs(rn[4] - rp[4]) <= 1e-6


def test_trajectory_csv(tmp_path, bar1):
    s = flow_states(bar1, PhasePoint([0.2], [-0.1]), np.linspace(0.5, 2, 4))
    path = tmp_path / "traj.csv"
    trajectory_to_csv(s, bar1, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "t,x0,xi0,energy"
    assert len(lines) == 5
