"""Hamiltonian flow with variational (tangent) propagation.

Wraps the stepper backends with model-aware conveniences: escape
monitoring against the model's validity neighborhood, trajectory
sampling, the variational matrix along a trajectory, and determinants of
flowed coordinate families used by the transport amplitudes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainEscapeError, NumericalError
from .models import PhasePoint

DEFAULT_TOL = 1e-10


@dataclass
class TrajectorySample:
    """Flow samples at prescribed times, with optional tangent matrices."""

    times: np.ndarray
    states: np.ndarray          # (nt, 2d)
    jacobians: np.ndarray | None  # (nt, 2d, 2d)
    dim: int

    def point(self, k):
        return PhasePoint(self.states[k, :self.dim], self.states[k, self.dim:])

    @property
    def x(self):
        return self.states[:, :self.dim]

    @property
    def xi(self):
        return self.states[:, self.dim:]

    def energies(self, model):
        return np.array([model.p0(self.states[k, :self.dim], self.states[k, self.dim:])
                         for k in range(self.states.shape[0])])


def _dfield_callable(model):
    d = model.dim

    def dfield(w):
        H = np.asarray(model.hess_p0(w[:d], w[d:]), dtype=float)
        return np.vstack([H[d:, :], -H[:d, :]])

    return dfield


def _integrate(model, w0, times, tol, with_jac, rmax, atol=None):
    if atol is None:
        atol = tol
    tables = model.hamilton_tables()
    if tables is not None:
        return _kernels.integrate_poly(tables, model.dim, w0, times,
                                       tol, atol, with_jac, rmax)
    f = model.hamilton_rhs
    dfield = _dfield_callable(model) if with_jac else None
    return _kernels.integrate_callable(f, dfield, model.dim, w0, times,
                                       tol, atol, with_jac, rmax)


def flow_states(model, point, times, tol=DEFAULT_TOL, with_jacobian=False,
                rmax=None, allow_escape=False, atol=None):
    """Integrate through the waypoint list ``times`` (monotone, from 0).

    Returns a TrajectorySample truncated at domain escape when
    ``allow_escape`` is set, and raises otherwise.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise NumericalError("empty time list")
    w0 = point.as_vector() if isinstance(point, PhasePoint) else np.asarray(point, float)
    if rmax is None:
        rmax = model.validity_radius
    W, J, n_ok, status, t_exit = _integrate(model, w0, times, tol,
                                            with_jacobian, rmax, atol=atol)
    if status == _kernels.STATUS_STEPFAIL:
        raise NumericalError(f"stepper failed near t={t_exit}")
    if status == _kernels.STATUS_ESCAPED and not allow_escape:
        raise DomainEscapeError(
            f"trajectory left the validity neighborhood (|w| > {rmax:g}) "
            f"at t={t_exit:.6g}", exit_time=t_exit)
    jac = J[:n_ok] if with_jacobian else None
    return TrajectorySample(times[:n_ok], W[:n_ok], jac, model.dim)


def flow(model, point, t, tol=DEFAULT_TOL, rmax=None):
    """exp(t H_p) applied to a phase point."""
    if t == 0.0:
        return point
    s = flow_states(model, point, [t], tol=tol, rmax=rmax)
    return s.point(0)


def flow_with_jacobian(model, point, t, tol=DEFAULT_TOL, rmax=None):
    """Flow plus the solution of the variational equation along it."""
    if t == 0.0:
        return point, np.eye(2 * model.dim)
    s = flow_states(model, point, [t], tol=tol, with_jacobian=True, rmax=rmax)
    return s.point(0), s.jacobians[0]


def symplectic_defect(J):
    """|| J^T Omega J - Omega || for a candidate symplectic matrix."""
    n = J.shape[0] // 2
    Om = np.zeros((2 * n, 2 * n))
    Om[:n, n:] = np.eye(n)
    Om[n:, :n] = -np.eye(n)
    return float(np.linalg.norm(J.T @ Om @ J - Om))


def trajectory_to_csv(sample, model, path):
    """Dump (t, x..., xi..., energy) rows."""
    d = sample.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i}" for i in range(d)]
                   + [f"xi{i}" for i in range(d)] + ["energy"])
        en = sample.energies(model)
        for k, t in enumerate(sample.times):
            w.writerow([repr(float(t))]
                       + [repr(float(v)) for v in sample.states[k]]
                       + [repr(float(en[k]))])


# ---------------------------------------------------------------------------
# flowed coordinate families


def family_determinants(model, point, tangents, times, tol=DEFAULT_TOL, rmax=None):
    """det [ dx/dt | Pi_x J(t) v_j ] along the flow from ``point``.

    ``tangents`` holds d-1 phase-space vectors v_j; the first column is
    the spatial velocity of the trajectory itself.  Returns (dets, sample).
    """
    d = model.dim
    sample = flow_states(model, point, times, tol=tol, with_jacobian=True, rmax=rmax)
    tang = [np.asarray(v, dtype=float) for v in tangents]
    if len(tang) != d - 1:
        raise NumericalError("need exactly d-1 family tangents")
    dets = np.empty(sample.times.size)
    for k in range(sample.times.size):
        w = sample.states[k]
        vel = model.hamilton_rhs(w)[:d]
        cols = [vel] + [(sample.jacobians[k] @ v)[:d] for v in tang]
        dets[k] = np.linalg.det(np.stack(cols, axis=1))
    return dets, sample


def tracked_sqrt(values):
    """Square roots of a real sequence, continuous from the first entry.

    The first entry uses the principal branch; a sign change along the way
    means the determinant crossed zero, which callers treat as a fold.
    """
    vals = np.asarray(values, dtype=float)
    if np.any(vals == 0.0):
        raise NumericalError("determinant hit zero (fold)")
    if np.any(np.sign(vals) != np.sign(vals[0])):
        raise NumericalError("determinant changed sign (fold crossed)")
    root = np.sqrt(np.abs(vals)).astype(complex)
    if vals[0] < 0:
        root = root * 1j
    return root


def aitken_limit(seq):
    """Aitken delta-squared extrapolation of a nearly geometric sequence."""
    seq = np.asarray(seq, dtype=complex)
    if seq.size < 3:
        return seq[-1]
    a, b, c = seq[-3], seq[-2], seq[-1]
    denom = (c - b) - (b - a)
    if abs(denom) < 1e-300:
        return c
    return c - (c - b) ** 2 / denom
