"""Generating-function charts for Lagrangian manifolds.

A chart is a polynomial phi on a ball in x-space with the manifold given
by xi = grad phi(x).  The stable/unstable manifolds of the fixed point
are built by seeding the linearized manifold very close to the origin and
flowing outward: transverse seeding errors contract under the outward
flow, so the sampled cloud converges onto the true manifold.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import FoldError, NumericalError, ValidationError
from .flow import flow_states
from .polynomial import fit_gradient_polynomial

_DEGREES = (6, 8, 10, 12)


class LagrangianChart:
    """Polynomial generating function on a ball.

    Attributes
    ----------
    kind : str
        One of ``outgoing`` (unstable manifold), ``incoming`` (stable),
        ``section_eikonal`` (boundary-value eikonal solution),
        ``auxiliary`` (transverse completion) or ``phase_slice``.
    poly : Polynomial
    center, radius : domain ball in x-space
    """

    def __init__(self, kind, poly, center, radius, fit_residual=0.0,
                 eikonal_residual=np.nan, base_point=None, scale=None):
        self.kind = kind
        self.poly = poly
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)
        # polynomial lives in u = (x - center) / scale for conditioning
        self.scale = float(scale) if scale is not None else max(self.radius, 1e-12)
        self.fit_residual = float(fit_residual)
        self.eikonal_residual = float(eikonal_residual)
        self.base_point = base_point
        self.dim = poly.nvar

    def _u(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.scale

    def value(self, x):
        return self.poly(self._u(x))

    def gradient(self, x):
        return self.poly.grad_eval(self._u(x)) / self.scale

    def hessian(self, x):
        return self.poly.hess_eval(self._u(x)) / self.scale**2

    def contains(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float) - self.center) <= self.radius * (1 + 1e-12)

    def test_grid(self, n=300):
        """Deterministic grid in the domain ball used by residual audits."""
        d = self.dim
        if d == 1:
            xs = self.center[0] + self.radius * np.linspace(-1, 1, n)
            return xs.reshape(-1, 1)
        rng = np.random.default_rng(20867)
        pts = rng.normal(size=(n, d))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        radii = self.radius * rng.uniform(0, 1, size=n) ** (1.0 / d)
        return self.center[None, :] + pts * radii[:, None]

    def to_json(self, path=None):
        payload = {
            "kind": self.kind,
            "center": self.center.tolist(),
            "radius": self.radius,
            "scale": self.scale,
            "coefficients": [
                {"exponents": list(map(int, e)), "coeff": float(c)}
                for e, c in zip(self.poly.exps, self.poly.coefs)
            ],
            "fit_residual": self.fit_residual,
            "eikonal_residual": self.eikonal_residual,
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=1)
        return payload


def invariance_residual(model, chart, n=300):
    """sup over a test grid of |p0(x, grad phi(x))|."""
    pts = chart.test_grid(n)
    vals = [abs(float(model.p0(p, chart.gradient(p)))) for p in pts]
    return float(np.max(vals))


def _seed_directions(d, n_dirs):
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = np.linspace(0, 2 * np.pi, n_dirs, endpoint=False)
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    rng = np.random.default_rng(5521)
    u = rng.normal(size=(n_dirs * d, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def manifold_generating_function(model, sign, domain, tol=1e-8, degree=None,
                                 n_dirs=24, seed_scale=1e-3):
    """Chart of the outgoing (+1) or incoming (-1) manifold.

    ``domain`` is (center, radius) with center at the origin.  Seeds sit
    on the linearized manifold at radius seed_scale * radius and flow
    outward (forward for +1, backward for -1); every intermediate sample
    inside 1.05 * radius enters a gradient least-squares fit, with the
    polynomial degree raised until the eikonal residual meets ``tol``.
    """
    center, radius = domain
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if np.linalg.norm(center) > 1e-14:
        raise ValidationError("manifold charts are centered at the origin")
    if sign not in (+1, -1, "+", "-"):
        raise ValidationError("sign must be +1 or -1")
    s = +1 if sign in (+1, "+") else -1
    d = model.dim
    lin = model.linearize()
    graph = lin.unstable_graph if s > 0 else lin.stable_graph
    if graph is None:
        raise NumericalError("tangent manifold does not project to x-space")
    lam1 = model.lambdas[0]

    r0 = seed_scale * radius
    T = np.log(1.8 * radius / r0) / lam1
    nt = max(40, int(np.ceil(T * lam1 / 0.12)))
    times = np.linspace(T / nt, T, nt) * (1 if s > 0 else -1)

    xs, xis = [], []
    for u in _seed_directions(d, n_dirs):
        x0 = r0 * u
        xi0 = graph @ x0
        xs.append(x0)
        xis.append(xi0)
        sample = flow_states(model, np.concatenate([x0, xi0]), times,
                             tol=min(tol * 1e-2, 1e-10),
                             rmax=6.0 * radius, allow_escape=True)
        keep = np.linalg.norm(sample.x, axis=1) <= 1.05 * radius
        xs.extend(sample.x[keep])
        xis.extend(sample.xi[keep])
    xs = np.asarray(xs)
    xis = np.asarray(xis)
    if xs.shape[0] < 10 * d:
        raise NumericalError("insufficient manifold coverage inside the domain")

    degrees = (degree,) if degree is not None else _DEGREES
    best = None
    for deg in degrees:
        # fit in x / radius so monomials stay O(1)
        poly, rms = fit_gradient_polynomial(xs / radius, xis * radius, d, deg,
                                            min_degree=2)
        chart = LagrangianChart("outgoing" if s > 0 else "incoming", poly,
                                center, radius, fit_residual=rms, scale=radius)
        resid = invariance_residual(model, chart)
        chart.eikonal_residual = resid
        if best is None or resid < best.eikonal_residual:
            best = chart
        if resid <= tol:
            break
    if best.eikonal_residual > tol:
        gerr = np.linalg.norm(best.poly.grad_eval(xs / radius) / radius - xis, axis=1)
        worst = xs[int(np.argmax(gerr))]
        if gerr.max() > 1e3 * max(best.fit_residual, 1e-300):
            raise FoldError("manifold stopped being a graph over x",
                            location=worst)
        raise NumericalError(
            f"eikonal residual {best.eikonal_residual:.2e} above tol {tol:.0e} "
            f"at polynomial degree {best.poly.total_degree}")

    hess0 = best.hessian(np.zeros(d))
    target = graph
    if np.max(np.abs(hess0 - target)) > 1e-6:
        raise NumericalError(
            "chart Hessian at 0 deviates from the linearized manifold by "
            f"{np.max(np.abs(hess0 - target)):.2e}")
    return best
