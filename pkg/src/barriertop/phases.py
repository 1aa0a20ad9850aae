"""Phase construction for the incoming Cauchy problem.

Given a scenario and a transverse frequency eta', this module builds:

* the eikonal solution psi with data x'.eta' on the section {x_1 = eps},
  by the method of characteristics;
* the intersection point of the incoming manifold with the level
  foliation of psi, solved by Newton iteration;
* an auxiliary Lagrangian manifold through the level set of psi at that
  point, transverse to the flow, extended along a Hamilton field whose
  value at the base point is the symplectically orthonormalized
  completion of the level set's tangent space;
* the time-evolved family of that manifold with its generating phase
  phi(t, x), fitted per time slice and expanded in decaying exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from . import _kernels
from .errors import ConvergenceError, FoldError, NumericalError, ValidationError
from .flow import flow_states
from .manifolds import LagrangianChart, invariance_residual
from .models import PhasePoint, branch_roots
from .polynomial import monomial_exponents
from .series import exponent_ladder, fit_exp_series

CONE_APERTURE = 0.5


def _cumulative_action(times, values):
    """integral_0^{t_k} values dt for monotone ``times`` of either direction."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.size < 3:
        out = np.zeros_like(times)
        if times.size == 2:
            out[1] = 0.5 * (values[0] + values[1]) * (times[1] - times[0])
        return out
    if times[-1] >= times[0]:
        return cumulative_simpson(values, x=times, initial=0.0)
    rev = cumulative_simpson(values[::-1], x=times[::-1], initial=0.0)
    return (rev - rev[-1])[::-1]


def _as_eta(scenario, eta_prime):
    d = scenario.dim
    eta = np.atleast_1d(np.asarray(eta_prime, dtype=float)) if eta_prime is not None \
        else np.zeros(d - 1)
    if d == 1:
        return np.zeros(0)
    if eta.size != d - 1:
        raise ValidationError("eta_prime must have d-1 components")
    if not scenario.eta_in_box(eta):
        raise ValidationError("eta_prime outside the scenario box")
    return eta


# ---------------------------------------------------------------------------
# eikonal solution from the section


def section_lift(scenario, x_prime, eta):
    """Phase point (eps, x', f_-(eps, x', eta), eta) on the section."""
    x = np.concatenate([[scenario.epsilon], np.atleast_1d(x_prime)]) \
        if scenario.dim > 1 else np.array([scenario.epsilon])
    f_minus, _ = branch_roots(scenario.model, x, eta)
    if isinstance(f_minus, complex):
        raise NumericalError("section lift hit a classically forbidden point")
    xi = np.concatenate([[f_minus], eta])
    return PhasePoint(x, xi)


def eikonal_from_section(scenario, eta_prime, tol=1e-8, n_transverse=13,
                         t_back=0.45, t_fwd=1.5, degree=None,
                         radius_factor=0.2, seed_halfwidth=0.3):
    """Characteristics-built chart of psi: p0(x, grad psi) = 0, psi = x'.eta'
    on the section, incoming branch selected at the base point."""
    model = scenario.model
    d = model.dim
    eta = _as_eta(scenario, eta_prime)
    eps = scenario.epsilon
    lam1 = model.lambdas[0]

    if d == 1:
        seeds = [np.zeros(0)]
    else:
        w = seed_halfwidth * eps
        offs = np.linspace(-w, w, n_transverse)
        base = scenario.rho_minus.x[1:]
        seeds = [base + o * e for o in offs
                 for e in np.eye(d - 1)]
        seeds = list({tuple(s): s for s in seeds}.values())

    dt = 0.02 / lam1
    xs, xis, vals = [], [], []
    for xp in seeds:
        p = section_lift(scenario, xp, eta)
        datum = float(p.x[1:] @ eta) if d > 1 else 0.0
        for sgn, horizon in ((+1.0, t_fwd / lam1), (-1.0, t_back / lam1)):
            times = sgn * np.arange(0.0, horizon + dt / 2, dt)
            s = flow_states(model, p, times, tol=1e-11,
                            rmax=6.0 * eps, allow_escape=True)
            rhs = model.hamilton_rhs_batch(s.states)
            integrand = np.sum(s.xi * rhs[:, :d], axis=1)
            act = _cumulative_action(s.times, integrand)
            xs.extend(s.x)
            xis.extend(s.xi)
            vals.extend(datum + act)
    xs = np.asarray(xs)
    xis = np.asarray(xis)
    vals = np.asarray(vals)

    center = scenario.rho_minus.x
    radius = radius_factor * eps
    keep = np.linalg.norm(xs - center, axis=1) <= radius * 1.05
    if keep.sum() < 10:
        raise NumericalError("characteristics do not cover the chart ball")
    xs, xis, vals = xs[keep], xis[keep], vals[keep]

    degrees = (degree,) if degree is not None else (5, 7, 9, 11, 13)
    best = None
    for deg in degrees:
        poly, rms = _fit_value_gradient(xs, xis, vals, d, deg, center, radius)
        chart = LagrangianChart("section_eikonal", poly, center, radius,
                                fit_residual=rms, base_point=scenario.rho_minus,
                                scale=radius)
        resid = invariance_residual(model, chart)
        chart.eikonal_residual = resid
        if best is None or resid < best.eikonal_residual:
            best = chart
        if resid <= tol:
            break
    if best.eikonal_residual > tol:
        gerr = np.linalg.norm(
            np.stack([best.gradient(p) for p in xs]) - xis, axis=1)
        if gerr.max() > 1e3 * max(best.fit_residual / radius, 1e-300):
            raise FoldError("characteristic family folded",
                            location=xs[int(np.argmax(gerr))])
        raise NumericalError(
            f"eikonal residual {best.eikonal_residual:.2e} above {tol:.0e}")
    return best


def _fit_value_gradient(xs, xis, vals, d, deg, center, scale, min_degree=0):
    """Joint value/gradient least squares in u = (x - center) / scale.

    Returns (Polynomial in u, rms).  Gradient data is rescaled so every
    design-matrix entry is O(1).
    """
    us = (xs - center) / scale
    gs = xis * scale
    basis = monomial_exponents(d, deg, min_degree=min_degree)
    npts = us.shape[0]
    ncoef = len(basis)
    rows = np.zeros(((d + 1) * npts, ncoef))
    rhs = np.zeros((d + 1) * npts)
    for j, e in enumerate(basis):
        col = np.ones(npts)
        for w in range(d):
            if e[w]:
                col = col * us[:, w] ** e[w]
        rows[:npts, j] = col
        for v in range(d):
            if e[v] == 0:
                continue
            dcol = e[v] * np.ones(npts)
            for w in range(d):
                p = e[w] - (1 if w == v else 0)
                if p:
                    dcol = dcol * us[:, w] ** p
            rows[(1 + v) * npts:(2 + v) * npts, j] = dcol
    rhs[:npts] = vals
    for v in range(d):
        rhs[(1 + v) * npts:(2 + v) * npts] = gs[:, v]
    coef, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    rms = float(np.sqrt(np.mean((rows @ coef - rhs) ** 2)))
    from .polynomial import Polynomial

    return Polynomial.from_terms(d, dict(zip(basis, coef))), rms


# ---------------------------------------------------------------------------
# intersection point


@dataclass(frozen=True)
class IntersectionPoint:
    x_of_eta: np.ndarray
    rho_eta: PhasePoint
    newton_residual: float
    f_consistency: float


def intersection_point(scenario, eta_prime, tol=1e-10, max_iter=50):
    """Solve grad_{x'} phi_-(eps, x') = eta' and lift to the section."""
    model = scenario.model
    d = model.dim
    eta = _as_eta(scenario, eta_prime)
    eps = scenario.epsilon
    chart = scenario.chart_minus
    if d == 1:
        x = np.array([eps])
        f_minus, _ = branch_roots(model, x, eta)
        rho = PhasePoint(x, np.array([f_minus]))
        fc = abs(chart.gradient(x)[0] - f_minus)
        return IntersectionPoint(x, rho, 0.0, float(fc))

    xp = scenario.rho_minus.x[1:].copy()
    for _ in range(max_iter):
        x = np.concatenate([[eps], xp])
        g = chart.gradient(x)[1:] - eta
        if np.max(np.abs(g)) <= tol:
            break
        Hp = chart.hessian(x)[1:, 1:]
        try:
            step = np.linalg.solve(Hp, g)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular transverse Hessian in Newton") from exc
        xp = xp - step
    else:
        raise ConvergenceError(
            f"intersection Newton did not reach {tol:g} in {max_iter} steps")
    x = np.concatenate([[eps], xp])
    f_minus, _ = branch_roots(model, x, eta)
    rho = PhasePoint(x, np.concatenate([[f_minus], eta]))
    resid = float(np.max(np.abs(chart.gradient(x)[1:] - eta)))
    fc = abs(chart.gradient(x)[0] - f_minus)
    return IntersectionPoint(xp, rho, resid, float(fc))


def section_phase_constant(scenario, eta_prime):
    """x'(eta').eta' - phi_-(eps, x'(eta')): the constant carried by the
    evolved phase at infinity."""
    eta = _as_eta(scenario, eta_prime)
    ip = intersection_point(scenario, eta_prime)
    x = ip.rho_eta.x
    val = float(scenario.chart_minus.value(x))
    if scenario.dim == 1:
        return -val
    return float(ip.x_of_eta @ eta) - val


# ---------------------------------------------------------------------------
# auxiliary Lagrangian through the level set


def _symplectic_form(d):
    Om = np.zeros((2 * d, 2 * d))
    Om[:d, d:] = np.eye(d)
    Om[d:, :d] = -np.eye(d)
    return Om


@dataclass
class AuxiliaryLagrangian:
    chart: LagrangianChart
    rho_eta: PhasePoint
    level_value: float
    v: np.ndarray
    frame: np.ndarray               # (2d, d) tangent frame at rho_eta
    gamma_points: np.ndarray        # (n, d) x-samples of the level set
    cloud: np.ndarray               # (m, 2d) phase points of the manifold
    cloud_theta: np.ndarray         # (m,) generating-function values
    cloud_params: np.ndarray        # (m, 2): (arc, flowout) parameters
    psi_chart: LagrangianChart


def _level_set_points(psi, x0, arcs, tol=1e-12):
    """March along {psi = psi(x0)} (d = 2) collecting points at the
    requested signed arc lengths."""
    c = float(psi.value(x0))
    pts = {0.0: x0.copy()}
    for sgn in (+1.0, -1.0):
        if sgn > 0:
            want = sorted(a for a in arcs if a > 0)
        else:
            want = sorted((a for a in arcs if a < 0), reverse=True)
        x = x0.copy()
        s = 0.0
        step = 0.01 * max(abs(a) for a in arcs) if arcs else 0.0
        for target in want:
            while abs(s) < abs(target):
                h = min(step, abs(target) - abs(s))
                g = psi.gradient(x)
                tang = np.array([-g[1], g[0]])
                tang = tang / np.linalg.norm(tang)
                x = x + sgn * h * tang
                for _ in range(8):
                    g = psi.gradient(x)
                    r = float(psi.value(x)) - c
                    if abs(r) < tol:
                        break
                    x = x - r * g / float(g @ g)
                s += sgn * h
            pts[target] = x.copy()
    out_arcs = sorted(pts)
    return np.array(out_arcs), np.array([pts[a] for a in out_arcs])


def auxiliary_lagrangian(scenario, eta_prime, psi_chart=None,
                         s_values=None, gamma_arcs=None, det_tol=1e-6,
                         fit_degree=5):
    """Lagrangian manifold containing the psi level set at the intersection
    point, transverse to the Hamilton field, graph over x-space."""
    model = scenario.model
    d = model.dim
    eps = scenario.epsilon
    ip = intersection_point(scenario, eta_prime)
    if psi_chart is None:
        psi_chart = eikonal_from_section(scenario, eta_prime)
    x0 = ip.rho_eta.x
    c = float(psi_chart.value(x0))
    M = psi_chart.hessian(x0)
    gpsi = psi_chart.gradient(x0)

    # tangent frame of the level set inside the psi manifold
    if d == 1:
        us = np.zeros((0, 1))
    else:
        q, _ = np.linalg.qr(np.column_stack([gpsi, np.eye(d)[:, : d - 1]]))
        us = q[:, 1:d].T          # (d-1, d), orthonormal, perpendicular to gpsi
    gamma_frame = np.array([np.concatenate([u, M @ u]) for u in us]).reshape(-1, 2 * d)

    # symplectically orthogonal completion close to the x_1 direction
    if gamma_frame.size:
        C = np.column_stack([gamma_frame[:, d:], -gamma_frame[:, :d]]).reshape(d - 1, 2 * d)
        _, _, Vt = np.linalg.svd(C)
        null = Vt[d - 1:].T
    else:
        null = np.eye(2 * d)
    e1 = np.zeros(2 * d)
    e1[0] = 1.0
    v = null @ (null.T @ e1)
    nv = np.linalg.norm(v)
    if nv < 1e-8:
        raise NumericalError("could not complete the level-set frame near e_1")
    v = v / nv
    vx, vxi = v[:d], v[d:]

    rhs = M @ vx - vxi
    gp2 = float(gpsi @ gpsi)
    gprime = float(gpsi @ rhs) / gp2
    if np.linalg.norm(rhs - gprime * gpsi) > 1e-8 * max(1.0, np.linalg.norm(rhs)):
        raise NumericalError("flow-out direction is not symplectically consistent")

    frame = np.column_stack([v] + list(gamma_frame)) if gamma_frame.size else v.reshape(-1, 1)

    # transversality of the Hamilton field to the new manifold
    hp = model.hamilton_rhs(ip.rho_eta.as_vector())
    cols = np.column_stack([frame, hp / np.linalg.norm(hp)])
    gram = cols.T @ cols
    if np.sqrt(abs(np.linalg.det(gram))) < det_tol:
        raise NumericalError("Hamilton field nearly tangent to the auxiliary manifold")

    # flow-out field of F = (xi - grad psi(x)) . vx + g' psi(x)
    def xf(w):
        x = w[:d]
        return np.concatenate([vx, psi_chart.hessian(x) @ vx - gprime * psi_chart.gradient(x)])

    if s_values is None:
        smax = 0.15 * eps
        s_values = np.concatenate([[0.0], smax * np.exp(-np.arange(6) / 2.0),
                                   -smax * np.exp(-np.arange(6) / 2.0)])
    s_values = np.sort(np.unique(np.asarray(s_values, dtype=float)))

    if d == 1:
        gamma_x = x0.reshape(1, 1)
        arcs = np.zeros(1)
    elif d == 2:
        if gamma_arcs is None:
            gmax = 0.13 * eps
            gamma_arcs = np.concatenate([gmax * np.exp(-np.arange(6) / 2.0),
                                         -gmax * np.exp(-np.arange(6) / 2.0)])
        arcs, gamma_x = _level_set_points(psi_chart, x0, list(gamma_arcs))
    else:
        raise NumericalError("level-set sampling implemented for d <= 2")

    cloud = []
    theta = []
    params = []
    for arc, gx in zip(arcs, gamma_x):
        w0 = np.concatenate([gx, psi_chart.gradient(gx)])
        for sgn in (+1.0, -1.0):
            svals = np.asarray([s for s in s_values if s * sgn > 0])
            if svals.size == 0:
                continue
            svals = np.sort(np.abs(svals)) * sgn
            dense = _dense_waypoints(svals, 0.01 * eps)
            W, _, n_ok, status, _ = _kernels.integrate_callable(
                xf, None, d, w0, dense, 1e-12, 1e-12, False, np.inf)
            integ = np.array([W[k, d:] @ vx for k in range(n_ok)])
            acc = _cumulative_action(dense[:n_ok], integ) + c
            for s in svals:
                k = int(np.argmin(np.abs(dense[:n_ok] - s)))
                if abs(dense[k] - s) < 1e-12:
                    cloud.append(W[k])
                    theta.append(acc[k])
                    params.append((arc, s))
        cloud.append(w0)
        theta.append(c)
        params.append((arc, 0.0))

    cloud = np.asarray(cloud)
    theta = np.asarray(theta)
    params = np.asarray(params)

    from .polynomial import Polynomial, fit_gradient_polynomial

    span = float(np.max(np.linalg.norm(cloud[:, :d] - x0, axis=1)))
    poly, rms = fit_gradient_polynomial((cloud[:, :d] - x0) / span,
                                        cloud[:, d:] * span, d,
                                        fit_degree, min_degree=1)
    poly = poly + Polynomial.from_terms(d, {(0,) * d: c - float(poly(np.zeros(d)))})
    chart = LagrangianChart("auxiliary", poly, x0, span, fit_residual=rms,
                            base_point=ip.rho_eta, scale=span)
    chart.eikonal_residual = np.nan
    return AuxiliaryLagrangian(chart, ip.rho_eta, c, v, frame, gamma_x,
                               cloud, theta, params, psi_chart)


def _dense_waypoints(targets, dt):
    """Monotone waypoint list covering [0, max|targets|] hitting each target."""
    tmax = np.max(np.abs(targets))
    sgn = np.sign(targets[np.argmax(np.abs(targets))])
    base = np.arange(0.0, tmax + dt / 2, dt) * sgn
    out = np.unique(np.concatenate([base, targets, [0.0]]))
    return out if sgn > 0 else out[::-1]


# ---------------------------------------------------------------------------
# evolved phase family


class PhaseFamily:
    """phi(t, x) for the evolved manifold family, one polynomial per time
    slice with cubic interpolation of coefficients in t."""

    def __init__(self, t_grid, coef, basis, centers, radii, eta_prime,
                 psi_chart, psi_tilde, psi_tilde_fitted, expansion,
                 eikonal_t_residual, scenario, scale,
                 cone_aperture=CONE_APERTURE):
        self.t_grid = t_grid
        self.scale = float(scale)
        self.coef = coef                    # (nt, ncoef)
        self.basis = basis
        self.centers = centers
        self.radii = radii
        self.eta_prime = eta_prime
        self.psi_chart = psi_chart
        self.psi_tilde = psi_tilde
        self.psi_tilde_fitted = psi_tilde_fitted
        self.expansion = expansion
        self.eikonal_t_residual = eikonal_t_residual
        self.scenario = scenario
        self.cone_aperture = cone_aperture
        self._spline = CubicSpline(t_grid, coef, axis=0)
        self._center_spline = CubicSpline(t_grid, centers, axis=0)
        self._radius_spline = CubicSpline(t_grid, radii)

    def covered(self, t, x):
        if t < self.t_grid[0] - 1e-12 or t > self.t_grid[-1] + 1e-12:
            return False
        c = self._center_spline(t)
        r = self._radius_spline(t)
        return np.linalg.norm(np.asarray(x) - c) <= 1.02 * r

    def _poly_at(self, t):
        from .polynomial import Polynomial

        return Polynomial.from_terms(len(self.basis[0]),
                                     dict(zip(self.basis, self._spline(t))))

    def _local(self, t, x):
        return (np.asarray(x, dtype=float) - self._center_spline(t)) / self.scale

    def value(self, t, x):
        return float(self._poly_at(t)(self._local(t, x)))

    def grad_x(self, t, x):
        return self._poly_at(t).grad_eval(self._local(t, x)) / self.scale

    def dt(self, t, x):
        """Time derivative through the evolution identity dphi/dt = -p0."""
        model = self.scenario.model
        x = np.asarray(x, dtype=float)
        return -float(model.p0(x, self.grad_x(t, x)))

    def dtt(self, t, x):
        """Second time derivative, again via spatial data only."""
        model = self.scenario.model
        d = model.dim
        x = np.asarray(x, dtype=float)
        poly = self._poly_at(t)
        u = self._local(t, x)
        g = poly.grad_eval(u) / self.scale
        gp = np.asarray(model.grad_p0(x, g), dtype=float)
        hphi = poly.hess_eval(u) / self.scale**2
        # grad_x [p0(x, grad phi)] = p_x + Hess(phi) p_xi
        grad_of_p = gp[:d] + hphi @ gp[d:]
        return float(gp[d:] @ grad_of_p)


def evolve_phase(scenario, eta_prime, t_max=8.0, tol=1e-6, fit_degree=6,
                 aux=None, t_back=0.4, dt_grid=0.1, dense_per_grid=4,
                 domain_scale=1.5, n_per_efold=1.8):
    """Evolve the auxiliary manifold and fit phi(t, x, eta').

    The manifold cloud is seeded geometrically in both the level-set and
    flow-out parameters so the time slices stay populated while the family
    converges onto the outgoing manifold.
    """
    model = scenario.model
    d = model.dim
    lam = model.lambdas
    lam1 = lam[0]
    eps = scenario.epsilon
    if t_max > 12.0 / lam1:
        raise ValidationError("t_max beyond 12 / lambda_1 is not supported")

    depth = t_max + 1.5 / lam1
    if aux is None:
        ns = int(np.ceil(n_per_efold * lam1 * depth)) + 1
        s_vals = 0.15 * eps * np.exp(-np.arange(ns) / n_per_efold)
        s_values = np.concatenate([[0.0], s_vals, -s_vals])
        if d >= 2:
            ng = int(np.ceil(n_per_efold * lam[-1] * depth)) + 1
            g_vals = 0.13 * eps * np.exp(-np.arange(ng) / n_per_efold)
            gamma_arcs = np.concatenate([g_vals, -g_vals])
        else:
            gamma_arcs = None
        aux = auxiliary_lagrangian(scenario, eta_prime, s_values=s_values,
                                   gamma_arcs=gamma_arcs)
    eta = _as_eta(scenario, eta_prime)

    dt_dense = dt_grid / dense_per_grid / lam1
    t_pos = np.arange(0.0, t_max + dt_dense / 2, dt_dense)
    t_neg = -np.arange(dt_dense, t_back / lam1 + dt_dense / 2, dt_dense)
    r_dom = domain_scale * eps
    rmax = 2.5 * r_dom

    rows = {k: ([], [], []) for k in range(-t_neg.size, t_pos.size)}

    def integrand_values(states, n):
        rhs = model.hamilton_rhs_batch(states[:n])
        return (np.sum(states[:n, d:] * rhs[:, :d], axis=1)
                - model.p0_batch(states[:n]))

    for w0, th0 in zip(aux.cloud, aux.cloud_theta):
        sample = flow_states(model, w0, t_pos, tol=1e-10, rmax=rmax,
                             allow_escape=True)
        n = sample.times.size
        vals = _cumulative_action(t_pos[:n], integrand_values(sample.states, n)) + th0
        for k in range(n):
            if np.linalg.norm(sample.x[k]) <= r_dom:
                xs, xis, vs = rows[k]
                xs.append(sample.x[k])
                xis.append(sample.xi[k])
                vs.append(vals[k])
        if t_neg.size:
            tb = np.concatenate([[0.0], t_neg])
            sb = flow_states(model, w0, tb, tol=1e-10, rmax=rmax,
                             allow_escape=True)
            nb = sb.times.size
            valsb = _cumulative_action(tb[:nb], integrand_values(sb.states, nb)) + th0
            for k in range(1, nb):
                if np.linalg.norm(sb.x[k]) <= r_dom:
                    xs, xis, vs = rows[-k]
                    xs.append(sb.x[k])
                    xis.append(sb.xi[k])
                    vs.append(valsb[k])

    deg_max = fit_degree + 4
    basis = tuple(monomial_exponents(d, deg_max, min_degree=0))
    ncoef_min = len(monomial_exponents(d, fit_degree, min_degree=0))
    ks = sorted(rows)
    stride = dense_per_grid
    grid_ks = [k for k in ks if k % stride == 0 and k >= -t_neg.size]
    t_of = {k: (t_pos[k] if k >= 0 else t_neg[-k - 1]) for k in ks}

    # fits are centered on the base ray, which decays smoothly to 0
    ray_of = {}
    for sgn in (+1, -1):
        sel = [k for k in grid_ks if (t_of[k] >= 0) == (sgn > 0)]
        if not sel:
            continue
        ts = np.array(sorted((t_of[k] for k in sel), key=abs))
        xs_ray = flow_states(model, aux.rho_eta, ts, tol=1e-11).x
        for k in sel:
            idx = int(np.argmin(np.abs(ts - t_of[k])))
            ray_of[k] = xs_ray[idx]

    t_list, coefs, centers, radii = [], [], [], []
    grad_misfit = 0.0
    slice_tol = 0.1 * tol
    for k in grid_ks:
        xs, xis, vs = rows[k]
        if len(xs) < int(1.5 * ncoef_min):
            if t_of[k] <= 0.5 * t_max:
                continue
            break
        xs = np.asarray(xs)
        xis = np.asarray(xis)
        vs = np.asarray(vs)
        c_t = ray_of[k]
        best = None
        for deg in range(fit_degree, deg_max + 1, 2):
            if len(xs) < int(1.2 * len(monomial_exponents(d, deg))):
                break
            poly, rms = _fit_value_gradient(xs, xis, vs, d, deg, c_t, eps)
            gerr = float(np.max(np.linalg.norm(
                poly.grad_eval((xs - c_t) / eps) / eps - xis, axis=1)))
            if best is None or gerr < best[1]:
                best = (poly, gerr, rms)
            if gerr <= slice_tol:
                break
        poly, gerr, rms = best
        if gerr > max(100 * tol, 1e4 * rms):
            raise FoldError("evolved manifold stopped projecting onto x",
                            location=xs[0])
        grad_misfit = max(grad_misfit, gerr)
        t_list.append(t_of[k])
        coefs.append(_coef_vector(poly, basis))
        centers.append(c_t)
        radii.append(float(np.max(np.linalg.norm(xs - c_t, axis=1))))

    order = np.argsort(t_list)
    t_grid = np.asarray(t_list)[order]
    coef = np.asarray(coefs)[order]
    centers = np.asarray(centers)[order]
    radii = np.asarray(radii)[order]
    if t_grid.size < 8:
        raise NumericalError("phase family too short; increase sampling depth")

    psi_tilde = section_phase_constant(scenario, eta_prime)

    family = PhaseFamily(t_grid, coef, basis, centers, radii, eta,
                         aux.psi_chart, psi_tilde, np.nan, None, np.nan,
                         scenario, eps)

    # expansion of phi - phi_plus at probe points over the late window
    probes = _expansion_probes(scenario, family)
    window = t_grid[(t_grid >= 2.2 / lam1) & (t_grid <= t_max)]
    samples = []
    for t in window:
        row = [family.value(t, xp) - float(scenario.chart_plus.value(xp))
               for xp in probes]
        samples.append((t, np.asarray(row)))
    ladder = exponent_ladder(lam, 2.6 * lam1)
    expansion = fit_exp_series(samples, ladder, max_poly_degree=1)
    const_terms = [c[0] for mu, c in expansion.terms if mu <= 1e-12]
    fitted = float(np.mean(const_terms[0])) if const_terms else 0.0
    family.psi_tilde_fitted = fitted
    family.expansion = expansion

    # honest eikonal-in-time residual: spline time derivative vs -p0
    resid = 0.0
    for xp in probes:
        tw = np.array([t for t in t_grid if family.covered(t, xp)])
        if tw.size < 8:
            continue
        vspl = CubicSpline(tw, [family.value(tg, xp) for tg in tw])
        for t in tw[2:-2]:
            resid = max(resid, abs(float(vspl(t, 1))
                                   + model.p0(xp, family.grad_x(t, xp))))
    family.eikonal_t_residual = resid
    family.grad_misfit = grad_misfit
    return family


def _coef_vector(poly, basis):
    lookup = poly.as_dict()
    return np.array([lookup.get(e, 0.0) for e in basis])


def _expansion_probes(scenario, family):
    eps = scenario.epsilon
    d = scenario.dim
    probes = []
    for a in (0.3 * eps, 0.45 * eps):
        base = np.zeros(d)
        base[0] = a
        probes.append(base)
        if d > 1:
            tilt = base.copy()
            tilt[1] = 0.25 * a
            probes.append(tilt)
    late = family.t_grid[-1]
    return [p for p in probes if family.covered(late, p)] or probes[:1]


# ---------------------------------------------------------------------------
# critical time


@dataclass(frozen=True)
class CriticalTime:
    t_star: float
    second_derivative: float


def critical_time(family, x, tol=1e-10):
    """The unique time where dphi/dt(t, x) vanishes, with its curvature.

    ``x`` should lie in the forward cone 0 <= |x'| < aperture * x_1 of the
    family's coverage; outside it the time derivative has no sign change
    and an error is raised.
    """
    x = np.asarray(x, dtype=float)
    if x[0] <= 0:
        raise ValidationError("x must have positive first component")
    if x.size > 1 and np.linalg.norm(x[1:]) >= family.cone_aperture * x[0]:
        raise ValidationError("x outside the forward cone")
    ts = [t for t in family.t_grid if family.covered(t, x)]
    if len(ts) < 4:
        raise NumericalError("x not covered by the phase family")
    gs = [family.dt(t, x) for t in ts]
    k = None
    for i in range(len(ts) - 1):
        if gs[i] == 0.0 or gs[i] * gs[i + 1] < 0:
            k = i
            break
    if k is None:
        raise NumericalError(
            "no sign change of the time derivative: x outside the reachable cone")
    lo, hi = ts[k], ts[k + 1]
    glo = gs[k]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = family.dt(mid, x)
        if abs(hi - lo) < tol:
            break
        if glo * gm <= 0:
            hi = mid
        else:
            lo, glo = mid, gm
    t_star = 0.5 * (lo + hi)
    curv = family.dtt(t_star, x)
    return CriticalTime(float(t_star), float(curv))
