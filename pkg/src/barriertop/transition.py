"""Transition amplitudes between the incoming and outgoing manifolds.

Two independent pipelines produce the principal amplitude that maps
Cauchy data on the section to the solution near the outgoing manifold:

* a closed-form product of five factors (gamma function of the scaled
  spectral parameter, a complex power of the overlap of leading decay
  directions, a geometric factor from the section, an action integral
  along the outgoing manifold, and a flow-Jacobian limit);
* a transport pipeline that propagates the section amplitude along the
  characteristics of the section eikonal and takes its long-time limit.

Their agreement is the main cross-validation of the package.
"""

from __future__ import annotations

import cmath
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .errors import (ConvergenceError, NumericalError, PoleError,
                     ValidationError)
from .flow import aitken_limit, family_determinants, flow_states, tracked_sqrt
from .models import distance_to_lattice, resonance_lattice
from .phases import intersection_point
from .scenario import leading_decay
from .specfun import gamma


# ---------------------------------------------------------------------------
# branch-tracked elementary operations


def principal_sqrt(x):
    """Principal square root as a complex number, with a branch record."""
    x = complex(x)
    r = cmath.sqrt(x)
    return r, {"arg": cmath.phase(x), "value": (x.real, x.imag)}


def principal_power(base, expo):
    """base ** expo on the principal branch, with a branch record."""
    base = complex(base)
    if base == 0:
        raise NumericalError("zero base in complex power")
    logb = cmath.log(base)
    val = cmath.exp(complex(expo) * logb)
    return val, {"arg": logb.imag, "mod": abs(base)}


# ---------------------------------------------------------------------------
# spectral guards


def pole_check(scenario, pole_tol=1e-8):
    """Raise PoleError when z sits on the first sublattice of poles.

    The poles of the gamma factor are z = -i h (n lambda_1 + sum(lambda)/2)
    for n = 0, 1, 2, ...; the trigger radius is pole_tol * h.
    """
    sp = scenario.spectral
    lam = scenario.model.lambdas
    lam1 = lam[0]
    base = float(np.sum(lam)) / 2.0
    s_over = sp.S / lam1
    n = round(-s_over.real)
    if n >= 0:
        zpole = -1j * sp.h * (n * lam1 + base)
        if abs(sp.z - zpole) <= pole_tol * sp.h:
            raise PoleError(
                f"z = {sp.z} within {pole_tol:g}h of the amplitude pole at "
                f"{zpole}", lattice_point=zpole)


def lattice_guard(scenario):
    """Enforce the distance hypothesis d(z, lattice) > nu h."""
    sp = scenario.spectral
    lam = scenario.model.lambdas
    bound = (abs(sp.z) + sp.h * float(np.sum(lam))) * 1.5 + sp.h
    lat = resonance_lattice(lam, sp.h, bound)
    dist = distance_to_lattice(sp.z, lat)
    if dist <= sp.nu * sp.h:
        raise ValidationError(
            f"d(z, spectral lattice) = {dist:.3e} <= nu h = {sp.nu * sp.h:.3e}")
    return dist


# ---------------------------------------------------------------------------
# geometric ingredients (z-independent, cached on the scenario)


def _cached(scenario, key, builder):
    cache = scenario._cache
    if key not in cache:
        cache[key] = builder()
    return cache[key]


def g1_plus_at(scenario, x):
    """Leading coefficient of the outgoing trajectory through (x, grad phi+)."""
    x = np.asarray(x, dtype=float)
    key = ("g1p", tuple(np.round(x, 14)))

    def build():
        xi = scenario.chart_plus.gradient(x)
        lead = leading_decay(scenario.model, np.concatenate([x, xi]),
                             forward=False)
        if abs(lead.mu1 - scenario.model.lambdas[0]) > 1e-6:
            raise NumericalError(
                "outgoing trajectory has degenerate leading decay at x")
        return lead

    return _cached(scenario, key, build)


def g1_minus_at(scenario, y_prime):
    """Leading coefficient of the incoming trajectory over (eps, y')."""
    y_prime = np.atleast_1d(np.asarray(y_prime, dtype=float)) if y_prime is not None \
        else np.zeros(scenario.dim - 1)
    key = ("g1m", tuple(np.round(y_prime, 14)))

    def build():
        x = np.concatenate([[scenario.epsilon], y_prime])
        xi = scenario.chart_minus.gradient(x)
        lead = leading_decay(scenario.model, np.concatenate([x, xi]),
                             forward=True)
        if abs(lead.mu1 - scenario.model.lambdas[0]) > 1e-6:
            raise NumericalError(
                "incoming trajectory has degenerate leading decay at y'")
        return lead

    return _cached(scenario, key, build)


def badset_value(scenario, x):
    """The degeneracy function at x: -lambda_1 <g1_minus | g1_plus(x)>.

    Vanishes exactly on the outgoing submanifold where the amplitude
    formula breaks down; its modulus is the safety margin.  A trajectory
    whose leading decay rate exceeds lambda_1 has vanishing leading
    coefficient, so the value there is exactly zero.
    """
    lam1 = scenario.model.lambdas[0]
    g1m = scenario.g1_minus_base.g1
    try:
        g1p = g1_plus_at(scenario, x).g1
    except NumericalError:
        return 0.0
    return -lam1 * float(g1m @ g1p)


def badset_field(scenario):
    """Evaluator record for the degeneracy function on the outgoing chart."""
    lam1 = scenario.model.lambdas[0]
    g1m = scenario.g1_minus_base.g1

    def value(x):
        return badset_value(scenario, x)

    return {"value": value, "gradient_at_0": -lam1 * g1m, "g1_minus": g1m}


def action_factor(scenario, x, t_inf=None, dt=0.02):
    """exp of the outgoing transport action along the backward flow from x.

    Integrand: tr(p_xixi(., grad phi+) Hess phi+) / 2 - sum(lambda) / 2,
    integrated from 0 to -infinity (truncated once the decay makes the
    tail negligible).
    """
    x = np.asarray(x, dtype=float)
    key = ("action", tuple(np.round(x, 14)))

    def build():
        model = scenario.model
        d = model.dim
        lam1 = model.lambdas[0]
        T = t_inf if t_inf is not None else 16.0 / lam1
        times = -np.arange(0.0, T + dt / 2, dt / lam1)
        xi = scenario.chart_plus.gradient(x)
        s = flow_states(model, np.concatenate([x, xi]), times, tol=1e-11)
        half_sum = float(np.sum(model.lambdas)) / 2.0
        vals = np.empty(s.times.size)
        for k in range(s.times.size):
            xk = s.x[k]
            H = np.asarray(model.hess_p0(xk, s.xi[k]), dtype=float)
            hphi = scenario.chart_plus.hessian(xk)
            vals[k] = 0.5 * float(np.trace(H[d:, d:] @ hphi)) - half_sum
        integral = simpson(vals, x=s.times)
        return float(integral)

    return cmath.exp(_cached(scenario, key, build))


def _window_times(t_max, lam1, dt=0.05):
    return np.arange(0.0, t_max + dt / 2, dt / lam1)


def jacobian_limit(scenario, point, tangents, t_max=None, conv_tol=1e-6):
    """lim e^{(sum(lambda)/2 - lambda_1) t} / sqrt(det family Jacobian).

    The limit is accelerated by Aitken extrapolation over three late
    windows; convergence requires two successive extrapolations to agree
    to ``conv_tol`` relative.
    """
    model = scenario.model
    lam = model.lambdas
    lam1 = lam[0]
    if t_max is None:
        t_max = 12.0 / lam1
    times = _window_times(t_max, lam1)
    dets, _ = family_determinants(model, point, tangents, times, tol=1e-11,
                                  rmax=np.inf)
    roots = tracked_sqrt(dets)
    rate = float(np.sum(lam)) / 2.0 - lam1
    L = np.exp(rate * times) / roots

    def extrap(t_end):
        idx = [int(np.argmin(np.abs(times - (t_end - 2.0 / lam1)))),
               int(np.argmin(np.abs(times - (t_end - 1.0 / lam1)))),
               int(np.argmin(np.abs(times - t_end)))]
        return aitken_limit(L[idx])

    est1 = extrap(t_max - 1.0 / lam1)
    est2 = extrap(t_max)
    if abs(est2 - est1) > conv_tol * max(abs(est2), 1e-300):
        raise ConvergenceError(
            f"Jacobian limit not converged: {est1} vs {est2} "
            f"(raw tail {L[-3:]})")
    return est2, {"windows": (est1, est2), "raw_tail": L[-3:].tolist()}


# ---------------------------------------------------------------------------
# transport pipeline


def root_slope(model, x, xi_prime, f_val):
    """d f / d x' by implicit differentiation of p0(x, f, xi') = 0."""
    d = model.dim
    xi = np.concatenate([[f_val], xi_prime])
    g = np.asarray(model.grad_p0(x, xi), dtype=float)
    return -g[1:d] / g[d]


def _psi_family_tangents(scenario, rho):
    """Initial tangents of the section-eikonal characteristic family."""
    model = scenario.model
    d = model.dim
    out = []
    x, xi = rho.x, rho.xi
    slope = root_slope(model, x, xi[1:], xi[0]) if d > 1 else None
    for j in range(d - 1):
        v = np.zeros(2 * d)
        v[1 + j] = 1.0
        v[d] = slope[j]
        out.append(v)
    return out


def transport_amplitude(scenario, eta_prime, t_max=None, n_samples=60):
    """Transported section amplitude along the base characteristic.

    Returns a record with times, x positions, complex amplitudes, and the
    square-root seed.  The amplitude starts at exactly 1 on the section.
    """
    model = scenario.model
    lam1 = model.lambdas[0]
    sp = scenario.spectral
    if t_max is None:
        t_max = 10.0 / lam1
    ip = intersection_point(scenario, eta_prime)
    rho = ip.rho_eta
    dpxi1 = float(np.asarray(model.grad_p0(rho.x, rho.xi))[model.dim])
    tangents = _psi_family_tangents(scenario, rho)
    times = _window_times(t_max, lam1)
    dets, sample = family_determinants(model, rho, tangents, times,
                                       tol=1e-11, rmax=np.inf)
    roots = tracked_sqrt(dets)
    seed, _ = principal_sqrt(dpxi1)
    # both square roots carry the same branch at t = 0, so b0(0) = 1 exactly
    b0 = seed / roots * np.exp(1j * times * sp.z / sp.h)
    keep = slice(0, times.size, max(1, times.size // n_samples))
    return {
        "times": times[keep],
        "x": sample.x[keep],
        "b0": b0[keep],
        "dpxi1": dpxi1,
        "dets": dets[keep],
        "rho_eta": rho,
    }


def initial_symbol_limit(scenario, eta_prime, t_max=None, conv_tol=1e-6):
    """Long-time limit defining the outgoing amplitude seed at the origin.

    a00 = |g1m| lambda_1^(3/2) e^{-i pi/4} sqrt(dp/dxi_1 at the section)
    times the normalized Jacobian limit of the characteristic family.
    """
    model = scenario.model
    lam1 = model.lambdas[0]
    eta = np.atleast_1d(np.asarray(eta_prime, dtype=float)) if eta_prime is not None \
        else np.zeros(model.dim - 1)
    key = ("a00", tuple(np.round(eta, 14)))

    def build():
        ip = intersection_point(scenario, eta_prime)
        rho = ip.rho_eta
        dpxi1 = float(np.asarray(model.grad_p0(rho.x, rho.xi))[model.dim])
        tangents = _psi_family_tangents(scenario, rho)
        limit, diag = jacobian_limit(scenario, rho, tangents,
                                     t_max=t_max, conv_tol=conv_tol)
        g1m = g1_minus_at(scenario, ip.x_of_eta if model.dim > 1 else None)
        sq, _ = principal_sqrt(dpxi1)
        val = (np.linalg.norm(g1m.g1) * lam1 ** 1.5
               * cmath.exp(-1j * cmath.pi / 4) * sq * limit)
        return complex(val), diag

    return _cached(scenario, key, build)


def outgoing_symbol(scenario, x, eta_prime, t_max=None):
    """Principal outgoing amplitude c0(x, eta') of the evolved solution."""
    model = scenario.model
    lam1 = model.lambdas[0]
    sp = scenario.spectral
    pole_check(scenario)
    lattice_guard(scenario)
    x = np.asarray(x, dtype=float)

    phi1 = badset_value(scenario, x)
    if abs(phi1) <= scenario.badset_tolerance(x):
        raise NumericalError(
            f"target x = {x} too close to the degenerate outgoing subset "
            f"(margin {abs(phi1):.2e})")

    ip = intersection_point(scenario, eta_prime)
    g1m = g1_minus_at(scenario, ip.x_of_eta if model.dim > 1 else None)
    g1p = g1_plus_at(scenario, x)
    bracket = 1j * lam1 * float(g1m.g1 @ g1p.g1)
    power, _ = principal_power(bracket, -sp.S / lam1)
    a00, _ = initial_symbol_limit(scenario, eta_prime, t_max=t_max)
    act = action_factor(scenario, x)
    return (1.0 / lam1) * act * power * gamma(sp.S / lam1) * a00


# ---------------------------------------------------------------------------
# closed-form pipeline


@dataclass
class TransitionEvaluation:
    """Principal transition amplitude with its five factors."""

    value: complex
    gamma_factor: complex
    power_factor: complex
    geometry_factor: complex
    action_factor: complex
    jacobian_factor: complex
    badset_margin: float
    z: complex
    h: float
    branch_log: dict = field(default_factory=dict)

    def product(self):
        return (self.gamma_factor * self.power_factor * self.geometry_factor
                * self.action_factor * self.jacobian_factor)

    def to_json(self, path=None):
        payload = {
            "z": [self.z.real, self.z.imag],
            "h": self.h,
            "d0_re": self.value.real,
            "d0_im": self.value.imag,
            "factors": {
                name: [getattr(self, name).real, getattr(self, name).imag]
                for name in ("gamma_factor", "power_factor", "geometry_factor",
                             "action_factor", "jacobian_factor")
            },
            "badset_margin": self.badset_margin,
            "branch_log": self.branch_log,
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=1)
        return payload


def transition_symbol(scenario, x, y_prime=None, t_max=None):
    """Closed-form principal amplitude d0(x, y', z).

    All five factors are computed from the scenario geometry; square roots
    and the complex power stay on branches tracked continuously from their
    section values, recorded in ``branch_log``.
    """
    model = scenario.model
    d = model.dim
    lam = model.lambdas
    lam1 = lam[0]
    sp = scenario.spectral
    pole_check(scenario)
    lattice_guard(scenario)

    x = np.asarray(x, dtype=float)
    y_prime = np.zeros(d - 1) if y_prime is None else \
        np.atleast_1d(np.asarray(y_prime, dtype=float))
    branch_log = {}

    phi1 = badset_value(scenario, x)
    if abs(phi1) <= scenario.badset_tolerance(x):
        raise NumericalError(
            f"target x = {x} too close to the degenerate outgoing subset")

    xsec = np.concatenate([[scenario.epsilon], y_prime])
    g1m = g1_minus_at(scenario, y_prime if d > 1 else None)
    g1p = g1_plus_at(scenario, x)

    # gamma factor
    f_gamma = (cmath.sqrt(lam1) * cmath.exp(-1j * d * cmath.pi / 4)
               * gamma(sp.S / lam1))

    # complex power of the overlap
    bracket = 1j * lam1 * float(g1m.g1 @ g1p.g1)
    f_power, blog = principal_power(bracket, -sp.S / lam1)
    branch_log["power"] = blog

    # section geometry
    xi_sec = scenario.chart_minus.gradient(xsec)
    dpxi1 = float(np.asarray(model.grad_p0(xsec, xi_sec))[d])
    sq, blog = principal_sqrt(dpxi1)
    branch_log["sqrt_dpxi1"] = blog
    if d > 1:
        hess_y = scenario.chart_minus.hessian(xsec)[1:, 1:]
        det_y = abs(np.linalg.det(hess_y)) ** 0.5
    else:
        det_y = 1.0
    f_geom = np.linalg.norm(g1m.g1) * det_y * sq

    # action along the outgoing manifold
    f_action = action_factor(scenario, x)

    # Jacobian limit of the section family with frozen momentum
    tangents = []
    for j in range(d - 1):
        v = np.zeros(2 * d)
        v[1 + j] = 1.0
        tangents.append(v)
    key = ("fjac", tuple(np.round(y_prime, 14)))
    f_jac, diag = _cached(
        scenario, key,
        lambda: jacobian_limit(scenario,
                               np.concatenate([xsec, xi_sec]),
                               tangents, t_max=t_max))
    branch_log["jacobian"] = {"windows": [repr(w) for w in diag["windows"]]}

    value = f_gamma * f_power * f_geom * f_action * f_jac
    return TransitionEvaluation(value, f_gamma, f_power, f_geom, f_action,
                                f_jac, abs(phi1), sp.z, sp.h, branch_log)


@dataclass
class SymbolChain:
    """Intermediate quantities of the transport pipeline."""

    b0_times: np.ndarray
    b0: np.ndarray
    a00: complex
    c0: complex
    d0_transport: complex
    eta_of_y: np.ndarray


def eta_of_y_prime(scenario, y_prime, tol=1e-12, max_iter=20):
    """Newton solve of x'(eta') = y' for the stationary frequency."""
    d = scenario.dim
    if d == 1:
        return np.zeros(0)
    y_prime = np.atleast_1d(np.asarray(y_prime, dtype=float))
    xsec = np.concatenate([[scenario.epsilon], y_prime])
    eta = scenario.chart_minus.gradient(xsec)[1:]
    for _ in range(max_iter):
        ip = intersection_point(scenario, eta)
        g = ip.x_of_eta - y_prime
        if np.max(np.abs(g)) <= tol:
            return eta
        # d x'(eta) / d eta = inverse transverse Hessian of phi_-
        hess = scenario.chart_minus.hessian(
            np.concatenate([[scenario.epsilon], ip.x_of_eta]))[1:, 1:]
        eta = eta - hess @ g
    raise ConvergenceError("stationary frequency Newton did not converge")


def transition_symbol_via_transport(scenario, x, y_prime=None, t_max=None,
                                    return_chain=False):
    """Transport-pipeline amplitude; cross-checks the closed form.

    d0 = e^{-i (d-1) pi / 4} |det Hess_y' phi_-|^{1/2} c0(x, eta'(y')).
    """
    d = scenario.dim
    y_prime = np.zeros(d - 1) if y_prime is None else \
        np.atleast_1d(np.asarray(y_prime, dtype=float))
    eta = eta_of_y_prime(scenario, y_prime)
    c0 = outgoing_symbol(scenario, x, eta, t_max=t_max)
    xsec = np.concatenate([[scenario.epsilon], y_prime])
    if d > 1:
        hess_y = scenario.chart_minus.hessian(xsec)[1:, 1:]
        det_y = abs(np.linalg.det(hess_y)) ** 0.5
    else:
        det_y = 1.0
    val = cmath.exp(-1j * (d - 1) * cmath.pi / 4) * det_y * c0
    if not return_chain:
        return val
    tr = transport_amplitude(scenario, eta, t_max=t_max)
    a00, _ = initial_symbol_limit(scenario, eta)
    return val, SymbolChain(tr["times"], tr["b0"], a00, c0, val, eta)


# ---------------------------------------------------------------------------
# application to Cauchy data


def apply_transition(scenario, u0, x_targets, y_grid=None, d0_values=None):
    """Apply the transition operator to section data by quadrature.

    Parameters
    ----------
    u0 : complex scalar (d = 1) or array over ``y_grid`` (d = 2)
        Cauchy data on the section {x_1 = eps}.
    x_targets : (n, d) array
        Evaluation points near the outgoing manifold.
    y_grid : (m,) array, required when d = 2
        Uniform y' grid carrying ``u0``.
    d0_values : optional precomputed amplitudes, shape (n,) for d = 1 or
        (n, m) for d = 2, to amortize sweeps.
    """
    model = scenario.model
    d = model.dim
    sp = scenario.spectral
    lam1 = model.lambdas[0]
    h = sp.h
    pref = h ** (sp.S / lam1) / (2 * np.pi * h) ** (d / 2.0)
    x_targets = np.atleast_2d(np.asarray(x_targets, dtype=float))
    phi_plus = np.array([scenario.chart_plus.value(x) for x in x_targets])

    if d == 1:
        phim = float(scenario.chart_minus.value([scenario.epsilon]))
        out = np.empty(x_targets.shape[0], dtype=complex)
        for i, x in enumerate(x_targets):
            d0 = d0_values[i] if d0_values is not None else \
                transition_symbol(scenario, x).value
            out[i] = (pref * d0
                      * cmath.exp(1j * (phi_plus[i] - phim) / h) * u0)
        return out

    if y_grid is None:
        raise ValidationError("y_grid is required for d >= 2")
    y_grid = np.asarray(y_grid, dtype=float)
    u0 = np.asarray(u0, dtype=complex)
    if u0.shape != y_grid.shape:
        raise ValidationError("u0 must be sampled on y_grid")
    dy = float(np.diff(y_grid).mean())
    if not np.allclose(np.diff(y_grid), dy, rtol=1e-10):
        raise ValidationError("y_grid must be uniform")
    edge = max(abs(u0[0]), abs(u0[-1]))
    if edge > 1e-8 * max(np.abs(u0).max(), 1e-300):
        raise ValidationError("u0 must be compactly supported inside the grid")
    # oscillation per cell of the kernel phase
    sec = np.stack([np.full(y_grid.size, scenario.epsilon), y_grid], axis=1)
    phim = np.array([scenario.chart_minus.value(p) for p in sec])
    grad2 = np.array([scenario.chart_minus.gradient(p)[1] for p in sec])
    if np.max(np.abs(grad2)) * dy / h > np.pi / 4:
        raise ValidationError(
            "y' grid too coarse for the kernel oscillation at this h")

    out = np.empty(x_targets.shape[0], dtype=complex)
    for i, x in enumerate(x_targets):
        if d0_values is not None:
            d0_row = d0_values[i]
        else:
            d0_row = np.array([transition_symbol(scenario, x, np.array([y])).value
                               for y in y_grid])
        integrand = d0_row * np.exp(1j * (phi_plus[i] - phim) / h) * u0
        w = np.full(y_grid.size, dy)
        w[0] = w[-1] = dy / 2
        out[i] = pref * np.sum(w * integrand)
    return out
