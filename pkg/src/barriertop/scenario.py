"""Transition scenarios: model, section, spectral box and manifold charts.

A scenario fixes everything the transition operator needs: the model, the
section {x_1 = epsilon} carrying the incoming data, the base point on the
incoming manifold, charts for both manifolds, and the spectral parameters.
Construction validates that the base point is admissible (its leading
decay coefficient is nonzero and aligned with the x_1 axis).
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalError, ValidationError
from .flow import flow_states
from .manifolds import manifold_generating_function
from .models import PhasePoint, spectral_params
from .series import exponent_ladder, fit_exp_series, fit_times, leading_term


def refine_manifold_point(model, point, forward=True, T=None, iters=2,
                          tol=1e-12):
    """Newton-project a near-manifold point onto the invariant manifold.

    Shooting formulation: adjust the momentum so the expanding coordinates
    of the flowed point vanish at time T.  An imperfect seed's transverse
    error grows like e^(lambda t) and poisons long-time expansion fits;
    one or two Newton steps push it to rounding level.
    """
    from .flow import flow_states

    d = model.dim
    lam1 = model.lambdas[0]
    lin = model.linearize()
    V = np.column_stack([lin.stable_frame, lin.unstable_frame])
    Vinv = np.linalg.inv(V)
    grow = Vinv[d:] if forward else Vinv[:d]
    w = point.as_vector() if isinstance(point, PhasePoint) else np.asarray(point, float)
    w = w.copy()
    sgn = 1.0 if forward else -1.0
    # increasing horizons: the linear target coordinates carry an
    # O(|w(T)|^2) curvature bias, so later passes must look further out
    horizons = [T] * iters if T is not None else \
        [(5.0 + 4.0 * k) / lam1 for k in range(iters)]
    for Tk in horizons:
        s = flow_states(model, w, [sgn * Tk], tol=tol, with_jacobian=True,
                        rmax=np.inf, atol=1e-30)
        c = grow @ s.states[0]
        M = grow @ s.jacobians[0][:, d:]
        try:
            w[d:] -= np.linalg.solve(M, c)
        except np.linalg.LinAlgError:
            break
    return PhasePoint(w[:d], w[d:])


def decaying_expansion(model, point, forward=True, t_max=None, cutoff=None,
                       degree=1, tol=1e-12, n_samples=90, refine=None):
    """Exponential-series fit of a trajectory converging to the origin.

    ``forward=True`` fits exp(+t H_p)(point) for t >= 0 (incoming side);
    ``forward=False`` fits exp(-t H_p)(point) (outgoing side, reversed
    time).  Returns a PolyExpSeries with value dimension 2d.

    For perturbed models the seed is first refined onto the manifold and
    the rows are weighted by e^(lambda_1 t), which suppresses ladder
    truncation in the leading-coefficient estimate.
    """
    lam1 = model.lambdas[0]
    if refine is None:
        refine = model.kind != "custom"
    if refine and model.kind != "custom":
        point = refine_manifold_point(model, point, forward=forward)
    # step noise re-seeds the unstable direction, so the relative tail
    # error grows like e^(2 lambda_1 t) rtol; the window stays short
    if t_max is None:
        t_max = 4.5 / lam1
    cutoffs = (cutoff,) if cutoff is not None else \
        (4.9 * lam1, 3.9 * lam1, 2.9 * lam1)
    ts = fit_times(lam1, t_max, n_samples)
    sgn = 1.0 if forward else -1.0
    sample = flow_states(model, point, sgn * ts, tol=min(tol, 5e-13),
                         atol=1e-30)
    weight = lam1 if refine else 0.0
    last = None
    for cut in cutoffs:
        ladder = exponent_ladder(model.lambdas, cut)
        try:
            return fit_exp_series(list(zip(ts, sample.states)), ladder,
                                  max_poly_degree=degree, weight_rate=weight)
        except NumericalError as exc:
            # near-collinear rungs on this window: retry a shorter ladder
            last = exc
    raise last


def leading_decay(model, point, forward=True, **kw):
    """Leading decay rate and coefficient of the trajectory from ``point``.

    The spatial projection of the coefficient is what the transition
    amplitudes call g1.  Raises when the leading term is degenerate.
    """
    ser = decaying_expansion(model, point, forward=forward, **kw)
    return leading_term(ser, spatial_dim=model.dim)


class TransitionScenario:
    """Frozen bundle of geometry and spectral data for one experiment."""

    def __init__(self, model, epsilon, rho_minus, eta_prime_box, spectral,
                 chart_plus, chart_minus, badset_tol=None):
        self.model = model
        self.epsilon = float(epsilon)
        self.rho_minus = rho_minus
        self.eta_prime_box = eta_prime_box
        self.spectral = spectral
        self.chart_plus = chart_plus
        self.chart_minus = chart_minus
        self.badset_tol = badset_tol
        self._cache = {}

        d = model.dim
        if abs(rho_minus.x[0] - self.epsilon) > 1e-12:
            raise ValidationError("rho_minus must lie on the section x_1 = epsilon")
        xi_chart = chart_minus.gradient(rho_minus.x)
        if np.max(np.abs(xi_chart - rho_minus.xi)) > 1e-8:
            raise ValidationError(
                "rho_minus is not on the incoming manifold within 1e-8")
        lead = leading_decay(model, rho_minus, forward=True)
        if abs(lead.mu1 - model.lambdas[0]) > 1e-6:
            raise ValidationError(
                "base point decays at the wrong leading rate; it lies on the "
                "degenerate subset where the construction breaks down")
        g1 = lead.g1
        off_axis = np.linalg.norm(g1[1:]) if d > 1 else 0.0
        if off_axis > 1e-8 * np.linalg.norm(g1):
            raise ValidationError(
                "leading decay direction is not aligned with the x_1 axis; "
                "rotate coordinates first")
        self.g1_minus_base = lead

    @property
    def dim(self):
        return self.model.dim

    @property
    def xi_minus_prime(self):
        """xi' component of the base point (center of the eta' box)."""
        return self.rho_minus.xi[1:]

    def badset_tolerance(self, x):
        """Default scale 0.05 * epsilon * |x| unless overridden."""
        if self.badset_tol is not None:
            return self.badset_tol
        return 0.05 * self.epsilon * float(np.linalg.norm(x))

    def eta_in_box(self, eta_prime):
        c, w = self.eta_prime_box
        return bool(np.all(np.abs(np.asarray(eta_prime) - c) <= w + 1e-14))

    def with_z(self, z, h=None):
        """Same geometry, new spectral point (charts shared, caches kept:
        the cached quantities are z- and h-independent)."""
        sp = self.spectral
        new_sp = spectral_params(z, sp.h if h is None else h,
                                 sp.C0, sp.C1, sp.nu, self.model.lambdas)
        twin = object.__new__(TransitionScenario)
        twin.__dict__.update(self.__dict__)
        twin.spectral = new_sp
        return twin


def make_scenario(model, epsilon, h, z, C0=1.0, C1=1.0, nu=0.1,
                  domain_radius=None, chart_tol=1e-8, eta_halfwidth=None,
                  badset_tol=None):
    """Build the standard scenario with the base point on the x_1 axis."""
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    d = model.dim
    if domain_radius is None:
        domain_radius = 3.0 * epsilon
    if domain_radius > model.validity_radius:
        raise ValidationError("domain radius exceeds the model validity radius")
    sp = spectral_params(z, h, C0, C1, nu, model.lambdas)
    chart_plus = manifold_generating_function(model, +1, (np.zeros(d), domain_radius),
                                              tol=chart_tol)
    chart_minus = manifold_generating_function(model, -1, (np.zeros(d), domain_radius),
                                               tol=chart_tol)
    x_base = np.zeros(d)
    x_base[0] = epsilon
    rho_minus = PhasePoint(x_base, chart_minus.gradient(x_base))
    if eta_halfwidth is None:
        eta_halfwidth = 0.25 * epsilon * float(model.lambdas[-1]) / 2.0
    box = (rho_minus.xi[1:].copy(), float(eta_halfwidth))
    return TransitionScenario(model, epsilon, rho_minus, box, sp,
                              chart_plus, chart_minus, badset_tol=badset_tol)
