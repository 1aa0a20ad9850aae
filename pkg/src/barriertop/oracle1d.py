"""Independent 1-d ground truth for the transition amplitudes.

The inverted-oscillator equation -h^2 u'' - (lambda^2/4) x^2 u = z u is
integrated with a library Runge-Kutta solver (deliberately a different
integrator from the package's own stepper) and connection coefficients
are extracted by matching against two-term WKB branches far from the
barrier.  A complex-scaled finite-difference eigensolve recovers the
resonance string for comparison with the spectral lattice.
"""

from __future__ import annotations

import cmath
import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.sparse import diags
from scipy.sparse.linalg import LinearOperator, eigs, splu

from .errors import NumericalError, ValidationError
from .transition import apply_transition, transition_symbol

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


@dataclass
class ConnectionResult:
    """Connection coefficients of the barrier problem.

    Amplitudes refer to flux-normalized WKB branches: incoming normalized
    to one, ``outgoing`` holds (reflection on x > 0, transmission on
    x < 0).  ``estimated_error`` comes from re-solving with the matching
    radius doubled and the tolerance tightened.
    """

    incoming_amplitude: complex
    outgoing_amplitudes: tuple
    matching_radius: float
    estimated_error: float


def _panel_integral(f, a, b, panels=40):
    """Gauss-Legendre quadrature of a smooth complex integrand."""
    edges = np.linspace(a, b, panels + 1)
    total = 0.0 + 0.0j
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        xs = mid + half * _GL_NODES
        total += half * np.sum(_GL_WEIGHTS * f(xs))
    return total


def _wkb_pieces(lam, z, h):
    c = 0.5 * lam

    def Q(x):
        return z + c**2 * np.asarray(x) ** 2

    def sqrtQ(x):
        return np.sqrt(Q(x).astype(complex))

    def _G(u):
        # antiderivative of sqrt(z + u^2); branch-safe for u >= 0
        r = cmath.sqrt(z + u * u)
        return 0.5 * (u * r + z * cmath.log(u + r))

    G0 = 0.25 * z * cmath.log(complex(z)) if z != 0 else 0.0

    def sigma(x):
        """integral_0^x sqrt(Q), closed form; odd in x by symmetry."""
        xx = float(x)
        val = (_G(c * abs(xx)) - G0) / c
        return val if xx >= 0 else -val

    def tau_integrand(x):
        q = Q(x).astype(complex)
        qp = 2 * c**2 * np.asarray(x)
        qpp = 2 * c**2
        return (-qpp / (4 * q) + 5 * qp**2 / (16 * q**2)) / (2 * np.sqrt(q))

    return Q, sqrtQ, sigma, tau_integrand


def barrier_connection(lam, z, h, epsilon, X0=None, tol=1e-12,
                       match_tol=1e-7, _refine=True):
    """Connection coefficients of -h^2 u'' - (lam^2/4) x^2 u = z u.

    Seeds a pure transmitted two-term WKB wave at -X0, integrates across
    the barrier, and least-squares matches incoming/reflected branches on
    a window near +X0.  The default X0 keeps the modulus truncation
    (about 0.14 h^2 / X0^4 empirically) below ``match_tol``.

    The phases of the coefficients are tied to the matching radius by the
    WKB normalization, so ``estimated_error`` and downstream comparisons
    use moduli; phases are only meaningful modulo a constant.
    """
    if tol < 1e-13:
        raise ValidationError("tol below integrator capability")
    lam = float(lam)
    z = complex(z)
    h = float(h)
    floor = 5.0 * max(np.sqrt(h), epsilon)
    if X0 is None:
        X0 = max(floor, (0.14 * h**2 / match_tol) ** 0.25)
    if X0 < floor - 1e-12:
        raise ValidationError(f"X0 must be at least {floor:.3f}")

    Q, sqrtQ, sigma, tau_int = _wkb_pieces(lam, z, h)

    def tau_from(xref, x):
        return _panel_integral(tau_int, xref, x, panels=24)

    # phases referenced per side so that basis moduli are Q^(-1/4) at the
    # matching radii; tunneling suppression then lives in the coefficients
    sig_ref_m = sigma(-X0)
    sig_ref_p = sigma(+X0)

    def w_trans(x):
        # outgoing on x < 0 (moving left): phase e^{-i sigma / h}
        vals = []
        for xx in np.atleast_1d(x):
            s = sigma(xx) - sig_ref_m
            t = tau_from(-X0, xx)
            vals.append(Q(xx) ** -0.25 * cmath.exp(-1j * s / h) * (1 - 1j * h * t))
        return np.asarray(vals)

    def dw_trans(x):
        # derivative of the two-term branch, used only at the seed point
        xx = float(x)
        q = complex(Q(xx))
        qp = 0.5 * lam**2 * xx
        s = sigma(xx) - sig_ref_m
        t = tau_from(-X0, xx)
        amp = q**-0.25 * (1 - 1j * h * t)
        damp = (-0.25 * qp * q**-1.25 * (1 - 1j * h * t)
                - 1j * h * q**-0.25 * tau_int(np.array([xx]))[0])
        return cmath.exp(-1j * s / h) * (damp - 1j * np.sqrt(q) / h * amp)

    def rhs(x, y):
        q = complex(Q(x))
        return [y[2], y[3], (-q / h**2 * complex(y[0], y[1])).real,
                (-q / h**2 * complex(y[0], y[1])).imag]

    u0 = complex(w_trans(-X0)[0])
    du0 = dw_trans(-X0)
    sol = solve_ivp(rhs, (-X0, X0), [u0.real, u0.imag, du0.real, du0.imag],
                    method="DOP853", rtol=tol, atol=tol * 1e-2,
                    dense_output=True)
    if not sol.success:
        raise NumericalError("oracle integration failed: " + sol.message)

    # match alpha w_minus + beta w_plus = u on a window near +X0
    xs = np.linspace(0.92 * X0, X0, 24)
    uvals = np.array([complex(*sol.sol(x)[:2]) for x in xs])
    wm = np.empty(xs.size, dtype=complex)
    wp = np.empty(xs.size, dtype=complex)
    for k, xx in enumerate(xs):
        s = sigma(xx) - sig_ref_p
        t = tau_from(X0, xx)
        q = complex(Q(xx))
        wm[k] = q**-0.25 * cmath.exp(-1j * s / h) * (1 - 1j * h * t)
        wp[k] = q**-0.25 * cmath.exp(+1j * s / h) * (1 + 1j * h * t)
    A = np.stack([wm, wp], axis=1)
    coef, res, *_ = np.linalg.lstsq(A, uvals, rcond=None)
    alpha, beta = coef
    rel_resid = float(np.linalg.norm(A @ coef - uvals) / np.linalg.norm(uvals))
    if rel_resid > 1e-6:
        raise NumericalError(
            f"WKB matching residual {rel_resid:.2e}; increase X0 or tighten tol")
    refl = beta / alpha
    trans = 1.0 / alpha

    err = np.nan
    if _refine:
        ref = barrier_connection(lam, z, h, epsilon, X0=2 * X0,
                                 tol=max(tol / 10, 1e-13), _refine=False)
        r2, t2 = ref.outgoing_amplitudes
        err = max(abs(abs(r2) - abs(refl)),
                  abs(abs(t2) - abs(trans))) / max(abs(trans), 1e-300)
    return ConnectionResult(1.0 + 0.0j, (refl, trans), float(X0), float(err))


# ---------------------------------------------------------------------------
# comparison against the transition operator


def compare_transition(scenario, z_list, h_list, x_target=-1.0,
                       z_in_units_of_lambda_h=False, csv_path=None):
    """Transmitted amplitude of the transition operator vs the ODE oracle.

    The operator output at ``x_target`` is normalized by the local
    energy-shifted WKB branch, so the tabulated relative modulus error
    displays the O(h) truncation of the fixed-energy principal symbol.
    Phases are reported modulo one constant fixed by the first table row.
    With ``z_in_units_of_lambda_h`` the z entries are multiples of
    lambda_1 h, which is how spectral boxes scale.
    """
    model = scenario.model
    if model.dim != 1:
        raise ValidationError("oracle comparison is one-dimensional")
    lam = float(model.lambdas[0])
    eps = scenario.epsilon
    rows = []
    phase_ref = None
    for h in h_list:
        for z0 in z_list:
            z = complex(z0) * lam * h if z_in_units_of_lambda_h else complex(z0)
            sc = scenario.with_z(complex(z), h=float(h))
            oracle = barrier_connection(lam, complex(z), float(h), eps,
                                        match_tol=1e-6)
            _, trans = oracle.outgoing_amplitudes
            u0 = (lam * eps) ** -0.5 * cmath.exp(
                1j * float(sc.chart_minus.value([eps])) / h)
            jval = apply_transition(sc, u0, [[x_target]])[0]
            qz = complex(z) + 0.25 * lam**2 * x_target**2
            # flux convention: |group velocity|^(1/2) = (2 sqrt(Q))^(1/2)
            amp_j = jval * (2.0 * qz ** 0.5) ** 0.5
            rel = abs(abs(amp_j) - abs(trans)) / abs(trans)
            dphase = cmath.phase(amp_j / trans)
            if phase_ref is None:
                phase_ref = dphase
            rows.append({
                "z_re": complex(z).real, "z_im": complex(z).imag, "h": float(h),
                "T_oracle_abs": abs(trans), "T_J_abs": abs(amp_j),
                "rel_err_modulus": rel,
                "phase_err": (dphase - phase_ref + np.pi) % (2 * np.pi) - np.pi,
                "oracle_error": oracle.estimated_error,
            })
    hs = sorted({r["h"] for r in rows})
    max_err = {h: max(r["rel_err_modulus"] for r in rows if r["h"] == h)
               for h in hs}
    slope = np.nan
    if len(hs) >= 2:
        slope = float(np.polyfit(np.log([h for h in hs]),
                                 np.log([max(max_err[h], 1e-300) for h in hs]), 1)[0])
    report = {"rows": rows, "per_h_max_err": max_err, "loglog_slope": slope}
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            w.writeheader()
            for r in rows:
                w.writerow(r)
    return report


# ---------------------------------------------------------------------------
# complex-scaled resonances


def _scaled_eigs(lam, h, count, n, X, theta):
    x = np.linspace(-X, X, n + 2)[1:-1]
    dx = x[1] - x[0]
    rot = cmath.exp(-2j * theta)
    pot = -0.25 * lam**2 * cmath.exp(2j * theta) * x**2
    main = rot * (-(h**2)) * (-2.0 / dx**2) + pot
    off = rot * (-(h**2)) * (1.0 / dx**2) * np.ones(n - 1)
    A = diags([off, main, off], [-1, 0, 1], format="csc", dtype=complex)
    lu = splu(A)
    op = LinearOperator(A.shape, matvec=lu.solve, dtype=complex)
    vals = eigs(op, k=count + 4, which="LM", return_eigenvectors=False,
                maxiter=5000)
    ev = 1.0 / vals
    ev = ev[np.argsort(np.abs(ev))]
    return ev[:count]


def scaled_resonances(lam, h, count, grid_size=1500, theta=np.pi / 4, X=None):
    """Lowest resonances of the inverted oscillator by complex scaling.

    Rotating x -> e^{i theta} x at theta = pi/4 turns the barrier into -i
    times a confining oscillator; the finite-difference eigenvalues
    nearest zero are Richardson-extrapolated over a grid doubling, which
    doubles as the convergence check.
    """
    if grid_size < 1000:
        raise ValidationError("grid_size must be at least 1000")
    if count > 10:
        raise ValidationError("count is limited to 10")
    lam = float(lam)
    h = float(h)
    if X is None:
        X = max(1.0, 9.0 * np.sqrt(2 * h / lam))
    e1 = _scaled_eigs(lam, h, count, grid_size, X, theta)
    e2 = _scaled_eigs(lam, h, count, 2 * grid_size, X, theta)
    move = np.max(np.abs(e1 - e2) / np.abs(e2))
    if move > 1e-4:
        raise NumericalError(
            f"discretization not converged: doubling moved eigenvalues by "
            f"{move:.2e} relative")
    return ((4.0 * e2 - e1) / 3.0).tolist()


# ---------------------------------------------------------------------------
# assembled crossing solution on a grid


def _smooth_step(s):
    """C-infinity ramp: 0 for s <= 0, 1 for s >= 1."""
    s = np.clip(s, 0.0, 1.0)
    out = np.zeros_like(s)
    inner = (s > 0) & (s < 1)
    a = np.exp(-1.0 / np.clip(s[inner], 1e-12, None))
    b = np.exp(-1.0 / np.clip(1.0 - s[inner], 1e-12, None))
    out[inner] = a / (a + b)
    out[s >= 1] = 1.0
    return out


def _window(x, lo, lo_ramp, hi, hi_ramp):
    return (_smooth_step((x - lo) / lo_ramp)
            * _smooth_step((hi - x) / hi_ramp))


def assemble_crossing_solution(scenario, x_grid, inner=0.22, inner_ramp=0.16,
                               outer=0.78, outer_ramp=0.16, d0_grid=25):
    """Incoming branch plus operator output, assembled on a 1-d grid.

    The incoming flux-normalized wave occupies x > 0; the reflected and
    transmitted pieces come from the transition operator with the
    amplitude interpolated from a coarse grid (it varies smoothly while
    the phases are evaluated exactly).  All cutoffs are C-infinity.
    """
    model = scenario.model
    lam = float(model.lambdas[0])
    eps = scenario.epsilon
    sp = scenario.spectral
    h = sp.h
    x_grid = np.asarray(x_grid, dtype=float)
    u = np.zeros(x_grid.size, dtype=complex)

    phim_eps = float(scenario.chart_minus.value([eps]))
    u0 = (lam * eps) ** -0.5 * cmath.exp(1j * phim_eps / h)

    # coarse amplitude tables on both outgoing branches
    pref = h ** (sp.S / lam) / (2 * np.pi * h) ** 0.5

    def d0_interp(sign):
        xs = sign * np.linspace(inner * 0.8, max(outer + 2 * outer_ramp, 1.0), d0_grid)
        vals = np.array([transition_symbol(scenario, [x]).value for x in xs])
        order = np.argsort(xs)
        xs, vals = xs[order], vals[order]

        def interp(xq):
            re = np.interp(xq, xs, vals.real)
            im = np.interp(xq, xs, vals.imag)
            return re + 1j * im

        return interp

    d0_pos = d0_interp(+1)
    d0_neg = d0_interp(-1)

    pos = x_grid > 0
    neg = x_grid < 0
    xp = x_grid[pos]
    xn = x_grid[neg]

    win_p = _window(xp, inner, inner_ramp, outer, outer_ramp)
    win_n = _window(-xn, inner, inner_ramp, outer, outer_ramp)

    phim = np.array([scenario.chart_minus.value([x]) for x in xp])
    phip_p = np.array([scenario.chart_plus.value([x]) for x in xp])
    phip_n = np.array([scenario.chart_plus.value([x]) for x in xn])

    incoming = (lam * np.abs(xp)) ** -0.5 * np.exp(1j * phim / h)
    reflected = (pref * d0_pos(xp) * np.exp(1j * (phip_p - phim_eps) / h) * u0)
    transmitted = (pref * d0_neg(xn) * np.exp(1j * (phip_n - phim_eps) / h) * u0)

    u[pos] = win_p * (incoming + reflected)
    u[neg] = win_n * transmitted
    from .microlocal import GridFunction

    return GridFunction((x_grid,), u, h)
