"""Pure-Python Dormand-Prince 5(4) stepper for Hamiltonian flows.

Mirrors the compiled extension in ``_native.pyx`` exactly (same tableau,
same controller, same escape logic) so both backends agree to rounding
and a benchmark between them is apples to apples.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

# Dormand-Prince coefficients
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_ERR = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                 -17253 / 339200, 22 / 525, -1 / 40])

_MAX_STEPS = 5_000_000

STATUS_OK = 0
STATUS_ESCAPED = 1
STATUS_STEPFAIL = 2


def _poly_eval(w, exps, coefs, lo, hi):
    if hi == lo:
        return 0.0
    mono = np.prod(w[None, :] ** exps[lo:hi], axis=1)
    return float(mono @ coefs[lo:hi])


def _make_rhs_poly(tables, d, with_jac):
    gexp, gco, gptr, hexp, hco, hptr = tables
    n = 2 * d

    def rhs(y):
        w = y[:n]
        g = np.array([_poly_eval(w, gexp, gco, gptr[i], gptr[i + 1]) for i in range(n)])
        out = np.empty_like(y)
        out[:d] = g[d:]
        out[d:n] = -g[:d]
        if with_jac:
            H = np.array([
                _poly_eval(w, hexp, hco, hptr[i], hptr[i + 1]) for i in range(n * n)
            ]).reshape(n, n)
            A = np.vstack([H[d:, :], -H[:d, :]])
            J = y[n:].reshape(n, n)
            out[n:] = (A @ J).ravel()
        return out

    return rhs


def _make_rhs_callable(f, d, with_jac, dfield=None):
    n = 2 * d

    def rhs(y):
        w = y[:n]
        out = np.empty_like(y)
        out[:n] = f(w)
        if with_jac:
            A = dfield(w)
            J = y[n:].reshape(n, n)
            out[n:] = (A @ J).ravel()
        return out

    return rhs


def _dopri5(rhs, y0, times, rtol, atol, rmax, nphase):
    """Integrate from t=0 through the monotone waypoint list ``times``.

    Returns (Y, n_ok, status, t_exit): Y holds the state at each reached
    waypoint; n_ok counts the filled rows.
    """
    times = np.asarray(times, dtype=float)
    nt = times.size
    ndof = y0.size
    Y = np.zeros((nt, ndof))
    y = y0.copy()
    t = 0.0
    k1 = rhs(y)
    nsteps = 0
    n_ok = 0
    direction = 1.0 if times[-1] >= 0 else -1.0

    # fill any waypoint at t = 0
    while n_ok < nt and times[n_ok] == 0.0:
        Y[n_ok] = y
        n_ok += 1
    if n_ok == nt:
        return Y, n_ok, STATUS_OK, np.nan

    scale0 = atol + rtol * float(np.max(np.abs(y)))
    f0 = float(np.max(np.abs(k1)))
    h = direction * min(0.1, 0.01 * scale0 / f0 if f0 > 0 else 1e-6)

    while n_ok < nt:
        target = times[n_ok]
        if nsteps > _MAX_STEPS:
            return Y, n_ok, STATUS_STEPFAIL, t
        if (target - t) * direction <= 0:
            Y[n_ok] = y
            n_ok += 1
            continue
        hstep = h
        clipped = False
        if (t + hstep - target) * direction > 0:
            hstep = target - t
            clipped = True
        K = [k1]
        for s in range(1, 7):
            ys = y + hstep * sum(a * k for a, k in zip(_A[s], K))
            K.append(rhs(ys))
        ynew = y + hstep * sum(b * k for b, k in zip(_B5, K) if b != 0.0)
        errv = hstep * sum(e * k for e, k in zip(_ERR, K) if e != 0.0)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        err = float(np.sqrt(np.mean((errv / sc) ** 2)))
        nsteps += 1
        if err <= 1.0:
            t = t + hstep
            y = ynew
            k1 = K[6]  # FSAL
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * err ** -0.2))
            if not clipped:
                h = hstep * fac
            else:
                h = h * min(fac, 1.0) if fac < 1.0 else h
            wnorm = float(np.linalg.norm(y[:nphase]))
            if wnorm > rmax:
                return Y, n_ok, STATUS_ESCAPED, t
            if clipped or abs(t - target) <= 1e-14 * max(1.0, abs(target)):
                Y[n_ok] = y
                n_ok += 1
        else:
            h = hstep * min(1.0, max(0.2, 0.9 * err ** -0.2))
            if abs(h) < 1e-16:
                return Y, n_ok, STATUS_STEPFAIL, t

    return Y, n_ok, STATUS_OK, np.nan


def integrate_poly(tables, d, w0, times, rtol, atol, with_jac, rmax):
    """Flow of a polynomial Hamiltonian, optionally with variational matrix.

    Returns (W, J, n_ok, status, t_exit) where W is (nt, 2d) and J is
    (nt, 2d, 2d) or None.
    """
    n = 2 * d
    y0 = np.asarray(w0, dtype=float).copy()
    if with_jac:
        y0 = np.concatenate([y0, np.eye(n).ravel()])
    rhs = _make_rhs_poly(tables, d, with_jac)
    Y, n_ok, status, t_exit = _dopri5(rhs, y0, times, rtol, atol, rmax, n)
    W = Y[:, :n]
    J = Y[:, n:].reshape(-1, n, n) if with_jac else None
    return W, J, n_ok, status, t_exit


def integrate_callable(f, dfield, d, w0, times, rtol, atol, with_jac, rmax):
    """Same contract as integrate_poly for callable fields (custom models)."""
    n = 2 * d
    y0 = np.asarray(w0, dtype=float).copy()
    if with_jac:
        if dfield is None:
            raise ValueError("variational flow needs the field derivative")
        y0 = np.concatenate([y0, np.eye(n).ravel()])
    rhs = _make_rhs_callable(f, d, with_jac, dfield)
    Y, n_ok, status, t_exit = _dopri5(rhs, y0, times, rtol, atol, rmax, n)
    W = Y[:, :n]
    J = Y[:, n:].reshape(-1, n, n) if with_jac else None
    return W, J, n_ok, status, t_exit
