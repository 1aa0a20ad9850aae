# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Dormand-Prince 5(4) stepper for polynomial Hamiltonian flows.

Semantics match ``pyfallback`` exactly: same tableau, same error control,
same waypoint and escape handling.  Only polynomial fields are compiled;
callable fields always run through the Python fallback.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, fmax, fmin, pow, sqrt, isnan

cnp.import_array()

BACKEND = "native"

STATUS_OK = 0
STATUS_ESCAPED = 1
STATUS_STEPFAIL = 2

DEF MAXSTAGE = 7

cdef double[7] C_NODES
cdef double[7][6] A_COEF
cdef double[7] B5
cdef double[7] ERRC

C_NODES = [0.0, 1.0/5, 3.0/10, 4.0/5, 8.0/9, 1.0, 1.0]
A_COEF[1][0] = 1.0/5
A_COEF[2][0] = 3.0/40;        A_COEF[2][1] = 9.0/40
A_COEF[3][0] = 44.0/45;       A_COEF[3][1] = -56.0/15;      A_COEF[3][2] = 32.0/9
A_COEF[4][0] = 19372.0/6561;  A_COEF[4][1] = -25360.0/2187; A_COEF[4][2] = 64448.0/6561; A_COEF[4][3] = -212.0/729
A_COEF[5][0] = 9017.0/3168;   A_COEF[5][1] = -355.0/33;     A_COEF[5][2] = 46732.0/5247; A_COEF[5][3] = 49.0/176;  A_COEF[5][4] = -5103.0/18656
A_COEF[6][0] = 35.0/384;      A_COEF[6][1] = 0.0;           A_COEF[6][2] = 500.0/1113;   A_COEF[6][3] = 125.0/192; A_COEF[6][4] = -2187.0/6784; A_COEF[6][5] = 11.0/84
B5 = [35.0/384, 0.0, 500.0/1113, 125.0/192, -2187.0/6784, 11.0/84, 0.0]
ERRC = [71.0/57600, 0.0, -71.0/16695, 71.0/1920, -17253.0/339200, 22.0/525, -1.0/40]

cdef long MAX_STEPS = 5000000


cdef inline double _poly_eval(double* w, long[:, ::1] exps, double[::1] coefs,
                              long lo, long hi, int nvar) noexcept nogil:
    cdef double acc = 0.0
    cdef double term
    cdef long r
    cdef int v, e, q
    for r in range(lo, hi):
        term = coefs[r]
        for v in range(nvar):
            e = <int>exps[r, v]
            for q in range(e):
                term *= w[v]
        acc += term
    return acc


cdef void _rhs(double* y, double* out,
               long[:, ::1] gexp, double[::1] gco, long[::1] gptr,
               long[:, ::1] hexp, double[::1] hco, long[::1] hptr,
               int d, int with_jac, double* hbuf) noexcept nogil:
    cdef int n = 2 * d
    cdef int i, j, k
    cdef double g
    for i in range(n):
        g = _poly_eval(y, gexp, gco, gptr[i], gptr[i + 1], n)
        if i < d:
            out[d + i] = -g
        else:
            out[i - d] = g
    if with_jac:
        # A = J_sympl * Hess p0 evaluated at the phase point
        for i in range(n):
            for j in range(n):
                hbuf[i * n + j] = _poly_eval(y, hexp, hco, hptr[i * n + j],
                                             hptr[i * n + j + 1], n)
        # dJ[i,j] = sum_k A[i,k] J[k,j]; A[i,k] = H[d+i,k] (i<d) else -H[i-d,k]
        for i in range(n):
            for j in range(n):
                g = 0.0
                for k in range(n):
                    if i < d:
                        g += hbuf[(d + i) * n + k] * y[n + k * n + j]
                    else:
                        g -= hbuf[(i - d) * n + k] * y[n + k * n + j]
                out[n + i * n + j] = g


def integrate_poly(tables, int d, w0, times, double rtol, double atol,
                   bint with_jac, double rmax):
    """Same contract as pyfallback.integrate_poly."""
    gexp_a, gco_a, gptr_a, hexp_a, hco_a, hptr_a = tables
    cdef long[:, ::1] gexp = np.ascontiguousarray(gexp_a, dtype=np.int64)
    cdef double[::1] gco = np.ascontiguousarray(gco_a, dtype=np.float64)
    cdef long[::1] gptr = np.ascontiguousarray(gptr_a, dtype=np.int64)
    cdef long[:, ::1] hexp = np.ascontiguousarray(hexp_a, dtype=np.int64)
    cdef double[::1] hco = np.ascontiguousarray(hco_a, dtype=np.float64)
    cdef long[::1] hptr = np.ascontiguousarray(hptr_a, dtype=np.int64)

    cdef int n = 2 * d
    cdef int ndof = n + (n * n if with_jac else 0)
    cdef cnp.ndarray[double, ndim=1] y_arr = np.zeros(ndof)
    cdef double[::1] y = y_arr
    cdef int i, j, s
    w0 = np.asarray(w0, dtype=np.float64)
    for i in range(n):
        y[i] = w0[i]
    if with_jac:
        for i in range(n):
            y[n + i * n + i] = 1.0

    cdef cnp.ndarray[double, ndim=1] times_arr = np.ascontiguousarray(times, dtype=np.float64)
    cdef double[::1] tspec = times_arr
    cdef int nt = tspec.shape[0]
    cdef cnp.ndarray[double, ndim=2] Y_arr = np.zeros((nt, ndof))
    cdef double[:, ::1] Y = Y_arr

    cdef cnp.ndarray[double, ndim=2] K_arr = np.zeros((MAXSTAGE, ndof))
    cdef double[:, ::1] K = K_arr
    cdef cnp.ndarray[double, ndim=1] ytmp_arr = np.zeros(ndof)
    cdef double[::1] ytmp = ytmp_arr
    cdef cnp.ndarray[double, ndim=1] hbuf_arr = np.zeros(n * n)
    cdef double[::1] hbuf = hbuf_arr

    cdef double t = 0.0, h, hstep, direction, err, sc, acc, fac, target
    cdef double scale0, f0, wnorm, ynew_i, err_i
    cdef long nsteps = 0
    cdef int n_ok = 0, status = STATUS_OK, clipped
    cdef double t_exit = float("nan")

    _rhs(&y[0], &K[0, 0], gexp, gco, gptr, hexp, hco, hptr, d, with_jac, &hbuf[0])

    direction = 1.0 if tspec[nt - 1] >= 0 else -1.0
    while n_ok < nt and tspec[n_ok] == 0.0:
        for i in range(ndof):
            Y[n_ok, i] = y[i]
        n_ok += 1
    if n_ok == nt:
        return Y_arr[:, :n], (Y_arr[:, n:].reshape(nt, n, n) if with_jac else None), n_ok, STATUS_OK, t_exit

    scale0 = 0.0
    f0 = 0.0
    for i in range(ndof):
        scale0 = fmax(scale0, fabs(y[i]))
        f0 = fmax(f0, fabs(K[0, i]))
    scale0 = atol + rtol * scale0
    h = direction * (fmin(0.1, 0.01 * scale0 / f0) if f0 > 0 else 1e-6)

    while n_ok < nt:
        target = tspec[n_ok]
        if nsteps > MAX_STEPS:
            status = STATUS_STEPFAIL
            t_exit = t
            break
        if (target - t) * direction <= 0:
            for i in range(ndof):
                Y[n_ok, i] = y[i]
            n_ok += 1
            continue
        hstep = h
        clipped = 0
        if (t + hstep - target) * direction > 0:
            hstep = target - t
            clipped = 1
        for s in range(1, 7):
            for i in range(ndof):
                acc = 0.0
                for j in range(s):
                    if A_COEF[s][j] != 0.0:
                        acc += A_COEF[s][j] * K[j, i]
                ytmp[i] = y[i] + hstep * acc
            _rhs(&ytmp[0], &K[s, 0], gexp, gco, gptr, hexp, hco, hptr, d, with_jac, &hbuf[0])
        err = 0.0
        for i in range(ndof):
            acc = 0.0
            err_i = 0.0
            for s in range(7):
                if B5[s] != 0.0:
                    acc += B5[s] * K[s, i]
                if ERRC[s] != 0.0:
                    err_i += ERRC[s] * K[s, i]
            ynew_i = y[i] + hstep * acc
            ytmp[i] = ynew_i
            sc = atol + rtol * fmax(fabs(y[i]), fabs(ynew_i))
            err_i = hstep * err_i / sc
            err += err_i * err_i
        err = sqrt(err / ndof)
        nsteps += 1
        if err <= 1.0:
            t = t + hstep
            for i in range(ndof):
                y[i] = ytmp[i]
                K[0, i] = K[6, i]
            if err == 0.0:
                fac = 5.0
            else:
                fac = fmin(5.0, fmax(0.2, 0.9 * pow(err, -0.2)))
            if not clipped:
                h = hstep * fac
            elif fac < 1.0:
                h = h * fac
            wnorm = 0.0
            for i in range(n):
                wnorm += y[i] * y[i]
            wnorm = sqrt(wnorm)
            if wnorm > rmax:
                status = STATUS_ESCAPED
                t_exit = t
                break
            if clipped or fabs(t - target) <= 1e-14 * fmax(1.0, fabs(target)):
                for i in range(ndof):
                    Y[n_ok, i] = y[i]
                n_ok += 1
        else:
            h = hstep * fmin(1.0, fmax(0.2, 0.9 * pow(err, -0.2)))
            if fabs(h) < 1e-16:
                status = STATUS_STEPFAIL
                t_exit = t
                break

    W = Y_arr[:, :n]
    J = Y_arr[:, n:].reshape(nt, n, n) if with_jac else None
    return W, J, n_ok, status, t_exit
