"""Dense multivariate polynomials with exact derivatives.

All built-in Hamiltonian models and all chart representations are
polynomial, which keeps every derivative closed-form and removes numerical
differentiation from the error budget.  Terms are stored as an integer
exponent matrix plus a coefficient vector.
"""

from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np


class Polynomial:
    """Polynomial in ``nvar`` real variables.

    Parameters
    ----------
    nvar : int
        Number of variables.
    exps : (k, nvar) array of int
        Exponent rows, one per term.
    coefs : (k,) array of float
        Term coefficients.
    """

    __slots__ = ("nvar", "exps", "coefs")

    def __init__(self, nvar, exps=None, coefs=None):
        self.nvar = int(nvar)
        if exps is None:
            exps = np.zeros((0, self.nvar), dtype=np.int64)
            coefs = np.zeros(0)
        self.exps = np.asarray(exps, dtype=np.int64).reshape(-1, self.nvar)
        self.coefs = np.asarray(coefs, dtype=float).reshape(-1)
        if self.exps.shape[0] != self.coefs.shape[0]:
            raise ValueError("exponent rows and coefficients must align")

    @classmethod
    def from_terms(cls, nvar, terms):
        """Build from a mapping {exponent tuple: coefficient}, merging duplicates."""
        merged = {}
        for e, c in terms.items():
            e = tuple(int(v) for v in e)
            if len(e) != nvar:
                raise ValueError(f"exponent tuple {e} does not have {nvar} entries")
            if any(v < 0 for v in e):
                raise ValueError("negative exponents are not allowed")
            merged[e] = merged.get(e, 0.0) + float(c)
        items = sorted((e, c) for e, c in merged.items() if c != 0.0)
        if not items:
            return cls(nvar)
        exps = np.array([e for e, _ in items], dtype=np.int64)
        coefs = np.array([c for _, c in items])
        return cls(nvar, exps, coefs)

    def __call__(self, points):
        """Evaluate at points of shape (..., nvar); returns shape (...)."""
        pts = np.asarray(points, dtype=float)
        squeeze = pts.ndim == 1
        pts = pts.reshape(-1, self.nvar)
        if self.coefs.size == 0:
            out = np.zeros(pts.shape[0])
        else:
            # (m, k) monomial matrix; exponents are small so ** is cheap.
            mono = np.prod(pts[:, None, :] ** self.exps[None, :, :], axis=2)
            out = mono @ self.coefs
        return out[0] if squeeze else out.reshape(np.asarray(points).shape[:-1])

    def diff(self, var):
        """Partial derivative with respect to variable ``var``."""
        keep = self.exps[:, var] > 0
        exps = self.exps[keep].copy()
        coefs = self.coefs[keep] * exps[:, var]
        exps[:, var] -= 1
        return Polynomial(self.nvar, exps, coefs)

    def grad(self):
        return [self.diff(v) for v in range(self.nvar)]

    def hess(self):
        return [[self.diff(i).diff(j) for j in range(self.nvar)] for i in range(self.nvar)]

    def grad_eval(self, points):
        """Gradient at points (..., nvar) -> (..., nvar)."""
        pts = np.asarray(points, dtype=float)
        squeeze = pts.ndim == 1
        pts = pts.reshape(-1, self.nvar)
        out = np.stack([g(pts) for g in self.grad()], axis=-1)
        if squeeze:
            return out[0]
        return out.reshape(np.asarray(points).shape[:-1] + (self.nvar,))

    def hess_eval(self, point):
        """Hessian matrix at a single point."""
        p = np.asarray(point, dtype=float)
        h = np.empty((self.nvar, self.nvar))
        for i in range(self.nvar):
            for j in range(i, self.nvar):
                h[i, j] = h[j, i] = self.diff(i).diff(j)(p)
        return h

    def __add__(self, other):
        if other.nvar != self.nvar:
            raise ValueError("variable count mismatch")
        exps = np.vstack([self.exps, other.exps])
        coefs = np.concatenate([self.coefs, other.coefs])
        terms = {}
        for e, c in zip(map(tuple, exps), coefs):
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial.from_terms(self.nvar, terms)

    def scaled(self, a):
        return Polynomial(self.nvar, self.exps.copy(), self.coefs * a)

    @property
    def total_degree(self):
        return 0 if self.exps.size == 0 else int(self.exps.sum(axis=1).max())

    def term_table(self):
        """(exps, coefs) pair for the compiled kernels."""
        return self.exps, self.coefs

    def as_dict(self):
        return {tuple(int(v) for v in e): float(c) for e, c in zip(self.exps, self.coefs)}


def monomial_exponents(nvar, max_degree, min_degree=0):
    """All exponent tuples with min_degree <= total degree <= max_degree."""
    out = []
    for deg in range(min_degree, max_degree + 1):
        if deg == 0:
            out.append((0,) * nvar)
            continue
        for combo in combinations_with_replacement(range(nvar), deg):
            e = [0] * nvar
            for v in combo:
                e[v] += 1
            out.append(tuple(e))
    return sorted(set(out))


def fit_gradient_polynomial(points, grads, nvar, max_degree, values=None,
                            min_degree=1, value_weight=1.0):
    """Least-squares polynomial whose gradient matches ``grads`` at ``points``.

    Optionally also match function values (used when line integrals along
    characteristics supply them).  Returns (Polynomial, rms_residual).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, nvar)
    grads = np.asarray(grads, dtype=float).reshape(-1, nvar)
    basis = monomial_exponents(nvar, max_degree, min_degree=min_degree)
    npts = pts.shape[0]
    ncoef = len(basis)
    rows = []
    rhs = []
    # gradient rows
    for v in range(nvar):
        block = np.empty((npts, ncoef))
        for j, e in enumerate(basis):
            if e[v] == 0:
                block[:, j] = 0.0
                continue
            de = list(e)
            de[v] -= 1
            col = e[v] * np.ones(npts)
            for w in range(nvar):
                if de[w]:
                    col = col * pts[:, w] ** de[w]
            block[:, j] = col
        rows.append(block)
        rhs.append(grads[:, v])
    if values is not None:
        vals = np.asarray(values, dtype=float).reshape(-1)
        block = np.empty((npts, ncoef))
        for j, e in enumerate(basis):
            col = np.ones(npts)
            for w in range(nvar):
                if e[w]:
                    col = col * pts[:, w] ** e[w]
            block[:, j] = col
        rows.append(value_weight * block)
        rhs.append(value_weight * vals)
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = A @ coef - b
    rms = float(np.sqrt(np.mean(resid**2)))
    terms = {e: c for e, c in zip(basis, coef)}
    return Polynomial.from_terms(nvar, terms), rms
