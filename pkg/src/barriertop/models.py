"""Hamiltonian models with a hyperbolic fixed point at the origin.

Two built-in normal forms are supported and never converted into each
other:

* ``exact_quadratic``: p0(x, xi) = sum_j lambda_j/2 (xi_j^2 - x_j^2),
  whose stable/unstable subspaces are {xi = -x} / {xi = +x};
* ``schrodinger_barrier``: p0(x, xi) = xi^2 - 1/4 sum_j lambda_j^2 x_j^2
  plus an optional polynomial perturbation vanishing to third order,
  whose subspaces are {xi_j = -+ lambda_j x_j / 2}.

Both linearizations have spectrum {-lambda_d, ..., -lambda_1, lambda_1,
..., lambda_d}.  Custom models supply their own evaluators and derivatives.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .polynomial import Polynomial

_EIG_TOL = 1e-10


@dataclass(frozen=True)
class PhasePoint:
    """A point (x, xi) of phase space."""

    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "xi", np.atleast_1d(np.asarray(self.xi, dtype=float)))
        if self.x.shape != self.xi.shape or self.x.ndim != 1:
            raise ValidationError("x and xi must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.xi))):
            raise ValidationError("phase point has non-finite components")

    @property
    def dim(self):
        return self.x.size

    def as_vector(self):
        return np.concatenate([self.x, self.xi])

    @classmethod
    def from_vector(cls, w):
        w = np.asarray(w, dtype=float)
        d = w.size // 2
        return cls(w[:d], w[d:])

    def __iter__(self):
        yield self.x
        yield self.xi


class HamiltonianModel:
    """Principal symbol with evaluators and closed-form derivatives.

    Instances are immutable after construction and safe to share between
    parallel workers.
    """

    def __init__(self, dim, lambdas, p0, grad_p0, hess_p0, kind,
                 p1=None, perturbation_scale=0.0, validity_radius=np.inf,
                 poly=None):
        self.dim = int(dim)
        lam = np.asarray(lambdas, dtype=float)
        if lam.size == 0 or np.any(lam <= 0):
            raise ValidationError("lambdas must be positive")
        if np.any(np.diff(lam) < 0):
            lam = np.sort(lam)
        self.lambdas = lam
        self.p0 = p0
        self.grad_p0 = grad_p0
        self.hess_p0 = hess_p0
        self.p1 = p1
        self.kind = kind
        self.perturbation_scale = float(perturbation_scale)
        self.validity_radius = float(validity_radius)
        self.poly = poly
        self._check_critical_point()
        self._lin = None

    # -- validation -----------------------------------------------------

    def _check_critical_point(self):
        zero = np.zeros(self.dim)
        v = float(self.p0(zero, zero))
        g = np.asarray(self.grad_p0(zero, zero), dtype=float)
        if abs(v) > 1e-12 or np.max(np.abs(g)) > 1e-12:
            raise ValidationError(
                f"symbol must have a critical zero at the origin; "
                f"got p0(0,0)={v:.3e}, |grad|={np.max(np.abs(g)):.3e}")
        fp = self.linear_field_matrix()
        ev = np.sort(np.linalg.eigvals(fp).real)
        want = np.sort(np.concatenate([-self.lambdas, self.lambdas]))
        if np.max(np.abs(ev - want)) > _EIG_TOL or np.max(np.abs(np.linalg.eigvals(fp).imag)) > _EIG_TOL:
            raise ValidationError(
                "linearized Hamilton field eigenvalues do not match +-lambda_j")

    # -- evaluators -----------------------------------------------------

    def energy(self, point):
        return float(self.p0(point.x, point.xi))

    def hamilton_rhs(self, w):
        """Hamilton field as a function of the stacked vector w=(x, xi)."""
        d = self.dim
        g = np.asarray(self.grad_p0(w[:d], w[d:]), dtype=float)
        return np.concatenate([g[d:], -g[:d]])

    def hamilton_rhs_batch(self, W):
        """Hamilton field at many stacked states (n, 2d) -> (n, 2d)."""
        d = self.dim
        if self.poly is not None:
            g = self.poly.grad_eval(W)
            return np.concatenate([g[:, d:], -g[:, :d]], axis=1)
        return np.stack([self.hamilton_rhs(w) for w in W])

    def p0_batch(self, W):
        if self.poly is not None:
            return self.poly(W)
        return np.array([self.p0(w[:self.dim], w[self.dim:]) for w in W])

    def linear_field_matrix(self):
        """Derivative of the Hamilton field at the origin (2d x 2d)."""
        d = self.dim
        zero = np.zeros(d)
        H = np.asarray(self.hess_p0(zero, zero), dtype=float)
        A = np.empty((2 * d, 2 * d))
        A[:d, :] = H[d:, :]
        A[d:, :] = -H[:d, :]
        return A

    def linearize(self):
        """Cached linearization record (see :func:`linearize`)."""
        if self._lin is None:
            self._lin = _linearize(self)
        return self._lin

    # -- kernel support --------------------------------------------------

    def hamilton_tables(self):
        """Packed gradient/Hessian term tables of p0 for the flow kernels.

        Returns None for custom models without a polynomial representation.
        """
        if self.poly is None:
            return None
        if not hasattr(self, "_tables"):
            n = 2 * self.dim
            gpolys = self.poly.grad()
            hpolys = self.poly.hess()
            gexp, gco, gptr = _pack(gpolys, n)
            hlist = [hpolys[i][j] for i in range(n) for j in range(n)]
            hexp, hco, hptr = _pack(hlist, n)
            self._tables = (gexp, gco, gptr, hexp, hco, hptr)
        return self._tables


def _pack(polys, nvar):
    exps = []
    coefs = []
    ptr = [0]
    for p in polys:
        e, c = p.term_table()
        exps.append(e)
        coefs.append(c)
        ptr.append(ptr[-1] + len(c))
    exps = np.vstack(exps) if exps else np.zeros((0, nvar), dtype=np.int64)
    coefs = np.concatenate(coefs) if coefs else np.zeros(0)
    return (np.ascontiguousarray(exps, dtype=np.int64),
            np.ascontiguousarray(coefs, dtype=float),
            np.asarray(ptr, dtype=np.int64))


def _poly_model(dim, lambdas, poly, kind, perturbation_scale, validity_radius, p1=None):
    grads = poly.grad()
    d = dim

    def p0(x, xi):
        return poly(np.concatenate([np.atleast_1d(x), np.atleast_1d(xi)]))

    def grad_p0(x, xi):
        w = np.concatenate([np.atleast_1d(x), np.atleast_1d(xi)])
        return np.array([g(w) for g in grads])

    def hess_p0(x, xi):
        w = np.concatenate([np.atleast_1d(x), np.atleast_1d(xi)])
        return poly.hess_eval(w)

    return HamiltonianModel(d, lambdas, p0, grad_p0, hess_p0, kind,
                            p1=p1, perturbation_scale=perturbation_scale,
                            validity_radius=validity_radius, poly=poly)


def make_quadratic_model(lambdas):
    """Exact model sum_j lambda_j/2 (xi_j^2 - x_j^2).

    The symbol is globally exact (no truncated remainder), so the validity
    neighborhood is unbounded.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.size == 0 or np.any(lam <= 0):
        raise ValidationError("lambdas must be nonempty and positive")
    lam = np.sort(lam)
    d = lam.size
    terms = {}
    for j, l in enumerate(lam):
        e_xi = [0] * (2 * d)
        e_xi[d + j] = 2
        terms[tuple(e_xi)] = l / 2.0
        e_x = [0] * (2 * d)
        e_x[j] = 2
        terms[tuple(e_x)] = -l / 2.0
    poly = Polynomial.from_terms(2 * d, terms)
    return _poly_model(d, lam, poly, "exact_quadratic", 0.0, np.inf)


def make_barrier_model(quadratic_lambdas, cubic_quartic_coeffs=None):
    """Schrodinger form xi^2 + V(x), V = -1/4 sum lambda_j^2 x_j^2 + higher order.

    Parameters
    ----------
    quadratic_lambdas : sequence of float
        Curvatures lambda_j of the barrier directions.
    cubic_quartic_coeffs : mapping or iterable, optional
        Perturbation monomials of V as {exponents tuple: coeff} or an
        iterable of {"exponents": ..., "coeff": ...} records.  Every term
        must have total degree >= 3 (and <= 6); anything contributing to
        the value, gradient or Hessian at 0 is rejected.
    """
    lam = np.asarray(quadratic_lambdas, dtype=float)
    if lam.size == 0 or np.any(lam <= 0):
        raise ValidationError("lambdas must be nonempty and positive")
    lam = np.sort(lam)
    d = lam.size
    terms = {}
    for j, l in enumerate(lam):
        e_xi = [0] * (2 * d)
        e_xi[d + j] = 2
        terms[tuple(e_xi)] = 1.0
        e_x = [0] * (2 * d)
        e_x[j] = 2
        terms[tuple(e_x)] = -l * l / 4.0
    pert_items = _normalize_perturbation(cubic_quartic_coeffs, d)
    scale = 0.0
    for e, c in pert_items:
        deg = sum(e)
        if deg < 3:
            raise ValidationError(
                f"perturbation term {e} has degree {deg} < 3; it would move "
                "the critical point")
        if deg > 6:
            raise ValidationError("perturbation terms are limited to degree 6")
        full = tuple(e) + (0,) * d
        terms[full] = terms.get(full, 0.0) + float(c)
        scale += abs(float(c))
    poly = Polynomial.from_terms(2 * d, terms)
    radius = np.inf if scale == 0.0 else _perturbation_radius(pert_items, lam, d)
    return _poly_model(d, lam, poly, "schrodinger_barrier", scale, radius)


def _normalize_perturbation(coeffs, d):
    if coeffs is None:
        return []
    if isinstance(coeffs, dict):
        items = [(tuple(int(v) for v in e), float(c)) for e, c in coeffs.items()]
    else:
        items = [(tuple(int(v) for v in rec["exponents"]), float(rec["coeff"]))
                 for rec in coeffs]
    for e, _ in items:
        if len(e) != d:
            raise ValidationError(f"perturbation exponents {e} must have {d} entries")
    return items


def _perturbation_radius(pert_items, lam, d):
    """Radius where the perturbation Hessian stays below 0.1 * lambda_1.

    Uses the coefficient-sum bound max_i sum_j sum_terms |c| deg_i deg_j r^(deg-2),
    which is conservative and monotone in r, so plain bisection suffices.
    """
    target = 0.1 * lam[0]

    def bound(r):
        total = np.zeros((d, d))
        for e, c in pert_items:
            deg = sum(e)
            for i in range(d):
                for j in range(d):
                    if i == j:
                        fac = e[i] * (e[i] - 1)
                    else:
                        fac = e[i] * e[j]
                    if fac:
                        total[i, j] += abs(c) * fac * r ** (deg - 2)
        return np.max(np.sum(total, axis=1))

    lo, hi = 0.0, 4.0
    if bound(hi) <= target:
        return hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if bound(mid) <= target:
            lo = mid
        else:
            hi = mid
    return lo


def make_custom_model(dim, lambdas, p0, grad_p0, hess_p0, p1=None,
                      validity_radius=1.0, perturbation_scale=0.0):
    """Wrap user evaluators.  Derivatives must be supplied by the caller."""
    return HamiltonianModel(dim, lambdas, p0, grad_p0, hess_p0, "custom",
                            p1=p1, perturbation_scale=perturbation_scale,
                            validity_radius=validity_radius)


# ---------------------------------------------------------------------------
# linearization


@dataclass(frozen=True)
class Linearization:
    """Spectral data of the linearized Hamilton field at the origin.

    ``stable_graph`` / ``unstable_graph`` are the d x d matrices H with
    tangent spaces {xi = H x}; they exist whenever the subspaces project
    onto x-space, which holds for both built-in normal forms.
    """

    F_p: np.ndarray
    eigenvalues: np.ndarray
    stable_frame: np.ndarray
    unstable_frame: np.ndarray
    stable_graph: np.ndarray
    unstable_graph: np.ndarray


def _invariant_frame(A, eigenvalues, select):
    """Real basis of the invariant subspace for the selected eigenvalues."""
    d = A.shape[0] // 2
    ev, V = np.linalg.eig(A)
    idx = [i for i in range(2 * d) if select(ev[i].real)]
    if len(idx) != d:
        raise NumericalError("could not split the spectrum into stable/unstable halves")
    frame = np.real(V[:, idx])
    # orthonormalize for conditioning
    q, _ = np.linalg.qr(frame)
    return q


def _linearize(model):
    A = model.linear_field_matrix()
    ev = np.linalg.eigvals(A)
    order = np.argsort(ev.real)
    ev = ev[order].real
    d = model.dim
    stable = _invariant_frame(A, ev, lambda m: m < 0)
    unstable = _invariant_frame(A, ev, lambda m: m > 0)
    resid = max(_frame_residual(A, stable), _frame_residual(A, unstable))
    if resid > 1e-8:
        raise NumericalError(f"invariant-subspace residual {resid:.2e} too large")
    graphs = []
    for fr in (stable, unstable):
        X, Xi = fr[:d], fr[d:]
        if abs(np.linalg.det(X)) < 1e-12:
            graphs.append(None)
        else:
            graphs.append(Xi @ np.linalg.inv(X))
    return Linearization(A, ev, stable, unstable, graphs[0], graphs[1])


def _frame_residual(A, frame):
    """How far A maps the frame outside its own span."""
    span = frame @ np.linalg.pinv(frame)
    img = A @ frame
    return float(np.linalg.norm(img - span @ img) / max(1.0, np.linalg.norm(img)))


def linearize(model):
    """Linearized Hamilton field, spectrum and invariant frames at (0, 0)."""
    return model.linearize()


# ---------------------------------------------------------------------------
# branch roots


def branch_roots(model, x, xi_prime=None):
    """Solve p0(x, xi_1, xi') = 0 for xi_1; returns (f_minus, f_plus).

    For the built-in polynomial forms the symbol is quadratic in xi_1 and
    the roots are closed-form; the principal square-root branch is used
    when the radicand is negative.  Custom models are solved by Newton
    iteration seeded on the linearized roots.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = model.dim
    xi_prime = np.zeros(d - 1) if xi_prime is None else np.atleast_1d(np.asarray(xi_prime, dtype=float))
    if x.size != d or xi_prime.size != d - 1:
        raise ValidationError("x must have dim entries and xi_prime dim-1 entries")

    if model.kind in ("exact_quadratic", "schrodinger_barrier"):
        # p0 = a xi_1^2 + c with a > 0 for both built-in forms.
        xi0 = np.concatenate([[0.0], xi_prime])
        c = float(model.p0(x, xi0))
        xi1 = np.concatenate([[1.0], xi_prime])
        a = float(model.p0(x, xi1)) - c  # no linear xi_1 term in either form
        radicand = -c / a
        if radicand >= 0:
            r = np.sqrt(radicand)
        else:
            r = 1j * np.sqrt(-radicand)
        return -r, r

    lam1 = model.lambdas[0]
    roots = []
    for seed in (-lam1 * x[0] / 2.0, lam1 * x[0] / 2.0):
        xi1 = seed
        ok = False
        for _ in range(60):
            xi = np.concatenate([[xi1], xi_prime])
            f = float(model.p0(x, xi))
            df = float(model.grad_p0(x, xi)[d])
            if abs(df) < 1e-14:
                break
            step = f / df
            xi1 -= step
            if abs(step) < 1e-13:
                ok = True
                break
        xi = np.concatenate([[xi1], xi_prime])
        resid = abs(float(model.p0(x, xi)))
        if not ok or resid > 1e-10:
            raise NumericalError(
                f"branch-root Newton failed at x={x}, residual {resid:.2e}")
        roots.append(xi1)
    return min(roots), max(roots)


# ---------------------------------------------------------------------------
# spectral parameters and the resonance lattice


@dataclass(frozen=True)
class SpectralParams:
    """Semiclassical parameter, spectral point and derived quantities."""

    h: float
    z: complex
    C0: float
    C1: float
    nu: float
    S: complex
    K1: int
    lambdas: np.ndarray = field(repr=False, default=None)


def spectral_params(z, h, C0, C1, nu, lambdas):
    """Validate the spectral box and derive S = sum(lambda)/2 - i z / h and K1."""
    lam = np.sort(np.asarray(lambdas, dtype=float))
    if h <= 0:
        raise ValidationError("h must be positive")
    if C0 <= 0 or C1 <= 0 or nu <= 0:
        raise ValidationError("C0, C1, nu must be positive")
    z = complex(z)
    if abs(z.real) > C0 * h + 1e-15 or abs(z.imag) > C1 * h + 1e-15:
        raise ValidationError(
            f"z={z} outside the box |Re z|<={C0}h, |Im z|<={C1}h")
    S = np.sum(lam) / 2.0 - 1j * z / h
    K1 = int(np.floor(C1 / lam[0] - np.sum(lam) / (2.0 * lam[0]))) + 1
    return SpectralParams(float(h), z, float(C0), float(C1), float(nu), S, K1, lam)


@dataclass(frozen=True)
class ResonanceLattice:
    """Points -i h sum_j lambda_j (alpha_j + 1/2) with |point| <= bound.

    Equal values produced by different multi-indices are kept as separate
    entries so the generating indices stay visible.
    """

    points: np.ndarray
    multi_indices: tuple
    h: float
    lambdas: np.ndarray
    bound: float


def resonance_lattice(lambdas, h, modulus_bound):
    if modulus_bound <= 0:
        raise ValidationError("modulus_bound must be positive")
    if h <= 0:
        raise ValidationError("h must be positive")
    lam = np.sort(np.asarray(lambdas, dtype=float))
    d = lam.size
    budget = modulus_bound / h - np.sum(lam) / 2.0
    found = []

    def rec(j, alpha, acc):
        if j == d:
            level = h * (acc + np.sum(lam) / 2.0)
            found.append((level, tuple(alpha)))
            return
        k = 0
        while acc + k * lam[j] <= budget + 1e-12:
            rec(j + 1, alpha + [k], acc + k * lam[j])
            k += 1

    if budget >= -1e-12:
        rec(0, [], 0.0)
    found.sort(key=lambda t: (t[0], t[1]))
    points = np.array([-1j * lv for lv, _ in found], dtype=complex)
    indices = tuple(a for _, a in found)
    return ResonanceLattice(points, indices, float(h), lam, float(modulus_bound))


def distance_to_lattice(z, lattice):
    """min over lattice points of |z - point|.

    Requires the lattice bound to exceed |z| + h * sum(lambda) so the
    minimizer cannot lie beyond the enumerated points.
    """
    z = complex(z)
    need = abs(z) + lattice.h * float(np.sum(lattice.lambdas))
    if lattice.bound < need - 1e-12:
        raise ValidationError(
            f"lattice bound {lattice.bound} too small for |z|={abs(z):.3g}; "
            f"need at least {need:.3g}")
    return float(np.min(np.abs(lattice.points - z)))


def lattice_to_csv(lattice, path):
    """Export as CSV with columns re, im, alpha_0..alpha_{d-1}."""
    d = lattice.lambdas.size
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im"] + [f"alpha_{j}" for j in range(d)])
        for p, a in zip(lattice.points, lattice.multi_indices):
            w.writerow([repr(float(p.real)), repr(float(p.imag))] + list(a))


# ---------------------------------------------------------------------------
# model specification files


def model_from_spec(spec):
    """Build a model from a parsed specification mapping.

    Keys: dim, lambdas, kind, perturbation (list of {exponents, coeff}).
    """
    try:
        dim = int(spec["dim"])
        lambdas = [float(v) for v in spec["lambdas"]]
        kind = spec["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"bad model specification: {exc}") from exc
    if len(lambdas) != dim:
        raise ValidationError("lambdas length must equal dim")
    pert = spec.get("perturbation") or []
    if kind == "exact_quadratic":
        if pert:
            raise ValidationError("exact_quadratic does not take a perturbation")
        return make_quadratic_model(lambdas)
    if kind == "schrodinger_barrier":
        return make_barrier_model(lambdas, pert)
    raise ValidationError(f"unknown model kind {kind!r}")


def load_model_file(path):
    with open(path) as fh:
        return model_from_spec(json.load(fh))
