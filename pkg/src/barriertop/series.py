"""Exponent ladders and finite exponential-polynomial series.

A trajectory converging to a hyperbolic fixed point behaves like
sum_j P_j(t) exp(-mu_j t) where the mu_j run through all natural-number
combinations of the contraction rates.  This module builds those ladders,
fits the series to sampled data, splits a series at a truncation index,
and evaluates the closed form of its Laplace-type time integral.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, PoleError, ValidationError

_DEDUP_REL = 1e-12


@dataclass(frozen=True)
class ExponentLadder:
    """Sorted set of natural-number combinations of the generators, up to cutoff."""

    exponents: np.ndarray
    generators: np.ndarray
    cutoff: float

    def __len__(self):
        return self.exponents.size


def _combinations_upto(generators, cutoff, tol):
    vals = [0.0]
    for g in generators:
        new = []
        for v in vals:
            k = 1
            while v + k * g <= cutoff + tol:
                new.append(v + k * g)
                k += 1
        vals.extend(new)
    vals.sort()
    out = []
    for v in vals:
        if not out or v - out[-1] > tol:
            out.append(v)
    return np.asarray(out)


def exponent_ladder(lambdas, cutoff):
    """All sums sum_j n_j lambda_j <= cutoff with n_j natural, 0 included."""
    lam = np.sort(np.asarray(lambdas, dtype=float))
    if cutoff <= 0:
        raise ValidationError("cutoff must be positive")
    if lam.size == 0 or np.any(lam <= 0):
        raise ValidationError("generators must be positive")
    tol = _DEDUP_REL * lam[-1]
    return ExponentLadder(_combinations_upto(lam, cutoff, tol), lam, float(cutoff))


def difference_ladder(mu: ExponentLadder):
    """Ladder generated by the gaps mu_k - mu_1 for k >= 2, same cutoff.

    Needs at least two nonzero rungs in the input.
    """
    exps = mu.exponents
    if exps.size < 3:
        raise ValidationError("input ladder needs at least two entries beyond 0")
    mu1 = exps[1]
    gens = np.asarray([e - mu1 for e in exps[2:] if e - mu1 > 0])
    if gens.size == 0:
        raise ValidationError("degenerate ladder: no positive gaps")
    tol = _DEDUP_REL * max(gens[-1], 1.0)
    return ExponentLadder(_combinations_upto(gens, mu.cutoff, tol), gens, mu.cutoff)


class PolyExpSeries:
    """Finite sum  sum_j P_j(t) exp(-mu_j t)  with vector-valued P_j.

    ``terms`` is a list of (mu, coef) pairs where coef has shape
    (degree+1, m): row l holds the t^l coefficient vector.
    """

    def __init__(self, terms, value_dim, tail_bound=0.0, residual_rms=0.0):
        self.terms = [(float(mu), np.asarray(c, dtype=float).reshape(-1, value_dim))
                      for mu, c in terms]
        self.terms.sort(key=lambda t: t[0])
        mus = [mu for mu, _ in self.terms]
        if any(b - a <= 0 for a, b in zip(mus, mus[1:])):
            raise ValidationError("series exponents must be strictly increasing")
        self.value_dim = int(value_dim)
        self.tail_bound = float(tail_bound)
        self.residual_rms = float(residual_rms)

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((t.size, self.value_dim))
        for mu, coef in self.terms:
            poly = np.zeros((t.size, self.value_dim))
            for l in range(coef.shape[0]):
                poly += np.outer(t**l, coef[l])
            out += poly * np.exp(-mu * t)[:, None]
        return out

    @property
    def exponents(self):
        return np.array([mu for mu, _ in self.terms])

    def to_json(self, path=None):
        """Records {mu, degree, coeffs}; coeffs row-major over (l, component)."""
        recs = [{"mu": mu, "degree": int(c.shape[0] - 1), "coeffs": c.tolist()}
                for mu, c in self.terms]
        payload = {"value_dim": self.value_dim, "terms": recs,
                   "tail_bound": self.tail_bound, "residual_rms": self.residual_rms}
        if path is not None:
            with open(path, "w") as fh:
                json.dump(payload, fh, indent=1)
        return payload


def fit_times(mu1, t_max, n=80):
    """Log-spaced fit abscissas on [0, t_max], denser near 0."""
    if n < 2:
        raise ValidationError("need at least two sample times")
    g = np.geomspace(1.0, 101.0, n) - 1.0
    return t_max * g / g[-1]


def fit_exp_series(samples, ladder, max_poly_degree=0, weight_rate=0.0):
    """Least-squares fit of sum P_j(t) exp(-mu_j t) to (t, value) samples.

    Ladder entries whose decay at the last sample time is below machine
    noise are dropped before building the design matrix.  Columns are
    normalized before solving; a normalized condition number above 1e12
    raises, with the advice to shorten the ladder.  Fitted terms whose
    coefficient norm is below 1e-10 of the leading one are discarded.
    A positive ``weight_rate`` multiplies each row by e^(rate * t), which
    weights the slow tail and shields the leading coefficients from
    ladder-truncation leakage.
    """
    ts = np.asarray([s[0] for s in samples], dtype=float)
    vals = np.asarray([np.atleast_1d(s[1]) for s in samples], dtype=float)
    if ts.size < 2:
        raise ValidationError("need at least two samples")
    m = vals.shape[1]
    t_max = ts.max()
    mus = [mu for mu in ladder.exponents if mu * t_max <= 36.0]
    if not mus:
        raise ValidationError("ladder is entirely below machine noise on the window")
    cols = []
    labels = []
    for mu in mus:
        for l in range(max_poly_degree + 1):
            cols.append(ts**l * np.exp(-mu * ts))
            labels.append((mu, l))
    A = np.stack(cols, axis=1)
    w = np.exp(weight_rate * ts)[:, None] if weight_rate else 1.0
    Aw = A * w
    scale = np.linalg.norm(Aw, axis=0)
    scale[scale == 0] = 1.0
    An = Aw / scale
    cond = np.linalg.cond(An)
    if cond > 1e12:
        raise NumericalError(
            f"design matrix condition {cond:.2e} > 1e12; shorten the ladder "
            "or reduce the polynomial degree")
    coef, *_ = np.linalg.lstsq(An, vals * w, rcond=None)
    coef = coef / scale[:, None]
    resid = A @ coef - vals
    rms = float(np.sqrt(np.mean(resid**2)))

    by_mu = {}
    for (mu, l), row in zip(labels, coef):
        by_mu.setdefault(mu, np.zeros((max_poly_degree + 1, m)))[l] = row
    norms = {mu: np.linalg.norm(c) for mu, c in by_mu.items()}
    lead = max(norms.values()) if norms else 0.0
    kept = [(mu, c) for mu, c in sorted(by_mu.items())
            if norms[mu] > 1e-10 * lead]
    if not kept:
        raise NumericalError("all fitted coefficients vanished")

    kept_mus = [mu for mu, _ in kept]
    later = [mu for mu in ladder.exponents if mu > kept_mus[-1] + 1e-12]
    mu_next = later[0] if later else kept_mus[-1] + float(ladder.generators[0])
    eps = 1e-6
    tail = float(np.max(np.linalg.norm(resid, axis=1) * np.exp((mu_next - eps) * ts)))
    return PolyExpSeries(kept, m, tail_bound=tail, residual_rms=rms)


@dataclass(frozen=True)
class LeadingTerm:
    mu1: float
    gamma1: np.ndarray
    g1: np.ndarray


def leading_term(series, spatial_dim=None):
    """Constant leading coefficient and its spatial projection.

    The first term with positive exponent must be constant in t (relative
    tolerance 1e-8); otherwise the decay is degenerate at leading order
    and an error is raised.  For phase-space series (value_dim = 2d) the
    spatial projection is the first half of the coefficient vector; pass
    ``spatial_dim`` to override.
    """
    cands = [(mu, c) for mu, c in series.terms if mu > 1e-12]
    if not cands:
        raise NumericalError("series has no decaying term")
    mu1, coef = cands[0]
    const = coef[0]
    rest = np.linalg.norm(coef[1:]) if coef.shape[0] > 1 else 0.0
    if rest > max(1e-8, 1e-8 * np.linalg.norm(const)):
        raise NumericalError(
            "resonant leading term: leading coefficient depends on t")
    d = spatial_dim if spatial_dim is not None else series.value_dim // 2
    return LeadingTerm(mu1, const.copy(), const[:d].copy())


def truncation_index(ladder, C1, lambdas):
    """Default front-part length for series splitting.

    First ladder index whose exponent exceeds C1 + sum(lambda)/2; any
    larger index is also valid, this is the smallest safe one.
    """
    target = float(C1) + float(np.sum(lambdas)) / 2.0
    for j, mu in enumerate(ladder.exponents):
        if mu > target:
            return j
    return len(ladder.exponents)


@dataclass(frozen=True)
class SplitSeries:
    """Front part of a series with the complex shift recorded, plus the rest."""

    minus_terms: tuple
    plus_terms: tuple
    shift: complex
    value_dim: int


def split_series(series, S, J1):
    """Partition the first J1 terms (shift S attached) from the remainder.

    Reassembling minus and plus parts reproduces the original series term
    by term; the shift is bookkeeping for the time integral.
    """
    if J1 < 0 or J1 > len(series.terms):
        raise ValidationError("J1 must lie within the series length")
    minus = tuple((mu, c.copy()) for mu, c in series.terms[:J1])
    plus = tuple((mu, c.copy()) for mu, c in series.terms[J1:])
    return SplitSeries(minus, plus, complex(S), series.value_dim)


def resolvent_integral(minus_part, S):
    """Closed form of  integral_0^inf sum b_(j,l) t^l exp(-(S+mu_j) t) dt.

    Equals sum_j sum_l l! / (S+mu_j)^(l+1) * b_(j,l).  A shifted exponent
    within 1e-8 of zero means the spectral parameter sits on the lattice
    generated by the retained exponents, and is reported as a pole.
    """
    S = complex(S)
    out = np.zeros(minus_part.value_dim, dtype=complex)
    fact = 1.0
    for mu, coef in minus_part.minus_terms:
        s = S + mu
        if abs(s) <= 1e-8:
            raise PoleError(
                f"S + mu = {s} too close to zero at mu={mu}", lattice_point=None)
        fact = 1.0
        for l in range(coef.shape[0]):
            if l > 0:
                fact *= l
            out = out + coef[l] * (fact / s ** (l + 1))
    return out
