"""Phase-space diagnostics on grids.

The Gaussian-window transform used here maps a grid function on R^d to a
grid function on phase space; its squared mass over a region measures how
much of the state lives there, which is the empirical handle on
wave-front concentration.  A midpoint-rule quantizer and an operator
residual complete the verification layer.
"""

from __future__ import annotations

import csv

import numpy as np

from .errors import ValidationError

FBI_WINDOW_SIGMAS = 8.0


class GridFunction:
    """Complex values on a uniform tensor grid.

    Parameters
    ----------
    axes : sequence of 1-d arrays, each uniformly spaced
    values : complex array of shape (len(axes[0]), ...)
    h : semiclassical parameter carried with the data
    """

    def __init__(self, axes, values, h):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        self.values = np.asarray(values, dtype=complex)
        self.h = float(h)
        if self.values.shape != tuple(a.size for a in self.axes):
            raise ValidationError("values shape must match the axes")
        for a in self.axes:
            if a.size < 2:
                raise ValidationError("axes need at least two points")
            steps = np.diff(a)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise ValidationError("axes must be uniform")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("grid values must be finite")

    @property
    def dim(self):
        return len(self.axes)

    @property
    def steps(self):
        return tuple(float(a[1] - a[0]) for a in self.axes)

    def cell_volume(self):
        return float(np.prod(self.steps))

    def norm_l2(self):
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.cell_volume()))

    def boundary_decay(self):
        """Max modulus on the outermost 5 percent shell, over the peak."""
        shell = np.zeros(self.values.shape, dtype=bool)
        for ax, n in enumerate(self.values.shape):
            w = max(1, int(0.05 * n))
            sl = [slice(None)] * self.values.ndim
            sl[ax] = slice(0, w)
            shell[tuple(sl)] = True
            sl[ax] = slice(n - w, n)
            shell[tuple(sl)] = True
        peak = np.abs(self.values).max()
        if peak == 0:
            return 0.0
        return float(np.abs(self.values[shell]).max() / peak)

    def save_csv(self, path):
        """Axes in comment headers, then re/im pairs in row-major order."""
        with open(path, "w", newline="") as fh:
            for k, a in enumerate(self.axes):
                fh.write(f"# axis{k}: start={float(a[0])!r} "
                         f"step={float(a[1] - a[0])!r} n={a.size}\n")
            fh.write(f"# h: {self.h!r}\n")
            w = csv.writer(fh)
            w.writerow(["re", "im"])
            for v in self.values.ravel():
                w.writerow([repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def load_csv(cls, path):
        axes = []
        h = None
        rows = []
        with open(path) as fh:
            for line in fh:
                if line.startswith("# axis"):
                    parts = dict(p.split("=") for p in line.split(":")[1].strip().split(" "))
                    start, step, n = float(parts["start"]), float(parts["step"]), int(parts["n"])
                    axes.append(start + step * np.arange(n))
                elif line.startswith("# h:"):
                    h = float(line.split(":")[1])
                elif line.strip() and not line.startswith("#") and not line.startswith("re"):
                    a, b = line.strip().split(",")
                    rows.append(complex(float(a), float(b)))
        shape = tuple(a.size for a in axes)
        return cls(axes, np.asarray(rows).reshape(shape), h)


# ---------------------------------------------------------------------------
# phase-space regions


class BallRegion:
    """|(x, xi) - center| <= radius."""

    kind = "ball"

    def __init__(self, center, radius):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)

    def mask(self, points):
        return np.linalg.norm(points - self.center, axis=-1) <= self.radius

    def bounds(self):
        return self.center - self.radius, self.center + self.radius


class TubeRegion:
    """Points within ``thickness`` of a manifold union, graph form xi = g(x).

    ``thickness`` is the full width: a point belongs to the tube when its
    vertical distance to the nearest graph is at most thickness / 2.  An
    optional spatial bound |x| <= x_bound restricts the tube.
    """

    kind = "tube_around_manifold"

    def __init__(self, graphs, thickness, x_bound=None):
        self.graphs = list(graphs)
        self.thickness = float(thickness)
        self.x_bound = x_bound

    def mask(self, points):
        d = points.shape[-1] // 2
        x, xi = points[..., :d], points[..., d:]
        dist = None
        for g in self.graphs:
            gx = np.apply_along_axis(lambda p: np.atleast_1d(g(p)), -1, x)
            dd = np.linalg.norm(xi - gx, axis=-1)
            dist = dd if dist is None else np.minimum(dist, dd)
        m = dist <= self.thickness / 2.0
        if self.x_bound is not None:
            m &= np.linalg.norm(x, axis=-1) <= self.x_bound
        return m

    def bounds(self):
        return None, None


class ComplementRegion:
    """Points of ``within`` that are not in ``inner``."""

    kind = "complement"

    def __init__(self, inner, within=None):
        self.inner = inner
        self.within = within

    def mask(self, points):
        m = ~self.inner.mask(points)
        if self.within is not None:
            m &= self.within.mask(points)
        return m

    def bounds(self):
        return None, None


# ---------------------------------------------------------------------------
# Gaussian-window transform


def fbi_transform(u, x_axis, xi_axis, h=None):
    """Windowed transform c(h) * integral e^{i(x-y)xi/h - (x-y)^2/2h} u(y) dy.

    Spatial input of dimension one; output lives on the (x, xi) grid.  The
    Gaussian window is truncated at ``FBI_WINDOW_SIGMAS`` sqrt(h).  With
    c(h) = 2^{-1/2} (pi h)^{-3/4} the full-grid squared mass reproduces
    the squared input norm (checked in tests at the 1e-3 level).
    """
    if u.dim != 1:
        raise ValidationError("transform implemented for 1-d states")
    h = u.h if h is None else float(h)
    if u.boundary_decay() > 1e-8:
        raise ValidationError(
            f"state does not decay at the grid boundary "
            f"(shell/peak = {u.boundary_decay():.1e})")
    y = u.axes[0]
    dy = y[1] - y[0]
    x_axis = np.asarray(x_axis, dtype=float)
    xi_axis = np.asarray(xi_axis, dtype=float)
    half = FBI_WINDOW_SIGMAS * np.sqrt(h)
    c = 2 ** -0.5 * (np.pi * h) ** -0.75
    out = np.zeros((x_axis.size, xi_axis.size), dtype=complex)
    vals = u.values
    for i, x in enumerate(x_axis):
        lo = np.searchsorted(y, x - half)
        hi = np.searchsorted(y, x + half)
        if hi <= lo:
            continue
        yy = y[lo:hi]
        diff = x - yy
        gauss = np.exp(-diff**2 / (2 * h)) * vals[lo:hi]
        phase = np.exp(1j * np.outer(diff, xi_axis) / h)
        out[i, :] = c * dy * (gauss @ phase)
    return GridFunction((x_axis, xi_axis), out, h)


def frequency_mass(tu, region):
    """Squared L2 mass of a phase-space grid function over a region."""
    axes = tu.axes
    lo, hi = region.bounds()
    if lo is not None:
        for k, a in enumerate(axes):
            if lo[k] < a[0] - 1e-12 or hi[k] > a[-1] + 1e-12:
                raise ValidationError("region exceeds the grid")
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    m = region.mask(pts)
    return float(np.sum(np.abs(tu.values[m]) ** 2) * tu.cell_volume())


# ---------------------------------------------------------------------------
# midpoint-rule quantization


def _fourier_xi(axes, h):
    return [2 * np.pi * h * np.fft.fftfreq(a.size, a[1] - a[0]) for a in axes]


def weyl_apply(symbol, u, h=None):
    """Midpoint-rule quantization applied to a grid function.

    Supported symbols: a Hamiltonian model or 2d-variable polynomial whose
    terms are either pure in xi, pure in x, or of the mixed form x_j xi_j
    (quantized symmetrically); anything else raises.  Differentiation is
    spectral, so states must decay at the boundary.
    """
    h = u.h if h is None else float(h)
    d = u.dim
    poly = getattr(symbol, "poly", symbol)
    if poly is None or not hasattr(poly, "exps"):
        raise ValidationError("unsupported symbol; supply a polynomial model")
    if poly.nvar != 2 * d:
        raise ValidationError("symbol dimension does not match the state")
    if d > 2:
        raise ValidationError("quantization implemented for d <= 2")
    xi_grids = _fourier_xi(u.axes, h)
    x_mesh = np.meshgrid(*u.axes, indexing="ij")
    xi_mesh = np.meshgrid(*xi_grids, indexing="ij")
    out = np.zeros_like(u.values)
    fft_u = np.fft.fftn(u.values)
    for e, cfc in zip(poly.exps, poly.coefs):
        ex, exi = e[:d], e[d:]
        if np.all(exi == 0):
            mult = cfc * np.ones_like(out, dtype=float)
            for j in range(d):
                if ex[j]:
                    mult = mult * x_mesh[j] ** ex[j]
            out = out + mult * u.values
        elif np.all(ex == 0):
            mult = cfc * np.ones_like(out, dtype=float)
            for j in range(d):
                if exi[j]:
                    mult = mult * xi_mesh[j] ** exi[j]
            out = out + np.fft.ifftn(mult * fft_u)
        elif (np.sum(ex) == 1 and np.sum(exi) == 1
              and np.argmax(ex) == np.argmax(exi)):
            j = int(np.argmax(ex))
            du = np.fft.ifftn(xi_mesh[j] * fft_u)
            xu = x_mesh[j] * u.values
            dxu = np.fft.ifftn(xi_mesh[j] * np.fft.fftn(xu))
            out = out + cfc * 0.5 * (x_mesh[j] * du + dxu)
        else:
            raise ValidationError(
                f"symbol term x^{tuple(ex)} xi^{tuple(exi)} is outside the "
                "supported midpoint classes")
    return GridFunction(u.axes, out, h)


def pde_residual(model, z, h, u, interior=None):
    """|| (Op(p0) + h Op(p1) - z) u || / || u || over the interior box.

    ``interior`` is (lo, hi) per axis in x-space; None means everything.
    The subprincipal term, when present, is applied as a multiplication
    operator (potential type).
    """
    pu = weyl_apply(model, u, h).values
    if model.p1 is not None:
        mesh = np.meshgrid(*u.axes, indexing="ij")
        pu = pu + h * model.p1(*mesh) * u.values
    resid = pu - z * u.values
    if interior is not None:
        lo, hi = interior
        mask = np.ones(u.values.shape, dtype=bool)
        for k, a in enumerate(u.axes):
            sel = (a >= lo[k]) & (a <= hi[k])
            mask &= sel.reshape([-1 if i == k else 1 for i in range(u.dim)])
    else:
        mask = np.ones(u.values.shape, dtype=bool)
    denom = np.sqrt(np.sum(np.abs(u.values[mask]) ** 2))
    if denom == 0:
        raise ValidationError("state vanishes on the interior region")
    return float(np.sqrt(np.sum(np.abs(resid[mask]) ** 2)) / denom)
