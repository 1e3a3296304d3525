"""Q and Wigner functions on phase-space grids, and cat-state metrics.

Wigner values are computed from density matrices only; deconvolving an
empirical Q function is not supported.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import golden
from scipy.special import gammaln

from .errors import DomainError
from .fock import fidelity, even_cat, odd_cat, parity
from .sampler import q_values

DEFAULT_GRID = (-5.0, 5.0, -5.0, 5.0, 201, 201)


@dataclass
class GridSpec:
    x_min: float = -5.0
    x_max: float = 5.0
    y_min: float = -5.0
    y_max: float = 5.0
    nx: int = 201
    ny: int = 201

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise DomainError("grid bounds must satisfy min < max")
        if self.nx < 2 or self.ny < 2:
            raise DomainError("grid needs at least 2 nodes per axis")

    @classmethod
    def parse(cls, text):
        """Parse ``"xmin,xmax,ymin,ymax,nx,ny"`` or ``"half,n"`` (square grid)."""
        parts = [p for p in text.replace(" ", "").split(",") if p]
        if len(parts) == 2:
            h, n = float(parts[0]), int(parts[1])
            return cls(-h, h, -h, h, n, n)
        if len(parts) == 6:
            a, b, c, d = map(float, parts[:4])
            return cls(a, b, c, d, int(parts[4]), int(parts[5]))
        raise DomainError(f"cannot parse grid spec {text!r}")

    def __str__(self):
        return f"{self.x_min},{self.x_max},{self.y_min},{self.y_max},{self.nx},{self.ny}"


@dataclass
class PhaseSpaceGrid:
    """Raster of values over ``[x_min, x_max] x [y_min, y_max]``.

    ``values[j, i]`` belongs to ``(xs[i], ys[j])``, so a row-major flatten
    runs over x fastest.  Node grids place nodes on the bounds; with
    ``centered=True`` the bounds are the outer cell edges and nodes sit at
    cell centres (histograms).
    """

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    values: np.ndarray
    overflow: float = 0.0
    source: str = ""
    centered: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    @property
    def ny(self):
        return self.values.shape[0]

    @property
    def nx(self):
        return self.values.shape[1]

    @property
    def dx(self):
        span = self.x_max - self.x_min
        return span / self.nx if self.centered else span / (self.nx - 1)

    @property
    def dy(self):
        span = self.y_max - self.y_min
        return span / self.ny if self.centered else span / (self.ny - 1)

    @property
    def cell_area(self):
        return self.dx * self.dy

    @property
    def xs(self):
        if self.centered:
            return self.x_min + (np.arange(self.nx) + 0.5) * self.dx
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def ys(self):
        if self.centered:
            return self.y_min + (np.arange(self.ny) + 0.5) * self.dy
        return np.linspace(self.y_min, self.y_max, self.ny)

    def points(self):
        X, Y = np.meshgrid(self.xs, self.ys)
        return X + 1j * Y

    def total(self):
        """Riemann sum of the values times the cell area."""
        return float(self.values.sum() * self.cell_area)

    def axis_variances(self):
        """Per-axis variances of the raster treated as a (signed) density."""
        w = self.values / self.values.sum()
        X, Y = np.meshgrid(self.xs, self.ys)
        mx, my = (w * X).sum(), (w * Y).sum()
        return float((w * (X - mx) ** 2).sum()), float((w * (Y - my) ** 2).sum())


def _as_spec(spec):
    if spec is None:
        return GridSpec(*DEFAULT_GRID)
    if isinstance(spec, GridSpec):
        return spec
    if isinstance(spec, str):
        return GridSpec.parse(spec)
    return GridSpec(*spec)


def q_grid(rho, spec=None, source=""):
    spec = _as_spec(spec)
    grid = PhaseSpaceGrid(
        spec.x_min, spec.x_max, spec.y_min, spec.y_max,
        np.zeros((spec.ny, spec.nx)), source=source,
    )
    grid.values = q_values(rho, grid.points())
    return grid


def wigner_values(rho, alpha):
    """Wigner function W(alpha) = (2/pi) Tr[rho D(alpha) P D(alpha)^dag].

    Uses ``D(a) P D(a)^dag = D(2a) P`` and the Laguerre form of the
    displacement matrix elements.  For each off-diagonal offset ``k`` the
    normalized terms
    ``f_m = exp(-x/2) |b|^k sqrt(m!/(m+k)!) L_m^k(x)`` (``b = 2 alpha``,
    ``x = |b|^2``) follow the three-term recurrence in the degree ``m``.
    """
    rho = np.asarray(rho, dtype=complex)
    alpha = np.asarray(alpha, dtype=complex)
    shape = alpha.shape
    b = 2.0 * alpha.reshape(-1)
    x = np.abs(b) ** 2
    rb = np.abs(b)
    phase = np.exp(1j * np.angle(b))
    d = rho.shape[0]
    signs = 1.0 - 2.0 * (np.arange(d) % 2)
    total = np.zeros(b.size)
    with np.errstate(divide="ignore"):
        logr = np.log(rb)
    for k in range(d):
        if k == 0:
            f0 = np.exp(-0.5 * x)
        else:
            f0 = np.where(rb > 0, np.exp(-0.5 * x + k * logr - 0.5 * gammaln(k + 1)), 0.0)
        coeffs = signs[: d - k] * np.diagonal(rho, k)
        acc = coeffs[0] * f0
        f_prev, f = None, f0
        for m in range(d - k - 1):
            if m == 0:
                f_next = (1 + k - x) * f / np.sqrt(k + 1.0)
            else:
                f_next = ((2 * m + 1 + k - x) * f - np.sqrt(m * (m + k)) * f_prev) / np.sqrt(
                    (m + 1.0) * (m + k + 1)
                )
            f_prev, f = f, f_next
            acc = acc + coeffs[m + 1] * f
        if k == 0:
            total += acc.real
        else:
            total += 2.0 * (acc * phase**k).real
    return (2.0 / np.pi * total).reshape(shape)


def wigner_grid(rho, spec=None, source=""):
    spec = _as_spec(spec)
    grid = PhaseSpaceGrid(
        spec.x_min, spec.x_max, spec.y_min, spec.y_max,
        np.zeros((spec.ny, spec.nx)), source=source,
    )
    grid.values = wigner_values(rho, grid.points())
    return grid


def wigner_at_origin(rho):
    """W(0) = (2/pi) * parity, without a grid."""
    return 2.0 / np.pi * parity(rho)


def negativity_volume(grid):
    """Integral of the negative part of a Wigner raster."""
    return float(np.maximum(0.0, -grid.values).sum() * grid.cell_area)


def histogram_q(samples, spec=None, source=""):
    """Density-normalized 2D histogram of a SampleSet.

    Bins are the ``nx x ny`` cells tiling the bounds.  Values are
    ``counts / (N * cell_area)``; the fraction of samples outside the
    bounds is stored in ``overflow``.
    """
    spec = _as_spec(spec)
    pts = samples.points
    if pts.size == 0:
        raise DomainError("cannot histogram an empty sample set")
    xe = np.linspace(spec.x_min, spec.x_max, spec.nx + 1)
    ye = np.linspace(spec.y_min, spec.y_max, spec.ny + 1)
    counts, _, _ = np.histogram2d(pts.imag, pts.real, bins=[ye, xe])
    inside = counts.sum()
    area = (xe[1] - xe[0]) * (ye[1] - ye[0])
    return PhaseSpaceGrid(
        spec.x_min, spec.x_max, spec.y_min, spec.y_max,
        counts / (pts.size * area),
        overflow=float(pts.size - inside) / pts.size,
        source=source or samples.source,
        centered=True,
    )


def _cat_fidelity(rho, alpha, family):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fidelity(rho, family(alpha, rho.shape[0]))


def fit_cat_amplitude(rho, parities=("odd", "even"), scan=64):
    """Cat amplitude maximizing fidelity with N(|a> -/+ |-a>), a real.

    Each parity branch is scanned coarsely over ``[0.05, sqrt(dim)]`` and
    the best bracket refined by golden-section search to 1e-4.  Returns
    ``{"alpha", "fidelity", "parity"}`` for the better branch.  Pass
    ``parities=("odd",)`` to fit odd cats only.
    """
    rho = np.asarray(rho, dtype=complex)
    hi = np.sqrt(rho.shape[0])
    grid = np.linspace(0.05, hi, scan)
    families = {"odd": odd_cat, "even": even_cat}
    best = None
    for name in parities:
        fam = families[name]
        vals = np.array([_cat_fidelity(rho, a, fam) for a in grid])
        i = int(np.argmax(vals))
        if 0 < i < scan - 1:
            a = golden(
                lambda t: -_cat_fidelity(rho, t, fam),
                brack=(grid[i - 1], grid[i], grid[i + 1]),
                tol=1e-6,
            )
            a = float(np.clip(a, grid[i - 1], grid[i + 1]))
        else:
            a = float(grid[i])
        f = _cat_fidelity(rho, a, fam)
        if best is None or f > best["fidelity"]:
            best = {"alpha": a, "fidelity": f, "parity": name}
    if best["fidelity"] < 0.05:
        warnings.warn("state has no cat character (all fidelities < 0.05)", RuntimeWarning)
    return best
