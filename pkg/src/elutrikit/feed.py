"""Size grids, spline bases, synthetic feeds and least-squares projections.

A :class:`SizeGrid` holds N+1 strictly increasing radius knots and a spline
order (0 or 1), defining N basis functions:

* order 0: half-open indicator of each cell ``[s_j, s_{j+1})``;
* order 1: hats that are 1 at knot j and 0 at every other knot.  The first
  hat is truncated at the lower grid edge (no phantom knots), the last hat
  peaks at the second-to-last knot, so the represented function always
  falls to zero at the top knot.

Both bases are non-negative, so a spline expansion is non-negative exactly
when its coefficient vector is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad


class InvalidGrid(ValueError):
    """Knot sequence violates the grid contract."""


class DegenerateReference(ValueError):
    """Reference spline has zero L2 norm; relative error undefined."""


def _quad_points(points, lo, hi):
    pts = sorted(p for p in points if lo < p < hi)
    return pts or None


@dataclass(frozen=True, eq=False)
class SizeGrid:
    """Ascending radius knots (m) plus the spline order of the basis."""

    knots: np.ndarray
    order: int = 0

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or knots.size < 3:
            raise InvalidGrid("a grid needs at least two cells")
        if knots[0] <= 0.0:
            raise InvalidGrid("knots must be positive radii")
        if not np.all(np.diff(knots) > 0.0):
            raise InvalidGrid("knots must be strictly increasing")
        if self.order not in (0, 1):
            raise InvalidGrid("spline order must be 0 or 1")
        object.__setattr__(self, "knots", knots)

    @property
    def n_basis(self) -> int:
        return self.knots.size - 1

    @property
    def span(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    def same_layout(self, other: "SizeGrid") -> bool:
        return (self.order == other.order
                and self.knots.size == other.knots.size
                and np.allclose(self.knots, other.knots, rtol=1e-12, atol=0.0))


def build_geometric_grid(s_min: float, ratio: float, count: int, order: int = 0,
                         max_radius: float | None = None) -> SizeGrid:
    """Geometric knots s_min * ratio**j for j = 0..count.

    ``max_radius`` (typically the channel spacing) bounds the top knot;
    exceeding it raises :class:`InvalidGrid`.
    """
    if s_min <= 0.0:
        raise InvalidGrid("s_min must be positive")
    if ratio <= 1.0:
        raise InvalidGrid("ratio must exceed 1")
    if count < 2:
        raise InvalidGrid("need at least 2 cells")
    knots = s_min * ratio ** np.arange(count + 1)
    if max_radius is not None and knots[-1] >= max_radius:
        raise InvalidGrid(
            f"top knot {knots[-1]:.4g} m reaches the channel spacing {max_radius:.4g} m"
        )
    return SizeGrid(knots, order)


def eval_basis(grid: SizeGrid, j: int, s):
    """Value of basis function j (0-based) at radius s (scalar or array)."""
    if not 0 <= j < grid.n_basis:
        raise IndexError(f"basis index {j} out of range 0..{grid.n_basis - 1}")
    k = grid.knots
    scalar = np.isscalar(s)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.zeros_like(s)
    if grid.order == 0:
        out[(k[j] <= s) & (s < k[j + 1])] = 1.0
    else:
        peak, right = k[j], k[j + 1]
        fall = (peak <= s) & (s <= right)
        out[fall] = (right - s[fall]) / (right - peak)
        if j > 0:
            left = k[j - 1]
            rise = (left <= s) & (s < peak)
            out[rise] = (s[rise] - left) / (peak - left)
    return float(out[0]) if scalar else out


def basis_masses(grid: SizeGrid) -> np.ndarray:
    """Integrals c_j of the basis functions; the mass-constraint weights."""
    w = np.diff(grid.knots)
    if grid.order == 0:
        return w.copy()
    c = np.empty(grid.n_basis)
    c[0] = w[0] / 2.0
    for j in range(1, grid.n_basis):
        c[j] = (grid.knots[j + 1] - grid.knots[j - 1]) / 2.0
    return c


def gram_matrix(grid: SizeGrid) -> np.ndarray:
    """Exact Gram matrix of the basis, for L2 inner products of splines."""
    w = np.diff(grid.knots)
    n = grid.n_basis
    if grid.order == 0:
        return np.diag(w)
    g = np.zeros((n, n))
    g[0, 0] = w[0] / 3.0
    for j in range(1, n):
        g[j, j] = (w[j - 1] + w[j]) / 3.0
    for j in range(n - 1):
        g[j, j + 1] = g[j + 1, j] = w[j] / 6.0
    return g


@dataclass(frozen=True, eq=False)
class AnalyticFeed:
    """Feed given by a density callable (kg per m of radius) on (0, support_top]."""

    density: Callable
    total_mass: float
    support_top: float
    label: str = "analytic"

    @property
    def knot_hints(self) -> tuple:
        return ()


@dataclass(frozen=True, eq=False)
class SplineFeed:
    """Feed in spline-coefficient form on a :class:`SizeGrid`."""

    grid: SizeGrid
    coefficients: np.ndarray

    def __post_init__(self):
        coeff = np.asarray(self.coefficients, dtype=float)
        if coeff.shape != (self.grid.n_basis,):
            raise ValueError("coefficient count must match the basis size")
        object.__setattr__(self, "coefficients", coeff)

    def density(self, s):
        scalar = np.isscalar(s)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        k = self.grid.knots
        a = self.coefficients
        if self.grid.order == 0:
            idx = np.searchsorted(k, s, side="right") - 1
            inside = (idx >= 0) & (idx < a.size)
            out = np.where(inside, a[np.clip(idx, 0, a.size - 1)], 0.0)
        else:
            nodal = np.append(a, 0.0)
            out = np.interp(s, k, nodal, left=0.0, right=0.0)
        return float(out[0]) if scalar else out

    @property
    def total_mass(self) -> float:
        return float(basis_masses(self.grid) @ self.coefficients)

    @property
    def support_top(self) -> float:
        return float(self.grid.knots[-1])

    @property
    def knot_hints(self) -> tuple:
        return tuple(self.grid.knots)


@dataclass(frozen=True)
class RosinRammlerParams:
    """Rosin-Rammler feed parameters: mode parameter, channel spacing, total mass."""

    mode_parameter: float
    z_ref: float
    total_mass: float = 1.0

    def __post_init__(self):
        if self.mode_parameter <= 0.0:
            raise ValueError("mode parameter must be positive")
        if self.z_ref <= 0.0:
            raise ValueError("reference spacing must be positive")
        if self.total_mass <= 0.0:
            raise ValueError("total mass must be positive")

    @property
    def decay(self) -> float:
        """Gaussian decay rate of the density: M ~ s * exp(-decay * s**2)."""
        return 4.0 * math.log(5.0) / (self.z_ref * self.mode_parameter) ** 2

    @property
    def amplitude(self) -> float:
        """Prefactor that normalises the total mass."""
        return 2.0 * self.decay * self.z_ref * self.total_mass


def rosin_rammler_density(params: RosinRammlerParams, s):
    """Density A*(s/z)*exp(log(0.2)*(2s/(zP))**2), normalised to the total mass."""
    s = np.asarray(s, dtype=float)
    zp = params.z_ref * params.mode_parameter
    return (params.amplitude * (s / params.z_ref)
            * np.exp(math.log(0.2) * (2.0 * s / zp) ** 2))


def rosin_rammler_tail_radius(params: RosinRammlerParams, fraction: float) -> float:
    """Radius above which the given mass fraction of the feed lies."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    return math.sqrt(-math.log(fraction) / params.decay)


def rosin_rammler_feed(params: RosinRammlerParams) -> AnalyticFeed:
    """Analytic feed for the given Rosin-Rammler parameters."""
    return AnalyticFeed(
        density=partial(rosin_rammler_density, params),
        total_mass=params.total_mass,
        support_top=rosin_rammler_tail_radius(params, 1e-16),
        label="rosin-rammler",
    )


DEFAULT_S_MIN = 21.2e-6
DEFAULT_RATIO = 1.1369
GRID_TAIL_FRACTION = 1e-4


def default_grid(params: RosinRammlerParams, channel_spacing: float,
                 s_min: float = DEFAULT_S_MIN, ratio: float = DEFAULT_RATIO,
                 order: int = 0, count: int | None = None) -> SizeGrid:
    """Geometric grid sized for a Rosin-Rammler feed.

    When ``count`` is None, the cell count is the smallest N for which the
    feed mass above the top knot falls below ``GRID_TAIL_FRACTION``.
    """
    if count is None:
        top = rosin_rammler_tail_radius(params, GRID_TAIL_FRACTION)
        count = max(2, math.ceil(math.log(top / s_min) / math.log(ratio)))
        while s_min * ratio ** count < top:
            count += 1
    return build_geometric_grid(s_min, ratio, count, order, max_radius=channel_spacing)


def _feed_quad_epsabs(feed) -> float:
    return 1e-12 * abs(feed.total_mass) + 1e-300


def project_to_splines(feed, grid: SizeGrid) -> SplineFeed:
    """L2-best spline approximation of a feed on the given grid.

    Order 0 reduces to per-cell averages of the density; order 1 solves the
    Gram normal equations.  Projecting a spline onto its own grid returns
    it (up to quadrature precision).
    """
    k = grid.knots
    epsabs = _feed_quad_epsabs(feed)
    hints = getattr(feed, "knot_hints", ())
    if grid.order == 0:
        coeff = np.empty(grid.n_basis)
        for j in range(grid.n_basis):
            val, _ = quad(feed.density, k[j], k[j + 1],
                          points=_quad_points(hints, k[j], k[j + 1]),
                          epsabs=epsabs, epsrel=1e-11, limit=200)
            coeff[j] = val / (k[j + 1] - k[j])
        return SplineFeed(grid, coeff)
    rhs = np.empty(grid.n_basis)
    for j in range(grid.n_basis):
        total = 0.0
        pieces = [(k[j], k[j + 1])]
        if j > 0:
            pieces.insert(0, (k[j - 1], k[j]))
        for lo, hi in pieces:
            val, _ = quad(lambda s: feed.density(s) * eval_basis(grid, j, s),
                          lo, hi, points=_quad_points(hints, lo, hi),
                          epsabs=epsabs, epsrel=1e-11, limit=200)
            total += val
        rhs[j] = total
    coeff = np.linalg.solve(gram_matrix(grid), rhs)
    return SplineFeed(grid, coeff)


def l2_distance(feed_a, feed_b, upper: float | None = None) -> float:
    """L2 norm of the density difference over (0, upper)."""
    if upper is None:
        upper = max(feed_a.support_top, feed_b.support_top)
    pts = set(getattr(feed_a, "knot_hints", ())) | set(getattr(feed_b, "knot_hints", ()))
    val, _ = quad(lambda s: (feed_a.density(s) - feed_b.density(s)) ** 2,
                  0.0, upper, points=_quad_points(pts, 0.0, upper),
                  epsabs=1e-14, epsrel=1e-10, limit=400)
    return math.sqrt(max(val, 0.0))


def relative_error(reconstruction: SplineFeed, reference, upper: float | None = None) -> float:
    """Relative L2 error of a reconstruction against a reference, in percent.

    An analytic reference is first projected onto the reconstruction's grid,
    so the comparison is always against the best-approximating spline.
    """
    if not isinstance(reference, SplineFeed):
        reference = project_to_splines(reference, reconstruction.grid)
    if reference.grid.same_layout(reconstruction.grid):
        g = gram_matrix(reconstruction.grid)
        diff = reference.coefficients - reconstruction.coefficients
        num = float(diff @ g @ diff)
        den = float(reference.coefficients @ g @ reference.coefficients)
    else:
        if upper is None:
            upper = max(reference.support_top, reconstruction.support_top)
        num = l2_distance(reconstruction, reference, upper) ** 2
        ref_norm, _ = quad(lambda s: reference.density(s) ** 2, 0.0, upper,
                           points=_quad_points(reference.knot_hints, 0.0, upper),
                           epsabs=1e-14, epsrel=1e-10, limit=400)
        den = ref_norm
    if den <= 0.0:
        raise DegenerateReference("reference spline has zero L2 norm")
    return 100.0 * math.sqrt(max(num, 0.0) / den)
