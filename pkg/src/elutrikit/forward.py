"""Forward elutriation model: kernels, bag masses, mass balance, schedules.

The bed loses mass of size ``s`` at rate ``k * c(s,t)`` where ``c`` is the
transport speed, so the surviving bed fraction is ``exp(-k * d_s(t))``.
Particles exit the system once they have travelled the channel length
beyond their entry point, which gives each collection interval
``[t_prev, t_next]`` a closed-form kernel ``L(s)``: the fraction of the
initial size-s mass that leaves the system during that interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from . import physics
from .feed import _quad_points, _feed_quad_epsabs


class NoBracket(RuntimeError):
    """Root bracketing exceeded the search horizon."""


@dataclass(frozen=True)
class RunContext:
    """One experiment's physics: fluid, particle, geometry, ramp, rate constant."""

    fluid: physics.FluidProperties
    particle: physics.ParticleProperties
    geom: physics.ChannelGeometry
    ramp: physics.FlowRamp
    rate_k: float

    def __post_init__(self):
        if self.rate_k <= 0.0:
            raise ValueError("elutriation rate constant must be positive")
        if self.particle.rho <= self.fluid.rho:
            raise physics.NeutralBuoyancy(
                f"particle density {self.particle.rho} kg/m3 does not exceed "
                f"fluid density {self.fluid.rho} kg/m3"
            )

    def distance(self, s: float, t: float) -> float:
        return physics.distance_traveled(s, t, self.ramp, self.fluid,
                                         self.particle, self.geom)

    def inverse_distance(self, s: float, x: float) -> float:
        return physics.inverse_distance(s, x, self.ramp, self.fluid,
                                        self.particle, self.geom)

    def critical_time(self, s: float) -> float:
        return physics.critical_time(s, self.ramp, self.fluid,
                                     self.particle, self.geom)

    def breakthrough_time(self, s: float) -> float:
        """Time at which size-s particles first reach the channel outlet."""
        return self.inverse_distance(s, self.geom.ell)


# -- schedule construction ---------------------------------------------------

@dataclass(frozen=True)
class FractionSpan:
    """Bag boundaries uniform between the f_lo and f_hi elutriation times."""
    f_lo: float = 0.05
    f_hi: float = 0.95


@dataclass(frozen=True)
class UniformFromZero:
    """Bag boundaries uniform on [0, t_end]."""
    t_end: float


@dataclass(frozen=True)
class ExplicitTimes:
    """Bag boundaries given directly."""
    times: tuple


@dataclass(frozen=True, eq=False)
class BagSchedule:
    """Strictly increasing bag boundary times t_0 < ... < t_p (p bags)."""

    times: np.ndarray
    mode: str = "explicit"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("a schedule needs at least one bag")
        if times[0] < 0.0:
            raise ValueError("schedule must start at a non-negative time")
        if not np.all(np.diff(times) > 0.0):
            raise ValueError("bag boundary times must be strictly increasing")
        object.__setattr__(self, "times", times)

    @property
    def n_bags(self) -> int:
        return self.times.size - 1

    def interval(self, i: int) -> tuple[float, float]:
        return float(self.times[i]), float(self.times[i + 1])


@dataclass(frozen=True, eq=False)
class BagMasses:
    """Collected bag masses plus the schedule they belong to."""

    schedule: BagSchedule
    masses: np.ndarray
    provenance: str = "model"
    sigma: float = 0.0
    seed: tuple | None = None

    def __post_init__(self):
        masses = np.asarray(self.masses, dtype=float)
        if masses.shape != (self.schedule.n_bags,):
            raise ValueError("one mass per bag required")
        object.__setattr__(self, "masses", masses)

    @property
    def total(self) -> float:
        return float(self.masses.sum())


# -- kernels -----------------------------------------------------------------

def kernel_eval(ctx: RunContext, t_prev: float, t_next: float, s: float) -> float:
    """Fraction of initial size-s mass leaving the system during [t_prev, t_next].

    Three regimes: nothing has reached the outlet yet; the outlet is first
    reached inside the interval; or exit is already under way at t_prev.
    The expressions telescope exactly across adjacent intervals.
    """
    if not 0.0 <= t_prev < t_next:
        raise ValueError("need 0 <= t_prev < t_next")
    ell = ctx.geom.ell
    k = ctx.rate_k
    d_next = ctx.distance(s, t_next)
    if d_next <= ell:
        return 0.0
    d_prev = ctx.distance(s, t_prev)
    if d_prev <= ell:
        return -math.expm1(-k * (d_next - ell))
    return math.exp(-k * (d_prev - ell)) - math.exp(-k * (d_next - ell))


def _positive_intervals(fn, lo: float, hi: float, samples: int = 193):
    """Intervals of (lo, hi) where fn > 0, by geometric scan plus refinement."""
    grid = np.geomspace(lo, hi, samples)
    vals = np.fromiter((fn(s) for s in grid), dtype=float, count=samples)
    pos = vals > 0.0
    if not pos.any():
        return []
    roots = []
    for i in np.nonzero(pos[1:] != pos[:-1])[0]:
        roots.append(brentq(fn, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-12))
    intervals = []
    start = lo if pos[0] else None
    for r in roots:
        if start is None:
            start = r
        else:
            intervals.append((start, r))
            start = None
    if start is not None:
        intervals.append((start, hi))
    return intervals


class KernelSet:
    """Evaluable family of bag kernels for one run context and schedule."""

    def __init__(self, ctx: RunContext, schedule: BagSchedule):
        self.ctx = ctx
        self.schedule = schedule
        self._bounds_cache: dict[int, list] = {}

    @property
    def n_bags(self) -> int:
        return self.schedule.n_bags

    def eval(self, i: int, s: float) -> float:
        t_prev, t_next = self.schedule.interval(i)
        return kernel_eval(self.ctx, t_prev, t_next, s)

    def sample(self, i: int, s_values) -> np.ndarray:
        return np.array([self.eval(i, float(s)) for s in np.atleast_1d(s_values)])

    def _reached_intervals(self, time_index: int):
        """Size intervals whose travel distance exceeds the channel length."""
        if time_index not in self._bounds_cache:
            t = float(self.schedule.times[time_index])
            ell = self.ctx.geom.ell
            z = self.ctx.geom.z
            self._bounds_cache[time_index] = _positive_intervals(
                lambda s: self.ctx.distance(s, t) - ell, 1e-9 * z, z * (1.0 - 1e-9))
        return self._bounds_cache[time_index]

    def support(self, i: int):
        """Size intervals where kernel i can be nonzero."""
        return self._reached_intervals(i + 1)

    def kink_sizes(self, i: int) -> list:
        """Sizes where kernel i switches between its closed-form cases."""
        return [edge for lohi in self._reached_intervals(i) for edge in lohi]


# -- bag masses and mass balance ----------------------------------------------

def sizes_past_outlet(ctx: RunContext, t: float):
    """Size intervals whose particles have reached the channel outlet by time t."""
    z = ctx.geom.z
    return _positive_intervals(lambda s: ctx.distance(s, t) - ctx.geom.ell,
                               1e-9 * z, z * (1.0 - 1e-9))


def _moving_intervals(ctx: RunContext, t: float):
    z = ctx.geom.z
    return _positive_intervals(lambda s: t - ctx.critical_time(s),
                               1e-9 * z, z * (1.0 - 1e-9))


def bag_mass(feed, kernels: KernelSet, i: int) -> float:
    """Model mass in bag i: the feed density integrated against kernel i."""
    epsabs = _feed_quad_epsabs(feed)
    kinks = kernels.kink_sizes(i) + list(getattr(feed, "knot_hints", ()))
    top = feed.support_top
    total = 0.0
    for lo, hi in kernels.support(i):
        lo, hi = max(lo, 0.0), min(hi, top)
        if hi <= lo:
            continue
        val, _ = quad(lambda s: feed.density(s) * kernels.eval(i, s), lo, hi,
                      points=_quad_points(kinks, lo, hi),
                      epsabs=epsabs, epsrel=1e-11, limit=400)
        total += val
    return max(total, 0.0)


def bag_masses(feed, kernels: KernelSet) -> BagMasses:
    """All model bag masses for one kernel set."""
    masses = np.array([bag_mass(feed, kernels, i) for i in range(kernels.n_bags)])
    return BagMasses(kernels.schedule, masses, provenance="model")


def mass_in_bed(feed, ctx: RunContext, t: float) -> float:
    """Mass still in the fluidised bed at time t."""
    if t < 0.0:
        raise ValueError("time must be non-negative")
    epsabs = _feed_quad_epsabs(feed)
    k = ctx.rate_k
    top = min(feed.support_top, ctx.geom.z * (1.0 - 1e-12))
    pts = [e for lohi in _moving_intervals(ctx, t) for e in lohi]
    pts += list(getattr(feed, "knot_hints", ()))
    val, _ = quad(lambda s: feed.density(s) * math.exp(-k * ctx.distance(s, t)),
                  0.0, top, points=_quad_points(pts, 0.0, top),
                  epsabs=epsabs, epsrel=1e-11, limit=400)
    return val


def mass_elutriated(feed, ctx: RunContext, t: float) -> float:
    """Mass that has left the system through the channel outlet by time t."""
    if t < 0.0:
        raise ValueError("time must be non-negative")
    epsabs = _feed_quad_epsabs(feed)
    k = ctx.rate_k
    ell = ctx.geom.ell
    top = feed.support_top
    hints = list(getattr(feed, "knot_hints", ()))
    total = 0.0
    for lo, hi in sizes_past_outlet(ctx, t):
        lo, hi = max(lo, 0.0), min(hi, top)
        if hi <= lo:
            continue
        val, _ = quad(
            lambda s: feed.density(s) * -math.expm1(-k * (ctx.distance(s, t) - ell)),
            lo, hi, points=_quad_points(hints, lo, hi),
            epsabs=epsabs, epsrel=1e-11, limit=400)
        total += val
    return total


def mass_in_channels(feed, ctx: RunContext, t: float) -> float:
    """Mass in transit inside the channels at time t."""
    if t < 0.0:
        raise ValueError("time must be non-negative")
    epsabs = _feed_quad_epsabs(feed)
    k = ctx.rate_k
    ell = ctx.geom.ell
    top = min(feed.support_top, ctx.geom.z * (1.0 - 1e-12))
    pts = [e for lohi in _moving_intervals(ctx, t) for e in lohi]
    pts += [e for lohi in sizes_past_outlet(ctx, t) for e in lohi]
    pts += list(getattr(feed, "knot_hints", ()))

    def integrand(s):
        d = ctx.distance(s, t)
        return feed.density(s) * (math.exp(-k * max(d - ell, 0.0)) - math.exp(-k * d))

    val, _ = quad(integrand, 0.0, top, points=_quad_points(pts, 0.0, top),
                  epsabs=epsabs, epsrel=1e-11, limit=400)
    return max(val, 0.0)


DEFAULT_HORIZON = 1e9


def elutriation_time(feed, ctx: RunContext, fraction: float,
                     horizon: float = DEFAULT_HORIZON) -> float:
    """Time at which the given fraction of the feed mass has elutriated.

    Brackets by doubling from one second, then refines with a root finder.
    Raises :class:`NoBracket` if the target is not reached by ``horizon``.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    target = fraction * feed.total_mass
    hi = 1.0
    while mass_elutriated(feed, ctx, hi) < target:
        hi *= 2.0
        if hi > horizon:
            raise NoBracket(
                f"elutriated mass did not reach fraction {fraction} within {horizon} s"
            )
    lo = hi / 2.0 if hi > 1.0 else 0.0
    return brentq(lambda t: mass_elutriated(feed, ctx, t) - target, lo, hi,
                  rtol=1e-10, xtol=1e-9)


def build_schedule(ctx: RunContext, feed, n_bags: int, mode) -> BagSchedule:
    """Bag boundary times for the requested scheduling mode."""
    if n_bags < 1:
        raise ValueError("need at least one bag")
    if isinstance(mode, FractionSpan):
        if not 0.0 < mode.f_lo < mode.f_hi < 1.0:
            raise ValueError("need 0 < f_lo < f_hi < 1")
        t_lo = elutriation_time(feed, ctx, mode.f_lo)
        t_hi = elutriation_time(feed, ctx, mode.f_hi)
        return BagSchedule(np.linspace(t_lo, t_hi, n_bags + 1), mode="fraction_span")
    if isinstance(mode, UniformFromZero):
        if mode.t_end <= 0.0:
            raise ValueError("end time must be positive")
        return BagSchedule(np.linspace(0.0, mode.t_end, n_bags + 1),
                           mode="uniform_from_zero")
    if isinstance(mode, ExplicitTimes):
        times = np.asarray(mode.times, dtype=float)
        if times.size != n_bags + 1:
            raise ValueError("explicit schedule must supply n_bags + 1 boundaries")
        return BagSchedule(times, mode="explicit")
    raise TypeError(f"unknown schedule mode {mode!r}")


# -- measurement noise ---------------------------------------------------------

def _seed_tuple(seed) -> tuple:
    if seed is None:
        raise ValueError("a seed is required for noise injection")
    if isinstance(seed, (tuple, list)):
        return tuple(int(x) for x in seed)
    return (int(seed),)


def add_noise(bags: BagMasses, sigma: float, seed) -> BagMasses:
    """Gaussian measurement noise: max(m + N(0, sigma*m), 0) per bag.

    Each bag draws from its own generator seeded by (seed..., bag index),
    so results are independent of evaluation order.  sigma = 0 returns the
    input unchanged.
    """
    if sigma < 0.0:
        raise ValueError("noise level must be non-negative")
    if sigma == 0.0:
        return bags
    base = _seed_tuple(seed)
    noisy = np.empty_like(bags.masses)
    for i, m in enumerate(bags.masses):
        rng = np.random.default_rng(base + (i,))
        noisy[i] = max(m + rng.normal(0.0, sigma * m), 0.0)
    return BagMasses(bags.schedule, noisy, provenance="noisy",
                     sigma=sigma, seed=base)
