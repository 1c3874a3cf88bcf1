"""Closed-form hydrodynamics of a single particle in an inclined channel.

Everything is SI: metres, seconds, kilograms, Pa.s, radians.  A particle of
radius ``s`` rests on the lower wall of a channel of spacing ``z``.  The
parabolic laminar profile gives it a local upward fluid velocity
``C1(s) * v(t)`` while gravity pulls it down the incline at its tangential
terminal settling velocity ``C2(s)``.  The net velocity, the time at which
it first becomes positive, and the cumulative distance travelled all have
closed forms for a linear flow ramp, which this module implements.

All functions are pure and the parameter records are frozen, so everything
here is safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Fully developed laminar channel flow is commonly assumed below this value.
LAMINAR_REYNOLDS_LIMIT = 2000.0

# Constants of the Zigrang-Sylvester terminal-settling correlation
# (valid for settling Reynolds numbers below 1e5).
_ZS_OFFSET = 14.51
_ZS_FACTOR = 1.83
_ZS_ROOT = 3.81

STANDARD_GRAVITY = 9.81


class NeutralBuoyancy(ValueError):
    """Particle density does not exceed the fluid density."""


class SizeOutOfChannel(ValueError):
    """Particle radius is at least the channel spacing."""


@dataclass(frozen=True)
class FluidProperties:
    """Newtonian fluid: dynamic viscosity ``mu`` (Pa.s), density ``rho`` (kg/m3)."""

    mu: float
    rho: float

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ValueError("fluid viscosity must be positive")
        if self.rho <= 0.0:
            raise ValueError("fluid density must be positive")


@dataclass(frozen=True)
class ChannelGeometry:
    """Inclined channel: gap ``z`` (m), inclination ``theta`` (rad), length ``ell`` (m)."""

    z: float
    theta: float
    ell: float

    def __post_init__(self):
        if self.z <= 0.0:
            raise ValueError("channel spacing must be positive")
        if not 0.0 < self.theta < math.pi / 2.0:
            raise ValueError("inclination must lie strictly between 0 and pi/2")
        if self.ell <= 0.0:
            raise ValueError("channel length must be positive")


@dataclass(frozen=True)
class ParticleProperties:
    """Spherical particle: density ``rho`` (kg/m3), gravity ``g`` (m/s2)."""

    rho: float
    g: float = STANDARD_GRAVITY

    def __post_init__(self):
        if self.rho <= 0.0:
            raise ValueError("particle density must be positive")
        if self.g <= 0.0:
            raise ValueError("gravitational acceleration must be positive")


@dataclass(frozen=True)
class FlowRamp:
    """Linear ramp of superficial velocity: v(t) = v0 + lam * max(t - t0, 0)."""

    v0: float
    t0: float
    lam: float

    def __post_init__(self):
        if self.v0 < 0.0:
            raise ValueError("initial velocity must be non-negative")
        if self.t0 < 0.0:
            raise ValueError("ramp start time must be non-negative")
        if self.lam <= 0.0:
            raise ValueError("velocity scaling factor must be positive")


def _require_sinkable(fluid: FluidProperties, particle: ParticleProperties) -> None:
    if particle.rho <= fluid.rho:
        raise NeutralBuoyancy(
            f"particle density {particle.rho} kg/m3 does not exceed "
            f"fluid density {fluid.rho} kg/m3"
        )


def _require_in_channel(s: float, geom: ChannelGeometry) -> None:
    if s <= 0.0:
        raise ValueError("particle radius must be positive")
    if s >= geom.z:
        raise SizeOutOfChannel(
            f"radius {s} m does not fit in a channel of spacing {geom.z} m"
        )


def superficial_velocity(ramp: FlowRamp, t: float) -> float:
    """Channel superficial velocity v(t) at time t >= 0."""
    if t < 0.0:
        raise ValueError("time must be non-negative")
    return ramp.v0 + ramp.lam * max(t - ramp.t0, 0.0)


def channel_reynolds(ramp: FlowRamp, t: float, fluid: FluidProperties,
                     geom: ChannelGeometry) -> float:
    """Channel-flow Reynolds number 2*rho*v(t)*z/mu (hydraulic diameter 2z).

    Callers compare against :data:`LAMINAR_REYNOLDS_LIMIT`; exceeding it is a
    validity warning, not an error.
    """
    return 2.0 * fluid.rho * superficial_velocity(ramp, t) * geom.z / fluid.mu


def tangential_settling_reynolds(s: float, fluid: FluidProperties,
                                 particle: ParticleProperties,
                                 geom: ChannelGeometry) -> float:
    """Settling Reynolds number of a sphere constrained to slide along the wall.

    Uses the Zigrang-Sylvester drag correlation with the gravitational
    acceleration reduced to its tangential component g*sin(theta).  The
    correlation has a tiny nonzero residual as s -> 0; it is returned as is.
    """
    _require_sinkable(fluid, particle)
    if s <= 0.0:
        raise ValueError("particle radius must be positive")
    drive = math.sqrt((particle.rho - fluid.rho) * particle.g
                      * math.sin(geom.theta) * fluid.rho)
    term = drive * _ZS_FACTOR * (2.0 * s) ** 1.5 / fluid.mu
    return (math.sqrt(_ZS_OFFSET + term) - _ZS_ROOT) ** 2


def settling_velocity_tangential(s: float, fluid: FluidProperties,
                                 particle: ParticleProperties,
                                 geom: ChannelGeometry) -> float:
    """Terminal settling velocity along the incline, from Re = 2*rho*v*s/mu."""
    re = tangential_settling_reynolds(s, fluid, particle, geom)
    return re * fluid.mu / (2.0 * fluid.rho * s)


def profile_factor(s: float, geom: ChannelGeometry) -> float:
    """Dimensionless velocity-profile factor C1(s) = (6s/z)(1 - s/z).

    The local streamline velocity a distance s off the wall of a parabolic
    channel profile is C1(s) times the mean velocity.
    """
    _require_in_channel(s, geom)
    x = s / geom.z
    return 6.0 * x * (1.0 - x)


def drag_term(s: float, fluid: FluidProperties, particle: ParticleProperties,
              geom: ChannelGeometry) -> float:
    """Constant term C2(s) of the net velocity; equals the settling velocity."""
    if s <= 0.0:
        raise ValueError("particle radius must be positive")
    return settling_velocity_tangential(s, fluid, particle, geom)


def net_velocity(s: float, t: float, ramp: FlowRamp, fluid: FluidProperties,
                 particle: ParticleProperties, geom: ChannelGeometry) -> float:
    """Net up-channel particle velocity C1(s)*v(t) - C2(s); may be negative."""
    return (profile_factor(s, geom) * superficial_velocity(ramp, t)
            - drag_term(s, fluid, particle, geom))


def transport_speed(s: float, t: float, ramp: FlowRamp, fluid: FluidProperties,
                    particle: ParticleProperties, geom: ChannelGeometry) -> float:
    """Transport speed c(s,t) = max(net_velocity, 0)."""
    return max(net_velocity(s, t, ramp, fluid, particle, geom), 0.0)


def _coefficients(s, ramp, fluid, particle, geom):
    c1 = profile_factor(s, geom)
    c2 = drag_term(s, fluid, particle, geom)
    return c1, c2, c1 * ramp.v0 - c2


def critical_time(s: float, ramp: FlowRamp, fluid: FluidProperties,
                  particle: ParticleProperties, geom: ChannelGeometry) -> float:
    """First time t*(s) at which the net velocity becomes positive.

    Zero when the initial velocity already carries the particle upward,
    otherwise t0 + (C2 - v0*C1) / (lam*C1).
    """
    c1, c2, d0 = _coefficients(s, ramp, fluid, particle, geom)
    if d0 > 0.0:
        return 0.0
    return ramp.t0 + (c2 - ramp.v0 * c1) / (ramp.lam * c1)


def distance_traveled(s: float, t: float, ramp: FlowRamp, fluid: FluidProperties,
                      particle: ParticleProperties, geom: ChannelGeometry) -> float:
    """Cumulative distance d_s(t) travelled up the channel by time t.

    Piecewise closed form of the time integral of the transport speed:
    linear plus quadratic when the particle moves from t = 0, purely
    quadratic past t*(s) otherwise.  Non-decreasing in t and zero for
    t <= t*(s).
    """
    if t < 0.0:
        raise ValueError("time must be non-negative")
    c1, c2, d0 = _coefficients(s, ramp, fluid, particle, geom)
    if d0 > 0.0:
        dt = max(t - ramp.t0, 0.0)
        return d0 * t + 0.5 * ramp.lam * c1 * dt * dt
    tstar = ramp.t0 + (c2 - ramp.v0 * c1) / (ramp.lam * c1)
    dt = max(t - tstar, 0.0)
    return 0.5 * ramp.lam * c1 * dt * dt


def inverse_distance(s: float, x: float, ramp: FlowRamp, fluid: FluidProperties,
                     particle: ParticleProperties, geom: ChannelGeometry) -> float:
    """Time at which the cumulative distance first reaches x >= 0.

    Analytic inverse of :func:`distance_traveled`; returns t*(s) for x = 0.
    """
    if x < 0.0:
        raise ValueError("distance must be non-negative")
    c1, c2, d0 = _coefficients(s, ramp, fluid, particle, geom)
    lamc1 = ramp.lam * c1
    if d0 > 0.0:
        if x <= d0 * ramp.t0:
            return x / d0
        excess = x - d0 * ramp.t0
        # stable positive root of the quadratic branch
        return ramp.t0 + 2.0 * excess / (d0 + math.sqrt(d0 * d0 + 2.0 * lamc1 * excess))
    tstar = ramp.t0 + (c2 - ramp.v0 * c1) / lamc1
    return tstar + math.sqrt(2.0 * x / lamc1)
