"""Experiment configuration: JSON ingestion, validation, object construction.

Config files carry explicit unit suffixes in their key names to keep unit
mistakes visible.  Angles are degrees at this boundary and radians inside.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import feed as feed_mod
from . import physics
from .forward import (RunContext, BagSchedule, FractionSpan, UniformFromZero,
                      ExplicitTimes, build_schedule)


class ConfigError(ValueError):
    """Configuration is invalid; message carries the offending field path."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def _need(raw: dict, field: str, path: str):
    if field not in raw:
        raise ConfigError(f"{path}.{field}" if path else field, "missing")
    return raw[field]


def _number(raw: dict, field: str, path: str) -> float:
    value = _need(raw, field, path)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{field}", "must be a number")
    return float(value)


def _positive(raw: dict, field: str, path: str) -> float:
    value = _number(raw, field, path)
    if value <= 0.0:
        raise ConfigError(f"{path}.{field}", "must be positive")
    return value


def _non_negative(raw: dict, field: str, path: str) -> float:
    value = _number(raw, field, path)
    if value < 0.0:
        raise ConfigError(f"{path}.{field}", "must be non-negative")
    return value


@dataclass(frozen=True)
class GridSpec:
    s_min: float
    ratio: float
    count: int | None
    order: int


@dataclass(frozen=True)
class ScheduleSpec:
    mode: str
    bag_count: int
    f_lo: float = 0.05
    f_hi: float = 0.95
    t_end: float = 0.0
    boundaries: tuple = ()

    def mode_object(self):
        if self.mode == "fraction_span":
            return FractionSpan(self.f_lo, self.f_hi)
        if self.mode == "uniform_from_zero":
            return UniformFromZero(self.t_end)
        return ExplicitTimes(self.boundaries)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Validated configuration for one elutriation run."""

    name: str
    fluid: physics.FluidProperties
    particle: physics.ParticleProperties
    geom: physics.ChannelGeometry
    ramp: physics.FlowRamp
    rate_k: float
    feed_params: feed_mod.RosinRammlerParams
    grid_spec: GridSpec
    schedule_spec: ScheduleSpec
    sigma: float
    seed: int
    raw: dict

    def context(self) -> RunContext:
        return RunContext(fluid=self.fluid, particle=self.particle,
                          geom=self.geom, ramp=self.ramp, rate_k=self.rate_k)

    def feed(self) -> feed_mod.AnalyticFeed:
        return feed_mod.rosin_rammler_feed(self.feed_params)

    def grid(self) -> feed_mod.SizeGrid:
        gs = self.grid_spec
        return feed_mod.default_grid(self.feed_params, self.geom.z,
                                     s_min=gs.s_min, ratio=gs.ratio,
                                     order=gs.order, count=gs.count)

    def schedule(self, ctx: RunContext, feed) -> BagSchedule:
        spec = self.schedule_spec
        return build_schedule(ctx, feed, spec.bag_count, spec.mode_object())

    def updated(self, updates: dict) -> "ExperimentConfig":
        """New config with a nested dict of overrides merged into the raw JSON."""
        merged = copy.deepcopy(self.raw)

        def merge(dst, src):
            for key, value in src.items():
                if isinstance(value, dict) and isinstance(dst.get(key), dict):
                    merge(dst[key], value)
                else:
                    dst[key] = value

        merge(merged, updates)
        return from_dict(merged)


_TOP_LEVEL_KEYS = {"name", "fluid", "particle", "channel", "flow",
                   "rate_constant_per_m", "feed", "grid", "schedule", "noise"}


def from_dict(raw: dict) -> ExperimentConfig:
    """Validate a parsed config document and build the typed objects."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level key")

    name = raw.get("name", "run")
    if not isinstance(name, str) or not name:
        raise ConfigError("name", "must be a non-empty string")

    fl = _need(raw, "fluid", "")
    fluid = physics.FluidProperties(
        mu=_positive(fl, "viscosity_pa_s", "fluid"),
        rho=_positive(fl, "density_kg_per_m3", "fluid"),
    )

    pt = _need(raw, "particle", "")
    particle = physics.ParticleProperties(
        rho=_positive(pt, "density_kg_per_m3", "particle"),
        g=_positive(pt, "gravity_m_per_s2", "particle") if "gravity_m_per_s2" in pt
        else physics.STANDARD_GRAVITY,
    )
    if particle.rho <= fluid.rho:
        raise ConfigError("particle.density_kg_per_m3",
                          "must exceed the fluid density")

    ch = _need(raw, "channel", "")
    angle_deg = _positive(ch, "angle_deg", "channel")
    if angle_deg >= 90.0:
        raise ConfigError("channel.angle_deg", "must be below 90 degrees")
    geom = physics.ChannelGeometry(
        z=_positive(ch, "spacing_m", "channel"),
        theta=math.radians(angle_deg),
        ell=_positive(ch, "length_m", "channel"),
    )

    fw = _need(raw, "flow", "")
    ramp = physics.FlowRamp(
        v0=_non_negative(fw, "v0_m_per_s", "flow"),
        t0=_non_negative(fw, "t0_s", "flow"),
        lam=_positive(fw, "lambda_m_per_s2", "flow"),
    )

    rate_k = _positive(raw, "rate_constant_per_m", "")

    fd = _need(raw, "feed", "")
    kind = _need(fd, "type", "feed")
    if kind != "rosin_rammler":
        raise ConfigError("feed.type", "only 'rosin_rammler' is supported")
    feed_params = feed_mod.RosinRammlerParams(
        mode_parameter=_positive(fd, "mode_parameter", "feed"),
        z_ref=geom.z,
        total_mass=_positive(fd, "total_mass_kg", "feed"),
    )

    gr = _need(raw, "grid", "")
    count = gr.get("cell_count")
    if count is not None:
        if isinstance(count, bool) or not isinstance(count, int) or count < 2:
            raise ConfigError("grid.cell_count", "must be an integer >= 2 or null")
    order = _need(gr, "spline_order", "grid")
    if order not in (0, 1):
        raise ConfigError("grid.spline_order", "must be 0 or 1")
    grid_spec = GridSpec(
        s_min=_positive(gr, "s_min_m", "grid"),
        ratio=_positive(gr, "ratio", "grid"),
        count=count,
        order=order,
    )
    if grid_spec.ratio <= 1.0:
        raise ConfigError("grid.ratio", "must exceed 1")
    try:
        feed_mod.default_grid(feed_params, geom.z, s_min=grid_spec.s_min,
                              ratio=grid_spec.ratio, order=grid_spec.order,
                              count=grid_spec.count)
    except feed_mod.InvalidGrid as exc:
        raise ConfigError("grid", str(exc)) from exc

    sc = _need(raw, "schedule", "")
    mode = _need(sc, "mode", "schedule")
    bag_count = _need(sc, "bag_count", "schedule")
    if isinstance(bag_count, bool) or not isinstance(bag_count, int) or bag_count < 1:
        raise ConfigError("schedule.bag_count", "must be a positive integer")
    if mode == "fraction_span":
        f_lo = _positive(sc, "start_fraction", "schedule")
        f_hi = _positive(sc, "end_fraction", "schedule")
        if not f_lo < f_hi < 1.0:
            raise ConfigError("schedule.end_fraction",
                              "fractions must satisfy 0 < start < end < 1")
        schedule_spec = ScheduleSpec(mode=mode, bag_count=bag_count,
                                     f_lo=f_lo, f_hi=f_hi)
    elif mode == "uniform_from_zero":
        schedule_spec = ScheduleSpec(mode=mode, bag_count=bag_count,
                                     t_end=_positive(sc, "end_time_s", "schedule"))
    elif mode == "explicit":
        bounds = _need(sc, "boundaries_s", "schedule")
        if (not isinstance(bounds, list) or len(bounds) != bag_count + 1
                or any(isinstance(b, bool) or not isinstance(b, (int, float))
                       for b in bounds)):
            raise ConfigError("schedule.boundaries_s",
                              "must list bag_count + 1 numbers")
        if bounds[0] < 0 or any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise ConfigError("schedule.boundaries_s",
                              "must be non-negative and strictly increasing")
        schedule_spec = ScheduleSpec(mode=mode, bag_count=bag_count,
                                     boundaries=tuple(float(b) for b in bounds))
    else:
        raise ConfigError("schedule.mode",
                          "must be fraction_span, uniform_from_zero or explicit")

    ns = raw.get("noise", {"sigma": 0.0, "seed": 0})
    sigma = _non_negative(ns, "sigma", "noise")
    seed = ns.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("noise.seed", "must be an integer")

    return ExperimentConfig(
        name=name, fluid=fluid, particle=particle, geom=geom, ramp=ramp,
        rate_k=rate_k, feed_params=feed_params, grid_spec=grid_spec,
        schedule_spec=schedule_spec, sigma=sigma, seed=seed,
        raw=copy.deepcopy(raw),
    )


def preset_path(name: str) -> Path:
    return Path(str(resources.files("elutrikit").joinpath(f"presets/{name}.json")))


def load_config(source) -> ExperimentConfig:
    """Load a config from a path, or by preset name ('water', 'lst')."""
    path = Path(source)
    if not path.exists():
        candidate = preset_path(str(source))
        if candidate.exists():
            path = candidate
        else:
            raise ConfigError("<file>", f"no such config file or preset: {source}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON in {path}: {exc}") from exc
    return from_dict(raw)
