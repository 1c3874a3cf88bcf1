import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elutrikit import forward, physics
from elutrikit.feed import SplineFeed, build_geometric_grid
from elutrikit.forward import (RunContext, BagSchedule, FractionSpan,
                               UniformFromZero, ExplicitTimes, KernelSet,
                               kernel_eval, bag_mass, bag_masses, mass_in_bed,
                               mass_elutriated, mass_in_channels,
                               elutriation_time, build_schedule, add_noise,
                               NoBracket)
from conftest import WATER, LST, SILICA, GEOM, make_ramp
import _oracles


def water_ctx_at(lam):
    return RunContext(fluid=WATER, particle=SILICA, geom=GEOM,
                      ramp=make_ramp(lam), rate_k=0.0138)


def test_context_rejects_neutral_buoyancy():
    light = physics.ParticleProperties(rho=900.0)
    with pytest.raises(physics.NeutralBuoyancy):
        RunContext(fluid=WATER, particle=light, geom=GEOM,
                   ramp=make_ramp(1e-5), rate_k=0.0138)


def test_schedule_validation():
    with pytest.raises(ValueError):
        BagSchedule(np.array([0.0, 10.0, 10.0]))
    with pytest.raises(ValueError):
        BagSchedule(np.array([-1.0, 10.0]))


class TestKernel:
    def test_zero_before_breakthrough(self, water_ctx):
        # tiny times: nothing has travelled the full channel length
        assert kernel_eval(water_ctx, 0.0, 1.0, 60e-6) == 0.0

    def test_bounds(self, water_ctx):
        t_on = water_ctx.breakthrough_time(60e-6)
        val = kernel_eval(water_ctx, 0.0, 3.0 * t_on, 60e-6)
        assert 0.0 < val < 1.0

    @settings(max_examples=40, deadline=None)
    @given(s=st.floats(25e-6, 250e-6), base=st.floats(100.0, 3e4),
           d1=st.floats(10.0, 3e4), d2=st.floats(10.0, 3e4))
    def test_telescoping(self, s, base, d1, d2):
        ctx = water_ctx_at(1e-5)
        ta, tb, tc = base, base + d1, base + d1 + d2
        combined = kernel_eval(ctx, ta, tc, s)
        split = kernel_eval(ctx, ta, tb, s) + kernel_eval(ctx, tb, tc, s)
        assert split == pytest.approx(combined, abs=1e-12)

    def test_matches_time_quadrature(self):
        ctx = water_ctx_at(1e-5)
        rng = np.random.default_rng(11)
        for _ in range(15):
            s = float(rng.uniform(30e-6, 300e-6))
            t_on = ctx.breakthrough_time(s)
            t_prev = float(t_on * rng.uniform(0.3, 1.2))
            t_next = t_prev + float(t_on * rng.uniform(0.1, 1.5))
            closed = kernel_eval(ctx, t_prev, t_next, s)
            numeric = _oracles.kernel_by_quadrature(ctx, t_prev, t_next, s)
            assert closed == pytest.approx(numeric, rel=1e-8, abs=1e-14)

    def test_kernel_set_sum_below_one(self, water_ctx, water_feed):
        schedule = build_schedule(water_ctx, water_feed, 5, FractionSpan())
        kernels = KernelSet(water_ctx, schedule)
        for s in (40e-6, 90e-6, 200e-6):
            total = sum(kernels.eval(i, s) for i in range(kernels.n_bags))
            assert 0.0 <= total < 1.0

    def test_onset_sizes(self, water_ctx, water_feed):
        schedule = build_schedule(water_ctx, water_feed, 5, FractionSpan())
        kernels = KernelSet(water_ctx, schedule)
        lowers, uppers = [], []
        for i in range(kernels.n_bags):
            support = kernels.support(i)
            assert len(support) == 1
            lowers.append(support[0][0])
            uppers.append(support[0][1])
        # support widens on both flanks as bags progress; monotonicity of the
        # upper flank is only meaningful below the parabola vertex z/2
        assert all(b <= a for a, b in zip(lowers, lowers[1:]))
        assert all(lo < GEOM.z / 2 for lo in lowers)
        clipped = [min(u, GEOM.z / 2) for u in uppers]
        assert all(b >= a for a, b in zip(clipped, clipped[1:]))


class TestBagMasses:
    def test_zero_for_unreached_sizes(self, water_ctx, water_grid):
        spline = SplineFeed(water_grid, np.ones(water_grid.n_basis))
        schedule = BagSchedule(np.array([0.0, 1.0, 2.0]))
        kernels = KernelSet(water_ctx, schedule)
        assert bag_mass(spline, kernels, 0) == 0.0
        assert bag_mass(spline, kernels, 1) == 0.0

    def test_forty_bag_profile_rises_then_falls(self, water_ctx, water_feed):
        ctx = water_ctx_at(1e-6)
        t95 = elutriation_time(water_feed, ctx, 0.95)
        schedule = build_schedule(ctx, water_feed, 40, UniformFromZero(t95))
        kernels = KernelSet(ctx, schedule)
        masses = bag_masses(water_feed, kernels).masses
        peak = int(np.argmax(masses))
        assert 0 < peak < 39
        assert masses[0] < masses[peak]
        assert masses[-1] < masses[peak]

    def test_global_balance(self, water_ctx, water_feed):
        schedule = build_schedule(water_ctx, water_feed, 5, FractionSpan())
        kernels = KernelSet(water_ctx, schedule)
        total = bag_masses(water_feed, kernels).total
        expected = (mass_elutriated(water_feed, water_ctx, float(schedule.times[-1]))
                    - mass_elutriated(water_feed, water_ctx, float(schedule.times[0])))
        assert total == pytest.approx(expected, rel=1e-8)
        # fraction-span from 5% to 95% collects 90% of the feed
        assert total == pytest.approx(0.9 * water_feed.total_mass, rel=1e-6)


class TestMassBalance:
    def test_initial_state(self, water_ctx, water_feed):
        assert mass_in_bed(water_feed, water_ctx, 0.0) == \
            pytest.approx(water_feed.total_mass, rel=1e-10)
        assert mass_elutriated(water_feed, water_ctx, 0.0) == 0.0

    def test_everything_elutriates(self, water_ctx, water_feed):
        t99 = elutriation_time(water_feed, water_ctx, 0.999)
        assert mass_elutriated(water_feed, water_ctx, t99) == \
            pytest.approx(0.999 * water_feed.total_mass, rel=1e-9)

    def test_conservation_on_time_grid(self, water_ctx, water_feed):
        t95 = elutriation_time(water_feed, water_ctx, 0.95)
        for t in np.linspace(0.2 * t95, t95, 5):
            m_bed = mass_in_bed(water_feed, water_ctx, float(t))
            m_out = mass_elutriated(water_feed, water_ctx, float(t))
            m_chan = mass_in_channels(water_feed, water_ctx, float(t))
            assert m_chan >= 0.0
            assert m_bed + m_chan + m_out == \
                pytest.approx(water_feed.total_mass, rel=1e-8)


class TestElutriationTime:
    def test_monotone_fractions(self, water_ctx, water_feed):
        t5 = elutriation_time(water_feed, water_ctx, 0.05)
        t95 = elutriation_time(water_feed, water_ctx, 0.95)
        assert t95 > t5
        assert mass_elutriated(water_feed, water_ctx, t5) == \
            pytest.approx(0.05 * water_feed.total_mass, rel=1e-8)

    def test_no_bracket_within_horizon(self, water_ctx, water_feed):
        with pytest.raises(NoBracket):
            elutriation_time(water_feed, water_ctx, 0.95, horizon=10.0)


class TestBuildSchedule:
    def test_fraction_span(self, water_ctx, water_feed):
        schedule = build_schedule(water_ctx, water_feed, 5, FractionSpan(0.05, 0.95))
        assert schedule.times.size == 6
        assert schedule.times[0] == pytest.approx(
            elutriation_time(water_feed, water_ctx, 0.05), rel=1e-9)
        assert schedule.times[-1] == pytest.approx(
            elutriation_time(water_feed, water_ctx, 0.95), rel=1e-9)
        assert np.all(np.diff(schedule.times) > 0)

    def test_uniform_from_zero(self, water_ctx, water_feed):
        schedule = build_schedule(water_ctx, water_feed, 40,
                                  UniformFromZero(12.7 * 3600.0))
        assert schedule.times.size == 41
        assert schedule.times[0] == 0.0
        assert schedule.times[-1] == pytest.approx(12.7 * 3600.0)
        assert np.allclose(np.diff(schedule.times), 12.7 * 3600.0 / 40)

    def test_explicit(self, water_ctx, water_feed):
        schedule = build_schedule(water_ctx, water_feed, 2,
                                  ExplicitTimes((0.0, 10.0, 30.0)))
        assert np.allclose(schedule.times, [0.0, 10.0, 30.0])


class TestNoise:
    @pytest.fixture()
    def bags(self, water_ctx, water_feed):
        schedule = BagSchedule(np.linspace(5e3, 3e4, 6))
        kernels = KernelSet(water_ctx, schedule)
        return bag_masses(water_feed, kernels)

    def test_sigma_zero_is_identity(self, bags):
        assert add_noise(bags, 0.0, 42) is bags

    def test_clipped_non_negative(self, bags):
        noisy = add_noise(bags, 10.0, 42)
        assert np.all(noisy.masses >= 0.0)

    def test_deterministic(self, bags):
        a = add_noise(bags, 0.02, (7, 3))
        b = add_noise(bags, 0.02, (7, 3))
        assert np.array_equal(a.masses, b.masses)

    def test_bag_draws_independent_of_order(self, bags):
        # per-bag generators: truncating the schedule must not change draws
        full = add_noise(bags, 0.05, (1, 2))
        short = forward.BagMasses(
            BagSchedule(bags.schedule.times[:4]), bags.masses[:3])
        partial = add_noise(short, 0.05, (1, 2))
        assert np.allclose(full.masses[:3], partial.masses)

    def test_negative_sigma_rejected(self, bags):
        with pytest.raises(ValueError):
            add_noise(bags, -0.1, 0)
