import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from elutrikit import feed as feed_mod
from elutrikit.feed import (SizeGrid, AnalyticFeed, SplineFeed, RosinRammlerParams,
                            InvalidGrid, DegenerateReference, build_geometric_grid,
                            default_grid, eval_basis, basis_masses, gram_matrix,
                            rosin_rammler_density, rosin_rammler_feed,
                            project_to_splines, relative_error, l2_distance)

Z = 1.8e-3
RR = RosinRammlerParams(mode_parameter=0.25, z_ref=Z)


class TestGeometricGrid:
    def test_powers_of_two(self):
        grid = build_geometric_grid(1e-5, 2.0, 3)
        assert np.allclose(grid.knots, [1e-5, 2e-5, 4e-5, 8e-5])

    def test_ratio_constant(self):
        grid = build_geometric_grid(21.2e-6, 1.1369, 20)
        ratios = grid.knots[1:] / grid.knots[:-1]
        assert np.allclose(ratios, 1.1369, rtol=1e-12)

    def test_reference_sizing_parameters(self):
        grid = default_grid(RR, Z)
        assert grid.knots[0] == pytest.approx(21.2e-6)
        assert grid.knots[1] / grid.knots[0] == pytest.approx(1.1369, rel=1e-12)
        # smallest count whose top knot leaves under 1e-4 of the feed mass
        above_top = math.exp(-RR.decay * grid.knots[-1] ** 2)
        above_prev = math.exp(-RR.decay * grid.knots[-2] ** 2)
        assert above_top < 1e-4 <= above_prev

    def test_rejects_top_knot_at_spacing(self):
        with pytest.raises(InvalidGrid):
            build_geometric_grid(1e-3, 1.5, 3, max_radius=Z)

    def test_rejects_bad_knots(self):
        with pytest.raises(InvalidGrid):
            SizeGrid(np.array([1e-5, 1e-5, 2e-5]))
        with pytest.raises(InvalidGrid):
            SizeGrid(np.array([0.0, 1e-5, 2e-5]))


class TestBasis:
    def test_order0_half_open(self):
        grid = build_geometric_grid(1e-5, 2.0, 3, order=0)
        assert eval_basis(grid, 1, grid.knots[1]) == 1.0
        assert eval_basis(grid, 1, grid.knots[2]) == 0.0
        assert eval_basis(grid, 2, grid.knots[2]) == 1.0

    def test_order1_kronecker_at_knots(self):
        grid = build_geometric_grid(1e-5, 1.5, 6, order=1)
        for j in range(grid.n_basis):
            for m, knot in enumerate(grid.knots):
                expected = 1.0 if m == j else 0.0
                assert eval_basis(grid, j, knot) == pytest.approx(expected)

    def test_order1_partition_of_unity_interior(self):
        grid = build_geometric_grid(1e-5, 1.4, 8, order=1)
        s_values = np.linspace(grid.knots[1], grid.knots[-2], 57)
        total = sum(eval_basis(grid, j, s_values) for j in range(grid.n_basis))
        assert np.allclose(total, 1.0, atol=1e-12)

    def test_nonnegative(self):
        for order in (0, 1):
            grid = build_geometric_grid(1e-5, 1.6, 7, order=order)
            s_values = np.linspace(0.0, 1.1 * grid.knots[-1], 301)
            for j in range(grid.n_basis):
                assert np.all(eval_basis(grid, j, s_values) >= 0.0)


class TestBasisMasses:
    def test_order0_cell_widths(self):
        grid = SizeGrid(np.array([1.0, 2.0, 4.0, 8.0]) * 1e-4, order=0)
        assert np.allclose(basis_masses(grid), [1e-4, 2e-4, 4e-4])

    def test_order1_uniform_interior(self):
        h = 2e-5
        grid = SizeGrid(1e-5 + h * np.arange(7), order=1)
        c = basis_masses(grid)
        assert np.allclose(c[1:], h)
        assert c[0] == pytest.approx(h / 2)

    def test_order1_interior_support_halved(self):
        grid = build_geometric_grid(1e-5, 1.3, 9, order=1)
        c = basis_masses(grid)
        for j in range(1, grid.n_basis):
            assert c[j] == pytest.approx((grid.knots[j + 1] - grid.knots[j - 1]) / 2)

    def test_mass_identity_for_constant_density(self):
        grid = build_geometric_grid(1e-5, 1.5, 6, order=0)
        lo, hi = grid.span
        const = AnalyticFeed(density=lambda s: np.full_like(np.asarray(s, float), 3.0),
                             total_mass=3.0 * (hi - lo), support_top=hi)
        proj = project_to_splines(const, grid)
        assert basis_masses(grid) @ proj.coefficients == \
            pytest.approx(const.total_mass, rel=1e-12)


class TestRosinRammler:
    def test_normalisation(self):
        top = feed_mod.rosin_rammler_tail_radius(RR, 1e-14)
        val, _ = quad(lambda s: rosin_rammler_density(RR, s), 0.0, top,
                      epsabs=1e-13, epsrel=1e-12, limit=200)
        assert val == pytest.approx(1.0, abs=1e-10)

    def test_zero_at_origin(self):
        assert rosin_rammler_density(RR, 0.0) == 0.0

    def test_mode_location(self):
        # stationary point of s * exp(-decay * s^2) at 1/sqrt(2*decay)
        analytic = 1.0 / math.sqrt(2.0 * RR.decay)
        assert analytic == pytest.approx(0.0001254094913913623, rel=1e-12)
        result = minimize_scalar(lambda s: -rosin_rammler_density(RR, s),
                                 bounds=(1e-6, 1e-3), method="bounded",
                                 options={"xatol": 1e-12})
        assert result.x == pytest.approx(analytic, rel=1e-6)

    def test_tail_radius(self):
        s = feed_mod.rosin_rammler_tail_radius(RR, 1e-4)
        assert math.exp(-RR.decay * s * s) == pytest.approx(1e-4, rel=1e-12)


class TestProjection:
    def test_constant_density_order0(self):
        grid = build_geometric_grid(2e-5, 1.4, 6, order=0)
        lo, hi = grid.span
        const = AnalyticFeed(density=lambda s: np.full_like(np.asarray(s, float), 7.0),
                             total_mass=7.0 * (hi - lo), support_top=hi)
        proj = project_to_splines(const, grid)
        assert np.allclose(proj.coefficients, 7.0, rtol=1e-12)

    def test_order0_matches_direct_quadrature(self, water_grid, water_feed):
        proj = project_to_splines(water_feed, water_grid)
        k = water_grid.knots
        for j in (0, 8, 20):
            val, _ = quad(water_feed.density, k[j], k[j + 1], epsabs=1e-15, limit=200)
            assert proj.coefficients[j] == pytest.approx(val / (k[j + 1] - k[j]), abs=1e-9)

    def test_residual_decreases_with_refinement(self):
        coarse = build_geometric_grid(21.2e-6, 1.1369 ** 2, 13, order=0)
        fine = build_geometric_grid(21.2e-6, 1.1369, 26, order=0)
        feed = rosin_rammler_feed(RR)
        res_coarse = l2_distance(project_to_splines(feed, coarse), feed)
        res_fine = l2_distance(project_to_splines(feed, fine), feed)
        assert res_fine < res_coarse

    @pytest.mark.parametrize("order", [0, 1])
    def test_idempotent_on_own_grid(self, order):
        grid = build_geometric_grid(21.2e-6, 1.2, 10, order=order)
        rng = np.random.default_rng(5)
        spline = SplineFeed(grid, rng.uniform(0.5, 2.0, grid.n_basis))
        again = project_to_splines(spline, grid)
        assert np.allclose(again.coefficients, spline.coefficients,
                           rtol=1e-12, atol=1e-12 * spline.coefficients.max())

    def test_order1_projection_tracks_smooth_feed(self):
        grid = default_grid(RR, Z, order=1)
        feed = rosin_rammler_feed(RR)
        err = relative_error(project_to_splines(feed, grid), feed)
        # the continuous-feed claim: the linear-spline projection is very close
        assert relative_error(project_to_splines(feed, grid),
                              project_to_splines(feed, grid)) == 0.0
        assert l2_distance(project_to_splines(feed, grid), feed) < \
            l2_distance(project_to_splines(feed, default_grid(RR, Z, order=0)), feed)


class TestRelativeError:
    def test_identical_is_zero(self, water_grid, water_feed):
        proj = project_to_splines(water_feed, water_grid)
        assert relative_error(proj, proj) == 0.0

    def test_homogeneous_in_difference(self, water_grid, water_feed):
        proj = project_to_splines(water_feed, water_grid)
        delta = np.zeros(water_grid.n_basis)
        delta[5] = 100.0
        one = relative_error(SplineFeed(water_grid, proj.coefficients + delta), proj)
        two = relative_error(SplineFeed(water_grid, proj.coefficients + 2 * delta), proj)
        assert two == pytest.approx(2.0 * one, rel=1e-12)

    def test_degenerate_reference(self, water_grid):
        zero = SplineFeed(water_grid, np.zeros(water_grid.n_basis))
        with pytest.raises(DegenerateReference):
            relative_error(zero, zero)

    def test_analytic_reference_is_projected_first(self, water_grid, water_feed):
        proj = project_to_splines(water_feed, water_grid)
        assert relative_error(proj, water_feed) == pytest.approx(0.0, abs=1e-8)


class TestSplineFeedDensity:
    def test_order0_lookup(self):
        grid = SizeGrid(np.array([1.0, 2.0, 3.0, 4.0]) * 1e-4, order=0)
        spline = SplineFeed(grid, np.array([5.0, 7.0, 9.0]))
        assert spline.density(1.5e-4) == 5.0
        assert spline.density(2.0e-4) == 7.0
        assert spline.density(4.0e-4) == 0.0  # half-open at the top knot
        assert spline.density(9e-5) == 0.0

    def test_order1_interpolation(self):
        grid = SizeGrid(np.array([1.0, 2.0, 3.0]) * 1e-4, order=1)
        spline = SplineFeed(grid, np.array([4.0, 8.0]))
        assert spline.density(1e-4) == pytest.approx(4.0)
        assert spline.density(1.5e-4) == pytest.approx(6.0)
        assert spline.density(2e-4) == pytest.approx(8.0)
        assert spline.density(3e-4) == pytest.approx(0.0)

    def test_gram_matrix_against_quadrature(self):
        grid = build_geometric_grid(1e-5, 1.5, 5, order=1)
        g = gram_matrix(grid)
        for j in range(grid.n_basis):
            for m in range(grid.n_basis):
                val, _ = quad(lambda s: eval_basis(grid, j, s) * eval_basis(grid, m, s),
                              grid.knots[0], grid.knots[-1],
                              points=list(grid.knots[1:-1]), epsabs=1e-18, limit=200)
                assert g[j, m] == pytest.approx(val, abs=1e-18 + 1e-10 * abs(val))
