"""Deconvolution of bag masses back to a feed size distribution.

The measured bag masses m_i satisfy m_i = integral of M(s) L_i(s) ds, so a
spline expansion of M turns the data into the linear system B a = m with
B_ij the kernel-basis inner products.  The system is underdetermined and
ill-posed; it is solved as a smoothness-regularised non-negative least
squares problem with a total-mass equality and the largest-size coefficient
pinned to zero (the feed is known to vanish at its top scale).

Radii are nondimensionalised by the channel spacing before the matrices are
assembled: the basis lives on knots s/z, so coefficients, the equality
weights and the data matrix are all O(1)-comparable and the regularisation
weight is a dimensionless knob rather than a unit-dependent one.
Reconstructions are converted back to SI densities before they are returned.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from . import qp
from .feed import (SizeGrid, SplineFeed, eval_basis, basis_masses, gram_matrix,
                   project_to_splines, relative_error, l2_distance, _quad_points)
from .forward import KernelSet, BagMasses, add_noise


class EmptyGrid(ValueError):
    """An empty regularisation-parameter grid was supplied."""


DEFAULT_ALPHA_GRID = np.logspace(-9.0, -2.0, 40)


def assemble_cross_grammian(kernels: KernelSet, grid: SizeGrid) -> np.ndarray:
    """Matrix of kernel-basis inner products B_ij = integral L_i phi_j ds.

    Entries are non-negative; rows vanish for bags collected before any grid
    size reaches the channel outlet.
    """
    k = grid.knots
    n = grid.n_basis
    p = kernels.n_bags
    out = np.zeros((p, n))
    for i in range(p):
        support = kernels.support(i)
        if not support:
            continue
        kinks = kernels.kink_sizes(i)
        for j in range(n):
            pieces = [(k[j], k[j + 1])]
            if grid.order == 1 and j > 0:
                pieces.insert(0, (k[j - 1], k[j]))
            total = 0.0
            for lo, hi in pieces:
                for s_lo, s_hi in support:
                    a, b = max(lo, s_lo), min(hi, s_hi)
                    if b <= a:
                        continue
                    if grid.order == 0:
                        val, _ = quad(lambda s: kernels.eval(i, s), a, b,
                                      points=_quad_points(kinks, a, b),
                                      epsabs=1e-15, epsrel=1e-11, limit=200)
                    else:
                        val, _ = quad(lambda s: kernels.eval(i, s) * eval_basis(grid, j, s),
                                      a, b, points=_quad_points(kinks, a, b),
                                      epsabs=1e-15, epsrel=1e-11, limit=200)
                    total += val
            out[i, j] = max(total, 0.0)
    return out


@dataclass(frozen=True, eq=False)
class DeconvolutionProblem:
    """Assembled inversion problem plus the metadata needed to evaluate it."""

    grid: SizeGrid
    kernel_sets: tuple
    data: tuple
    alpha: float
    quadratic: qp.QuadraticProblem
    reference: object | None = None
    reference_projection: SplineFeed | None = None

    @property
    def length_scale(self) -> float:
        """Radius scale used to nondimensionalise the assembled matrices."""
        return self.kernel_sets[0].ctx.geom.z

    def with_alpha(self, alpha: float) -> "DeconvolutionProblem":
        return replace(self, alpha=alpha, quadratic=self.quadratic.with_alpha(alpha))

    def with_data_vector(self, m_e: np.ndarray) -> "DeconvolutionProblem":
        return replace(self, quadratic=self.quadratic.with_data(m_e))


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Recovered feed plus the diagnostics of the solve that produced it."""

    spline: SplineFeed
    alpha: float
    relative_error_pct: float | None
    residual_norm: float
    solution: qp.QpSolution


def build_problem(grid: SizeGrid, kernel_sets, data, alpha: float,
                  reference=None, mass_value: float | None = None,
                  pin_last: bool = True) -> DeconvolutionProblem:
    """Assemble the deconvolution problem for one or more runs on one grid.

    The equality target defaults to the mass representable on the grid: the
    reference feed is projected onto the basis and the projection's mass is
    used.  Passing ``mass_value`` overrides this (e.g. with the nominal
    sample mass when no reference is available).
    """
    kernel_sets = tuple(kernel_sets)
    data = tuple(data)
    if not kernel_sets or len(kernel_sets) != len(data):
        raise ValueError("need matching kernel sets and bag-mass sets")
    for ks, bags in zip(kernel_sets, data):
        if ks.n_bags != bags.schedule.n_bags:
            raise ValueError("bag masses do not match their kernel set")

    projection = None
    if reference is not None:
        projection = reference if (isinstance(reference, SplineFeed)
                                   and reference.grid.same_layout(grid)) \
            else project_to_splines(reference, grid)
    if mass_value is None:
        if projection is None:
            raise ValueError("need a reference feed or an explicit mass_value")
        mass_value = float(basis_masses(grid) @ projection.coefficients)

    scale = kernel_sets[0].ctx.geom.z
    b_matrix = np.vstack([assemble_cross_grammian(ks, grid) for ks in kernel_sets])
    m_vec = np.concatenate([bags.masses for bags in data])
    n = grid.n_basis
    quadratic = qp.QuadraticProblem(
        B=b_matrix / scale,
        m_e=m_vec,
        Q=qp.build_regularizer(n),
        alpha=alpha,
        c=basis_masses(grid) / scale,
        m_total=mass_value,
        pinned_zero=(n - 1,) if pin_last else (),
    )
    return DeconvolutionProblem(grid=grid, kernel_sets=kernel_sets, data=data,
                                alpha=alpha, quadratic=quadratic,
                                reference=reference,
                                reference_projection=projection)


def combine_deconvolutions(p1: DeconvolutionProblem,
                           p2: DeconvolutionProblem) -> DeconvolutionProblem:
    """Stack two single-fluid problems that share a grid into one."""
    if not p1.grid.same_layout(p2.grid):
        raise qp.GridMismatch("deconvolution problems use different grids")
    combined = qp.combine_problems(p1.quadratic, p2.quadratic)
    return DeconvolutionProblem(
        grid=p1.grid,
        kernel_sets=p1.kernel_sets + p2.kernel_sets,
        data=p1.data + p2.data,
        alpha=p1.alpha,
        quadratic=combined,
        reference=p1.reference,
        reference_projection=p1.reference_projection,
    )


def deconvolve(problem: DeconvolutionProblem) -> Reconstruction:
    """Solve the assembled problem and wrap the result as a feed."""
    sol = qp.solve(problem.quadratic)
    coeff_si = sol.a / problem.length_scale
    spline = SplineFeed(problem.grid, coeff_si)
    rel = None
    if problem.reference_projection is not None:
        rel = relative_error(spline, problem.reference_projection)
    residual = float(np.linalg.norm(problem.quadratic.B @ sol.a - problem.quadratic.m_e))
    return Reconstruction(spline=spline, alpha=problem.alpha,
                          relative_error_pct=rel, residual_norm=residual,
                          solution=sol)


def sweep_alpha(problem: DeconvolutionProblem, reference=None,
                alpha_grid: Sequence[float] | None = None):
    """Pick the regularisation weight with the lowest relative error.

    Oracle selection: requires a known reference feed.  Ties go to the
    smaller alpha.  Returns (best_alpha, best_reconstruction).
    """
    if alpha_grid is None:
        alpha_grid = DEFAULT_ALPHA_GRID
    alphas = np.sort(np.unique(np.asarray(alpha_grid, dtype=float)))
    if alphas.size == 0:
        raise EmptyGrid("alpha grid is empty")
    if reference is not None:
        projection = reference if (isinstance(reference, SplineFeed)
                                   and reference.grid.same_layout(problem.grid)) \
            else project_to_splines(reference, problem.grid)
        problem = replace(problem, reference=reference, reference_projection=projection)
    if problem.reference_projection is None:
        raise ValueError("sweep needs a reference feed to score reconstructions")
    best_alpha = None
    best: Reconstruction | None = None
    for alpha in alphas:
        recon = deconvolve(problem.with_alpha(float(alpha)))
        if best is None or recon.relative_error_pct < best.relative_error_pct:
            best = recon
            best_alpha = float(alpha)
    return best_alpha, best


@dataclass(frozen=True)
class NoiseStudyRow:
    """Error statistics of repeated noisy deconvolutions at one noise level.

    ``spread`` is sqrt(sum((E - mean)^2)) / R, a deliberately unconventional
    normalisation kept for comparability; ``sample_std`` is the usual
    sample standard deviation.
    """

    sigma: float
    mean_error: float
    spread: float
    sample_std: float


def _noisy_data_vector(problem: DeconvolutionProblem, sigma: float,
                       seed: int, replicate: int) -> np.ndarray:
    blocks = [add_noise(bags, sigma, (seed, replicate, b)).masses
              for b, bags in enumerate(problem.data)]
    return np.concatenate(blocks)


def noise_study(problem: DeconvolutionProblem, sigmas: Sequence[float],
                replicates: int, seed: int, workers: int = 1) -> list[NoiseStudyRow]:
    """Mean and spread of the reconstruction error under measurement noise.

    Each replicate perturbs the bag masses with its own derived seed, solves
    at the problem's alpha, and scores the absolute L2 distance to the true
    reference feed.  Results are deterministic for a fixed seed and do not
    depend on the worker count.
    """
    if replicates < 2:
        raise ValueError("need at least two replicates")
    if problem.reference is None:
        raise ValueError("noise study needs the true reference feed")
    reference = problem.reference
    upper = max(reference.support_top, problem.grid.knots[-1])

    def one(sigma: float, r: int) -> float:
        data = _noisy_data_vector(problem, sigma, seed, r)
        recon = deconvolve(problem.with_data_vector(data))
        return l2_distance(recon.spline, reference, upper)

    rows = []
    for sigma in sigmas:
        if sigma < 0.0:
            raise ValueError("noise levels must be non-negative")
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                errors = np.array(list(pool.map(lambda r: one(sigma, r),
                                                range(replicates))))
        else:
            errors = np.array([one(sigma, r) for r in range(replicates)])
        mean = float(errors.mean())
        ss = float(np.sum((errors - mean) ** 2))
        rows.append(NoiseStudyRow(
            sigma=float(sigma),
            mean_error=mean,
            spread=math.sqrt(ss) / replicates,
            sample_std=math.sqrt(ss / (replicates - 1)),
        ))
    return rows
