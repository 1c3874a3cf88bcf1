"""Dense active-set solver for the regularised, constrained least-squares problem

    minimise    ||B a - m_e||^2 + alpha ||Q a||^2
    subject to  c . a = m_total,   a_j >= 0,   a_j = 0 for pinned j.

The equality constraint is eliminated with a Householder null-space basis and
the bounds are handled by a primal active-set loop.  Every subproblem is a
direct least-squares solve on the stacked matrix [B; sqrt(alpha) Q], so the
returned point carries a machine-precision KKT certificate rather than an
iterative-solver tolerance.  Tie-breaking is by lowest index, which makes the
solve deterministic.

Problems here are small (tens of unknowns); there is no attempt at sparsity
or warm starting.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

ILL_CONDITION_LIMIT = 1e12


class Infeasible(ValueError):
    """No point satisfies the equality constraint together with the bounds."""


class IllPosed(ValueError):
    """alpha = 0 with a data matrix that is singular on the feasible subspace."""


class MaxIterations(RuntimeError):
    """Active-set loop exceeded its iteration bound; indicates a bug."""


class GridMismatch(ValueError):
    """Problems to combine do not share the same discretisation."""


def build_regularizer(n: int) -> np.ndarray:
    """Upper-bidiagonal difference operator: 1 on the diagonal, -1 above it.

    ||Q a||^2 = sum_j (a_j - a_{j+1})^2 + a_n^2, which penalises jumps
    between neighbouring coefficients.
    """
    if n < 1:
        raise ValueError("need at least one unknown")
    return np.eye(n) - np.eye(n, k=1)


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    """Problem data; immutable so solves can share instances freely.

    ``pinned_zero`` holds 0-based indices forced to zero (typically the last
    coefficient).
    """

    B: np.ndarray
    m_e: np.ndarray
    Q: np.ndarray
    alpha: float
    c: np.ndarray
    m_total: float
    pinned_zero: tuple = ()

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        m_e = np.asarray(self.m_e, dtype=float).ravel()
        Q = np.asarray(self.Q, dtype=float)
        c = np.asarray(self.c, dtype=float).ravel()
        n = B.shape[1]
        if m_e.shape != (B.shape[0],):
            raise ValueError("data vector length must match the row count of B")
        if Q.shape != (n, n):
            raise ValueError("regulariser must be square with the column count of B")
        if c.shape != (n,):
            raise ValueError("constraint vector length must match the column count of B")
        if np.any(c <= 0.0):
            raise ValueError("equality weights must be positive")
        if self.alpha < 0.0:
            raise ValueError("regularisation weight must be non-negative")
        if self.m_total < 0.0:
            raise ValueError("target mass must be non-negative")
        pins = tuple(sorted(set(int(j) for j in self.pinned_zero)))
        if pins and (pins[0] < 0 or pins[-1] >= n):
            raise ValueError("pinned index out of range")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "m_e", m_e)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "pinned_zero", pins)

    @property
    def n_unknowns(self) -> int:
        return self.B.shape[1]

    def objective(self, a: np.ndarray) -> float:
        r = self.B @ a - self.m_e
        qa = self.Q @ a
        return float(r @ r + self.alpha * (qa @ qa))

    def gradient(self, a: np.ndarray) -> np.ndarray:
        return 2.0 * (self.B.T @ (self.B @ a - self.m_e)
                      + self.alpha * (self.Q.T @ (self.Q @ a)))

    def with_alpha(self, alpha: float) -> "QuadraticProblem":
        return replace(self, alpha=alpha)

    def with_data(self, m_e: np.ndarray) -> "QuadraticProblem":
        return replace(self, m_e=np.asarray(m_e, dtype=float))


@dataclass(frozen=True, eq=False)
class QpSolution:
    """Certified solution: point, objective, KKT residual, active bounds."""

    a: np.ndarray
    objective: float
    kkt_residual: float
    active_set: tuple
    equality_multiplier: float
    bound_multipliers: np.ndarray
    iterations: int


def _nullspace_of_row(row: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the null space of a single nonzero row vector."""
    n = row.size
    v = row.astype(float).copy()
    v[0] += math.copysign(np.linalg.norm(row), row[0])
    house = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return house[:, 1:]


def _warn_if_ill_conditioned(singular_values: np.ndarray) -> None:
    if singular_values.size == 0:
        return
    smax = singular_values[0]
    smin = singular_values[-1]
    if smin <= 0.0 or smax / smin > ILL_CONDITION_LIMIT:
        warnings.warn("least-squares subproblem condition number exceeds 1e12",
                      RuntimeWarning, stacklevel=3)


def _equality_least_squares(A, d, c, m, free):
    """min ||A_F x - d|| over x supported on `free` with c_F . x = m."""
    x = np.zeros(c.size)
    cf = c[free]
    if len(free) == 1:
        x[free[0]] = m / cf[0]
        return x
    af = A[:, free]
    x0 = cf * (m / (cf @ cf))
    zbasis = _nullspace_of_row(cf)
    y, _, _, sv = np.linalg.lstsq(af @ zbasis, d - af @ x0, rcond=None)
    _warn_if_ill_conditioned(sv)
    x[free] = x0 + zbasis @ y
    return x


def _check_well_posed(problem: QuadraticProblem, free0) -> None:
    if len(free0) <= 1:
        return
    zbasis = _nullspace_of_row(problem.c[free0])
    reduced = problem.B[:, free0] @ zbasis
    sv = np.linalg.svd(reduced, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * max(reduced.shape) * np.finfo(float).eps)) if sv.size else 0
    if rank < zbasis.shape[1]:
        raise IllPosed(
            "alpha = 0 requires the data matrix to be nonsingular on the "
            "feasible subspace; supply alpha > 0 for underdetermined data"
        )


def _kkt_report(problem, a, free, working):
    g = problem.gradient(a)
    c = problem.c
    gscale = max(np.abs(g).max(initial=0.0),
                 2.0 * np.abs(problem.B.T @ problem.m_e).max(initial=0.0), 1e-300)
    if free:
        cf = c[free]
        nu = float(cf @ g[free]) / float(cf @ cf)
    else:
        nu = 0.0
    mu = g - nu * c
    bound_mu = np.zeros_like(a)
    inactive = np.ones(a.size, dtype=bool)
    for j in working:
        bound_mu[j] = mu[j]
        inactive[j] = False
    for j in problem.pinned_zero:
        bound_mu[j] = mu[j]
        inactive[j] = False
    ascale = max(np.abs(a).max(initial=0.0), 1e-300)
    stationarity = (np.abs(mu[inactive]).max(initial=0.0)) / gscale
    nonpinned = [j for j in working if j not in problem.pinned_zero]
    dual = max(0.0, -min((mu[j] for j in nonpinned), default=0.0)) / gscale
    comp = np.abs(a * mu).max(initial=0.0) / (gscale * ascale)
    eq = abs(float(c @ a) - problem.m_total) / max(abs(problem.m_total), 1e-300)
    lower = max(0.0, -a.min(initial=0.0)) / ascale
    pin = max((abs(a[j]) for j in problem.pinned_zero), default=0.0) / ascale
    residual = max(stationarity, dual, comp, eq, lower, pin)
    return nu, bound_mu, residual


def solve(problem: QuadraticProblem, max_iterations: int | None = None) -> QpSolution:
    """Global minimiser of the strictly convex problem, KKT-certified.

    Raises :class:`Infeasible` when the equality and bounds are incompatible,
    :class:`IllPosed` for alpha = 0 on underdetermined data, and
    :class:`MaxIterations` if the active-set loop fails to terminate within
    the bound (3 iterations per unknown by default).
    """
    n = problem.n_unknowns
    pinned = set(problem.pinned_zero)
    free0 = [j for j in range(n) if j not in pinned]
    if problem.m_total > 0.0 and not free0:
        raise Infeasible("every coefficient is pinned to zero but the target mass is positive")

    if problem.alpha > 0.0:
        stacked = np.vstack([problem.B, np.sqrt(problem.alpha) * problem.Q])
        d = np.concatenate([problem.m_e, np.zeros(n)])
    else:
        _check_well_posed(problem, free0)
        stacked = problem.B
        d = problem.m_e

    a = np.zeros(n)
    working: set[int] = set()
    if problem.m_total > 0.0:
        j0 = free0[0]
        a[j0] = problem.m_total / problem.c[j0]
        working = set(free0) - {j0}

    limit = max_iterations if max_iterations is not None else 3 * n
    iterations = 0
    while iterations < limit:
        iterations += 1
        free = [j for j in range(n) if j not in pinned and j not in working]
        target = _equality_least_squares(stacked, d, problem.c, problem.m_total, free) \
            if free else np.zeros(n)
        step = target - a
        at_target = np.abs(step).max(initial=0.0) <= 1e-13 * (1.0 + np.abs(a).max(initial=0.0))

        if not at_target:
            tau = 1.0
            blocker = None
            for j in free:
                if step[j] < 0.0 and a[j] + step[j] < 0.0:
                    ratio = a[j] / -step[j]
                    if ratio < tau - 1e-12 * max(1.0, tau):
                        tau = ratio
                        blocker = j
            a = a + tau * step
            for j in working | pinned:
                a[j] = 0.0
            np.maximum(a, 0.0, out=a)
            if blocker is not None:
                working.add(blocker)
                a[blocker] = 0.0
                continue
            # full step taken; fall through to the optimality check

        nu, bound_mu, residual = _kkt_report(problem, a, free, working)
        g = problem.gradient(a)
        gscale = max(np.abs(g).max(initial=0.0), 1e-300)
        drop = None
        worst = -1e-9 * gscale
        for j in sorted(working):
            if j in pinned:
                continue
            muj = g[j] - nu * problem.c[j]
            if muj < worst:
                worst = muj
                drop = j
        if drop is None:
            return QpSolution(
                a=a,
                objective=problem.objective(a),
                kkt_residual=residual,
                active_set=tuple(sorted(working | pinned)),
                equality_multiplier=nu,
                bound_multipliers=bound_mu,
                iterations=iterations,
            )
        working.remove(drop)
    raise MaxIterations(f"active-set loop exceeded {limit} iterations")


def combine_problems(p1: QuadraticProblem, p2: QuadraticProblem) -> QuadraticProblem:
    """Stack the data of two problems that share a discretisation.

    The combined problem keeps the first problem's alpha; sweeps re-select it.
    """
    if p1.n_unknowns != p2.n_unknowns:
        raise GridMismatch("problems have different coefficient counts")
    if not np.allclose(p1.c, p2.c, rtol=1e-12, atol=0.0):
        raise GridMismatch("problems have different equality weights")
    if not np.array_equal(p1.Q, p2.Q):
        raise GridMismatch("problems have different regularisers")
    if p1.pinned_zero != p2.pinned_zero:
        raise GridMismatch("problems pin different coefficients")
    if not np.isclose(p1.m_total, p2.m_total, rtol=1e-12):
        raise GridMismatch("problems target different total masses")
    return QuadraticProblem(
        B=np.vstack([p1.B, p2.B]),
        m_e=np.concatenate([p1.m_e, p2.m_e]),
        Q=p1.Q,
        alpha=p1.alpha,
        c=p1.c,
        m_total=p1.m_total,
        pinned_zero=p1.pinned_zero,
    )
