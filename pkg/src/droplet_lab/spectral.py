"""Grid eigensolves for the Dirichlet generator of the projected system.

Two discretizations of -L on the ball are provided. Both are symmetric in
the flat inner product:

* ``witten``: S = -β⁻¹Δ + (β/4)|∇U|² - ½ΔU with a 3/5-point stencil.
* ``weighted``: the divergence form with geometric-mean face weights
  e^{-β(U_i+U_j)/2}, symmetrized by the mass e^{-βU}. Off-diagonals are
  the constant -1/(βh²) and the diagonal is (1/βh²)Σ_j e^{-β(U_j-U_i)/2},
  the sum running over lattice neighbours including Dirichlet ghosts.

The weighted form is the default: its ground state can be refined by a
subtraction-free elimination (1D), which keeps exponentially small λ₁
accurate to full relative precision.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .geometry import ReducedSystem, hessian_at_zero, valley_depth
from .potential import PotentialSpec, check_delta, delta_gap, eval_w

DENSE_LIMIT = 2500
RESIDUAL_TOL = 1e-8


class GridTooCoarseError(ValueError):
    def __init__(self, h: float, beta: float, suggested_n: int):
        super().__init__(f"grid spacing h={h:.4g} exceeds beta^(-1/2)/4={beta ** -0.5 / 4:.4g}; "
                         f"use n_points >= {suggested_n}")
        self.suggested_n = suggested_n


class EigensolverError(RuntimeError):
    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = residuals


def _as_system(system, n_particles=None, dim=None):
    if isinstance(system, PotentialSpec):
        return ReducedSystem(system, n_particles, dim)
    return system


@dataclass
class Grid:
    """Cartesian lattice on [-extent, extent]^k with an interior mask."""

    reduced_dim: int
    extent: float
    n_points: int
    mask: np.ndarray = field(repr=False)
    radius: float | None = None

    @classmethod
    def ball(cls, reduced_dim: int, radius: float, n_points: int) -> "Grid":
        """Interior points strictly inside the ball of the given radius."""
        ax = np.linspace(-radius, radius, n_points)
        mesh = np.meshgrid(*([ax] * reduced_dim), indexing="ij")
        r2 = sum(m * m for m in mesh)
        return cls(_check_k(reduced_dim), float(radius), int(n_points), r2 < radius * radius * (1 - 1e-12),
                   float(radius))

    @classmethod
    def box(cls, reduced_dim: int, half_width: float, n_points: int) -> "Grid":
        shape = (n_points,) * reduced_dim
        mask = np.ones(shape, dtype=bool)
        for a in range(reduced_dim):
            idx = [slice(None)] * reduced_dim
            for edge in (0, -1):
                idx[a] = edge
                mask[tuple(idx)] = False
        return cls(_check_k(reduced_dim), float(half_width), int(n_points), mask, None)

    @property
    def h(self) -> float:
        return 2.0 * self.extent / (self.n_points - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.extent, self.extent, self.n_points)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.reduced_dim

    @property
    def n_interior(self) -> int:
        return int(self.mask.sum())

    @property
    def points(self) -> np.ndarray:
        """Interior lattice points, shape (M, k), in C order."""
        mesh = np.meshgrid(*([self.axis] * self.reduced_dim), indexing="ij")
        return np.stack([m[self.mask] for m in mesh], axis=-1)

    def to_full(self, values, fill=0.0) -> np.ndarray:
        out = np.full(self.mask.shape, fill, dtype=float)
        out[self.mask] = values
        return out

    def check_resolution(self, beta: float) -> None:
        if self.h > beta ** -0.5 / 4:
            n = int(math.ceil(2 * self.extent * 4 * math.sqrt(beta))) + 2
            raise GridTooCoarseError(self.h, beta, n)


def _check_k(k):
    if k not in (1, 2):
        raise ValueError(f"grid eigensolves need reduced dimension 1 or 2, got {k}")
    return k


def _neighbours(grid: Grid):
    """Yield (interior index, neighbour flat index in full lattice, neighbour coords) per axis/direction."""
    shape = grid.mask.shape
    interior = np.argwhere(grid.mask)
    for a in range(grid.reduced_dim):
        for step in (-1, 1):
            nb = interior.copy()
            nb[:, a] += step
            yield nb


def _laplacian_coupling(grid: Grid):
    """Interior-to-interior neighbour pairs (i, j) with i < j, and ghost neighbour coordinates."""
    index = -np.ones(grid.mask.shape, dtype=np.int64)
    index[grid.mask] = np.arange(grid.n_interior)
    interior = np.argwhere(grid.mask)
    ax = grid.axis
    rows, cols, ghost_rows, ghost_pts = [], [], [], []
    for nb in _neighbours(grid):
        ok = np.all((nb >= 0) & (nb < grid.n_points), axis=1)
        j = np.full(len(nb), -1, dtype=np.int64)
        j[ok] = index[tuple(nb[ok].T)]
        inner = j >= 0
        i_idx = np.nonzero(inner)[0]
        rows.append(i_idx)
        cols.append(j[inner])
        g = np.nonzero(~inner)[0]
        ghost_rows.append(g)
        ghost_pts.append(ax[np.clip(nb[g], 0, grid.n_points - 1)])
    return (np.concatenate(rows), np.concatenate(cols), np.concatenate(ghost_rows),
            np.concatenate(ghost_pts).reshape(-1, grid.reduced_dim))


def build_witten(system, beta: float, grid: Grid, *, n_particles=None, dim=None) -> sp.csr_matrix:
    """Witten-form Dirichlet operator S_β on the masked interior points."""
    system = _as_system(system, n_particles, dim)
    grid.check_resolution(beta)
    pts = grid.points
    rows, cols, _, _ = _laplacian_coupling(grid)
    h2 = grid.h**2
    g = system.grad(pts)
    V = 0.25 * beta * np.sum(g * g, axis=1) - 0.5 * np.asarray(system.laplacian(pts))
    diag = 2 * grid.reduced_dim / (beta * h2) + V
    off = np.full(len(rows), -1.0 / (beta * h2))
    M = sp.coo_matrix((np.concatenate([off, diag]), (np.concatenate([rows, np.arange(len(pts))]),
                                                       np.concatenate([cols, np.arange(len(pts))]))),
                      shape=(len(pts), len(pts))).tocsr()
    return M


@dataclass
class WeightedOperator:
    """Symmetrized weighted-form operator with the pieces needed for refinement."""

    matrix: sp.csr_matrix
    U: np.ndarray           # energy at interior points
    killing: np.ndarray     # (1/βh²)Σ_ghost e^{-β(U_g - U_i)/2} + extra diagonal terms
    beta: float
    h: float


def build_weighted(system, beta: float, grid: Grid, *, extra_diagonal=None, n_particles=None,
                   dim=None) -> WeightedOperator:
    """Weighted divergence-form operator, symmetrized by the Gibbs mass."""
    system = _as_system(system, n_particles, dim)
    grid.check_resolution(beta)
    pts = grid.points
    U = np.asarray(system.energy(pts), dtype=float)
    rows, cols, ghost_rows, ghost_pts = _laplacian_coupling(grid)
    c = 1.0 / (beta * grid.h**2)
    diag = np.zeros(len(pts))
    np.add.at(diag, rows, c * np.exp(-0.5 * beta * (U[cols] - U[rows])))
    Ug = np.asarray(system.energy(ghost_pts), dtype=float) if len(ghost_rows) else np.zeros(0)
    kill = np.zeros(len(pts))
    np.add.at(kill, ghost_rows, c * np.exp(-0.5 * beta * (Ug - U[ghost_rows])))
    if extra_diagonal is not None:
        kill = kill + extra_diagonal
    diag = diag + kill
    M = sp.coo_matrix((np.concatenate([np.full(len(rows), -c), diag]),
                       (np.concatenate([rows, np.arange(len(pts))]), np.concatenate([cols, np.arange(len(pts))]))),
                      shape=(len(pts), len(pts))).tocsr()
    return WeightedOperator(M, U, kill, beta, grid.h)


def smallest_eigenpairs(matrix, m: int, *, tol: float = RESIDUAL_TOL):
    """The ``m`` smallest eigenpairs of a symmetric positive matrix.

    Dense ``eigh`` below ``DENSE_LIMIT`` unknowns, otherwise shift-invert
    Lanczos about 0 (sparse LU inner solves, seeded start vector). Eigenvectors are unit-norm,
    the first is sign-fixed to positive sum.
    """
    n = matrix.shape[0]
    if m >= n:
        raise ValueError("m must be smaller than the matrix size")
    if n <= DENSE_LIMIT:
        A = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
        vals, vecs = eigh(A, subset_by_index=(0, m - 1))
    else:
        A = sp.csc_matrix(matrix)
        # fixed start vector: ARPACK's default is random, which breaks run-to-run reproducibility
        v0 = np.random.default_rng(0).uniform(0.5, 1.5, n)
        try:
            vals, vecs = eigsh(A, k=m, sigma=0.0, which="LM", tol=1e-13, maxiter=5000, v0=v0)
        except ArpackNoConvergence as exc:
            raise EigensolverError(f"Lanczos did not converge ({len(exc.eigenvalues)} of {m} pairs)") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    res = np.linalg.norm(matrix @ vecs - vecs * vals, axis=0)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.any(res > tol * scale * 10):
        raise EigensolverError(f"eigenpair residuals too large: {res}", res)
    if vecs[:, 0].sum() < 0:
        vecs[:, 0] *= -1
    return vals, vecs


def refine_ground_state_1d(op: WeightedOperator, v0=None, n_iter: int = 40):
    """Ground state of a 1D weighted operator by subtraction-free inverse iteration.

    Works with K = Z S Z, z = e^{-βU/2}: an M-matrix whose off-diagonals
    are -c z_i z_{i+1} and whose row sums are the known killing terms. The
    pivots of its LDLᵀ factorization then obey a recurrence free of
    cancellation, so λ₁ keeps full relative precision however small it is.
    Returns (λ₁, v) with v in the flat (symmetrized) coordinates.
    """
    U, beta = op.U, op.beta
    n = len(U)
    c = 1.0 / (beta * op.h**2)
    shift = U.min()
    z = np.exp(-0.5 * beta * (U - shift))
    m = z * z
    b = c * z[:-1] * z[1:]
    s = op.killing * m
    r = np.empty(n)
    d = np.empty(n)
    r[0] = s[0]
    for i in range(1, n):
        r[i] = s[i] + b[i - 1] * r[i - 1] / (r[i - 1] + b[i - 1])
    d[:-1] = r[:-1] + b
    d[-1] = r[-1]
    ratio = b / d[:-1]

    def solve(rhs):
        y = np.empty(n)
        y[0] = rhs[0]
        for i in range(1, n):
            y[i] = rhs[i] + ratio[i - 1] * y[i - 1]
        x = np.empty(n)
        x[-1] = y[-1] / d[-1]
        for i in range(n - 2, -1, -1):
            x[i] = (y[i] + b[i] * x[i + 1]) / d[i]
        return x

    f = np.ones(n) if v0 is None else np.abs(v0) / z
    lam = np.nan
    for _ in range(n_iter):
        g = solve(m * f)
        new = float(np.dot(f, m * f) / np.dot(f, m * g))
        f = g / np.sqrt(np.dot(g, m * g))
        if abs(new - lam) <= 1e-15 * new:
            lam = new
            break
        lam = new
    v = z * f
    return lam, v / np.linalg.norm(v)


@dataclass
class SpectralResult:
    """Low-lying Dirichlet spectrum on a grid.

    ``e1_grid`` is normalized in L²(p_N) with p_N the Gibbs law restricted to
    the grid interior, and ``qsd_density`` is the Lebesgue density of q_N.
    """

    beta: float
    eigenvalues: np.ndarray
    grid: Grid = field(repr=False)
    vectors: np.ndarray = field(repr=False)   # flat-coordinate eigenvectors, Σ v² h^k = 1
    U: np.ndarray = field(repr=False)
    gibbs: np.ndarray = field(repr=False)     # u_N on the grid, Σ u h^k = 1
    e1_grid: np.ndarray = field(repr=False)
    qsd_density: np.ndarray = field(repr=False)
    discretization: str = "weighted"

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def d1_rate(self) -> float:
        return float(np.log(self.eigenvalues[0]) / self.beta)

    @property
    def points(self) -> np.ndarray:
        return self.grid.points

    def eigenfunction(self, k: int) -> np.ndarray:
        """k-th eigenfunction (0-based) normalized in L²(p_N)."""
        return self.vectors[:, k] / np.sqrt(self.gibbs)

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.grid.cell_volume)

    def droplet_second_moment(self) -> float:
        """(1/N)∫|y|² dq_N, with N inferred as reduced_dim+1 for d=1 unless set."""
        y2 = np.sum(self.points**2, axis=1)
        return self.integrate(y2 * self.qsd_density) / self.n_particles

    n_particles: int = 2


def _gibbs_and_vectors(vectors, U, beta, dv):
    w = np.exp(-beta * (U - U.min()))
    gibbs = w / (w.sum() * dv)
    vecs = vectors / np.sqrt(np.sum(vectors**2, axis=0) * dv)
    return gibbs, vecs


def dirichlet_spectrum(system, beta: float, delta: float, *, n_points: int | None = None, n_eigs: int = 2,
                       discretization: str = "weighted", refine: bool = True, n_particles=None,
                       dim=None) -> SpectralResult:
    """Assemble and solve the Dirichlet problem on the ball of radius √N δ."""
    system = _as_system(system, n_particles, dim)
    if isinstance(system, ReducedSystem):
        check_delta(system.potential, delta)
    k = _check_k(system.reduced_dim)
    if n_points is None:
        n_points = 2001 if k == 1 else 161
    grid = Grid.ball(k, system.ball_radius(delta), n_points)
    if discretization == "weighted":
        op = build_weighted(system, beta, grid)
        A, U = op.matrix, op.U
    elif discretization == "witten":
        A = build_witten(system, beta, grid)
        U = np.asarray(system.energy(grid.points), dtype=float)
    else:
        raise ValueError("discretization must be 'weighted' or 'witten'")
    vals, vecs = smallest_eigenpairs(A, n_eigs)
    if discretization == "weighted" and refine and k == 1:
        lam1, v1 = refine_ground_state_1d(op, vecs[:, 0])
        vals = vals.copy()
        vals[0] = lam1
        vecs = vecs.copy()
        vecs[:, 0] = v1
    if not vals[0] > 0:
        raise EigensolverError(f"non-positive ground eigenvalue {vals[0]}")
    dv = grid.cell_volume
    gibbs, vecs = _gibbs_and_vectors(vecs, U, beta, dv)
    if vecs[:, 0].sum() < 0:
        vecs[:, 0] *= -1
    e1 = vecs[:, 0] / np.sqrt(gibbs)
    q = vecs[:, 0] * np.sqrt(gibbs)
    q = q / (q.sum() * dv)
    return SpectralResult(float(beta), np.asarray(vals, dtype=float), grid, vecs, U, gibbs, e1, q, discretization,
                          n_particles=getattr(system, "n_particles", k + 1))


def qsd_and_alpha(result: SpectralResult, nu_density=None):
    """(q_N density, α, droplet second moment) for an initial law ν.

    ``nu_density`` is a Lebesgue density sampled on the grid interior (or a
    callable of the points). ``None`` means ν = p_N.
    """
    dv = result.grid.cell_volume
    e1 = result.e1_grid
    int_e1_p = float(np.sum(e1 * result.gibbs) * dv)
    if nu_density is None:
        nu = result.gibbs
    else:
        nu = nu_density(result.points) if callable(nu_density) else np.asarray(nu_density, dtype=float)
        mass = float(np.sum(nu) * dv)
        if not np.all(np.isfinite(nu)) or np.any(nu < 0) or mass <= 0:
            raise ValueError("initial density is not normalizable on the grid")
        nu = nu / mass
    alpha = float(np.sum(e1 * nu) * dv) * int_e1_p
    return result.qsd_density, alpha, result.droplet_second_moment()


def density_ratio_norm(result: SpectralResult, nu_density) -> float:
    """‖dν/dp_N‖ in L²(p_N)."""
    dv = result.grid.cell_volume
    nu = nu_density(result.points) if callable(nu_density) else np.asarray(nu_density, dtype=float)
    nu = nu / (np.sum(nu) * dv)
    return float(np.sqrt(np.sum(nu * nu / result.gibbs) * dv))


@dataclass
class AsymptoticsRow:
    beta: float
    lambda1: float
    lambda2: float
    log_rate1: float
    log_rate2: float
    d1: float


@dataclass
class AsymptoticsTable:
    rows: list
    d1: float
    target_rate: float
    bound_rate: float
    w2_zero: float
    checks: dict

    def as_columns(self):
        header = ["beta", "lambda1", "lambda2", "log_rate1", "log_rate2", "d1"]
        return header, [[r.beta, r.lambda1, r.lambda2, r.log_rate1, r.log_rate2, r.d1] for r in self.rows]


def eigen_asymptotics(spec: PotentialSpec, n_particles: int, dim: int, delta: float, beta_list, *,
                      n_points=None, margin: float = 0.02, n_jobs: int = 1) -> AsymptoticsTable:
    """λ₁, λ₂ and their exponential rates along a β sweep, with trend checks.

    Checks: β⁻¹ln λ₁ decreasing, its last value within 25% of -d₁/2,
    every value below -(w(δ)+λδ²/2)/2 + margin, λ₂ approaching w''(0) and
    β⁻¹ln λ₂ approaching 0.
    """
    from joblib import Parallel, delayed

    system = ReducedSystem(spec, n_particles, dim)
    check_delta(spec, delta)
    d1 = valley_depth(spec, n_particles, dim, delta).value
    betas = [float(b) for b in beta_list]
    results = Parallel(n_jobs=n_jobs)(
        delayed(dirichlet_spectrum)(system, b, delta, n_points=n_points) for b in betas)
    rows = [AsymptoticsRow(r.beta, r.lambda1, r.lambda2, r.d1_rate, float(np.log(r.lambda2) / r.beta), d1)
            for r in results]
    target = -d1 / 2
    bound = -float(delta_gap(spec, delta)) / 2
    w2 = float(eval_w(spec, 0.0)[2])
    rate1 = np.array([r.log_rate1 for r in rows])
    lam2 = np.array([r.lambda2 for r in rows])
    rate2 = np.array([r.log_rate2 for r in rows])
    checks = {
        "rate1_decreasing": bool(np.all(np.diff(rate1) < 0)),
        "rate1_near_target": bool(abs(rate1[-1] - target) <= 0.25 * abs(target)),
        "rate1_below_bound": bool(np.all(rate1 <= bound + margin)),
        "lambda2_approaches_w2": bool(abs(lam2[-1] - w2) < abs(lam2[0] - w2) and abs(lam2[-1] - w2) / w2 < 0.25),
        "rate2_to_zero": bool(abs(rate2[-1]) < abs(rate2[0]) or abs(rate2[-1]) < 1e-2),
        "gap_positive": bool(all(r.lambda2 > r.lambda1 for r in rows)),
    }
    return AsymptoticsTable(rows, d1, target, bound, w2, checks)


def grid_convergence(system, beta: float, delta: float, n_points: int, **kw) -> np.ndarray:
    """Relative change of (λ₁, λ₂) when the grid spacing is halved."""
    a = dirichlet_spectrum(system, beta, delta, n_points=n_points, **kw)
    b = dirichlet_spectrum(system, beta, delta, n_points=2 * n_points - 1, **kw)
    return np.abs(b.eigenvalues[:2] - a.eigenvalues[:2]) / np.abs(b.eigenvalues[:2])


def quartic_hinge(radius: float):
    """V₀(y) = ((|y| - radius)₊)⁴: zero on the ball, C³ at the junction, increasing outward."""
    def V0(Y):
        r = np.linalg.norm(np.atleast_2d(Y), axis=-1)
        return np.maximum(r - radius, 0.0) ** 4
    return V0


def build_penalized(system, beta: float, delta: float, *, V0=None, n_points: int | None = None,
                    box_factor: float = 2.0, n_particles=None, dim=None):
    """Whole-space operator with the confinement βV₀ added, on a box of half-width box_factor·√N δ."""
    system = _as_system(system, n_particles, dim)
    k = _check_k(system.reduced_dim)
    R = system.ball_radius(delta)
    if V0 is None:
        V0 = quartic_hinge(R)
    if n_points is None:
        n_points = 4001 if k == 1 else 241
    grid = Grid.box(k, box_factor * R, n_points)
    op = build_weighted(system, beta, grid, extra_diagonal=beta * V0(grid.points))
    return op, grid


def penalized_spectrum(system, beta: float, delta: float, *, n_eigs: int = 2, **kw) -> SpectralResult:
    system = _as_system(system, kw.pop("n_particles", None), kw.pop("dim", None))
    op, grid = build_penalized(system, beta, delta, **kw)
    vals, vecs = smallest_eigenpairs(op.matrix, n_eigs)
    if grid.reduced_dim == 1:
        vals = vals.copy()
        vals[0], vecs[:, 0] = refine_ground_state_1d(op, vecs[:, 0])
    dv = grid.cell_volume
    gibbs, vecs = _gibbs_and_vectors(vecs, op.U, beta, dv)
    q = vecs[:, 0] * np.sqrt(gibbs)
    q = q / (q.sum() * dv)
    return SpectralResult(float(beta), vals, grid, vecs, op.U, gibbs, vecs[:, 0] / np.sqrt(gibbs), q, "penalized",
                          n_particles=getattr(system, "n_particles", grid.reduced_dim + 1))


def compare_spectra(dirichlet: SpectralResult, penalized: SpectralResult, m: int = 2) -> np.ndarray:
    """|λ̃_k - λ_k| for k = 1..m."""
    return np.abs(penalized.eigenvalues[:m] - dirichlet.eigenvalues[:m])


def harmonic_levels(spec: PotentialSpec, n_particles: int, dim: int, m: int) -> np.ndarray:
    """The m lowest levels E_n = g(0) + Σ(2n_i+1)a_i of the harmonic approximation at 0.

    a_i are the eigenvalues of A^{1/2} with A = ¼(D²U_N(0))², and
    g(0) = -½ΔU_N(0). Levels are enumerated shell by shell in Σn_i.
    """
    hz = hessian_at_zero(spec, n_particles, dim)
    mu = hz.reduced_spectrum
    A = 0.25 * hz.reduced @ hz.reduced
    a = np.sqrt(np.clip(np.linalg.eigvalsh(A), 0.0, None))
    g0 = -0.5 * float(np.sum(mu))
    k = len(a)
    levels = []
    total = 0
    # every level with Σn = s is at least g0 + Σa + 2 s min(a)
    base = g0 + float(np.sum(a))
    amin = float(np.min(a))
    s = 0
    while True:
        for n in _compositions(s, k):
            levels.append(base + 2.0 * float(np.dot(n, a)))
        levels.sort()
        if len(levels) >= m and base + 2.0 * (s + 1) * amin > levels[m - 1]:
            break
        s += 1
    out = np.array(levels[:m])
    out[np.abs(out) < 1e-12 * max(1.0, abs(base))] = 0.0
    return out


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def harmonic_levels_bruteforce(spec: PotentialSpec, n_particles: int, dim: int, n_max: int = 2) -> np.ndarray:
    """All levels over n ∈ {0..n_max}^k, sorted (oracle for :func:`harmonic_levels`)."""
    hz = hessian_at_zero(spec, n_particles, dim)
    a = np.sqrt(np.clip(np.linalg.eigvalsh(0.25 * hz.reduced @ hz.reduced), 0.0, None))
    g0 = -0.5 * float(np.sum(hz.reduced_spectrum))
    levels = [g0 + float(np.dot(2 * np.array(n) + 1, a)) for n in itertools.product(range(n_max + 1), repeat=len(a))]
    return np.sort(levels)


def closed_form_free_ground_state(points, radius: float) -> tuple[np.ndarray, float]:
    """Ground state (unnormalized) and λ₁·β of -Δ on the ball of given radius, k ∈ {1, 2}."""
    from scipy.special import j0, jn_zeros

    points = np.atleast_2d(points)
    k = points.shape[1]
    r = np.linalg.norm(points, axis=1)
    if k == 1:
        return np.cos(0.5 * np.pi * points[:, 0] / radius), (0.5 * np.pi / radius) ** 2
    z = jn_zeros(0, 1)[0]
    return j0(z * r / radius), (z / radius) ** 2


class DirichletSpectrum(BaseEstimator):
    """Estimator wrapper around :func:`dirichlet_spectrum`.

    ``fit`` takes no data; afterwards ``score_samples`` returns log q_N and
    ``transform`` returns e₁ at arbitrary reduced points (grid interpolation,
    zero outside the ball).
    """

    def __init__(self, potential=None, n_particles=2, dim=1, delta=0.5, beta=10.0, n_points=None, n_eigs=2,
                 discretization="weighted"):
        self.potential = potential
        self.n_particles = n_particles
        self.dim = dim
        self.delta = delta
        self.beta = beta
        self.n_points = n_points
        self.n_eigs = n_eigs
        self.discretization = discretization

    def fit(self, X=None, y=None):
        spec = self.potential if self.potential is not None else PotentialSpec.gaussian_well()
        system = ReducedSystem(spec, self.n_particles, self.dim)
        res = dirichlet_spectrum(system, self.beta, self.delta, n_points=self.n_points, n_eigs=self.n_eigs,
                                 discretization=self.discretization)
        self.result_ = res
        self.eigenvalues_ = res.eigenvalues
        self.lambda1_ = res.lambda1
        self.lambda2_ = res.lambda2
        self.e1_ = res.e1_grid
        self.qsd_density_ = res.qsd_density
        self.points_ = res.points
        self.radius_ = res.grid.radius
        return self

    def _interp(self, values, X):
        check_is_fitted(self, "result_")
        X = check_array(X)
        g = self.result_.grid
        full = g.to_full(values)
        f = RegularGridInterpolator([g.axis] * g.reduced_dim, full, bounds_error=False, fill_value=0.0)
        out = f(X)
        out[np.sum(X * X, axis=1) >= self.radius_**2] = 0.0
        return out

    def transform(self, X):
        return self._interp(self.e1_, X)[:, None]

    def score_samples(self, X):
        with np.errstate(divide="ignore"):
            return np.log(self._interp(self.qsd_density_, X))
