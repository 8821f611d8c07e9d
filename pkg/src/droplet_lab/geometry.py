"""Configuration-space geometry of the particle system.

Configurations are arrays of shape ``(N, d)`` (or batches ``(..., N, d)``).
The zero-mean subspace is charted by a Helmert basis so that projected
states can be handled in ``(N-1)*d`` reduced coordinates.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .potential import PotentialSpec, delta_gap, eval_w, w_prime_over_r


class ValleyDepthError(RuntimeError):
    def __init__(self, message: str, best_value: float, best_point: np.ndarray):
        super().__init__(f"{message} (best value found: {best_value:.12g})")
        self.best_value = best_value
        self.best_point = best_point


class GradientFlowInstabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class Configuration:
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[0] < 2:
            raise ValueError("positions must have shape (N, d) with N >= 2")
        if not np.all(np.isfinite(pos)):
            raise ValueError("configuration has non-finite entries")
        object.__setattr__(self, "positions", pos)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class ProjectedState:
    """A zero-mean configuration together with its reduced coordinates."""

    positions: np.ndarray
    reduced: np.ndarray

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.reduced))


@lru_cache(maxsize=64)
def _helmert(n_particles: int, dim: int) -> np.ndarray:
    N, d = n_particles, dim
    H = np.zeros((N, N - 1))
    for k in range(1, N):
        c = 1.0 / np.sqrt(k * (k + 1))
        H[:k, k - 1] = c
        H[k, k - 1] = -k * c
    # column (k, c) holds H[:, k] in spatial component c
    B = np.zeros((N * d, (N - 1) * d))
    for k in range(N - 1):
        for c in range(d):
            B[c::d, k * d + c] = H[:, k]
    B.setflags(write=False)
    return B


def reduced_basis(n_particles: int, dim: int) -> np.ndarray:
    """Column-orthonormal ``(N*d, (N-1)*d)`` basis of the zero-mean subspace."""
    if n_particles < 2 or dim < 1:
        raise ValueError("need N >= 2 and d >= 1")
    return _helmert(int(n_particles), int(dim))


def projection_matrix(n_particles: int, dim: int) -> np.ndarray:
    B = reduced_basis(n_particles, dim)
    return B @ B.T


def _as_config(x) -> np.ndarray:
    if isinstance(x, (Configuration, ProjectedState)):
        return x.positions
    return np.asarray(x, dtype=float)


def project(x) -> ProjectedState:
    """Subtract the particle mean componentwise."""
    pos = _as_config(x)
    y = pos - pos.mean(axis=-2, keepdims=True)
    N, d = y.shape[-2:]
    B = reduced_basis(N, d)
    return ProjectedState(y, y.reshape(*y.shape[:-2], N * d) @ B)


def lift(reduced, n_particles: int, dim: int) -> ProjectedState:
    reduced = np.asarray(reduced, dtype=float)
    B = reduced_basis(n_particles, dim)
    y = (reduced @ B.T).reshape(*reduced.shape[:-1], n_particles, dim)
    return ProjectedState(y, reduced)


def _pair_geometry(x: np.ndarray):
    diff = x[..., :, None, :] - x[..., None, :, :]
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    return diff, r


def hamiltonian(spec: PotentialSpec, x) -> np.ndarray | float:
    """H_N(x) = (1/2N) sum_{i,j} W(x_i - x_j); batched over leading axes."""
    x = _as_config(x)
    N = x.shape[-2]
    _, r = _pair_geometry(x)
    w = eval_w(spec, r)[0]
    out = w.sum(axis=(-2, -1)) / (2.0 * N)
    return float(out) if np.ndim(out) == 0 else out


def grad_hamiltonian(spec: PotentialSpec, x) -> np.ndarray:
    """Gradient of H_N, shape like ``x``. Coincident pairs contribute 0."""
    x = _as_config(x)
    N = x.shape[-2]
    out = np.zeros_like(x)
    # explicit pair loop: reductions over tiny trailing axes are slow for large batches
    for i in range(N - 1):
        for j in range(i + 1, N):
            dij = x[..., i, :] - x[..., j, :]
            r2 = np.einsum("...c,...c->...", dij, dij)
            if spec.family == "GaussianWell":
                a, s = spec.params
                coef = np.exp(r2 * (-1.0 / (s * s))) * (2.0 * a / (s * s * N))
            else:
                coef = w_prime_over_r(spec, np.sqrt(r2)) / N
            f = coef[..., None] * dij
            out[..., i, :] += f
            out[..., j, :] -= f
    return out


def laplacian_hamiltonian(spec: PotentialSpec, x) -> np.ndarray | float:
    """Ambient Laplacian of H_N; equals the Laplacian of U_N on the zero-mean subspace.

    tr D²W(z) = w''(r) + (d-1) w'(r)/r, which tends to d·w''(0) at r = 0.
    """
    x = _as_config(x)
    N, d = x.shape[-2:]
    _, r = _pair_geometry(x)
    _, _, d2w = eval_w(spec, r)
    tr = d2w + (d - 1) * w_prime_over_r(spec, r)
    idx = np.arange(N)
    tr[..., idx, idx] = 0.0
    out = tr.sum(axis=(-2, -1)) / N
    return float(out) if np.ndim(out) == 0 else out


def _hessian_W(spec: PotentialSpec, z: np.ndarray) -> np.ndarray:
    r = float(np.linalg.norm(z))
    d = z.shape[0]
    _, _, d2w = eval_w(spec, r)
    t = float(w_prime_over_r(spec, r))
    if r == 0.0:
        return float(d2w) * np.eye(d)
    u = z / r
    P = np.outer(u, u)
    return float(d2w) * P + t * (np.eye(d) - P)


def hessian_hamiltonian(spec: PotentialSpec, x) -> np.ndarray:
    """Dense ``(N*d, N*d)`` Hessian of H_N at a single configuration."""
    x = _as_config(x)
    N, d = x.shape
    Hs = np.zeros((N * d, N * d))
    for i in range(N):
        for j in range(N):
            if i == j:
                continue
            blk = _hessian_W(spec, x[i] - x[j]) / N
            Hs[i * d:(i + 1) * d, j * d:(j + 1) * d] -= blk
            Hs[i * d:(i + 1) * d, i * d:(i + 1) * d] += blk
    return Hs


def droplet_statistic(y) -> float:
    """(1/N) sum_i |y_i|^2 for a zero-mean state."""
    pos = _as_config(y)
    N = pos.shape[-2]
    out = np.sum(pos * pos, axis=(-2, -1)) / N
    return float(out) if np.ndim(out) == 0 else out


def droplet_statistic_pairwise(x) -> float:
    """(1/2N²) sum_{i,j} |x_i - x_j|²; agrees with :func:`droplet_statistic` of the projection."""
    pos = _as_config(x)
    N = pos.shape[-2]
    diff, _ = _pair_geometry(pos)
    out = np.sum(diff * diff, axis=(-3, -2, -1)) / (2.0 * N * N)
    return float(out) if np.ndim(out) == 0 else out


class ReducedSystem:
    """The restricted energy U_N expressed in reduced coordinates.

    All methods accept a single point of shape ``(k,)`` or a batch ``(P, k)``
    with ``k = (N-1)*d``.
    """

    def __init__(self, potential: PotentialSpec, n_particles: int, dim: int):
        self.potential = potential
        self.n_particles = int(n_particles)
        self.dim = int(dim)
        self.basis = reduced_basis(self.n_particles, self.dim)

    def __repr__(self):
        return f"ReducedSystem({self.potential.family}{self.potential.params}, N={self.n_particles}, d={self.dim})"

    @property
    def reduced_dim(self) -> int:
        return (self.n_particles - 1) * self.dim

    def ball_radius(self, delta: float) -> float:
        return float(np.sqrt(self.n_particles) * delta)

    def lift(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        return (Y @ self.basis.T).reshape(*Y.shape[:-1], self.n_particles, self.dim)

    def energy(self, Y):
        return hamiltonian(self.potential, self.lift(Y))

    def grad(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        g = grad_hamiltonian(self.potential, self.lift(Y))
        return g.reshape(*Y.shape[:-1], self.n_particles * self.dim) @ self.basis

    def laplacian(self, Y):
        return laplacian_hamiltonian(self.potential, self.lift(Y))


class FreeSystem:
    """Zero potential in ``k`` reduced dimensions (pure Brownian control case)."""

    def __init__(self, reduced_dim: int, n_particles: int | None = None):
        self.reduced_dim = int(reduced_dim)
        self.n_particles = n_particles if n_particles is not None else self.reduced_dim + 1

    def __repr__(self):
        return f"FreeSystem(k={self.reduced_dim})"

    def ball_radius(self, delta: float) -> float:
        return float(np.sqrt(self.n_particles) * delta)

    def energy(self, Y):
        Y = np.asarray(Y, dtype=float)
        out = np.zeros(Y.shape[:-1])
        return float(out) if out.ndim == 0 else out

    def grad(self, Y):
        return np.zeros_like(np.asarray(Y, dtype=float))

    def laplacian(self, Y):
        return self.energy(Y)


@dataclass(frozen=True)
class HessianAtZero:
    full: np.ndarray
    spectrum: np.ndarray
    reduced: np.ndarray
    reduced_spectrum: np.ndarray


def hessian_at_zero(spec: PotentialSpec, n_particles: int, dim: int) -> HessianAtZero:
    """D²H_N(0), its spectrum, and the reduced Hessian D²U_N(0)."""
    N, d = n_particles, dim
    full = hessian_hamiltonian(spec, np.zeros((N, d)))
    d2w0 = float(eval_w(spec, 0.0)[2])
    expected = np.kron(np.full((N, N), -d2w0 / N) + np.eye(N) * d2w0, np.eye(d))
    if not np.allclose(full, expected, rtol=0, atol=1e-12 * max(1.0, abs(d2w0))):
        raise AssertionError("D²H_N(0) lacks the block circulant structure")
    B = reduced_basis(N, d)
    reduced = B.T @ full @ B
    return HessianAtZero(full, np.linalg.eigvalsh(full), reduced, np.linalg.eigvalsh(reduced))


@dataclass(frozen=True)
class ValleyDepth:
    value: float
    argmin: np.ndarray
    lower_bound: float
    n_starts: int
    n_converged: int


def _sphere_starts(system: ReducedSystem, radius: float, n_starts: int, seed: int) -> np.ndarray:
    k = system.reduced_dim
    rng = np.random.default_rng(seed)
    starts = [rng.standard_normal(k) for _ in range(n_starts)]
    # structured starts: one particle pulled away from the others
    N, d = system.n_particles, system.dim
    B = system.basis
    for i in range(N):
        for c in range(d):
            x = np.zeros((N, d))
            x[i, c] = 1.0
            starts.append(x.reshape(-1) @ B)
    starts = np.array([s / np.linalg.norm(s) * radius for s in starts if np.linalg.norm(s) > 0])
    return starts


def valley_depth(spec: PotentialSpec, n_particles: int, dim: int, delta: float, *,
                 n_starts: int = 32, tol: float = 1e-8, max_iter: int = 20_000,
                 seed: int = 12345) -> ValleyDepth:
    """Minimum of U_N over the sphere |y| = sqrt(N)·δ in the zero-mean subspace.

    Because U_N increases along rays, this equals the minimax barrier
    between 0 and the boundary of the ball.
    """
    system = ReducedSystem(spec, n_particles, dim)
    radius = system.ball_radius(delta)
    bound = float(delta_gap(spec, delta))
    k = system.reduced_dim
    if k == 1:
        pts = np.array([[radius], [-radius]])
        vals = system.energy(pts)
        i = int(np.argmin(vals))
        return ValleyDepth(float(vals[i]), pts[i], bound, 2, 2)

    starts = _sphere_starts(system, radius, n_starts, seed)
    best_val, best_pt, n_conv = np.inf, None, 0
    for y in starts:
        f = float(system.energy(y))
        step = 0.1 * radius
        converged = False
        for _ in range(max_iter):
            g = system.grad(y)
            g_tan = g - np.dot(g, y) / radius**2 * y
            gn = float(np.linalg.norm(g_tan))
            if gn < tol:
                converged = True
                break
            # backtracking along the retraction onto the sphere
            while True:
                cand = y - step * g_tan
                cand *= radius / np.linalg.norm(cand)
                fc = float(system.energy(cand))
                if fc <= f - 1e-4 * step * gn * gn or step < 1e-14:
                    break
                step *= 0.5
            if step < 1e-14:
                converged = gn < 10 * tol
                break
            y, f = cand, fc
            step = min(step * 2.0, radius)
        n_conv += converged
        if f < best_val:
            best_val, best_pt = f, y.copy()
    if n_conv == 0:
        raise ValleyDepthError("projected gradient descent did not converge", best_val, best_pt)
    if best_val < bound - 1e-12:
        raise AssertionError(f"valley depth {best_val} below the lower bound {bound}")
    return ValleyDepth(float(best_val), best_pt, bound, len(starts), n_conv)


def minimax_barrier_grid(system, radius: float, n_points: int = 201) -> float:
    """Lowest achievable max of U along a lattice path from 0 to the sphere.

    Priority flood from the origin on a Cartesian grid over the ball
    (reduced dimension 1 or 2). Used to cross-check :func:`valley_depth`.
    """
    k = system.reduced_dim
    if k not in (1, 2):
        raise ValueError("grid minimax only for reduced dimension 1 or 2")
    if n_points % 2 == 0:
        n_points += 1
    ax = np.linspace(-radius, radius, n_points)
    mesh = np.stack(np.meshgrid(*([ax] * k), indexing="ij"), axis=-1)
    U = system.energy(mesh.reshape(-1, k)).reshape(mesh.shape[:-1])
    inside = np.sum(mesh * mesh, axis=-1) < radius**2
    start = (n_points // 2,) * k
    seen = np.zeros(U.shape, dtype=bool)
    heap = [(float(U[start]), start)]
    seen[start] = True
    level = -np.inf
    while heap:
        u, idx = heapq.heappop(heap)
        level = max(level, u)
        if not inside[idx]:
            return float(level)
        for ax_i in range(k):
            for step in (-1, 1):
                nb = list(idx)
                nb[ax_i] += step
                nb = tuple(nb)
                if 0 <= nb[ax_i] < n_points and not seen[nb]:
                    seen[nb] = True
                    heapq.heappush(heap, (float(U[nb]), nb))
    return float(level)


@dataclass(frozen=True)
class GradientFlowPath:
    times: np.ndarray
    path: np.ndarray
    energies: np.ndarray


def gradient_flow(system, y0, dt: float, T: float, *, stride: int = 1) -> GradientFlowPath:
    """Explicit Euler integration of dy/dt = -grad U_N(y)."""
    y = np.array(y0, dtype=float)
    n_steps = int(round(T / dt))
    f = float(system.energy(y))
    times, path, energies = [0.0], [y.copy()], [f]
    for n in range(1, n_steps + 1):
        y = y - dt * system.grad(y)
        fn = float(system.energy(y))
        if not np.isfinite(fn) or fn > f + 1e-14 * max(1.0, abs(f)):
            raise GradientFlowInstabilityError(f"energy increased at step {n}; reduce dt={dt}")
        f = fn
        if n % stride == 0 or n == n_steps:
            times.append(n * dt)
            path.append(y.copy())
            energies.append(f)
    return GradientFlowPath(np.array(times), np.array(path), np.array(energies))
