"""Particle estimates of the quasi-stationary distribution and conditioned laws.

Measures here live on the ball B of radius R = √N δ with an extra
cemetery point ⋆; the metric is d_⋆(x, y) = min(|x - y|, h(x) + h(y)) with
h(y) = R - |y| and d_⋆(y, ⋆) = h(y).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .distributions import PointMass
from .geometry import ReducedSystem
from .rng import CounterStreams
from .sde import InsufficientStatisticsError, SimParams, _validate_killing, run_killed_ensemble, step_em_reduced

MIN_KILLS = 50


class AllCopiesExitedError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"all Fleming-Viot copies left the ball in step {step}; reduce dt or raise delta/beta")
        self.step = step


class NoSurvivorsError(RuntimeError):
    def __init__(self, t: float, n_paths: int):
        self.survival_upper = 3.0 / n_paths
        super().__init__(f"no surviving paths at t={t}; survival fraction < {self.survival_upper:.3g} (rule of three)")


@dataclass
class QsdEstimate:
    samples: np.ndarray          # (S, k) reduced states, time-pooled after burn-in
    beta: float
    delta: float
    n_particles: int
    burn_in: float
    n_copies: int
    horizon: float
    n_kills: int
    radius: float

    @property
    def killing_rate(self) -> float:
        return self.n_kills / (self.n_copies * self.horizon)

    @property
    def second_moment(self) -> float:
        """(1/N) E|y|² under the estimate."""
        return float(np.mean(np.sum(self.samples**2, axis=1)) / self.n_particles)

    def require_kills(self, minimum: int = MIN_KILLS) -> None:
        if self.n_kills < minimum:
            raise InsufficientStatisticsError(
                f"only {self.n_kills} killing events (< {minimum}); Fleming-Viot estimate not resolved")

    def measure(self) -> "StarMeasure":
        return StarMeasure.from_samples(self.samples, self.radius)


def fleming_viot(system, params: SimParams, n_copies: int, burn_in: float, horizon: float, *, initial=None,
                 sample_every: int = 10) -> QsdEstimate:
    """Fleming-Viot particle system with uniform respawn onto survivors.

    Copies advance in lockstep; copies that leave the ball during a step are
    processed in index order and each jumps onto a survivor drawn uniformly
    from the copies that did not exit in that step. States are pooled every
    ``sample_every`` steps after ``burn_in``.
    """
    if n_copies < 2:
        raise ValueError("Fleming-Viot needs at least two copies")
    _validate_killing(system, params)
    k = system.reduced_dim
    R = system.ball_radius(params.delta)
    ids = np.arange(n_copies)
    if initial is None:
        initial = PointMass(np.zeros(k))
    y = initial.sample(params.seed, ids) if hasattr(initial, "sample") else np.tile(np.asarray(initial, float),
                                                                                     (n_copies, 1))
    streams = CounterStreams(params.seed, ids, k)
    respawn = np.random.Generator(np.random.Philox(key=params.seed))
    n_burn = int(round(burn_in / params.dt))
    n_total = n_burn + int(round(horizon / params.dt))
    kills = 0
    pooled = []
    for n in range(n_total):
        y = step_em_reduced(system, params, y, streams.draw(n), n)
        out = np.sum(y * y, axis=1) >= R * R
        if np.any(out):
            exited = np.nonzero(out)[0]
            survivors = np.nonzero(~out)[0]
            if len(survivors) == 0:
                raise AllCopiesExitedError(n)
            y[exited] = y[survivors[respawn.integers(len(survivors), size=len(exited))]]
            if n >= n_burn:
                kills += len(exited)
        if n >= n_burn and (n + 1 - n_burn) % sample_every == 0:
            pooled.append(y.copy())
    samples = np.concatenate(pooled) if pooled else y.copy()
    return QsdEstimate(samples, params.beta, params.delta, getattr(system, "n_particles", k + 1), burn_in, n_copies,
                       horizon, kills, R)


class FlemingViotQSD(BaseEstimator):
    """Estimator wrapper around :func:`fleming_viot`.

    ``burn_in=None`` uses 10/lambda2 when ``lambda2`` is given, else
    horizon/5.
    """

    def __init__(self, potential=None, n_particles=2, dim=1, beta=8.0, delta=0.5, dt=1e-3, n_copies=1000,
                 horizon=10.0, burn_in=None, lambda2=None, seed=0, sample_every=10):
        self.potential = potential
        self.n_particles = n_particles
        self.dim = dim
        self.beta = beta
        self.delta = delta
        self.dt = dt
        self.n_copies = n_copies
        self.horizon = horizon
        self.burn_in = burn_in
        self.lambda2 = lambda2
        self.seed = seed
        self.sample_every = sample_every

    def fit(self, X=None, y=None):
        from .potential import PotentialSpec

        spec = self.potential if self.potential is not None else PotentialSpec.gaussian_well()
        system = ReducedSystem(spec, self.n_particles, self.dim)
        if self.burn_in is not None:
            burn = self.burn_in
        elif self.lambda2 is not None:
            burn = 10.0 / self.lambda2
        else:
            burn = self.horizon / 5
        params = SimParams(beta=self.beta, dt=self.dt, t_max=burn + self.horizon, delta=self.delta,
                           n_paths=self.n_copies, seed=self.seed)
        est = fleming_viot(system, params, self.n_copies, burn, self.horizon, sample_every=self.sample_every)
        self.estimate_ = est
        self.samples_ = est.samples
        self.killing_rate_ = est.killing_rate
        self.second_moment_ = est.second_moment
        self.n_kills_ = est.n_kills
        return self

    def score_samples(self, X, bins=50):
        """Log of the binned density estimate at X."""
        check_is_fitted(self, "samples_")
        X = check_array(X)
        R = self.estimate_.radius
        edges = [np.linspace(-R, R, bins + 1)] * X.shape[1]
        H, _ = np.histogramdd(self.samples_, bins=edges, density=True)
        idx = tuple(np.clip(np.searchsorted(e, X[:, a], side="right") - 1, 0, bins - 1) for a, e in enumerate(edges))
        with np.errstate(divide="ignore"):
            return np.log(H[idx])


@dataclass
class ConditionedLaw:
    t: float
    samples: np.ndarray      # survivors at t
    n_paths: int
    radius: float

    @property
    def survival(self) -> float:
        return len(self.samples) / self.n_paths

    @property
    def survival_se(self) -> float:
        s = self.survival
        return float(np.sqrt(s * (1 - s) / self.n_paths))

    def measure(self, conditioned: bool = True) -> "StarMeasure":
        """Law of Y_t given survival, or the law of Ŷ_t on B ∪ {⋆} when ``conditioned`` is False."""
        if conditioned:
            return StarMeasure.from_samples(self.samples, self.radius)
        return StarMeasure.from_samples(self.samples, self.radius, n_total=self.n_paths)


def conditioned_law(system, params: SimParams, t, initial, *, n_jobs: int = 1, path_offset: int = 0):
    """Survivors at time(s) ``t`` from ``params.n_paths`` killed paths started from ``initial``.

    Returns one :class:`ConditionedLaw` for a scalar ``t`` or a list for a sequence.
    """
    scalar = np.ndim(t) == 0
    times = np.atleast_1d(np.asarray(t, dtype=float))
    t_max = float(times.max())
    run = SimParams(**{**params.__dict__, "t_max": t_max})
    ens = run_killed_ensemble(system, run, initial, snapshot_times=times, n_jobs=n_jobs, path_offset=path_offset)
    R = system.ball_radius(params.delta)
    out = []
    for j, tj in enumerate(times):
        alive = ens.alive_at(j)
        if len(alive) == 0:
            raise NoSurvivorsError(float(tj), run.n_paths)
        out.append(ConditionedLaw(float(tj), alive, run.n_paths, R))
    return out[0] if scalar else out


@dataclass
class StarMeasure:
    """Finite measure on B ∪ {⋆}: atoms inside the ball plus mass at ⋆.

    ``cell`` is the lattice spacing when the atoms come from a grid density
    (each atom's mass is then spread uniformly over its cell for binning).
    """

    points: np.ndarray
    weights: np.ndarray
    star: float
    radius: float
    n_samples: int | None = None
    cell: float | None = None

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total(self) -> float:
        return float(self.weights.sum() + self.star)

    @classmethod
    def from_samples(cls, samples, radius, n_total=None):
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        n = len(samples) if n_total is None else int(n_total)
        if n == 0:
            raise ValueError("empty sample")
        w = np.full(len(samples), 1.0 / n)
        return cls(samples, w, 1.0 - len(samples) / n, float(radius), n_samples=n)

    @classmethod
    def from_grid(cls, points, density, cell_volume, radius, star=0.0, spacing=None):
        """Grid density scaled to total mass 1 - star."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        w = np.asarray(density, dtype=float) * cell_volume
        w = w / w.sum() * (1.0 - star)
        if spacing is None:
            spacing = cell_volume ** (1.0 / points.shape[1])
        return cls(points, w, float(star), float(radius), cell=spacing)

    @classmethod
    def dirac(cls, point, radius):
        p = np.atleast_2d(np.asarray(point, dtype=float))
        return cls(p, np.ones(1), 0.0, float(radius))

    @classmethod
    def at_star(cls, dim, radius):
        return cls(np.zeros((0, dim)), np.zeros(0), 1.0, float(radius))

    def expectation(self, f, f_star: float = 0.0) -> float:
        vals = f(self.points) if len(self.points) else np.zeros(0)
        return float(np.dot(self.weights, vals) + self.star * f_star)

    def bin_masses(self, bins: int = 50) -> np.ndarray:
        """Masses of the ``bins``^k cubes on [-R, R]^k (flattened), with ⋆ appended last."""
        R, k = self.radius, self.dim
        edges = np.linspace(-R, R, bins + 1)
        if k == 1 and self.cell is not None:
            # spread each atom over its cell: exact bin integrals of the piecewise-constant density
            x = self.points[:, 0]
            lo, hi = x - self.cell / 2, x + self.cell / 2
            dens = self.weights / self.cell
            order = np.argsort(lo)
            lo, hi, dens = lo[order], hi[order], dens[order]
            knots = np.concatenate([lo, hi[-1:]])
            cum = np.concatenate([[0.0], np.cumsum(dens * (hi - lo))])
            H = np.diff(np.interp(edges, knots, cum))
        else:
            H, _ = np.histogramdd(self.points, bins=[edges] * k, weights=self.weights)
            H = H.ravel()
        return np.append(H, self.star)


def d_star(x, y, radius):
    """d_⋆ between point arrays x (n, k) and y (m, k); returns (n, m)."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    direct = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)
    hx = radius - np.linalg.norm(x, axis=1)
    hy = radius - np.linalg.norm(y, axis=1)
    return np.minimum(direct, hx[:, None] + hy[None, :])


def tv_binned(mu: StarMeasure, nu: StarMeasure, bins: int = 50) -> float:
    return 0.5 * float(np.abs(mu.bin_masses(bins) - nu.bin_masses(bins)).sum())


def tv_standard_error(mu: StarMeasure, bins: int = 50) -> float:
    """Binomial standard error of a binned TV against an exact law: ½Σ√(p_i(1-p_i)/n)."""
    if mu.n_samples is None:
        return 0.0
    p = mu.bin_masses(bins)
    return 0.5 * float(np.sum(np.sqrt(p * (1 - p) / mu.n_samples)))


def _w1_circle(mu: StarMeasure, nu: StarMeasure) -> float:
    # in 1D, (B ∪ {⋆}, d_⋆) is a circle of length 2R with ⋆ at the glued ends ±R
    R = mu.radius
    pos = np.concatenate([mu.points[:, 0], nu.points[:, 0], [-R]]) + R
    mass = np.concatenate([mu.weights, -nu.weights, [mu.star - nu.star]])
    order = np.argsort(pos, kind="stable")
    pos, mass = pos[order], mass[order]
    knots = np.append(pos, 2 * R)
    lengths = np.diff(knots)
    D = np.cumsum(mass)       # F - G on each segment
    keep = lengths > 0
    D, lengths = D[keep], lengths[keep]
    if len(D) == 0:
        return 0.0
    # the optimal rotation constant is a weighted median of D
    o = np.argsort(D)
    cw = np.cumsum(lengths[o])
    c = D[o][np.searchsorted(cw, 0.5 * cw[-1])]
    return float(np.sum(np.abs(D - c) * lengths))


def w1_transport(mu: StarMeasure, nu: StarMeasure) -> float:
    """Exact W₁ under d_⋆ between two small atomic measures by linear programming."""
    a = np.append(mu.weights, mu.star)
    b = np.append(nu.weights, nu.star)
    R = mu.radius
    C = np.zeros((len(a), len(b)))
    C[:-1, :-1] = d_star(mu.points, nu.points, R)
    C[:-1, -1] = R - np.linalg.norm(mu.points, axis=1)
    C[-1, :-1] = R - np.linalg.norm(nu.points, axis=1)
    n, m = C.shape
    A_eq = np.zeros((n + m, n * m))
    for i in range(n):
        A_eq[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A_eq[n + j, j::m] = 1.0
    res = linprog(C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def _w1_bracket_2d(mu: StarMeasure, nu: StarMeasure, bins: int):
    R = mu.radius
    edges = np.linspace(-R, R, bins + 1)
    centres = 0.5 * (edges[1:] + edges[:-1])
    cx, cy = np.meshgrid(centres, centres, indexing="ij")
    reps = np.stack([cx.ravel(), cy.ravel()], axis=1)
    norm = np.linalg.norm(reps, axis=1)
    scale = np.where(norm > R, R / np.maximum(norm, 1e-300), 1.0)
    reps = reps * scale[:, None]
    Hm, Hn = mu.bin_masses(bins)[:-1], nu.bin_masses(bins)[:-1]
    used = (Hm > 0) | (Hn > 0)
    qm = StarMeasure(reps[used], Hm[used], mu.star, R)
    qn = StarMeasure(reps[used], Hn[used], nu.star, R)
    wq = w1_transport(qm, qn)
    slack = np.sqrt(2) * (edges[1] - edges[0])
    return max(wq - slack, 0.0), wq + slack


@dataclass
class Distances:
    tv: float
    w1: float | None
    w1_bracket: tuple[float, float] | None
    tv_se: float = 0.0
    bins: int = 50


def measure_distances(mu: StarMeasure, nu: StarMeasure, bins: int = 50, w1_bins: int = 12) -> Distances:
    """Binned TV (⋆ is its own bin) and W₁ under d_⋆: exact in 1D, bracketed in 2D."""
    if mu.dim != nu.dim or not np.isclose(mu.radius, nu.radius):
        raise ValueError("measures live on different domains")
    for m in (mu, nu):
        if len(m.points) and np.any(np.sum(m.points**2, axis=1) > m.radius**2 * (1 + 1e-12)):
            raise ValueError("measure has atoms outside the ball")
    tv = tv_binned(mu, nu, bins)
    se = tv_standard_error(mu, bins) + tv_standard_error(nu, bins)
    if mu.dim == 1:
        w1 = _w1_circle(mu, nu)
        return Distances(tv, w1, (w1, w1), se, bins)
    lo, hi = _w1_bracket_2d(mu, nu, w1_bins)
    return Distances(tv, None, (lo, hi), se, bins)
