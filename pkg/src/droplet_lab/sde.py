"""Euler-Maruyama simulation of the particle system and its killed projection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .distributions import PointMass
from .geometry import ReducedSystem, grad_hamiltonian, reduced_basis
from .potential import PotentialSpec, check_delta
from .rng import CounterStreams, stream_keys, normals


class SimulationBlowupError(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"non-finite state after Euler-Maruyama step {step}")
        self.step = step


class InsufficientStatisticsError(RuntimeError):
    pass


def dt_max(beta: float) -> float:
    """Largest default time step: min(1e-2, 0.1/β)."""
    return min(1e-2, 0.1 / beta)


@dataclass
class SimParams:
    beta: float
    dt: float
    t_max: float
    delta: float = 0.5
    n_paths: int = 1000
    seed: int = 0
    killing: str = "ball"
    store_stride: int = 1
    allow_large_dt: bool = False

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.allow_large_dt and self.dt > dt_max(self.beta) * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds dt_max(beta)={dt_max(self.beta):.3g}; "
                             "set allow_large_dt to override")
        if self.t_max < 0:
            raise ValueError("t_max must be non-negative")
        if self.killing not in ("ball", "none"):
            raise ValueError("killing must be 'ball' or 'none'")
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def noise_scale(self) -> float:
        return float(np.sqrt(2.0 * self.dt / self.beta))


def _check_finite(state, step):
    if not np.all(np.isfinite(state)):
        raise SimulationBlowupError(step)


def step_em(spec: PotentialSpec, params: SimParams, x, draws, step: int = 0) -> np.ndarray:
    """One Euler-Maruyama step of the full system; ``x`` and ``draws`` have shape (..., N, d)."""
    x = np.asarray(x, dtype=float)
    out = x - grad_hamiltonian(spec, x) * params.dt + params.noise_scale * np.asarray(draws)
    _check_finite(out, step)
    return out


def step_em_reduced(system, params: SimParams, y, draws, step: int = 0) -> np.ndarray:
    """One Euler-Maruyama step of the projected process in reduced coordinates."""
    y = np.asarray(y, dtype=float)
    out = y - system.grad(y) * params.dt + params.noise_scale * np.asarray(draws)
    _check_finite(out, step)
    return out


@dataclass
class KilledTrajectory:
    times: np.ndarray
    states: np.ndarray
    exit_time: float | None
    killed: bool

    def to_rows(self):
        for t, y in zip(self.times, self.states):
            yield [t, *y, 0]
        if self.killed:
            yield [self.exit_time, *([float("nan")] * self.states.shape[1]), 1]


def _validate_killing(system, params: SimParams):
    if params.killing == "ball" and isinstance(system, ReducedSystem):
        check_delta(system.potential, params.delta)


def simulate_killed(system, params: SimParams, y0, path_id: int = 0) -> KilledTrajectory:
    """Run the projected process from ``y0`` until it leaves the ball or ``t_max``."""
    _validate_killing(system, params)
    y = np.array(y0, dtype=float)
    k = y.shape[0]
    R = system.ball_radius(params.delta)
    kill = params.killing == "ball"
    if kill and np.linalg.norm(y) >= R:
        raise ValueError("initial state must lie inside the ball")
    streams = CounterStreams(params.seed, [path_id], k)
    times, states = [0.0], [y.copy()]
    for n in range(params.n_steps):
        y = step_em_reduced(system, params, y, streams.draw(n)[0], n)
        t = (n + 1) * params.dt
        if kill and np.dot(y, y) >= R * R:
            return KilledTrajectory(np.array(times), np.array(states), t, True)
        if (n + 1) % params.store_stride == 0:
            times.append(t)
            states.append(y.copy())
    return KilledTrajectory(np.array(times), np.array(states), None, False)


@dataclass
class ParticleTrajectory:
    times: np.ndarray
    positions: np.ndarray  # (T, N, d), or (P, T, N, d) for several paths

    @property
    def centre_of_mass(self) -> np.ndarray:
        return self.positions.mean(axis=-2)

    @property
    def projected(self) -> np.ndarray:
        return self.positions - self.positions.mean(axis=-2, keepdims=True)


def simulate_particles(spec: PotentialSpec, params: SimParams, x0, path_ids=(0,)) -> ParticleTrajectory:
    """Full (unkilled) particle system for one or more paths, vectorized over paths.

    Noise for particle ``i``, component ``c`` of path ``p`` is stream
    ``(p, i*d + c)``.
    """
    x0 = np.asarray(x0, dtype=float)
    N, d = x0.shape[-2:]
    P = len(path_ids)
    x = np.broadcast_to(x0, (P, N, d)).copy()
    streams = CounterStreams(params.seed, path_ids, N * d)
    times, out = [0.0], [x.copy()]
    for n in range(params.n_steps):
        x = step_em(spec, params, x, streams.draw(n).reshape(P, N, d), n)
        if (n + 1) % params.store_stride == 0 or n + 1 == params.n_steps:
            times.append((n + 1) * params.dt)
            out.append(x.copy())
    pos = np.stack(out, axis=1)
    if P == 1:
        pos = pos[0]
    return ParticleTrajectory(np.array(times), pos)


@dataclass
class KilledEnsemble:
    """Outcome of a killed ensemble.

    ``exit_times`` is ``inf`` for paths alive at ``t_max``; ``snapshots[j]``
    holds the states at ``snapshot_times[j]`` with NaN rows for killed paths.
    """

    path_ids: np.ndarray
    exit_times: np.ndarray
    final_states: np.ndarray
    snapshot_times: np.ndarray
    snapshots: np.ndarray
    t_max: float
    dt: float

    @property
    def n_paths(self) -> int:
        return len(self.exit_times)

    def survival_at(self, t: float) -> float:
        return float(np.mean(self.exit_times > t))

    def alive_at(self, j: int) -> np.ndarray:
        snap = self.snapshots[j]
        return snap[~np.isnan(snap[:, 0])]


def _run_chunk(system, params, y_init, path_ids, snap_steps):
    P, k = y_init.shape
    R2 = system.ball_radius(params.delta) ** 2
    kill = params.killing == "ball"
    y = y_init.copy()
    exit_times = np.full(P, np.inf)
    snaps = np.full((len(snap_steps), P, k), np.nan)
    snap_at = {int(s): j for j, s in enumerate(snap_steps)}
    alive = np.arange(P)
    if kill:
        out0 = np.sum(y * y, axis=1) >= R2
        exit_times[out0] = 0.0
        alive = alive[~out0]
    if 0 in snap_at:
        snaps[snap_at[0], alive] = y[alive]
    streams = CounterStreams(params.seed, path_ids[alive], k)
    stream_rows = np.arange(len(alive))
    ya = y[alive]
    for n in range(params.n_steps):
        if len(alive) == 0:
            break
        draws = streams.draw(n)[stream_rows]
        ya = step_em_reduced(system, params, ya, draws, n)
        if kill:
            gone = np.sum(ya * ya, axis=1) >= R2
            if np.any(gone):
                exit_times[alive[gone]] = (n + 1) * params.dt
                keep = ~gone
                alive, ya, stream_rows = alive[keep], ya[keep], stream_rows[keep]
                if len(alive) and len(alive) < 0.5 * streams.keys.shape[0]:
                    streams = _restream(params.seed, path_ids[alive], k, n + 1)
                    stream_rows = np.arange(len(alive))
        j = snap_at.get(n + 1)
        if j is not None:
            snaps[j, alive] = ya
    y[:] = np.nan
    y[alive] = ya
    return exit_times, y, snaps


def _restream(seed, ids, k, next_step):
    s = CounterStreams(seed, ids, k)
    s._start = next_step
    s._buf = normals(s.keys, next_step, s.chunk)
    return s


def run_killed_ensemble(system, params: SimParams, initial=None, *, snapshot_times=(),
                        path_offset: int = 0, n_jobs: int = 1, chunk_size: int = 4096) -> KilledEnsemble:
    """Simulate ``params.n_paths`` independent killed paths.

    ``initial`` is a point, an ``(n_paths, k)`` array, or a sampler object
    with ``sample(seed, path_ids)``. Results do not depend on ``n_jobs`` or
    ``chunk_size``.
    """
    _validate_killing(system, params)
    k = system.reduced_dim
    path_ids = np.arange(path_offset, path_offset + params.n_paths)
    if initial is None:
        initial = PointMass(np.zeros(k))
    if hasattr(initial, "sample"):
        y_init = initial.sample(params.seed, path_ids)
    else:
        y_init = np.asarray(initial, dtype=float)
        if y_init.ndim == 1:
            y_init = np.tile(y_init, (params.n_paths, 1))
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    snap_steps = np.rint(snapshot_times / params.dt).astype(int)
    chunks = [slice(i, min(i + chunk_size, params.n_paths)) for i in range(0, params.n_paths, chunk_size)]
    if n_jobs == 1 or len(chunks) == 1:
        parts = [_run_chunk(system, params, y_init[c], path_ids[c], snap_steps) for c in chunks]
    else:
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_run_chunk)(system, params, y_init[c], path_ids[c], snap_steps) for c in chunks)
    exit_times = np.concatenate([p[0] for p in parts])
    finals = np.concatenate([p[1] for p in parts])
    snaps = np.concatenate([p[2] for p in parts], axis=1) if len(snap_steps) else np.empty((0, params.n_paths, k))
    return KilledEnsemble(path_ids, exit_times, finals, snap_steps * params.dt, snaps, params.n_steps * params.dt,
                          params.dt)


def survival_curve(exit_times, t_grid=None, n_grid: int = 200):
    """Fraction of paths with exit time > t on ``t_grid``."""
    exit_times = np.asarray(exit_times, dtype=float)
    if t_grid is None:
        finite = exit_times[np.isfinite(exit_times)]
        t_end = finite.max() if len(finite) else 1.0
        t_grid = np.linspace(0.0, t_end, n_grid)
    t_grid = np.asarray(t_grid, dtype=float)
    srt = np.sort(exit_times)
    S = 1.0 - np.searchsorted(srt, t_grid, side="right") / len(srt)
    return t_grid, S


def estimate_lambda1(t, S, fit_window, n_paths: int, min_survivors: int = 10):
    """Least-squares fit of log S(t) = log α - λ t on ``fit_window``."""
    t = np.asarray(t, dtype=float)
    S = np.asarray(S, dtype=float)
    t0, t1 = fit_window
    sel = (t >= t0) & (t <= t1)
    if not np.any(sel) or S[sel].min() * n_paths < min_survivors:
        raise InsufficientStatisticsError(
            f"fewer than {min_survivors} surviving paths inside the fit window [{t0:.4g}, {t1:.4g}]")
    if np.all(S[sel] == 1.0):
        return 0.0, 1.0
    slope, intercept = np.polyfit(t[sel], np.log(S[sel]), 1)
    return float(-slope), float(np.exp(intercept))


class SurvivalFit(BaseEstimator):
    """Exponential tail fit S(t) ≈ α e^{-λ t} of a killed ensemble.

    Parameters
    ----------
    t0, t1 : float, optional
        Fit window. ``t0`` defaults to ``5/lambda2`` when ``lambda2`` is
        given, else 20% of the largest observed exit time; ``t1`` defaults to
        the time at which 10% of the paths survive (capped by the horizon).
    lambda2 : float, optional
        Spectral gap used to place the start of the window.
    min_survivors : int
        Minimum number of survivors required at the end of the window.
    """

    def __init__(self, t0=None, t1=None, lambda2=None, min_survivors=10, n_grid=200):
        self.t0 = t0
        self.t1 = t1
        self.lambda2 = lambda2
        self.min_survivors = min_survivors
        self.n_grid = n_grid

    def fit(self, exit_times, horizon=None):
        exit_times = np.asarray(exit_times, dtype=float).ravel()
        n = len(exit_times)
        finite = exit_times[np.isfinite(exit_times)]
        if horizon is None:
            horizon = finite.max() if len(finite) else 0.0
        self.n_paths_ = n
        self.horizon_ = float(horizon)
        if len(finite) == 0:
            # no exits observed: report the censored estimate
            self.lambda1_, self.alpha_ = 0.0, 1.0
            self.censored_ = True
            self.lambda1_upper_ = 3.0 / (n * horizon) if horizon > 0 else np.inf
            self.window_ = (0.0, float(horizon))
            self.curve_ = (np.array([0.0, horizon]), np.array([1.0, 1.0]))
            return self
        if self.t0 is not None:
            t0 = float(self.t0)
        elif self.lambda2 is not None:
            t0 = 5.0 / float(self.lambda2)
        else:
            t0 = 0.2 * float(finite.max())
        if self.t1 is not None:
            t1 = float(self.t1)
        else:
            # empirical 90% quantile; inf (censored) entries sort last
            q = np.sort(exit_times)[int(np.ceil(0.9 * n)) - 1]
            t1 = float(min(q, horizon))
        if t1 <= t0:
            raise InsufficientStatisticsError(f"empty fit window [{t0:.4g}, {t1:.4g}]")
        t = np.linspace(t0, t1, self.n_grid)
        _, S = survival_curve(exit_times, t)
        self.lambda1_, self.alpha_ = estimate_lambda1(t, S, (t0, t1), n, self.min_survivors)
        self.censored_ = False
        self.lambda1_upper_ = self.lambda1_
        self.window_ = (t0, t1)
        self.curve_ = (t, S)
        return self

    def predict(self, t):
        check_is_fitted(self, "lambda1_")
        return self.alpha_ * np.exp(-self.lambda1_ * np.asarray(t, dtype=float))


def mean_exit_time(exit_times):
    """Mean and standard error of the finite exit times."""
    e = np.asarray(exit_times, dtype=float)
    e = e[np.isfinite(e)]
    return float(e.mean()), float(e.std(ddof=1) / np.sqrt(len(e)))
