"""Initial laws for ensembles, sampled from per-path counter streams."""
from __future__ import annotations

import numpy as np

from .rng import TAG_INIT, stream_keys, uniforms


class PointMass:
    def __init__(self, point):
        self.point = np.atleast_1d(np.asarray(point, dtype=float))

    @property
    def dim(self):
        return self.point.shape[0]

    def sample(self, seed: int, path_ids) -> np.ndarray:
        return np.tile(self.point, (len(path_ids), 1))


class UniformBall:
    """Uniform law on the ball of given centre and radius."""

    def __init__(self, center, radius: float):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        self.radius = float(radius)

    @property
    def dim(self):
        return self.center.shape[0]

    def sample(self, seed: int, path_ids) -> np.ndarray:
        k = self.dim
        keys = stream_keys(seed, path_ids, 1, TAG_INIT)[:, 0]
        out = np.empty((len(keys), k))
        todo = np.arange(len(keys))
        attempt = 0
        # rejection from the bounding cube, per-path deterministic
        while len(todo):
            u = uniforms(keys[todo, None], attempt * k, k)[:, :, 0].T
            cand = 2.0 * u - 1.0
            ok = np.sum(cand * cand, axis=1) < 1.0
            out[todo[ok]] = self.center + self.radius * cand[ok]
            todo = todo[~ok]
            attempt += 1
        return out

    def density(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        inside = np.sum((points - self.center) ** 2, axis=-1) < self.radius**2
        return inside.astype(float)


class GridDensity:
    """Piecewise-constant law with mass ``weights[i]`` on the cell around ``points[i]``."""

    def __init__(self, points, weights, spacing: float, radius: float | None = None):
        self.radius = radius
        self.points = np.asarray(points, dtype=float)
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValueError("grid weights must be non-negative with positive total")
        self.weights = w / w.sum()
        self.spacing = float(spacing)
        self._cdf = np.cumsum(self.weights)
        self._cdf[-1] = 1.0

    @property
    def dim(self):
        return self.points.shape[1]

    def sample(self, seed: int, path_ids) -> np.ndarray:
        k = self.dim
        keys = stream_keys(seed, path_ids, 1, TAG_INIT)[:, 0]
        u = uniforms(keys[:, None], 0, 1 + k)[:, :, 0].T
        idx = np.searchsorted(self._cdf, u[:, 0], side="right")
        idx = np.minimum(idx, len(self.weights) - 1)
        jitter = (u[:, 1:] - 0.5) * self.spacing
        out = self.points[idx] + jitter
        if self.radius is not None:
            outside = np.sum(out * out, axis=1) >= self.radius**2
            out[outside] = self.points[idx[outside]]
        return out
