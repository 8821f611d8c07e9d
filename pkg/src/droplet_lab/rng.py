"""Counter-based Gaussian streams.

Every draw is a pure function of ``(seed, path, component, step)``: the
stream for one (path, component) pair is a SplitMix64 sequence whose
starting state is itself a hash of the seed, path and component. Draws
can therefore be produced for any subset of paths, in any order or chunk
size, with bit-identical results.
"""
from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_PATH_SALT = np.uint64(0xD1B54A32D192ED03)
_COMP_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_S30, _S27, _S31, _S11 = (np.uint64(v) for v in (30, 27, 31, 11))
_TWO53 = 1.0 / 9007199254740992.0

# tags separating independent uses of the same (seed, path) key
TAG_NOISE = 0
TAG_INIT = 1
TAG_AUX = 2


def _mix(z: np.ndarray) -> np.ndarray:
    z = np.array(z, dtype=np.uint64)
    t = np.empty_like(z)
    for shift, mult in ((_S30, _M1), (_S27, _M2), (_S31, None)):
        np.right_shift(z, shift, out=t)
        np.bitwise_xor(z, t, out=z)
        if mult is not None:
            np.multiply(z, mult, out=z)
    return z


def stream_keys(seed: int, path_ids, n_components: int, tag: int = TAG_NOISE) -> np.ndarray:
    """Starting states, shape ``(n_paths, n_components)``, uint64."""
    with np.errstate(over="ignore"):
        base = _mix(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64) + np.uint64(tag) * _GAMMA)
        p = np.asarray(path_ids, dtype=np.uint64)[:, None]
        c = np.arange(n_components, dtype=np.uint64)[None, :]
        return _mix(_mix(base ^ (p * _PATH_SALT + _GAMMA)) ^ (c * _COMP_SALT + _GAMMA))


def _uniform_from(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = _mix(keys + counters * _GAMMA)
    np.right_shift(z, _S11, out=z)
    return (z.astype(np.float64) + 0.5) * _TWO53


def normals(keys: np.ndarray, step_start: int, n_steps: int) -> np.ndarray:
    """Standard normals of shape ``(n_steps, *keys.shape)`` for steps ``step_start, ...``.

    Steps 2m and 2m+1 share one Box-Muller pair built from counters
    2m+1 and 2m+2 (cosine branch for even steps, sine for odd).
    """
    p0 = step_start // 2
    p1 = (step_start + n_steps - 1) // 2 + 1
    pairs = np.arange(p0, p1, dtype=np.uint64).reshape((p1 - p0,) + (1,) * keys.ndim)
    u1 = _uniform_from(keys[None], np.uint64(2) * pairs + np.uint64(1))
    u2 = _uniform_from(keys[None], np.uint64(2) * pairs + np.uint64(2))
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    z = np.empty((2 * (p1 - p0),) + keys.shape)
    z[0::2] = rad * np.cos(ang)
    z[1::2] = rad * np.sin(ang)
    off = step_start - 2 * p0
    return z[off:off + n_steps]


def uniforms(keys: np.ndarray, step_start: int, n_steps: int) -> np.ndarray:
    steps = np.arange(step_start, step_start + n_steps, dtype=np.uint64)
    steps = steps.reshape((n_steps,) + (1,) * keys.ndim)
    return _uniform_from(keys[None], np.uint64(2) * steps + np.uint64(1))


class CounterStreams:
    """Gaussian noise for a fixed set of paths, served in chunks of steps."""

    def __init__(self, seed: int, path_ids, n_components: int, chunk: int = 64):
        self.keys = stream_keys(seed, path_ids, n_components, TAG_NOISE)
        self.chunk = int(chunk)
        self._start = 0
        self._buf = np.empty((0,) + self.keys.shape)

    def draw(self, step: int) -> np.ndarray:
        """Normals for ``step`` (must be requested in increasing order)."""
        off = step - self._start
        if off < 0 or off >= len(self._buf):
            self._start = step
            self._buf = normals(self.keys, step, self.chunk)
            off = 0
        return self._buf[off]
