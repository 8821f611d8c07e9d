"""Radial interaction potentials and the constants derived from them.

A potential is described by its radial profile ``w`` with ``W(x) = w(|x|)``.
Besides evaluation, this module computes the lambda-convexity constant
(the infimum of the Hessian spectrum of ``W``), the admissible droplet
radius ``delta_prime`` and the quadratic lower-bound constant ``c_w``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

FAMILIES = ("GaussianWell", "UserRadial")

# grid used for every numerical check on a user supplied profile
R_MAX = 10.0
N_GRID = 10_000


class InvalidPotentialError(ValueError):
    """Raised when a potential violates one of the admissibility clauses."""

    def __init__(self, clause: str, detail: str = ""):
        self.clause = clause
        msg = f"potential violates admissibility clause '{clause}'"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class InvalidDeltaError(ValueError):
    """Raised when a droplet radius fails the delta-condition w(δ) + λδ²/2 > 0."""


@dataclass(frozen=True)
class PotentialSpec:
    """Radial interaction potential with its derived constants.

    Use :meth:`gaussian_well`, :meth:`user_radial` or :meth:`from_expression`
    rather than the raw constructor.
    """

    family: str
    params: tuple[float, ...] = ()
    funcs: tuple[Callable, Callable, Callable] | None = field(default=None, repr=False, compare=False)
    expression: str | None = None
    lam: float = field(init=False)
    c_w: float = field(init=False)
    delta_prime: float = field(init=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidPotentialError("family", f"unknown family {self.family!r}")
        if self.family == "GaussianWell":
            if len(self.params) != 2:
                raise InvalidPotentialError("params", "GaussianWell takes (amplitude, width)")
            a, s = self.params
            if not (a > 0 and s > 0):
                raise InvalidPotentialError("params", "amplitude and width must be positive")
        elif self.funcs is None:
            raise InvalidPotentialError("params", "UserRadial needs (w, w', w'') callbacks")
        _validate(self)
        lam = lambda_convexity(self)
        object.__setattr__(self, "lam", lam)
        dp = _delta_prime(self)
        object.__setattr__(self, "delta_prime", dp)
        object.__setattr__(self, "c_w", _fit_c_w(self))

    @classmethod
    def gaussian_well(cls, amplitude: float = 1.0, width: float = 1.0) -> "PotentialSpec":
        return cls("GaussianWell", (float(amplitude), float(width)))

    @classmethod
    def user_radial(cls, w, dw, d2w, params: Sequence[float] = ()) -> "PotentialSpec":
        return cls("UserRadial", tuple(float(p) for p in params), funcs=(w, dw, d2w))

    @classmethod
    def from_expression(cls, expression: str) -> "PotentialSpec":
        """Build a UserRadial potential from a sympy expression in ``r``."""
        import sympy

        r = sympy.Symbol("r", real=True)
        expr = sympy.sympify(expression, locals={"r": r})
        derivs = [expr, sympy.diff(expr, r), sympy.diff(expr, r, 2)]
        funcs = tuple(sympy.lambdify(r, e, "numpy") for e in derivs)
        vectorized = tuple(_broadcasting(f) for f in funcs)
        return cls("UserRadial", (), funcs=vectorized, expression=expression)

    def to_config(self) -> dict:
        out = {"family": self.family}
        if self.family == "GaussianWell":
            out["params"] = list(self.params)
        elif self.expression is not None:
            out["expression"] = self.expression
        return out


def _broadcasting(f):
    def wrapped(r):
        r = np.asarray(r, dtype=float)
        return np.broadcast_to(np.asarray(f(r), dtype=float), r.shape).copy()

    return wrapped


def eval_w(spec: PotentialSpec, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(w(r), w'(r), w''(r))``; vectorized over ``r``."""
    r = np.asarray(r, dtype=float)
    if spec.family == "GaussianWell":
        a, s = spec.params
        e = np.exp(-(r * r) / (s * s))
        w = a * (1.0 - e)
        dw = a * 2.0 * r / (s * s) * e
        d2w = a * 2.0 / (s * s) * (1.0 - 2.0 * r * r / (s * s)) * e
        return w, dw, d2w
    w, dw, d2w = (np.asarray(f(r), dtype=float) for f in spec.funcs)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(dw)) and np.all(np.isfinite(d2w))):
        raise InvalidPotentialError("finite", "non-finite value of w or its derivatives")
    return w, dw, d2w


def w_prime_over_r(spec: PotentialSpec, r) -> np.ndarray:
    """``w'(r)/r`` with the removable singularity at 0 filled by ``w''(0)``."""
    r = np.asarray(r, dtype=float)
    if spec.family == "GaussianWell":
        a, s = spec.params
        return a * 2.0 / (s * s) * np.exp(-(r * r) / (s * s))
    _, dw, _ = eval_w(spec, r)
    d2w0 = eval_w(spec, 0.0)[2]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(np.abs(r) > 1e-8, dw / np.where(r == 0, 1.0, r), d2w0)
    return out


def _validate(spec: PotentialSpec) -> None:
    r = np.linspace(0.0, R_MAX, N_GRID + 1)
    w, dw, d2w = eval_w(spec, r)
    w0, dw0, d2w0 = (float(v) for v in eval_w(spec, 0.0))
    if abs(w0) > 1e-12:
        raise InvalidPotentialError("w(0)=0", f"w(0) = {w0}")
    if abs(dw0) > 1e-12:
        raise InvalidPotentialError("w'(0)=0", f"w'(0) = {dw0}")
    wm, dwm, d2wm = eval_w(spec, -r)
    if np.max(np.abs(wm - w)) > 1e-12 * max(1.0, np.max(np.abs(w))):
        raise InvalidPotentialError("even", "w(-r) != w(r)")
    # an exact zero of w' is tolerated only once w has saturated (underflow in the tail)
    wmax = float(np.max(w))
    flat = (dw[1:] == 0) & (w[1:] >= wmax - 1e-12 * max(1.0, abs(wmax)))
    bad_mask = (dw[1:] <= 0) & ~flat
    if np.any(bad_mask):
        bad = r[1:][bad_mask][0]
        raise InvalidPotentialError("w'(r)>0 for r>0", f"w'({bad}) <= 0")
    min_d2w = float(np.min(d2w))
    if not (min_d2w < 0):
        raise InvalidPotentialError("-min w'' > 0", "w'' never negative; a bounded W cannot be convex")
    if not (d2w0 > -min_d2w):
        raise InvalidPotentialError("w''(0) > -min w''", f"w''(0) = {d2w0}, min w'' = {min_d2w}")


def lambda_convexity(spec: PotentialSpec) -> float:
    """Infimum over r > 0 of min(w''(r), w'(r)/r)."""
    if spec.family == "GaussianWell":
        a, s = spec.params
        lam = -4.0 * a * np.exp(-1.5) / (s * s)
    else:
        r = np.linspace(0.0, R_MAX, N_GRID + 1)[1:]

        def radial_min(x):
            x = np.asarray(x, dtype=float)
            return np.minimum(eval_w(spec, x)[2], w_prime_over_r(spec, x))

        vals = radial_min(r)
        i = int(np.argmin(vals))
        lo, hi = r[max(i - 1, 0)], r[min(i + 1, len(r) - 1)]
        res = minimize_scalar(lambda x: float(radial_min(x)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        lam = min(float(vals[i]), float(res.fun))
    if lam >= 0:
        raise InvalidPotentialError("lambda<0", f"computed lambda = {lam} >= 0")
    return float(lam)


def delta_gap(spec: PotentialSpec, delta) -> np.ndarray:
    """The quantity w(δ) + λδ²/2 whose positivity is the delta-condition."""
    delta = np.asarray(delta, dtype=float)
    return eval_w(spec, delta)[0] + 0.5 * spec.lam * delta * delta


def delta_admissible(spec: PotentialSpec, delta: float) -> bool:
    if delta <= 0:
        raise ValueError("delta must be positive")
    return bool(delta_gap(spec, delta) > 0)


def check_delta(spec: PotentialSpec, delta: float) -> None:
    """Raise :class:`InvalidDeltaError` unless 0 < δ < δ′ and w(δ) + λδ²/2 > 0."""
    if not delta > 0:
        raise InvalidDeltaError(f"delta must be positive, got {delta}")
    gap = float(delta_gap(spec, delta))
    if delta >= spec.delta_prime or gap <= 0:
        raise InvalidDeltaError(
            f"delta = {delta} violates the delta-condition: need w(delta) + lambda*delta^2/2 > 0 "
            f"on the increasing range delta < delta' = {spec.delta_prime:.6g} "
            f"(w(delta) + lambda*delta^2/2 = {gap:.6g})"
        )


def _delta_prime(spec: PotentialSpec) -> float:
    # first positive zero of d/dδ [w(δ) + λδ²/2] = w'(δ) + λδ
    if spec.family == "GaussianWell":
        a, s = spec.params
        # 2a/s² e^{-δ²/s²} = -λ  →  δ² = s² ln(2a / (-λ s²))
        return float(s * np.sqrt(np.log(2.0 * a / (-spec.lam * s * s))))

    def slope(x):
        return float(eval_w(spec, x)[1] + spec.lam * x)

    r = np.linspace(0.0, R_MAX, N_GRID + 1)[1:]
    vals = eval_w(spec, r)[1] + spec.lam * r
    idx = np.nonzero(vals <= 0)[0]
    if len(idx) == 0:
        raise InvalidPotentialError("delta'", f"w'(δ) + λδ stays positive on (0, {R_MAX}]")
    j = idx[0]
    if j == 0:
        raise InvalidPotentialError("w''(0) > -min w''", "delta-condition fails arbitrarily close to 0")
    return float(brentq(slope, r[j - 1], r[j], xtol=1e-15, rtol=1e-15))


def _fit_c_w(spec: PotentialSpec) -> float:
    delta = np.linspace(0.0, 0.99 * spec.delta_prime, 2001)[1:]
    return float(np.min(delta_gap(spec, delta) / delta**2))
