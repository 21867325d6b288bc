"""Reduced hub equation, fluctuation extraction, fixed points and coherence.

A hub with normalized degree ``kappa`` follows

    x(t+1) = f(x) + alpha * kappa * g(x) + alpha * zeta(t)   (mod 1)

where ``g`` is the mean field of the coupling against the invariant density.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.optimize import brentq

from .dynamics import MapSpec, Trajectory, wrap
from .measure import MeanField

__all__ = [
    "ReducedHubModel",
    "FluctuationSeries",
    "CoherenceResult",
    "FixedPoint",
    "circle_gap",
    "extract_zeta",
    "zeta_mean_abs",
    "iterate_reduced",
    "fixed_points_stability",
    "coherence",
    "is_two_cycle",
]


@dataclass(frozen=True)
class ReducedHubModel:
    map: MapSpec
    g: MeanField
    alpha: float
    kappa: float = 1.0

    def __post_init__(self):
        if not 0 < self.kappa <= 1:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")

    def drift(self, x):
        """Lift of the deterministic part, ``f(x) + alpha * kappa * g(x)``."""
        x = np.asarray(x, dtype=float)
        return self.map.lift(x) + self.alpha * self.kappa * self.g(x)

    def drift_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return self.map.derivative(x) + self.alpha * self.kappa * self.g.derivative(x)


@dataclass(frozen=True, eq=False)
class FluctuationSeries:
    zeta: np.ndarray
    t_range: tuple

    def __len__(self):
        return int(self.zeta.size)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.zeta))) if self.zeta.size else 0.0


@dataclass(frozen=True)
class CoherenceResult:
    r: float
    psi: float


@dataclass(frozen=True)
class FixedPoint:
    x: float
    k: int
    multiplier: float
    stable: bool


def circle_gap(a, b):
    """Signed representative of ``a - b`` on the circle, in ``(-1/2, 1/2]``."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return d - np.ceil(d - 0.5)


def extract_zeta(trajectory: Union[Trajectory, np.ndarray], model: ReducedHubModel, hub: int = 0,
                 t0: int = 0) -> FluctuationSeries:
    """Residual of the reduced equation along a recorded hub series.

    ``zeta(t) = gap(x(t+1), f(x(t)) + alpha kappa g(x(t))) / alpha``. Accepts a
    :class:`Trajectory` (using ``hub``'s series) or a plain array of positions.
    """
    if model.alpha <= 0:
        raise ValueError("zeta is undefined for alpha = 0")
    if isinstance(trajectory, Trajectory):
        x = trajectory.node_series(hub)
        t0 = int(trajectory.times[0]) if len(trajectory) else 0
    else:
        x = np.asarray(trajectory, dtype=float)
    if x.size < 2:
        return FluctuationSeries(np.zeros(0), (t0, t0))
    pred = model.drift(x[:-1])
    zeta = circle_gap(x[1:], pred) / model.alpha
    if not np.all(np.isfinite(zeta)):
        raise ValueError("non-finite fluctuation values")
    return FluctuationSeries(zeta, (t0, t0 + x.size - 1))


def zeta_mean_abs(series) -> float:
    z = series.zeta if isinstance(series, FluctuationSeries) else np.asarray(series, dtype=float)
    if z.size == 0:
        raise ValueError("empty fluctuation series")
    return float(np.mean(np.abs(z)))


def iterate_reduced(model: ReducedHubModel, x0: float, T: int, zeta_source=None,
                    seed: Optional[int] = None) -> np.ndarray:
    """Orbit ``x(0), ..., x(T)`` of the reduced map.

    ``zeta_source`` is ``None`` (no fluctuations), an array of at least ``T``
    values, or a float amplitude ``c`` for i.i.d. uniform ``zeta`` on
    ``[-c, c]`` drawn from ``seed``.
    """
    if not 0 <= x0 < 1:
        raise ValueError("x0 must lie in [0, 1)")
    if zeta_source is None:
        zeta = np.zeros(T)
    elif np.isscalar(zeta_source):
        rng = np.random.default_rng(seed)
        zeta = rng.uniform(-float(zeta_source), float(zeta_source), size=T)
    else:
        zeta = np.asarray(zeta_source, dtype=float)
        if zeta.size < T:
            raise ValueError(f"zeta series has {zeta.size} values, need {T}")
    out = np.empty(T + 1)
    out[0] = x0
    x = np.array([float(x0)])
    for t in range(T):
        x = wrap(model.drift(x) + model.alpha * zeta[t])
        out[t + 1] = x[0]
    return out


def fixed_points_stability(model: ReducedHubModel, grid: int = 4096, tol: float = 1e-12) -> list:
    """All fixed points of the reduced circle map found by grid bracketing and Brent's method.

    Solves ``f(x) + alpha kappa g(x) - x = k`` for every integer ``k`` in the
    range of the left side on ``[0, 1]``. Exact zeros at grid points are kept
    as they are; ``x = 1`` is identified with ``x = 0``.
    """
    xs = np.arange(grid + 1) / grid
    H = model.drift(xs) - xs
    found = []
    for k in range(int(math.floor(H.min())), int(math.ceil(H.max())) + 1):
        h = H - k
        found.extend((float(r) % 1.0, k) for r in xs[h == 0.0])
        s = np.sign(h)

        def F(x, k=k):
            return float(model.drift(x) - x - k)

        for m in np.flatnonzero(s[:-1] * s[1:] < 0):
            found.append((brentq(F, xs[m], xs[m + 1], xtol=tol, rtol=4 * np.finfo(float).eps) % 1.0, k))
    found.sort()
    points = []
    for x, k in found:
        if any(min(abs(x - p.x), 1 - abs(x - p.x)) < 1e-9 for p in points):
            continue
        m = float(model.drift_derivative(np.array([x]))[0])
        points.append(FixedPoint(x, k, m, abs(m) < 1.0))
    return points


def coherence(x1, x2) -> CoherenceResult:
    """Phase-coherence ``r e^{i psi} = mean_t exp(2 pi i (x1(t) - x2(t)))``; ``psi`` in ``(-pi, pi]``."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise ValueError("series lengths differ")
    if x1.size == 0:
        raise ValueError("empty series")
    z = complex(np.mean(np.exp(2j * math.pi * (x1 - x2))))
    r = min(1.0, abs(z))
    psi = cmath.phase(z)
    if psi <= -math.pi + 1e-12:
        psi = math.pi
    return CoherenceResult(r, psi)


def is_two_cycle(orbit, tol: float = 1e-6, tail: int = 50) -> bool:
    """True when the orbit tail has period exactly two (and not one)."""
    x = np.asarray(orbit, dtype=float)[-tail:]
    per2 = np.max(np.abs(circle_gap(x[2:], x[:-2])))
    per1 = np.max(np.abs(circle_gap(x[1:], x[:-1])))
    return bool(per2 < tol and per1 > 100 * tol)
