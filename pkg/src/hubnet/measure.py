"""Transfer operators on piecewise-constant densities over the circle.

Densities live on ``N`` equal bins of ``[0, 1)`` and are normalized to mean 1.
The discretized operator is the Ulam matrix ``P[b', b]``: the fraction of bin
``b`` that the map sends into bin ``b'``. Columns sum to 1, so ``P @ phi``
preserves mass and positivity.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .dynamics import CouplingSpec, MapSpec, NonExpandingWarning

__all__ = [
    "ConvergenceError",
    "DensityGrid",
    "UlamOperator",
    "ConeParams",
    "MeanField",
    "ulam_matrix",
    "ulam_matrix_exact",
    "invariant_density",
    "transfer_apply",
    "hilbert_metric",
    "in_cone",
    "mean_field_g",
    "perturbation_gap",
    "c1_distance",
]


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True, eq=False)
class DensityGrid:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ValueError("density values must be a non-empty 1-d array")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and non-negative")
        object.__setattr__(self, "values", v)

    @classmethod
    def normalized(cls, values) -> "DensityGrid":
        v = np.asarray(values, dtype=float)
        m = v.mean()
        if not m > 0:
            raise ValueError("cannot normalize a density with zero mass")
        return cls(v / m)

    @classmethod
    def uniform(cls, bins: int) -> "DensityGrid":
        return cls(np.ones(bins))

    @property
    def bins(self) -> int:
        return int(self.values.size)

    @property
    def mass(self) -> float:
        return float(self.values.mean())

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.bins) + 0.5) / self.bins


@dataclass(frozen=True, eq=False)
class UlamOperator:
    matrix: sp.csr_matrix

    @property
    def bins(self) -> int:
        return int(self.matrix.shape[0])

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def triplets(self):
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]


@dataclass(frozen=True)
class ConeParams:
    a: float = 5.0
    nu: float = 1.0
    rho0: float = 0.25

    def __post_init__(self):
        if self.a <= 0 or not 0 < self.nu <= 1 or not 0 < self.rho0 <= 0.5:
            raise ValueError(f"invalid cone parameters {self}")


def _check_bins(N: int):
    if N < 2:
        raise ValueError("need at least 2 bins")
    if N & (N - 1):
        raise ValueError(f"bins must be a power of two, got {N}")


def _expansion_warning(map: MapSpec, x: np.ndarray):
    low = float(np.min(np.abs(map.derivative(x))))
    if low < 1.0:
        warnings.warn(f"map {map.name!r} has |f'| = {low:.4g} < 1", NonExpandingWarning, stacklevel=3)


def ulam_matrix(map: MapSpec, N: int = 1024, samples_per_bin: int = 64) -> UlamOperator:
    """Ulam matrix from ``samples_per_bin`` stratified midpoints per bin.

    Noise is ignored. For the doubling map with power-of-two ``N`` and an even
    sample count every entry is exactly 0 or 1/2.
    """
    _check_bins(N)
    if samples_per_bin < 16:
        raise ValueError("samples_per_bin must be at least 16")
    S = int(samples_per_bin)
    x = ((np.arange(N)[:, None] + (np.arange(S)[None, :] + 0.5) / S) / N).ravel()
    _expansion_warning(map, x)
    fx = map(x)
    target = np.minimum((fx * N).astype(np.int64), N - 1)
    source = np.repeat(np.arange(N), S)
    P = sp.csr_matrix((np.full(x.size, 1.0 / S), (target, source)), shape=(N, N))
    P.sum_duplicates()
    return UlamOperator(_renormalize(P))


def _renormalize(P: sp.csr_matrix) -> sp.csr_matrix:
    sums = np.asarray(P.sum(axis=0)).ravel()
    return sp.csr_matrix(P @ sp.diags(1.0 / sums))


def _inverse_lift(map: MapSpec, targets: np.ndarray, increasing: bool) -> np.ndarray:
    lo = np.zeros_like(targets)
    hi = np.ones_like(targets)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        above = map.lift(mid) >= targets
        if not increasing:
            above = ~above
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def ulam_matrix_exact(map: MapSpec, N: int = 1024) -> UlamOperator:
    """Ulam matrix from exact interval intersections.

    The preimages of all bin edges are located by bisection of the (monotone)
    lift. Together with the source bin edges they cut ``[0, 1)`` into pieces
    that each lie in one source bin and map into one target bin, so the entries
    are exact up to root-finding precision. Much finer than sampling when the
    operator difference of two nearby maps is needed.
    """
    _check_bins(N)
    f0 = float(map.lift(np.array([0.0]))[0])
    f1 = float(map.lift(np.array([1.0]))[0])
    increasing = f1 > f0
    lo, hi = min(f0, f1), max(f0, f1)
    k = np.arange(math.ceil(lo * N), math.floor(hi * N) + 1)
    levels = k / N
    pre = _inverse_lift(map, levels, increasing)
    cuts = np.unique(np.concatenate([np.arange(N + 1) / N, pre]))
    cuts = cuts[(cuts >= 0.0) & (cuts <= 1.0)]
    left, right = cuts[:-1], cuts[1:]
    keep = right > left
    left, right = left[keep], right[keep]
    mid = 0.5 * (left + right)
    _expansion_warning(map, mid)
    source = np.minimum((mid * N).astype(np.int64), N - 1)
    target = np.minimum((map(mid) * N).astype(np.int64), N - 1)
    P = sp.csr_matrix(((right - left) * N, (target, source)), shape=(N, N))
    P.sum_duplicates()
    return UlamOperator(_renormalize(P))


def transfer_apply(op: UlamOperator, density: DensityGrid) -> DensityGrid:
    if density.bins != op.bins:
        raise ValueError(f"density has {density.bins} bins, operator has {op.bins}")
    return DensityGrid(np.maximum(op.matrix @ density.values, 0.0))


def invariant_density(op: UlamOperator, tol: float = 1e-12, max_iters: int = 10_000) -> DensityGrid:
    """Power iteration from the uniform density until the sup-norm step is below ``tol``."""
    phi = np.ones(op.bins)
    residual = math.inf
    for _ in range(max_iters):
        nxt = op.matrix @ phi
        nxt /= nxt.mean()
        residual = float(np.max(np.abs(nxt - phi)))
        phi = nxt
        if residual < tol:
            return DensityGrid(phi)
    raise ConvergenceError(f"power iteration did not converge in {max_iters} iterations (residual {residual:.3g})",
                           residual)


def _cone_pairs(N: int, cone: ConeParams):
    """Ordered grid pairs ``(x, y)`` with ``0 < d(x, y) <= rho0`` and their bounds ``e^{a d^nu}``."""
    max_shift = int(math.floor(cone.rho0 * N + 1e-9))
    shifts = np.arange(1, max_shift + 1)
    shifts = np.concatenate([shifts, -shifts])
    d = np.minimum(np.abs(shifts), N - np.abs(shifts)) / N
    uniq, keep = np.unique(np.mod(shifts, N), return_index=True)
    return uniq, np.exp(cone.a * d[keep] ** cone.nu)


def in_cone(phi: DensityGrid, cone: ConeParams) -> bool:
    """Discrete membership: positive and ``phi(x) <= e^{a d^nu} phi(y)`` on all close pairs."""
    v = phi.values
    if np.any(v <= 0):
        return False
    shifts, e = _cone_pairs(v.size, cone)
    for s, es in zip(shifts, e):
        if np.any(v > es * np.roll(v, -s)):
            return False
    return True


def hilbert_metric(phi1: DensityGrid, phi2: DensityGrid, cone: ConeParams = ConeParams()) -> float:
    """Projective distance of two densities in the discrete cone ``C(a, nu)``.

    ``alpha`` is the infimum and ``beta`` the supremum, over grid points and
    over ordered pairs ``(x, y)`` with ``0 < d <= rho0``, of ``phi2/phi1`` and
    ``(e^{a d^nu} phi2(y) - phi2(x)) / (e^{a d^nu} phi1(y) - phi1(x))``;
    the distance is ``log(beta / alpha)``. Returns ``inf`` when either density
    is outside the discrete cone.
    """
    v1, v2 = phi1.values, phi2.values
    if v1.size != v2.size:
        raise ValueError("densities on different grids")
    if np.any(v1 <= 0) or np.any(v2 <= 0):
        raise ValueError("Hilbert metric requires strictly positive densities")
    if not (in_cone(phi1, cone) and in_cone(phi2, cone)):
        return math.inf
    ratio = v2 / v1
    lo, hi = float(ratio.min()), float(ratio.max())
    shifts, e = _cone_pairs(v1.size, cone)
    for s, es in zip(shifts, e):
        den = es * np.roll(v1, -s) - v1
        num = es * np.roll(v2, -s) - v2
        # pairs on the cone boundary carry no constraint when both vanish
        ok = den > 0
        if np.any(~ok & (num != 0)):
            return math.inf
        q = num[ok] / den[ok]
        if q.size:
            lo = min(lo, float(q.min()))
            hi = max(hi, float(q.max()))
    if lo <= 0:
        return math.inf
    return max(0.0, math.log(hi / lo))


@dataclass(frozen=True, eq=False)
class MeanField:
    """``g(x) = sum_p u_p(x) <v_p>`` with ``<v_p>`` the density average of ``v_p``."""

    coupling: CouplingSpec
    means: np.ndarray
    grid: np.ndarray
    values: np.ndarray
    deriv: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t, m in zip(self.coupling.terms, self.means):
            out = out + m * t.u(x)
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t, m in zip(self.coupling.terms, self.means):
            out = out + m * t.du(x)
        return out


def mean_field_g(coupling: CouplingSpec, density: DensityGrid) -> MeanField:
    """Effective field felt by a hub when its neighbours are distributed as ``density``.

    The averages use the midpoint rule on the density grid.
    """
    x = density.centers
    phi = density.values / density.mass
    means = np.array([float(np.mean(t.v(x) * phi)) for t in coupling.terms])
    g = MeanField(coupling, means, x, np.zeros_like(x), np.zeros_like(x))
    object.__setattr__(g, "values", g(x))
    object.__setattr__(g, "deriv", g.derivative(x))
    return g


def c1_distance(f: MapSpec, f_t: MapSpec, samples: int = 4096) -> float:
    """Sampled ``max(sup|f_t - f|, sup|f_t' - f'|)`` with the integer lift offset removed."""
    x = (np.arange(samples) + 0.5) / samples
    d0 = f_t.lift(x) - f.lift(x)
    d0 = d0 - np.round(np.median(d0))
    d1 = f_t.derivative(x) - f.derivative(x)
    return float(max(np.max(np.abs(d0)), np.max(np.abs(d1))))


def perturbation_gap(f: MapSpec, f_t: MapSpec, N: int, test_densities: Sequence[DensityGrid]):
    """Sup-norm gap ``max_phi ||L phi - L_t phi||`` between two Ulam operators.

    Both operators are assembled with :func:`ulam_matrix_exact`; stratified
    sampling resolves entries only to ``1 / samples_per_bin``, far coarser than
    the gaps of interest. Returns ``(gap, eps)`` with ``eps`` the sampled C^1
    distance of the maps, so ``gap / eps**nu`` estimates the constant.
    """
    L = ulam_matrix_exact(f, N)
    Lt = ulam_matrix_exact(f_t, N)
    gap = 0.0
    for phi in test_densities:
        if phi.bins != N:
            raise ValueError("test density on a different grid")
        gap = max(gap, float(np.max(np.abs(L.matrix @ phi.values - Lt.matrix @ phi.values))))
    return gap, c1_distance(f, f_t)
