"""Strongly heterogeneous expected-degree sequences and directed Chung-Lu graphs.

Nodes are indexed from 0. The hubs are nodes ``0 .. ell-1`` and node 0 is the
main hub, whose expected degree is ``delta``. ``A[i, j] = 1`` means node ``i``
receives input from node ``j``, so ``j`` is stored in ``in_neighbors(i)``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "HeterogeneityError",
    "HeterogeneityParams",
    "DegreeSequence",
    "DirectedGraph",
    "Check",
    "ValidationReport",
    "DegreeStats",
    "ConcentrationResult",
    "IsolationProbability",
    "build_example1",
    "validate_heterogeneity",
    "sample_graph",
    "block_generator",
    "degree_stats",
    "concentration_check",
    "y_statistic",
    "isolated_hub_probability",
]

# Degree classes up to this size are sampled with one uniform per pair.
_SMALL_CLASS = 32


class HeterogeneityError(ValueError):
    """A degree sequence violates one of the strong heterogeneity conditions."""


@dataclass(frozen=True)
class HeterogeneityParams:
    n: int
    gamma: float = 1.0
    theta: float = 0.5
    sigma_delta: float = 0.5
    ell: Optional[int] = None
    kappas: Optional[Sequence[float]] = None
    low_degree_base: Optional[float] = None


@dataclass(frozen=True, eq=False)
class DegreeSequence:
    """Expected degrees ``w`` together with the derived quantities.

    ``delta`` is ``w[0]``, ``rho`` is ``1 / sum(w)`` (0 for the all-zero
    sequence) and ``kappas`` are the normalized hub degrees ``w[:ell] / delta``.
    The constructor does not enforce ordering; use
    :func:`validate_heterogeneity` for a report.
    """

    w: np.ndarray
    ell: int
    delta: float = field(init=False)
    rho: float = field(init=False)
    kappas: np.ndarray = field(init=False)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("w must be a non-empty 1-d sequence")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("expected degrees must be finite and non-negative")
        if not 0 <= self.ell <= w.size:
            raise ValueError(f"ell={self.ell} outside [0, {w.size}]")
        w.setflags(write=False)
        total = float(w.sum())
        if total > 0 and not math.isfinite(1.0 / total):
            raise ValueError("sum of expected degrees is too small to normalize")
        delta = float(w[0])
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "rho", 1.0 / total if total > 0 else 0.0)
        kappas = w[: self.ell] / delta if delta > 0 else np.zeros(self.ell)
        object.__setattr__(self, "kappas", kappas)

    @property
    def n(self) -> int:
        return int(self.w.size)

    @property
    def delta_rho(self) -> float:
        return self.delta**2 * self.rho

    def p(self, i: int, j: int) -> float:
        """Connection probability of the ordered pair (i, j)."""
        return float(self.w[i] * self.w[j] * self.rho)


def build_example1(params: HeterogeneityParams, delta_override: Optional[float] = None) -> DegreeSequence:
    """Hubs ``kappa_i * delta`` followed by ``n - ell`` equal low degrees.

    Without an override ``delta = round(n**sigma_delta)``. When ``params.ell``
    is unset the hub count is ``floor(delta**theta)``; missing ``kappas``
    default to all ones and a missing ``low_degree_base`` to
    ``floor(delta**(1 - gamma))``.

    Raises:
        HeterogeneityError: naming the violated condition (ordering,
            ``delta**2 * rho <= 1``, ``ell < n``).
    """
    n = int(params.n)
    delta = float(delta_override) if delta_override is not None else float(round(n**params.sigma_delta))
    if delta <= 0:
        raise HeterogeneityError(f"delta must be positive, got {delta}")
    ell = int(params.ell) if params.ell is not None else int(math.floor(delta**params.theta))
    if not 1 <= ell < n:
        raise HeterogeneityError(f"hub count ell={ell} must satisfy 1 <= ell < n={n}")
    kappas = np.ones(ell) if params.kappas is None else np.asarray(params.kappas, dtype=float)
    if kappas.shape != (ell,):
        raise HeterogeneityError(f"expected {ell} kappas, got {kappas.size}")
    if kappas[0] != 1.0:
        raise HeterogeneityError(f"N1: kappa_1 must equal 1, got {kappas[0]}")
    if np.any(np.diff(kappas) > 0) or kappas[-1] <= 0:
        raise HeterogeneityError("N1: kappas must be non-increasing and positive")
    low = (
        float(params.low_degree_base)
        if params.low_degree_base is not None
        else float(math.floor(delta ** (1.0 - params.gamma)))
    )
    if low < 0 or low > kappas[-1] * delta:
        raise HeterogeneityError(
            f"ordering: low degree {low} exceeds smallest hub degree {kappas[-1] * delta}"
        )
    w = np.concatenate([kappas * delta, np.full(n - ell, low)])
    seq = DegreeSequence(w, ell)
    if seq.delta_rho > 1.0 + 1e-12:
        raise HeterogeneityError(
            f"DeltaRho: delta^2 * rho = {seq.delta_rho:.6g} > 1, some p_ij would exceed 1"
        )
    return seq


@dataclass(frozen=True)
class Check:
    name: str
    passed: Optional[bool]  # None: not applicable
    detail: str


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed(self) -> list:
        return [c.name for c in self.checks if c.passed is False]


def validate_heterogeneity(
    seq: DegreeSequence,
    params: HeterogeneityParams,
    constant: float = 1.0,
    growth_slack: float = 0.1,
) -> ValidationReport:
    """Evaluate every heterogeneity inequality at finite ``n``.

    ``a <~ b`` is read as ``a <= constant * b``. ``growth_slack`` is the small
    exponent slack in the upper growth bound on ``delta``. For ``gamma >= 1``
    the lower growth bound degenerates and is reported as not applicable.
    """
    c = float(constant)
    w, ell, n, delta = seq.w, seq.ell, seq.n, seq.delta
    gamma, theta = params.gamma, params.theta
    checks = []

    order_ok = bool(np.all(np.diff(w) <= 0))
    checks.append(Check("ordering", order_ok, "w non-increasing" if order_ok else "w is not non-increasing"))

    k = seq.kappas
    n1 = bool(ell >= 1 and abs(k[0] - 1.0) < 1e-12 and np.all(np.diff(k) <= 0) and k[-1] > 0 and k[0] <= 1.0)
    checks.append(Check("N1", n1, f"kappas={np.array2string(k, precision=4)}"))

    low = w[ell:]
    log_n = math.log(n)
    if low.size:
        lower = bool(np.all(log_n <= c * low))
        cap = delta ** (1.0 - gamma)
        upper = bool(np.all(low <= c * cap))
        checks.append(Check("N2_lower", lower, f"log n={log_n:.4g} vs C*min(w_low)={c * low.min():.4g}"))
        checks.append(Check("N2_upper", upper, f"max(w_low)={low.max():.4g} vs C*delta^(1-gamma)={c * cap:.4g}"))
    else:
        checks.append(Check("N2_lower", None, "no low-degree nodes"))
        checks.append(Check("N2_upper", None, "no low-degree nodes"))

    checks.append(Check("N3", bool(ell <= c * delta**theta), f"ell={ell} vs C*delta^theta={c * delta**theta:.4g}"))
    checks.append(Check("DeltaRho", bool(seq.delta_rho <= 1.0 + 1e-12), f"delta^2 rho={seq.delta_rho:.6g}"))

    if gamma < 1.0:
        bound = log_n ** (1.0 / (1.0 - gamma))
        checks.append(Check("growth_lower", bool(c * delta >= bound), f"delta={delta:.4g} vs (log n)^(1/(1-gamma))={bound:.4g}"))
    else:
        checks.append(Check("growth_lower", None, "degenerate for gamma >= 1"))
    top = max(n ** (0.5 + growth_slack), n ** (1.0 / (1.0 + gamma)))
    checks.append(Check("growth_upper", bool(delta <= c * top), f"delta={delta:.4g} vs C*max(...)={c * top:.4g}"))
    return ValidationReport(checks)


@dataclass(frozen=True, eq=False)
class DirectedGraph:
    """Immutable in-neighbour lists in compressed sparse row layout.

    ``indices[indptr[i]:indptr[i+1]]`` are the sorted in-neighbours of ``i``.
    ``delta`` is the coupling normalization carried over from the degree
    sequence the graph was sampled from.
    """

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    seed: Optional[int] = None
    delta: Optional[float] = None

    def __post_init__(self):
        indptr = np.ascontiguousarray(self.indptr, dtype=np.int64)
        indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        if indptr.shape != (self.n + 1,) or indptr[0] != 0 or indptr[-1] != indices.size:
            raise ValueError("malformed indptr")
        indptr.setflags(write=False)
        indices.setflags(write=False)
        object.__setattr__(self, "indptr", indptr)
        object.__setattr__(self, "indices", indices)

    @classmethod
    def from_edges(cls, n: int, edges, delta: Optional[float] = None, seed: Optional[int] = None) -> "DirectedGraph":
        """Build from ``(i, j)`` pairs meaning ``A[i, j] = 1``. Duplicates are merged."""
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError(f"edge endpoint outside [0, {n})")
        loops = e[:, 0] == e[:, 1]
        if loops.any():
            raise ValueError(f"self-loop at node {int(e[loops][0, 0])}")
        e = np.unique(e, axis=0)  # sorted by (i, j), duplicates merged
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(e[:, 0], minlength=n), out=indptr[1:])
        indices = e[:, 1].copy()
        return cls(n, indptr, indices, seed=seed, delta=delta)

    def in_neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i] : self.indptr[i + 1]]

    @property
    def n_edges(self) -> int:
        return int(self.indices.size)

    @property
    def in_degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def out_degree(self) -> np.ndarray:
        return np.bincount(self.indices, minlength=self.n)

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.indices.size)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def edges(self) -> np.ndarray:
        """``(n_edges, 2)`` array of ``(i, j)`` with ``A[i, j] = 1``, row-major order."""
        rows = np.repeat(np.arange(self.n, dtype=np.int64), self.in_degree)
        return np.column_stack([rows, self.indices])

    def same_as(self, other: "DirectedGraph") -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )


def block_generator(seed: int, block: int) -> np.random.Generator:
    """PCG64 stream for row block ``block``, spawned from ``seed`` via SeedSequence."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(block),))))


class _BlockSampler:
    """Samples the in-neighbours of a fixed block of consecutive rows.

    Columns are grouped by expected degree. Classes with at most
    ``small_class`` members get one uniform draw per (row, column); larger
    classes, whose columns share one probability per row, are sampled by
    geometric skip-ahead over the class members.
    """

    def __init__(self, seq: DegreeSequence, small_class: int):
        w = seq.w
        self.w = w
        self.rho = seq.rho
        values, inverse, counts = np.unique(w, return_inverse=True, return_counts=True)
        small = []
        self.large = []  # (weight, sorted members)
        for c in range(values.size - 1, -1, -1):
            if values[c] == 0:
                continue
            members = np.flatnonzero(inverse == c)
            if counts[c] <= small_class:
                small.append(members)
            else:
                self.large.append((float(values[c]), members))
        self.small = np.sort(np.concatenate(small)) if small else np.zeros(0, dtype=np.int64)
        self.small_w = w[self.small]

    def block(self, b: int, lo: int, hi: int, seed: int):
        rng = block_generator(seed, b)
        rows = np.arange(lo, hi)
        wr = self.w[lo:hi]
        out_r, out_c = [], []
        if self.small.size:
            p = wr[:, None] * self.small_w[None, :] * self.rho
            hit = rng.random(p.shape) < p
            hit &= self.small[None, :] != rows[:, None]
            r, c = np.nonzero(hit)
            out_r.append(rows[r])
            out_c.append(self.small[c])
        for wc, members in self.large:
            r, c = self._skip_ahead(rng, rows, wr * wc * self.rho, members)
            out_r.append(r)
            out_c.append(c)
        if not out_r:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        return np.concatenate(out_r), np.concatenate(out_c)

    @staticmethod
    def _skip_ahead(rng, rows, p, members):
        m = members.size
        pos = np.searchsorted(members, rows)
        has_self = (pos < m) & (members[np.minimum(pos, m - 1)] == rows)
        m_r = m - has_self.astype(np.int64)
        active = np.flatnonzero(p > 0)
        out_r, out_c = [], []
        full = active[p[active] >= 1.0]
        for a in full:
            out_r.append(np.full(m_r[a], a))
            out_c.append(np.arange(m_r[a]))
        active = active[p[active] < 1.0]
        if active.size:
            pa = p[active]
            mean = m_r[active] * pa
            budget = int(np.ceil(np.max(mean + 10.0 * np.sqrt(mean) + 20.0)))
            gaps = rng.geometric(np.repeat(pa[:, None], budget, axis=1))
            hits = np.cumsum(gaps, axis=1) - 1
            # extend rows whose budget ran out before passing the last member
            for q in np.flatnonzero(hits[:, -1] < m_r[active] - 1):
                last = hits[q, -1]
                extra = []
                while last < m_r[active[q]] - 1:
                    last = last + rng.geometric(pa[q])
                    extra.append(last)
                out_r.append(np.full(len(extra), active[q]))
                out_c.append(np.asarray(extra, dtype=np.int64))
            keep = hits < m_r[active][:, None]
            r, c = np.nonzero(keep)
            out_r.append(active[r])
            out_c.append(hits[r, c])
        if not out_r:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        r = np.concatenate(out_r).astype(np.int64)
        c = np.concatenate(out_c).astype(np.int64)
        keep = c < m_r[r]
        r, c = r[keep], c[keep]
        # candidate index -> member index, skipping the row itself
        c = c + (has_self[r] & (c >= pos[r]))
        return rows[r], members[c]


def sample_graph(seq: DegreeSequence, seed: int, workers: int = 1, block_size: int = 128,
                 small_class: int = _SMALL_CLASS) -> DirectedGraph:
    """Sample a directed Chung-Lu graph from ``seq``.

    Every ordered pair ``(i, j)`` with ``i != j`` is an independent Bernoulli
    edge with probability ``w_i * w_j * rho``. Expected cost is O(n + edges)
    (up to the hub classes). Rows are processed in fixed blocks of
    ``block_size`` with one random stream per block derived from
    ``(seed, block index)``, so the graph is identical for any ``workers``.
    """
    if seq.delta_rho > 1.0 + 1e-12:
        raise HeterogeneityError(f"DeltaRho: delta^2 * rho = {seq.delta_rho:.6g} > 1")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    sampler = _BlockSampler(seq, small_class)
    n = seq.n
    starts = list(range(0, n, block_size))
    jobs = [(b, lo, min(n, lo + block_size), seed) for b, lo in enumerate(starts)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: sampler.block(*job), jobs))
    else:
        parts = [sampler.block(*job) for job in jobs]
    rows = np.concatenate([p[0] for p in parts])
    cols = np.concatenate([p[1] for p in parts])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return DirectedGraph(n, indptr, cols, seed=seed, delta=seq.delta)


@dataclass(frozen=True, eq=False)
class DegreeStats:
    k_in: np.ndarray
    k_out: np.ndarray
    dev: np.ndarray
    mean: np.ndarray  # E[k_i] with the self pair excluded
    var: np.ndarray  # Var(k_i) with the self pair excluded
    var_with_self: np.ndarray  # w_i - w_i^2 rho^2 sum_j w_j^2


def _check_sizes(graph: DirectedGraph, seq: DegreeSequence):
    if graph.n != seq.n:
        raise ValueError(f"graph has {graph.n} nodes, degree sequence has {seq.n}")


def degree_stats(graph: DirectedGraph, seq: DegreeSequence) -> DegreeStats:
    """Empirical in/out degrees and the closed-form first two moments of ``k_i``."""
    _check_sizes(graph, seq)
    w, rho = seq.w, seq.rho
    s2 = float(np.sum(w**2))
    var_with_self = w - w**2 * rho**2 * s2
    self_term = w**2 * rho * (1.0 - w**2 * rho)
    k_in = graph.in_degree
    return DegreeStats(
        k_in=k_in,
        k_out=graph.out_degree,
        dev=k_in - w,
        mean=w * (1.0 - w * rho),
        var=var_with_self - self_term,
        var_with_self=var_with_self,
    )


@dataclass(frozen=True, eq=False)
class ConcentrationResult:
    fraction: float
    violating: np.ndarray  # node indices
    threshold: np.ndarray
    bound: np.ndarray  # w^(-2 eps) / scale^2
    chebyshev: np.ndarray  # min(1, Var(k_i) / threshold^2)


def concentration_check(
    graph: DirectedGraph,
    seq: DegreeSequence,
    eps: float,
    scale: float = 1.0,
    nodes=None,
) -> ConcentrationResult:
    """Fraction of nodes with ``|k_i - w_i| >= scale * w_i**(1/2 - eps)``.

    Nodes with ``w_i = 0`` are skipped. ``bound`` is the per-node bound
    ``w_i**(-2 eps)`` (divided by ``scale**2``); ``chebyshev`` is the bound
    that Chebyshev's inequality actually gives with the exact variance.
    """
    _check_sizes(graph, seq)
    idx = np.arange(seq.n) if nodes is None else np.asarray(nodes)
    idx = idx[seq.w[idx] > 0]
    w = seq.w[idx]
    dev = np.abs(graph.in_degree[idx] - w)
    thr = scale * w ** (0.5 - eps)
    bad = dev >= thr
    var = degree_stats(graph, seq).var[idx]
    return ConcentrationResult(
        fraction=float(bad.mean()) if idx.size else 0.0,
        violating=idx[bad],
        threshold=thr,
        bound=w ** (-2.0 * eps) / scale**2,
        chebyshev=np.minimum(1.0, var / thr**2),
    )


def y_statistic(graph: DirectedGraph, seq: DegreeSequence, i: int):
    """``Y_i = (number of low-degree in-neighbours of hub i / delta)**2``.

    Returns ``(Y_i, |Y_i - kappa_i**2|)``.
    """
    _check_sizes(graph, seq)
    if not 0 <= i < seq.ell:
        raise IndexError(f"hub index {i} outside [0, {seq.ell})")
    if seq.delta <= 0:
        raise ValueError("Y is undefined for delta = 0")
    nb = graph.in_neighbors(i)
    low = int(np.count_nonzero(nb >= seq.ell))
    y = (low / seq.delta) ** 2
    return y, abs(y - seq.kappas[i] ** 2)


@dataclass(frozen=True)
class IsolationProbability:
    log_prob: float
    log_bound: float

    @property
    def prob(self) -> float:
        return math.exp(self.log_prob)

    @property
    def bound(self) -> float:
        return math.exp(self.log_bound)


def isolated_hub_probability(seq: DegreeSequence, i: int) -> IsolationProbability:
    """Probability that node ``i`` receives no edge, and its exponential bound.

    Both are kept in log space: for realistic hubs the probability is far below
    the smallest double.
    """
    if not 0 <= i < seq.n:
        raise IndexError(i)
    p = seq.w[i] * seq.w * seq.rho
    p = np.clip(np.delete(p, i), 0.0, 1.0)  # rounding at delta^2 rho = 1
    with np.errstate(divide="ignore"):
        log_prob = float(np.sum(np.log1p(-p)))
    return IsolationProbability(log_prob=log_prob, log_bound=-float(np.sum(p)))
