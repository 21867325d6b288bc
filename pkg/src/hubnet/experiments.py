"""Parameter sweeps producing plot-ready tables.

Every sweep is a pure function of its arguments and a master seed. Per-point
seeds come from ``SeedSequence(master, spawn_key=(point, role))`` so points can
run in any order, in parallel, and still reproduce.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .dynamics import CouplingSpec, MapSpec, SimConfig, doubling_map, make_coupling, run_ensemble, simulate
from .graph import DegreeSequence, DirectedGraph, HeterogeneityParams, build_example1, sample_graph
from .measure import DensityGrid, invariant_density, mean_field_g, ulam_matrix
from .reduction import ReducedHubModel, coherence, extract_zeta

__all__ = [
    "NetworkSpec",
    "PowerLawFit",
    "SweepResult",
    "HomogeneityResult",
    "EnsembleStats",
    "derive_seed",
    "fit_power_law",
    "invariant_of",
    "sweep_alpha",
    "scaling_delta",
    "scaling_kappa",
    "homogeneity_rate",
    "mean_field_homogeneity",
    "ensemble_stats",
    "format_float",
    "write_manifest",
    "write_sweep",
]

GRAPH, DYNAMICS = 0, 1  # seed roles


def derive_seed(master: int, *key: int) -> int:
    """A 32-bit seed determined by ``master`` and the integer ``key`` path."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class NetworkSpec:
    """Example-1 style network: hubs ``kappa_i * delta`` and equal low degrees."""

    n: int = 20_000
    delta: float = 260.0
    kappas: tuple = (1.0, 0.99)
    low_degree: float = 7.0
    noise_amp: float = 1e-5

    def degree_sequence(self) -> DegreeSequence:
        params = HeterogeneityParams(
            n=self.n, gamma=1.0, ell=len(self.kappas), kappas=tuple(self.kappas), low_degree_base=self.low_degree
        )
        return build_example1(params, delta_override=self.delta)

    def build(self, seed: int, workers: int = 1) -> tuple:
        seq = self.degree_sequence()
        return seq, sample_graph(seq, seed, workers=workers)


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    narrow: bool  # fewer than 3 octaves of the axis


@dataclass(eq=False)
class SweepResult:
    axis: str
    values: np.ndarray
    stat_name: str
    stat: np.ndarray
    stderr: np.ndarray
    seeds: list
    fit: Optional[PowerLawFit] = None
    extra: dict = field(default_factory=dict)

    def rows(self):
        for v, s, e in zip(self.values, self.stat, self.stderr):
            yield float(v), float(s), float(e)


def fit_power_law(x, y, level: float = 0.95) -> PowerLawFit:
    """Least-squares line through ``(log x, log y)`` with a t-based interval on the slope.

    Raises:
        ValueError: for fewer than 3 points or non-positive data.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d and of equal length")
    if x.size < 3:
        raise ValueError(f"a power-law fit needs at least 3 points, got {x.size}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise ValueError("axis values are all equal")
    res = stats.linregress(lx, ly)
    half = float(stats.t.ppf(0.5 + level / 2, x.size - 2) * res.stderr)
    narrow = bool(math.log2(x.max() / x.min()) < 3)
    slope = float(res.slope)
    return PowerLawFit(slope, float(res.intercept), slope - half, slope + half, narrow)


def invariant_of(map: MapSpec, bins: int = 1024) -> DensityGrid:
    """Invariant density of the isolated map by Ulam discretization."""
    return invariant_density(ulam_matrix(map, bins))


def _block_stderr(series: np.ndarray, blocks: int = 10) -> float:
    """Standard error of the mean of a correlated series from ``blocks`` block means."""
    n = series.size // blocks
    if n < 1:
        return float("nan")
    means = series[: n * blocks].reshape(blocks, n).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(blocks))


def _pmap(fn, items, workers: int):
    if workers <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda it: fn(*it), items))


def _coherence_stderr(x1, x2, blocks: int = 10) -> float:
    n = x1.size // blocks
    if n < 1:
        return float("nan")
    rs = [coherence(x1[b * n:(b + 1) * n], x2[b * n:(b + 1) * n]).r for b in range(blocks)]
    return float(np.std(rs, ddof=1) / math.sqrt(blocks))


def sweep_alpha(spec: NetworkSpec, coupling: str, alphas: Sequence[float], config: Optional[SimConfig] = None,
                master_seed: int = 0, workers: int = 1, hubs: tuple = (0, 1)) -> SweepResult:
    """Coherence of two hubs across coupling strengths.

    One graph and one initial-condition seed serve every alpha, so the only
    thing that changes between points is the coupling strength.
    """
    seq = spec.degree_sequence()
    if seq.ell < 2:
        raise ValueError("sweep_alpha needs at least two hubs")
    config = config or SimConfig(alpha=0.0)
    g_seed = derive_seed(master_seed, GRAPH)
    x_seed = derive_seed(master_seed, DYNAMICS)
    graph = sample_graph(seq, g_seed)
    cs = make_coupling(coupling)
    fmap = doubling_map(spec.noise_amp)

    def point(a):
        cfg = replace(config, alpha=float(a), seed=x_seed, record_nodes=list(hubs), aggregate_nodes=[])
        tr = simulate(graph, seq, fmap, cs, cfg)
        x1, x2 = tr.node_series(hubs[0]), tr.node_series(hubs[1])
        c = coherence(x1, x2)
        return c.r, c.psi, _coherence_stderr(x1, x2)

    out = _pmap(point, [(a,) for a in alphas], workers)
    return SweepResult(
        axis="alpha",
        values=np.asarray(alphas, dtype=float),
        stat_name="r",
        stat=np.array([o[0] for o in out]),
        stderr=np.array([o[2] for o in out]),
        seeds=[g_seed, x_seed],
        extra={"psi": np.array([o[1] for o in out])},
    )


def _zeta_point(spec: NetworkSpec, config: SimConfig, master_seed: int, idx: int, hub: int, coupling: str,
                density: DensityGrid):
    g_seed = derive_seed(master_seed, idx, GRAPH)
    x_seed = derive_seed(master_seed, idx, DYNAMICS)
    seq, graph = spec.build(g_seed)
    fmap = doubling_map(spec.noise_amp)
    cs = make_coupling(coupling)
    cfg = replace(config, seed=x_seed, record_nodes=[hub], aggregate_nodes=[])
    tr = simulate(graph, seq, fmap, cs, cfg)
    model = ReducedHubModel(fmap, mean_field_g(cs, density), config.alpha, float(seq.kappas[hub]))
    z = np.abs(extract_zeta(tr, model, hub=hub).zeta)
    return float(z.mean()), _block_stderr(z), (g_seed, x_seed)


def _scaling(axis, values, specs, config, master_seed, hub, coupling, workers):
    if len(values) < 3:
        raise ValueError(f"scaling sweeps need at least 3 grid points, got {len(values)}")
    if config.alpha <= 0:
        raise ValueError("fluctuations are only defined for alpha > 0")
    density = invariant_of(doubling_map())
    out = _pmap(
        lambda i, s: _zeta_point(s, config, master_seed, i, hub, coupling, density),
        list(enumerate(specs)),
        workers,
    )
    stat = np.array([o[0] for o in out])
    values = np.asarray(values, dtype=float)
    return SweepResult(
        axis=axis,
        values=values,
        stat_name="mean_abs_zeta",
        stat=stat,
        stderr=np.array([o[1] for o in out]),
        seeds=[o[2] for o in out],
        fit=fit_power_law(values, stat),
    )


def scaling_delta(base: NetworkSpec, deltas: Sequence[float], config: Optional[SimConfig] = None,
                  master_seed: int = 0, workers: int = 1, coupling: str = "diffusive_sine") -> SweepResult:
    """Mean ``|zeta|`` of the top hub against the maximal degree, one graph per point."""
    config = config or SimConfig(alpha=0.1)
    specs = [replace(base, delta=float(d)) for d in deltas]
    return _scaling("delta", deltas, specs, config, master_seed, 0, coupling, workers)


def scaling_kappa(base: NetworkSpec, kappas: Sequence[float], config: Optional[SimConfig] = None,
                  master_seed: int = 0, workers: int = 1, coupling: str = "diffusive_sine") -> SweepResult:
    """Mean ``|zeta|`` of the second hub against its normalized degree."""
    config = config or SimConfig(alpha=0.1)
    for k in kappas:
        if not 0 < k <= base.kappas[0]:
            raise ValueError(f"second-hub kappa {k} must lie in (0, {base.kappas[0]}]")
    specs = [replace(base, kappas=(base.kappas[0], float(k)) + tuple(base.kappas[2:])) for k in kappas]
    for s in specs:
        if any(b > a for a, b in zip(s.kappas, s.kappas[1:])):
            raise ValueError("kappa grid breaks the non-increasing hub order")
    return _scaling("kappa", kappas, specs, config, master_seed, 1, coupling, workers)


def homogeneity_rate(gamma: float, nu: float, theta: float, kappa: float, delta: float) -> tuple:
    """Predicted decay ``delta**-eta`` of the mean-field error and the regime name.

    Regimes: ``i`` when ``theta < 1 - gamma nu / 2``; ``ii-a`` when
    ``1 - gamma nu / 2 < theta < 1/2``; ``ii-b`` when ``theta > 1/2 > 1 - gamma nu / 2``.
    """
    edge = 1.0 - gamma * nu / 2.0
    if theta < edge:
        eta, regime = gamma * nu / 2.0, "i"
    elif theta < 0.5:
        eta, regime = 0.5, "ii-a"
    else:
        eta, regime = 1.0 - theta + math.log(kappa) / (2.0 * math.log(delta)), "ii-b"
    return eta, delta**-eta, regime


@dataclass(eq=False)
class HomogeneityResult:
    errors: np.ndarray  # per hub, max over the window
    v: float
    kappas: np.ndarray
    eta: float
    rate: float
    regime: str
    graph_seed: int
    sim_seed: int


def mean_field_homogeneity(spec: NetworkSpec, psi: Callable, config: Optional[SimConfig] = None,
                           master_seed: int = 0, coupling: str = "diffusive_sine", v: Optional[float] = None,
                           graph: Optional[DirectedGraph] = None, theta: float = 0.0, nu: float = 1.0
                           ) -> HomogeneityResult:
    """Time-maximal gap between each hub's observed aggregate and ``kappa_i * v``.

    ``v`` defaults to the integral of ``psi`` against the invariant density of
    the isolated map. ``graph`` replaces the sampled network (e.g. an empty one).
    """
    config = config or SimConfig(alpha=0.1)
    seq = spec.degree_sequence()
    g_seed = derive_seed(master_seed, GRAPH)
    x_seed = derive_seed(master_seed, DYNAMICS)
    if graph is None:
        graph = sample_graph(seq, g_seed)
    fmap = doubling_map(spec.noise_amp)
    if v is None:
        dens = invariant_of(fmap)
        v = float(np.mean(psi(dens.centers) * dens.values))
    hubs = np.arange(seq.ell)
    cfg = replace(config, seed=x_seed, record_nodes=[], aggregate_nodes=list(hubs))
    tr = simulate(graph, seq, fmap, make_coupling(coupling), cfg, observables={"psi": psi})
    err = np.abs(tr.observables["psi"] - seq.kappas[None, :] * v)
    errors = err.max(axis=0) if len(tr) else np.zeros(seq.ell)
    eta, rate, regime = homogeneity_rate(1.0, nu, theta, float(seq.kappas[0]), seq.delta)
    return HomogeneityResult(errors, v, seq.kappas.copy(), eta, rate, regime, g_seed, x_seed)


@dataclass(frozen=True)
class EnsembleStats:
    mean: float
    mean_stderr: float
    mean_error: float  # |mean - v|
    cov: float
    cov_stderr: float
    v: float
    size: int


def ensemble_stats(spec: NetworkSpec, psi: Callable, sigma_obs: Callable, i: int, j: int, size: int = 200,
                   t: int = 50, alpha: float = 0.1, coupling: str = "diffusive_sine", master_seed: int = 0,
                   v: Optional[float] = None) -> EnsembleStats:
    """Mean of ``psi(x_i(t))`` and covariance of ``psi(x_i(t))`` with ``sigma_obs(x_j(t))`` over initial conditions.

    Raises:
        ValueError: for ``size < 30``, or hub indices.
    """
    if size < 30:
        raise ValueError(f"ensemble size {size} < 30: standard errors would be meaningless")
    seq = spec.degree_sequence()
    for node in (i, j):
        if not seq.ell <= node < seq.n:
            raise ValueError(f"node {node} is not a low-degree node")
    g_seed = derive_seed(master_seed, GRAPH)
    x_seed = derive_seed(master_seed, DYNAMICS)
    graph = sample_graph(seq, g_seed)
    fmap = doubling_map(spec.noise_amp)
    if v is None:
        dens = invariant_of(fmap)
        v = float(np.mean(psi(dens.centers) * dens.values))
    x = run_ensemble(graph, seq, fmap, make_coupling(coupling), alpha, size, t, x_seed)
    a = psi(x[i])
    b = sigma_obs(x[j])
    prod = (a - a.mean()) * (b - b.mean())
    cov = float(prod.sum() / (size - 1))
    return EnsembleStats(
        mean=float(a.mean()),
        mean_stderr=float(a.std(ddof=1) / math.sqrt(size)),
        mean_error=abs(float(a.mean()) - v),
        cov=cov,
        cov_stderr=float(prod.std(ddof=1) / math.sqrt(size)),
        v=v,
        size=size,
    )


def format_float(v) -> str:
    """Shortest round-trip text for a float; integers stay integers."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_manifest(path, params: dict):
    """``key=value`` lines in insertion order; sequences are comma-joined."""
    lines = []
    for k, v in params.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = ",".join(format_float(x) if not isinstance(x, str) else x for x in v)
        elif not isinstance(v, str):
            v = format_float(v)
        lines.append(f"{k}={v}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_sweep(result: SweepResult, out_dir, name: str) -> list:
    """Write ``<name>.csv`` (``axis,value,stat,stderr``) and, if fitted, ``<name>_fit.csv``.

    Returns the written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name}.csv")
    with open(path, "w") as fh:
        fh.write("axis,value,stat,stderr\n")
        for v, s, e in result.rows():
            fh.write(f"{result.axis},{format_float(v)},{format_float(s)},{format_float(e)}\n")
    paths = [path]
    if result.fit is not None:
        fp = os.path.join(out_dir, f"{name}_fit.csv")
        f = result.fit
        with open(fp, "w") as fh:
            fh.write("slope,intercept,ci_low,ci_high,narrow\n")
            fh.write(",".join(format_float(x) for x in (f.slope, f.intercept, f.ci_low, f.ci_high, f.narrow)) + "\n")
        paths.append(fp)
    return paths
