"""Expanding circle maps, product-form couplings and the network iteration.

One synchronous step reads ``x(t)`` and writes

    x_i(t+1) = f(x_i) + xi_i + (alpha / delta) * sum_p u_p(x_i) * sum_j A_ij v_p(x_j)   (mod 1)

where ``(u_p, v_p)`` are the (self, neighbour) factor pairs of the coupling and
``xi_i`` is uniform on ``[0, noise_amp]``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .graph import DegreeSequence, DirectedGraph

__all__ = [
    "NonExpandingWarning",
    "SimulationError",
    "MapSpec",
    "CouplingTerm",
    "CouplingSpec",
    "SystemState",
    "SimConfig",
    "Trajectory",
    "wrap",
    "circle_map",
    "doubling_map",
    "perturbed_doubling",
    "make_coupling",
    "step",
    "NetworkKernel",
    "simulate",
    "run_ensemble",
    "coupling_norm_probe",
]

TWO_PI = 2.0 * math.pi
_GRID = (np.arange(1024) + 0.5) / 1024


class NonExpandingWarning(UserWarning):
    pass


class SimulationError(FloatingPointError):
    pass


def wrap(y: np.ndarray) -> np.ndarray:
    """Reduce into ``[0, 1)``; ``y - floor(y)`` can round up to 1 for tiny negative ``y``."""
    x = y - np.floor(y)
    if np.ndim(x) == 0:
        return float(x) if x < 1.0 else 0.0
    x[x >= 1.0] = 0.0
    return x


@dataclass(frozen=True)
class MapSpec:
    lift: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    degree: int
    expansion: float
    holder_nu: float = 1.0
    noise_amp: float = 0.0
    name: str = "custom"

    def __call__(self, x):
        """The circle map itself (no noise)."""
        return wrap(np.asarray(self.lift(np.asarray(x, dtype=float)), dtype=float))


def circle_map(lift, derivative, noise_amp: float = 0.0, holder_nu: float = 1.0, name: str = "custom") -> MapSpec:
    """Wrap a lift and its derivative, checking degree and expansion on a 1024-point grid.

    A non-expanding map only triggers :class:`NonExpandingWarning`; such maps
    are useful as probes of the discretization code.
    """
    if noise_amp < 0:
        raise ValueError("noise_amp must be non-negative")
    jump = lift(_GRID + 1.0) - lift(_GRID)
    degree = int(round(float(jump[0])))
    if np.max(np.abs(jump - degree)) > 1e-9:
        raise ValueError("lift(x + 1) - lift(x) is not a constant integer")
    expansion = float(np.min(np.abs(derivative(_GRID))))
    if expansion <= 1.0:
        warnings.warn(f"map {name!r} is not expanding (min |f'| = {expansion:.4g})", NonExpandingWarning, stacklevel=2)
    return MapSpec(lift, derivative, degree, expansion, holder_nu, float(noise_amp), name)


def doubling_map(noise_amp: float = 0.0) -> MapSpec:
    return circle_map(lambda x: 2.0 * x, lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
                      noise_amp=noise_amp, name="doubling")


def perturbed_doubling(eps: float, noise_amp: float = 0.0, shift: int = 0) -> MapSpec:
    """``x -> 2x + eps * sin(2 pi x) + shift``; ``shift`` changes the lift, not the circle map."""
    return circle_map(
        lambda x: 2.0 * x + eps * np.sin(TWO_PI * x) + shift,
        lambda x: 2.0 + TWO_PI * eps * np.cos(TWO_PI * x),
        noise_amp=noise_amp,
        name=f"doubling+{eps:g}sin",
    )


def _sin(x):
    return np.sin(TWO_PI * x)


def _cos(x):
    return np.cos(TWO_PI * x)


def _dsin(x):
    return TWO_PI * np.cos(TWO_PI * x)


def _dcos(x):
    return -TWO_PI * np.sin(TWO_PI * x)


def _neg_sin(x):
    return -np.sin(TWO_PI * x)


def _neg_dsin(x):
    return -TWO_PI * np.cos(TWO_PI * x)


def _one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class CouplingTerm:
    u: Callable  # self factor
    v: Callable  # neighbour factor
    du: Callable = _zero
    dv: Callable = _zero


@dataclass(frozen=True)
class CouplingSpec:
    terms: tuple
    name: str = "custom"

    @property
    def k(self) -> int:
        return len(self.terms)

    def evaluate(self, x_neighbor, x_self):
        """Pairwise contribution ``sum_p u_p(x_self) * v_p(x_neighbor)``."""
        x_neighbor = np.asarray(x_neighbor, dtype=float)
        x_self = np.asarray(x_self, dtype=float)
        return sum(t.u(x_self) * t.v(x_neighbor) for t in self.terms)

    def bound(self) -> float:
        """``k * max|u| * max|v|`` sampled on a grid."""
        if not self.terms:
            return 0.0
        mu = max(float(np.max(np.abs(t.u(_GRID)))) for t in self.terms)
        mv = max(float(np.max(np.abs(t.v(_GRID)))) for t in self.terms)
        return self.k * mu * mv


def make_coupling(kind: str, terms: Optional[Sequence] = None) -> CouplingSpec:
    """Named couplings or a custom list of factor pairs.

    ``diffusive_sine`` contributes ``sin 2pi(x_j - x_i)`` and
    ``sine_minus_sine`` contributes ``sin 2pi x_j - sin 2pi x_i``
    (neighbour minus self). ``custom`` takes ``terms`` as
    :class:`CouplingTerm` objects or ``(u, v)`` / ``(u, du, v, dv)`` tuples.
    """
    if kind == "diffusive_sine":
        return CouplingSpec(
            (CouplingTerm(_cos, _sin, _dcos, _dsin), CouplingTerm(_neg_sin, _cos, _neg_dsin, _dcos)),
            kind,
        )
    if kind == "sine_minus_sine":
        return CouplingSpec(
            (CouplingTerm(_one, _sin, _zero, _dsin), CouplingTerm(_neg_sin, _one, _neg_dsin, _zero)),
            kind,
        )
    if kind != "custom":
        raise ValueError(f"unknown coupling kind {kind!r}")
    built = []
    for t in terms or ():
        if isinstance(t, CouplingTerm):
            built.append(t)
        elif len(t) == 2:
            built.append(CouplingTerm(t[0], t[1]))
        elif len(t) == 4:
            built.append(CouplingTerm(t[0], t[2], t[1], t[3]))
        else:
            raise ValueError("custom terms are (u, v) or (u, du, v, dv)")
    for p, t in enumerate(built):
        for label, fn in (("u", t.u), ("v", t.v)):
            if np.max(np.abs(fn(_GRID + 1.0) - fn(_GRID))) >= 1e-12:
                raise ValueError(f"term {p}: factor {label} is not 1-periodic")
    return CouplingSpec(tuple(built), "custom")


@dataclass(frozen=True, eq=False)
class SystemState:
    t: int
    x: np.ndarray


@dataclass
class SimConfig:
    alpha: float
    t_burn: int = 1000
    t_record: int = 1000
    seed: int = 0
    record_nodes: Optional[Sequence[int]] = None  # default: hubs
    aggregate_nodes: Optional[Sequence[int]] = None  # default: hubs

    def __post_init__(self):
        if self.t_burn < 0 or self.t_record < 0:
            raise ValueError("t_burn and t_record must be non-negative")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")


class NetworkKernel:
    """Precomputed sparse operator for repeated steps on one graph.

    State arrays have shape ``(n,)`` or ``(n, S)`` for S independent copies
    evolving on the same graph. Row sums are accumulated by the CSR product in
    ascending neighbour order, which keeps results bit-reproducible.
    """

    def __init__(self, graph: DirectedGraph, map: MapSpec, coupling: CouplingSpec, alpha: float,
                 delta: Optional[float] = None, noise_before_coupling: bool = True):
        delta = graph.delta if delta is None else delta
        if delta is None or delta <= 0:
            raise ValueError("a positive coupling normalization delta is required")
        self.graph = graph
        self.A = graph.adjacency()
        self.map = map
        self.coupling = coupling
        self.alpha = float(alpha)
        self.delta = float(delta)
        self.noise_before_coupling = noise_before_coupling

        self.in_degree_scaled = graph.in_degree / self.delta
        self._funcs = []
        for t in coupling.terms:
            for fn in (t.u, t.v):
                if fn not in self._funcs:
                    self._funcs.append(fn)
        if _neg_sin in self._funcs and _sin in self._funcs:
            self._funcs.remove(_neg_sin)
            self._funcs.append(_neg_sin)

    def factors(self, x: np.ndarray) -> dict:
        """Every distinct coupling factor evaluated once on ``x``."""
        out = {}
        for fn in self._funcs:
            if fn is _neg_sin and _sin in out:
                out[fn] = -out[_sin]
            else:
                out[fn] = fn(x)
        return out

    def aggregates(self, x: np.ndarray, factors: Optional[dict] = None) -> list:
        """``y_p = A v_p(x) / delta`` for every term, each shaped like ``x``."""
        if factors is None:
            factors = self.factors(x)
        out = []
        for t in self.coupling.terms:
            if t.v is _one:
                y = self.in_degree_scaled if x.ndim == 1 else np.repeat(self.in_degree_scaled[:, None], x.shape[1], 1)
            else:
                y = (self.A @ factors[t.v]) / self.delta
            out.append(y)
        return out

    def advance(self, x: np.ndarray, rng: Optional[np.random.Generator], ys: Optional[list] = None,
                factors: Optional[dict] = None) -> np.ndarray:
        if x.shape[0] != self.graph.n:
            raise ValueError(f"state has {x.shape[0]} nodes, graph has {self.graph.n}")
        out = self.map.lift(x)
        noise = None
        if self.map.noise_amp > 0:
            noise = rng.random(x.shape) * self.map.noise_amp
        if noise is not None and self.noise_before_coupling:
            out = out + noise
        if self.alpha != 0.0 and self.coupling.terms:
            if factors is None:
                factors = self.factors(x)
            if ys is None:
                ys = self.aggregates(x, factors)
            terms = self.coupling.terms
            c = factors[terms[0].u] * ys[0]
            for t, y in zip(terms[1:], ys[1:]):
                c = c + factors[t.u] * y
            out = out + self.alpha * c
        if noise is not None and not self.noise_before_coupling:
            out = out + noise
        if not np.all(np.isfinite(out)):
            bad = np.flatnonzero(~np.isfinite(out.reshape(out.shape[0], -1)).all(axis=1))
            raise SimulationError(f"non-finite state at nodes {bad[:10].tolist()}")
        return wrap(out)


def step(state: SystemState, graph: DirectedGraph, map: MapSpec, coupling: CouplingSpec, alpha: float,
         rng: Optional[np.random.Generator] = None, delta: Optional[float] = None,
         noise_before_coupling: bool = True) -> SystemState:
    """One synchronous update of the whole network."""
    kernel = NetworkKernel(graph, map, coupling, alpha, delta, noise_before_coupling)
    return SystemState(state.t + 1, kernel.advance(np.asarray(state.x, dtype=float), rng))


@dataclass(eq=False)
class Trajectory:
    """Recorded window of a simulation.

    ``x[s, c]`` is the state of ``nodes[c]`` at time ``times[s]``;
    ``y[s, a, p]`` is the aggregate ``delta^-1 sum_j A_ij v_p(x_j)`` of
    ``agg_nodes[a]`` at the same time, and ``observables[name][s, a]`` the
    analogous aggregate of an extra observable.
    """

    times: np.ndarray
    nodes: np.ndarray
    x: np.ndarray
    agg_nodes: np.ndarray
    y: np.ndarray
    observables: dict
    final: SystemState
    alpha: float
    delta: float
    coupling: CouplingSpec
    map: MapSpec

    def __len__(self):
        return int(self.times.size)

    def node_series(self, node: int) -> np.ndarray:
        where = np.flatnonzero(self.nodes == node)
        if where.size == 0:
            raise KeyError(f"node {node} was not recorded")
        return self.x[:, where[0]]

    def aggregate_series(self, node: int) -> np.ndarray:
        """``(T, k)`` aggregates of one node."""
        where = np.flatnonzero(self.agg_nodes == node)
        if where.size == 0:
            raise KeyError(f"aggregates of node {node} were not recorded")
        return self.y[:, where[0], :]


def simulate(graph: DirectedGraph, seq: DegreeSequence, map: MapSpec, coupling: CouplingSpec,
             config: SimConfig, observables: Optional[Mapping[str, Callable]] = None,
             x0: Optional[np.ndarray] = None, noise_before_coupling: bool = True) -> Trajectory:
    """Burn in, then record ``t_record`` steps.

    Initial conditions are i.i.d. uniform, drawn from ``config.seed`` before
    any noise; pass ``x0`` to override them.
    """
    if graph.n != seq.n:
        raise ValueError(f"graph has {graph.n} nodes, degree sequence has {seq.n}")
    hubs = np.arange(seq.ell)
    nodes = hubs if config.record_nodes is None else np.asarray(config.record_nodes, dtype=np.int64)
    agg = hubs if config.aggregate_nodes is None else np.asarray(config.aggregate_nodes, dtype=np.int64)
    observables = dict(observables or {})

    kernel = NetworkKernel(graph, map, coupling, config.alpha, seq.delta, noise_before_coupling)
    rng = np.random.default_rng(np.random.SeedSequence(int(config.seed)))
    x = rng.random(seq.n) if x0 is None else wrap(np.array(x0, dtype=float))
    for _ in range(config.t_burn):
        x = kernel.advance(x, rng)

    T = config.t_record
    xs = np.empty((T, nodes.size))
    ys = np.empty((T, agg.size, coupling.k))
    obs = {name: np.empty((T, agg.size)) for name in observables}
    A_agg = kernel.A[agg] if observables else None
    for s in range(T):
        fac = kernel.factors(x)
        y_all = kernel.aggregates(x, fac)
        xs[s] = x[nodes]
        for p, y in enumerate(y_all):
            ys[s, :, p] = y[agg]
        for name, fn in observables.items():
            obs[name][s] = (A_agg @ fn(x)) / seq.delta
        x = kernel.advance(x, rng, y_all, fac)
    t0 = config.t_burn
    return Trajectory(
        times=np.arange(t0, t0 + T),
        nodes=nodes,
        x=xs,
        agg_nodes=agg,
        y=ys,
        observables=obs,
        final=SystemState(t0 + T, x),
        alpha=config.alpha,
        delta=seq.delta,
        coupling=coupling,
        map=map,
    )


def run_ensemble(graph: DirectedGraph, seq: DegreeSequence, map: MapSpec, coupling: CouplingSpec,
                 alpha: float, size: int, steps: int, seed: int) -> np.ndarray:
    """Evolve ``size`` independent uniform initial conditions for ``steps`` steps.

    Returns the ``(n, size)`` final states. All copies share one sparse
    product per term and step.
    """
    kernel = NetworkKernel(graph, map, coupling, alpha, seq.delta)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    x = rng.random((seq.n, size))
    for _ in range(steps):
        x = kernel.advance(x, rng)
    return x


def coupling_norm_probe(trajectory: Trajectory, seq: DegreeSequence) -> dict:
    """Largest ``|r_i(t)| = |sum_p u_p(x_i) y_{p,i}|`` over the recorded window.

    Only low-degree nodes present in both ``nodes`` and ``agg_nodes`` are probed.
    Returns ``{node: max_t |r_i|}``.
    """
    out = {}
    terms = trajectory.coupling.terms
    for node in trajectory.nodes:
        if node < seq.ell or node not in trajectory.agg_nodes:
            continue
        x = trajectory.node_series(node)
        y = trajectory.aggregate_series(node)
        r = np.zeros_like(x)
        for p, t in enumerate(terms):
            r = r + t.u(x) * y[:, p]
        out[int(node)] = float(np.max(np.abs(r))) if r.size else 0.0
    return out
