"""Plain-text and CSV formats.

Graph file::

    n ell delta rho
    i w_i k_i        (n lines, k_i the realized in-degree)
    i j              (one line per edge, A[i, j] = 1)

Floats are written with ``repr`` so every file reads back bit-exactly.
"""
from __future__ import annotations

import numpy as np

from .dynamics import Trajectory
from .graph import DegreeSequence, DirectedGraph, degree_stats
from .measure import DensityGrid, UlamOperator

__all__ = [
    "write_graph",
    "read_graph",
    "write_degrees_csv",
    "write_trajectory_csv",
    "write_aggregates_csv",
    "save_trajectory",
    "load_trajectory_arrays",
    "write_density_csv",
    "read_density_csv",
    "write_operator_csv",
    "write_zeta_csv",
    "write_coherence_csv",
    "write_stability_csv",
]


def _f(v) -> str:
    return repr(float(v))


def write_graph(path, seq: DegreeSequence, graph: DirectedGraph):
    if graph.n != seq.n:
        raise ValueError("graph and degree sequence sizes differ")
    k = graph.in_degree
    with open(path, "w") as fh:
        fh.write(f"{seq.n} {seq.ell} {_f(seq.delta)} {_f(seq.rho)}\n")
        fh.writelines(f"{i} {_f(w)} {int(k[i])}\n" for i, w in enumerate(seq.w))
        e = graph.edges()
        if e.size:
            np.savetxt(fh, e, fmt="%d")


def read_graph(path) -> tuple:
    """Inverse of :func:`write_graph`; checks the stored in-degrees against the edges."""
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 4:
            raise ValueError(f"{path}: header must be 'n ell delta rho'")
        n, ell = int(head[0]), int(head[1])
        w = np.empty(n)
        k = np.empty(n, dtype=np.int64)
        for lineno in range(2, n + 2):
            parts = fh.readline().split()
            if len(parts) != 3 or int(parts[0]) != lineno - 2:
                raise ValueError(f"{path}:{lineno}: expected node line 'i w_i k_i'")
            w[lineno - 2] = float(parts[1])
            k[lineno - 2] = int(parts[2])
        rest = fh.read()
    edges = np.array(rest.split(), dtype=np.int64).reshape(-1, 2)
    seq = DegreeSequence(w, ell)
    graph = DirectedGraph.from_edges(n, edges, delta=seq.delta)
    if not np.array_equal(graph.in_degree, k):
        raise ValueError(f"{path}: node degrees disagree with the edge list")
    return seq, graph


def write_degrees_csv(path, seq: DegreeSequence, graph: DirectedGraph):
    st = degree_stats(graph, seq)
    with open(path, "w") as fh:
        fh.write("node,w,k_in,k_out,dev\n")
        for i in range(seq.n):
            fh.write(f"{i},{_f(seq.w[i])},{int(st.k_in[i])},{int(st.k_out[i])},{_f(st.dev[i])}\n")


def write_trajectory_csv(path, tr: Trajectory):
    with open(path, "w") as fh:
        fh.write("t,node,x\n")
        for s, t in enumerate(tr.times):
            for c, node in enumerate(tr.nodes):
                fh.write(f"{int(t)},{int(node)},{_f(tr.x[s, c])}\n")


def write_aggregates_csv(path, tr: Trajectory):
    with open(path, "w") as fh:
        fh.write("t,hub,q,y\n")
        for s, t in enumerate(tr.times):
            for a, node in enumerate(tr.agg_nodes):
                for q in range(tr.y.shape[2]):
                    fh.write(f"{int(t)},{int(node)},{q},{_f(tr.y[s, a, q])}\n")


def save_trajectory(path, tr: Trajectory):
    """Binary ``.npz`` with the recorded arrays (lossless)."""
    extra = {f"obs_{k}": v for k, v in tr.observables.items()}
    np.savez(path, times=tr.times, nodes=tr.nodes, x=tr.x, agg_nodes=tr.agg_nodes, y=tr.y,
             final_t=np.array(tr.final.t), final_x=tr.final.x, alpha=np.array(tr.alpha),
             delta=np.array(tr.delta), **extra)


def load_trajectory_arrays(path) -> dict:
    with np.load(path) as z:
        return {k: z[k] for k in z.files}


def write_density_csv(path, density: DensityGrid):
    with open(path, "w") as fh:
        fh.write("bin,value\n")
        fh.writelines(f"{b},{_f(v)}\n" for b, v in enumerate(density.values))


def read_density_csv(path) -> DensityGrid:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if not np.array_equal(data[:, 0], np.arange(data.shape[0])):
        raise ValueError(f"{path}: bins must be 0..N-1 in order")
    return DensityGrid(data[:, 1])


def write_operator_csv(path, op: UlamOperator):
    rows, cols, vals = op.triplets()
    with open(path, "w") as fh:
        fh.write("row,col,value\n")
        fh.writelines(f"{int(r)},{int(c)},{_f(v)}\n" for r, c, v in zip(rows, cols, vals))


def write_zeta_csv(path, zeta, t0: int = 0):
    with open(path, "w") as fh:
        fh.write("t,zeta\n")
        fh.writelines(f"{t0 + s},{_f(z)}\n" for s, z in enumerate(np.asarray(zeta)))


def write_coherence_csv(path, alphas, r, psi):
    with open(path, "w") as fh:
        fh.write("alpha,r,psi\n")
        fh.writelines(f"{_f(a)},{_f(b)},{_f(c)}\n" for a, b, c in zip(alphas, r, psi))


def write_stability_csv(path, points):
    with open(path, "w") as fh:
        fh.write("xstar,k,multiplier,stable\n")
        fh.writelines(f"{_f(p.x)},{p.k},{_f(p.multiplier)},{int(p.stable)}\n" for p in points)
