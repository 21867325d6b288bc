import numpy as np
import pytest

from hubnet.dynamics import SimConfig, doubling_map, make_coupling, simulate
from hubnet.experiments import NetworkSpec
from hubnet.io import (
    load_trajectory_arrays,
    read_density_csv,
    read_graph,
    save_trajectory,
    write_aggregates_csv,
    write_degrees_csv,
    write_density_csv,
    write_graph,
    write_operator_csv,
    write_stability_csv,
    write_trajectory_csv,
    write_zeta_csv,
)
from hubnet.measure import DensityGrid, ulam_matrix
from hubnet.reduction import FixedPoint

SPEC = NetworkSpec(n=500, delta=30.0, kappas=(1.0, 0.9), low_degree=3.0)


@pytest.fixture(scope="module")
def small():
    return SPEC.build(11)


@pytest.fixture(scope="module")
def traj(small):
    seq, g = small
    return simulate(g, seq, doubling_map(1e-5), make_coupling("diffusive_sine"),
                    SimConfig(0.2, t_burn=5, t_record=7, seed=3, record_nodes=[0, 1, 7]))


def header(path):
    with open(path) as fh:
        return fh.readline().strip()


def test_graph_round_trip(tmp_path, small):
    seq, g = small
    write_graph(tmp_path / "g.txt", seq, g)
    seq2, g2 = read_graph(tmp_path / "g.txt")
    np.testing.assert_array_equal(seq2.w, seq.w)
    assert seq2.ell == seq.ell and seq2.rho == seq.rho and seq2.delta == seq.delta
    np.testing.assert_array_equal(g2.indptr, g.indptr)
    np.testing.assert_array_equal(g2.indices, g.indices)


def test_graph_reader_checks_degrees(tmp_path, small):
    seq, g = small
    write_graph(tmp_path / "g.txt", seq, g)
    lines = (tmp_path / "g.txt").read_text().splitlines()
    i, w, k = lines[1].split()
    lines[1] = f"{i} {w} {int(k) + 1}"
    (tmp_path / "bad.txt").write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="disagree"):
        read_graph(tmp_path / "bad.txt")
    (tmp_path / "head.txt").write_text("3 1\n")
    with pytest.raises(ValueError, match="header"):
        read_graph(tmp_path / "head.txt")


def test_degrees_csv(tmp_path, small):
    seq, g = small
    write_degrees_csv(tmp_path / "d.csv", seq, g)
    assert header(tmp_path / "d.csv") == "node,w,k_in,k_out,dev"
    data = np.loadtxt(tmp_path / "d.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(data[:, 2], g.in_degree)
    assert data[:, 2].sum() == data[:, 3].sum() == g.n_edges


def test_trajectory_csvs(tmp_path, traj):
    write_trajectory_csv(tmp_path / "t.csv", traj)
    write_aggregates_csv(tmp_path / "a.csv", traj)
    assert header(tmp_path / "t.csv") == "t,node,x"
    assert header(tmp_path / "a.csv") == "t,hub,q,y"
    data = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    assert data.shape == (7 * 3, 3)
    np.testing.assert_array_equal(data[:, 2].reshape(7, 3), traj.x)
    assert data[0, 0] == 5


def test_trajectory_npz_lossless(tmp_path, traj):
    save_trajectory(tmp_path / "t.npz", traj)
    z = load_trajectory_arrays(tmp_path / "t.npz")
    np.testing.assert_array_equal(z["x"], traj.x)
    np.testing.assert_array_equal(z["y"], traj.y)
    np.testing.assert_array_equal(z["final_x"], traj.final.x)
    assert int(z["final_t"]) == traj.final.t


def test_density_round_trip(tmp_path):
    d = DensityGrid.normalized(np.random.default_rng(0).random(64) + 0.1)
    write_density_csv(tmp_path / "d.csv", d)
    assert header(tmp_path / "d.csv") == "bin,value"
    np.testing.assert_array_equal(read_density_csv(tmp_path / "d.csv").values, d.values)


def test_operator_csv(tmp_path):
    op = ulam_matrix(doubling_map(), 8)
    write_operator_csv(tmp_path / "o.csv", op)
    assert header(tmp_path / "o.csv") == "row,col,value"
    data = np.loadtxt(tmp_path / "o.csv", delimiter=",", skiprows=1)
    dense = np.zeros((8, 8))
    dense[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2]
    np.testing.assert_array_equal(dense, op.matrix.toarray())


def test_small_csvs(tmp_path):
    write_zeta_csv(tmp_path / "z.csv", [0.1, -0.2], t0=10)
    assert (tmp_path / "z.csv").read_text() == "t,zeta\n10,0.1\n11,-0.2\n"
    write_stability_csv(tmp_path / "s.csv", [FixedPoint(0.0, 0, 0.115, True)])
    assert (tmp_path / "s.csv").read_text() == "xstar,k,multiplier,stable\n0.0,0,0.115,1\n"
