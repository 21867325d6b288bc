import math
import os

import numpy as np
import pytest

from hubnet.dynamics import SimConfig, _one, _sin, doubling_map, make_coupling, simulate
from hubnet.experiments import (
    NetworkSpec,
    derive_seed,
    ensemble_stats,
    fit_power_law,
    homogeneity_rate,
    mean_field_homogeneity,
    scaling_delta,
    scaling_kappa,
    sweep_alpha,
    write_manifest,
    write_sweep,
)
from hubnet.graph import DirectedGraph, sample_graph
from hubnet.measure import DensityGrid, mean_field_g
from hubnet.reduction import ReducedHubModel, extract_zeta, zeta_mean_abs

SMALL = NetworkSpec(n=3000, delta=60.0, kappas=(1.0, 0.99))
SHORT = SimConfig(alpha=0.0, t_burn=100, t_record=200)


def test_fit_exact_power_law():
    x = np.array([64, 96, 128, 192, 256, 384, 512], dtype=float)
    f = fit_power_law(x, x**-0.5)
    assert abs(f.slope + 0.5) < 1e-12
    assert f.ci_low <= f.slope <= f.ci_high
    assert not f.narrow
    k = np.array([0.1, 0.2, 0.35, 0.5, 0.7, 1.0])
    assert abs(fit_power_law(k, k**0.5).slope - 0.5) < 1e-12
    assert abs(fit_power_law(x, np.full(7, 0.03)).slope) < 1e-12


def test_fit_refuses_and_flags():
    with pytest.raises(ValueError):
        fit_power_law([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        fit_power_law([1.0, 2.0, 3.0], [1.0, -2.0, 3.0])
    assert fit_power_law([1.0, 2.0, 4.0], [1.0, 2.0, 4.1]).narrow


def test_fit_interval_matches_t_quantile():
    rng = np.random.default_rng(0)
    x = np.geomspace(1, 100, 12)
    y = 3 * x**0.7 * np.exp(rng.normal(0, 0.1, x.size))
    f = fit_power_law(x, y)
    # independent slope standard error from the normal equations
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    s2 = res[0] / (x.size - 2)
    se = math.sqrt(s2 / np.sum((lx - lx.mean()) ** 2))
    from scipy.stats import t

    assert f.slope == pytest.approx(coef[0], rel=1e-10)
    assert f.ci_high - f.slope == pytest.approx(t.ppf(0.975, x.size - 2) * se, rel=1e-10)


def test_derive_seed_is_stable():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert derive_seed(0, 1) != derive_seed(0, 2) != derive_seed(1, 1)


def test_sweep_alpha_deterministic_and_thread_independent(tmp_path):
    a = sweep_alpha(SMALL, "diffusive_sine", [0.0, 0.4], SHORT, master_seed=3)
    b = sweep_alpha(SMALL, "diffusive_sine", [0.0, 0.4], SHORT, master_seed=3, workers=2)
    pa = write_sweep(a, tmp_path / "a", "s")
    pb = write_sweep(b, tmp_path / "b", "s")
    assert open(pa[0], "rb").read() == open(pb[0], "rb").read()
    assert a.seeds == b.seeds
    assert open(pa[0]).readline().strip() == "axis,value,stat,stderr"


def test_sweep_alpha_needs_two_hubs():
    with pytest.raises(ValueError):
        sweep_alpha(NetworkSpec(n=3000, delta=60.0, kappas=(1.0,)), "diffusive_sine", [0.1], SHORT)


def test_sweep_alpha_zero_and_locked(ex1_seq):
    cfg = SimConfig(alpha=0.0, t_burn=1000, t_record=1000)
    r = sweep_alpha(NetworkSpec(), "sine_minus_sine", [0.0, 0.3], cfg)
    assert r.stat[0] < 0.1
    assert r.stat[1] > 0.9
    assert abs(r.extra["psi"][1]) < 0.1


def test_scaling_refuses_short_grid():
    with pytest.raises(ValueError):
        scaling_delta(SMALL, [32, 64], SHORT)
    with pytest.raises(ValueError):
        scaling_delta(SMALL, [32, 40, 48], SimConfig(alpha=0.0))
    with pytest.raises(ValueError):
        scaling_kappa(SMALL, [0.5, 1.2, 0.7], SHORT)


def test_scaling_delta_small_run_writes_fit(tmp_path):
    res = scaling_delta(SMALL, [16, 32, 64], SimConfig(alpha=0.1, t_burn=50, t_record=100))
    paths = write_sweep(res, tmp_path, "sd")
    assert len(paths) == 2
    assert open(paths[1]).readline().strip() == "slope,intercept,ci_low,ci_high,narrow"
    assert res.fit.narrow  # two octaves only
    assert len(res.seeds) == 3 and len(set(res.seeds)) == 3


def test_kappa_symmetry():
    spec = NetworkSpec(n=20_000, delta=347.0, kappas=(1.0, 1.0))
    seq, g = spec.build(derive_seed(0, 0))
    cs = make_coupling("diffusive_sine")
    tr = simulate(g, seq, doubling_map(1e-5), cs, SimConfig(0.1, 1000, 1000, seed=4))
    mf = mean_field_g(cs, DensityGrid.uniform(1024))
    z = [zeta_mean_abs(extract_zeta(tr, ReducedHubModel(doubling_map(), mf, 0.1, 1.0), hub=h)) for h in (0, 1)]
    assert 0.5 <= z[1] / z[0] <= 2.0


def test_homogeneity_rate_regimes():
    assert homogeneity_rate(1.0, 1.0, 0.3, 1.0, 100.0)[2] == "i"
    eta, rate, regime = homogeneity_rate(1.0, 1.0, 0.3, 1.0, 100.0)
    assert eta == 0.5 and rate == pytest.approx(0.1)
    eta, _, regime = homogeneity_rate(0.5, 0.5, 0.8, 1.0, 100.0)
    assert regime == "i" and eta == 0.125
    eta, _, regime = homogeneity_rate(1.0, 1.5, 0.4, 1.0, 100.0)
    assert regime == "ii-a" and eta == 0.5
    eta, _, regime = homogeneity_rate(1.0, 0.8, 0.7, 0.5, 100.0)
    assert regime == "ii-b"
    assert eta == pytest.approx(0.3 + math.log(0.5) / (2 * math.log(100.0)))


def test_homogeneity_constant_observable_is_degree_deviation():
    spec = SMALL
    res = mean_field_homogeneity(spec, _one, SimConfig(0.1, 10, 20), master_seed=2)
    seq = spec.degree_sequence()
    g = sample_graph(seq, res.graph_seed)
    k = g.in_degree[: seq.ell]
    np.testing.assert_array_equal(res.errors, np.abs(k / seq.delta - seq.kappas * 1.0))
    assert res.v == pytest.approx(1.0, abs=1e-12)


def test_homogeneity_empty_graph():
    seq = SMALL.degree_sequence()
    empty = DirectedGraph.from_edges(seq.n, [], delta=seq.delta)
    res = mean_field_homogeneity(SMALL, lambda x: np.cos(2 * np.pi * x) + 0.5, SimConfig(0.1, 5, 10), graph=empty)
    np.testing.assert_allclose(res.errors, seq.kappas * abs(res.v))
    assert res.v == pytest.approx(0.5, abs=1e-10)


def test_homogeneity_two_delta_consistency():
    e128 = mean_field_homogeneity(NetworkSpec(n=50_000, delta=128.0), _sin).errors[0]
    e512 = mean_field_homogeneity(NetworkSpec(n=50_000, delta=512.0), _sin).errors[0]
    C = e128 * math.sqrt(128)
    assert e512 <= 2 * C / math.sqrt(512)


def test_ensemble_refuses_small_and_hubs():
    with pytest.raises(ValueError):
        ensemble_stats(SMALL, _sin, _sin, 2, 3, size=29)
    with pytest.raises(ValueError):
        ensemble_stats(SMALL, _sin, _sin, 0, 3, size=40)


def test_ensemble_independent_at_zero_coupling():
    st_ = ensemble_stats(SMALL, _sin, _sin, 5, 6, size=200, t=20, alpha=0.0)
    assert abs(st_.cov) <= 3 * st_.cov_stderr
    assert abs(st_.mean) <= 3 * st_.mean_stderr


def test_ensemble_variance_is_non_negative():
    st_ = ensemble_stats(SMALL, _sin, _sin, 5, 5, size=60, t=10)
    assert st_.cov >= 0
    # sin of a uniform variable has variance 1/2
    assert st_.cov == pytest.approx(0.5, abs=0.15)


def test_ensemble_mean_near_invariant_average(ex1_seq):
    st_ = ensemble_stats(NetworkSpec(), _sin, _sin, 2, 3, size=200, t=50)
    assert st_.v == pytest.approx(0.0, abs=1e-12)
    assert st_.mean_error <= 3 * st_.mean_stderr + 1.0 / 260


def test_manifest_format(tmp_path):
    p = tmp_path / "m.txt"
    write_manifest(p, {"command": "x", "alpha": 0.1, "grid": (1.0, 2.5), "n": 5})
    assert p.read_text() == "command=x\nalpha=0.1\ngrid=1.0,2.5\nn=5\n"
    assert os.path.exists(p)
