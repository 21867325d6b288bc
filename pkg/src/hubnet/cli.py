"""``hubnet`` command line.

Each subcommand resolves a flat ``key = value`` configuration from documented
defaults, an optional ``--config`` file, the ``HUBNET_SEED`` environment
variable (seed only) and command-line flags, in that order of precedence. The
resolved configuration is written to ``manifest.txt`` next to the outputs; it
is itself a valid ``--config`` file, so a run can be reproduced with
``hubnet <command> --config OUT/manifest.txt --out OTHER``.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import __version__
from .dynamics import SimConfig, _cos, _one, _sin, doubling_map, make_coupling, perturbed_doubling, simulate
from .experiments import (
    NetworkSpec,
    derive_seed,
    ensemble_stats,
    fit_power_law,
    format_float,
    invariant_of,
    mean_field_homogeneity,
    scaling_delta,
    scaling_kappa,
    sweep_alpha,
    write_manifest,
    write_sweep,
    SweepResult,
)
from .io import (
    save_trajectory,
    write_aggregates_csv,
    write_coherence_csv,
    write_degrees_csv,
    write_density_csv,
    write_graph,
    write_operator_csv,
    write_stability_csv,
    write_trajectory_csv,
    write_zeta_csv,
)
from .measure import invariant_density, mean_field_g, ulam_matrix, ulam_matrix_exact
from .reduction import ReducedHubModel, extract_zeta, fixed_points_stability, is_two_cycle, iterate_reduced

COMMANDS = (
    "generate-graph",
    "simulate",
    "sweep-alpha",
    "scaling-delta",
    "scaling-kappa",
    "homogeneity",
    "ensemble",
    "ulam",
    "reduce",
)
OBSERVABLES = {"sin": _sin, "cos": _cos, "one": _one}
META_KEYS = ("command", "version")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple:
    text = text.strip()
    return tuple(float(t) for t in text.split(",")) if text else ()


def _ints(text: str) -> tuple:
    text = text.strip()
    return tuple(int(t) for t in text.split(",")) if text else ()


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(default, parse, help):
    return field(default=default, metadata={"parse": parse, "help": help})


@dataclass
class RunConfig:
    """All run parameters. Lists are comma-separated in files and flags."""

    n: int = _opt(20_000, int, "node count")
    delta: float = _opt(260.0, float, "maximal expected degree")
    kappas: tuple = _opt((1.0, 0.99), _floats, "normalized hub degrees, first must be 1")
    low_degree: float = _opt(7.0, float, "expected degree of every non-hub node")
    noise_amp: float = _opt(1e-5, float, "uniform noise amplitude added each step")
    coupling: str = _opt("diffusive_sine", str, "diffusive_sine or sine_minus_sine")
    alpha: float = _opt(0.1, float, "coupling strength")
    t_burn: int = _opt(1000, int, "burn-in steps")
    t_record: int = _opt(1000, int, "recorded steps")
    seed: int = _opt(0, int, "master seed (env HUBNET_SEED overrides the file)")
    record_nodes: tuple = _opt((), _ints, "nodes to record in simulate (empty: hubs)")
    alphas: tuple = _opt(tuple(np.round(np.linspace(0.0, 0.8, 20), 12)), _floats, "sweep-alpha grid")
    deltas: tuple = _opt((64.0, 96.0, 128.0, 192.0, 256.0, 384.0, 512.0), _floats, "delta grid")
    kappa_grid: tuple = _opt((0.1, 0.2, 0.35, 0.5, 0.7, 1.0), _floats, "second-hub kappa grid")
    observable: str = _opt("sin", str, "observable for homogeneity/ensemble: sin, cos or one")
    ensemble_size: int = _opt(200, int, "ensemble size")
    time: int = _opt(50, int, "ensemble evaluation time")
    node_i: int = _opt(-1, int, "first low-degree node for ensemble (-1: first non-hub)")
    node_j: int = _opt(-1, int, "second low-degree node for ensemble (-1: second non-hub)")
    bins: int = _opt(1024, int, "Ulam partition size (power of two)")
    samples_per_bin: int = _opt(64, int, "Ulam sub-samples per bin")
    ulam_method: str = _opt("sampled", str, "sampled or exact")
    map_eps: float = _opt(0.0, float, "ulam map is 2x + map_eps*sin(2 pi x)")
    kappa: float = _opt(1.0, float, "hub kappa for reduce")
    x0: float = _opt(0.3, float, "reduce initial point")
    steps: int = _opt(2000, int, "reduce iteration count")
    zeta_amp: float = _opt(0.0, float, "reduce: amplitude of uniform zeta noise")


FIELD_INFO = {f.name: f for f in fields(RunConfig)}

DEFAULTS = {
    "scaling-delta": {"n": 50_000},
    "homogeneity": {"n": 50_000, "deltas": (128.0, 512.0)},
    "scaling-kappa": {"delta": 347.0},
    "sweep-alpha": {"alpha": 0.0},
    "reduce": {"coupling": "sine_minus_sine", "alpha": 0.3},
}


def default_config(command: str) -> RunConfig:
    return dataclasses.replace(RunConfig(), **DEFAULTS.get(command, {}))


def _convert(key: str, text: str):
    return FIELD_INFO[key].metadata["parse"](text)


def read_config_file(path: str, command: Optional[str] = None) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Raises:
        ConfigError: with ``path:line`` for unknown keys, malformed lines and bad values.
    """
    out: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in META_KEYS:
                if key == "command" and command is not None and value != command:
                    raise ConfigError(f"{path}:{lineno}: manifest is for {value!r}, not {command!r}")
                continue
            if key.startswith("derived."):
                continue
            if key not in FIELD_INFO:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _convert(key, value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def parse_config(command: str, path: Optional[str] = None, overrides: Optional[dict] = None,
                 environ=None) -> RunConfig:
    """Defaults < file < ``HUBNET_SEED`` < flags."""
    cfg = default_config(command)
    values = read_config_file(path, command) if path else {}
    env = os.environ if environ is None else environ
    if env.get("HUBNET_SEED", "") != "":
        try:
            values["seed"] = int(env["HUBNET_SEED"])
        except ValueError:
            raise ConfigError(f"HUBNET_SEED={env['HUBNET_SEED']!r} is not an integer") from None
    values.update(overrides or {})
    return dataclasses.replace(cfg, **values)


def config_items(cfg: RunConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hubnet", description="Hub dynamics on heterogeneous random networks.")
    parser.add_argument("--version", action="version", version=f"hubnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        defaults = default_config(name)
        p = sub.add_parser(name, help=f"run {name}",
                           description="Config keys (also usable as --flags): "
                           + ", ".join(f"{k}={_fmt(v)}" for k, v in config_items(defaults).items()))
        p.add_argument("--config", metavar="FILE", help="key = value file; # starts a comment")
        p.add_argument("--out", metavar="DIR", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
        p.add_argument("--binary", action="store_true", help="simulate: also write trajectory.npz")
        for f in fields(RunConfig):
            p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar="V",
                           help=f"{f.metadata['help']} (default {_fmt(getattr(defaults, f.name))})")
    return parser


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, str):
        return v
    return format_float(v)


# --- subcommands -----------------------------------------------------------

def _spec(cfg: RunConfig) -> NetworkSpec:
    return NetworkSpec(n=cfg.n, delta=cfg.delta, kappas=tuple(cfg.kappas), low_degree=cfg.low_degree,
                       noise_amp=cfg.noise_amp)


def _sim_config(cfg: RunConfig, seed: int) -> SimConfig:
    return SimConfig(alpha=cfg.alpha, t_burn=cfg.t_burn, t_record=cfg.t_record, seed=seed)


def _observable(cfg: RunConfig):
    if cfg.observable not in OBSERVABLES:
        raise ValueError(f"unknown observable {cfg.observable!r}; choose from {sorted(OBSERVABLES)}")
    return OBSERVABLES[cfg.observable]


def cmd_generate_graph(cfg, out, args, derived):
    seed = derive_seed(cfg.seed, 0)
    derived["derived.graph_seed"] = seed
    seq, graph = _spec(cfg).build(seed, workers=args.threads)
    write_graph(os.path.join(out, "graph.txt"), seq, graph)
    write_degrees_csv(os.path.join(out, "degrees.csv"), seq, graph)
    return f"edges={graph.n_edges} delta_rho={format_float(seq.delta_rho)}"


def cmd_simulate(cfg, out, args, derived):
    g_seed, x_seed = derive_seed(cfg.seed, 0), derive_seed(cfg.seed, 1)
    derived.update({"derived.graph_seed": g_seed, "derived.sim_seed": x_seed})
    seq, graph = _spec(cfg).build(g_seed, workers=args.threads)
    nodes = list(cfg.record_nodes) or list(range(seq.ell))
    hubs = [h for h in range(seq.ell) if h in nodes]
    sim = dataclasses.replace(_sim_config(cfg, x_seed), record_nodes=nodes,
                              aggregate_nodes=sorted(set(range(seq.ell)) | set(nodes)))
    fmap = doubling_map(cfg.noise_amp)
    cs = make_coupling(cfg.coupling)
    tr = simulate(graph, seq, fmap, cs, sim)
    write_trajectory_csv(os.path.join(out, "trajectory.csv"), tr)
    write_aggregates_csv(os.path.join(out, "aggregates.csv"), tr)
    if args.binary:
        save_trajectory(os.path.join(out, "trajectory.npz"), tr)
    parts = [f"steps={len(tr)}"]
    if cfg.alpha > 0 and hubs:
        g = mean_field_g(cs, invariant_of(doubling_map()))
        for h in hubs:
            model = ReducedHubModel(fmap, g, cfg.alpha, float(seq.kappas[h]))
            z = extract_zeta(tr, model, hub=h)
            write_zeta_csv(os.path.join(out, f"zeta_hub{h}.csv"), z.zeta, z.t_range[0])
            parts.append(f"mean_abs_zeta_hub{h}={format_float(np.mean(np.abs(z.zeta)))}")
    return " ".join(parts)


def cmd_sweep_alpha(cfg, out, args, derived):
    res = sweep_alpha(_spec(cfg), cfg.coupling, cfg.alphas, _sim_config(cfg, 0), cfg.seed, args.threads)
    derived.update({"derived.graph_seed": res.seeds[0], "derived.sim_seed": res.seeds[1]})
    write_sweep(res, out, "sweep_alpha")
    write_coherence_csv(os.path.join(out, "coherence.csv"), res.values, res.stat, res.extra["psi"])
    return f"max_r={format_float(res.stat.max())} min_r={format_float(res.stat.min())}"


def _scaling_summary(res: SweepResult) -> str:
    f = res.fit
    return (f"slope={format_float(f.slope)} ci_low={format_float(f.ci_low)} "
            f"ci_high={format_float(f.ci_high)}" + (" narrow" if f.narrow else ""))


def cmd_scaling_delta(cfg, out, args, derived):
    res = scaling_delta(_spec(cfg), cfg.deltas, _sim_config(cfg, 0), cfg.seed, args.threads, cfg.coupling)
    write_sweep(res, out, "scaling_delta")
    return _scaling_summary(res)


def cmd_scaling_kappa(cfg, out, args, derived):
    res = scaling_kappa(_spec(cfg), cfg.kappa_grid, _sim_config(cfg, 0), cfg.seed, args.threads, cfg.coupling)
    write_sweep(res, out, "scaling_kappa")
    return _scaling_summary(res)


def cmd_homogeneity(cfg, out, args, derived):
    psi = _observable(cfg)
    errs, rates = [], []
    for d in cfg.deltas:
        r = mean_field_homogeneity(dataclasses.replace(_spec(cfg), delta=float(d)), psi,
                                   _sim_config(cfg, 0), cfg.seed, cfg.coupling)
        errs.append(r.errors[0])
        rates.append(r.rate)
        derived[f"derived.regime_delta{format_float(d)}"] = r.regime
    errs = np.array(errs)
    fit = fit_power_law(cfg.deltas, errs) if len(cfg.deltas) >= 3 else None
    res = SweepResult("delta", np.asarray(cfg.deltas, dtype=float), "E1", errs, np.full(errs.size, np.nan),
                      [cfg.seed], fit=fit)
    write_sweep(res, out, "homogeneity")
    with open(os.path.join(out, "homogeneity_rate.csv"), "w") as fh:
        fh.write("delta,E1,predicted_rate\n")
        for d, e, p in zip(cfg.deltas, errs, rates):
            fh.write(f"{format_float(d)},{format_float(e)},{format_float(p)}\n")
    return " ".join(f"E1_delta{format_float(d)}={format_float(e)}" for d, e in zip(cfg.deltas, errs))


def cmd_ensemble(cfg, out, args, derived):
    psi = _observable(cfg)
    ell = len(cfg.kappas)
    i = cfg.node_i if cfg.node_i >= 0 else ell
    j = cfg.node_j if cfg.node_j >= 0 else ell + 1
    st = ensemble_stats(_spec(cfg), psi, psi, i, j, cfg.ensemble_size, cfg.time, cfg.alpha, cfg.coupling, cfg.seed)
    with open(os.path.join(out, "ensemble.csv"), "w") as fh:
        fh.write("axis,value,stat,stderr\n")
        fh.write(f"mean,{i},{format_float(st.mean)},{format_float(st.mean_stderr)}\n")
        fh.write(f"cov,{j},{format_float(st.cov)},{format_float(st.cov_stderr)}\n")
    return f"mean={format_float(st.mean)} cov={format_float(st.cov)}"


def cmd_ulam(cfg, out, args, derived):
    fmap = doubling_map() if cfg.map_eps == 0 else perturbed_doubling(cfg.map_eps)
    if cfg.ulam_method == "sampled":
        op = ulam_matrix(fmap, cfg.bins, cfg.samples_per_bin)
    elif cfg.ulam_method == "exact":
        op = ulam_matrix_exact(fmap, cfg.bins)
    else:
        raise ValueError(f"unknown ulam_method {cfg.ulam_method!r}")
    dens = invariant_density(op)
    write_density_csv(os.path.join(out, "density.csv"), dens)
    write_operator_csv(os.path.join(out, "operator.csv"), op)
    return f"max_dev={format_float(np.max(np.abs(dens.values - 1.0)))}"


def cmd_reduce(cfg, out, args, derived):
    fmap = doubling_map()
    model = ReducedHubModel(fmap, mean_field_g(make_coupling(cfg.coupling), invariant_of(fmap)), cfg.alpha, cfg.kappa)
    pts = fixed_points_stability(model)
    write_stability_csv(os.path.join(out, "stability.csv"), pts)
    zeta = cfg.zeta_amp if cfg.zeta_amp > 0 else None
    zseed = derive_seed(cfg.seed, 2)
    derived["derived.zeta_seed"] = zseed
    orbit = iterate_reduced(model, cfg.x0, cfg.steps, zeta, seed=zseed)
    with open(os.path.join(out, "orbit.csv"), "w") as fh:
        fh.write("t,x\n")
        fh.writelines(f"{t},{format_float(x)}\n" for t, x in enumerate(orbit))
    stable = [p for p in pts if p.stable]
    return (f"fixed_points={len(pts)} stable={len(stable)} "
            f"two_cycle={is_two_cycle(orbit, tol=1e-6 if zeta is None else 1e-2)}")


HANDLERS = {
    "generate-graph": cmd_generate_graph,
    "simulate": cmd_simulate,
    "sweep-alpha": cmd_sweep_alpha,
    "scaling-delta": cmd_scaling_delta,
    "scaling-kappa": cmd_scaling_kappa,
    "homogeneity": cmd_homogeneity,
    "ensemble": cmd_ensemble,
    "ulam": cmd_ulam,
    "reduce": cmd_reduce,
}


def _mark_failed(out: str, before: set):
    for name in sorted(set(os.listdir(out)) - before):
        path = os.path.join(out, name)
        if os.path.isfile(path) and not name.endswith(".failed"):
            os.replace(path, path + ".failed")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    try:
        for key in FIELD_INFO:
            raw = getattr(args, key)
            if raw is not None:
                try:
                    overrides[key] = _convert(key, raw)
                except ValueError as exc:
                    raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from None
        cfg = parse_config(args.command, args.config, overrides)
    except (ConfigError, OSError) as exc:
        print(f"hubnet: {exc}", file=sys.stderr)
        return 2
    if args.threads < 1:
        print("hubnet: --threads must be at least 1", file=sys.stderr)
        return 2

    out = args.out
    os.makedirs(out, exist_ok=True)
    before = set(os.listdir(out))
    derived: dict = {}
    try:
        summary = HANDLERS[args.command](cfg, out, args, derived)
        manifest = {"command": args.command, "version": __version__}
        manifest.update({k: _fmt(v) for k, v in config_items(cfg).items()})
        manifest.update(derived)
        write_manifest(os.path.join(out, "manifest.txt"), manifest)
    except Exception as exc:  # any module error fails the run
        _mark_failed(out, before)
        print(f"hubnet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
