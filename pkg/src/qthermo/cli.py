"""Batch experiment runner.

Reads a strictly-parsed JSON config, dispatches model / counting /
trajectory computations, and writes machine-readable result tables
(CSV or JSON) atomically. Exit codes: 0 success, 2 config error,
3 numerical failure (any non-finite value aborts).

Config dialect: JSON, schema "json/1"; unknown keys are rejected at
every nesting level. Sweep points run concurrently (thread count via
QTHERMO_NUM_THREADS); output rows are ordered by sweep index.
"""

import argparse
import json
import math
import os
import sys
import tempfile
import time
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .fcs import CountingConfig, cumulants, tur_audit
from .lindblad import (all_currents, entropy_production_rate, propagate,
                       steady_state)
from .models import (DoubleDotParams, FridgeParams, SingleDotParams,
                     double_dot_concurrence, entanglement_heat_threshold,
                     fridge_coherent_transient, fridge_generator,
                     fridge_observables, fridge_switchoff_protocol,
                     single_dot_generator)
from .models.fridge import product_gibbs_state
from .models.single_dot import engine_efficiency, engine_regime
from .thermo import ReservoirSpec
from .trajectories import (TPMProtocol, backward_ensemble, backward_protocol,
                           ft_estimators, tpm_distribution, tpm_sample,
                           unravel)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

CONFIG_DIALECT = "json/1"
ENV_THREADS = "QTHERMO_NUM_THREADS"

EXPERIMENTS = ("single-dot", "heat-engine", "double-dot", "absorption",
               "fcs", "tpm", "trajectories")


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


def _check_keys(mapping, allowed, where):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {where}; "
                          f"allowed: {sorted(allowed)}")


def _typecheck(value, kind, label):
    if isinstance(value, bool) or (kind is not None
                                   and not isinstance(value, kind)):
        raise ConfigError(f"{label} has wrong type {type(value).__name__}")
    return value


def _need(mapping, key, where, kind=(int, float)):
    if key not in mapping:
        raise ConfigError(f"missing key {key!r} in {where}")
    return _typecheck(mapping[key], kind, f"{where}.{key}")


def _opt(mapping, key, default, kind=(int, float)):
    if key not in mapping:
        return default
    return _typecheck(mapping[key], kind, f"key {key!r}")


def load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    _check_keys(raw, {"experiment", "params", "sweep", "output", "seed"},
                "config")
    experiment = _need(raw, "experiment", "config", str)
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; "
                          f"choose from {EXPERIMENTS}")
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("config.params must be an object")
    sweep = raw.get("sweep")
    if sweep is not None:
        _check_keys(sweep, {"name", "start", "stop", "steps"}, "config.sweep")
        name = _need(sweep, "name", "config.sweep", str)
        start = float(_need(sweep, "start", "config.sweep"))
        stop = float(_need(sweep, "stop", "config.sweep"))
        steps = _need(sweep, "steps", "config.sweep", int)
        if not (math.isfinite(start) and math.isfinite(stop)):
            raise ConfigError("sweep bounds must be finite")
        if steps < 2:
            raise ConfigError("sweep.steps must be >= 2")
        sweep = {"name": name, "start": start, "stop": stop, "steps": steps}
    output = raw.get("output", {})
    _check_keys(output, {"path", "format"}, "config.output")
    out_path = _opt(output, "path", "results.csv", str)
    out_format = _opt(output, "format", "csv", str)
    if out_format not in ("csv", "json"):
        raise ConfigError(f"output.format must be 'csv' or 'json', "
                          f"got {out_format!r}")
    seed = _opt(raw, "seed", 0, int)
    return {"experiment": experiment, "params": params, "sweep": sweep,
            "output": {"path": out_path, "format": out_format}, "seed": seed}


def _reservoir(cfg, where, statistics="fermionic"):
    _check_keys(cfg, {"temperature", "chemical_potential", "coupling"}, where)
    return ReservoirSpec(
        temperature=float(_need(cfg, "temperature", where)),
        chemical_potential=float(_opt(cfg, "chemical_potential", 0.0)),
        statistics=statistics,
        coupling=float(_need(cfg, "coupling", where)))


# ---------------------------------------------------------------------------
# Experiment table builders: each returns (columns, units, rows)
# ---------------------------------------------------------------------------

_ENGINE_KEYS = {"eps_d", "T_c", "T_h", "mu_c", "mu_h", "kappa_c", "kappa_h"}


def _engine_params(p):
    _check_keys(p, _ENGINE_KEYS, "params")
    return SingleDotParams(
        float(_need(p, "eps_d", "params")),
        {"c": ReservoirSpec(float(_need(p, "T_c", "params")),
                            float(_opt(p, "mu_c", 0.0)), "fermionic",
                            float(_need(p, "kappa_c", "params"))),
         "h": ReservoirSpec(float(_need(p, "T_h", "params")),
                            float(_opt(p, "mu_h", 0.0)), "fermionic",
                            float(_need(p, "kappa_h", "params")))})


def _engine_point(p):
    params = _engine_params(p)
    gen, ledger = single_dot_generator(params)
    rho = steady_state(gen)
    cur = all_currents(gen, ledger, rho)
    j_c, p_c = cur["c"]
    j_h, p_h = cur["h"]
    eta = engine_efficiency(params)
    if eta is None:
        raise NumericalFailure("efficiency undefined at eps_d = mu_h")
    return [p_c + p_h, j_c, j_h, eta, engine_regime(params)]


def _run_heat_engine(cfg):
    cols = ["P", "J_c", "J_h", "eta", "regime"]
    units = ["kref^2", "kref^2", "kref^2", "1", "-"]
    return _sweepable(cfg, _engine_point, cols, units)


_DOUBLE_DOT_KEYS = {"eps", "g", "T_L", "T_R", "mu_L", "mu_R",
                    "kappa_L", "kappa_R", "mode"}


def _double_dot_params(p):
    _check_keys(p, _DOUBLE_DOT_KEYS, "params")
    return DoubleDotParams(
        float(_need(p, "eps", "params")),
        float(_need(p, "g", "params")),
        {"L": ReservoirSpec(float(_need(p, "T_L", "params")),
                            float(_opt(p, "mu_L", 0.0)), "fermionic",
                            float(_need(p, "kappa_L", "params"))),
         "R": ReservoirSpec(float(_need(p, "T_R", "params")),
                            float(_opt(p, "mu_R", 0.0)), "fermionic",
                            float(_need(p, "kappa_R", "params")))},
        mode=_opt(p, "mode", "local", str))


def _double_dot_point(p):
    params = _double_dot_params(p)
    j_r, j_crit, entangled = entanglement_heat_threshold(params)
    return [double_dot_concurrence(params), j_r, j_crit, int(entangled)]


def _run_double_dot(cfg):
    cols = ["concurrence", "J_R", "J_crit", "entangled"]
    units = ["1", "kref^2", "kref^2", "bool"]
    return _sweepable(cfg, _double_dot_point, cols, units)


_FRIDGE_KEYS = {"eps_c", "eps_h", "eps_r", "g", "T_c", "T_r", "T_h",
                "kappa_c", "kappa_r", "kappa_h", "t_max", "steps"}


def _fridge_params(p):
    _check_keys(p, _FRIDGE_KEYS, "params")
    kwargs = {}
    if "eps_r" in p:
        kwargs["eps_r"] = float(p["eps_r"])
    return FridgeParams(
        float(_need(p, "eps_c", "params")),
        float(_need(p, "eps_h", "params")),
        float(_need(p, "g", "params")),
        {tag: ReservoirSpec(float(_need(p, f"T_{tag}", "params")), 0.0,
                            "bosonic",
                            float(_need(p, f"kappa_{tag}", "params")))
         for tag in ("c", "h", "r")},
        **kwargs)


def _fridge_point(p):
    params = _fridge_params(p)
    amp, j_c, j_h, j_r, theta, cooling = fridge_observables(params)
    return [amp, j_c, j_h, j_r, theta, int(cooling)]


def _run_absorption(cfg):
    if cfg["sweep"] is not None:
        cols = ["I", "J_c", "J_h", "J_r", "theta", "cooling"]
        units = ["kref", "kref^2", "kref^2", "kref^2", "kref", "bool"]
        return _sweepable(cfg, _fridge_point, cols, units)
    # transient protocol: run with the interaction on until the first
    # temperature minimum, switch off there, keep recording
    p = dict(cfg["params"])
    t_max = float(_opt(p, "t_max", 0.0)) or None
    steps = _opt(p, "steps", 400, int)
    params = _fridge_params(p)
    t_min, _, _ = fridge_switchoff_protocol(params)
    horizon = t_max if t_max is not None else 3.0 * t_min
    n_on = max(2, int(steps * t_min / horizon) + 1)
    times_on, occ_on, theta_on = fridge_coherent_transient(params, t_min, n_on)
    off = FridgeParams(params.eps_c, params.eps_h, 0.0, params.reservoirs)
    gen_on, _ = fridge_generator(params)
    rho_at_min = propagate(gen_on, product_gibbs_state(params), t_min)
    n_off = max(2, steps - n_on)
    times_off, occ_off, theta_off = fridge_coherent_transient(
        off, horizon - t_min, n_off, rho0=rho_at_min)
    rows = []
    for t, occ, theta in zip(times_on, occ_on, theta_on):
        rows.append([t, occ, theta, 1])
    for t, occ, theta in zip(times_off[1:], occ_off[1:], theta_off[1:]):
        rows.append([t_min + t, occ, theta, 0])
    cols = ["t", "occupation", "theta", "refrigerator_on"]
    units = ["1/kref", "1", "kref", "bool"]
    return cols, units, rows


_SINGLE_DOT_KEYS = {"eps_d", "p1_initial", "t_max", "steps", "reservoirs"}


def _run_single_dot(cfg):
    if cfg["sweep"] is not None:
        raise ConfigError("single-dot emits a time series; sweep not supported")
    p = cfg["params"]
    _check_keys(p, _SINGLE_DOT_KEYS, "params")
    res_cfg = _need(p, "reservoirs", "params", dict)
    if not res_cfg:
        raise ConfigError("params.reservoirs must name at least one reservoir")
    reservoirs = {tag: _reservoir(rc, f"params.reservoirs.{tag}")
                  for tag, rc in res_cfg.items()}
    params = SingleDotParams(float(_need(p, "eps_d", "params")), reservoirs)
    p1 = float(_opt(p, "p1_initial", 0.0))
    if not 0.0 <= p1 <= 1.0:
        raise ConfigError("p1_initial must lie in [0, 1]")
    t_max = float(_need(p, "t_max", "params"))
    steps = _opt(p, "steps", 200, int)
    gen, ledger = single_dot_generator(params)
    tags = sorted(reservoirs)
    rows = []
    for t in np.linspace(0.0, t_max, steps):
        rho = propagate(gen, np.diag([1.0 - p1, p1]).astype(complex), t)
        cur = all_currents(gen, ledger, rho)
        row = [t, float(rho[1, 1].real)]
        for tag in tags:
            row.extend(cur[tag])
        row.append(entropy_production_rate(gen, ledger, rho))
        rows.append(row)
    cols = ["t", "p1"]
    units = ["1/kref", "1"]
    for tag in tags:
        cols.extend([f"J_{tag}", f"P_{tag}"])
        units.extend(["kref^2", "kref^2"])
    cols.append("sigma_dot")
    units.append("kB*kref")
    return cols, units, rows


_FCS_KEYS = {"eps_d", "T_L", "T_R", "mu_L", "mu_R", "kappa_L", "kappa_R"}


def _fcs_point(p):
    _check_keys(p, _FCS_KEYS, "params")
    params = SingleDotParams(
        float(_need(p, "eps_d", "params")),
        {"L": ReservoirSpec(float(_need(p, "T_L", "params")),
                            float(_opt(p, "mu_L", 0.0)), "fermionic",
                            float(_need(p, "kappa_L", "params"))),
         "R": ReservoirSpec(float(_need(p, "T_R", "params")),
                            float(_opt(p, "mu_R", 0.0)), "fermionic",
                            float(_need(p, "kappa_R", "params")))})
    gen, ledger = single_dot_generator(params)
    cfg = CountingConfig.particle(gen, "R")
    reports = cumulants(gen, cfg, cfg.fields[0].name, max_order=4)
    c = [r.value for r in reports]
    rho = steady_state(gen)
    sigma_dot = entropy_production_rate(gen, ledger, rho)
    audit = tur_audit(c[0], c[1], sigma_dot)
    satisfied = -1 if audit.satisfied is None else int(audit.satisfied)
    return [c[0], c[1], c[2], c[3], c[1] / c[0], sigma_dot,
            audit.ratio, audit.bound, satisfied]


def _run_fcs(cfg):
    cols = ["c1", "c2", "c3", "c4", "fano", "sigma_dot", "tur_ratio",
            "tur_bound", "tur_satisfied"]
    units = ["kref", "kref", "kref", "kref", "1", "kB*kref", "1/kref",
             "1/kref", "bool"]
    return _sweepable(cfg, _fcs_point, cols, units)


_TPM_KEYS = {"eps0", "angle", "beta", "tau", "n_samples"}


def _run_tpm(cfg):
    if cfg["sweep"] is not None:
        raise ConfigError("tpm emits a distribution table; sweep not supported")
    p = cfg["params"]
    _check_keys(p, _TPM_KEYS, "params")
    eps0 = float(_need(p, "eps0", "params"))
    angle = float(_need(p, "angle", "params"))
    beta = float(_need(p, "beta", "params"))
    tau = float(_need(p, "tau", "params"))
    n_samples = _opt(p, "n_samples", 0, int)
    h0 = 0.5 * eps0 * np.array([[1.0, 0.0], [0.0, -1.0]])
    h1 = 0.5 * eps0 * (math.cos(angle) * np.array([[1.0, 0.0], [0.0, -1.0]])
                       + math.sin(angle) * np.array([[0.0, 1.0], [1.0, 0.0]]))
    protocol = TPMProtocol(((0.0, h0), (0.0, h1)), beta, tau)
    fwd = tpm_distribution(protocol)
    bwd = tpm_distribution(backward_protocol(protocol))
    counts = np.zeros_like(fwd.joint)
    if n_samples > 0:
        samples = tpm_sample(protocol, cfg["seed"], n_samples)
        np.add.at(counts, (samples.initial, samples.final), 1)
    rows = []
    dim = fwd.p_initial.size
    for n in range(dim):
        for m in range(dim):
            rows.append([n, m, float(fwd.work[n, m]),
                         float(fwd.joint[n, m]), float(bwd.joint[m, n]),
                         int(counts[n, m])])
    cols = ["n", "m", "work", "p_forward", "p_backward", "count_sampled"]
    units = ["-", "-", "kref", "1", "1", "-"]
    return cols, units, rows


_TRAJ_KEYS = {"eps_d", "T_L", "T_R", "mu_L", "mu_R", "kappa_L", "kappa_R",
              "tau", "n_traj"}


def _run_trajectories(cfg):
    if cfg["sweep"] is not None:
        raise ConfigError("trajectories emits a summary table; sweep not "
                          "supported")
    p = cfg["params"]
    _check_keys(p, _TRAJ_KEYS, "params")
    params = SingleDotParams(
        float(_need(p, "eps_d", "params")),
        {"L": ReservoirSpec(float(_need(p, "T_L", "params")),
                            float(_opt(p, "mu_L", 0.0)), "fermionic",
                            float(_need(p, "kappa_L", "params"))),
         "R": ReservoirSpec(float(_need(p, "T_R", "params")),
                            float(_opt(p, "mu_R", 0.0)), "fermionic",
                            float(_need(p, "kappa_R", "params")))})
    tau = float(_need(p, "tau", "params"))
    n_traj = _need(p, "n_traj", "params", int)
    gen, ledger = single_dot_generator(params)
    rho_ss = steady_state(gen)
    p0 = np.real(np.diag(rho_ss))
    fwd = unravel(gen, ledger, p0, tau, cfg["seed"], n_traj,
                  record_events=False)
    bwd = backward_ensemble(gen, ledger, fwd, cfg["seed"] + 1)
    report = ft_estimators(fwd, bwd)
    rows = [["ift_estimate", report.integral_estimate,
             report.integral_stderr],
            ["negative_sigma_fraction", report.negative_fraction, 0.0],
            ["mean_sigma", float(fwd.entropy_production.mean()),
             float(fwd.entropy_production.std(ddof=1) / math.sqrt(n_traj))]]
    for tag in sorted(fwd.heat):
        rows.append([f"mean_Q_{tag}", float(fwd.heat[tag].mean()),
                     float(fwd.heat[tag].std(ddof=1) / math.sqrt(n_traj))])
    if not report.detailed_inconclusive:
        rows.append(["detailed_slope", report.detailed_slope,
                     report.detailed_slope_stderr])
    cols = ["quantity", "value", "stderr"]
    units = ["-", "mixed", "mixed"]
    return cols, units, rows


def _sweepable(cfg, point_fn, cols, units):
    """Run a per-point experiment, optionally sweeping one numeric param."""
    params = cfg["params"]
    sweep = cfg["sweep"]
    if sweep is None:
        return cols, units, [point_fn(params)]
    name = sweep["name"]
    if name not in params:
        raise ConfigError(f"sweep parameter {name!r} not present in params")
    if not isinstance(params[name], (int, float)) or isinstance(params[name], bool):
        raise ConfigError(f"sweep parameter {name!r} is not numeric")
    values = np.linspace(sweep["start"], sweep["stop"], sweep["steps"])

    def at(value):
        local = dict(params)
        local[name] = float(value)
        return [float(value)] + point_fn(local)

    workers = int(os.environ.get(ENV_THREADS, "0")) or min(8, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(at, values))
    return [name] + cols, ["param"] + units, rows


_RUNNERS = {
    "single-dot": _run_single_dot,
    "heat-engine": _run_heat_engine,
    "double-dot": _run_double_dot,
    "absorption": _run_absorption,
    "fcs": _run_fcs,
    "tpm": _run_tpm,
    "trajectories": _run_trajectories,
}


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _format_cell(value):
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.16e}"
    return str(value)


def _check_table(cols, rows):
    for i, row in enumerate(rows):
        if len(row) != len(cols):
            raise NumericalFailure(
                f"row {i} has {len(row)} cells, expected {len(cols)}")
        for j, value in enumerate(row):
            if isinstance(value, (float, np.floating, int, np.integer)) \
                    and not math.isfinite(float(value)):
                raise NumericalFailure(
                    f"non-finite value {value!r} at row {i}, column {j}")


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".qthermo-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(path, fmt, cols, units, rows, metadata):
    if fmt == "csv":
        lines = [f"# {key}: {value}" for key, value in metadata.items()]
        lines.append(",".join(f"{c}[{u}]" for c, u in zip(cols, units)))
        for row in rows:
            lines.append(",".join(_format_cell(v) for v in row))
        _atomic_write(path, "\n".join(lines) + "\n")
    else:
        payload = {"metadata": metadata, "columns": cols, "units": units,
                   "rows": [[(_format_cell(v) if isinstance(v, str) else
                              (int(v) if isinstance(v, (int, np.integer))
                               else float(v))) for v in row] for row in rows]}
        _atomic_write(path, json.dumps(payload, indent=1) + "\n")


def run(config_path, seed=None, out=None, fmt=None):
    cfg = load_config(config_path)
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["output"]["path"] = out
    if fmt is not None:
        if fmt not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {fmt!r}")
        cfg["output"]["format"] = fmt
    t0 = time.perf_counter()
    cols, units, rows = _RUNNERS[cfg["experiment"]](cfg)
    _check_table(cols, rows)
    metadata = {
        "qthermo_version": __version__,
        "config_dialect": CONFIG_DIALECT,
        "config": json.dumps({k: cfg[k] for k in
                              ("experiment", "params", "sweep", "seed")},
                             sort_keys=True, separators=(",", ":")),
        "seed": cfg["seed"],
        "wall_time_s": f"{time.perf_counter() - t0:.3f}",
    }
    write_table(cfg["output"]["path"], cfg["output"]["format"], cols, units,
                rows, metadata)
    return cfg["output"]["path"]


_BUILDERS = {
    "single-dot": lambda p: SingleDotParams(
        float(_need(p, "eps_d", "params")),
        {tag: _reservoir(rc, f"params.reservoirs.{tag}")
         for tag, rc in _need(p, "reservoirs", "params", dict).items()}),
    "heat-engine": _engine_params,
    "double-dot": _double_dot_params,
    "absorption": _fridge_params,
}


def validate(config_path):
    """Parse the config and report validity-margin warnings without running."""
    cfg = load_config(config_path)
    builder = _BUILDERS.get(cfg["experiment"])
    messages = []
    if builder is not None:
        params = dict(cfg["params"])
        for transient_key in ("t_max", "steps", "p1_initial"):
            params.pop(transient_key, None)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            builder(params)
        messages = [str(w.message) for w in caught]
    for msg in messages:
        print(f"warning: {msg}")
    return messages


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="qthermo",
        description="Quantum-thermodynamics batch experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a config and write tables")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--out", default=None, help="override the output path")
    p_run.add_argument("--format", default=None, choices=("csv", "json"),
                       help="override the output format")
    p_val = sub.add_parser("validate",
                           help="check a config and print validity warnings")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            run(args.config, seed=args.seed, out=args.out, fmt=args.format)
            return EXIT_OK
        validate(args.config)
        return EXIT_OK
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, FloatingPointError, np.linalg.LinAlgError,
            RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
