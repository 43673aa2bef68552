"""Command-line front end: ``roma-sim <command> --config <path> --out <dir>``.

Commands
--------
trace         AO versus DE convergence traces (fig2_* files)
region-sweep  average SE versus region size (fig3_* files)
power-sweep   average SE versus transmit power (fig4_* files)
single        one architecture on one seed

Exit codes: 0 success, 1 runtime failure, 2 configuration error,
3 infeasible geometry.
"""

import argparse
import csv
import dataclasses
import datetime
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import KINDS, DEConfig
from .exceptions import ConfigError, InfeasibleProblemError, RomaSimError
from .experiments import (
    SweepResult,
    SweepRow,
    convergence_trace,
    power_sweep,
    region_sweep,
    single_run,
)
from .optimizer import SolverConfig
from .scenario import Scenario

logger = logging.getLogger(__name__)

COMMANDS = ("trace", "region-sweep", "power-sweep", "single")
FIGURES = {"trace": "fig2", "region-sweep": "fig3", "power-sweep": "fig4"}
CSV_COLUMNS = (
    "scenario_id", "architecture", "a_over_lambda", "p_dbm", "seed", "iteration",
    "avg_se_bps_hz", "per_user_se", "wall_ms",
)
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2, 3

SCENARIO_KEYS = {f.name for f in dataclasses.fields(Scenario)}
SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverConfig)}
DE_KEYS = {"de_population", "de_mutation_factor", "de_crossover_rate", "de_penalty", "de_seed"}
RUN_DEFAULTS = {
    "seeds": 20,
    "architectures": ["ROMA", "MA", "RO", "AS", "FPA"],
    "architecture": "ROMA",
    "seed": 0,
    "a_values_over_lambda": [0.5, 1.0, 1.5, 2.0, 2.5],
    "p_values_dbm": [10.0, 15.0, 20.0, 25.0, 30.0],
    "trace_p_dbm": [20.0, 30.0],
    "record_wall_time": False,
}
ALLOWED_KEYS = SCENARIO_KEYS | SOLVER_KEYS | DE_KEYS | set(RUN_DEFAULTS)


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Parsed configuration file."""

    scenario: Scenario
    solver: SolverConfig
    de: DEConfig
    run: dict


def _key_line(text, key):
    for n, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return n
    return None


def _reject_duplicates(pairs):
    seen = {}
    for k, v in pairs:
        if k in seen:
            raise ConfigError(f"duplicate key {k!r}")
        seen[k] = v
    return seen


def parse_config_text(text, source="<config>"):
    """Parse a JSON configuration string; see :func:`parse_config`."""
    if not text.strip():
        data = {}
    else:
        try:
            data = json.loads(text, object_pairs_hook=_reject_duplicates)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: the top level must be a JSON object")
    for key in data:
        if key not in ALLOWED_KEYS:
            line = _key_line(text, key)
            where = f"{source}:{line}" if line else source
            raise ConfigError(f"{where}: unknown key {key!r}")

    def fail(key, exc):
        line = _key_line(text, key)
        where = f"{source}:{line}" if line else source
        return ConfigError(f"{where}: invalid value for {key!r}: {exc}")

    scenario_kw = {k: v for k, v in data.items() if k in SCENARIO_KEYS}
    for key in ("bs_grid", "user_grid", "user_radius_m"):
        if key in scenario_kw:
            scenario_kw[key] = tuple(scenario_kw[key])
    try:
        scenario = Scenario(**scenario_kw)
    except (TypeError, ValueError) as exc:
        bad = next((k for k in scenario_kw if k in str(exc)), next(iter(scenario_kw), "scenario"))
        raise fail(bad, exc) from None
    solver_kw = {k: v for k, v in data.items() if k in SOLVER_KEYS}
    try:
        solver = SolverConfig(**solver_kw)
    except (TypeError, ValueError) as exc:
        bad = next((k for k in solver_kw if k in str(exc)), "solver")
        raise fail(bad, exc) from None
    de_kw = {k[3:]: v for k, v in data.items() if k in DE_KEYS}
    try:
        de = DEConfig(**de_kw)
    except (TypeError, ValueError) as exc:
        raise fail(next(iter(k for k in data if k in DE_KEYS), "de"), exc) from None
    run = dict(RUN_DEFAULTS)
    run.update({k: v for k, v in data.items() if k in RUN_DEFAULTS})
    _check_run(run, fail)
    return RunConfig(scenario, solver, de, run)


def _check_run(run, fail):
    if isinstance(run["seeds"], bool) or not isinstance(run["seeds"], int) or run["seeds"] < 1:
        raise fail("seeds", "expected a positive integer")
    if isinstance(run["seed"], bool) or not isinstance(run["seed"], int) or run["seed"] < 0:
        raise fail("seed", "expected a non-negative integer")
    archs = run["architectures"]
    if not isinstance(archs, list) or not archs or any(str(a).upper() not in KINDS for a in archs):
        raise fail("architectures", f"expected a non-empty list drawn from {KINDS}")
    run["architectures"] = [str(a).upper() for a in archs]
    if str(run["architecture"]).upper() not in KINDS:
        raise fail("architecture", f"expected one of {KINDS}")
    run["architecture"] = str(run["architecture"]).upper()
    for key in ("a_values_over_lambda", "p_values_dbm", "trace_p_dbm"):
        values = run[key]
        if not isinstance(values, list) or not values or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v) for v in values
        ):
            raise fail(key, "expected a non-empty list of numbers")
        run[key] = [float(v) for v in values]
    if any(v <= 0 for v in run["a_values_over_lambda"]):
        raise fail("a_values_over_lambda", "region sizes must be positive")
    if not isinstance(run["record_wall_time"], bool):
        raise fail("record_wall_time", "expected true or false")


def parse_config(path):
    """Read a strict JSON configuration file.

    Keys are flat and carry their unit in the name (``p_dbm``,
    ``sigma2_dbm``, ``a_over_lambda``, ``d_over_lambda``, ``carrier_hz``).
    Unknown or duplicate keys and out-of-range values raise
    :class:`ConfigError` with the offending key and line.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def _fmt(value):
    return f"{value:.12g}"


def write_results_csv(result, path, record_wall_time=False):
    """Write rows sorted by key with 12 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in result.sorted_rows():
            writer.writerow([
                r.scenario_id, r.architecture, _fmt(r.a_over_lambda), _fmt(r.p_dbm), r.seed,
                r.iteration, _fmt(r.avg_se), ";".join(_fmt(v) for v in r.per_user_se),
                _fmt(r.wall_ms) if record_wall_time else "",
            ])


def read_results_csv(path):
    """Load rows written by :func:`write_results_csv`."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            per_user = tuple(float(v) for v in rec["per_user_se"].split(";") if v)
            rows.append(SweepRow(
                rec["scenario_id"], rec["architecture"], float(rec["a_over_lambda"]),
                float(rec["p_dbm"]), int(rec["seed"]), int(rec["iteration"]),
                float(rec["avg_se_bps_hz"]), per_user, float(rec["wall_ms"] or 0.0),
            ))
    return SweepResult(rows)


def write_timings(result, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("architecture", "a_over_lambda", "p_dbm", "seed", "wall_ms"))
        for r in result.sorted_rows():
            if r.wall_ms:
                writer.writerow((r.architecture, _fmt(r.a_over_lambda), _fmt(r.p_dbm), r.seed, _fmt(r.wall_ms)))


def _write_dat(path, xs, ys):
    with open(path, "w") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{_fmt(x)} {_fmt(y)}\n")


def write_plot_data(command, result, out_dir):
    """Two-column ``<figure>_<curve>.dat`` files; returns their names."""
    figure = FIGURES.get(command)
    if figure is None:
        return []
    names = []
    if command == "trace":
        curves = {}
        for r in result.sorted_rows():
            curves.setdefault((r.architecture, r.p_dbm), {}).setdefault(r.seed, []).append(r.avg_se)
        for (arch, p), per_seed in sorted(curves.items()):
            length = max(len(v) for v in per_seed.values())
            # runs that stopped early hold their final value
            padded = np.array([v + [v[-1]] * (length - len(v)) for v in per_seed.values()])
            name = f"{figure}_{arch}-p{_fmt(p)}dBm.dat"
            _write_dat(out_dir / name, np.arange(length), padded.mean(axis=0))
            names.append(name)
        return names
    by = "a_over_lambda" if command == "region-sweep" else "p_dbm"
    for arch in sorted({r.architecture for r in result.rows}):
        xs, ys = result.mean_curve(arch, by)
        name = f"{figure}_{arch}.dat"
        _write_dat(out_dir / name, xs, ys)
        names.append(name)
    return names


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command, config_path, cfg, files):
    """Write ``manifest.json`` last; its presence marks a completed run."""
    manifest = {
        "version": __version__,
        "command": command,
        "config": str(config_path),
        "out_dir": str(out_dir),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "scenario": cfg.scenario.to_dict(),
        "solver": dataclasses.asdict(cfg.solver),
        "de": dataclasses.asdict(cfg.de),
        "run": cfg.run,
        "files": {name: _sha256(out_dir / name) for name in sorted(files)},
    }
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, out_dir / "manifest.json")
    return manifest


def run(command, config_path, out_dir, seeds=None, jobs=1):
    """Execute one command and write its outputs. Raises on failure."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
    cfg = parse_config(config_path)
    if seeds is not None:
        cfg.run["seeds"] = int(seeds)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results_path = out_dir / "results.csv"
    manifest_path = out_dir / "manifest.json"
    completed = None
    if results_path.exists() and not manifest_path.exists() and command != "single":
        # an interrupted run: keep the rows it already finished
        completed = read_results_csv(results_path)
        logger.info("resuming with %d completed rows", len(completed))
    if manifest_path.exists():
        manifest_path.unlink()
    sc, solver, n_seeds = cfg.scenario, cfg.solver, cfg.run["seeds"]
    if command == "single":
        result = single_run(sc, cfg.run["architecture"], cfg.run["seed"], solver)
    elif command == "region-sweep":
        result = region_sweep(sc, cfg.run["a_values_over_lambda"], cfg.run["architectures"], n_seeds,
                              solver, jobs, completed)
    elif command == "power-sweep":
        result = power_sweep(sc, cfg.run["p_values_dbm"], cfg.run["architectures"], n_seeds,
                             solver, jobs, completed)
    else:
        result = convergence_trace(sc, ("AO", "DE"), cfg.run["trace_p_dbm"], n_seeds, solver, cfg.de,
                                   jobs, completed)
    write_results_csv(result, results_path, cfg.run["record_wall_time"])
    write_timings(result, out_dir / "timings.csv")
    files = ["results.csv", "timings.csv"] + write_plot_data(command, result, out_dir)
    write_manifest(out_dir, command, config_path, cfg, files)
    return result


def build_parser():
    parser = argparse.ArgumentParser(prog="roma-sim", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seeds", type=int, default=None, help="number of seeds (overrides the config)")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes (ROMA_SIM_JOBS overrides)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_jobs(cli_jobs, environ=None):
    environ = os.environ if environ is None else environ
    value = environ.get("ROMA_SIM_JOBS")
    if value:
        try:
            jobs = int(value)
        except ValueError:
            raise ConfigError(f"ROMA_SIM_JOBS must be an integer, got {value!r}") from None
    else:
        jobs = cli_jobs
    if jobs < 1:
        raise ConfigError(f"the job count must be positive, got {jobs}")
    return jobs


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.seeds is not None and args.seeds < 1:
            raise ConfigError("--seeds must be positive")
        jobs = resolve_jobs(args.jobs)
        run(args.command, args.config, args.out, args.seeds, jobs)
    except ConfigError as exc:
        print(f"roma-sim: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleProblemError as exc:
        print(f"roma-sim: infeasible problem: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (RomaSimError, ArithmeticError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"roma-sim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
