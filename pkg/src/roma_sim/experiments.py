"""Monte Carlo orchestration: convergence traces, region sweeps and power sweeps.

Every sweep is split into one job per seed. A job draws the seed's channel
realization once and runs every architecture and sweep value on it, so all
rows of a seed are paired on identical draws. Jobs can run in worker
processes; rows are keyed and sorted, so the output does not depend on the
execution order.
"""

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import ArchitectureSpec, DEConfig, de_solve, run_architecture
from .exceptions import InvalidArgumentError
from .optimizer import SolverConfig, solve
from .scenario import Scenario, dbm_to_watts, draw_realization, place_users, watts_to_dbm
from .system import SystemModel

logger = logging.getLogger(__name__)

__all__ = [
    "Scenario",
    "place_users",
    "dbm_to_watts",
    "watts_to_dbm",
    "SweepRow",
    "SweepResult",
    "scenario_id",
    "convergence_trace",
    "region_sweep",
    "power_sweep",
    "single_run",
    "evals_to_fraction",
]

#: architecture whose geometry does not depend on the region size
REGION_INDEPENDENT = ("RO", "AS", "FPA")


def scenario_id(scenario):
    """Short stable hash of a scenario's parameters."""
    blob = json.dumps(scenario.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


@dataclass(frozen=True)
class SweepRow:
    """One result row; ``avg_se`` and ``per_user_se`` are in bits/s/Hz."""

    scenario_id: str
    architecture: str
    a_over_lambda: float
    p_dbm: float
    seed: int
    iteration: int
    avg_se: float
    per_user_se: tuple
    wall_ms: float = 0.0

    @property
    def key(self):
        return (self.architecture, self.a_over_lambda, self.p_dbm, self.seed, self.iteration)


@dataclass
class SweepResult:
    """Collection of rows keyed by (architecture, A, p, seed, iteration)."""

    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.sorted_rows())

    def keys(self):
        return {r.key for r in self.rows}

    def extend(self, rows):
        known = self.keys()
        for r in rows:
            if r.key not in known:
                self.rows.append(r)
                known.add(r.key)

    def sorted_rows(self):
        return sorted(self.rows, key=lambda r: r.key)

    def select(self, **criteria):
        return [r for r in self.sorted_rows() if all(getattr(r, k) == v for k, v in criteria.items())]

    def final_rows(self):
        """Last-iteration row of every (architecture, A, p, seed)."""
        last = {}
        for r in self.sorted_rows():
            last[r.key[:4]] = r
        return list(last.values())

    def mean_curve(self, architecture, by):
        """``(values, mean SE)`` of the final rows of ``architecture`` grouped by ``by``."""
        groups = {}
        for r in self.final_rows():
            if r.architecture == architecture:
                groups.setdefault(getattr(r, by), []).append(r.avg_se)
        xs = sorted(groups)
        return np.array(xs), np.array([np.mean(groups[x]) for x in xs])


def _report_row(scenario, arch, seed, iteration, report, wall_ms):
    return SweepRow(
        scenario_id(scenario), arch, float(scenario.a_over_lambda), float(scenario.p_dbm),
        int(seed), int(iteration), report.average_se, report.per_user_se, wall_ms,
    )


def _run_jobs(fn, tasks, jobs):
    """Run ``fn(task)`` for each task, in worker processes when ``jobs > 1``."""
    jobs = max(1, int(jobs or 1))
    if jobs == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def _architecture_task(task):
    scenario, config, seed, values, param, archs = task
    realization = draw_realization(scenario, seed)
    rows = []
    cached = {}
    for value in values:
        sc = scenario.replace(**{param: value})
        for arch in archs:
            if param == "a_over_lambda" and arch in REGION_INDEPENDENT and arch in cached:
                report, iters, wall = cached[arch]
            else:
                t0 = time.perf_counter()
                res = run_architecture(arch, sc, config, realization=realization, detailed=True)
                wall = (time.perf_counter() - t0) * 1e3
                report, iters = res.report, res.iterations
                cached[arch] = (report, iters, wall)
            rows.append(_report_row(sc, arch, seed, iters, report, wall))
    return rows


def _sweep(scenario, param, values, architectures, seeds, config, jobs, completed):
    values = [float(v) for v in values]
    if not values:
        raise InvalidArgumentError(f"{param} sweep needs at least one value")
    archs = [ArchitectureSpec.of(a).kind for a in architectures]
    config = SolverConfig() if config is None else config
    seeds = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    tasks = [(scenario, config, s, values, param, archs) for s in seeds]

    def expected(task):
        # iteration counts are unknown in advance: match on the other fields
        return [(a, v, s) for a in archs for v in values for s in [task[2]]]

    result = SweepResult()
    if completed:
        result.extend(completed.rows if isinstance(completed, SweepResult) else completed)
        have = {(r.architecture, getattr(r, param), r.seed) for r in result.rows}
        tasks = [t for t in tasks if not set(expected(t)) <= have]
    for rows in _run_jobs(_architecture_task, tasks, jobs):
        result.extend(rows)
    return result


def region_sweep(scenario, a_values, architectures=("ROMA", "MA", "RO", "AS", "FPA"), seeds=20,
                 config=None, jobs=1, completed=None):
    """Average SE versus the normalised region size ``A`` (half-side, wavelengths).

    RO, AS and FPA ignore ``A``; they are run once per seed and repeated
    across ``A`` so their rows are exactly constant.
    """
    return _sweep(scenario, "a_over_lambda", a_values, architectures, seeds, config, jobs, completed)


def power_sweep(scenario, p_values, architectures=("ROMA", "MA", "RO", "AS", "FPA"), seeds=20,
                config=None, jobs=1, completed=None):
    """Average SE versus the per-user transmit power ``p`` in dBm."""
    return _sweep(scenario, "p_dbm", p_values, architectures, seeds, config, jobs, completed)


def single_run(scenario, architecture="ROMA", seed=0, config=None):
    """One architecture on one seed; returns a :class:`SweepResult` with one row."""
    t0 = time.perf_counter()
    res = run_architecture(architecture, scenario, config, seed=seed, detailed=True)
    wall = (time.perf_counter() - t0) * 1e3
    return SweepResult([_report_row(scenario, res.spec.kind, seed, res.iterations, res.report, wall)])


@dataclass
class TraceRun:
    """Full-resolution traces of AO and DE on one (power, seed)."""

    p_dbm: float
    seed: int
    ao_trace: list
    ao_evals: list
    ao_report: object
    de_trace: list
    de_evals: list
    de_report: object


def _trace_task(task):
    scenario, config, de_config, seed = task
    realization = draw_realization(scenario, seed)
    t0 = time.perf_counter()
    state, ao_report = solve(scenario, config, realization=realization)
    ao_wall = (time.perf_counter() - t0) * 1e3
    budget = state.eval_trace[-1]
    de_cfg = DEConfig.for_budget(
        budget,
        population=de_config.population,
        mutation_factor=de_config.mutation_factor,
        crossover_rate=de_config.crossover_rate,
        penalty=de_config.penalty,
        seed=de_config.seed,
    )
    t0 = time.perf_counter()
    _, de_report, de_res = de_solve(scenario, de_cfg, realization=realization)
    de_wall = (time.perf_counter() - t0) * 1e3
    run = TraceRun(
        scenario.p_dbm, seed, list(state.se_trace), list(state.eval_trace), ao_report,
        list(de_res.trace), list(de_res.eval_trace), de_report,
    )
    return run, ao_wall, de_wall


def _resample(trace, evals, checkpoints):
    """Best value reached within each evaluation checkpoint."""
    evals = np.asarray(evals)
    out = []
    for c in checkpoints:
        idx = np.searchsorted(evals, c, side="right") - 1
        out.append(trace[max(idx, 0)])
    return out


def _trace_rows(scenario, run, ao_wall, de_wall):
    """AO rows per outer iteration; DE rows at the same evaluation counts.

    Values are optimisation-batch SE (the DE value is its best penalised
    fitness); per-user values are left empty. The wall time of the whole run
    is attached to the last row.
    """
    sid = scenario_id(scenario)
    rows = []
    n = len(run.ao_trace)
    de_values = _resample(run.de_trace, run.de_evals, run.ao_evals)
    for name, values, wall in (("AO", run.ao_trace, ao_wall), ("DE", de_values, de_wall)):
        for it, v in enumerate(values):
            rows.append(
                SweepRow(
                    sid, name, float(scenario.a_over_lambda), float(scenario.p_dbm), run.seed, it,
                    float(v), (), wall if it == n - 1 else 0.0,
                )
            )
    return rows


def convergence_trace(scenario, optimizers=("AO", "DE"), powers=(20.0, 30.0), seeds=20, config=None,
                      de_config=None, jobs=1, completed=None, return_runs=False):
    """AO and DE convergence traces with matched evaluation budgets.

    For every power and seed, AO runs first; DE then receives AO's total
    objective-evaluation count as its budget. AO contributes one row per
    outer iteration with the optimisation-batch SE; DE contributes a row at
    each of AO's evaluation checkpoints with the best fitness reached within
    that many evaluations.

    With ``return_runs=True`` the full-resolution traces and the held-out
    reports are returned as a second value.
    """
    names = tuple(o.upper() for o in optimizers)
    if set(names) != {"AO", "DE"}:
        raise InvalidArgumentError("the convergence trace compares exactly AO and DE")
    config = SolverConfig() if config is None else config
    de_config = DEConfig() if de_config is None else de_config
    seeds = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
    tasks = [
        (scenario.replace(p_dbm=float(p)), config, de_config, s) for p in powers for s in seeds
    ]
    result = SweepResult()
    if completed:
        result.extend(completed.rows if isinstance(completed, SweepResult) else completed)
        have = {(r.architecture, r.p_dbm, r.seed) for r in result.rows}
        tasks = [t for t in tasks if not {("AO", t[0].p_dbm, t[3]), ("DE", t[0].p_dbm, t[3])} <= have]
    runs = []
    for run, ao_wall, de_wall in _run_jobs(_trace_task, tasks, jobs):
        sc = scenario.replace(p_dbm=run.p_dbm)
        result.extend(_trace_rows(sc, run, ao_wall, de_wall))
        runs.append(run)
    return (result, runs) if return_runs else result


def evals_to_fraction(trace, evals, fraction=0.95, baseline=None):
    """Evaluations needed to reach ``fraction`` of the trace's own improvement.

    The target is ``baseline + fraction * (trace[-1] - baseline)`` where
    ``baseline`` defaults to ``trace[0]``.
    """
    trace = np.asarray(trace, dtype=float)
    start = trace[0] if baseline is None else baseline
    target = start + fraction * (trace[-1] - start)
    hit = np.nonzero(trace >= target - 1e-12)[0][0]
    return int(evals[hit])


def expected_se(scenario, realization, x, held_out=True):
    """Per-user expected SE of one configuration (convenience wrapper)."""
    return SystemModel(scenario, realization, held_out=held_out).per_user_se(np.atleast_2d(x))[0]
