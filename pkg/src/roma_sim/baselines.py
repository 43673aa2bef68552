"""Comparison architectures (FPA, MA, RO, AS) and a differential-evolution optimiser.

Every architecture is scored through the same :class:`~roma_sim.system.SystemModel`
path as ROMA, so the only difference between them is which part of the
configuration vector is allowed to move.
"""

import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import differential_evolution

from .exceptions import InvalidArgumentError
from .geometry import element_grid, project_min_distance
from .optimizer import SolverConfig, evaluate, solve
from .scenario import STREAM_DE, draw_realization, seed_sequence
from .system import Layout, SystemModel
from .validation import check_count

logger = logging.getLogger(__name__)

__all__ = [
    "KINDS",
    "ArchitectureSpec",
    "ArchitectureResult",
    "DEConfig",
    "DEResult",
    "run_architecture",
    "run_fpa",
    "selection_masks",
    "antenna_selection",
    "de_solve",
    "de_minimize_batch",
]

KINDS = ("ROMA", "MA", "RO", "AS", "FPA")


@dataclass(frozen=True)
class ArchitectureSpec:
    """Which parts of the geometry an architecture may change.

    Use :meth:`of` to build the standard specs.
    """

    kind: str
    frozen_angles: bool = False
    frozen_positions: bool = False
    as_pool: tuple = None
    as_active: int = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown architecture {self.kind!r}; expected one of {KINDS}")
        if self.kind == "MA" and not self.frozen_angles:
            raise InvalidArgumentError("MA keeps the panel angles fixed")
        if self.kind == "RO" and not self.frozen_positions:
            raise InvalidArgumentError("RO keeps the element grid fixed")
        if self.kind in ("AS", "FPA") and not (self.frozen_angles and self.frozen_positions):
            raise InvalidArgumentError(f"{self.kind} freezes both angles and positions")
        if self.kind == "AS":
            pool = tuple(int(v) for v in self.as_pool)
            object.__setattr__(self, "as_pool", pool)
            active = check_count(self.as_active, "as_active")
            if active > pool[0] * pool[1]:
                raise InvalidArgumentError("AS needs at least as many pool antennas as active ones")

    @classmethod
    def of(cls, kind, as_pool=(4, 3), as_active=9):
        kind = kind.upper()
        if kind == "ROMA":
            return cls("ROMA")
        if kind == "MA":
            return cls("MA", frozen_angles=True)
        if kind == "RO":
            return cls("RO", frozen_positions=True)
        if kind == "AS":
            return cls("AS", True, True, as_pool, as_active)
        return cls(kind, True, True)

    @property
    def pool_size(self):
        return self.as_pool[0] * self.as_pool[1]


@dataclass
class ArchitectureResult:
    """Outcome of one architecture run on one seed."""

    spec: ArchitectureSpec
    report: object
    x: np.ndarray
    se_trace: list = field(default_factory=list)
    eval_trace: list = field(default_factory=list)
    iterations: int = 0
    masks: tuple = None


def run_fpa(scenario, seed=0, realization=None):
    """Held-out report of the fixed half-wavelength grids at broadside."""
    if realization is None:
        realization = draw_realization(scenario, seed)
    return evaluate(scenario, realization, Layout.from_scenario(scenario).initial())


def run_architecture(spec, scenario, config=None, seed=0, realization=None, detailed=False):
    """Optimise (where allowed) and report one architecture on one seed.

    Parameters
    ----------
    spec : ArchitectureSpec or str
    scenario : Scenario
    config : SolverConfig, optional
        AO settings for ROMA, MA and RO; the freeze flags are set from ``spec``.
    seed : int
    realization : Realization, optional
        Pass a shared realization to pair architectures on identical draws.
    detailed : bool
        Return an :class:`ArchitectureResult` instead of the bare report.
    """
    if isinstance(spec, str):
        spec = ArchitectureSpec.of(spec)
    if realization is None:
        realization = draw_realization(scenario, seed)
    config = SolverConfig() if config is None else config
    if spec.kind == "FPA":
        x = Layout.from_scenario(scenario).initial()
        report = evaluate(scenario, realization, x)
        result = ArchitectureResult(spec, report, x)
    elif spec.kind == "AS":
        masks, x, trace = antenna_selection(
            scenario, pool_grid=spec.as_pool, active=spec.as_active, realization=realization
        )
        report = evaluate(scenario, realization, x)
        result = ArchitectureResult(spec, report, x, se_trace=trace, iterations=len(trace) - 1, masks=masks)
    else:
        cfg = replace(
            config,
            optimize_angles=not spec.frozen_angles,
            optimize_positions=not spec.frozen_positions,
        )
        state, report = solve(scenario, cfg, realization=realization)
        result = ArchitectureResult(
            spec, report, state.x, list(state.se_trace), list(state.eval_trace), state.iteration
        )
    return result if detailed else result.report


def selection_masks(pool, active):
    """All ``comb(pool, active)`` selections, lexicographic, as index tuples."""
    return list(itertools.combinations(range(pool), active))


def antenna_selection(scenario, pool_grid=(4, 3), active=9, seed=0, realization=None, max_cycles=10,
                      starts=1):
    """Alternating per-panel exhaustive antenna selection.

    Each panel picks ``active`` antennas from a fixed ``pool_grid`` array at
    half-wavelength spacing (broadside, no rotation). Panels are visited BS
    first, then every user; for each one all masks are scored with the
    others held fixed and the best is kept (ties go to the lexicographically
    smallest mask). Cycles stop when no mask changes.

    ``starts`` BS masks (the first ones in lexicographic order, or all of
    them with ``starts="all"``) are used as starting points. A run begins
    with the BS held at its start mask while the users respond, and the
    best run is returned (ties go to the earliest start). A single start
    finds a mask set where no panel can improve alone; trying every BS start
    also finds the joint optimum of two-panel instances.

    Returns
    -------
    masks : tuple of tuple of int
        Selected pool indices for the BS and each user.
    x : ndarray
        Configuration vector of the selection.
    trace : list of float
        Optimisation-batch average SE after every cycle of the best run
        (index 0 is its start).
    """
    if scenario.M != active or scenario.N != active:
        raise InvalidArgumentError("the scenario's panel sizes must equal the number of active antennas")
    pool_offsets = element_grid(*pool_grid, 0.5)
    candidates = selection_masks(len(pool_offsets), active)
    if realization is None:
        realization = draw_realization(scenario, seed)
    model = SystemModel(scenario, realization)
    layout = model.layout
    blocks = [layout.bs] + list(layout.user)
    cand_offsets = np.stack([pool_offsets[list(c)].ravel() for c in candidates])
    n_starts = len(candidates) if starts == "all" else min(check_count(starts, "starts"), len(candidates))
    best_run = None
    for start in range(n_starts):
        masks = [start] + [0] * layout.users
        x = layout.initial()
        for k, block in enumerate(blocks):
            x[block] = cand_offsets[masks[k]]
        trace = [float(model(x[None])[0])]
        for cycle in range(max_cycles):
            changed = False
            for k, block in enumerate(blocks):
                if cycle == 0 and k == 0:
                    continue  # hold the start mask while the users respond
                X = np.repeat(x[None], len(candidates), axis=0)
                X[:, block] = cand_offsets
                best = int(np.argmax(model(X)))
                if best != masks[k]:
                    masks[k] = best
                    x[block] = cand_offsets[best]
                    changed = True
            trace.append(float(model(x[None])[0]))
            if not changed and cycle > 0:
                break
        if best_run is None or trace[-1] > best_run[2][-1]:
            best_run = (list(masks), x.copy(), trace)
    masks, x, trace = best_run
    return tuple(candidates[m] for m in masks), x, trace


@dataclass(frozen=True)
class DEConfig:
    """DE/rand/1/bin settings.

    ``penalty`` weights the squared distance to the minimum-distance
    projection (the same form as the AO penalty). ``seed`` overrides the
    per-realization stream when given.
    """

    population: int = 20
    mutation_factor: float = 0.5
    crossover_rate: float = 0.9
    generations: int = 100
    penalty: float = 100.0
    seed: int = None

    def __post_init__(self):
        check_count(self.population, "population", minimum=4)
        check_count(self.generations, "generations", minimum=0)
        if not 0 < self.mutation_factor <= 2:
            raise InvalidArgumentError("mutation_factor must lie in (0, 2]")
        if not 0 <= self.crossover_rate <= 1:
            raise InvalidArgumentError("crossover_rate must lie in [0, 1]")
        if not self.penalty >= 0:
            raise InvalidArgumentError("penalty must be non-negative")

    @classmethod
    def for_budget(cls, evaluations, **kwargs):
        """Config whose total evaluation count is at most ``evaluations``."""
        pop = kwargs.get("population", cls.population)
        return cls(generations=max(0, int(evaluations) // pop - 1), **kwargs)


@dataclass
class DEResult:
    x: np.ndarray
    fitness: float
    trace: list
    eval_trace: list


def de_minimize_batch(fn, lower, upper, config, rng, init=None):
    """Minimise a batched function with DE/rand/1/bin.

    ``fn`` maps a ``(K, dim)`` stack to ``K`` values. ``init`` rows replace
    the first members of the random initial population. Returns a
    :class:`DEResult` whose ``trace`` is the best value after the initial
    population and after every generation.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    rng = np.random.default_rng(rng)
    pop = rng.uniform(lower, upper, (config.population, lower.size))
    if init is not None:
        init = np.atleast_2d(np.asarray(init, dtype=float))
        pop[: len(init)] = init
    counter = {"n": 0}
    trace, eval_trace = [], []

    def batched(columns):
        X = np.atleast_2d(columns.T)
        values = np.asarray(fn(X), dtype=float)
        if counter["n"] == 0:
            # first call scores the initial population
            trace.append(float(values.min()))
            eval_trace.append(len(X))
        counter["n"] += len(X)
        return values

    def record(intermediate_result):
        trace.append(float(intermediate_result.fun))
        eval_trace.append(counter["n"])

    if config.generations == 0:
        values = batched(pop.T)
        best = int(np.argmin(values))
        return DEResult(pop[best].copy(), float(values[best]), trace, eval_trace)
    res = differential_evolution(
        batched,
        bounds=list(zip(lower, upper)),
        strategy="rand1bin",
        maxiter=config.generations,
        init=pop,
        mutation=config.mutation_factor,
        recombination=config.crossover_rate,
        rng=rng,
        polish=False,
        tol=0.0,
        atol=0.0,
        updating="deferred",
        vectorized=True,
        callback=record,
    )
    return DEResult(np.asarray(res.x, dtype=float), float(res.fun), trace, eval_trace)


def _projection_gap(x, layout, min_distance, half_width):
    gap = 0.0
    for block in [layout.bs] + list(layout.user):
        pts = x[block].reshape(-1, 2)
        proj = project_min_distance(pts, min_distance, half_width)
        gap += float(np.sum((pts - proj) ** 2))
    return gap


def _repair(x, layout, min_distance, half_width):
    x = x.copy()
    for block in [layout.bs] + list(layout.user):
        x[block] = project_min_distance(x[block].reshape(-1, 2), min_distance, half_width).ravel()
    return x


def de_solve(scenario, de_config=None, seed=0, realization=None):
    """Optimise the full ROMA configuration with differential evolution.

    The fitness is the optimisation-batch average SE minus ``penalty`` times
    the squared distance of every panel to its minimum-distance projection.
    The FPA configuration is a member of the initial population. The best
    member is repaired by projection and scored on the held-out batch.

    Returns
    -------
    x : ndarray
    report : SEReport
    result : DEResult
        ``trace`` holds the best penalised fitness (an SE, higher is
        better) per generation and ``eval_trace`` the evaluation counts.
    """
    de_config = DEConfig() if de_config is None else de_config
    scenario.region.check_grid_fits(*scenario.bs_grid)
    scenario.region.check_grid_fits(*scenario.user_grid)
    if realization is None:
        realization = draw_realization(scenario, seed)
    model = SystemModel(scenario, realization)
    layout = model.layout
    region = scenario.region
    h, D = region.half_width(), region.min_distance()
    lower = np.full(layout.dim, -h)
    upper = np.full(layout.dim, h)
    angles = layout.angle_indices()
    lower[angles], upper[angles] = 0.0, np.pi

    def neg_fitness(X):
        gaps = np.array([_projection_gap(x, layout, D, h) for x in X])
        return -(model(X) - de_config.penalty * gaps)

    if de_config.seed is None:
        rng = np.random.default_rng(seed_sequence(scenario.master_seed, realization.seed, STREAM_DE))
    else:
        rng = np.random.default_rng(de_config.seed)
    res = de_minimize_batch(neg_fitness, lower, upper, de_config, rng, init=layout.initial())
    res.trace = [-v for v in res.trace]
    res.fitness = -res.fitness
    x = _repair(res.x, layout, D, h)
    return x, evaluate(scenario, realization, x), res
