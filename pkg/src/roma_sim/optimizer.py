"""Alternating optimisation of panel angles and element positions.

Each outer iteration performs, in order:

1. a penalised gradient step on the BS offsets
   (``-f + rho * ||r - z||^2``), then refreshes the BS split variables ``z``
   with :func:`~roma_sim.geometry.project_min_distance`;
2. the same for each user panel;
3. one projected gradient step on the rotation angles ``alpha`` of all
   panels, then one on ``beta``;
4. ``rho <- min(rho * growth, rho_max)``.

Precoders are the closed-form ZF solution of the current geometry, so they
are refreshed inside every objective evaluation. Gradients are central
finite differences and each step is accepted by Armijo backtracking.
Position trials are passed through the minimum-distance projection before
they are scored, and any step that would lower the average SE is rejected,
so the recorded SE trace never decreases and every iterate is feasible.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import GradientFailureError, InvalidArgumentError
from .geometry import min_pairwise_distance, project_min_distance
from .metrics import SEReport
from .scenario import draw_realization
from .system import Layout, SystemModel

logger = logging.getLogger(__name__)

__all__ = [
    "SolverConfig",
    "OptimizerState",
    "objective",
    "numerical_gradient",
    "initial_state",
    "update_positions_bs",
    "update_positions_user",
    "update_aux",
    "update_angles",
    "solve",
    "evaluate",
    "check_feasible",
    "run_ao",
    "AOProblem",
    "build_problem",
]


@dataclass(frozen=True)
class SolverConfig:
    """Tuning knobs of the AO solver.

    Position steps are in wavelengths, angle steps in radians. The Armijo
    initial step is the largest coordinate move of a trial point.
    """

    convergence_epsilon: float = 1e-5
    rho_init: float = 0.1
    rho_growth: float = 2.0
    rho_max: float = 1e4
    fd_step_position: float = 1e-4
    fd_step_angle: float = 1e-4
    armijo_initial_step: float = 0.1
    armijo_shrink: float = 0.5
    armijo_max_backtracks: int = 20
    armijo_c: float = 1e-4
    max_outer_iterations: int = 200
    optimize_positions: bool = True
    optimize_angles: bool = True

    def __post_init__(self):
        for name in (
            "convergence_epsilon", "rho_init", "rho_max", "fd_step_position", "fd_step_angle",
            "armijo_initial_step", "armijo_c",
        ):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if not self.rho_growth > 1:
            raise InvalidArgumentError("rho_growth must exceed 1")
        if not 0 < self.armijo_shrink < 1:
            raise InvalidArgumentError("armijo_shrink must lie in (0, 1)")
        if self.armijo_max_backtracks < 0 or self.max_outer_iterations < 1:
            raise InvalidArgumentError("iteration limits must be positive")


@dataclass
class OptimizerState:
    """Decision variables, split variables and history of one AO run.

    ``x`` is the flat configuration vector of :class:`~roma_sim.system.Layout`;
    ``aux`` holds the split variables for every position coordinate of
    ``x`` (same ordering, wavelengths).
    """

    layout: Layout
    x: np.ndarray
    aux: np.ndarray
    rho: float
    se_trace: list = field(default_factory=list)
    rho_trace: list = field(default_factory=list)
    eval_trace: list = field(default_factory=list)
    iteration: int = 0
    converged: bool = False
    closure_snapped: bool = False

    def copy(self):
        return replace(
            self, x=self.x.copy(), aux=self.aux.copy(), se_trace=list(self.se_trace),
            rho_trace=list(self.rho_trace), eval_trace=list(self.eval_trace),
        )

    @property
    def alphas(self):
        return self.x[self.layout.alpha]

    @property
    def betas(self):
        return self.x[self.layout.beta]

    @property
    def bs_offsets(self):
        return self.x[self.layout.bs].reshape(-1, 2)

    @property
    def user_offsets(self):
        return self.x[self.layout.bs.stop:].reshape(self.layout.users, -1, 2)

    def _aux_block(self, block):
        start = self.layout.bs.start
        return self.aux[block.start - start:block.stop - start]

    @property
    def aux_bs(self):
        return self._aux_block(self.layout.bs).reshape(-1, 2)

    @property
    def aux_users(self):
        return self.aux.reshape(-1, 2)[self.layout.M:].reshape(self.layout.users, -1, 2)

    def penalty_gap(self):
        """Largest distance between an element and its split variable."""
        pos = self.x[self.layout.bs.start:].reshape(-1, 2)
        return float(np.max(np.hypot(*(pos - self.aux.reshape(-1, 2)).T)))


def objective(state, model):
    """Average SE of the current configuration (ZF precoders recomputed)."""
    return float(model(state.x[None])[0])


def numerical_gradient(fn, x, steps, indices=None, lower=None, upper=None, batched=False):
    """Central finite-difference gradient.

    Parameters
    ----------
    fn : callable
        Scalar function of a vector, or with ``batched=True`` a function
        mapping a ``(K, dim)`` stack to ``K`` values.
    x : array_like
    steps : float or array_like
        Per-coordinate steps.
    indices : array_like of int, optional
        Coordinates to differentiate (others get zero).
    lower, upper : array_like, optional
        Box bounds; perturbations are clipped into the box and the divided
        difference uses the actual spacing.
    """
    x = np.asarray(x, dtype=float)
    steps = np.broadcast_to(np.asarray(steps, dtype=float), x.shape)
    idx = np.arange(x.size) if indices is None else np.asarray(indices)
    plus = np.repeat(x[None], len(idx), axis=0)
    minus = plus.copy()
    rows = np.arange(len(idx))
    plus[rows, idx] += steps[idx]
    minus[rows, idx] -= steps[idx]
    if lower is not None or upper is not None:
        lo = -np.inf if lower is None else lower
        hi = np.inf if upper is None else upper
        plus = np.clip(plus, lo, hi)
        minus = np.clip(minus, lo, hi)
    if batched:
        values = np.asarray(fn(np.vstack([plus, minus])), dtype=float)
    else:
        values = np.array([fn(p) for p in np.vstack([plus, minus])], dtype=float)
    if not np.all(np.isfinite(values)):
        raise GradientFailureError("objective is not finite near the evaluation point")
    f_plus, f_minus = values[: len(idx)], values[len(idx):]
    spacing = plus[rows, idx] - minus[rows, idx]
    grad = np.zeros_like(x)
    grad[idx] = np.where(spacing > 0, (f_plus - f_minus) / np.where(spacing > 0, spacing, 1.0), 0.0)
    return grad


class AOProblem:
    """Objective, bounds and finite-difference steps shared by the update functions.

    ``f`` evaluates the optimisation-batch average SE of a configuration
    vector; ``lower``/``upper`` are the angle and region boxes.
    """

    def __init__(self, scenario, model, config):
        self.scenario = scenario
        self.model = model
        self.config = config
        self.layout = model.layout
        layout = self.layout
        region = scenario.region
        self.half_width = region.half_width()
        self.min_distance = region.min_distance()
        self.lower = np.full(layout.dim, -self.half_width)
        self.upper = np.full(layout.dim, self.half_width)
        angles = layout.angle_indices()
        self.lower[angles] = 0.0
        self.upper[angles] = np.pi
        self.steps = np.full(layout.dim, config.fd_step_position)
        self.steps[angles] = config.fd_step_angle
        self.pos_start = layout.bs.start

    def f(self, x):
        return float(self.model(x[None])[0])

    def grad_f(self, x, indices):
        return numerical_gradient(
            self.model, x, self.steps, indices, self.lower, self.upper, batched=True
        )

    def blocks(self):
        layout = self.layout
        yield "bs", np.arange(layout.bs.start, layout.bs.stop)
        for u, sl in enumerate(layout.user):
            yield f"user{u}", np.arange(sl.start, sl.stop)


def _armijo(problem, x, f0, phi, phi0, grad, indices, label, project=False):
    """Projected Armijo step minimising ``phi`` along ``-grad`` over ``indices``.

    A trial is accepted if it decreases ``phi`` sufficiently and does not lower
    the average SE. Returns ``(x_new, f_new)``; on failure the input is kept.
    """
    cfg = problem.config
    g = grad[indices]
    gmax = np.max(np.abs(g)) if g.size else 0.0
    if gmax == 0.0:
        return x, f0
    t = cfg.armijo_initial_step / gmax
    lo, hi = problem.lower[indices], problem.upper[indices]
    for _ in range(cfg.armijo_max_backtracks + 1):
        trial = x.copy()
        trial[indices] = np.clip(x[indices] - t * g, lo, hi)
        if project:
            # keep every trial layout feasible; the split variables then
            # follow the iterate and the penalty gap closes on its own
            trial[indices] = project_min_distance(
                trial[indices].reshape(-1, 2), problem.min_distance, problem.half_width
            ).ravel()
        moved = trial[indices] - x[indices]
        if not np.any(moved):
            break
        f_t = problem.f(trial)
        phi_t = phi(trial, f_t)
        if phi_t <= phi0 + cfg.armijo_c * float(g @ moved) and f_t >= f0:
            return trial, f_t
        t *= cfg.armijo_shrink
    logger.debug("line search failed for %s; keeping previous iterate", label)
    return x, f0


def _position_step(problem, state, indices, f0, label):
    pos = indices - problem.pos_start
    rho = state.rho

    def phi(x, f_x):
        return -f_x + rho * float(np.sum((x[indices] - state.aux[pos]) ** 2))

    x = state.x
    grad = -problem.grad_f(x, indices)
    grad[indices] += 2 * rho * (x[indices] - state.aux[pos])
    x_new, f_new = _armijo(problem, x, f0, phi, phi(x, f0), grad, indices, label, project=True)
    state.x = x_new
    return f_new


def update_aux(state, problem, indices):
    """Refresh the split variables of one panel by minimum-distance projection.

    The new split variables are kept only if they do not increase the
    penalty, so the penalised objective never rises.
    """
    pos = indices - problem.pos_start
    targets = state.x[indices].reshape(-1, 2)
    z_new = project_min_distance(targets, problem.min_distance, problem.half_width).ravel()
    old_gap = float(np.sum((state.x[indices] - state.aux[pos]) ** 2))
    new_gap = float(np.sum((state.x[indices] - z_new) ** 2))
    if new_gap <= old_gap + 1e-15:
        state.aux[pos] = z_new
    return state


def update_positions_bs(state, problem, f0):
    """Penalised step on the BS offsets; returns the new average SE."""
    indices = np.arange(problem.layout.bs.start, problem.layout.bs.stop)
    return _position_step(problem, state, indices, f0, "bs")


def update_positions_user(state, u, problem, f0):
    """Penalised step on user ``u``'s offsets; returns the new average SE."""
    sl = problem.layout.user[u]
    return _position_step(problem, state, np.arange(sl.start, sl.stop), f0, f"user{u}")


def update_angles(state, problem, f0):
    """One projected ascent step on ``alpha``, then one on ``beta``."""
    layout = problem.layout
    for name, sl in (("alpha", layout.alpha), ("beta", layout.beta)):
        indices = np.arange(sl.start, sl.stop)
        grad = -problem.grad_f(state.x, indices)
        state.x, f0 = _armijo(problem, state.x, f0, lambda x, f_x: -f_x, -f0, grad, indices, name)
    return f0


def initial_state(scenario, config, x0=None):
    """Uniform half-wavelength grids with all panels at ``pi/2``."""
    layout = Layout.from_scenario(scenario)
    x = layout.initial() if x0 is None else np.asarray(x0, dtype=float).copy()
    aux = x[layout.bs.start:].copy()
    return OptimizerState(layout=layout, x=x, aux=aux, rho=config.rho_init)


def check_feasible(state, scenario, atol=1e-9):
    """Return a list of violated constraints (empty when feasible)."""
    problems = []
    region = scenario.region
    h = region.half_width()
    D = region.min_distance()
    if np.any(state.alphas < -atol) or np.any(state.alphas > np.pi + atol):
        problems.append("alpha outside [0, pi]")
    if np.any(state.betas < -atol) or np.any(state.betas > np.pi + atol):
        problems.append("beta outside [0, pi]")
    panels = [state.bs_offsets] + list(state.user_offsets)
    for k, off in enumerate(panels):
        if np.any(np.abs(off) > h + atol):
            problems.append(f"panel {k} leaves its region")
        if min_pairwise_distance(off) < D - atol:
            problems.append(f"panel {k} violates the minimum distance")
    return problems


def _closure(state, problem):
    """Move elements onto their split variables if the gap is not closed."""
    if state.penalty_gap() <= 1e-4:
        return
    state.x[problem.pos_start:] = state.aux
    state.closure_snapped = True
    logger.info("penalty gap %.3g wavelengths at exit; snapped to split variables", state.penalty_gap())


def run_ao(problem, state, callback=None):
    """Algorithm loop on a prepared problem; mutates and returns ``state``."""
    cfg = problem.config
    model = problem.model
    layout = problem.layout
    for _, indices in problem.blocks():
        update_aux(state, problem, indices)
        # start from a feasible geometry
        state.x[indices] = state.aux[indices - problem.pos_start]
    se_e = problem.f(state.x)
    state.se_trace.append(se_e)
    state.rho_trace.append(state.rho)
    state.eval_trace.append(model.n_evals)
    se_0 = -np.inf  # repeat-until: always run one outer iteration
    while se_e - se_0 > cfg.convergence_epsilon and state.iteration < cfg.max_outer_iterations:
        f_cur = se_e
        if cfg.optimize_positions:
            f_cur = update_positions_bs(state, problem, f_cur)
            update_aux(state, problem, np.arange(layout.bs.start, layout.bs.stop))
            for u in range(layout.users):
                f_cur = update_positions_user(state, u, problem, f_cur)
                sl = layout.user[u]
                update_aux(state, problem, np.arange(sl.start, sl.stop))
        if cfg.optimize_angles:
            f_cur = update_angles(state, problem, f_cur)
        se_0, se_e = se_e, f_cur
        state.iteration += 1
        state.se_trace.append(se_e)
        state.rho_trace.append(state.rho)
        state.eval_trace.append(model.n_evals)
        if callback is not None:
            callback(state)
        state.rho = min(state.rho * cfg.rho_growth, cfg.rho_max)
    state.converged = se_e - se_0 <= cfg.convergence_epsilon
    _closure(state, problem)
    return state


def build_problem(scenario, config=None, realization=None, seed=0):
    """:class:`AOProblem` on the optimisation batch of one realization."""
    config = SolverConfig() if config is None else config
    if realization is None:
        realization = draw_realization(scenario, seed)
    return AOProblem(scenario, SystemModel(scenario, realization), config)


def evaluate(scenario, realization, x, held_out=True):
    """:class:`SEReport` of configuration ``x`` on a gain batch."""
    model = SystemModel(scenario, realization, held_out=held_out)
    per_user, std_error = model.report_values(x)
    return SEReport(tuple(per_user), std_error=std_error)


def solve(scenario, config=None, seed=0, realization=None, x0=None, callback=None):
    """Run the AO algorithm for one seed.

    Returns
    -------
    state : OptimizerState
    report : SEReport
        SE of the final geometry on the held-out gain batch.
    """
    config = SolverConfig() if config is None else config
    scenario.region.check_grid_fits(*scenario.bs_grid)
    scenario.region.check_grid_fits(*scenario.user_grid)
    if realization is None:
        realization = draw_realization(scenario, seed)
    model = SystemModel(scenario, realization)
    problem = AOProblem(scenario, model, config)
    state = initial_state(scenario, config, x0)
    run_ao(problem, state, callback)
    return state, evaluate(scenario, realization, state.x)
