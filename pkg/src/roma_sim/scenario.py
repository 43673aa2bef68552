"""Scenario description, per-seed channel realizations and the seeding scheme.

Seeding
-------
Every random draw comes from ``SeedSequence(master_seed, spawn_key=key)``
with a documented integer key, so any single draw can be regenerated
without replaying the others:

* ``(seed, 0)``            user placement
* ``(seed, 1, u)``         path angles (and base gains) of user ``u``
* ``(seed, 2, t, u)``      gains of user ``u`` in optimisation trial ``t``
* ``(seed, 3, t, u)``      gains of user ``u`` in held-out trial ``t``
* ``(seed, 4)``            differential-evolution population and operators

Path angles are fixed per seed (they follow the user's position in the
environment); the expectation over channel realisations averages the
complex path gains.
"""

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .channel import PathSet, sample_gains, sample_paths
from .exceptions import InvalidArgumentError
from .geometry import RegionSpec
from .validation import check_count, check_positive

SPEED_OF_LIGHT = 299_792_458.0

STREAM_PLACEMENT = 0
STREAM_PATHS = 1
STREAM_OPT_GAINS = 2
STREAM_EVAL_GAINS = 3
STREAM_DE = 4


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


def seed_sequence(master_seed, *key):
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))


@dataclass(frozen=True)
class Scenario:
    """Full description of one simulated system.

    Powers and noise are given in dBm; ``p_dbm`` is the transmit power
    allotted to each user, and the BS budget is ``users * p``. The movable
    region of every panel is the square ``[-A, A]^2`` in wavelengths with
    ``A = a_over_lambda`` (half-side), so every region contains the
    half-wavelength starting grid for ``A >= 0.5``. The noise power is the
    effective noise after path-loss normalisation (gains have unit variance).
    """

    users: int = 4
    bs_grid: tuple = (3, 3)
    user_grid: tuple = (3, 3)
    carrier_hz: float = 2.1e9
    sigma2_dbm: float = 20.0
    p_dbm: float = 30.0
    a_over_lambda: float = 2.5
    d_over_lambda: float = 0.25
    paths: int = 15
    channel_model: str = "stochastic"
    isotropic: bool = False
    user_radius_m: tuple = (20.0, 100.0)
    master_seed: int = 0
    opt_draws: int = 8
    eval_draws: int = 100

    def __post_init__(self):
        check_count(self.users, "users")
        for name in ("bs_grid", "user_grid"):
            grid = tuple(int(v) for v in getattr(self, name))
            if len(grid) != 2:
                raise InvalidArgumentError(f"{name} must be (horizontal, vertical)")
            for v in grid:
                check_count(v, name)
            object.__setattr__(self, name, grid)
        check_positive(self.carrier_hz, "carrier_hz")
        check_positive(self.a_over_lambda, "a_over_lambda")
        check_positive(self.d_over_lambda, "d_over_lambda", allow_zero=True)
        check_count(self.paths, "paths")
        check_count(self.opt_draws, "opt_draws")
        check_count(self.eval_draws, "eval_draws")
        if self.channel_model not in ("stochastic", "los-geometric"):
            raise InvalidArgumentError(f"unknown channel model {self.channel_model!r}")
        if self.channel_model == "los-geometric" and self.paths != 1:
            raise InvalidArgumentError("the LoS model has exactly one path")
        r_min, r_max = (float(v) for v in self.user_radius_m)
        if not 0 < r_min < r_max:
            raise InvalidArgumentError("user_radius_m must satisfy 0 < r_min < r_max")
        object.__setattr__(self, "user_radius_m", (r_min, r_max))
        if not np.isfinite(self.sigma2_dbm) or not np.isfinite(self.p_dbm):
            raise InvalidArgumentError("powers must be finite")

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def sigma2(self):
        return float(dbm_to_watts(self.sigma2_dbm))

    @property
    def power(self):
        return float(dbm_to_watts(self.p_dbm))

    @property
    def powers(self):
        return np.full(self.users, self.power)

    @property
    def max_power(self):
        return self.users * self.power

    @property
    def M(self):
        return self.bs_grid[0] * self.bs_grid[1]

    @property
    def N(self):
        return self.user_grid[0] * self.user_grid[1]

    @property
    def region(self):
        return RegionSpec(2.0 * self.a_over_lambda, self.d_over_lambda)

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        d = asdict(self)
        d["bs_grid"] = list(self.bs_grid)
        d["user_grid"] = list(self.user_grid)
        d["user_radius_m"] = list(self.user_radius_m)
        return d


def place_users(scenario, seed):
    """User panel centres around the BS at the origin, shape ``(U, 3)``.

    Azimuth is uniform on [-pi, pi], elevation uniform on [-pi/6, pi/6] and
    range uniform on the scenario's radius bounds.
    """
    rng = np.random.default_rng(seed_sequence(scenario.master_seed, seed, STREAM_PLACEMENT))
    r_min, r_max = scenario.user_radius_m
    U = scenario.users
    azimuth = rng.uniform(-np.pi, np.pi, U)
    elevation = rng.uniform(-np.pi / 6, np.pi / 6, U)
    radius = rng.uniform(r_min, r_max, U)
    return radius[:, None] * np.column_stack(
        [np.cos(elevation) * np.cos(azimuth), np.cos(elevation) * np.sin(azimuth), np.sin(elevation)]
    )


def _gain_batch(scenario, seed, stream, draws):
    U, L = scenario.users, scenario.paths
    out = np.empty((draws, U, L), dtype=complex)
    for t in range(draws):
        for u in range(U):
            rng = np.random.default_rng(seed_sequence(scenario.master_seed, seed, stream, t, u))
            if scenario.channel_model == "los-geometric":
                out[t, u] = np.exp(1j * rng.uniform(-np.pi, np.pi, L))
            else:
                out[t, u] = sample_gains(rng, L)
    return out


@dataclass(frozen=True)
class Realization:
    """Everything random about one seed: user positions, paths and gain batches."""

    seed: int
    user_centers: np.ndarray
    paths: tuple
    opt_gains: np.ndarray
    eval_gains: np.ndarray = field(repr=False)


def draw_realization(scenario, seed):
    """Draw the channel realization of ``seed`` (common to every architecture)."""
    centers = place_users(scenario, seed)
    paths = []
    for u in range(scenario.users):
        rng = np.random.default_rng(seed_sequence(scenario.master_seed, seed, STREAM_PATHS, u))
        paths.append(
            sample_paths(
                rng, scenario.paths, scenario.channel_model,
                bs_center=(0, 0, 0), user_center=centers[u], isotropic=scenario.isotropic,
            )
        )
    if scenario.channel_model == "los-geometric":
        # SE is invariant to a per-user phase: one trial is the exact expectation
        opt_draws = eval_draws = 1
    else:
        opt_draws, eval_draws = scenario.opt_draws, scenario.eval_draws
    return Realization(
        seed=int(seed),
        user_centers=centers,
        paths=tuple(paths),
        opt_gains=_gain_batch(scenario, seed, STREAM_OPT_GAINS, opt_draws),
        eval_gains=_gain_batch(scenario, seed, STREAM_EVAL_GAINS, eval_draws),
    )


def trial_paths(realization, trial, held_out=True):
    """PathSets of every user for one Monte Carlo trial."""
    gains = realization.eval_gains if held_out else realization.opt_gains
    return [PathSet(gains[trial, u], *_angles(p)) for u, p in enumerate(realization.paths)]


def _angles(paths):
    return paths.dep_elevation, paths.dep_azimuth, paths.arr_elevation, paths.arr_azimuth
