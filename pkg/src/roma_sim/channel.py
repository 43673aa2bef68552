"""Geometric multipath channel between a BS panel and a user panel.

``H = sqrt(1/L) * sum_l gain_l * a_s(l) a_r(l)^T`` with transmit steering
entries ``exp(+j k_s . r_t)`` and receive steering entries ``exp(-j k_r . r_r)``.
Channels are plain ``(M, N)`` complex arrays.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError
from .validation import check_count, check_positive, check_random_state

__all__ = [
    "PathSet",
    "wave_vector",
    "steering",
    "synthesize_channel",
    "sample_paths",
    "sample_gains",
    "direction_angles",
]


@dataclass(frozen=True)
class PathSet:
    """Complex gains and departure/arrival angles of ``L`` paths (radians)."""

    gains: np.ndarray
    dep_elevation: np.ndarray
    dep_azimuth: np.ndarray
    arr_elevation: np.ndarray
    arr_azimuth: np.ndarray

    def __post_init__(self):
        gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        L = gains.shape[-1]
        if L < 1:
            raise InvalidArgumentError("a PathSet needs at least one path")
        object.__setattr__(self, "gains", gains)
        for name in ("dep_elevation", "dep_azimuth", "arr_elevation", "arr_azimuth"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if arr.shape != (L,):
                raise InvalidArgumentError(f"{name} must have shape ({L},), got {arr.shape}")
            limit = np.pi / 2 if "elevation" in name else np.pi
            if np.any(np.abs(arr) > limit + 1e-12):
                raise InvalidArgumentError(f"{name} outside [-{limit:.4g}, {limit:.4g}]")
            object.__setattr__(self, name, arr)

    @property
    def n_paths(self):
        return len(self.dep_elevation)

    def with_gains(self, gains):
        """Same angles, new gains."""
        return PathSet(gains, self.dep_elevation, self.dep_azimuth, self.arr_elevation, self.arr_azimuth)

    def departure_vectors(self, wavelength):
        return wave_vector(self.dep_elevation, self.dep_azimuth, wavelength)

    def arrival_vectors(self, wavelength):
        return wave_vector(self.arr_elevation, self.arr_azimuth, wavelength)

    def __eq__(self, other):
        if not isinstance(other, PathSet):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("gains", "dep_elevation", "dep_azimuth", "arr_elevation", "arr_azimuth")
        )

    __hash__ = None


def wave_vector(theta, phi, wavelength):
    """Wave vector ``(2 pi / lambda) [cos t cos p, cos t sin p, sin t]``.

    ``theta`` is the elevation and ``phi`` the azimuth; the result has a
    trailing axis of length 3.
    """
    wavelength = check_positive(wavelength, "wavelength")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ct = np.cos(theta)
    k = 2 * np.pi / wavelength
    return k * np.stack(np.broadcast_arrays(ct * np.cos(phi), ct * np.sin(phi), np.sin(theta)), axis=-1)


def steering(positions, theta, phi, wavelength, sign=+1):
    """Steering vector ``exp(sign * j * kappa(theta, phi) . r)`` for each position.

    With array-valued angles the result has shape ``(n_positions, n_angles)``.
    """
    if sign not in (1, -1):
        raise InvalidArgumentError("sign must be +1 (transmit) or -1 (receive)")
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(pos) == 0:
        raise InvalidArgumentError("positions must not be empty")
    kappa = wave_vector(theta, phi, wavelength)
    return np.exp(sign * 1j * (pos @ kappa.T if kappa.ndim > 1 else pos @ kappa))


def synthesize_channel(tx_positions, rx_positions, paths, wavelength):
    """``M x N`` channel for absolute element positions and a :class:`PathSet`."""
    a_s = steering(tx_positions, paths.dep_elevation, paths.dep_azimuth, wavelength, +1)
    a_r = steering(rx_positions, paths.arr_elevation, paths.arr_azimuth, wavelength, -1)
    return (a_s * paths.gains) @ a_r.T / np.sqrt(paths.n_paths)


def direction_angles(vector):
    """Elevation and azimuth of a 3D direction."""
    v = np.asarray(vector, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise InvalidArgumentError("direction of a zero vector is undefined")
    elevation = float(np.arcsin(np.clip(v[2] / norm, -1.0, 1.0)))
    azimuth = float(np.arctan2(v[1], v[0]))
    return elevation, azimuth


def sample_gains(seed, size):
    """Circularly-symmetric complex normal gains with unit variance."""
    rng = check_random_state(seed)
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / np.sqrt(2)


def sample_paths(seed, L, model="stochastic", bs_center=(0, 0, 0), user_center=(1, 0, 0), isotropic=False):
    """Draw a :class:`PathSet` for one user.

    Parameters
    ----------
    seed : int, SeedSequence or Generator
    L : int
        Number of paths; must be 1 for ``model="los-geometric"``.
    model : {"stochastic", "los-geometric"}
        ``stochastic`` draws unit-variance complex normal gains with uniform
        azimuths on [-pi, pi] and elevations on [-pi/2, pi/2] (or
        cosine-weighted elevations when ``isotropic``). ``los-geometric`` uses
        the BS-to-user direction for departure, the user-to-BS direction for
        arrival and a unit gain with uniform random phase.
    """
    rng = check_random_state(seed)
    L = check_count(L, "L")
    if model == "stochastic":
        gains = sample_gains(rng, L)
        if isotropic:
            elev = np.arcsin(rng.uniform(-1.0, 1.0, size=(2, L)))
        else:
            elev = rng.uniform(-np.pi / 2, np.pi / 2, size=(2, L))
        azim = rng.uniform(-np.pi, np.pi, size=(2, L))
        return PathSet(gains, elev[0], azim[0], elev[1], azim[1])
    if model == "los-geometric":
        if L != 1:
            raise InvalidArgumentError("the LoS model has exactly one path")
        d = np.asarray(user_center, dtype=float) - np.asarray(bs_center, dtype=float)
        if not np.any(d):
            raise InvalidArgumentError("BS and user centres coincide")
        dep = direction_angles(d)
        arr = direction_angles(-d)
        gain = np.exp(1j * rng.uniform(-np.pi, np.pi))
        return PathSet([gain], [dep[0]], [dep[1]], [arr[0]], [arr[1]])
    raise InvalidArgumentError(f"unknown channel model {model!r}")
