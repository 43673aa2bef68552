"""Spectral efficiency, interference and closed-form SE upper bounds."""

from dataclasses import dataclass, field

import numpy as np

from .channel import wave_vector
from .exceptions import InvalidArgumentError
from .geometry import element_grid, rotate_to_3d
from .validation import check_count, check_positive

__all__ = [
    "SEReport",
    "BoundInputs",
    "interference_matrix",
    "user_se",
    "average_se",
    "per_user_se_batched",
    "channel_gain_G",
    "inter_user_interference_I",
    "bound_theorem1",
    "dirichlet_ratio",
    "los_phase_steps",
    "los_correlation",
    "los_correlation_bruteforce",
    "bound_corollary1",
]


@dataclass(frozen=True)
class SEReport:
    """Per-user and average SE in bits/s/Hz, plus optional bounds."""

    per_user_se: tuple
    average_se: float = None
    bound_theorem1: tuple = None
    bound_corollary1: tuple = None
    std_error: float = None

    def __post_init__(self):
        se = tuple(float(v) for v in self.per_user_se)
        if not se:
            raise InvalidArgumentError("an SEReport needs at least one user")
        object.__setattr__(self, "per_user_se", se)
        object.__setattr__(self, "average_se", float(np.mean(se)))


def _blocks(u, channels, precoders):
    Hu = np.asarray(channels[u], dtype=complex)
    return [Hu.conj().T @ np.asarray(W, dtype=complex) for W in precoders]


def interference_matrix(u, channels, precoders, sigma2):
    """``Xi = sum_{j != u} B_j B_j^H + sigma2 I`` with ``B_j = H_u^H W_j``."""
    sigma2 = check_positive(sigma2, "sigma2")
    B = _blocks(u, channels, precoders)
    n_rx = B[u].shape[0]
    xi = sigma2 * np.eye(n_rx, dtype=complex)
    for j, Bj in enumerate(B):
        if j != u:
            xi += Bj @ Bj.conj().T
    return xi


def user_se(u, channels, precoders, sigma2):
    """``log2 det(I + B_u^H Xi^-1 B_u)`` in bits/s/Hz."""
    xi = interference_matrix(u, channels, precoders, sigma2)
    Bu = _blocks(u, channels, precoders)[u]
    mat = np.eye(Bu.shape[1]) + Bu.conj().T @ np.linalg.solve(xi, Bu)
    sign, logdet = np.linalg.slogdet(mat)
    return max(float(logdet) / np.log(2), 0.0)


def average_se(values):
    values = [float(v) for v in values]
    if not values:
        raise InvalidArgumentError("average of an empty list of SE values")
    return float(np.mean(values))


def _logdet_hpd(A):
    chol = np.linalg.cholesky(A)
    return 2.0 * np.sum(np.log(np.abs(np.diagonal(chol, axis1=-2, axis2=-1))), axis=-1)


def per_user_se_batched(H, W, sigma2):
    """Per-user SE for stacked channels and precoders.

    Parameters
    ----------
    H, W : ndarray of shape (..., U, M, N)
    sigma2 : float

    Returns
    -------
    ndarray of shape (..., U)
    """
    U, M, N = H.shape[-3:]
    lead = H.shape[:-3]
    # all precoders side by side: (..., 1, M, U*N)
    W_all = np.moveaxis(W, -3, -2).reshape(lead + (1, M, U * N))
    # B[..., u, :, j*N:(j+1)*N] = H_u^H W_j
    B = np.swapaxes(H, -1, -2).conj() @ W_all
    B5 = B.reshape(lead + (U, N, U, N))
    own = _own_blocks(B5)
    interf = B5.copy()
    idx = np.arange(U)
    interf[..., idx, :, idx, :] = 0.0
    interf = interf.reshape(B.shape)
    xi = interf @ np.swapaxes(interf, -1, -2).conj() + sigma2 * np.eye(N)
    signal = own @ np.swapaxes(own, -1, -2).conj()
    se = (_logdet_hpd(xi + signal) - _logdet_hpd(xi)) / np.log(2)
    return np.maximum(se, 0.0)


def _own_blocks(B5):
    U = B5.shape[-4]
    idx = np.arange(U)
    # advanced indexing moves the user axis to the front
    return np.moveaxis(B5[..., idx, :, idx, :], 0, -3)


def channel_gain_G(paths, M, N):
    """``G = M N (sum_l |gain_l| / sqrt(L))^2``, an upper bound on ``||H||_F^2``."""
    M = check_count(M, "M")
    N = check_count(N, "N")
    gains = np.abs(np.asarray(paths.gains))
    return float(M * N * (gains.sum() / np.sqrt(gains.size)) ** 2)


def _path_responses(paths, tx_positions, rx_positions, wavelength):
    """``h[m, n, l] = exp(j k_s(l) . r_m) exp(-j k_r(l) . r_n)``."""
    ks = paths.departure_vectors(wavelength)
    kr = paths.arrival_vectors(wavelength)
    a_s = np.exp(1j * np.asarray(tx_positions) @ ks.T)
    a_r = np.exp(-1j * np.asarray(rx_positions) @ kr.T)
    return a_s[:, None, :] * a_r[None, :, :]


def inter_user_interference_I(u, all_paths, tx_positions, rx_positions, powers, wavelength):
    """Inter-user interference term of the MR upper bound for user ``u``.

    Evaluates, for every other user ``j``, ``p_j / G_j`` times the sum over
    receive-antenna pairs of ``|sum_m sum_l1 sum_l2 conj(b_u,l1) b_j,l2 / L
    conj(h_mnu(l1)) h_mnj(l2)|^2`` directly from the per-path responses.
    ``rx_positions[j]`` holds user ``j``'s absolute element positions.
    """
    M = len(tx_positions)
    total = 0.0
    hu = _path_responses(all_paths[u], tx_positions, rx_positions[u], wavelength)
    bu = np.asarray(all_paths[u].gains)
    for j, paths_j in enumerate(all_paths):
        if j == u:
            continue
        hj = _path_responses(paths_j, tx_positions, rx_positions[j], wavelength)
        bj = np.asarray(paths_j.gains)
        L = np.sqrt(len(bu) * len(bj))
        inner = np.einsum("a,b,mpa,mqb->pq", bu.conj(), bj, hu.conj(), hj) / L
        G_j = channel_gain_G(paths_j, M, len(rx_positions[j]))
        total += powers[j] / G_j * float(np.sum(np.abs(inner) ** 2))
    return total


def bound_theorem1(G, power, sigma2, N, interference=0.0):
    """MR upper bounds ``(with interference, interference-free)`` in bits/s/Hz."""
    sigma2 = check_positive(sigma2, "sigma2")
    N = check_count(N, "N")
    noise = N * sigma2
    with_int = np.log2(1 + G * power / (noise + interference))
    free = np.log2(1 + G * power / noise)
    return float(with_int), float(free)


def dirichlet_ratio(order, x):
    """``sin(order x) / sin(x)``, continued by its limit where ``sin(x) = 0``."""
    x = np.asarray(x, dtype=float)
    s = np.sin(x)
    small = np.abs(s) < 1e-12
    safe = np.where(small, 1.0, s)
    ratio = np.sin(order * x) / safe
    # L'Hopital: order cos(order x) / cos(x)
    limit = order * np.cos(order * x) / np.cos(x)
    return np.where(small, limit, ratio)


def los_phase_steps(alpha, beta, d_h, d_v, elevation, azimuth):
    """Per-axis phase steps (metres) of a LoS wave across a rotated uniform grid.

    Returns ``(sigma, varsigma)`` such that the projection of the element
    position onto the unit wave direction is ``X/d_h * sigma + Z/d_v * varsigma``.
    """
    gamma = np.cos(elevation) * np.cos(azimuth)
    eta = np.cos(elevation) * np.sin(azimuth)
    vartheta = np.sin(elevation)
    sigma = d_h * (np.cos(alpha) * gamma + np.sin(alpha) * eta)
    varsigma = d_v * (
        np.cos(beta) * vartheta + np.sin(beta) * np.cos(alpha) * eta - np.sin(beta) * np.sin(alpha) * gamma
    )
    return sigma, varsigma


def _kernel_orders(M_H, M_V, kernel_order):
    if kernel_order in (None, "exact"):
        return M_H, M_V
    if kernel_order == "printed":
        return M_H - 1, M_V - 1
    raise InvalidArgumentError(f"kernel_order must be 'exact' or 'printed', got {kernel_order!r}")


def los_correlation(M_H, M_V, d_h, d_v, alpha, beta, angles_u, angles_j, wavelength, kernel_order="exact"):
    """Closed-form BS array correlation ``sum_m exp(j (k_j - k_u) . r_m)`` for LoS paths.

    ``angles_u`` and ``angles_j`` are ``(elevation, azimuth)`` departure
    pairs. The grid is centred, so the value is real; it is returned as
    a complex number for uniformity with the brute-force sum. With
    ``kernel_order="printed"`` the numerator orders become ``M_H - 1`` and
    ``M_V - 1``.
    """
    check_positive(wavelength, "wavelength")
    K_H, K_V = _kernel_orders(M_H, M_V, kernel_order)
    s_u, v_u = los_phase_steps(alpha, beta, d_h, d_v, *angles_u)
    s_j, v_j = los_phase_steps(alpha, beta, d_h, d_v, *angles_j)
    x_h = np.pi / wavelength * (s_j - s_u)
    x_v = np.pi / wavelength * (v_j - v_u)
    return complex(dirichlet_ratio(K_H, x_h) * dirichlet_ratio(K_V, x_v))


def los_correlation_bruteforce(M_H, M_V, d_h, d_v, alpha, beta, angles_u, angles_j, wavelength):
    """Direct element-by-element sum matching :func:`los_correlation`."""
    off = element_grid(M_H, M_V, d_h, d_v)
    pos = rotate_to_3d(off[:, 0], off[:, 1], alpha, beta)
    ku = wave_vector(*angles_u, wavelength)
    kj = wave_vector(*angles_j, wavelength)
    return complex(np.sum(np.exp(1j * pos @ (kj - ku))))


@dataclass(frozen=True)
class BoundInputs:
    """Inputs of the LoS closed-form bound for a uniform BS grid.

    ``gains_abs`` holds one LoS gain magnitude per user and ``elevations`` /
    ``azimuths`` the per-user departure angles.
    """

    gains_abs: np.ndarray
    powers: np.ndarray
    sigma2: float
    M_H: int
    M_V: int
    N: int
    d_h: float
    d_v: float
    alpha_tx: float
    beta_tx: float
    elevations: np.ndarray
    azimuths: np.ndarray
    wavelength: float
    kernel_order: str = "exact"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        check_positive(self.sigma2, "sigma2")
        for name in ("gains_abs", "powers", "elevations", "azimuths"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(self.gains_abs < 0) or np.any(self.powers < 0):
            raise InvalidArgumentError("gain magnitudes and powers must be non-negative")

    @property
    def n_users(self):
        return len(self.powers)


def bound_corollary1(inputs):
    """LoS upper bound on every user's SE, in bits/s/Hz.

    ``G_u = M N |b_u|^2`` and the interference of user ``j`` on ``u`` is
    ``p_j / G_j * N^2 |b_u b_j|^2 |R_uj|^2`` with ``R_uj`` from
    :func:`los_correlation`.
    """
    c = inputs
    M = c.M_H * c.M_V
    G = M * c.N * c.gains_abs**2
    out = []
    for u in range(c.n_users):
        interference = 0.0
        for j in range(c.n_users):
            if j == u:
                continue
            R = los_correlation(
                c.M_H, c.M_V, c.d_h, c.d_v, c.alpha_tx, c.beta_tx,
                (c.elevations[u], c.azimuths[u]), (c.elevations[j], c.azimuths[j]),
                c.wavelength, c.kernel_order,
            )
            interference += c.powers[j] / G[j] * c.N**2 * (c.gains_abs[u] * c.gains_abs[j]) ** 2 * abs(R) ** 2
        out.append(bound_theorem1(G[u], c.powers[u], c.sigma2, c.N, interference)[0])
    return np.array(out)
