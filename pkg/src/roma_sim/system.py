"""Vectorised evaluation of the average SE for many panel configurations.

A configuration is a flat vector::

    [alpha_0..alpha_U, beta_0..beta_U, bs offsets (M x 2), user offsets (U x N x 2)]

where index 0 of the angle blocks is the BS panel and offsets are in
wavelengths. :class:`SystemModel` turns a ``(K, dim)`` stack of such vectors
into SE values for a fixed batch of channel gains.
"""

import numpy as np

from .geometry import element_grid, rotate_to_3d
from .metrics import per_user_se_batched
from .precoding import zf_precoders_batched

# K * draws per vectorised chunk; bounds peak memory around 100 MB
_CHUNK = 2048


class Layout:
    """Index bookkeeping for the flat configuration vector."""

    def __init__(self, users, bs_grid, user_grid):
        self.users = int(users)
        self.bs_grid = tuple(bs_grid)
        self.user_grid = tuple(user_grid)
        self.M = self.bs_grid[0] * self.bs_grid[1]
        self.N = self.user_grid[0] * self.user_grid[1]
        U = self.users
        self.alpha = slice(0, U + 1)
        self.beta = slice(U + 1, 2 * U + 2)
        start = 2 * U + 2
        self.bs = slice(start, start + 2 * self.M)
        start = self.bs.stop
        self.user = [slice(start + 2 * self.N * u, start + 2 * self.N * (u + 1)) for u in range(U)]
        self.dim = self.user[-1].stop if U else self.bs.stop

    @classmethod
    def from_scenario(cls, scenario):
        return cls(scenario.users, scenario.bs_grid, scenario.user_grid)

    def angle_indices(self):
        return np.r_[self.alpha, self.beta]

    def position_indices(self):
        return np.arange(self.bs.start, self.dim)

    def unpack(self, X):
        X = np.atleast_2d(X)
        K = len(X)
        return (
            X[:, self.alpha],
            X[:, self.beta],
            X[:, self.bs].reshape(K, self.M, 2),
            X[:, self.bs.stop:].reshape(K, self.users, self.N, 2),
        )

    def pack(self, alphas, betas, bs_offsets, user_offsets):
        return np.concatenate(
            [np.ravel(alphas), np.ravel(betas), np.ravel(bs_offsets), np.ravel(user_offsets)]
        ).astype(float)

    def initial(self, spacing=0.5, angle=np.pi / 2):
        """Uniform grids at ``spacing`` wavelengths, all panels at ``angle``."""
        U = self.users
        bs = element_grid(*self.bs_grid, spacing)
        user = np.broadcast_to(element_grid(*self.user_grid, spacing), (U, self.N, 2))
        return self.pack(np.full(U + 1, angle), np.full(U + 1, angle), bs, user)


class SystemModel:
    """Average SE of panel configurations for one realization and gain batch.

    Parameters
    ----------
    scenario : Scenario
    realization : Realization
    held_out : bool
        Use the held-out gain batch instead of the optimisation batch.
    precoder : {"zf", "mr"}
    """

    def __init__(self, scenario, realization, held_out=False, precoder="zf"):
        self.scenario = scenario
        self.realization = realization
        self.layout = Layout.from_scenario(scenario)
        self.precoder = precoder
        self.sigma2 = scenario.sigma2
        self.powers = scenario.powers
        lam = scenario.wavelength
        paths = realization.paths
        # wave vectors in radians per wavelength
        self.k_dep = np.stack([p.departure_vectors(1.0) for p in paths])
        self.k_arr = np.stack([p.arrival_vectors(1.0) for p in paths])
        centers = np.asarray(realization.user_centers) / lam
        center_phase = np.exp(-1j * np.einsum("uc,ulc->ul", centers, self.k_arr))
        gains = realization.eval_gains if held_out else realization.opt_gains
        self.gains = gains * center_phase[None] / np.sqrt(scenario.paths)
        self.n_evals = 0

    @property
    def draws(self):
        return len(self.gains)

    def positions(self, X):
        """Relative BS and user element positions in wavelengths."""
        al, be, bs, us = self.layout.unpack(X)
        r_t = rotate_to_3d(bs[..., 0], bs[..., 1], al[:, :1], be[:, :1])
        r_r = rotate_to_3d(us[..., 0], us[..., 1], al[:, 1:, None], be[:, 1:, None])
        return r_t, r_r

    def channels(self, X):
        """Channels of shape ``(K, draws, U, M, N)``."""
        r_t, r_r = self.positions(X)
        a_s = np.exp(1j * np.einsum("kmc,ulc->kuml", r_t, self.k_dep))
        a_r = np.exp(-1j * np.einsum("kunc,ulc->kunl", r_r, self.k_arr))
        scaled = a_s[:, None] * self.gains[None, :, :, None, :]
        return scaled @ np.swapaxes(a_r, -1, -2)[:, None]

    def _precode(self, H):
        if self.precoder == "zf":
            return zf_precoders_batched(H, self.powers)
        norms = np.sqrt(np.sum(np.abs(H) ** 2, axis=(-2, -1), keepdims=True))
        return H * np.sqrt(self.powers)[:, None, None] / norms

    def per_draw_se(self, X):
        """Per-user SE for each draw, shape ``(K, draws, U)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self.n_evals += len(X)
        step = max(1, _CHUNK // self.draws)
        out = []
        for start in range(0, len(X), step):
            H = self.channels(X[start:start + step])
            out.append(per_user_se_batched(H, self._precode(H), self.sigma2))
        return np.concatenate(out)

    def per_user_se(self, X):
        """Expected per-user SE, shape ``(K, U)``."""
        return self.per_draw_se(X).mean(axis=1)

    def __call__(self, X):
        """Average SE over users and draws, shape ``(K,)``."""
        return self.per_draw_se(X).mean(axis=(1, 2))

    def report_values(self, x):
        """``(per-user SE, standard error of the average)`` for one configuration."""
        se = self.per_draw_se(x)[0]
        per_draw = se.mean(axis=1)
        std_error = float(per_draw.std(ddof=1) / np.sqrt(len(per_draw))) if len(per_draw) > 1 else 0.0
        return se.mean(axis=0), std_error
