"""MR and ZF precoders under a total transmit-power budget."""

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateChannelError, InvalidArgumentError
from .validation import check_positive

__all__ = ["PrecoderSet", "mr_precoder", "zf_precoder", "zf_precoders_batched", "normalize_power"]

ZF_COND_LIMIT = 1e12
ZF_REG_SCALE = 1e-6


@dataclass(frozen=True)
class PrecoderSet:
    """One ``M x N_j`` precoder per user and the total power budget in watts."""

    matrices: tuple
    total_power_budget: float

    def __post_init__(self):
        object.__setattr__(self, "matrices", tuple(np.asarray(W, dtype=complex) for W in self.matrices))

    def __len__(self):
        return len(self.matrices)

    def __getitem__(self, j):
        return self.matrices[j]

    def powers(self):
        return np.array([np.sum(np.abs(W) ** 2) for W in self.matrices])

    def total_power(self):
        return float(self.powers().sum())


def mr_precoder(H, power):
    """Maximum-ratio precoder ``sqrt(p) H / ||H||_F`` (so ``||W||_F^2 = p``)."""
    H = np.asarray(H, dtype=complex)
    power = check_positive(power, "power", allow_zero=True)
    norm = np.linalg.norm(H)
    if norm == 0:
        raise DegenerateChannelError("MR precoding needs a non-zero channel")
    return np.sqrt(power) * H / norm


def zf_precoders_batched(H, powers):
    """ZF precoders for stacked channels.

    Parameters
    ----------
    H : ndarray of shape (..., U, M, N)
    powers : array_like of shape (U,)

    Returns
    -------
    ndarray of shape (..., U, M, N)
        ``W_u = (sum_j H_j H_j^H + eps I)^-1 H_u`` rescaled to
        ``||W_u||_F^2 = p_u``. ``eps`` is zero unless the Gram matrix has a
        condition number above 1e12, in which case it is
        ``1e-6 * trace / M``.
    """
    H = np.asarray(H, dtype=complex)
    U, M, N = H.shape[-3:]
    powers = np.broadcast_to(np.asarray(powers, dtype=float), (U,))
    # (..., M, U*N): every user's channel side by side
    rhs = np.moveaxis(H, -3, -2).reshape(H.shape[:-3] + (M, U * N))
    gram = rhs @ np.swapaxes(rhs, -1, -2).conj()
    eig = np.linalg.eigvalsh(gram)
    top = eig[..., -1]
    if np.any(top <= 0):
        raise DegenerateChannelError("ZF precoding needs at least one non-zero channel")
    ill = eig[..., 0] * ZF_COND_LIMIT < top
    if np.any(ill):
        eps = np.where(ill, ZF_REG_SCALE * np.trace(gram, axis1=-2, axis2=-1).real / M, 0.0)
        gram = gram + eps[..., None, None] * np.eye(M)
    W = np.linalg.solve(gram, rhs).reshape(H.shape[:-3] + (M, U, N))
    W = np.moveaxis(W, -2, -3)
    norms = np.sqrt(np.sum(np.abs(W) ** 2, axis=(-2, -1), keepdims=True))
    scale = np.sqrt(powers)[:, None, None] / np.where(norms > 0, norms, 1.0)
    return W * scale


def zf_precoder(channels, powers, total_power_budget=None):
    """Zero-forcing precoders for a list of per-user channels.

    Each ``W_u`` has Frobenius power ``powers[u]``; the budget defaults to
    ``sum(powers)``.
    """
    channels = [np.asarray(H, dtype=complex) for H in channels]
    if not channels:
        raise InvalidArgumentError("need at least one channel")
    shapes = {H.shape for H in channels}
    if len(shapes) != 1:
        # unequal receive counts: pad to a common N, then strip
        n_max = max(H.shape[1] for H in channels)
        padded = np.stack([np.pad(H, ((0, 0), (0, n_max - H.shape[1]))) for H in channels])
    else:
        padded = np.stack(channels)
    if not np.any(padded):
        raise DegenerateChannelError("all channels are zero")
    powers = np.broadcast_to(np.asarray(powers, dtype=float), (len(channels),))
    W = zf_precoders_batched(padded, powers)
    mats = tuple(W[u, :, : H.shape[1]] for u, H in enumerate(channels))
    budget = float(powers.sum()) if total_power_budget is None else float(total_power_budget)
    return PrecoderSet(mats, budget)


def normalize_power(precoders, total_power_budget):
    """Scale all precoders by a common factor so the total power fits the budget."""
    budget = check_positive(total_power_budget, "total_power_budget", allow_zero=True)
    total = precoders.total_power()
    if total <= budget:
        return PrecoderSet(precoders.matrices, budget)
    scale = np.sqrt(budget / total)
    return PrecoderSet(tuple(W * scale for W in precoders.matrices), budget)
