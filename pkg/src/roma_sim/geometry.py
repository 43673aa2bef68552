"""Panel geometry: element grids, panel rotation and minimum-distance projection.

Element positions are carried as in-plane offsets ``(X, Z)`` relative to the
panel centre; 3D coordinates are always derived through :func:`rotate_to_3d`.
Because the rotation is an isometry, pairwise-distance constraints can be
enforced on the in-plane offsets directly.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .exceptions import InfeasibleProblemError, InvalidArgumentError
from .validation import check_count, check_points, check_positive

__all__ = [
    "PanelGeometry",
    "RegionSpec",
    "element_grid",
    "rotate_to_3d",
    "absolute_positions",
    "clamp_to_region",
    "min_pairwise_distance",
    "project_min_distance",
]

# relative slack used when testing ``distance >= D``
_DIST_RTOL = 1e-12
_MAX_ALTERNATIONS = 5


def element_grid(P, Q, d_h, d_v=None):
    """Offsets of a uniform ``P x Q`` grid centred on the origin.

    Element ``t`` (0-based) has horizontal index ``t % P`` and vertical
    index ``t // P``.

    Returns
    -------
    ndarray of shape (P*Q, 2)
        Columns are ``X`` (horizontal) and ``Z`` (vertical).
    """
    P = check_count(P, "P")
    Q = check_count(Q, "Q")
    d_h = check_positive(d_h, "d_h")
    d_v = d_h if d_v is None else check_positive(d_v, "d_v")
    t = np.arange(P * Q)
    p = t % P
    q = t // P
    return np.column_stack([(p - (P - 1) / 2) * d_h, (q - (Q - 1) / 2) * d_v])


def rotate_to_3d(X, Z, alpha, beta, convention="isometric"):
    """Map in-plane offsets to 3D displacements for panel angles ``(alpha, beta)``.

    ``convention="printed"`` reproduces the literal (non-isometric) y-row
    ``X cos(alpha) + Z sin(beta) cos(alpha)``; it exists only for A/B
    comparisons.

    Inputs broadcast against each other; the result has a trailing axis of
    length 3.
    """
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    dx = X * ca - Z * sb * sa
    if convention == "isometric":
        dy = X * sa + Z * sb * ca
    elif convention == "printed":
        dy = X * ca + Z * sb * ca
    else:
        raise InvalidArgumentError(f"unknown rotation convention {convention!r}")
    dz = Z * cb
    dx, dy, dz = np.broadcast_arrays(dx, dy, dz)
    return np.stack([dx, dy, dz], axis=-1)


@dataclass(frozen=True)
class RegionSpec:
    """Square movable region and minimum element spacing, in wavelengths.

    The region is the square ``[-side/2, side/2]^2`` (times the wavelength)
    around the panel centre.
    """

    side_wavelengths: float
    min_distance_wavelengths: float = 0.5

    def __post_init__(self):
        check_positive(self.side_wavelengths, "side_wavelengths")
        check_positive(self.min_distance_wavelengths, "min_distance_wavelengths", allow_zero=True)

    def half_width(self, wavelength=1.0):
        return 0.5 * self.side_wavelengths * wavelength

    def min_distance(self, wavelength=1.0):
        return self.min_distance_wavelengths * wavelength

    def check_grid_fits(self, P, Q):
        """Raise :class:`InfeasibleProblemError` if a P x Q grid at spacing D does not fit."""
        D = self.min_distance_wavelengths
        span = max(P - 1, Q - 1) * D
        if span > self.side_wavelengths * (1 + 1e-12):
            raise InfeasibleProblemError(
                f"a {P}x{Q} grid at spacing {D} wavelengths needs a region side of "
                f"{span} wavelengths, region side is {self.side_wavelengths}"
            )

    def contains(self, offsets, wavelength=1.0, atol=1e-12):
        h = self.half_width(wavelength)
        return bool(np.all(np.abs(np.asarray(offsets)) <= h + atol * max(h, 1.0)))


@dataclass(frozen=True)
class PanelGeometry:
    """Grid shape, rotation angles and element offsets of one panel.

    ``offsets`` has shape ``(rows_h * rows_v, 2)`` in metres; ``center`` is the
    absolute position of the panel centre.
    """

    rows_h: int
    rows_v: int
    alpha: float
    beta: float
    offsets: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        check_count(self.rows_h, "rows_h")
        check_count(self.rows_v, "rows_v")
        for name in ("alpha", "beta"):
            angle = getattr(self, name)
            if not (0.0 <= angle <= np.pi):
                raise InvalidArgumentError(f"{name} must lie in [0, pi], got {angle}")
        offsets = check_points(self.offsets, "offsets")
        if len(offsets) != self.rows_h * self.rows_v:
            raise InvalidArgumentError(
                f"expected {self.rows_h * self.rows_v} offsets, got {len(offsets)}"
            )
        center = np.asarray(self.center, dtype=float).reshape(3)
        offsets.setflags(write=False)
        center.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "center", center)

    @classmethod
    def uniform(cls, rows_h, rows_v, spacing, alpha=np.pi / 2, beta=np.pi / 2, center=(0, 0, 0)):
        """Panel with a uniform grid at ``spacing`` metres."""
        offsets = element_grid(rows_h, rows_v, spacing)
        return cls(rows_h, rows_v, alpha, beta, offsets, np.asarray(center, dtype=float))

    @property
    def n_elements(self):
        return self.rows_h * self.rows_v

    def validate(self, region, wavelength):
        """Check region membership and the pairwise-distance constraint."""
        if not region.contains(self.offsets, wavelength):
            raise InfeasibleProblemError("offsets leave the movable region")
        D = region.min_distance(wavelength)
        if min_pairwise_distance(self.offsets) < D * (1 - 1e-9):
            raise InfeasibleProblemError("offsets violate the minimum distance")


def absolute_positions(geometry, convention="isometric"):
    """Absolute 3D element positions, shape ``(n_elements, 3)``."""
    off = geometry.offsets
    rel = rotate_to_3d(off[:, 0], off[:, 1], geometry.alpha, geometry.beta, convention)
    return geometry.center + rel


def clamp_to_region(offsets, half_width):
    return np.clip(np.asarray(offsets, dtype=float), -half_width, half_width)


def min_pairwise_distance(points):
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return np.inf
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff**2, axis=-1))
    iu = np.triu_indices(len(pts), k=1)
    return float(dist[iu].min())


def _circle_intersections(centers, radius):
    """All intersection points of equal-radius circles around ``centers``."""
    if len(centers) < 2:
        return np.empty((0, 2))
    i, j = np.array(list(combinations(range(len(centers)), 2))).T
    a, b = centers[i], centers[j]
    delta = b - a
    dist = np.hypot(delta[:, 0], delta[:, 1])
    ok = (dist > 0) & (dist <= 2 * radius)
    a, delta, dist = a[ok], delta[ok], dist[ok]
    mid = a + 0.5 * delta
    h = np.sqrt(np.maximum(radius**2 - (0.5 * dist) ** 2, 0.0))
    perp = np.column_stack([-delta[:, 1], delta[:, 0]]) / dist[:, None]
    pts = np.empty((2 * len(a), 2))
    pts[0::2] = mid + h[:, None] * perp
    pts[1::2] = mid - h[:, None] * perp
    return pts


def _boundary_intersections(centers, radius, half_width):
    """Intersections of circles around ``centers`` with the region edges."""
    if not np.isfinite(half_width) or len(centers) == 0:
        return np.empty((0, 2))
    out = []
    for axis in (0, 1):
        other = 1 - axis
        for edge in (-half_width, half_width):
            gap = edge - centers[:, axis]
            ok = np.abs(gap) <= radius
            span = np.sqrt(np.maximum(radius**2 - gap[ok] ** 2, 0.0))
            for sign in (1.0, -1.0):
                pt = np.empty((int(ok.sum()), 2))
                pt[:, axis] = edge
                pt[:, other] = centers[ok, other] + sign * span
                out.append(pt)
    return np.concatenate(out) if out else np.empty((0, 2))


def _candidates(target, placed, D, half_width):
    """Candidate positions for one element, in tie-breaking order."""
    cands = [target[None, :], np.clip(target, -half_width, half_width)[None, :]]
    if len(placed):
        delta = target - placed
        norm = np.hypot(delta[:, 0], delta[:, 1])
        direction = np.where(norm[:, None] > 0, delta / np.where(norm > 0, norm, 1.0)[:, None], [1.0, 0.0])
        cands.append(placed + D * direction)
        cands.append(_circle_intersections(placed, D))
        cands.append(_boundary_intersections(placed, D, half_width))
    return np.concatenate(cands)


def _feasible_mask(cands, placed, D, half_width):
    ok = np.all(np.abs(cands) <= half_width * (1 + _DIST_RTOL) + 1e-300, axis=1)
    if len(placed) and D > 0:
        diff = cands[:, None, :] - placed[None, :, :]
        dist = np.sqrt(np.sum(diff**2, axis=-1))
        ok &= np.all(dist >= D * (1 - _DIST_RTOL), axis=1)
    return ok


def _lattice_fallback(placed, D, half_width, target):
    """Last-resort candidates on a fine lattice covering the region."""
    h = half_width if np.isfinite(half_width) else np.abs(target).max() + 4 * max(D, 1e-12) * (len(placed) + 1)
    step = max(D / 8, h / 64, 1e-12)
    ticks = np.arange(-h, h + 0.5 * step, step)
    xx, zz = np.meshgrid(ticks, ticks, indexing="xy")
    return np.column_stack([xx.ravel(), zz.ravel()])


def _greedy_pass(targets, D, half_width):
    placed = np.empty((0, 2))
    for target in targets:
        if _feasible_mask(target[None, :], placed, D, half_width)[0]:
            # the target is the first candidate and has zero cost
            placed = np.vstack([placed, target])
            continue
        cands = _candidates(target, placed, D, half_width)
        ok = _feasible_mask(cands, placed, D, half_width)
        if not ok.any():
            cands = _lattice_fallback(placed, D, half_width, target)
            ok = _feasible_mask(cands, placed, D, half_width)
            if not ok.any():
                raise InfeasibleProblemError(
                    f"no feasible position for element {len(placed)} "
                    f"(D={D}, half width={half_width})"
                )
        cost = np.sum((cands[ok] - target) ** 2, axis=1)
        placed = np.vstack([placed, cands[ok][np.argmin(cost)]])
    return placed


def project_min_distance(targets, min_distance, half_width=np.inf):
    """Feasible offsets close to ``targets`` with pairwise spacing ``>= min_distance``.

    Elements are placed in index order. Each takes the candidate closest to its
    target among: the target itself, the target clamped into the region, the
    points at distance ``min_distance`` from every placed element along the
    line towards the target, the pairwise intersections of the circles of
    radius ``min_distance`` around placed elements, and the intersections of
    those circles with the region edges. Ties go to the earliest candidate in
    that order.

    Parameters
    ----------
    targets : array_like of shape (n, 2)
    min_distance : float
    half_width : float, optional
        Half side of the square region centred on the origin, same units as
        ``targets``.

    Returns
    -------
    ndarray of shape (n, 2)

    Raises
    ------
    InfeasibleProblemError
        If the region cannot hold ``n`` elements at the required spacing.
    """
    targets = check_points(targets, "targets")
    D = check_positive(min_distance, "min_distance", allow_zero=True)
    half_width = float(half_width)
    n = len(targets)
    if np.isfinite(half_width) and n > 1 and D > 0:
        # area bound: n disjoint disks of radius D/2 inside the square grown by D/2
        if n * np.pi * (D / 2) ** 2 > (2 * half_width + D) ** 2:
            raise InfeasibleProblemError(f"{n} elements at spacing {D} cannot fit in the region")
    current = targets
    try:
        for _ in range(_MAX_ALTERNATIONS):
            out = _greedy_pass(current, D, half_width)
            clamped = clamp_to_region(out, half_width)
            if np.array_equal(clamped, out) or min_pairwise_distance(clamped) >= D * (1 - _DIST_RTOL):
                return clamped
            current = clamped
    except InfeasibleProblemError:
        pass
    packed = _lattice_assignment(targets, D, half_width)
    if packed is None:
        raise InfeasibleProblemError(
            f"no feasible placement of {n} elements (D={D}, half width={half_width})"
        )
    return packed


def _lattice_assignment(targets, D, half_width):
    """Closest assignment of ``targets`` to a square lattice at spacing ``D``.

    Used when greedy placement paints itself into a corner in a tightly
    packed region. Returns ``None`` if the lattice has too few sites.
    """
    if not np.isfinite(half_width) or D <= 0:
        return None
    k = int(np.floor(2 * half_width / D * (1 + _DIST_RTOL))) + 1
    if k * k < len(targets):
        return None
    ticks = (np.arange(k) - (k - 1) / 2) * D
    xx, zz = np.meshgrid(ticks, ticks, indexing="xy")
    sites = np.column_stack([xx.ravel(), zz.ravel()])
    cost = np.sum((targets[:, None, :] - sites[None, :, :]) ** 2, axis=-1)
    rows, cols = linear_sum_assignment(cost)
    out = np.empty_like(targets)
    out[rows] = sites[cols]
    return out
