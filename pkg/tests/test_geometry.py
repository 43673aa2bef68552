import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roma_sim.exceptions import InfeasibleProblemError, InvalidArgumentError
from roma_sim.geometry import (
    PanelGeometry,
    RegionSpec,
    absolute_positions,
    element_grid,
    min_pairwise_distance,
    project_min_distance,
    rotate_to_3d,
)

from .oracles import LAM, check_against_lattice

angles = st.floats(0.0, np.pi)
coords = st.floats(-10.0, 10.0)


class TestElementGrid:
    def test_centre_element(self):
        assert np.allclose(element_grid(3, 3, LAM / 2)[4], [0, 0])

    def test_first_element(self):
        assert np.allclose(element_grid(3, 3, LAM / 2)[0], [-LAM / 2, -LAM / 2])

    def test_single(self):
        assert np.array_equal(element_grid(1, 1, 1.0), [[0.0, 0.0]])

    def test_row_major_order(self):
        g = element_grid(3, 2, 1.0, 2.0)
        assert np.allclose(g[:, 0], [-1, 0, 1, -1, 0, 1])
        assert np.allclose(g[:, 1], [-1, -1, -1, 1, 1, 1])

    @given(st.integers(1, 6), st.integers(1, 6), st.floats(0.01, 2.0))
    def test_symmetric_under_negation(self, P, Q, d):
        g = element_grid(P, Q, d)
        assert np.allclose(np.sort(g, axis=0), np.sort(-g, axis=0))
        assert np.allclose(g.sum(axis=0), 0.0, atol=1e-12)

    @pytest.mark.parametrize("args", [(0, 3, 1.0), (3, 3, 0.0), (3, 3, -1.0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidArgumentError):
            element_grid(*args)


class TestRotation:
    @pytest.mark.parametrize(
        "alpha, beta, expected",
        [(0, 0, (0.1, 0, 0.2)), (np.pi / 2, 0, (0, 0.1, 0.2)), (0, np.pi / 2, (0.1, 0.2, 0))],
    )
    def test_identity_cases(self, alpha, beta, expected):
        assert np.allclose(rotate_to_3d(0.1, 0.2, alpha, beta), expected, rtol=1e-12, atol=1e-15)

    @given(coords, coords, angles, angles)
    def test_isometry(self, X, Z, a, b):
        v = rotate_to_3d(X, Z, a, b)
        assert np.isclose(np.linalg.norm(v), np.hypot(X, Z), rtol=1e-12, atol=1e-15)

    @given(coords, coords, angles, angles)
    def test_z_row(self, X, Z, a, b):
        assert rotate_to_3d(X, Z, a, b)[2] == Z * np.cos(b)

    def test_printed_convention_is_not_isometric(self):
        v = rotate_to_3d(0.1, 0.0, 0.0, 0.0, convention="printed")
        assert np.linalg.norm(v) > 0.1 * (1 + 1e-3)

    @given(angles, angles)
    def test_distance_preservation(self, a, b):
        g = PanelGeometry.uniform(3, 3, LAM / 2, a, b, center=(1.0, -2.0, 0.5))
        pos = absolute_positions(g)
        d3 = np.sqrt(((pos[:, None] - pos[None]) ** 2).sum(-1))
        d2 = np.sqrt(((g.offsets[:, None] - g.offsets[None]) ** 2).sum(-1))
        assert np.allclose(d3, d2, rtol=1e-12, atol=1e-15)
        assert np.isclose(min_pairwise_distance(pos), LAM / 2, rtol=1e-12)


class TestAbsolutePositions:
    def test_origin(self):
        g = PanelGeometry(1, 1, 0.0, 0.0, [[0.0, 0.0]])
        assert np.array_equal(absolute_positions(g), [[0.0, 0.0, 0.0]])

    def test_translation(self):
        g = PanelGeometry(1, 1, 0.0, 0.0, [[LAM / 2, 0.0]], center=(0, 10, 0))
        assert np.allclose(absolute_positions(g), [[LAM / 2, 10, 0]])

    def test_angle_box(self):
        with pytest.raises(InvalidArgumentError):
            PanelGeometry(1, 1, -0.1, 0.0, [[0.0, 0.0]])
        with pytest.raises(InvalidArgumentError):
            PanelGeometry(2, 1, 0.0, 0.0, [[0.0, 0.0]])


class TestRegion:
    def test_grid_fits(self):
        RegionSpec(1.0, 0.5).check_grid_fits(3, 3)
        with pytest.raises(InfeasibleProblemError):
            RegionSpec(0.9, 0.5).check_grid_fits(3, 3)

    def test_validate(self):
        region = RegionSpec(1.0, 0.5)
        PanelGeometry.uniform(3, 3, LAM / 2).validate(region, LAM)
        with pytest.raises(InfeasibleProblemError):
            PanelGeometry.uniform(3, 3, LAM / 4).validate(region, LAM)


class TestProjection:
    D = 0.5

    def test_feasible_unchanged(self):
        t = element_grid(3, 3, 0.6)
        assert np.array_equal(project_min_distance(t, self.D, 2.0), t)

    def test_two_points_anchored(self):
        t = np.array([[0.0, 0.0], [self.D / 4, 0.0]])
        out = project_min_distance(t, self.D)
        assert np.allclose(out, [[0, 0], [self.D, 0]], atol=1e-15)
        check_against_lattice(t, out, self.D, 1.5, self.D / 100)

    def test_collapsed_nine(self):
        t = np.zeros((9, 2))
        out = project_min_distance(t, self.D, 2.0)
        assert min_pairwise_distance(out) >= self.D - 1e-9
        assert np.all(np.abs(out) <= 2.0)
        check_against_lattice(t, out, self.D, 2.0, self.D / 10)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=2, max_size=4))
    def test_lattice_oracle_small(self, pts):
        t = np.array(pts)
        h = 1.0
        out = project_min_distance(t, self.D, h)
        assert min_pairwise_distance(out) >= self.D * (1 - 1e-12)
        assert np.all(np.abs(out) <= h)
        check_against_lattice(t, out, self.D, h, 0.02)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=2, max_size=9))
    def test_idempotent(self, pts):
        once = project_min_distance(np.array(pts), 0.25, 1.0)
        assert np.array_equal(project_min_distance(once, 0.25, 1.0), once)

    def test_rigid_region_falls_back_to_lattice(self):
        # nine elements at spacing 0.5 fit a half-width of 0.5 only as the 3 x 3 grid
        rng = np.random.default_rng(1)
        t = rng.uniform(-0.5, 0.5, (9, 2))
        out = project_min_distance(t, 0.5, 0.5)
        assert min_pairwise_distance(out) >= 0.5 - 1e-12
        as_set = lambda pts: sorted(map(tuple, np.round(pts, 12) + 0.0))
        assert as_set(out) == as_set(element_grid(3, 3, 0.5))

    def test_infeasible(self):
        with pytest.raises(InfeasibleProblemError):
            project_min_distance(np.zeros((9, 2)), 0.5, 0.2)
