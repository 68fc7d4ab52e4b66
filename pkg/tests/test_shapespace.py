"""Geometry oracles for the pre-shape sphere."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geomotion import shapespace as ss
from geomotion.layers import rotation_matrices_from_angles


def full_helmert(n):
    """Oracle: the classical n x n Helmert matrix (constant first row)."""
    h = np.zeros((n, n))
    h[0] = 1.0 / np.sqrt(n)
    for j in range(1, n):
        scale = 1.0 / np.sqrt(j * (j + 1.0))
        h[j, :j] = -scale
        h[j, j] = j * scale
    return h


def random_point(rng, n=25):
    return ss.to_preshape(rng.normal(size=(n, 3)))


def e_config(rows, r, c):
    cfg = np.zeros((rows, 3))
    cfg[r, c] = 1.0
    return ss.PreShapePoint(cfg)


class TestHelmert:
    def test_n2_single_row(self):
        h = ss.helmert_submatrix(2)
        np.testing.assert_allclose(h.matrix, [[-1 / np.sqrt(2), 1 / np.sqrt(2)]])

    @pytest.mark.parametrize("n", [2, 3, 7, 25])
    def test_matches_full_helmert_minus_constant_row(self, n):
        full = full_helmert(n)
        # the full matrix must itself be orthogonal
        np.testing.assert_allclose(full @ full.T, np.eye(n), atol=1e-12)
        np.testing.assert_allclose(ss.helmert_submatrix(n).matrix, full[1:],
                                   atol=1e-15)

    @pytest.mark.parametrize("n", [2, 5, 25])
    def test_annihilates_ones(self, n):
        h = ss.helmert_submatrix(n)
        np.testing.assert_allclose(h.matrix @ np.ones(n), 0.0, atol=1e-12)

    def test_n25_orthonormal(self):
        h = ss.helmert_submatrix(25)
        np.testing.assert_allclose(h.matrix @ h.matrix.T, np.eye(24), atol=1e-12)

    def test_too_small(self):
        with pytest.raises(ValueError, match="n >= 2"):
            ss.helmert_submatrix(1)


class TestPreshapeProjection:
    def test_two_joint_example(self):
        p = ss.to_preshape(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
        np.testing.assert_allclose(p.config, [[1.0, 0.0, 0.0]], atol=1e-15)

    def test_centering_matches_mean_subtraction(self):
        # The Helmert rows span the mean-zero subspace, so the centered
        # Frobenius norm must agree with explicit mean subtraction.
        rng = np.random.default_rng(3)
        x = rng.normal(size=(9, 3))
        h = ss.helmert_submatrix(9).matrix
        assert np.linalg.norm(h @ x) == pytest.approx(
            np.linalg.norm(x - x.mean(axis=0)), abs=1e-12)

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            ss.to_preshape(np.ones((4, 3)))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000),
           tx=st.floats(-100, 100), ty=st.floats(-100, 100), tz=st.floats(-100, 100),
           scale=st.floats(1e-3, 1e3))
    def test_translation_and_scale_invariance(self, seed, tx, ty, tz, scale):
        x = np.random.default_rng(seed).normal(size=(6, 3))
        base = ss.to_preshape(x)
        shifted = ss.to_preshape(scale * x + np.array([tx, ty, tz]))
        np.testing.assert_allclose(shifted.config, base.config, atol=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_rotation_preserves_unit_norm(self, seed):
        rng = np.random.default_rng(seed)
        p = random_point(rng, n=6)
        rot = rotation_matrices_from_angles(rng.uniform(-np.pi, np.pi, 3))
        assert np.linalg.norm(p.config @ rot) == pytest.approx(1.0, abs=1e-12)

    def test_sequence_projection_matches_per_frame(self):
        rng = np.random.default_rng(5)
        coords = rng.normal(size=(4, 6, 3))
        frames = ss.preshape_frames(coords)
        for f in range(4):
            np.testing.assert_allclose(frames[f], ss.to_preshape(coords[f]).config,
                                       atol=1e-14)


class TestGeodesicDistance:
    def test_identical_points(self):
        p = random_point(np.random.default_rng(0))
        assert ss.geodesic_distance(p, p) <= 5e-4          # clamped
        assert ss.geodesic_distance(p, p, clamp=False) == 0.0

    def test_antipodal(self):
        p = random_point(np.random.default_rng(1))
        q = ss.PreShapePoint(-p.config)
        assert ss.geodesic_distance(p, q) == pytest.approx(np.pi, abs=5e-4)

    def test_orthogonal_quarter_circle(self):
        assert ss.geodesic_distance(e_config(3, 0, 0), e_config(3, 1, 1)) \
            == pytest.approx(np.pi / 2, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="joint counts"):
            ss.geodesic_distance(e_config(3, 0, 0), e_config(4, 0, 0))


class TestLogExpMaps:
    def test_log_at_same_point_is_zero(self):
        p = random_point(np.random.default_rng(2))
        np.testing.assert_allclose(ss.log_map(p, p).vec, 0.0, atol=1e-15)

    def test_log_orthogonal_pair(self):
        p1, pf = e_config(2, 0, 0), e_config(2, 1, 2)
        np.testing.assert_allclose(ss.log_map(p1, pf).vec,
                                   (np.pi / 2) * pf.config, atol=1e-12)

    def test_log_norm_equals_distance(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            p1, pf = random_point(rng), random_point(rng)
            z = ss.log_map(p1, pf)
            assert abs(z.norm - ss.geodesic_distance(p1, pf, clamp=False)) < 1e-9
            assert abs(float((z.vec * p1.config).sum())) < 1e-9

    def test_exp_zero_returns_base(self):
        p = random_point(np.random.default_rng(4))
        out = ss.exp_map(ss.TangentVector(base=p, vec=np.zeros_like(p.config)))
        np.testing.assert_allclose(out.config, p.config, atol=1e-15)

    def test_exp_quarter_circle(self):
        base, target = e_config(2, 0, 0), e_config(2, 1, 1)
        out = ss.exp_map(ss.TangentVector(base=base,
                                          vec=(np.pi / 2) * target.config))
        np.testing.assert_allclose(out.config, target.config, atol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            p1, pf = random_point(rng), random_point(rng)
            back = ss.exp_map(ss.log_map(p1, pf))
            assert ss.geodesic_distance(back, pf, clamp=False) < 1e-8

    def test_tangent_vector_validation(self):
        p = e_config(2, 0, 0)
        with pytest.raises(ValueError, match="not tangent"):
            ss.TangentVector(base=p, vec=p.config.copy())

    def test_cut_locus_rejected(self):
        p = random_point(np.random.default_rng(8))
        q = ss.PreShapePoint(-p.config)
        with pytest.raises(ValueError, match="cut locus"):
            ss.log_map(p, q)


class TestTransport:
    def _triple(self, seed):
        rng = np.random.default_rng(seed)
        while True:
            pa, pb = random_point(rng), random_point(rng)
            if ss.geodesic_distance(pa, pb, clamp=False) < np.pi / 2:
                return pa, pb, ss.log_map(pa, random_point(rng)), rng

    def test_orthogonal_component_unchanged(self):
        pa, pb, _, rng = self._triple(0)
        u = ss.log_map(pa, pb)
        # build z orthogonal to both the base and the geodesic direction
        raw = rng.normal(size=pa.config.shape)
        raw -= (raw * pa.config).sum() * pa.config
        raw -= (raw * u.vec).sum() / (u.norm ** 2) * u.vec
        z = ss.TangentVector(base=pa, vec=raw)
        out = ss.transport_closed_form(z, pb)
        np.testing.assert_allclose(out.vec, z.vec, atol=1e-10)

    def test_along_geodesic_component(self):
        pa, pb, _, _ = self._triple(1)
        u = ss.log_map(pa, pb)
        out = ss.transport_closed_form(u, pb)
        np.testing.assert_allclose(out.vec, -ss.log_map(pb, pa).vec, atol=1e-10)

    def test_norm_preserved(self):
        pa, pb, z, _ = self._triple(2)
        out = ss.transport_closed_form(z, pb)
        assert out.norm == pytest.approx(z.norm, abs=1e-10)

    def test_coincident_rejected(self):
        pa, _, z, _ = self._triple(3)
        with pytest.raises(ValueError, match="distinct"):
            ss.transport_closed_form(z, pa)

    def test_pole_ladder_identity_at_same_point(self):
        pa, _, z, _ = self._triple(4)
        out = ss.pole_ladder_transport(z, pa, rungs=5)
        np.testing.assert_allclose(out.vec, z.vec, atol=1e-12)

    def test_pole_ladder_matches_closed_form(self):
        count = 0
        for seed in range(100):
            pa, pb, z, _ = self._triple(seed)
            oracle = ss.transport_closed_form(z, pb)
            ladder = ss.pole_ladder_transport(z, pb, rungs=20)
            rel = np.linalg.norm(ladder.vec - oracle.vec) / oracle.norm
            assert rel < 1e-3
            count += 1
        assert count == 100

    def test_pole_ladder_linear_in_vector(self):
        pa, pb, z, _ = self._triple(5)
        double = ss.TangentVector(base=pa, vec=2.0 * z.vec)
        one = ss.pole_ladder_transport(z, pb, rungs=10)
        two = ss.pole_ladder_transport(double, pb, rungs=10)
        np.testing.assert_allclose(two.vec, 2.0 * one.vec, atol=1e-9)

    def test_pole_ladder_rejects_bad_rungs(self):
        pa, pb, z, _ = self._triple(6)
        with pytest.raises(ValueError, match="rungs"):
            ss.pole_ladder_transport(z, pb, rungs=0)


class TestRotationAngle:
    def _rot(self, angles):
        return ss.RotationMatrix3(rotation_matrices_from_angles(np.asarray(angles)))

    def test_identical_rotations(self):
        r = self._rot([0.3, -0.2, 0.9])
        assert ss.rotation_angle(r, r) <= 5e-4

    def test_z_half_radian(self):
        r1 = self._rot([0.4, 0.1, -0.3])
        rz = rotation_matrices_from_angles(np.array([0.0, 0.0, 0.5]))
        r2 = ss.RotationMatrix3(r1.entries @ rz)
        assert ss.rotation_angle(r1, r2) == pytest.approx(0.5, abs=1e-9)

    def test_half_turn(self):
        r1 = self._rot([0.0, 0.0, 0.0])
        rz = rotation_matrices_from_angles(np.array([0.0, 0.0, np.pi]))
        r2 = ss.RotationMatrix3(r1.entries @ rz)
        assert ss.rotation_angle(r1, r2) == pytest.approx(np.pi, abs=5e-4)

    def test_symmetry(self):
        r1, r2 = self._rot([0.1, 0.5, -0.2]), self._rot([-0.7, 0.2, 0.4])
        assert ss.rotation_angle(r1, r2) == pytest.approx(
            ss.rotation_angle(r2, r1), abs=1e-12)

    def test_non_orthogonal_rejected(self):
        with pytest.raises(ValueError, match="orthogonal"):
            ss.RotationMatrix3(np.diag([2.0, 1.0, 1.0]))
