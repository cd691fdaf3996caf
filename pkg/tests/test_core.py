"""Ray-Gaussian kernel: closed forms against covariance-form oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsmesh import core
from gsmesh.scene import quat_to_rotmat

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def random_setup(rng, scale_range=(-1.5, 0.5)):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    center = rng.normal(size=3)
    scale = np.exp(rng.uniform(*scale_range, size=3))
    o = center + rng.normal(size=3) * 4.0
    r = center - o + rng.normal(size=3) * 0.3
    return center, scale, q, o, r


class TestToLocal:
    def test_identity_gaussian(self):
        rl = core.to_local(np.zeros(3), np.ones(3), IDENTITY_Q,
                           [0, 0, -5], [0, 0, 1])
        np.testing.assert_allclose(rl.o_g, [0, 0, -5])
        np.testing.assert_allclose(rl.r_g, [0, 0, 1])

    def test_diagonal_scaling(self):
        rl = core.to_local(np.zeros(3), [2.0, 1.0, 1.0], IDENTITY_Q,
                           [2, 0, 0], [0, 0, 1])
        np.testing.assert_allclose(rl.o_g, [1, 0, 0])

    def test_agrees_with_covariance_form_along_ray(self, rng):
        """exp(-0.5 |o_g + t r_g|^2) equals the direct quadratic-form density."""
        for _ in range(50):
            center, scale, q, o, r = random_setup(rng)
            rl = core.to_local(center, scale, q, o, r)
            for t in rng.uniform(0.0, 8.0, size=5):
                local = rl.o_g + t * rl.r_g
                value = np.exp(-0.5 * local @ local)
                oracle = core.eval_gaussian(center, scale, q, o + t * np.asarray(r))
                assert abs(value - oracle) < 1e-6

    def test_tiny_scale_clamped(self):
        rl = core.to_local(np.zeros(3), [1e-20, 1.0, 1.0], IDENTITY_Q,
                           [1, 0, -5], [0, 0, 1])
        assert np.isfinite(rl.o_g).all() and np.isfinite(rl.A)


class TestIntersect:
    def test_through_center(self):
        rl = core.to_local(np.zeros(3), np.ones(3), IDENTITY_Q,
                           [0, 0, -5], [0, 0, 1])
        t_star, peak = core.intersect(rl)
        assert t_star == pytest.approx(5.0)
        assert peak == pytest.approx(1.0)

    def test_unit_closest_approach(self):
        rl = core.to_local(np.zeros(3), np.ones(3), IDENTITY_Q,
                           [1, 0, -5], [0, 0, 1])
        t_star, peak = core.intersect(rl)
        assert t_star == pytest.approx(5.0)
        assert peak == pytest.approx(np.exp(-0.5), abs=1e-12)

    def test_dense_argmax_oracle(self, rng):
        """t* matches the argmax of densely sampled values within one step."""
        ts = np.linspace(0.0, 20.0, 20001)
        for _ in range(30):
            center, scale, q, o, r = random_setup(rng, scale_range=(-0.9, 0.5))
            center = center + np.array([0.0, 0.0, 6.0])
            o = center - np.array([0.0, 0.0, 6.0]) + rng.normal(size=3) * 0.5
            r = (center - o) + rng.normal(size=3) * 0.3
            r /= np.linalg.norm(r)
            rl = core.to_local(center, scale, q, o, r)
            t_star, peak = core.intersect(rl)
            dense = np.exp(-0.5 * ((rl.A * ts + 2 * rl.B) * ts + rl.C))
            i = int(np.argmax(dense))
            if 0 < i < len(ts) - 1:     # interior maximum only
                assert abs(t_star - ts[i]) <= 1e-3
                assert abs(peak - dense[i]) <= 1e-6

    def test_stationary_point(self, rng):
        """Central differences of the 1D density vanish at t*."""
        for _ in range(20):
            center, scale, q, o, r = random_setup(rng)
            rl = core.to_local(center, scale, q, o, r)
            t_star, peak = core.intersect(rl)
            h = 1e-4
            g = lambda t: np.exp(-0.5 * ((rl.A * t + 2 * rl.B) * t + rl.C))
            deriv = (g(t_star + h) - g(t_star - h)) / (2 * h)
            assert abs(deriv) < 1e-6 * peak


class TestPlaneNormal:
    def test_isotropic_perpendicular_to_ray(self, rng):
        for _ in range(10):
            r = rng.normal(size=3)
            rl = core.to_local(rng.normal(size=3), np.ones(3), IDENTITY_Q,
                               rng.normal(size=3), r)
            n = core.plane_normal(np.ones(3), IDENTITY_Q, rl, r_world=r)
            np.testing.assert_allclose(n, -r / np.linalg.norm(r), atol=1e-12)

    def test_axis_aligned_elongation(self):
        scale = np.array([1.0, 1.0, 10.0])
        rl = core.to_local(np.zeros(3), scale, IDENTITY_Q, [0, 0, -5], [0, 0, 1])
        n = core.plane_normal(scale, IDENTITY_Q, rl, r_world=[0, 0, 1])
        np.testing.assert_allclose(n, [0, 0, -1], atol=1e-12)

    def test_in_plane_directions_orthogonal(self, rng):
        """World directions R^T S u with u . r_g = 0 lie in the plane."""
        for _ in range(50):
            center, scale, q, o, r = random_setup(rng)
            rl = core.to_local(center, scale, q, o, r)
            n = core.plane_normal(scale, q, rl, r_world=r)
            u = rng.normal(size=3)
            u -= (u @ rl.r_g) / (rl.r_g @ rl.r_g) * rl.r_g
            world = quat_to_rotmat(q) @ (scale * u)
            assert abs(n @ world) < 1e-6 * max(np.linalg.norm(world), 1e-12)

    def test_camera_facing(self, rng):
        for _ in range(20):
            center, scale, q, o, r = random_setup(rng)
            rl = core.to_local(center, scale, q, o, r)
            n = core.plane_normal(scale, q, rl, r_world=r)
            assert n @ np.asarray(r) < 0


class TestContribution:
    def test_through_center(self):
        assert core.contribution(np.zeros(3), np.ones(3), IDENTITY_Q,
                                 [0, 0, -5], [0, 0, 1]) == pytest.approx(1.0)

    def test_behind_camera_culled(self):
        assert core.contribution(np.zeros(3), np.ones(3), IDENTITY_Q,
                                 [0, 0, 5], [0, 0, 1]) == 0.0

    def test_matches_covariance_maximum(self, rng):
        """E equals the max of the covariance-form density along the ray."""
        for _ in range(20):
            center, scale, q, o, r = random_setup(rng)
            e = core.contribution(center, scale, q, o, r, near_clip=0.2)
            if e == 0.0:
                continue
            ts = np.linspace(0.2, 25.0, 20001)
            dense = max(core.eval_gaussian(center, scale, q,
                                           np.asarray(o) + t * np.asarray(r))
                        for t in ts[:: 40])
            assert e >= dense - 1e-9
            rl = core.to_local(center, scale, q, o, r)
            t_star, peak = core.intersect(rl)
            oracle = core.eval_gaussian(center, scale, q,
                                        np.asarray(o) + t_star * np.asarray(r))
            assert abs(e - oracle) < 1e-6


@st.composite
def gaussian_and_ray(draw):
    f = st.floats(-2.0, 2.0, allow_nan=False)
    center = np.array([draw(f), draw(f), draw(f)])
    scale = np.exp(np.array([draw(st.floats(-1.5, 0.7))] * 3)
                   * np.array([1.0, draw(st.floats(0.5, 1.0)), 1.0]))
    q = np.array([draw(st.floats(-1, 1)), draw(st.floats(-1, 1)),
                  draw(st.floats(-1, 1)), draw(st.floats(-1, 1))])
    if np.linalg.norm(q) < 1e-3:
        q = np.array([1.0, 0.0, 0.0, 0.0])
    q = q / np.linalg.norm(q)
    o = np.array([draw(f), draw(f), draw(f)]) + np.array([0.0, 0.0, -6.0])
    r = center - o + np.array([draw(st.floats(-0.3, 0.3)),
                               draw(st.floats(-0.3, 0.3)), 0.0])
    return center, scale, q, o, r


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(case=gaussian_and_ray(), c=st.floats(0.1, 10.0))
    def test_direction_rescale_invariance(self, case, c):
        """Scaling r by c rescales t* by 1/c, leaves peak/E/normal fixed."""
        center, scale, q, o, r = case
        rl1 = core.to_local(center, scale, q, o, r)
        rl2 = core.to_local(center, scale, q, o, c * r)
        t1, p1 = core.intersect(rl1)
        t2, p2 = core.intersect(rl2)
        assert t2 == pytest.approx(t1 / c, rel=1e-9, abs=1e-12)
        assert p2 == pytest.approx(p1, rel=1e-9, abs=1e-12)
        n1 = core.plane_normal(scale, q, rl1, r_world=r)
        n2 = core.plane_normal(scale, q, rl2, r_world=c * r)
        np.testing.assert_allclose(n1, n2, atol=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(case=gaussian_and_ray())
    def test_peak_in_unit_interval(self, case):
        center, scale, q, o, r = case
        t_star, peak = core.intersect(core.to_local(center, scale, q, o, r))
        assert 0.0 < peak <= 1.0

    def test_peak_is_one_iff_through_center(self, rng):
        for _ in range(20):
            center, scale, q, o, _ = random_setup(rng)
            r = center - o
            _, peak = core.intersect(core.to_local(center, scale, q, o, r))
            assert peak == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(case=gaussian_and_ray(), c=st.floats(0.2, 5.0))
    def test_normal_invariant_to_uniform_scale(self, case, c):
        center, scale, q, o, r = case
        n1 = core.plane_normal(scale, q,
                               core.to_local(center, scale, q, o, r), r_world=r)
        n2 = core.plane_normal(scale * c, q,
                               core.to_local(center, scale * c, q, o, r), r_world=r)
        np.testing.assert_allclose(n1, n2, atol=1e-9)
