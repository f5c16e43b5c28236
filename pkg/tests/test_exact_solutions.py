"""Closed-form benchmark solutions audited by finite differences and
independent quadrature oracles."""

import numpy as np
import pytest

from dpgelast.material import MaterialParams, stiffness_apply_array
from dpgelast.exact_solutions import (
    smooth_solution_2d,
    singular_solution,
    solve_singularity_exponent,
    _exponent_residual,
)


def fd_gradient(f, pts, h=1e-6):
    out = np.zeros(pts.shape[:-1] + (2, 2))
    for j in range(2):
        dp = np.zeros(2)
        dp[j] = h
        out[..., :, j] = (f(pts + dp) - f(pts - dp)) / (2 * h)
    return out


def fd_divergence(stress, pts, h=1e-6):
    out = np.zeros(pts.shape[:-1] + (2,))
    for j in range(2):
        dp = np.zeros(2)
        dp[j] = h
        out += (stress(pts + dp)[..., :, j] - stress(pts - dp)[..., :, j]) / (2 * h)
    return out


@pytest.fixture(scope="module")
def smooth():
    return smooth_solution_2d()


@pytest.fixture(scope="module")
def singular():
    return singular_solution()


def interior_points(rng, n, box):
    (x0, x1), (y0, y1) = box
    return np.column_stack(
        [rng.uniform(x0, x1, size=n), rng.uniform(y0, y1, size=n)]
    )


class TestSmooth:
    def test_gradient_consistent(self, smooth):
        rng = np.random.default_rng(0)
        pts = interior_points(rng, 200, ((0.05, 0.95), (0.05, 0.95)))
        fd = fd_gradient(smooth.displacement, pts)
        assert np.abs(fd - smooth.displacement_gradient(pts)).max() < 1e-8

    def test_stress_is_stiffness_of_strain(self, smooth):
        rng = np.random.default_rng(1)
        pts = interior_points(rng, 200, ((0.05, 0.95), (0.05, 0.95)))
        g = smooth.displacement_gradient(pts)
        assert np.abs(smooth.stress(pts) - stiffness_apply_array(g, smooth.material)).max() < 1e-13

    def test_momentum_balance(self, smooth):
        # div sigma + f = 0 pointwise, stress divergence by finite differences
        rng = np.random.default_rng(2)
        pts = interior_points(rng, 100, ((0.1, 0.9), (0.1, 0.9)))
        resid = fd_divergence(smooth.stress, pts) + smooth.body_force(pts)
        assert np.abs(resid).max() < 1e-7

    def test_boundary_displacement_vanishes(self, smooth):
        t = np.linspace(0, 1, 33)
        for pts in (
            np.column_stack([t, np.zeros_like(t)]),
            np.column_stack([t, np.ones_like(t)]),
            np.column_stack([np.zeros_like(t), t]),
            np.column_stack([np.ones_like(t), t]),
        ):
            assert np.abs(smooth.displacement(pts)).max() < 1e-14


class TestSingularityExponent:
    def test_value_near_steel_poisson(self):
        params = solve_singularity_exponent(0.304)
        assert abs(params.a - 0.5946) < 5e-4

    def test_residual_at_root(self):
        nu = 0.304
        params = solve_singularity_exponent(nu)
        assert abs(_exponent_residual(params.a, nu)) <= 1e-12

    def test_exponent_monotone_range(self):
        # exponents for physical Poisson ratios stay in the expected window
        for nu in (0.2, 0.25, 0.3, 0.35, 0.4):
            params = solve_singularity_exponent(nu)
            assert 0.5 < params.a < 0.8
            assert abs(_exponent_residual(params.a, nu)) <= 1e-12


class TestSingular:
    def test_material_is_steel_like(self, singular):
        assert abs(singular.material.nu - 0.304) < 5e-4

    def test_displacement_vanishes_on_reentrant_rays(self, singular):
        t = np.linspace(1e-3, 1.0, 50)
        ray1 = np.column_stack([np.zeros_like(t), t])  # {0} x (0, 1]
        ray2 = np.column_stack([-t, np.zeros_like(t)])  # [-1, 0) x {0}
        assert np.abs(singular.displacement(ray1)).max() < 1e-13
        assert np.abs(singular.displacement(ray2)).max() < 1e-13

    def test_gradient_consistent(self, singular):
        rng = np.random.default_rng(3)
        pts = interior_points(rng, 150, ((0.2, 0.9), (0.2, 0.9)))
        fd = fd_gradient(singular.displacement, pts, h=1e-7)
        g = singular.displacement_gradient(pts)
        assert np.abs(fd - g).max() / np.abs(g).max() < 1e-6

    def test_stress_matches_strain(self, singular):
        rng = np.random.default_rng(4)
        pts = np.concatenate(
            [
                interior_points(rng, 100, ((0.1, 0.95), (0.1, 0.95))),
                interior_points(rng, 100, ((-0.95, -0.1), (0.1, 0.95))),
                interior_points(rng, 100, ((0.1, 0.95), (-0.95, -0.1))),
            ]
        )
        g = singular.displacement_gradient(pts)
        s = stiffness_apply_array(g, singular.material)
        assert np.abs(singular.stress(pts) - s).max() / np.abs(s).max() < 1e-12

    def test_divergence_free(self, singular):
        rng = np.random.default_rng(5)
        pts = interior_points(rng, 100, ((0.2, 0.9), (0.2, 0.9)))
        resid = fd_divergence(singular.stress, pts, h=1e-7)
        assert np.abs(resid).max() < 1e-5

    def test_stress_symmetric(self, singular):
        rng = np.random.default_rng(6)
        pts = interior_points(rng, 100, ((0.05, 0.95), (0.05, 0.95)))
        s = singular.stress(pts)
        assert np.abs(s - np.swapaxes(s, -1, -2)).max() < 1e-12

    def test_stress_scaling_exponent(self, singular):
        # |sigma| ~ r^(a-1) along a fixed direction into the domain
        a = singular.params.a
        d = np.array([np.cos(0.7), np.sin(0.7)])
        r = np.array([1e-3, 1e-2, 1e-1])
        mags = np.linalg.norm(
            singular.stress(r[:, None] * d[None, :]).reshape(3, -1), axis=1
        )
        rates = np.log(mags[1:] / mags[:-1]) / np.log(r[1:] / r[:-1])
        assert np.abs(rates - (a - 1)).max() < 1e-10

    def test_body_force_zero(self, singular):
        pts = np.array([[0.3, 0.4], [-0.2, 0.5]])
        assert np.abs(singular.body_force(pts)).max() == 0.0

    def test_traction_contract(self, singular):
        pts = np.array([[0.5, 0.25], [0.5, 0.75]])
        n = np.array([1.0, 0.0])
        tr = singular.traction(pts, n)
        sig = singular.stress(pts)
        assert np.allclose(tr, np.einsum("qij,j->qi", sig, n), atol=1e-14)
