import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortexlab.errors import ValidationError
from vortexlab.fields import (Ball, FieldConfiguration, Grid2, GridN, Interior, Perturbation,
                              bogomolny_residual, coulomb_residual, covariant_gradient, curvature,
                              energy, euler_lagrange_residual, gauge_transform, grid_from_description,
                              inner_product, integrate, laplacian)
from vortexlab.radial import sample_vortex


def smooth_gamma(grid, a=0.7, b=-0.4, c=0.3):
    X, Y = grid.mesh()[-2:]
    return a * np.sin(0.5 * X + b * Y) + c * np.cos(0.3 * X * Y / grid.half_width)


# ------------------------------------------------------------------ grids

def test_grid_rounding_contract():
    g = Grid2.from_spacing(1.0, 0.3)
    assert g.node_count == 8
    assert g.spacing * (g.node_count - 1) == pytest.approx(2.0, rel=1e-15)
    assert Grid2.from_count(2.0, 5).spacing == 1.0


@pytest.mark.parametrize("args", [(1.0, 0.0), (-1.0, 0.1), (1.0, 5.0)])
def test_grid_rejects_bad_parameters(args):
    with pytest.raises(ValidationError):
        Grid2.from_spacing(*args)


def test_grid_rejects_inconsistent_spacing():
    with pytest.raises(ValidationError):
        Grid2(1.0, 0.3, 8)


def test_gridn_layout_and_description():
    g = GridN.create(2, 1.0, 0.5, Grid2.from_spacing(2.0, 0.5))
    assert g.ndim == 4
    assert g.shape == (5, 5, 9, 9)
    assert g.weights().sum() == pytest.approx(2.0 ** 2 * 4.0 ** 2)
    assert grid_from_description(g.describe()) == g


def test_configuration_rejects_nonfinite_and_bad_layout():
    g = Grid2.from_count(1.0, 5)
    u = np.ones(g.shape, complex)
    u[2, 3] = np.nan
    with pytest.raises(ValidationError, match=r"\(2, 3\)"):
        FieldConfiguration(u, np.zeros((2,) + g.shape), 1.0, g)
    with pytest.raises(ValidationError):
        FieldConfiguration(np.ones((4, 4)), np.zeros((2,) + g.shape), 1.0, g)
    with pytest.raises(ValidationError):
        FieldConfiguration(np.ones(g.shape), np.zeros((2,) + g.shape), 0.0, g)


def test_configuration_arrays_are_read_only():
    c = FieldConfiguration.vacuum(Grid2.from_count(1.0, 5))
    with pytest.raises(ValueError):
        c.u[0, 0] = 2.0


def test_perturbation_layout_check():
    c = FieldConfiguration.vacuum(Grid2.from_count(1.0, 5))
    p = Perturbation(np.zeros((4, 4)), np.zeros((2, 4, 4)))
    with pytest.raises(ValidationError):
        p.check_layout(c)


def test_empty_region_is_an_error():
    g = Grid2.from_count(1.0, 5)
    with pytest.raises(ValidationError):
        energy(FieldConfiguration.vacuum(g), np.zeros(g.shape, bool))


def test_ball_coverage_integrates_area_to_second_order():
    errs = []
    for h in (0.1, 0.05):
        g = Grid2.from_spacing(2.0, h)
        errs.append(abs(integrate(np.ones(g.shape), g, Ball((0.0, 0.0), 1.3)) - math.pi * 1.69))
    assert errs[1] < errs[0] / 2.5


# ------------------------------------------------------------ derivatives

def test_covariant_gradient_trivial_cases():
    g = Grid2.from_count(1.0, 9)
    assert np.all(covariant_gradient(FieldConfiguration.vacuum(g)) == 0)
    A = np.zeros((2,) + g.shape)
    A[0] = 0.7
    Du = covariant_gradient(FieldConfiguration(np.ones(g.shape), A, 1.0, g))
    assert np.allclose(Du[0], -0.7j) and np.allclose(Du[1], 0)


def test_covariant_gradient_matches_radial_formula(profile):
    errs = []
    for h in (0.1, 0.05):
        g = Grid2.from_spacing(6.0, h)
        c = sample_vortex(profile, g)
        X, Y = g.mesh()
        r = np.hypot(X, Y)
        ring = (r >= 2) & (r <= 5)
        exact = np.sqrt(profile.f_prime_at(r) ** 2 + ((1 - profile.a_at(r)) * profile.f_at(r) / np.maximum(r, 1e-9)) ** 2)
        got = np.sqrt(np.sum(np.abs(covariant_gradient(c)) ** 2, axis=0))
        errs.append(np.abs(got - exact)[ring].max())
    assert errs[1] < errs[0] / 3.5


def test_curvature_of_exact_form_vanishes():
    g = Grid2.from_spacing(3.0, 0.1)
    gamma = smooth_gamma(g)
    c = gauge_transform(FieldConfiguration.vacuum(g), gamma)
    F = curvature(c)
    assert np.abs(F[Interior(2).mask(g)]).max() < 1e-2


def test_vortex_flux_is_quantised(profile):
    g = Grid2.from_spacing(12.0, 0.1)
    F = curvature(sample_vortex(profile, g))
    flux = integrate(F, g, Ball((0.0, 0.0), 11.0))
    assert flux == pytest.approx(2 * math.pi * profile.a_at(11.0), rel=2e-3)


# ----------------------------------------------------------------- energy

def test_vacuum_energy_is_zero():
    e = energy(FieldConfiguration.vacuum(Grid2.from_count(2.0, 11), 0.3))
    assert e.total == 0.0


def test_vortex_energy_is_two_pi(profile):
    g = Grid2.from_spacing(20.0, 0.1)
    e = energy(sample_vortex(profile, g), Ball((0.0, 0.0), 20.0))
    assert e.total == pytest.approx(2 * math.pi, rel=5e-3)
    # equipartition of the self-dual solution: curvature and potential parts agree
    assert e.curvature == pytest.approx(e.potential, rel=1e-2)


def test_rescaled_vortex_energy_is_scale_invariant(profile):
    e1 = energy(sample_vortex(profile, Grid2.from_spacing(20.0, 0.1)), Ball((0.0, 0.0), 20.0)).total
    e2 = energy(sample_vortex(profile, Grid2.from_spacing(2.0, 0.01), epsilon=0.1), Ball((0.0, 0.0), 2.0)).total
    assert e2 == pytest.approx(e1, rel=1e-6)


def c2_norm(gamma, h):
    gx, gy = np.gradient(gamma, h, h)
    second = [np.gradient(gx, h, axis=0), np.gradient(gx, h, axis=1), np.gradient(gy, h, axis=1)]
    return np.abs(gamma).max() + np.hypot(gx, gy).max() + max(np.abs(s).max() for s in second)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-2, 2), b=st.floats(-1, 1), c=st.floats(-1, 1))
def test_energy_is_gauge_invariant(profile, a, b, c):
    g = Grid2.from_spacing(6.0, 0.1)
    cfg = sample_vortex(profile, g)
    gamma = smooth_gamma(g, a, b, c)
    region = Ball((0.0, 0.0), 5.0)
    e0 = energy(cfg, region).total
    e1 = energy(gauge_transform(cfg, gamma), region).total
    assert abs(e1 - e0) <= 1.0 * g.spacing ** 2 * (1 + c2_norm(gamma, g.spacing))


def test_gauge_defect_is_second_order(profile):
    defects = []
    for h in (0.1, 0.05):
        g = Grid2.from_spacing(6.0, h)
        cfg = sample_vortex(profile, g)
        region = Ball((0.0, 0.0), 5.0)
        defects.append(abs(energy(gauge_transform(cfg, smooth_gamma(g, 2, 1, 1)), region).total
                           - energy(cfg, region).total))
    assert defects[1] < defects[0] / 3.5


def test_gauge_transform_trivial_cases(profile):
    g = Grid2.from_spacing(3.0, 0.2)
    cfg = sample_vortex(profile, g)
    same = gauge_transform(cfg, np.zeros(g.shape))
    assert np.array_equal(same.u, cfg.u) and np.array_equal(same.A, cfg.A)
    rot = gauge_transform(cfg, np.full(g.shape, 0.4))
    assert np.allclose(rot.u, cfg.u * np.exp(0.4j)) and np.array_equal(rot.A, cfg.A)
    with pytest.raises(ValidationError):
        gauge_transform(cfg, np.zeros((3, 3)))


# -------------------------------------------------------------- residuals

def test_euler_lagrange_vacuum_is_exactly_zero():
    S = euler_lagrange_residual(FieldConfiguration.vacuum(Grid2.from_count(1.0, 9), 0.5))
    assert S.sup_norm() == 0.0


def test_euler_lagrange_requires_stencil():
    with pytest.raises(ValidationError):
        euler_lagrange_residual(FieldConfiguration.vacuum(Grid2.from_count(1.0, 3)))


def test_euler_lagrange_vortex_is_second_order(profile):
    res = []
    for h in (0.2, 0.1):
        g = Grid2.from_spacing(8.0, h)
        res.append(euler_lagrange_residual(sample_vortex(profile, g)).sup_norm(Interior(2).mask(g)))
    assert res[1] < res[0] / 3.5


def test_euler_lagrange_converges_on_smooth_non_solution():
    # u = (x + i y^2) e^{-r^2/2}, A = (y, -x^2/2) e^{-r^2/2}; the continuum value at
    # the origin follows by hand: S_u(0) = -eps^2 Lap u - u/2 = -eps^2 * 2i, S_A(0) = 0
    eps = 0.8
    vals = []
    for h in (0.1, 0.05, 0.025):
        g = Grid2.from_spacing(3.0, h)
        X, Y = g.mesh()
        w = np.exp(-(X ** 2 + Y ** 2) / 2)
        cfg = FieldConfiguration((X + 1j * Y ** 2) * w, np.stack([Y * w, -0.5 * X ** 2 * w]), eps, g)
        i0 = g.node_count // 2
        vals.append(euler_lagrange_residual(cfg).phi[i0, i0])
    exact = -eps ** 2 * 2j
    e = [abs(v - exact) for v in vals]
    assert e[2] < e[1] < e[0]
    assert math.log2(e[1] / e[2]) > 1.8


def test_bogomolny_residual_cases(profile):
    g = Grid2.from_count(2.0, 9)
    zero = FieldConfiguration(np.zeros(g.shape), np.zeros((2,) + g.shape), 1.0, g)
    b1, b2 = bogomolny_residual(zero)
    assert np.allclose(b1, -0.5) and np.all(b2 == 0)
    res = []
    for h in (0.2, 0.1):
        g = Grid2.from_spacing(8.0, h)
        b1, b2 = bogomolny_residual(sample_vortex(profile, g))
        res.append(max(np.abs(b1).max(), np.abs(b2).max()))
    assert res[1] < res[0] / 3.5
    with pytest.raises(ValidationError):
        bogomolny_residual(FieldConfiguration.vacuum(GridN.create(1, 1.0, 0.5, Grid2.from_count(1.0, 5))))


def test_coulomb_residual_cases(profile):
    g = Grid2.from_spacing(4.0, 0.05)
    assert np.all(coulomb_residual(FieldConfiguration.vacuum(g)) == 0)
    inner = Interior(2).mask(g)
    assert np.abs(coulomb_residual(sample_vortex(profile, g))[inner]).max() < 5 * g.spacing ** 2
    X, Y = g.mesh()
    gamma = X ** 2 * Y + np.sin(Y)
    c = gauge_transform(FieldConfiguration.vacuum(g), gamma)
    exact = -(2 * Y - np.sin(Y))
    assert np.abs(coulomb_residual(c) - exact)[inner].max() < 5 * g.spacing ** 2


def test_inner_product_weights_connection_by_epsilon_squared():
    g = Grid2.from_count(1.0, 5)
    p = Perturbation(np.ones(g.shape), np.zeros((2,) + g.shape))
    q = Perturbation(np.zeros(g.shape), np.ones((2,) + g.shape))
    assert inner_product(p, p, 0.5, g) == pytest.approx(4.0)
    assert inner_product(q, q, 0.5, g) == pytest.approx(0.25 * 2 * 4.0)
    assert inner_product(p, q, 0.5, g) == 0.0


def test_laplacian_exact_on_quadratics():
    g = Grid2.from_count(1.0, 7)
    X, Y = g.mesh()
    assert np.allclose(laplacian(X ** 2 + 3 * Y ** 2, g.spacings), 8.0)
