import math

import numpy as np
import pytest

from vortexlab.errors import NumericalError, ValidationError
from vortexlab.fields import Grid2, coulomb_residual, Interior
from vortexlab.radial import (RadialProfile, decay_fit, first_order_residual, sample_vortex,
                              second_order_residual, solve_bogomolny, winding_number)

GOLDEN_SLOPE = 0.6032878545848566


def test_profile_vanishes_at_origin(profile):
    assert profile.f[0] == 0.0 and profile.a[0] == 0.0
    assert profile.shoot_slope == pytest.approx(GOLDEN_SLOPE, abs=1e-7)


def test_profile_is_enclosed_and_monotone(profile):
    f, a = profile.f[1:], profile.a[1:]
    assert np.all((f > 0) & (f <= 1)) and np.all((a > 0) & (a <= 1))
    assert np.all(np.diff(profile.f) >= 0) and np.all(np.diff(profile.a) >= 0)
    # strictness holds wherever the tail 1 - f is above double-precision resolution
    resolved = 1 - profile.f > 1e-13
    assert resolved.sum() > 0.7 * profile.r.size
    assert np.all(np.diff(profile.f[resolved]) > 0)
    assert np.all(profile.f[profile.r <= 20] < 1) and np.all(profile.a[profile.r <= 20] < 1)


def test_boundary_behaviour_at_r_max_20():
    p = solve_bogomolny(r_max=20.0, tol=1e-7)
    assert 1 - p.f[-1] <= 1e-7 and 1 - p.a[-1] <= 1e-7


def test_shoot_slope_is_reproducible_under_refinement():
    coarse = solve_bogomolny(r_max=20.0, tol=1e-6).shoot_slope
    fine = solve_bogomolny(r_max=20.0, tol=1e-7).shoot_slope
    assert abs(coarse - fine) <= 10 * 1e-6
    assert fine == pytest.approx(GOLDEN_SLOPE, abs=1e-6)


def test_series_launch_radius_does_not_matter():
    p1 = solve_bogomolny(r_max=20.0, tol=1e-8, r_start=1e-4)
    p2 = solve_bogomolny(r_max=20.0, tol=1e-8, r_start=1e-3)
    assert abs(p1.shoot_slope - p2.shoot_slope) < 1e-7
    assert np.abs(p1.f - p2.f).max() < 1e-6


@pytest.mark.parametrize("r_max, tol", [(5.0, 1e-8), (20.0, 0.0), (20.0, 1e-3)])
def test_solver_rejects_bad_parameters(r_max, tol):
    with pytest.raises(ValidationError):
        solve_bogomolny(r_max=r_max, tol=tol)


def test_first_order_system_is_satisfied(profile):
    res_a, res_f = first_order_residual(profile)
    assert max(res_a, res_f) < 1e-6


def test_second_order_residual_of_converged_profile(profile):
    dr = profile.dr
    assert max(second_order_residual(profile)) <= max(10 * profile.tol, 5 * dr ** 2)


def test_second_order_residual_detects_perturbation(profile):
    r = profile.r
    bumped = RadialProfile(r, profile.f + 0.01 * np.sin(r), profile.a,
                           profile.f_prime + 0.01 * np.cos(r), profile.a_prime,
                           profile.shoot_slope, profile.tol, profile.splice_radius)
    assert second_order_residual(bumped)[0] >= 1e-3


def test_vacuum_profile_residuals_vanish():
    r = np.linspace(0.0, 10.0, 101)
    one, zero = np.ones_like(r), np.zeros_like(r)
    vac = RadialProfile(r, one, one, zero, zero, 0.0, math.nan, math.nan)
    assert second_order_residual(vac) == (0.0, 0.0)


def test_decay_fit_on_exact_exponential():
    r = np.linspace(0.0, 30.0, 3001)
    e = np.exp(-r)
    p = RadialProfile(r, 1 - e, 1 - 0.5 * e, e, 0.5 * e, 0.0, math.nan, math.nan)
    fit = decay_fit(p, 8.0, 16.0)
    assert fit.rate_f == pytest.approx(1.0, abs=1e-9)
    assert fit.rate_a == pytest.approx(1.0, abs=1e-9)


def test_decay_rates_of_converged_profile(profile):
    base = decay_fit(profile, 8.0, 16.0)
    assert base.rate_f >= 0.8 and base.rate_a >= 0.8
    shifted = decay_fit(profile, 10.0, 18.0)
    assert abs(shifted.rate_f - base.rate_f) <= 0.1
    assert abs(shifted.rate_a - base.rate_a) <= 0.1


def test_decay_fit_rejects_bad_windows(profile):
    with pytest.raises(ValidationError):
        decay_fit(profile, 3.0, 10.0)
    with pytest.raises(ValidationError):
        decay_fit(profile, 8.0, 8.05)
    r = profile.r
    over = RadialProfile(r, np.minimum(profile.f * 1.01, 1.5), profile.a, profile.f_prime,
                         profile.a_prime, 0.6, math.nan, math.nan)
    with pytest.raises(NumericalError):
        decay_fit(over, 8.0, 16.0)


def test_sampled_vortex_center_and_winding(profile):
    g = Grid2.from_spacing(3.0, 0.1)
    c = sample_vortex(profile, g)
    i0 = g.node_count // 2
    assert c.u[i0, i0] == 0
    theta = np.linspace(0, 2 * math.pi, 200, endpoint=False)
    loop = profile.f_at(np.ones_like(theta)) * np.exp(1j * theta)
    assert winding_number(c.u, loop) == 1
    # same check from lattice samples on the square of half-side 1
    k = int(round(1.0 / g.spacing))
    ring = np.concatenate([c.u[i0 - k:i0 + k, i0 - k], c.u[i0 + k, i0 - k:i0 + k],
                           c.u[i0 + k:i0 - k:-1, i0 + k], c.u[i0 - k, i0 + k:i0 - k:-1]])
    assert winding_number(c.u, ring) == 1


def test_sampled_vortex_is_in_coulomb_gauge(profile):
    errs = []
    for h in (0.1, 0.05):
        g = Grid2.from_spacing(4.0, h)
        errs.append(np.abs(coulomb_residual(sample_vortex(profile, g))[Interior(2).mask(g)]).max())
    assert errs[0] <= 5 * 0.1 ** 2
    assert errs[1] <= errs[0] / 3


def test_sampling_rejects_insufficient_coverage():
    p = solve_bogomolny(r_max=10.0, tol=1e-6)
    with pytest.raises(ValidationError):
        sample_vortex(p, Grid2.from_spacing(2.0, 0.1), epsilon=0.1)


def test_rescaling_relates_samples_exactly(profile):
    g1 = Grid2.from_spacing(2.0, 0.1)
    g2 = Grid2.from_spacing(4.0, 0.2)
    c1 = sample_vortex(profile, g1, epsilon=0.5)
    c2 = sample_vortex(profile, g2, epsilon=1.0)
    assert np.allclose(np.abs(c1.u), np.abs(c2.u), atol=1e-14)
    # the connection is a one-form: pulling back by x -> 2x halves the components
    assert np.allclose(c1.A, 2 * c2.A, atol=1e-12)


def test_sampled_values_stay_in_unit_disc(profile):
    c = sample_vortex(profile, Grid2.from_spacing(5.0, 0.07), center=(0.3, -0.2))
    assert np.abs(c.u).max() < 1
