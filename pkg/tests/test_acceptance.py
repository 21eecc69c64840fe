"""End-to-end acceptance checks; each test records one PASS/FAIL line."""
import math

import numpy as np
import pytest

from vortexlab.fermi import FermiChart, ansatz_residual, build_ansatz, build_cutoff_vortex
from vortexlab.fields import (Ball, FieldConfiguration, Grid2, GridN, Interior, Perturbation,
                              curvature, energy, energy_densities)
from vortexlab.geometry_diagnostics import density_ratio, excess, extract_nodal_set, fit_graph
from vortexlab.linearized import (assemble, decomposition_check, random_smooth_perturbation,
                                  smallest_ritz_values, translational_zero_modes)
from vortexlab.planar_solver import SolveSettings, solve_planar
from vortexlab.radial import decay_fit, first_order_residual, sample_vortex

from conftest import pullback, record


def clamp(p, grid):
    edge = ~Interior(1).mask(grid)
    return Perturbation(np.where(edge, 0, p.phi), np.where(edge, 0, p.omega))


def order(coarse, fine):
    return math.log2(coarse / fine)


def test_criterion_01_energy_quantisation(profile):
    g = Grid2.from_spacing(20.0, 0.1)
    total = energy(sample_vortex(profile, g), Ball((0.0, 0.0), 20.0)).total
    rel = abs(total - 2 * math.pi) / (2 * math.pi)
    record(1, rel <= 5e-3, f"E(B_20) = {total:.6f}, relative deviation from 2 pi {rel:.2e} (<= 5e-3)")


def test_criterion_02_self_dual_identity(profile):
    sups = []
    for h in (0.2, 0.1):
        g = Grid2.from_spacing(8.0, h)
        c = sample_vortex(profile, g)
        F = curvature(c)
        gap = c.epsilon ** 2 * F ** 2 - (1 - np.abs(c.u) ** 2) ** 2 / (4 * c.epsilon ** 2)
        sups.append(float(np.abs(gap[Interior(1).mask(g)]).max()))
    p = order(*sups)
    ok = sups[0] <= 5 * 0.2 ** 2 and sups[1] <= 5 * 0.1 ** 2 and p >= 1.8
    record(2, ok, f"sup gaps {sups[0]:.3e} (h=0.2), {sups[1]:.3e} (h=0.1), order {p:.2f}")


def test_criterion_03_exponential_decay(profile):
    fit = decay_fit(profile, 8.0, 16.0)
    res = max(first_order_residual(profile))
    ok = fit.rate_f >= 0.8 and fit.rate_a >= 0.8 and res <= 1e-8
    record(3, ok, f"rates f {fit.rate_f:.3f}, a {fit.rate_a:.3f}; first-order residual {res:.2e}")


def test_criterion_04_zero_modes(profile):
    """Translation modes and gauge modes against the assembled L, at h = 0.2 and 0.1 (C = 1)."""
    trans, gauge_L, gauge_S = {}, {}, {}
    for h in (0.2, 0.1):
        g = Grid2.from_spacing(8.0, h)
        system = assemble(sample_vortex(profile, g))
        core = Ball((0.0, 0.0), 5.0).mask(g)
        trans[h] = [system.apply_L(clamp(v, g)).sup_norm(core) / v.sup_norm()
                    for v in translational_zero_modes(profile, g)]
        X, Y = g.mesh()
        gamma = np.exp(-(X ** 2 + (Y - 0.5) ** 2) / 2) * Interior(1).mask(g)
        mode = system.apply_theta(gamma)
        inner = Interior(2).mask(g)
        gauge_L[h] = system.apply_L(mode).sup_norm(inner) / mode.sup_norm()
        gauge_S[h] = system.apply_decomposed(mode).sup_norm(inner) / mode.sup_norm()
    t_ok = all(trans[h][j] <= h ** 2 for h in trans for j in range(2)) and \
        all(order(trans[0.2][j], trans[0.1][j]) >= 1.8 for j in range(2))
    g_ok = all(gauge_L[h] <= h ** 2 for h in gauge_L) and order(gauge_L[0.2], gauge_L[0.1]) >= 1.8
    detail = (f"translation |Lv|/|v| = {trans[0.2][0]:.2e}, {trans[0.1][0]:.2e} "
              f"(order {order(trans[0.2][0], trans[0.1][0]):.2f}); "
              f"gauge |L theta|/|theta| = {gauge_L[0.2]:.3f}, {gauge_L[0.1]:.3f}; "
              f"gauge |S' theta|/|theta| = {gauge_S[0.2]:.2e}, {gauge_S[0.1]:.2e}")
    record(4, t_ok and g_ok, detail)


def test_criterion_05_decomposition(profile):
    rng = np.random.default_rng(2024)
    delta = 1e-4
    worst = {}
    for h in (0.2, 0.1):
        system = assemble(sample_vortex(profile, Grid2.from_spacing(8.0, h)))
        worst[h] = max(decomposition_check(system, random_smooth_perturbation(system.base.grid, rng),
                                           delta)["relative_discrepancy"] for _ in range(20))
    ok = all(worst[h] <= max(5 * h ** 2, 5 * delta ** 2) for h in worst)
    record(5, ok, f"max relative discrepancy over 20 samples: {worst[0.2]:.3e} (h=0.2, bound 0.2), "
                  f"{worst[0.1]:.3e} (h=0.1, bound 0.05)")


def test_criterion_06_cutoff_rate(profile):
    eps = [0.1, 0.05, 0.025]
    sups = [build_cutoff_vortex(e, profile).residual_sup() for e in eps]
    slope = float(np.polyfit(np.log(eps), np.log(sups), 1)[0])
    record(6, slope >= 2.7, f"residual sups {', '.join(f'{s:.2e}' for s in sups)}; log-log slope {slope:.3f}")


def sine_cylinder(epsilon, delta, tangential_spacing):
    extent = delta + 8 * epsilon * abs(math.log(epsilon)) + 0.02
    grid = GridN.create(1, math.pi, tangential_spacing, Grid2.from_spacing(extent, epsilon / 4))
    chart = FermiChart.from_function(1, grid.tangential_coords(), lambda Y: (delta * np.sin(Y), 0 * Y), 0.5)
    return chart, grid


@pytest.mark.slow
def test_criterion_07_projection_law(profile):
    eps = 0.05
    cv = build_cutoff_vortex(eps, profile)
    errors = {}
    for delta in (0.1, 0.05):
        chart, grid = sine_cylinder(eps, delta, 0.2)
        res = ansatz_residual(build_ansatz(chart, eps, cv, grid), chart, eps, cv)
        inner = slice(2, -2)
        c1 = res.normalized()[0][inner]
        target = -chart.laplacian_h()[0][inner]
        errors[delta] = float(np.linalg.norm(c1 - target) / np.linalg.norm(target))
    ok = errors[0.1] <= 0.2 and errors[0.05] < errors[0.1]
    record(7, ok, f"relative L2 error {errors[0.1]:.4f} (delta 0.1), {errors[0.05]:.4f} (delta 0.05)")


@pytest.mark.slow
def test_criterion_08_excess_and_density(profile):
    small = pullback(profile, 1.0, 4.0, 0.5, 8.0, 0.2)
    e1 = excess(small, (0.0, 0.0, 0.0), 3.5, [[1.0, 0.0, 0.0]]).excess
    del small
    big = pullback(profile, 1.0, 20.0, 0.25, 20.0, 0.2)
    dens = density_ratio(big, 20.0)["per_volume"]
    del big
    ok = e1 <= 1e-12 and abs(dens - 2 * math.pi) <= 0.1
    record(8, ok, f"E1(P0) = {e1:.1e}; energy/|B_20^1| - 2 pi = {dens - 2 * math.pi:+.4f} (band 0.1)")


@pytest.mark.slow
def test_criterion_09_nodal_pipeline(profile):
    eps, delta = 0.05, 0.1
    cv = build_cutoff_vortex(eps, profile)
    chart, grid = sine_cylinder(eps, delta, 0.1)
    ans = build_ansatz(chart, eps, cv, grid)
    y = grid.tangential_coords()
    g = fit_graph(extract_nodal_set(ans), y)
    sup_err = float(np.abs(g.values[0] - delta * np.sin(y)).max())
    lap = -delta * np.sin(y)
    curv_err = float(np.abs(g.mean_curvature[0] - lap)[1:-1].max() / np.abs(lap).max())
    lip_err = abs(g.lipschitz - delta) / delta
    bound = eps ** 2 + grid.normal.spacing ** 2
    ok = sup_err <= bound and lip_err <= 0.1 and curv_err <= 0.1
    record(9, ok, f"sup error {sup_err:.2e} (<= {bound:.2e}); Lipschitz {g.lipschitz:.5f}; "
                  f"mean-curvature error {100 * curv_err:.1f}% of max |Lap h|")


@pytest.mark.slow
def test_criterion_10_planar_solver(profile):
    g = Grid2.from_count(12.0, 256)
    exact = sample_vortex(profile, g)
    p = random_smooth_perturbation(g, np.random.default_rng(10))
    init = exact.perturbed(p, 0.05)
    out, report = solve_planar(1.0, g, init, SolveSettings(tolerance=1e-7), profile=profile)
    bulk = Ball((0.0, 0.0), 10.0).mask(g)
    errs = {
        "|u|": np.abs(np.abs(out.u) - np.abs(exact.u))[bulk].max(),
        "F12": np.abs(curvature(out) - curvature(exact))[bulk].max(),
        "energy density": np.abs(sum(energy_densities(out)) - sum(energy_densities(exact)))[bulk].max(),
    }
    bound = 10 * g.spacing ** 2
    ok = report.converged and max(errs.values()) <= bound
    record(10, ok, f"converged={report.converged} in {report.iterations} iterations; "
                   + ", ".join(f"{k} {v:.2e}" for k, v in errs.items()) + f" (bound {bound:.2e})")


@pytest.mark.slow
def test_criterion_11_stability(profile):
    lines, ok = [], True
    for h in (0.4, 0.2):
        g = Grid2.from_spacing(8.0, h)
        system = assemble(sample_vortex(profile, g))
        modes = [clamp(v, g) for v in translational_zero_modes(profile, g)]
        rep = smallest_ritz_values(system, modes, k=5)
        low = min(rep.ritz_values)
        ok &= rep.converged and low >= -h ** 2
        lines.append(f"h={h}: smallest {low:.4f}, removed {', '.join(f'{v:.1e}' for v in rep.removed_values)}")
    record(11, ok, "; ".join(lines))
