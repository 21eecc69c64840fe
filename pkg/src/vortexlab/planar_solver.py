"""Gauge-fixed descent for the planar epsilon-equations with Dirichlet data.

The iteration minimises a lattice version of the augmented energy

    E(u, A) + lambda * int (d*A)^2

whose exact gradient (in the epsilon-weighted metric) is the compact strong
form residual used by :func:`vortexlab.fields.euler_lagrange_residual`,
plus the penalty term ``lambda * d(d*A)``.  The curvature energy is written
as ``eps^2 |grad A|^2 - eps^2 (div A)^2``, which differs from
``eps^2 |F|^2`` by a null Lagrangian fixed by the Dirichlet data; this keeps
the Hessian free of grid-scale kernels.

Steps are preconditioned by ``(1 - eps^2 Lap)^{-1}`` and accelerated with a
limited-memory quasi-Newton update; an Armijo backtracking line search keeps
the augmented energy non-increasing.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NumericalError, ValidationError
from .fields import (FieldConfiguration, Interior, coulomb_residual, energy,
                     euler_lagrange_residual, exterior_derivative, potential)

BOUNDARY_MODES = ("vortex_trace", "vacuum", "provided")
STEP_RULES = ("backtracking", "fixed")


@dataclass(frozen=True)
class SolveSettings:
    max_iterations: int = 2000
    step_rule: str = "backtracking"
    tolerance: float = 1e-6
    gauge_fix_weight: float = 1.0
    boundary_mode: str = "vortex_trace"
    fixed_step: float = 0.5
    memory: int = 8
    final_projection: bool = True

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValidationError("tolerance must be positive")
        if self.gauge_fix_weight < 0:
            raise ValidationError("gauge_fix_weight must be non-negative")
        if self.max_iterations < 0:
            raise ValidationError("max_iterations must be non-negative")
        if self.step_rule not in STEP_RULES:
            raise ValidationError(f"step_rule must be one of {STEP_RULES}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ValidationError(f"boundary_mode must be one of {BOUNDARY_MODES}")
        if self.fixed_step <= 0 or self.memory < 0:
            raise ValidationError("fixed_step must be positive and memory non-negative")


@dataclass
class ConvergenceReport:
    converged: bool
    message: str
    iterations: int
    residual_augmented: float
    residual_strong: float
    residual_coulomb: float
    energy: dict
    augmented_energy_history: list = field(default_factory=list)
    wall_time: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------- lattice energy

def _lattice_energy_grad(u, A, eps, lam, spacings, interior):
    """Augmented lattice energy and its Euclidean gradient (du as complex, dA real)."""
    vol = math.prod(spacings)
    E = 0.0
    gu = np.zeros_like(u)
    gA = np.zeros_like(A)
    for k, h in enumerate(spacings):
        uu = np.moveaxis(u, k, 0)
        aa = np.moveaxis(A[k], k, 0)
        e = np.exp(0.5j * h * (aa[1:] + aa[:-1]))
        diff = uu[1:] - e * uu[:-1]
        E += np.sum(np.abs(diff) ** 2) / h ** 2
        g = np.zeros_like(uu)
        g[1:] += 2 * diff / h ** 2
        g[:-1] -= 2 * np.conj(e) * diff / h ** 2
        gu += np.moveaxis(g, 0, k)
        dth = np.imag(e * uu[:-1] * np.conj(uu[1:])) / h
        ga = np.zeros_like(aa)
        ga[1:] += dth
        ga[:-1] += dth
        gA[k] += np.moveaxis(ga, 0, k)
        for b in range(A.shape[0]):
            ab = np.moveaxis(A[b], k, 0)
            dab = ab[1:] - ab[:-1]
            E += eps ** 2 * np.sum(dab ** 2) / h ** 2
            g = np.zeros_like(ab)
            g[1:] += 2 * eps ** 2 * dab / h ** 2
            g[:-1] -= 2 * eps ** 2 * dab / h ** 2
            gA[b] += np.moveaxis(g, 0, k)
    E += np.sum(potential(u)) / eps ** 2
    gu += -(1 - np.abs(u) ** 2) * u / eps ** 2

    coef = lam - eps ** 2
    if coef != 0.0:
        div = sum(np.gradient(A[k], h, axis=k) for k, h in enumerate(spacings)) * interior
        E += coef * np.sum(div ** 2)
        for k, h in enumerate(spacings):
            dd = np.moveaxis(div, k, 0)
            g = np.zeros_like(dd)
            g[1:] += dd[:-1]
            g[:-1] -= dd[1:]
            gA[k] += coef * np.moveaxis(g, 0, k) / h
    return vol * E, vol * gu, vol * gA


def augmented_residual(config: FieldConfiguration, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """(S_u, S_A + lambda d(d*A)) in the lattice form descended by :func:`solve_planar`."""
    interior = Interior(1).mask(config.grid)
    vol = math.prod(config.grid.spacings)
    _, gu, gA = _lattice_energy_grad(config.u, config.A, config.epsilon, lam,
                                     config.grid.spacings, interior)
    return config.epsilon ** 2 * gu / (2 * vol), gA / (2 * vol)


# ------------------------------------------------------------ helpers

def _interior_laplacian(shape, spacings):
    mats = []
    for n, h in zip(shape, spacings):
        m = n - 2
        mats.append(sp.diags([np.ones(m - 1), -2 * np.ones(m), np.ones(m - 1)], [-1, 0, 1]) / h ** 2)
    L = None
    for k, Mk in enumerate(mats):
        term = None
        for j, Mj in enumerate(mats):
            piece = Mk if j == k else sp.identity(Mj.shape[0])
            term = piece if term is None else sp.kron(term, piece)
        L = term if L is None else L + term
    return L.tocsc()


class _Packer:
    def __init__(self, mask, ndim):
        self.mask = mask
        self.m = int(mask.sum())
        self.ndim = ndim

    def pack(self, u, A):
        return np.concatenate([u.real[self.mask], u.imag[self.mask]] + [A[k][self.mask] for k in range(self.ndim)])

    def unpack(self, x, u0, A0):
        m = self.m
        u = u0.copy()
        A = A0.copy()
        u[self.mask] = x[:m] + 1j * x[m:2 * m]
        for k in range(self.ndim):
            A[k][self.mask] = x[(2 + k) * m:(3 + k) * m]
        return u, A

    def pack_grad(self, gu, gA):
        return np.concatenate([gu.real[self.mask], gu.imag[self.mask]] + [gA[k][self.mask] for k in range(self.ndim)])


def boundary_data(mode: str, grid, epsilon: float, init: FieldConfiguration,
                  profile=None, center=(0.0, 0.0)) -> FieldConfiguration:
    """Configuration whose boundary values are imposed as Dirichlet data."""
    if mode == "provided":
        return init
    if mode == "vacuum":
        return FieldConfiguration.vacuum(grid, epsilon)
    from .radial import sample_vortex, solve_bogomolny
    if profile is None:
        profile = solve_bogomolny(max(20.0, 1.5 * grid.half_width * math.sqrt(2) / epsilon), 1e-8)
    return sample_vortex(profile, grid, center, epsilon)


def solve_planar(epsilon: float, grid, init: FieldConfiguration, settings: SolveSettings = SolveSettings(),
                 profile=None, center=(0.0, 0.0)) -> tuple[FieldConfiguration, ConvergenceReport]:
    t0 = time.perf_counter()
    if init.grid != grid:
        raise ValidationError("initial configuration is not on the requested grid")
    if abs(init.epsilon - epsilon) > 1e-15 * epsilon:
        init = init.replace(epsilon=epsilon)
    if min(grid.shape) < 4:
        raise ValidationError("grid too small for the 5-point stencil")
    bnd = boundary_data(settings.boundary_mode, grid, epsilon, init, profile, center)
    interior = Interior(1).mask(grid)
    u0 = np.where(interior, init.u, bnd.u)
    A0 = np.where(interior, init.A, bnd.A)

    eps, lam, spc = epsilon, settings.gauge_fix_weight, grid.spacings
    vol = math.prod(spc)
    packer = _Packer(interior, grid.ndim)
    inner_shape = tuple(n - 2 for n in grid.shape)
    P = sp.identity(packer.m, format="csc") - eps ** 2 * _interior_laplacian(grid.shape, spc)
    lu = splu(P)
    scales = np.repeat([eps ** 2 / (2 * vol)] * 2 + [1 / (2 * vol)] * grid.ndim, packer.m)

    # mask ordering is C-order over the interior block, matching the kron layout
    def precondition(g):
        blocks = g.reshape(2 + grid.ndim, packer.m).T
        return (lu.solve(np.ascontiguousarray(blocks)).T.ravel()) * scales

    def evaluate(x):
        u, A = packer.unpack(x, u0, A0)
        E, gu, gA = _lattice_energy_grad(u, A, eps, lam, spc, interior)
        return E, packer.pack_grad(gu, gA)

    def residual_sup(g):
        blocks = g.reshape(2 + grid.ndim, packer.m)
        ru = np.hypot(blocks[0], blocks[1]) * eps ** 2 / (2 * vol)
        ra = np.sqrt(np.sum(blocks[2:] ** 2, axis=0)) / (2 * vol)
        return float(max(ru.max(), ra.max()))

    x = packer.pack(u0, A0)
    E, g = evaluate(x)
    history = [E]
    res = residual_sup(g)
    mem: list[tuple[np.ndarray, np.ndarray, float]] = []
    iterations = 0
    stalls = 0
    converged = res <= settings.tolerance
    message = "converged" if converged else ""
    while not converged:
        if iterations >= settings.max_iterations:
            message = "not converged"
            break
        if settings.step_rule == "fixed":
            d = -precondition(g)
            t = settings.fixed_step
            x_new = x + t * d
            E_new, g_new = evaluate(x_new)
        else:
            d = _two_loop(g, mem, precondition)
            gd = float(g @ d)
            if gd >= 0:
                mem.clear()
                d = -precondition(g)
                gd = float(g @ d)
            t = 1.0
            slack = 1e-13 * abs(E)
            for _ in range(40):
                x_new = x + t * d
                E_new, g_new = evaluate(x_new)
                if np.isfinite(E_new) and E_new <= E + 1e-4 * t * gd + slack:
                    break
                t *= 0.5
            else:
                message = "line search failed"
                break
        if not np.isfinite(E_new):
            raise NumericalError("augmented energy became non-finite during descent")
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        if settings.memory and sy > 1e-300:
            mem.append((s, y, 1.0 / sy))
            if len(mem) > settings.memory:
                mem.pop(0)
        stalls = stalls + 1 if E_new >= E else 0
        x, E, g = x_new, E_new, g_new
        history.append(E)
        iterations += 1
        res = residual_sup(g)
        if res <= settings.tolerance:
            converged, message = True, "converged"
        elif stalls >= 50:
            message = "stagnation"
            break

    u, A = packer.unpack(x, u0, A0)
    out = FieldConfiguration(u, A, eps, grid)
    if settings.final_projection:
        out = project_coulomb(out)
    strong = euler_lagrange_residual(out)
    m = Interior(2).mask(grid)
    report = ConvergenceReport(
        converged=converged, message=message, iterations=iterations,
        residual_augmented=res, residual_strong=strong.sup_norm(m),
        residual_coulomb=float(np.abs(coulomb_residual(out)[m]).max()),
        energy=energy(out).as_dict(), augmented_energy_history=[float(e) for e in history],
        wall_time=time.perf_counter() - t0)
    return out, report


def _two_loop(g, mem, precondition):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(mem):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    r = precondition(q)
    if mem:
        s, y, _ = mem[-1]
        r *= float(s @ y) / float(y @ precondition(y))
    for (s, y, rho), a in zip(mem, reversed(alphas)):
        b = rho * float(y @ r)
        r += s * (a - b)
    return -r


# ------------------------------------------------------- Coulomb projection

def _neumann_matrix(n: int, h: float) -> sp.csr_matrix:
    main = -2 * np.ones(n)
    upper = np.ones(n - 1)
    lower = np.ones(n - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / h ** 2


def project_coulomb(config: FieldConfiguration) -> FieldConfiguration:
    """Gauge transform towards d*A = 0 with A(nu) = 0 on the boundary.

    Solves the five-point Neumann problem Lap gamma = div A, dgamma/dnu = A.nu
    (ghost-node closure) and returns G_{-gamma}(config).  A constant
    multiplier absorbs the O(h^2) discrete flux-compatibility defect, and
    gamma is normalised to zero trapezoidal mean.  With centered divergence
    the post-state Coulomb residual is O(h^2).
    """
    grid = config.grid
    shape, spc = grid.shape, grid.spacings
    d = grid.ndim
    N = int(np.prod(shape))
    rhs = -coulomb_residual(config)
    for k, h in enumerate(spc):
        r = np.moveaxis(rhs, k, 0)
        ak = np.moveaxis(config.A[k], k, 0)
        r[0] += 2 * ak[0] / h
        r[-1] -= 2 * ak[-1] / h
    L = None
    for k, (n, h) in enumerate(zip(shape, spc)):
        term = None
        for j, nj in enumerate(shape):
            piece = _neumann_matrix(n, h) if j == k else sp.identity(nj, format="csr")
            term = piece if term is None else sp.kron(term, piece, format="csr")
        L = term if L is None else L + term
    w = grid.weights().ravel()
    K = sp.bmat([[L, sp.csc_matrix(np.ones((N, 1)))],
                 [sp.csr_matrix(w[None, :]), None]], format="csc")
    b = np.append(rhs.ravel(), 0.0)
    try:
        sol = splu(K).solve(b)
    except RuntimeError as exc:
        raise NumericalError(f"Poisson solve failed: {exc}") from exc
    resid = K @ sol - b
    if not np.all(np.isfinite(sol)) or np.abs(resid).max() > 1e-8 * max(1.0, float(np.abs(b).max())):
        raise NumericalError("Poisson solve did not converge")
    project_coulomb.last_flux_defect = float(sol[N])
    gamma = sol[:N].reshape(shape)
    return config.replace(u=config.u * np.exp(-1j * gamma),
                          A=config.A - exterior_derivative(gamma, spc))
