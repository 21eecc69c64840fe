"""Linearised operator L, gauge operators Theta / Theta*, zero modes and eigen-probes.

Unknowns are packed over interior nodes (homogeneous Dirichlet data) as
``[Re phi, Im phi, omega_1, ..., omega_d]``.  The discrete products use the
weight ``W = diag(1, 1, eps^2, ..., eps^2)`` times the cell volume, in which
``L`` is symmetric and ``Theta*`` is exactly the adjoint of ``Theta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ValidationError
from .fields import (FieldConfiguration, Interior, Perturbation, covariant_gradient,
                     euler_lagrange_residual, inner_product)


class _Layout:
    def __init__(self, grid):
        self.grid = grid
        self.mask = Interior(1).mask(grid)
        self.m = int(self.mask.sum())
        self.index = -np.ones(grid.shape, dtype=np.int64)
        self.index[self.mask] = np.arange(self.m)
        self.nblocks = 2 + grid.ndim

    def neighbours(self, axis: int):
        """(row, col) pairs of interior nodes and their interior +e_axis neighbour."""
        src = [slice(None)] * self.grid.ndim
        dst = [slice(None)] * self.grid.ndim
        src[axis] = slice(0, -1)
        dst[axis] = slice(1, None)
        a, b = self.index[tuple(src)], self.index[tuple(dst)]
        keep = (a >= 0) & (b >= 0)
        return a[keep], b[keep], tuple(s for s in src), keep

    def pack(self, p: Perturbation) -> np.ndarray:
        m = self.mask
        return np.concatenate([p.phi.real[m], p.phi.imag[m]] + [p.omega[k][m] for k in range(self.grid.ndim)])

    def unpack(self, x: np.ndarray) -> Perturbation:
        m, n = self.mask, self.m
        phi = np.zeros(self.grid.shape, complex)
        phi[m] = x[:n] + 1j * x[n:2 * n]
        omega = np.zeros((self.grid.ndim,) + self.grid.shape)
        for k in range(self.grid.ndim):
            omega[k][m] = x[(2 + k) * n:(3 + k) * n]
        return Perturbation(phi, omega)

    def pack_scalar(self, g: np.ndarray) -> np.ndarray:
        return g[self.mask]

    def unpack_scalar(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.shape)
        out[self.mask] = x
        return out


@dataclass(frozen=True)
class LinearizedSystem:
    base: FieldConfiguration
    L: sp.csr_matrix
    theta: sp.csr_matrix
    theta_star: sp.csr_matrix
    weights: np.ndarray
    layout: _Layout

    def apply_L(self, p: Perturbation) -> Perturbation:
        p.check_layout(self.base)
        return self.layout.unpack(self.L @ self.layout.pack(p))

    def apply_theta(self, gamma: np.ndarray) -> Perturbation:
        return self.layout.unpack(self.theta @ self.layout.pack_scalar(np.asarray(gamma, float)))

    def apply_theta_star(self, p: Perturbation) -> np.ndarray:
        p.check_layout(self.base)
        return self.layout.unpack_scalar(self.theta_star @ self.layout.pack(p))

    def apply_decomposed(self, p: Perturbation) -> Perturbation:
        """(L - Theta Theta*) p."""
        x = self.layout.pack(p)
        return self.layout.unpack(self.L @ x - self.theta @ (self.theta_star @ x))


def _centered_interior(layout: _Layout, axis: int, h: float) -> sp.csr_matrix:
    r, c, _, _ = layout.neighbours(axis)
    m = layout.m
    fwd = sp.csr_matrix((np.full(r.size, 0.5 / h), (r, c)), shape=(m, m))
    return fwd - fwd.T


def assemble(base: FieldConfiguration) -> LinearizedSystem:
    grid, eps = base.grid, base.epsilon
    if min(grid.shape) < 4:
        raise ValidationError("grid too small for the 5-point stencil")
    lay = _Layout(grid)
    m, d = lay.m, grid.ndim
    u = base.u[lay.mask]
    Du = covariant_gradient(base)

    # gauged lattice Laplacian, Hermitian
    C = sp.csr_matrix((m, m), dtype=complex)
    lap5 = sp.csr_matrix((m, m))
    for k, h in enumerate(grid.spacings):
        r, c, src, keep = lay.neighbours(k)
        ak = base.A[k]
        dst = list(src)
        dst[k] = slice(1, None)
        theta = 0.5 * h * (ak[src] + ak[tuple(dst)])[keep]
        off = sp.csr_matrix((np.exp(-1j * theta) / h ** 2, (r, c)), shape=(m, m))
        C = C + off + off.conj().T - sp.identity(m) * (2 / h ** 2)
        off5 = sp.csr_matrix((np.full(r.size, 1 / h ** 2), (r, c)), shape=(m, m))
        lap5 = lap5 + off5 + off5.T - sp.identity(m) * (2 / h ** 2)

    mass = sp.diags(-0.5 * (1 - 3 * np.abs(u) ** 2))
    Mu = -eps ** 2 * C
    blocks = [[None] * (2 + d) for _ in range(2 + d)]
    blocks[0][0] = Mu.real + mass
    blocks[0][1] = -Mu.imag
    blocks[1][0] = Mu.imag
    blocks[1][1] = Mu.real + mass
    mod2 = sp.diags(np.abs(u) ** 2)
    for k in range(d):
        p, q = Du[k].real[lay.mask], Du[k].imag[lay.mask]
        coup = 2j * eps ** 2 * Du[k][lay.mask]
        blocks[0][2 + k] = sp.diags(coup.real)
        blocks[1][2 + k] = sp.diags(coup.imag)
        blocks[2 + k][0] = sp.diags(-2 * q)
        blocks[2 + k][1] = sp.diags(2 * p)
        blocks[2 + k][2 + k] = -eps ** 2 * lap5 + mod2
    L = sp.bmat(blocks, format="csr")

    G = [_centered_interior(lay, k, h) for k, h in enumerate(grid.spacings)]
    theta_op = sp.vstack([sp.diags(-u.imag), sp.diags(u.real)] + G, format="csr")
    theta_star = sp.hstack([sp.diags(-u.imag), sp.diags(u.real)] + [-eps ** 2 * g for g in G], format="csr")
    vol = math.prod(grid.spacings)
    weights = vol * np.repeat([1.0, 1.0] + [eps ** 2] * d, m)
    return LinearizedSystem(base, L, theta_op, theta_star, weights, lay)


# ------------------------------------------------------------ zero modes

def translational_zero_modes(profile, grid, center=(0.0, 0.0), epsilon: float = 1.0) -> tuple[Perturbation, Perturbation]:
    """v_1 = (f', (a'/r) dz^2) and v_2 = (i f', -(a'/r) dz^1), scaled to coupling ``epsilon``."""
    if grid.ndim != 2:
        raise ValidationError("translational zero modes are sampled on planar grids")
    X, Y = grid.mesh()
    s = np.hypot(X - center[0], Y - center[1]) / epsilon
    fp = profile.f_prime_at(s) / epsilon
    F = profile.a_prime_over_r(s) / epsilon ** 2
    z = np.zeros_like(F)
    return (Perturbation(fp.astype(complex), np.stack([z, F])),
            Perturbation(1j * fp, np.stack([-F, z])))


def translation_difference(profile, grid, delta: float, axis: int = 0,
                           center=(0.0, 0.0), epsilon: float = 1.0) -> Perturbation:
    """Gauge-corrected translation quotient  -[(U(x - delta e) - U(x))/delta + Theta[A_axis]].

    As delta -> 0 this tends to the displayed zero mode v_{axis+1}, because
    v_j = d_j U - Theta[A_j] (the raw derivative differs by an infinitesimal
    gauge transformation with generator A_j).
    """
    from .radial import sample_vortex
    shift = np.zeros(2)
    shift[axis] = delta
    U0 = sample_vortex(profile, grid, center, epsilon)
    U1 = sample_vortex(profile, grid, tuple(np.asarray(center) + shift), epsilon)
    dq = Perturbation((U1.u - U0.u) / delta, (U1.A - U0.A) / delta)
    gauge = Perturbation(1j * U0.A[axis] * U0.u,
                         np.stack([np.gradient(U0.A[axis], h, axis=k, edge_order=2)
                                   for k, h in enumerate(grid.spacings)]))
    return (dq + gauge) * -1.0


# ---------------------------------------------------------- decomposition

def directional_derivative(base: FieldConfiguration, p: Perturbation, delta: float) -> Perturbation:
    """Centered difference of the strong-form residual along p."""
    sp_ = euler_lagrange_residual(base.perturbed(p, delta))
    sm = euler_lagrange_residual(base.perturbed(p, -delta))
    return (sp_ - sm) * (0.5 / delta)


def decomposition_check(system: LinearizedSystem, p: Perturbation, delta: float = 1e-4) -> dict:
    """Compare S'p (numerical) with (L - Theta Theta*) p on nodes two layers inside the boundary."""
    if not 1e-7 <= delta <= 1e-2:
        raise ValidationError("delta must lie in [1e-7, 1e-2]")
    p.check_layout(system.base)
    edge = ~Interior(1).mask(system.base.grid)
    if np.any(np.abs(p.phi[edge]) > 0) or np.any(np.abs(p.omega[:, edge]) > 0):
        raise ValidationError("perturbation must vanish on the boundary")
    mask = Interior(2).mask(system.base.grid)
    numeric = directional_derivative(system.base, p, delta)
    assembled = system.apply_decomposed(p)
    diff = (numeric - assembled).sup_norm(mask)
    scale = max(numeric.sup_norm(mask), assembled.sup_norm(mask), p.sup_norm())
    return {
        "discrepancy": diff,
        "relative_discrepancy": diff / scale if scale > 0 else 0.0,
        "numeric_norm": numeric.sup_norm(mask),
        "assembled_norm": assembled.sup_norm(mask),
        "L_norm": system.apply_L(p).sup_norm(mask),
        "theta_star_norm": float(np.abs(system.apply_theta_star(p)[mask]).max()),
        "delta": delta,
    }


def random_smooth_perturbation(grid, rng: np.random.Generator, bumps: int = 4,
                               width: float | None = None, margin: float | None = None) -> Perturbation:
    """Sum of Gaussian bumps with random amplitudes, vanishing to rounding near the boundary."""
    X = grid.mesh()
    L = grid.half_width
    width = width if width is not None else 0.12 * L
    margin = margin if margin is not None else 5 * width
    phi = np.zeros(grid.shape, complex)
    omega = np.zeros((grid.ndim,) + grid.shape)
    for _ in range(bumps):
        c = rng.uniform(-L + margin, L - margin, size=grid.ndim)
        g = np.exp(-sum((x - ci) ** 2 for x, ci in zip(X, c)) / (2 * width ** 2))
        phi += (rng.normal() + 1j * rng.normal()) * g
        for k in range(grid.ndim):
            omega[k] += rng.normal() * g
    edge = ~Interior(1).mask(grid)
    phi[edge] = 0
    omega[:, edge] = 0
    p = Perturbation(phi, omega)
    return p * (1.0 / p.sup_norm())


# --------------------------------------------------------- eigen-probe

@dataclass
class EigenReport:
    ritz_values: list
    residuals: list
    removed_values: list
    removed_overlaps: list
    shift: float
    iterations: int
    converged: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def smallest_ritz_values(system: LinearizedSystem, deflate: list[Perturbation], k: int = 5,
                         shift: float = -0.25, tol: float = 1e-6, max_iter: int = 500,
                         seed: int = 0) -> EigenReport:
    """Block inverse iteration for the smallest eigenvalues of L on the gauge-orthogonal subspace.

    Gauge directions are lifted by working with L + Theta Theta* (which agrees
    with L on ker Theta* and is positive on range Theta).  The discrete
    near-kernel is removed by computing ``k + len(deflate)`` Ritz pairs and
    dropping those with the largest weighted overlap with ``deflate``; removing
    whole Ritz vectors keeps the remaining residuals honest.
    """
    W = system.weights
    K = system.L + system.theta @ system.theta_star
    Wd = sp.diags(W)
    lu = splu((Wd @ K - shift * Wd).tocsc())
    nd = len(deflate)
    want = k + nd
    block = 2 * want + 2
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(W.size, block))
    it, converged = 0, False
    for it in range(1, max_iter + 1):
        X = lu.solve(W[:, None] * X)
        Gm = X.T @ (W[:, None] * X)
        X = X @ np.linalg.inv(np.linalg.cholesky(Gm)).T
        KX = K @ X
        H = X.T @ (W[:, None] * KX)
        theta, Y = np.linalg.eigh(0.5 * (H + H.T))
        X = X @ Y
        R = KX @ Y - X * theta
        res = np.sqrt(np.sum(W[:, None] * R ** 2, axis=0))
        if np.all(res[:want] <= tol * np.maximum(np.abs(theta[:want]), 1.0)):
            converged = True
            break
    if nd:
        V = np.array([system.layout.pack(p) for p in deflate]).T
        V = V @ np.linalg.inv(np.linalg.cholesky(V.T @ (W[:, None] * V))).T
        overlap = np.linalg.norm(V.T @ (W[:, None] * X[:, :want]), axis=0)
        drop = set(np.argsort(overlap)[-nd:].tolist())
    else:
        overlap = np.zeros(want)
        drop = set()
    keep = [i for i in range(want) if i not in drop]
    return EigenReport(ritz_values=[float(theta[i]) for i in keep],
                       residuals=[float(res[i]) for i in keep],
                       removed_values=[float(theta[i]) for i in sorted(drop)],
                       removed_overlaps=[float(overlap[i]) for i in sorted(drop)],
                       shift=shift, iterations=it, converged=converged)
