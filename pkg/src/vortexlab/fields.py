"""Grids, gauged fields and the finite-difference calculus on them.

Conventions used throughout the package:

* arrays are indexed ``[i0, i1, ...]`` with axis ``k`` running along
  coordinate ``x_k`` (``indexing="ij"``);
* a connection is stored component-major, ``A[k]`` being the
  ``dx_k`` component sampled on the nodes;
* the gauged derivative is ``D_k u = d_k u - i A_k u``;
* ``<X, Y> = Re(X conj(Y))``, hence ``<X, iY> = Im(X conj(Y))``.

First derivatives are centered in the interior and one-sided second order
on the boundary.  Second derivatives use the compact three-point stencil.
The gauged Laplacian and the supercurrent use the parallel-transport
(link) form, which keeps the stencil compact and consistent to O(h^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import ValidationError

ROUNDING_RTOL = 1e-12


def _count_from_spacing(half_width: float, spacing: float) -> tuple[int, float]:
    if half_width <= 0 or spacing <= 0:
        raise ValidationError("half_width and spacing must be positive")
    n = int(round(2.0 * half_width / spacing)) + 1
    if n < 3:
        raise ValidationError(f"grid needs at least 3 nodes per axis, got {n}")
    return n, 2.0 * half_width / (n - 1)


def _trapezoid_1d(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class Grid2:
    """Uniform square grid on [-L, L]^2.

    ``node_count`` is derived from ``half_width`` and ``spacing`` by
    rounding, after which ``spacing`` is recomputed and is authoritative.
    """

    half_width: float
    spacing: float
    node_count: int

    def __post_init__(self):
        if self.node_count < 3:
            raise ValidationError("Grid2 needs node_count >= 3")
        if self.spacing <= 0 or self.half_width <= 0:
            raise ValidationError("Grid2 needs positive half_width and spacing")
        span = self.spacing * (self.node_count - 1)
        if abs(span - 2 * self.half_width) > ROUNDING_RTOL * max(1.0, 2 * self.half_width):
            raise ValidationError(
                f"spacing*(node_count-1)={span!r} does not match 2*half_width={2 * self.half_width!r}"
            )

    @classmethod
    def from_spacing(cls, half_width: float, spacing: float) -> "Grid2":
        n, h = _count_from_spacing(half_width, spacing)
        return cls(float(half_width), h, n)

    @classmethod
    def from_count(cls, half_width: float, node_count: int) -> "Grid2":
        if node_count < 3:
            raise ValidationError("Grid2 needs node_count >= 3")
        return cls(float(half_width), 2.0 * half_width / (node_count - 1), int(node_count))

    @property
    def ndim(self) -> int:
        return 2

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.node_count, self.node_count)

    @property
    def spacings(self) -> tuple[float, ...]:
        return (self.spacing, self.spacing)

    def coords(self) -> np.ndarray:
        return -self.half_width + self.spacing * np.arange(self.node_count)

    def axes(self) -> list[np.ndarray]:
        c = self.coords()
        return [c, c]

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def weights(self) -> np.ndarray:
        w = _trapezoid_1d(self.node_count, self.spacing)
        return np.multiply.outer(w, w)

    def describe(self) -> dict:
        return {"kind": "Grid2", "half_width": self.half_width,
                "spacing": self.spacing, "node_count": self.node_count}


@dataclass(frozen=True)
class GridN:
    """Product grid on [-T, T]^n x [-L, L]^2 for the cylinder B^n x R^2.

    The first ``tangential_dim`` axes are tangential, the last two are the
    normal plane described by ``normal``.
    """

    tangential_dim: int
    tangential_half_width: float
    tangential_spacing: float
    tangential_count: int
    normal: Grid2

    def __post_init__(self):
        if self.tangential_dim < 1:
            raise ValidationError("tangential_dim must be >= 1")
        if self.tangential_spacing <= 0 or self.tangential_count < 3:
            raise ValidationError("tangential axis needs positive spacing and >= 3 nodes")
        span = self.tangential_spacing * (self.tangential_count - 1)
        if abs(span - 2 * self.tangential_half_width) > ROUNDING_RTOL * max(1.0, span):
            raise ValidationError("tangential spacing inconsistent with half width")

    @classmethod
    def create(cls, tangential_dim: int, tangential_half_width: float,
               tangential_spacing: float, normal: Grid2) -> "GridN":
        n, h = _count_from_spacing(tangential_half_width, tangential_spacing)
        return cls(int(tangential_dim), float(tangential_half_width), h, n, normal)

    @property
    def ndim(self) -> int:
        return self.tangential_dim + 2

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.tangential_count,) * self.tangential_dim + self.normal.shape

    @property
    def spacings(self) -> tuple[float, ...]:
        return (self.tangential_spacing,) * self.tangential_dim + self.normal.spacings

    def tangential_coords(self) -> np.ndarray:
        return -self.tangential_half_width + self.tangential_spacing * np.arange(self.tangential_count)

    def axes(self) -> list[np.ndarray]:
        return [self.tangential_coords()] * self.tangential_dim + self.normal.axes()

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def weights(self) -> np.ndarray:
        w = _trapezoid_1d(self.tangential_count, self.tangential_spacing)
        out = np.ones(())
        for _ in range(self.tangential_dim):
            out = np.multiply.outer(out, w)
        return np.multiply.outer(out, self.normal.weights())

    def describe(self) -> dict:
        return {"kind": "GridN", "tangential_dim": self.tangential_dim,
                "tangential_half_width": self.tangential_half_width,
                "tangential_spacing": self.tangential_spacing,
                "tangential_count": self.tangential_count,
                "normal": self.normal.describe()}


Grid = Union[Grid2, GridN]


def grid_from_description(desc: dict) -> Grid:
    if desc["kind"] == "Grid2":
        return Grid2(float(desc["half_width"]), float(desc["spacing"]), int(desc["node_count"]))
    if desc["kind"] == "GridN":
        return GridN(int(desc["tangential_dim"]), float(desc["tangential_half_width"]),
                     float(desc["tangential_spacing"]), int(desc["tangential_count"]),
                     grid_from_description(desc["normal"]))
    raise ValidationError(f"unknown grid kind {desc['kind']!r}")


def _check_finite(name: str, arr: np.ndarray):
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValidationError(f"non-finite value in {name} at node {idx}")


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FieldConfiguration:
    """Higgs field ``u`` and connection ``A`` on a grid, at coupling ``epsilon``."""

    u: np.ndarray
    A: np.ndarray
    epsilon: float
    grid: Grid

    def __post_init__(self):
        u = _frozen(self.u, np.complex128)
        A = _frozen(self.A, np.float64)
        if u.shape != self.grid.shape:
            raise ValidationError(f"u has shape {u.shape}, grid expects {self.grid.shape}")
        if A.shape != (self.grid.ndim,) + self.grid.shape:
            raise ValidationError(
                f"A has shape {A.shape}, expected {(self.grid.ndim,) + self.grid.shape}")
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValidationError("epsilon must be positive and finite")
        _check_finite("u", u)
        _check_finite("A", A)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @classmethod
    def vacuum(cls, grid: Grid, epsilon: float = 1.0) -> "FieldConfiguration":
        return cls(np.ones(grid.shape, complex), np.zeros((grid.ndim,) + grid.shape), epsilon, grid)

    def replace(self, u=None, A=None, epsilon=None) -> "FieldConfiguration":
        return FieldConfiguration(self.u if u is None else u, self.A if A is None else A,
                                  self.epsilon if epsilon is None else epsilon, self.grid)

    def perturbed(self, p: "Perturbation", scale: float = 1.0) -> "FieldConfiguration":
        return self.replace(u=self.u + scale * p.phi, A=self.A + scale * p.omega)


@dataclass(frozen=True)
class Perturbation:
    """A tangent vector (phi, omega) at a configuration; also used for residuals."""

    phi: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.complex128)
        omega = np.asarray(self.omega, dtype=np.float64)
        if omega.shape != (omega.shape[0],) + phi.shape:
            raise ValidationError("omega must have shape (ndim,) + phi.shape")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "omega", omega)

    @classmethod
    def zeros_like(cls, config: FieldConfiguration) -> "Perturbation":
        return cls(np.zeros_like(config.u), np.zeros_like(config.A))

    def check_layout(self, config: FieldConfiguration):
        if self.phi.shape != config.u.shape or self.omega.shape != config.A.shape:
            raise ValidationError("perturbation layout does not match configuration")

    def __add__(self, other: "Perturbation") -> "Perturbation":
        return Perturbation(self.phi + other.phi, self.omega + other.omega)

    def __sub__(self, other: "Perturbation") -> "Perturbation":
        return Perturbation(self.phi - other.phi, self.omega - other.omega)

    def __mul__(self, s: float) -> "Perturbation":
        return Perturbation(s * self.phi, s * self.omega)

    __rmul__ = __mul__

    def sup_norm(self, mask: np.ndarray | None = None) -> float:
        mag = np.sqrt(np.abs(self.phi) ** 2 + np.sum(self.omega ** 2, axis=0))
        if mask is not None:
            mag = mag[mask]
        return float(mag.max()) if mag.size else 0.0


def inner_product(p: Perturbation, q: Perturbation, epsilon: float, grid: Grid,
                  mask: np.ndarray | None = None) -> float:
    """The epsilon-weighted L^2 product  int Re(phi1 conj(phi2)) + eps^2 omega1.omega2."""
    dens = (p.phi * np.conj(q.phi)).real + epsilon ** 2 * np.sum(p.omega * q.omega, axis=0)
    w = grid.weights()
    if mask is not None:
        w = w * mask
    return float(np.sum(dens * w))


# ----------------------------------------------------------------- regions

@dataclass(frozen=True)
class Ball:
    center: Sequence[float]
    radius: float

    def mask(self, grid: Grid) -> np.ndarray:
        X = grid.mesh()
        if len(self.center) != grid.ndim:
            raise ValidationError(f"ball center has {len(self.center)} coordinates, grid is {grid.ndim}-D")
        r2 = sum((x - c) ** 2 for x, c in zip(X, self.center))
        return r2 <= self.radius ** 2

    def coverage(self, grid: Grid) -> np.ndarray:
        """Approximate fraction of each node's cell inside the ball.

        A linear ramp in the signed distance across the cell width along the
        radial direction; this makes ball integrals second-order accurate
        instead of first-order for the sharp indicator.
        """
        X = grid.mesh()
        if len(self.center) != grid.ndim:
            raise ValidationError(f"ball center has {len(self.center)} coordinates, grid is {grid.ndim}-D")
        rel = [x - c for x, c in zip(X, self.center)]
        rho = np.sqrt(sum(d ** 2 for d in rel))
        safe = np.where(rho > 0, rho, 1.0)
        width = sum(np.abs(d) / safe * h for d, h in zip(rel, grid.spacings))
        width = np.where(rho > 0, width, max(grid.spacings))
        return np.clip((self.radius - rho) / width + 0.5, 0.0, 1.0)


@dataclass(frozen=True)
class Interior:
    """All nodes at least ``margin`` nodes away from the grid boundary."""

    margin: int = 1

    def mask(self, grid: Grid) -> np.ndarray:
        m = np.zeros(grid.shape, bool)
        sl = tuple(slice(self.margin, n - self.margin) for n in grid.shape)
        m[sl] = True
        return m


def region_mask(grid: Grid, region) -> np.ndarray:
    if region is None:
        m = np.ones(grid.shape, bool)
    elif isinstance(region, np.ndarray):
        m = region.astype(bool)
        if m.shape != grid.shape:
            raise ValidationError("region mask shape does not match grid")
    else:
        m = region.mask(grid)
    if not m.any():
        raise ValidationError("region contains no grid nodes")
    return m


def region_weights(grid: Grid, region) -> np.ndarray:
    """Quadrature weights restricted to ``region``; balls get fractional boundary cells."""
    if isinstance(region, Ball):
        w = region.coverage(grid)
        if not w.any():
            raise ValidationError("region contains no grid nodes")
        return grid.weights() * w
    return grid.weights() * region_mask(grid, region)


def integrate(density: np.ndarray, grid: Grid, region=None) -> float:
    return float(np.sum(density * region_weights(grid, region)))


# ------------------------------------------------------- finite differences

def partial(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    return np.gradient(f, h, axis=axis, edge_order=2)


def second_partial(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    g = np.moveaxis(f, axis, 0)
    if g.shape[0] < 4:
        raise ValidationError("grid too small for the second-difference stencil (need >= 4 nodes per axis)")
    out = np.empty_like(g)
    out[1:-1] = g[2:] - 2 * g[1:-1] + g[:-2]
    out[0] = 2 * g[0] - 5 * g[1] + 4 * g[2] - g[3]
    out[-1] = 2 * g[-1] - 5 * g[-2] + 4 * g[-3] - g[-4]
    return np.moveaxis(out / h ** 2, 0, axis)


def laplacian(f: np.ndarray, spacings: Sequence[float]) -> np.ndarray:
    return sum(second_partial(f, k, h) for k, h in enumerate(spacings))


def divergence(A: np.ndarray, spacings: Sequence[float]) -> np.ndarray:
    return sum(partial(A[k], k, h) for k, h in enumerate(spacings))


def exterior_derivative(gamma: np.ndarray, spacings: Sequence[float]) -> np.ndarray:
    return np.stack([partial(gamma, k, h) for k, h in enumerate(spacings)])


def _covariant_axis(u, Ak, h, axis):
    """Gauged second difference and supercurrent along one axis.

    Interior nodes use link variables exp(-i h (A_i + A_{i+1})/2); boundary
    nodes fall back to the expanded form built from one-sided stencils.
    """
    du = partial(u, axis, h)
    dA = partial(Ak, axis, h)
    lap = second_partial(u, axis, h) - 2j * Ak * du - 1j * dA * u - Ak ** 2 * u
    cur = np.imag((du - 1j * Ak * u) * np.conj(u))

    uu = np.moveaxis(u, axis, 0)
    aa = np.moveaxis(Ak, axis, 0)
    lap_v = np.moveaxis(lap, axis, 0)
    cur_v = np.moveaxis(cur, axis, 0)
    theta = 0.5 * h * (aa[1:] + aa[:-1])
    back = np.exp(1j * theta) * uu[:-1]          # u_i carried to node i+1
    fwd = np.exp(-1j * theta) * uu[1:]           # u_{i+1} carried to node i
    lap_v[1:-1] = (fwd[1:] - 2 * uu[1:-1] + back[:-1]) / h ** 2
    link = -np.imag(back * np.conj(uu[1:])) / h
    cur_v[1:-1] = 0.5 * (link[1:] + link[:-1])
    return lap, cur


def _covariant_parts(u, A, spacings):
    lap = np.zeros_like(u)
    cur = np.zeros(A.shape)
    for k, h in enumerate(spacings):
        lk, ck = _covariant_axis(u, A[k], h, k)
        lap += lk
        cur[k] = ck
    return lap, cur


def covariant_laplacian(config: FieldConfiguration) -> np.ndarray:
    return _covariant_parts(config.u, config.A, config.grid.spacings)[0]


def supercurrent(config: FieldConfiguration) -> np.ndarray:
    """Components of <D u, i u> = Im(D_k u conj(u))."""
    return _covariant_parts(config.u, config.A, config.grid.spacings)[1]


def codifferential_of_curvature(A: np.ndarray, spacings: Sequence[float]) -> np.ndarray:
    """(d*dA)_k = -sum_j d_j (d_j A_k - d_k A_j)."""
    d = len(spacings)
    out = np.zeros_like(A)
    for k in range(d):
        for j in range(d):
            if j == k:
                continue
            out[k] += -second_partial(A[k], j, spacings[j]) \
                + partial(partial(A[j], j, spacings[j]), k, spacings[k])
    return out


# -------------------------------------------------------------- operations

def covariant_gradient(config: FieldConfiguration) -> np.ndarray:
    """Stack of D_k u = d_k u - i A_k u, shape (ndim,) + grid.shape."""
    u, A = config.u, config.A
    return np.stack([partial(u, k, h) - 1j * A[k] * u
                     for k, h in enumerate(config.grid.spacings)])


def curvature(config: FieldConfiguration) -> np.ndarray:
    """F_ab = d_a A_b - d_b A_a; the scalar F_12 in 2D, the full matrix otherwise."""
    A, sp = config.A, config.grid.spacings
    d = len(sp)
    if d == 2:
        return partial(A[1], 0, sp[0]) - partial(A[0], 1, sp[1])
    dA = [[partial(A[b], a, sp[a]) for b in range(d)] for a in range(d)]
    F = np.zeros((d, d) + config.grid.shape)
    for a in range(d):
        for b in range(a + 1, d):
            F[a, b] = dA[a][b] - dA[b][a]
            F[b, a] = -F[a, b]
    return F


def curvature_squared(config: FieldConfiguration) -> np.ndarray:
    """|F|^2 = sum_{a<b} F_ab^2."""
    F = curvature(config)
    if F.ndim == config.grid.ndim:
        return F ** 2
    d = config.grid.ndim
    return sum(F[a, b] ** 2 for a in range(d) for b in range(a + 1, d))


def potential(u: np.ndarray) -> np.ndarray:
    """W(u) = (1 - |u|^2)^2 / 4."""
    return 0.25 * (1.0 - np.abs(u) ** 2) ** 2


@dataclass(frozen=True)
class EnergySplit:
    kinetic: float
    curvature: float
    potential: float

    @property
    def total(self) -> float:
        return self.kinetic + self.curvature + self.potential

    def as_dict(self) -> dict:
        return {"total": self.total, "kinetic": self.kinetic,
                "curvature": self.curvature, "potential": self.potential}


def energy_densities(config: FieldConfiguration) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    eps = config.epsilon
    Du = covariant_gradient(config)
    kin = np.sum(np.abs(Du) ** 2, axis=0)
    curv = eps ** 2 * curvature_squared(config)
    pot = potential(config.u) / eps ** 2
    return kin, curv, pot


def energy(config: FieldConfiguration, region=None) -> EnergySplit:
    """Trapezoidal energy over ``region`` (a Ball, Interior, boolean mask or None)."""
    w = region_weights(config.grid, region)
    kin, curv, pot = energy_densities(config)
    return EnergySplit(float(np.sum(kin * w)), float(np.sum(curv * w)), float(np.sum(pot * w)))


def _require_stencil(grid: Grid):
    if min(grid.shape) < 4:
        raise ValidationError("grid too small for the 5-point stencil (need >= 4 nodes per axis)")


def euler_lagrange_residual(config: FieldConfiguration) -> Perturbation:
    """S(u, A) = (-eps^2 Lap_A u - (1 - |u|^2) u / 2,  eps^2 d*dA - <D u, i u>)."""
    _require_stencil(config.grid)
    eps, sp = config.epsilon, config.grid.spacings
    lap, cur = _covariant_parts(config.u, config.A, sp)
    su = -eps ** 2 * lap - 0.5 * (1.0 - np.abs(config.u) ** 2) * config.u
    sa = eps ** 2 * codifferential_of_curvature(config.A, sp) - cur
    return Perturbation(su, sa)


def bogomolny_residual(config: FieldConfiguration) -> tuple[np.ndarray, np.ndarray]:
    """(eps F_12 - (1 - |u|^2)/(2 eps),  (D_1 u + i D_2 u)/2) for a planar configuration."""
    if config.grid.ndim != 2:
        raise ValidationError("the first-order vortex equations are only defined in 2D")
    eps = config.epsilon
    F = curvature(config)
    Du = covariant_gradient(config)
    return eps * F - (1.0 - np.abs(config.u) ** 2) / (2 * eps), 0.5 * (Du[0] + 1j * Du[1])


def gauge_transform(config: FieldConfiguration, gamma: np.ndarray) -> FieldConfiguration:
    gamma = np.asarray(gamma, float)
    if gamma.shape != config.grid.shape:
        raise ValidationError("gauge function must be sampled on the configuration grid")
    return config.replace(u=config.u * np.exp(1j * gamma),
                          A=config.A + exterior_derivative(gamma, config.grid.spacings))


def coulomb_residual(config: FieldConfiguration) -> np.ndarray:
    """d*A = -div A."""
    return -divergence(config.A, config.grid.spacings)
