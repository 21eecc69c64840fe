"""Tilt excess, density ratios, nodal sets, graph fits and level tubes of |u|."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from skimage.measure import find_contours

from .errors import ValidationError
from .fermi import graph_mean_curvature
from .fields import (Ball, FieldConfiguration, Grid2, covariant_gradient, curvature, energy, integrate,
                     second_partial)


def _unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def _check_ball(config: FieldConfiguration, center, r: float) -> np.ndarray:
    grid = config.grid
    center = np.asarray(center, float)
    if center.shape != (grid.ndim,):
        raise ValidationError(f"center needs {grid.ndim} coordinates")
    if r <= 0:
        raise ValidationError("radius must be positive")
    for c, ax in zip(center, grid.axes()):
        if c - r < ax[0] - 1e-12 or c + r > ax[-1] + 1e-12:
            raise ValidationError("ball exits the domain")
    return center


def orthonormal_frame(plane, ndim: int) -> np.ndarray:
    """Complete the tangential frame ``plane`` (n x ndim) to an orthonormal basis (rows)."""
    P = np.atleast_2d(np.asarray(plane, float))
    if P.shape[1] != ndim or P.shape[0] != ndim - 2:
        raise ValidationError(f"plane frame must be {ndim - 2} x {ndim}")
    Q, R = np.linalg.qr(P.T)
    if np.any(np.abs(np.diag(R)) < 1e-12):
        raise ValidationError("plane frame is degenerate")
    Q = Q * np.sign(np.diag(R))
    tangential = Q.T
    # complement from the full QR of the tangential frame
    full, _ = np.linalg.qr(np.hstack([Q, np.eye(ndim)]))
    normal = full[:, ndim - 2:ndim].T
    # orient the normal pair like the last two coordinate axes
    if np.linalg.det(np.vstack([tangential, normal])) < 0:
        normal = normal[::-1]
    return np.vstack([tangential, normal])


@dataclass
class ExcessReport:
    center: list
    radius: float
    plane: list
    excess: float
    density_ratio: float
    energy: dict

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def excess(config: FieldConfiguration, center, r: float, plane) -> ExcessReport:
    """E_1 = (r^-n / 2 pi) int_{B_r} [sum_k |D_{e_k} u|^2 + eps^2 sum_{(j,k) != normal pair} F(e_j, e_k)^2].

    ``plane`` holds n tangential vectors; curvature pairs are unordered j < k.
    """
    grid = config.grid
    d = grid.ndim
    n = d - 2
    if n < 1:
        raise ValidationError("excess needs at least one tangential direction")
    center = _check_ball(config, center, r)
    E = orthonormal_frame(plane, d)
    Du = covariant_gradient(config)
    F = curvature(config)
    dens = np.zeros(grid.shape)
    for k in range(n):
        dens += np.abs(np.tensordot(E[k], Du, axes=1)) ** 2
    Fr = np.einsum("ja,ab...,kb->jk...", E, F, E)
    for j in range(d):
        for k in range(j + 1, d):
            if (j, k) == (n, n + 1):
                continue
            dens += config.epsilon ** 2 * Fr[j, k] ** 2
    value = integrate(dens, grid, Ball(tuple(center), r)) / (r ** n * 2 * math.pi)
    ratio = density_ratio(config, r, center)
    return ExcessReport(center.tolist(), float(r), E[:n].tolist(), max(value, 0.0),
                        ratio["ratio"], ratio["energy"])


def density_ratio(config: FieldConfiguration, r: float, center=None) -> dict:
    """energy(B_r) / (r^n 2 pi omega_n) and the unnormalised energy / |B_r^n|."""
    grid = config.grid
    n = grid.ndim - 2
    center = np.zeros(grid.ndim) if center is None else np.asarray(center, float)
    center = _check_ball(config, center, r)
    e = energy(config, Ball(tuple(center), r))
    vol = _unit_ball_volume(n) * r ** n
    return {"ratio": e.total / (2 * math.pi * vol), "per_volume": e.total / vol,
            "energy": e.as_dict(), "radius": float(r), "tangential_dim": n}


# ------------------------------------------------------------ nodal set

def _bilinear_zeros(c00, c10, c01, c11):
    """Zeros in [0,1]^2 of u(s, t) = a + b s + c t + d s t for complex corner values."""
    a = c00
    b = c10 - c00
    c = c01 - c00
    d = c11 - c10 - c01 + c00
    # s = -(a + c t)/(b + d t) must be real: Im((a + c t) conj(b + d t)) = 0
    q2 = np.imag(c * np.conj(d))
    q1 = np.imag(a * np.conj(d) + c * np.conj(b))
    q0 = np.imag(a * np.conj(b))
    scale = max(abs(q0), abs(q1), abs(q2), 1e-300)
    if abs(q2) > 1e-12 * scale:
        disc = q1 * q1 - 4 * q2 * q0
        if disc < 0:
            return []
        sq = math.sqrt(disc)
        ts = [(-q1 + sq) / (2 * q2), (-q1 - sq) / (2 * q2)]
    elif abs(q1) > 1e-12 * scale:
        ts = [-q0 / q1]
    else:
        return []
    out = []
    tol = 1e-10
    for t in ts:
        if not -tol <= t <= 1 + tol:
            continue
        den = b + d * t
        if abs(den) < 1e-300:
            continue
        s = -(a + c * t) / den
        if abs(s.imag) > 1e-6 * max(1.0, abs(s.real)) or not -tol <= s.real <= 1 + tol:
            continue
        out.append((min(max(s.real, 0.0), 1.0), min(max(t, 0.0), 1.0)))
    return out


def _slices(grid):
    if isinstance(grid, Grid2):
        return [()], grid.axes()
    tang = [range(n) for n in grid.shape[:-2]]
    return list(itertools.product(*tang)), grid.axes()


def extract_nodal_set(config: FieldConfiguration) -> np.ndarray:
    """Common zeros of Re u and Im u, slice by slice in the normal plane.

    Returns an (N, ndim) array of points ordered by slice index.
    """
    grid = config.grid
    slices, axes = _slices(grid)
    x, y = axes[-2], axes[-1]
    hx, hy = x[1] - x[0], y[1] - y[0]
    points = []
    for idx in slices:
        u = config.u[idx]
        re, im = u.real, u.imag
        corners = [re[:-1, :-1], re[1:, :-1], re[:-1, 1:], re[1:, 1:]]
        rmin, rmax = np.minimum.reduce(corners), np.maximum.reduce(corners)
        corners = [im[:-1, :-1], im[1:, :-1], im[:-1, 1:], im[1:, 1:]]
        imin, imax = np.minimum.reduce(corners), np.maximum.reduce(corners)
        cand = np.argwhere((rmin <= 0) & (rmax >= 0) & (imin <= 0) & (imax >= 0))
        found = []
        for i, j in cand:
            for s, t in _bilinear_zeros(u[i, j], u[i + 1, j], u[i, j + 1], u[i + 1, j + 1]):
                p = (x[i] + s * hx, y[j] + t * hy)
                if all(abs(p[0] - q[0]) > 1e-9 * hx or abs(p[1] - q[1]) > 1e-9 * hy for q in found):
                    found.append(p)
        tang = [axes[k][i] for k, i in enumerate(idx)]
        points.extend(tang + list(p) for p in found)
    return np.asarray(points, float).reshape(-1, grid.ndim)


# ------------------------------------------------------------ graph fit

def _second_differences(f: np.ndarray, h: float) -> np.ndarray:
    """Stack of all second differences d_ij f, shape (n, n, 2) + T."""
    n = f.ndim - 1
    out = np.empty((n, n) + f.shape)
    for i in range(n):
        for j in range(n):
            if i == j:
                out[i, j] = second_partial(f, i + 1, h)
            else:
                out[i, j] = np.gradient(np.gradient(f, h, axis=i + 1, edge_order=2), h,
                                        axis=j + 1, edge_order=2)
    return out


@dataclass
class NodalGraph:
    points: np.ndarray = field(repr=False)
    tangential_axis: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    fit_residual: float
    lipschitz: float
    second_difference_sup: float
    holder_seminorm: float
    holder_exponent: float
    mean_curvature: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {"fit_residual": self.fit_residual, "lipschitz": self.lipschitz,
                "second_difference_sup": self.second_difference_sup,
                "holder_seminorm": self.holder_seminorm, "holder_exponent": self.holder_exponent,
                "point_count": int(len(self.points))}


def fit_graph(points: np.ndarray, tangential_axis, alpha: float = 0.5,
              sheet_tolerance: float | None = None) -> NodalGraph:
    """Fit z = f(y) through nodal points binned by nearest tangential node.

    A bin whose points spread by more than ``sheet_tolerance`` in the normal
    plane is multi-sheeted, which is refused as "not graphical".
    """
    if not 0 <= alpha < 1:
        raise ValidationError("Hoelder exponent must lie in [0, 1)")
    pts = np.atleast_2d(np.asarray(points, float))
    y = np.asarray(tangential_axis, float)
    n = pts.shape[1] - 2
    if n < 1 or len(pts) == 0:
        raise ValidationError("insufficient coverage: no points with tangential coordinates")
    h = float(y[1] - y[0])
    m = y.size
    tol = 0.5 * h if sheet_tolerance is None else sheet_tolerance
    bins = np.rint((pts[:, :n] - y[0]) / h).astype(int)
    inside = np.all((bins >= 0) & (bins < m), axis=1)
    pts, bins = pts[inside], bins[inside]
    shape = (m,) * n
    flat = np.ravel_multi_index(tuple(bins.T), shape)
    counts = np.bincount(flat, minlength=m ** n)
    if np.any(counts == 0):
        raise ValidationError(f"insufficient coverage: {int(np.sum(counts == 0))} tangential cells have no nodal point")
    sums = np.stack([np.bincount(flat, pts[:, n + b], minlength=m ** n) for b in range(2)])
    mean = sums / counts
    spread = np.max(np.abs(pts[:, n:] - mean[:, flat].T), axis=1)
    if spread.max() > tol:
        raise ValidationError("not graphical: several nodal sheets over one tangential cell")
    values = mean.reshape((2,) + shape)

    lip = 0.0
    for k in range(n):
        dv = np.diff(values, axis=k + 1)
        lip = max(lip, float(np.sqrt(np.sum(dv ** 2, axis=0)).max() / h))
    D2 = _second_differences(values, h)
    mag = np.sqrt(np.sum(D2 ** 2, axis=(0, 1, 2)))
    second_sup = float(mag.max())
    flatD = D2.reshape(-1, m ** n)
    coords = np.stack(np.meshgrid(*([y] * n), indexing="ij")).reshape(n, -1)
    holder = 0.0
    for i in range(m ** n):
        dist = np.sqrt(np.sum((coords[:, i + 1:] - coords[:, i:i + 1]) ** 2, axis=0))
        if dist.size == 0:
            continue
        diff = np.sqrt(np.sum((flatD[:, i + 1:] - flatD[:, i:i + 1]) ** 2, axis=0))
        holder = max(holder, float(np.max(diff / dist ** alpha)))
    return NodalGraph(pts, y, values, float(spread.max()), lip, second_sup, holder, alpha,
                      graph_mean_curvature(values, h))


# ------------------------------------------------------------ level tubes

@dataclass
class LevelTube:
    level: float
    points: np.ndarray = field(repr=False)
    centers: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)
    clipped: bool

    def as_dict(self) -> dict:
        return {"level": self.level, "clipped": self.clipped,
                "centers": self.centers.tolist(), "radii": self.radii.tolist()}


def _circle_fit(p: np.ndarray):
    if len(p) < 3:
        return np.full(2, np.nan), np.nan
    M = np.column_stack([p[:, 0], p[:, 1], np.ones(len(p))])
    rhs = p[:, 0] ** 2 + p[:, 1] ** 2
    sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    c = sol[:2] / 2
    return c, float(np.sqrt(sol[2] + c @ c))


def modulus_level_tube(config: FieldConfiguration, t: float) -> LevelTube:
    """Marching-squares contour of |u| = t per normal slice and its best-fit circle.

    ``clipped`` is set when |u| < t somewhere on the slice boundary, i.e. the
    tube is cut by the domain.
    """
    if not 0 < t < 1:
        raise ValidationError("level must lie in (0, 1)")
    grid = config.grid
    slices, axes = _slices(grid)
    x, y = axes[-2], axes[-1]
    pts_all, centers, radii = [], [], []
    clipped = False
    for idx in slices:
        g = np.abs(config.u[idx]) - t
        edge = np.concatenate([g[0], g[-1], g[:, 0], g[:, -1]])
        clipped |= bool(np.any(edge < 0))
        contours = find_contours(g, 0.0)
        if contours:
            idx_pts = np.vstack([c[:-1] if len(c) > 1 and np.allclose(c[0], c[-1]) else c for c in contours])
            p = np.column_stack([x[0] + idx_pts[:, 0] * (x[1] - x[0]), y[0] + idx_pts[:, 1] * (y[1] - y[0])])
        else:
            p = np.zeros((0, 2))
        c, r = _circle_fit(p)
        centers.append(c)
        radii.append(r)
        tang = np.array([axes[k][i] for k, i in enumerate(idx)])
        pts_all.append(np.column_stack([np.broadcast_to(tang, (len(p), len(tang))), p]))
    tshape = grid.shape[:-2]
    return LevelTube(float(t), np.vstack(pts_all), np.array(centers).reshape(tshape + (2,)),
                     np.array(radii).reshape(tshape), clipped)
