"""Fermi-coordinate geometry of graphs over B^n and the concentrating vortex ansatz.

The base is flat ``R^n`` and the normal frame is taken constant, so the normal
connection vanishes.  A chart stores the graph ``h: B^n -> R^2`` sampled on the
tangential grid together with its finite-difference derivatives.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .fields import (FieldConfiguration, Grid2, GridN, Perturbation, euler_lagrange_residual,
                     partial, second_partial)
from .radial import RadialProfile

# ---------------------------------------------------------------- chart


def _graph_geometry(dh: np.ndarray, d2h: np.ndarray):
    """Metric G, orthonormal normal frame and second fundamental form of y -> (y, h(y)).

    ``dh`` has shape T + (n, 2) (entry [j, b] = d_j h^b) and ``d2h`` shape
    T + (n, n, 2).  Returns G (T+(n,n)), normal frame nu (T+(2, n+2)) and
    Pi (T+(2, n, n)) in the coordinate basis, Pi^a_ij = <d_ij X, nu_a>.
    """
    n = dh.shape[-2]
    G = np.eye(n) + np.einsum("...ib,...jb->...ij", dh, dh)
    T = dh.shape[:-2]
    nu = np.zeros(T + (2, n + 2))
    for b in range(2):
        v = np.zeros(T + (n + 2,))
        v[..., :n] = -dh[..., :, b]
        v[..., n + b] = 1.0
        for c in range(b):
            v -= np.sum(v * nu[..., c, :], axis=-1)[..., None] * nu[..., c, :]
        nu[..., b, :] = v / np.linalg.norm(v, axis=-1)[..., None]
    Pi = np.einsum("...ijb,...ab->...aij", d2h, nu[..., n:])
    return G, nu, Pi


def _inv_sqrt(G: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(G)
    return np.einsum("...ik,...k,...jk->...ij", V, 1 / np.sqrt(w), V)


@dataclass(frozen=True)
class FermiChart:
    """Graph h over the tangential grid with derivatives, second fundamental form and tube radius."""

    tangential_dim: int
    tangential_axis: np.ndarray
    h: np.ndarray
    h_first: np.ndarray
    h_second: np.ndarray
    metric: np.ndarray = field(repr=False)
    normal_frame: np.ndarray = field(repr=False)
    second_fundamental_form: np.ndarray = field(repr=False)
    mean_curvature: np.ndarray = field(repr=False)
    tube_radius: float = 1.0

    @classmethod
    def from_samples(cls, tangential_dim: int, tangential_axis, h, tube_radius: float) -> "FermiChart":
        """``h`` has shape (2,) + (m,)*n; derivatives come from centered differences."""
        n = int(tangential_dim)
        y = np.asarray(tangential_axis, float)
        h = np.asarray(h, float)
        if h.shape != (2,) + (y.size,) * n:
            raise ValidationError(f"graph samples must have shape {(2,) + (y.size,) * n}, got {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValidationError("graph samples contain non-finite values")
        if tube_radius <= 0:
            raise ValidationError("tube radius must be positive")
        if y.size < 4:
            raise ValidationError("need at least 4 tangential nodes")
        dy = y[1] - y[0]
        if not np.allclose(np.diff(y), dy, rtol=1e-9):
            raise ValidationError("tangential axis must be uniform")
        hb = np.moveaxis(h, 0, -1)
        first = np.stack([partial(hb, j, dy) for j in range(n)], axis=-2)
        second = np.empty(hb.shape[:-1] + (n, n, 2))
        for i in range(n):
            for j in range(n):
                if i == j:
                    second[..., i, j, :] = second_partial(hb, i, dy)
                else:
                    second[..., i, j, :] = partial(first[..., j, :], i, dy)
        G, nu, Pi = _graph_geometry(first, second)
        H = np.einsum("...ij,...aij->...a", np.linalg.inv(G), Pi)
        return cls(n, y, h, first, second, G, nu, Pi, H, float(tube_radius))

    @classmethod
    def from_function(cls, tangential_dim: int, tangential_axis, func, tube_radius: float) -> "FermiChart":
        """Sample ``func(*y) -> (h1, h2)`` on the tangential grid."""
        y = np.asarray(tangential_axis, float)
        Y = np.meshgrid(*([y] * tangential_dim), indexing="ij")
        h = np.asarray(func(*Y), float)
        h = np.broadcast_to(h, (2,) + Y[0].shape).copy()
        return cls.from_samples(tangential_dim, y, h, tube_radius)

    @classmethod
    def flat(cls, tangential_dim: int, tangential_axis, tube_radius: float) -> "FermiChart":
        y = np.asarray(tangential_axis, float)
        return cls.from_samples(tangential_dim, y, np.zeros((2,) + (y.size,) * tangential_dim), tube_radius)

    @property
    def spacing(self) -> float:
        return float(self.tangential_axis[1] - self.tangential_axis[0])

    def laplacian_h(self) -> np.ndarray:
        """Flat Laplacian of each component, shape (2,) + T."""
        return np.moveaxis(np.einsum("...iib->...b", self.h_second), -1, 0)

    def orthonormal_second_fundamental_form(self) -> np.ndarray:
        E = _inv_sqrt(self.metric)
        return np.einsum("...ik,...akl,...lj->...aij", E, self.second_fundamental_form, E)

    def describe(self) -> dict:
        return {"tangential_dim": self.tangential_dim, "tube_radius": self.tube_radius,
                "tangential_axis": {"start": float(self.tangential_axis[0]),
                                    "spacing": self.spacing, "count": int(self.tangential_axis.size)}}


def graph_mean_curvature(h: np.ndarray, spacing: float) -> np.ndarray:
    """Mean curvature vector components (2,) + T of the graph of ``h`` (shape (2,) + T)."""
    n = h.ndim - 1
    y = np.arange(h.shape[1]) * spacing
    chart = FermiChart.from_samples(n, y, h, 1.0)
    return np.moveaxis(chart.mean_curvature, -1, 0)


def _node(y) -> tuple:
    return tuple(int(i) for i in np.atleast_1d(y))


def _check_z(chart: FermiChart, z) -> np.ndarray:
    z = np.asarray(z, float)
    if z.shape != (2,):
        raise ValidationError("normal coordinate z must have two components")
    if np.hypot(*z) > chart.tube_radius * (1 + 1e-12):
        raise ValidationError(f"|z| = {np.hypot(*z):.4g} exceeds the tube radius {chart.tube_radius:.4g}")
    return z


def metric_expansion(chart: FermiChart, y, z) -> np.ndarray:
    """g_ij(y, z) = delta - 2 Pi^a z^a + sum_k Pi^a_ik Pi^b_jk z^a z^b in an orthonormal tangent frame.

    ``y`` is a tangential node index (tuple of ints).
    """
    z = _check_z(chart, z)
    P = chart.orthonormal_second_fundamental_form()[_node(y)]
    Pz = np.einsum("a,aij->ij", z, P)
    return np.eye(chart.tangential_dim) - 2 * Pz + Pz @ Pz


def _coordinate_metric(chart: FermiChart, z) -> np.ndarray:
    """Coordinate-basis metric of the level set M_z over the whole tangential grid."""
    G, Pi = chart.metric, chart.second_fundamental_form
    Pz = np.einsum("a,...aij->...ij", z, Pi)
    return G - 2 * Pz + Pz @ np.linalg.inv(G) @ Pz


def geometric_coefficients(chart: FermiChart, y, z, dz: float = 1e-5) -> dict:
    """a^{ij}, b_s^{ik}, c^k, d_j^{bk} and H_z^b of the level set M_z at tangential node ``y``.

    Tangential derivatives are centered differences on the chart grid,
    normal derivatives centered differences with step ``dz``.
    """
    z = _check_z(chart, z)
    n = chart.tangential_dim
    hy = chart.spacing

    def pieces(zz):
        # the truncated metric is a square, so focal points show up in G - Pi z instead
        shape_op = chart.metric - np.einsum("a,...aij->...ij", zz, chart.second_fundamental_form)
        if np.any(np.linalg.eigvalsh(shape_op) <= 0):
            raise NumericalError("tube exceeds focal radius")
        g = _coordinate_metric(chart, zz)
        return g, np.linalg.inv(g), np.sqrt(np.linalg.det(g))

    g, gi, sq = pieces(z)
    node = _node(y)
    # tangential derivatives of sqrt(g) g^{ij} and g^{ij} g^{kt} sqrt(g)
    sg = sq[..., None, None] * gi
    dsg = np.stack([partial(sg, j, hy) for j in range(n)])          # [j] + T + (i, k)
    c = np.einsum("j...jk->...k", dsg) / sq[..., None]
    quad = np.einsum("...ij,...kt,...->...ijkt", gi, gi, sq)
    dquad = np.stack([partial(quad, j, hy) for j in range(n)])      # [j] + T + (i, j', k, t)
    b = np.einsum("...st,j...ijkt->...sik", g, dquad) / sq[..., None, None, None]

    H = np.zeros(2)
    d = np.zeros((n, 2, n))
    for beta in range(2):
        e = np.zeros(2)
        e[beta] = dz
        _, gip, sqp = pieces(z + e)
        _, gim, sqm = pieces(z - e)
        H[beta] = -(sqp[node] - sqm[node]) / (2 * dz) / sq[node]
        dgs = (gip[node] * sqp[node] - gim[node] * sqm[node]) / (2 * dz)
        d[:, beta, :] = g[node] @ dgs / sq[node]
    return {"a": gi[node], "b": b[node], "c": c[node], "d": d, "H_z": H}


# ------------------------------------------------------------- cutoff vortex

def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10 - 15 * t + 6 * t ** 2)


def _smoothstep_d(t):
    inside = (t > 0) & (t < 1)
    return np.where(inside, 30 * t ** 2 * (1 - t) ** 2, 0.0)


def _smoothstep_dd(t):
    inside = (t > 0) & (t < 1)
    return np.where(inside, 60 * t * (1 - t) * (1 - 2 * t), 0.0)


@dataclass(frozen=True)
class CutoffVortex:
    """Blend of the vortex with the pure gauge pair (e^{i theta}, d theta) between two radii."""

    profile: RadialProfile
    epsilon: float
    inner_radius: float
    outer_radius: float
    residual_radius: np.ndarray = field(repr=False)
    residual_u: np.ndarray = field(repr=False)
    residual_A: np.ndarray = field(repr=False)

    def cutoff(self, s, order: int = 0):
        """zeta and its radial derivatives (zeta = 1 inside, 0 outside)."""
        w = self.outer_radius - self.inner_radius
        t = (np.asarray(s, float) - self.inner_radius) / w
        if order == 0:
            return 1 - _smoothstep(t)
        if order == 1:
            return -_smoothstep_d(t) / w
        return -_smoothstep_dd(t) / w ** 2

    def _profile(self, s):
        s = np.minimum(np.asarray(s, float), self.outer_radius)
        return self.profile.f_at(s), self.profile.a_at(s), self.profile.f_prime_at(s)

    def f_over_r(self, s):
        s = np.asarray(s, float)
        z = self.cutoff(s)
        inner = self.profile.f_over_r(np.minimum(s, self.outer_radius))
        return z * inner + (1 - z) / np.where(s > 0, s, 1.0)

    def a_over_r2(self, s):
        s = np.asarray(s, float)
        z = self.cutoff(s)
        inner = self.profile.a_over_r2(np.minimum(s, self.outer_radius))
        return z * inner + (1 - z) / np.where(s > 0, s, 1.0) ** 2

    def f(self, s):
        return np.asarray(s, float) * self.f_over_r(s)

    def f_prime(self, s):
        f, _, fp = self._profile(s)
        return self.cutoff(s, 1) * (f - 1) + self.cutoff(s) * fp

    def curvature(self, s):
        """Blended F_12 = alpha'/r, with alpha = zeta a + 1 - zeta."""
        s = np.asarray(s, float)
        f, a, _ = self._profile(s)
        z, z1 = self.cutoff(s), self.cutoff(s, 1)
        safe = np.where(s > 0, s, 1.0)
        return np.where(s > 0, z1 * (a - 1) / safe, 0.0) + z * 0.5 * (1 - f ** 2)

    def residual_sup(self) -> float:
        return float(max(np.abs(self.residual_u).max(), np.abs(self.residual_A).max()))

    def sample(self, grid: Grid2, center=(0.0, 0.0), epsilon: float | None = None) -> FieldConfiguration:
        eps = self.epsilon if epsilon is None else epsilon
        X, Y = grid.mesh()
        x, y = X - center[0], Y - center[1]
        s = np.hypot(x, y) / eps
        u = self.f_over_r(s) * (x + 1j * y) / eps
        qa = self.a_over_r2(s)
        A = np.stack([-qa * y, qa * x]) / eps ** 2
        return FieldConfiguration(u, A, eps, grid)


def _blend_residual(cv: CutoffVortex, r: np.ndarray):
    """Radial amplitudes of the eps = 1 residual (S_u e^{-i theta}, S_A . e_theta) of the blend."""
    f, a, fp = cv.profile.f_at(r), cv.profile.a_at(r), cv.profile.f_prime_at(r)
    ap = r * 0.5 * (1 - f ** 2)
    fpp = (-ap * f + (1 - a) * fp) / r - (1 - a) * f / r ** 2
    app = 0.5 * (1 - f ** 2) - r * f * fp
    z, z1, z2 = cv.cutoff(r), cv.cutoff(r, 1), cv.cutoff(r, 2)
    F = z * f + 1 - z
    Fp = z1 * (f - 1) + z * fp
    Fpp = z2 * (f - 1) + 2 * z1 * fp + z * fpp
    al = z * a + 1 - z
    alp = z1 * (a - 1) + z * ap
    alpp = z2 * (a - 1) + 2 * z1 * ap + z * app
    su = -Fpp - Fp / r + (1 - al) ** 2 * F / r ** 2 - 0.5 * (1 - F ** 2) * F
    sa = -(alpp * r - alp) / r ** 2 - F ** 2 * (1 - al) / r
    return su, sa


def build_cutoff_vortex(epsilon: float, profile: RadialProfile, radial_spacing: float = 0.01) -> CutoffVortex:
    """Cutoff between 3|log eps| and 6|log eps|; the residual is evaluated on an annulus around it."""
    if not 0 < epsilon <= 0.2:
        raise ValidationError("cutoff vortex requires 0 < epsilon <= 0.2")
    L = abs(math.log(epsilon))
    r_in, r_out = 3 * L, 6 * L
    if profile.r_max < r_out + 2:
        raise ValidationError(f"profile coverage insufficient: need r_max >= {r_out + 2:.4g}, have {profile.r_max:.4g}")
    cv = CutoffVortex(profile, float(epsilon), r_in, r_out, np.empty(0), np.empty(0), np.empty(0))
    r = np.arange(max(r_in - 1, radial_spacing), r_out + 2, radial_spacing)
    su, sa = _blend_residual(cv, r)
    return CutoffVortex(profile, float(epsilon), r_in, r_out, r, su, sa)


# ------------------------------------------------------------------ ansatz

def _modes(cv: CutoffVortex, w1, w2):
    """Approximate zero modes v_1, v_2 (eps = 1 units) at normal offsets w."""
    s = np.hypot(w1, w2)
    fp = cv.f_prime(s)
    F = cv.curvature(s)
    zero = np.zeros_like(F)
    return (fp.astype(complex), (zero, F)), (1j * fp, (-F, zero))


def build_ansatz(chart: FermiChart, epsilon: float, cutoff: CutoffVortex, grid: GridN) -> FieldConfiguration:
    """u = u~((z - h(y))/eps), A = (1/eps) A~((z - h(y))/eps) with dz components only."""
    if not isinstance(grid, GridN):
        raise ValidationError("build_ansatz needs a cylinder grid")
    if grid.tangential_dim != chart.tangential_dim or grid.tangential_count != chart.tangential_axis.size:
        raise ValidationError("chart and grid tangential layouts differ")
    if not np.allclose(grid.tangential_coords(), chart.tangential_axis):
        raise ValidationError("chart and grid tangential coordinates differ")
    need = float(np.abs(chart.h).max()) + 8 * epsilon * abs(math.log(epsilon))
    if grid.normal.half_width < need:
        raise ValidationError(f"normal extent {grid.normal.half_width:.4g} below the required {need:.4g}")
    n = chart.tangential_dim
    X = grid.mesh()
    hb = [chart.h[b][(...,) + (None, None)] for b in range(2)]
    w1 = (X[n] - hb[0]) / epsilon
    w2 = (X[n + 1] - hb[1]) / epsilon
    s = np.hypot(w1, w2)
    u = cutoff.f_over_r(s) * (w1 + 1j * w2)
    qa = cutoff.a_over_r2(s)
    A = np.zeros((n + 2,) + grid.shape)
    A[n] = -qa * w2 / epsilon
    A[n + 1] = qa * w1 / epsilon
    return FieldConfiguration(u, A, epsilon, grid)


def _offsets(chart: FermiChart, grid: GridN, epsilon: float):
    n = chart.tangential_dim
    z1, z2 = np.meshgrid(*grid.normal.axes(), indexing="ij")
    pad = (...,) + (None, None)
    return ((z1 - chart.h[0][pad]) / epsilon, (z2 - chart.h[1][pad]) / epsilon)


@dataclass
class AnsatzResidual:
    residual: Perturbation
    coefficients: np.ndarray
    mode_norms: np.ndarray
    prediction: np.ndarray

    def normalized(self) -> np.ndarray:
        return self.coefficients / self.mode_norms.reshape((2,) + (1,) * (self.coefficients.ndim - 1))

    def as_dict(self) -> dict:
        return {"coefficients": self.coefficients.tolist(), "mode_norms": self.mode_norms.tolist(),
                "prediction": self.prediction.tolist()}


def _project(chart, grid, epsilon, cutoff, phi, omega_normal):
    """Per tangential node: int <(phi, omega), v_b((z - h)/eps)> dw in eps = 1 units."""
    w1, w2 = _offsets(chart, grid, epsilon)
    wn = grid.normal.weights() / epsilon ** 2
    modes = _modes(cutoff, w1, w2)
    out = []
    norms = []
    for mphi, (m1, m2) in modes:
        dens = np.real(phi * np.conj(mphi)) + omega_normal[0] * m1 + omega_normal[1] * m2
        out.append(np.sum(dens * wn, axis=(-2, -1)))
        norms.append(np.sum((np.abs(mphi) ** 2 + m1 ** 2 + m2 ** 2) * wn, axis=(-2, -1)))
    return np.stack(out), np.stack(norms)


def ansatz_residual(ansatz: FieldConfiguration, chart: FermiChart, epsilon: float,
                    cutoff: CutoffVortex) -> AnsatzResidual:
    """Strong-form residual on the cylinder and its projections onto the approximate zero modes.

    The residual is rescaled to (S_u, eps S_A) and the coefficient is
    ``c_b(y) = -(1/eps) int <S~, v_b(w)> dw`` with w = (z - h(y))/eps, so a
    normal displacement law reads c_b / |v_b|^2 = -(H^b + Lap h^b) with H = 0
    for the flat base.
    """
    n = chart.tangential_dim
    S = euler_lagrange_residual(ansatz)
    coeff, norms = _project(chart, ansatz.grid, epsilon, cutoff, S.phi, epsilon * S.omega[n:])
    coeff = -coeff / epsilon
    norm = norms.reshape(2, -1).mean(axis=1)
    return AnsatzResidual(S, coeff, norm, -chart.laplacian_h())


def project_orthogonality(perturbation: Perturbation, chart: FermiChart, cutoff: CutoffVortex,
                          grid: GridN, epsilon: float) -> dict:
    """Translational projections per tangential node and the pointwise gauge-orthogonality field.

    Modes are the eps-scaled approximate zero modes centred at z = h(y); the
    projections use the eps-weighted product over the normal plane.
    """
    n = chart.tangential_dim
    phi = perturbation.phi
    omega = perturbation.omega
    # eps-scaled modes: phi/eps, omega/eps^2; product weight eps^2 on omega
    w1, w2 = _offsets(chart, grid, epsilon)
    wn = grid.normal.weights()
    coeffs = []
    for mphi, (m1, m2) in _modes(cutoff, w1, w2):
        dens = np.real(phi * np.conj(mphi / epsilon)) + omega[n] * m1 + omega[n + 1] * m2
        coeffs.append(np.sum(dens * wn, axis=(-2, -1)))
    u0 = build_ansatz(chart, epsilon, cutoff, grid).u
    div = sum(partial(omega[k], k, h) for k, h in enumerate(grid.spacings))
    gauge = -epsilon ** 2 * div + np.imag(np.conj(u0) * phi)
    return {"coefficients": np.stack(coeffs), "gauge_residual": gauge}
