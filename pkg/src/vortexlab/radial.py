"""Degree-one radial vortex f(r) e^{i theta}, a(r) d theta.

The profile solves the first-order system

    f' = (1 - a) f / r,      a' = r (1 - f^2) / 2,      f(0) = a(0) = 0,

with f, a -> 1 at infinity.  It is found by shooting on the slope
alpha = f'(0): too large a slope pushes f through 1, too small a slope
lets a cross 1 (after which f' < 0).  Double precision only resolves the
separatrix up to r ~ 15-18, so past the radius where the two bracketing
trajectories separate the profile continues along the decaying solution of
the linearised system, (1 - f, 1 - a) ~ c (K0(r), r K1(r)).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.special import k0e, k1e

from .errors import NumericalError, ValidationError
from .fields import FieldConfiguration, Grid2

R_START = 1e-4
ALPHA_BRACKET = (1e-3, 10.0)


def _rhs(r, y):
    f, a = y
    return [(1.0 - a) * f / r, 0.5 * r * (1.0 - f * f)]


def series_start(alpha: float, r: float) -> tuple[float, float]:
    """Two-term expansion at the origin: f = alpha r (1 - r^2/8), a = r^2 (1 - alpha^2 r^2 / 2) / 4."""
    return alpha * r * (1.0 - r * r / 8.0), 0.25 * r * r * (1.0 - 0.5 * alpha * alpha * r * r)


def _overshoot(r, y):
    return y[0] - 1.0


def _undershoot(r, y):
    return y[1] - 1.0


_overshoot.terminal = True
_overshoot.direction = 1
_undershoot.terminal = True
_undershoot.direction = 1


@dataclass
class _Shot:
    alpha: float
    kind: str          # "over", "under" or "none"
    r_end: float
    sol: object


def _shoot(alpha, r_max, rtol, r_start=R_START):
    y0 = series_start(alpha, r_start)
    sol = solve_ivp(_rhs, (r_start, r_max), y0, method="RK45", rtol=rtol, atol=rtol * 1e-3,
                    events=(_overshoot, _undershoot), dense_output=True)
    if sol.status == -1:
        raise NumericalError(f"radial integration failed at alpha={alpha!r}: {sol.message}")
    if len(sol.t_events[0]):
        return _Shot(alpha, "over", float(sol.t_events[0][0]), sol.sol)
    if len(sol.t_events[1]):
        return _Shot(alpha, "under", float(sol.t_events[1][0]), sol.sol)
    return _Shot(alpha, "none", r_max, sol.sol)


@dataclass(frozen=True)
class RadialProfile:
    """Samples of (f, a) and their derivatives on a uniform radial grid starting at 0."""

    r: np.ndarray
    f: np.ndarray
    a: np.ndarray
    f_prime: np.ndarray
    a_prime: np.ndarray
    shoot_slope: float
    tol: float = float("nan")
    splice_radius: float = float("nan")
    _spline: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        arrs = [np.array(x, float) for x in (self.r, self.f, self.a, self.f_prime, self.a_prime)]
        n = arrs[0].size
        if any(x.shape != (n,) for x in arrs):
            raise ValidationError("profile arrays must be one-dimensional and of equal length")
        if n < 5 or arrs[0][0] != 0.0 or np.any(np.diff(arrs[0]) <= 0):
            raise ValidationError("radial grid must start at 0, increase strictly and have >= 5 nodes")
        for name, x in zip(("r", "f", "a", "f_prime", "a_prime"), arrs):
            x.flags.writeable = False
            object.__setattr__(self, name, x)

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    @property
    def dr(self) -> float:
        return float(self.r[1] - self.r[0])

    def validate(self, tol: float = 0.0):
        """Check the invariants of a solved profile; raises NumericalError."""
        if abs(self.f[0]) > tol or abs(self.a[0]) > tol:
            raise NumericalError("profile does not vanish at the origin")
        if np.any(self.f < 0) or np.any(self.a < 0) or np.any(self.f > 1) or np.any(self.a > 1):
            raise NumericalError("profile leaves [0, 1]")
        if np.any(np.diff(self.f) < 0) or np.any(np.diff(self.a) < 0):
            raise NumericalError("profile is not monotone")

    # Interpolation works on the regular quotients f/r and a/r^2, which are
    # smooth even functions, so sampling near the vortex core needs no
    # special treatment.
    def _splines(self):
        if self._spline is None:
            r, f, a, fp, ap = self.r, self.f, self.a, self.f_prime, self.a_prime
            qf = np.empty_like(r)
            qa = np.empty_like(r)
            dqf = np.zeros_like(r)
            dqa = np.zeros_like(r)
            qf[0], qa[0] = self.shoot_slope, 0.25
            rr = r[1:]
            qf[1:] = f[1:] / rr
            qa[1:] = a[1:] / rr ** 2
            dqf[1:] = (fp[1:] * rr - f[1:]) / rr ** 2
            dqa[1:] = (ap[1:] * rr - 2 * a[1:]) / rr ** 3
            object.__setattr__(self, "_spline", {
                "qf": CubicHermiteSpline(r, qf, dqf),
                "qa": CubicHermiteSpline(r, qa, dqa),
            })
        return self._spline

    def _check_range(self, s):
        if np.max(s, initial=0.0) > self.r_max * (1 + 1e-12):
            raise ValidationError(
                f"profile coverage insufficient: need r up to {float(np.max(s)):.4g}, have {self.r_max:.4g}")

    def f_over_r(self, s):
        s = np.asarray(s, float)
        self._check_range(s)
        return self._splines()["qf"](s)

    def a_over_r2(self, s):
        s = np.asarray(s, float)
        self._check_range(s)
        return self._splines()["qa"](s)

    def f_at(self, s):
        return np.clip(np.asarray(s, float) * self.f_over_r(s), 0.0, 1.0)

    def a_at(self, s):
        return np.clip(np.asarray(s, float) ** 2 * self.a_over_r2(s), 0.0, 1.0)

    def f_prime_at(self, s):
        """f' = (1 - a) f / r, evaluated without dividing by r."""
        return (1.0 - self.a_at(s)) * self.f_over_r(s)

    def a_prime_over_r(self, s):
        """a'/r = (1 - f^2)/2; this is also the curvature F_12 of the vortex."""
        return 0.5 * (1.0 - self.f_at(s) ** 2)


def solve_bogomolny(r_max: float = 20.0, tol: float = 1e-8, dr: float = 0.01,
                    r_start: float = R_START) -> RadialProfile:
    if r_max < 10:
        raise ValidationError("r_max must be at least 10")
    if not 0 < tol <= 1e-6:
        raise ValidationError("tol must lie in (0, 1e-6]")
    rtol = min(tol * 1e-3, 1e-11)
    # integrate well past r_max so that every shot is classified by an event
    r_shoot = r_max + 20.0

    lo, hi = ALPHA_BRACKET
    s_lo = _shoot(lo, r_shoot, rtol, r_start)
    s_hi = _shoot(hi, r_shoot, rtol, r_start)
    if s_lo.kind != "under" or s_hi.kind != "over":
        raise NumericalError("shooting bracket failure")
    for _ in range(200):
        mid = 0.5 * (s_lo.alpha + s_hi.alpha)
        if not s_lo.alpha < mid < s_hi.alpha:
            break
        s_mid = _shoot(mid, r_shoot, rtol, r_start)
        if s_mid.kind == "none":
            raise NumericalError("shot reached the integration limit without classification")
        if s_mid.kind == "over":
            s_hi = s_mid
        else:
            s_lo = s_mid

    n = int(round(r_max / dr)) + 1
    r = np.linspace(0.0, r_max, n)
    alpha = 0.5 * (s_lo.alpha + s_hi.alpha)
    r_trust = min(s_lo.r_end, s_hi.r_end)
    inner = (r >= r_start) & (r <= r_trust)
    f = np.zeros(n)
    a = np.zeros(n)
    y_lo = s_lo.sol(r[inner])
    y_hi = s_hi.sol(r[inner])
    f[inner] = 0.5 * (y_lo[0] + y_hi[0])
    a[inner] = 0.5 * (y_lo[1] + y_hi[1])
    small = r < r_start
    f[small], a[small] = series_start(alpha, r[small])

    # splice where the bracketing trajectories disagree by 1e-4 of the tail
    spread = np.maximum(np.abs(y_hi[0] - y_lo[0]) / np.maximum(1 - f[inner], 1e-300),
                        np.abs(y_hi[1] - y_lo[1]) / np.maximum(1 - a[inner], 1e-300))
    bad = np.nonzero(spread > 1e-4)[0]
    idx_inner = np.nonzero(inner)[0]
    k_star = idx_inner[bad[0] - 1] if bad.size else idx_inner[-1]
    if r[k_star] < 6.0:
        raise NumericalError("shooting did not resolve the profile beyond r = 6")
    r_star = r[k_star]
    p_star, q_star = 1.0 - f[k_star], 1.0 - a[k_star]
    tail = r > r_star
    rt = r[tail]
    f[tail] = 1.0 - p_star * k0e(rt) / k0e(r_star) * np.exp(-(rt - r_star))
    a[tail] = 1.0 - q_star * rt * k1e(rt) / (r_star * k1e(r_star)) * np.exp(-(rt - r_star))

    fp = np.empty(n)
    ap = np.empty(n)
    fp[0], ap[0] = alpha, 0.0
    fp[1:] = (1.0 - a[1:]) * f[1:] / r[1:]
    ap[1:] = 0.5 * r[1:] * (1.0 - f[1:] ** 2)
    prof = RadialProfile(r, f, a, fp, ap, float(alpha), float(tol), float(r_star))
    prof.validate()
    return prof


def _fd4(y: np.ndarray, h: float, parity: int) -> np.ndarray:
    """Fourth-order first derivative; ``parity`` (+1 even, -1 odd) reflects the data through r = 0."""
    ext = np.concatenate([parity * y[2:0:-1], y])
    d = np.empty_like(y)
    d[:-2] = (-ext[4:] + 8 * ext[3:-1] - 8 * ext[1:-3] + ext[:-4])[: y.size - 2] / (12 * h)
    y4 = y[-5:]
    d[-2] = (-y4[0] + 6 * y4[1] - 18 * y4[2] + 10 * y4[3] + 3 * y4[4]) / (12 * h)
    d[-1] = (3 * y4[0] - 16 * y4[1] + 36 * y4[2] - 48 * y4[3] + 25 * y4[4]) / (12 * h)
    return d


def first_order_residual(profile: RadialProfile) -> tuple[float, float]:
    """Sup norms of a'/r - (1 - f^2)/2 and f' - (1 - a) f / r over r > 0.

    Derivatives are taken from the sampled values by fourth-order
    differences, independently of the stored derivative samples.
    """
    r, f, a = profile.r, profile.f, profile.a
    h = profile.dr
    dfd = _fd4(f, h, -1)
    dad = _fd4(a, h, +1)
    rr = r[1:]
    res_a = dad[1:] / rr - 0.5 * (1 - f[1:] ** 2)
    res_f = dfd[1:] - (1 - a[1:]) * f[1:] / rr
    return float(np.max(np.abs(res_a))), float(np.max(np.abs(res_f)))


def second_order_residual(profile: RadialProfile) -> tuple[float, float]:
    """Sup norms of the two second-order radial equations on interior nodes r > 0."""
    r, f, a, fp, ap = profile.r, profile.f, profile.a, profile.f_prime, profile.a_prime
    h = np.diff(r)
    fpp = (fp[2:] - fp[:-2]) / (h[1:] + h[:-1])
    app = (ap[2:] - ap[:-2]) / (h[1:] + h[:-1])
    rr, ff, aa = r[1:-1], f[1:-1], a[1:-1]
    res_f = -fpp - fp[1:-1] / rr + (1 - aa) ** 2 * ff / rr ** 2 - 0.5 * ff * (1 - ff ** 2)
    res_a = -app + ap[1:-1] / rr - ff ** 2 * (1 - aa)
    return float(np.max(np.abs(res_f))), float(np.max(np.abs(res_a)))


@dataclass(frozen=True)
class DecayFit:
    rate_f: float
    rate_a: float


def decay_fit(profile: RadialProfile, r_lo: float, r_hi: float) -> DecayFit:
    """Least-squares exponential rates of 1 - f and 1 - a on [r_lo, r_hi]."""
    if r_lo < 5 or r_hi > profile.r_max + 1e-12 or r_hi <= r_lo:
        raise ValidationError("decay window must satisfy 5 <= r_lo < r_hi <= r_max")
    w = (profile.r >= r_lo) & (profile.r <= r_hi)
    if w.sum() < 10:
        raise ValidationError("decay window needs at least 10 nodes")
    rr = profile.r[w]
    pf, pa = 1 - profile.f[w], 1 - profile.a[w]
    if np.any(pf <= 0) or np.any(pa <= 0):
        raise NumericalError("1 - f or 1 - a is not positive in the window (profile overshoot)")
    sf = np.polyfit(rr, np.log(pf), 1)[0]
    sa = np.polyfit(rr, np.log(pa), 1)[0]
    return DecayFit(float(-sf), float(-sa))


def sample_vortex(profile: RadialProfile, grid, center=(0.0, 0.0), epsilon: float = 1.0) -> FieldConfiguration:
    """u = f(rho/eps) e^{i theta},  A = a(rho/eps) d theta  about ``center`` on a planar grid."""
    if grid.ndim != 2:
        raise ValidationError("sample_vortex works on planar grids")
    X, Y = grid.mesh()
    x, y = X - center[0], Y - center[1]
    s = np.hypot(x, y) / epsilon
    qf = profile.f_over_r(s)
    qa = profile.a_over_r2(s)
    u = qf * (x + 1j * y) / epsilon
    A = np.stack([-qa * y, qa * x]) / epsilon ** 2
    return FieldConfiguration(u, A, epsilon, grid)


def winding_number(u: np.ndarray, loop: np.ndarray) -> int:
    """Degree of ``u`` along a closed loop of complex samples (phase accumulated / 2 pi)."""
    ph = np.angle(np.append(loop, loop[:1]))
    return int(round(np.sum(np.angle(np.exp(1j * np.diff(ph)))) / (2 * math.pi)))
