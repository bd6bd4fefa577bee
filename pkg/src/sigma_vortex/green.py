"""Newtonian potentials Gamma * F on the plane and their far-field decay.

Gamma(x) = -(1/2 pi) ln|x|, so -Delta (Gamma * F) = F and a density of mass
m has potential -(m / 2 pi) ln|x| + o(1) at infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicHermiteSpline, RegularGridInterpolator

from .mesh import PlanarGrid, log_tail_nodes

PointFn = Callable[[np.ndarray], np.ndarray]


class NonIntegrable(ValueError):
    """The density is not integrable over the plane."""


class MeshTooCoarse(RuntimeError):
    """The planar grid does not resolve the density to the requested tolerance."""


# ---------------------------------------------------------------- decay classes

@dataclass(frozen=True)
class CompactSupport:
    R: float


@dataclass(frozen=True)
class PowerDecay:
    """|F(x)| <= c |x|^-tau for |x| >= r."""

    tau: float
    c: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        if not self.tau > 2:
            raise ValueError("power decay needs tau > 2")

    @property
    def exponent(self) -> float:
        return (self.tau - 2) / (self.tau - 1)


@dataclass(frozen=True)
class LogDecay:
    """|F(x)| <= c |x|^-2 (ln|x|)^-nu for |x| >= r."""

    nu: float
    c: float = 1.0
    r: float = math.e

    def __post_init__(self):
        if not self.nu > 2:
            raise ValueError("log decay needs nu > 2")


DecayClass = Union[CompactSupport, PowerDecay, LogDecay]


def _norm(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.hypot(x[..., 0], x[..., 1])


@dataclass(frozen=True)
class DensitySpec:
    """A density on the plane; ``profile`` is set for radial densities."""

    F: PointFn
    decay: DecayClass
    declared_mass: Optional[float] = None
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = None
    breakpoints: tuple[float, ...] = ()

    @classmethod
    def radial(cls, profile, decay: DecayClass, declared_mass: Optional[float] = None,
               breakpoints: tuple[float, ...] = ()) -> "DensitySpec":
        return cls(lambda x: profile(_norm(x)), decay, declared_mass, profile, tuple(breakpoints))

    @property
    def is_radial(self) -> bool:
        return self.profile is not None

    def __add__(self, other: "DensitySpec") -> "DensitySpec":
        return combine(1.0, self, other)


def _slower(d1: DecayClass, d2: DecayClass) -> DecayClass:
    order = {CompactSupport: 0, PowerDecay: 1, LogDecay: 2}
    if order[type(d1)] != order[type(d2)]:
        return d1 if order[type(d1)] > order[type(d2)] else d2
    if isinstance(d1, CompactSupport):
        return CompactSupport(max(d1.R, d2.R))
    if isinstance(d1, PowerDecay):
        return d1 if d1.tau <= d2.tau else d2
    return d1 if d1.nu <= d2.nu else d2


def combine(alpha: float, f1: DensitySpec, f2: DensitySpec) -> DensitySpec:
    """alpha F1 + F2, radial when both are."""
    mass = None
    if f1.declared_mass is not None and f2.declared_mass is not None:
        mass = alpha * f1.declared_mass + f2.declared_mass
    decay = _slower(f1.decay, f2.decay)
    bps = tuple(sorted(set(f1.breakpoints) | set(f2.breakpoints)))
    if f1.is_radial and f2.is_radial:
        p1, p2 = f1.profile, f2.profile
        return DensitySpec.radial(lambda r: alpha * p1(r) + p2(r), decay, mass, bps)
    g1, g2 = f1.F, f2.F
    return DensitySpec(lambda x: alpha * g1(x) + g2(x), decay, mass, None, bps)


# ---------------------------------------------------------------- sample densities

def annulus_dipole() -> DensitySpec:
    """+1 on |x| < 1, -1 on 1 < |x| < sqrt 2: zero mean, L1 norm 2 pi."""
    s2 = math.sqrt(2.0)
    prof = lambda r: np.where(np.asarray(r) < 1.0, 1.0, np.where(np.asarray(r) < s2, -1.0, 0.0))
    return DensitySpec.radial(prof, CompactSupport(s2), 0.0, (1.0, s2))


def power_tail_density(tau: float = 3.0) -> DensitySpec:
    """r^-tau for r >= 1 balanced by a constant on the unit disk (zero mean)."""
    c = 2.0 / (tau - 2.0)

    def prof(r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(r >= 1.0, np.maximum(r, 1.0) ** (-tau), -c)

    return DensitySpec.radial(prof, PowerDecay(tau, 1.0, 1.0), 0.0, (1.0,))


def log_tail_density(nu: float = 4.0) -> DensitySpec:
    """r^-2 (ln r)^-nu for r >= e balanced by a constant on B_e (zero mean)."""
    c = 2.0 / ((nu - 1.0) * math.e**2)

    def prof(r):
        r = np.asarray(r, dtype=float)
        rs = np.maximum(r, math.e)
        return np.where(r >= math.e, np.exp(-2 * np.log(rs)) * np.log(rs) ** (-nu), -c)

    return DensitySpec.radial(prof, LogDecay(nu, 1.0, math.e), 0.0, (math.e,))


def gaussian_bump(amplitude: float = 1.0, width: float = 1.0, center=(0.0, 0.0)) -> DensitySpec:
    A, s = amplitude, width
    cx, cy = center
    F = lambda x: A * np.exp(-((np.asarray(x)[..., 0] - cx) ** 2 + (np.asarray(x)[..., 1] - cy) ** 2) / s**2)
    mass = A * math.pi * s**2
    if cx == 0 and cy == 0:
        return DensitySpec.radial(lambda r: A * np.exp(-np.asarray(r) ** 2 / s**2),
                                  CompactSupport(8 * s), mass)
    return DensitySpec(F, CompactSupport(math.hypot(cx, cy) + 8 * s), mass)


# ---------------------------------------------------------------- potentials

@dataclass(frozen=True)
class PotentialField:
    u: PointFn
    grad: PointFn
    mass: float
    truncation_radius: float
    resolution: int
    residual: float
    meta: dict = field(default_factory=dict)

    def __call__(self, points) -> np.ndarray:
        return self.u(points)


def _signed_sum(logw: np.ndarray, vals: np.ndarray) -> float:
    with np.errstate(divide="ignore"):
        return float(np.sum(np.sign(vals) * np.exp(logw + np.log(np.abs(vals)))))


TAIL_CAP = 300.0


def _tail_moments(profile, r0: float, decay: DecayClass, order: int = 64) -> tuple[float, float]:
    """(int 2 pi s F ds, int 2 pi s F ln s ds) over s > r0.

    Gauss-Legendre in 1/ln s up to ln s = TAIL_CAP; beyond it the declared
    log decay r^2 F ~ K (ln r)^-nu is integrated in closed form.
    """
    if math.log(r0) >= TAIL_CAP:
        return 0.0, 0.0
    tr, tw = log_tail_nodes(r0, order, TAIL_CAP, truncate=True)
    f = profile(tr)
    m, l = _signed_sum(tw, f), _signed_sum(tw, f * np.log(tr))
    if isinstance(decay, LogDecay):
        S = TAIL_CAP
        fc = float(profile(np.array([math.exp(S)]))[0])
        K = math.copysign(math.exp(2 * S + math.log(abs(fc))), fc) if fc else 0.0
        nu = decay.nu
        m += 2 * math.pi * K * S / (nu - 1)
        l += 2 * math.pi * K * S**2 / (nu - 2)
    return m, l


def _check_integrable(spec: DensitySpec, r_max: float) -> None:
    r = np.array([r_max, 10 * r_max, 100 * r_max])
    with np.errstate(divide="ignore"):
        g = 2 * np.log(r) + np.log(np.abs(spec.profile(r)))
    if not np.all(np.isfinite(g) | np.isneginf(g)):
        raise NonIntegrable("density is not finite in the far field")
    if not (np.all(np.isneginf(g[1:])) or (g[2] < g[1] < g[0])):
        raise NonIntegrable("r^2 |F| does not decay: F is not integrable")


def radial_potential(spec: DensitySpec, rmax: float = 1e4, nodes: int = 2048,
                     r_min: float = 1e-6, order: int = 8) -> PotentialField:
    """Exact radial reduction of Gamma * F on a log-graded mesh.

    u(r) = -(1/2 pi) [m(r) ln r + int_{s > r} 2 pi s F(s) ln s ds] with
    m(r) the mass of B_r; cell integrals by Gauss-Legendre in s on cells
    split at the declared breakpoints, the exterior by Gauss-Legendre in
    1/ln s.
    """
    if not spec.is_radial:
        raise ValueError("radial_potential needs a radial density")
    _check_integrable(spec, rmax)
    prof = spec.profile
    t = np.linspace(math.log(r_min), math.log(rmax), nodes)
    bps = [math.log(b) for b in spec.breakpoints if r_min < b < rmax]
    t = np.unique(np.concatenate([t, bps]))
    r = np.exp(t)
    g, gw = np.polynomial.legendre.leggauss(order)
    a, b = r[:-1, None], r[1:, None]
    s = 0.5 * (a + b) + 0.5 * (b - a) * g
    ws = 0.5 * (b - a) * gw
    fs = prof(s)
    cell_m = np.sum(ws * 2 * math.pi * s * fs, axis=1)
    cell_l = np.sum(ws * 2 * math.pi * s * fs * np.log(s), axis=1)
    f0 = float(prof(np.array([r_min]))[0])
    m = np.concatenate([[math.pi * r_min**2 * f0], math.pi * r_min**2 * f0 + np.cumsum(cell_m)])
    tail_m, tail_l = _tail_moments(prof, float(r[-1]), spec.decay)
    L = np.concatenate([np.cumsum(cell_l[::-1])[::-1], [0.0]]) + tail_l
    mass = float(m[-1] + tail_m)
    u_nodes = -(m * t + L) / (2 * math.pi)
    du_dt = -m / (2 * math.pi)
    u_spline = CubicHermiteSpline(t, u_nodes, du_dt)
    m_spline = CubicHermiteSpline(t, m, 2 * math.pi * r**2 * prof(r))

    # independent check of the cell masses with a higher-order rule
    g2, gw2 = np.polynomial.legendre.leggauss(2 * order)
    s2 = 0.5 * (a + b) + 0.5 * (b - a) * g2
    check = np.sum(0.5 * (b - a) * gw2 * 2 * math.pi * s2 * prof(s2), axis=1)
    l1 = float(np.sum(np.abs(check))) or 1.0
    residual = float(np.max(np.abs(np.diff(m) - check))) / l1

    def exterior(rr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        uu, mm = np.empty_like(rr), np.empty_like(rr)
        for i, x in enumerate(rr):
            tm, tl = _tail_moments(prof, float(x), spec.decay)
            mm[i] = mass - tm
            uu[i] = -(mm[i] * math.log(x) + tl) / (2 * math.pi)
        return uu, mm

    def radial_eval(rr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rr = np.asarray(rr, dtype=float)
        flat = rr.ravel()
        uu = np.empty_like(flat)
        mm = np.empty_like(flat)
        inside = flat <= r[-1]
        tt = np.log(np.clip(flat[inside], r_min, None))
        uu[inside] = u_spline(tt)
        mm[inside] = np.where(flat[inside] < r_min, m[0] * (flat[inside] / r_min) ** 2, m_spline(tt))
        if np.any(~inside):
            uu[~inside], mm[~inside] = exterior(flat[~inside])
        return uu.reshape(rr.shape), mm.reshape(rr.shape)

    def u(points):
        return radial_eval(_norm(points))[0]

    def grad(points):
        p = np.asarray(points, dtype=float)
        rr = _norm(p)
        _, mm = radial_eval(rr)
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(rr > 0, -mm / (2 * math.pi * rr**2), 0.0)
        return coef[..., None] * p

    return PotentialField(u, grad, mass, float(rmax), len(r), residual,
                          {"r": r, "u": u_nodes, "m": m, "radial_eval": radial_eval})


def multipole_boundary(mass: float, dipole: np.ndarray) -> PointFn:
    """-(1/2 pi) [mass ln|x| - p.x / |x|^2]: monopole plus dipole far field."""
    px, py = float(dipole[0]), float(dipole[1])

    def fn(x):
        x = np.asarray(x, dtype=float)
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -(0.5 * mass * np.log(r2) - (px * x[..., 0] + py * x[..., 1]) / r2) / (2 * math.pi)
        return np.where(r2 > 0, out, 0.0)

    return fn


def planar_potential(spec: DensitySpec, grid: PlanarGrid, residual_tol: float = 1e-6,
                     mass_tol: float = 1e-3) -> PotentialField:
    """5-point Poisson solve on the disk grid with multipole Dirichlet data.

    Raises MeshTooCoarse when the algebraic residual exceeds ``residual_tol``
    relative to max|F|, or when the grid mass misses the declared mass by
    more than ``mass_tol`` relative to the grid L1 norm.
    """
    A, B, idx = grid.laplacian()
    X, Y = grid.coords()
    pts = np.stack([X, Y], axis=-1)
    Fg = np.asarray(spec.F(pts), dtype=float)
    h2 = grid.h**2
    mass = float(h2 * Fg.sum())
    l1 = float(h2 * np.abs(Fg).sum())
    if spec.declared_mass is not None and abs(mass - spec.declared_mass) > mass_tol * max(l1, 1e-300):
        raise MeshTooCoarse(f"grid mass {mass:.6g} vs declared {spec.declared_mass:.6g}")
    dip = h2 * np.array([(X * Fg).sum(), (Y * Fg).sum()])
    bfn = multipole_boundary(mass, dip)
    bvals = bfn(pts).ravel()
    fl = Fg.ravel()
    rhs = fl[idx] + B @ bvals
    sol = spla.spsolve(A.tocsc(), rhs)
    fmax = float(np.max(np.abs(fl[idx]))) if idx.size else 0.0
    res = float(np.max(np.abs(A @ sol - B @ bvals - fl[idx]))) if idx.size else 0.0
    rel = res / fmax if fmax > 0 else res
    if rel > residual_tol:
        raise MeshTooCoarse(f"discrete residual {rel:.3g} exceeds {residual_tol:g}")
    full = bvals.copy()
    full[idx] = sol
    ug = full.reshape(grid.n, grid.n)
    gx, gy = np.gradient(ug, grid.h, grid.h)
    ax = grid.axis
    interp = RegularGridInterpolator((ax, ax), ug)
    ix = RegularGridInterpolator((ax, ax), gx)
    iy = RegularGridInterpolator((ax, ax), gy)

    def _inside(p):
        return (np.abs(p[..., 0]) <= grid.L) & (np.abs(p[..., 1]) <= grid.L)

    def u(points):
        p = np.asarray(points, dtype=float)
        out = np.asarray(bfn(p), dtype=float).copy()
        ins = _inside(p)
        out[ins] = interp(p[ins])
        return out

    def grad(points):
        p = np.asarray(points, dtype=float)
        out = np.zeros(p.shape)
        ins = _inside(p)
        out[ins, 0] = ix(p[ins])
        out[ins, 1] = iy(p[ins])
        return out

    return PotentialField(u, grad, mass, grid.R, grid.n, rel,
                          {"grid": grid, "values": ug, "dipole": dip})


# ---------------------------------------------------------------- certificates

@dataclass(frozen=True)
class DecayCertificate:
    """Weighted sup norms of u and grad u over an annulus.

    ``slope_u`` and ``slope_grad`` are least-squares slopes of the log of the
    weighted quantities against ln r (power class) or ln ln r (log class);
    a bounded weighted quantity has slope <= ``slope_tol``.
    """

    decay: DecayClass
    annulus: tuple[float, float]
    sup_u: float
    sup_grad: float
    slope_u: float
    slope_grad: float
    slope_tol: float
    bound: Optional[float] = None
    grad_bound: Optional[float] = None
    corrected_sup_u: Optional[float] = None
    corrected_slope_u: Optional[float] = None
    corrected_slope_grad: Optional[float] = None

    @property
    def u_bounded(self) -> bool:
        if self.bound is not None:
            return self.sup_u <= self.bound
        return self.slope_u <= self.slope_tol

    @property
    def grad_bounded(self) -> bool:
        if self.grad_bound is not None:
            return self.sup_grad <= self.grad_bound
        return self.slope_grad <= self.slope_tol

    @property
    def passed(self) -> bool:
        return self.u_bounded and self.grad_bounded

    @property
    def margin(self) -> float:
        if self.bound is not None:
            return min(self.bound - self.sup_u, (self.grad_bound or math.inf) - self.sup_grad)
        return self.slope_tol - max(self.slope_u, self.slope_grad)


def _slope(x: np.ndarray, vals: np.ndarray) -> float:
    ok = vals > 1e-300
    if ok.sum() < 3:
        return -math.inf
    return float(np.polyfit(x[ok], np.log(vals[ok]), 1)[0])


def _default_annulus(decay: DecayClass) -> tuple[float, float]:
    if isinstance(decay, CompactSupport):
        return (4 * decay.R, 400 * decay.R)
    if isinstance(decay, PowerDecay):
        return (1e2, 1e3)
    return (1e3, 1e4)


def certify_decay(field_: PotentialField, decay: DecayClass,
                  annulus: Optional[tuple[float, float]] = None, samples: int = 200,
                  n_theta: int = 16, slope_tol: float = 0.05, l1_norm: Optional[float] = None) -> DecayCertificate:
    """Measure the weighted far-field sizes of u and grad u.

    Compact support: sups of |x| |u| and |x|^2 |grad u| against R ||F||_1
    (needs ``l1_norm``).
    Power decay tau: weights |x|^e and |x|^{1+e}, e = (tau-2)/(tau-1).
    Log decay nu: weights (ln|x|)^nu and |x| (ln|x|)^nu, reported together
    with the weights (ln|x|)^(nu-2) and |x| (ln|x|)^(nu-1) that the exact
    radial potential attains.
    """
    lo, hi = annulus or _default_annulus(decay)
    r = np.geomspace(lo, hi, samples)
    th = 2 * math.pi * np.arange(n_theta) / n_theta
    pts = np.stack([r[:, None] * np.cos(th), r[:, None] * np.sin(th)], axis=-1)
    au = np.max(np.abs(field_.u(pts)), axis=1)
    ag = np.max(np.linalg.norm(field_.grad(pts), axis=-1), axis=1)
    if isinstance(decay, CompactSupport):
        wu = r * au
        bound = None if l1_norm is None else decay.R * l1_norm
        return DecayCertificate(decay, (lo, hi), float(wu.max()), float((r**2 * ag).max()),
                                _slope(np.log(r), wu), _slope(np.log(r), r**2 * ag), slope_tol, bound,
                                bound)
    if isinstance(decay, PowerDecay):
        e = decay.exponent
        wu, wg = r**e * au, r ** (1 + e) * ag
        x = np.log(r)
        return DecayCertificate(decay, (lo, hi), float(wu.max()), float(wg.max()),
                                _slope(x, wu), _slope(x, wg), slope_tol)
    L = np.log(r)
    nu = decay.nu
    x = np.log(L)
    wu, wg = L**nu * au, r * L**nu * ag
    cu, cg = L ** (nu - 2) * au, r * L ** (nu - 1) * ag
    return DecayCertificate(decay, (lo, hi), float(wu.max()), float(wg.max()), _slope(x, wu),
                            _slope(x, wg), slope_tol, None, None, float(cu.max()), _slope(x, cu),
                            _slope(x, cg))
