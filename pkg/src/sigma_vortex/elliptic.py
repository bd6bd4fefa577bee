"""Auxiliary semilinear problems: flux matching, brackets, monotone iteration.

Every problem is held in cell-integrated form

    L v + W * h(v) = G

where L is a symmetric M-matrix (finite volumes radially, 5-point stencil
times h^2 on the plane), W are cell areas and G are exact cell masses of the
source. On the radial mesh the region beyond the last face is closed by
holding v constant there; its source and nonlinear masses are added to the
last cell, so sum(G) is the full mass of the source.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.optimize as opt
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import expit

from .fields import FieldBundle, Lambda0, ln_Lambda, ln_lambda
from .mesh import PlanarGrid, RadialMesh


class TargetUnreachable(ValueError):
    """Flux target at or above the saturation limit of the nonlinearity."""


class BracketError(RuntimeError):
    """Sub/supersolution certificate failed."""


class NonConvergence(RuntimeError):
    """Monotone iteration did not reach tolerance."""


class NonlinearityKind(enum.Enum):
    ExpF1 = "ExpF1"
    SaturatingF2 = "SaturatingF2"
    CriticalF2 = "CriticalF2"
    FrozenDenominator = "FrozenDenominator"


PointFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class NodalNonlinearity:
    """h(v) at a fixed set of points, either exp(c + v) or exp(lw) expit(z0 + v)."""

    mode: str
    c: np.ndarray
    z0: Optional[np.ndarray] = None

    def h(self, v) -> np.ndarray:
        if self.mode == "exp":
            return np.exp(self.c + v)
        return np.exp(self.c) * expit(self.z0 + v)

    def dh(self, v) -> np.ndarray:
        if self.mode == "exp":
            return np.exp(self.c + v)
        s = expit(self.z0 + v)
        return np.exp(self.c) * s * (1.0 - s)

    def dh_sup(self, lo, hi) -> np.ndarray:
        """sup of dh/dv over v in [lo, hi], pointwise."""
        if self.mode == "exp":
            return np.exp(self.c + hi)
        zl, zh = self.z0 + lo, self.z0 + hi
        z = np.where((zl <= 0) & (zh >= 0), 0.0, np.where(np.abs(zl) < np.abs(zh), zl, zh))
        s = expit(z)
        return np.exp(self.c) * s * (1.0 - s)

    def scaled(self, logw: np.ndarray) -> "NodalNonlinearity":
        """Same nonlinearity multiplied by exp(logw)."""
        return NodalNonlinearity(self.mode, self.c + logw, self.z0)

    @property
    def saturation(self) -> np.ndarray:
        """Pointwise limit of h as v -> inf (inf for the exp mode)."""
        if self.mode == "exp":
            return np.full_like(self.c, np.inf)
        return np.exp(self.c)


@dataclass(frozen=True)
class NonlinearitySpec:
    """h(x, v), nondecreasing in v.

    ``log_ell`` is the log of the far-field profile (beta ln lambda, or
    beta* ln lambda - 2 ln Lambda in the critical case). ``frozen`` is the
    frozen field v-bar of the frozen-denominator kind.
    """

    kind: NonlinearityKind
    log_weight: PointFn
    log_ell: PointFn
    log_E: PointFn
    a: float = 0.0
    beta: float = 0.0
    frozen: Optional[PointFn] = None

    def at(self, pts: np.ndarray) -> NodalNonlinearity:
        lw = self.log_weight(pts)
        ll = self.log_ell(pts)
        le = self.log_E(pts)
        if self.kind is NonlinearityKind.ExpF1:
            return NodalNonlinearity("exp", lw + ll)
        if self.kind is NonlinearityKind.FrozenDenominator:
            vbar = self.frozen(pts)
            return NodalNonlinearity("exp", lw - (1 + self.a) * np.logaddexp(le - ll, vbar))
        return NodalNonlinearity("sat", lw, ll - le)


def _radius(pts: np.ndarray) -> np.ndarray:
    return np.hypot(pts[..., 0], pts[..., 1])


def log_ell_fn(beta: float, critical: bool = False) -> PointFn:
    if critical:
        return lambda p: beta * ln_lambda(_radius(p)) - 2.0 * ln_Lambda(_radius(p))
    return lambda p: beta * ln_lambda(_radius(p))


def f2_spec(bundle: FieldBundle, beta: float, log_weight: Optional[PointFn] = None,
            critical: bool = False) -> NonlinearitySpec:
    """Saturating family with weight W (default W_0 = P = V e^{-a(nu1 - nu2)})."""
    a = bundle.cfg.a
    if log_weight is None and a == 0:
        log_weight = bundle.log_V
    elif log_weight is None:
        log_weight = lambda p: bundle.log_V(p) - a * bundle.log_E(p)
    kind = NonlinearityKind.CriticalF2 if critical else NonlinearityKind.SaturatingF2
    return NonlinearitySpec(kind, log_weight, log_ell_fn(beta, critical), bundle.log_E,
                            a=a, beta=beta)


@dataclass
class DiscreteProblem:
    """Cell-integrated semilinear problem on a fixed discretization."""

    points: np.ndarray
    weights: np.ndarray
    G: np.ndarray
    nl: NodalNonlinearity
    lap: Callable[[np.ndarray], np.ndarray]
    shifted_solve: Callable[[np.ndarray, np.ndarray], np.ndarray]
    tail_nl: Optional[NodalNonlinearity] = None
    gauge_free: bool = True
    diag: np.ndarray = None
    mesh: object = None
    meta: dict = field(default_factory=dict)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.G))

    def H(self, v: np.ndarray) -> np.ndarray:
        out = self.weights * self.nl.h(v)
        if self.tail_nl is not None:
            out[-1] += float(np.sum(self.tail_nl.h(v[-1])))
        return out

    def K(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        out = self.weights * self.nl.dh_sup(lo, hi)
        if self.tail_nl is not None:
            out[-1] += float(np.sum(self.tail_nl.dh_sup(lo[-1], hi[-1])))
        return out

    def mass(self, v) -> float:
        v = np.broadcast_to(np.asarray(v, dtype=float), self.weights.shape)
        return float(np.sum(self.H(np.array(v))))

    def saturation_mass(self) -> float:
        out = float(self.weights @ self.nl.saturation)
        if self.tail_nl is not None:
            out += float(np.sum(self.tail_nl.saturation))
        return out

    def residual(self, v: np.ndarray) -> np.ndarray:
        return self.lap(v) + self.H(v) - self.G

    def with_nl(self, spec: NonlinearitySpec) -> "DiscreteProblem":
        tail = None
        if self.tail_nl is not None:
            tail = spec.at(self.meta["tail_points"]).scaled(self.meta["tail_logw"])
        return DiscreteProblem(self.points, self.weights, self.G, spec.at(self.points), self.lap,
                               self.shifted_solve, tail, self.gauge_free, self.diag,
                               self.mesh, dict(self.meta))


def radial_problem(bundle: FieldBundle, spec: NonlinearitySpec, beta: float,
                   mesh: RadialMesh, critical: bool = False, tail_order: int = 64,
                   truncated: bool = False) -> DiscreteProblem:
    """Radial finite-volume discretization; requires a radial configuration.

    With ``truncated`` the outer face carries no flux and nothing beyond it
    is added: the problem lives on the ball of radius ``mesh.r_outer``.
    """
    cfg = bundle.cfg
    Mf = bundle.radial_source_mass(beta, mesh.faces, critical=critical)
    G = np.diff(Mf)
    pts = mesh.points()

    def solve(K, rhs):
        return sla.solve_banded((1, 1), mesh.banded(K), rhs)

    diag = mesh.banded(np.zeros(mesh.size))[1]
    if truncated:
        return DiscreteProblem(pts, mesh.areas.copy(), G, spec.at(pts), mesh.apply_laplacian,
                               solve, None, True, diag, mesh,
                               {"beta": beta, "critical": critical, "truncated": True})
    G[-1] += 2 * math.pi * (2 * (cfg.N - cfg.M) + beta) - Mf[-1]
    tr, tlogw = mesh.tail_nodes(tail_order)
    tpts = np.stack([tr, np.zeros_like(tr)], axis=-1)
    return DiscreteProblem(pts, mesh.areas.copy(), G, spec.at(pts), mesh.apply_laplacian, solve,
                           spec.at(tpts).scaled(tlogw), True, diag, mesh,
                           {"tail_points": tpts, "tail_logw": tlogw, "beta": beta,
                            "critical": critical})


def cell_average(fn: PointFn, grid: PlanarGrid, idx: np.ndarray, order: int = 3) -> np.ndarray:
    """Average of fn over the h x h cell around each listed node (tensor Gauss rule)."""
    X, Y = grid.coords()
    x, y = X.ravel()[idx], Y.ravel()[idx]
    g, w = np.polynomial.legendre.leggauss(order)
    acc = np.zeros(len(idx))
    for gi, wi in zip(g, w):
        for gj, wj in zip(g, w):
            p = np.stack([x + 0.5 * grid.h * gi, y + 0.5 * grid.h * gj], axis=-1)
            acc += 0.25 * wi * wj * fn(p)
    return acc


def planar_problem(source: PointFn, spec: NonlinearitySpec, grid: PlanarGrid,
                   boundary: PointFn) -> DiscreteProblem:
    """Dirichlet problem on the disk-embedded grid, cell-integrated (times h^2)."""
    A, B, idx = grid.laplacian()
    X, Y = grid.coords()
    allpts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    outside = np.flatnonzero(np.asarray(B.sum(axis=0)).ravel() > 0)
    b = np.zeros(grid.n * grid.n)
    b[outside] = boundary(allpts[outside])
    h2 = grid.h**2
    pts = allpts[idx]
    G = h2 * (cell_average(source, grid, idx) + B @ b)
    L = (h2 * A).tocsc()

    def solve(K, rhs):
        return spla.spsolve((L + sp.diags(K)).tocsc(), rhs)

    return DiscreteProblem(pts, np.full(len(idx), h2), G, spec.at(pts), lambda v: L @ v, solve,
                           None, False, L.diagonal(), grid, {"idx": idx, "boundary": b})


def flux_match_t(problem: DiscreteProblem, target: float, profile: Optional[np.ndarray] = None,
                 xtol: float = 1e-14) -> float:
    """t with mass(h(., t * profile)) = target (relative 1e-8 or better)."""
    prof = np.ones_like(problem.weights) if profile is None else profile
    if problem.nl.mode == "exp" and profile is None:
        base = problem.mass(0.0)
        if target <= 0:
            raise TargetUnreachable("exp family needs a positive target")
        if not (base > 0 and math.isfinite(base)):
            raise TargetUnreachable(f"exp family base mass is {base!r}")
        return math.log(target / base)
    if target <= 0:
        raise TargetUnreachable("saturating family needs a positive target")
    if profile is None and target >= problem.saturation_mass():
        raise TargetUnreachable(
            f"target {target:.6g} >= integral of W = {problem.saturation_mass():.6g}")

    def f(t):
        return problem.mass(t * prof) - target

    lo, hi = -1.0, 1.0
    while f(lo) > 0:
        lo *= 2
        if lo < -1e4:
            raise TargetUnreachable("no lower bracket for t")
    while f(hi) < 0:
        hi *= 2
        if hi > 1e4:
            raise TargetUnreachable("target not reached for any finite t")
    return float(opt.brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500))


def _signed_residual(problem: DiscreteProblem, v: np.ndarray, pick) -> float:
    """Extreme residual, each node scaled by the size of the terms that meet there."""
    scale = np.abs(problem.G) + problem.H(v) + problem.diag * (np.abs(v) + 1.0) * 1e-6 + 1e-300
    return float(pick(problem.residual(v) / scale))


@dataclass
class SubSupPair:
    sub: np.ndarray
    over: np.ndarray
    t: float
    w0: np.ndarray
    certificate: tuple[float, float]


def solve_linear_gauge(problem: DiscreteProblem, rhs: np.ndarray) -> np.ndarray:
    """Solve L w = rhs; on a closed radial system rhs must sum to ~0, gauge w[-1] = 0."""
    if not problem.gauge_free:
        return problem.shifted_solve(np.zeros_like(problem.weights), rhs)
    K = np.zeros_like(problem.weights)
    K[-1] = 1.0
    r = rhs.copy()
    r[-1] -= float(np.sum(rhs))
    w = problem.shifted_solve(K, r)
    for _ in range(2):
        # iterative refinement; the gauge row makes the correction unique
        w = w + problem.shifted_solve(K, r - problem.lap(w) - K * w)
    return w


def build_bracket(problem: DiscreteProblem, t: float, profile: Optional[np.ndarray] = None,
                  tol: float = 1e-8) -> SubSupPair:
    """over = t+ + w0 + |w0|, sub = -t- + w0 - |w0| with L w0 = G - W h(t profile)."""
    prof = np.ones_like(problem.weights) if profile is None else profile
    w0 = solve_linear_gauge(problem, problem.G - problem.H(t * prof))
    nrm = float(np.max(np.abs(w0)))
    if problem.gauge_free:
        over = max(t, 0.0) + w0 + nrm
        sub = -max(-t, 0.0) + w0 - nrm
    else:
        over = w0 + max(0.0, float(np.max(t * prof - w0)))
        sub = w0 - max(0.0, float(np.max(w0 - t * prof)))
    cert = (_signed_residual(problem, over, min), _signed_residual(problem, sub, max))
    if cert[0] < -tol or cert[1] > tol or np.any(sub > over):
        raise BracketError(f"bracket certificate failed: {cert}")
    return SubSupPair(sub, over, t, w0, cert)


@dataclass
class SolveResult:
    v: np.ndarray
    iterations: int
    residual: float
    trace: list
    v_desc: np.ndarray
    v_asc: np.ndarray

    @property
    def pair_gap(self) -> float:
        return float(np.max(np.abs(self.v_desc - self.v_asc)))


def monotone_solve(problem: DiscreteProblem, sub: np.ndarray, over: np.ndarray,
                   tol_step: float = 1e-10, tol_pair: float = 1e-8, max_iter: int = 20000,
                   ascending: bool = True) -> SolveResult:
    """Descending sweep from over and ascending sweep from sub with a shared shift.

    The shift K is the sup of dh/dv over the current [asc, desc] band, so the
    sweeps stay ordered and become Newton steps once the band collapses.
    """
    desc = over.astype(float).copy()
    asc = sub.astype(float).copy() if ascending else desc
    trace = []
    for it in range(1, max_iter + 1):
        lo = np.minimum(asc, desc)
        K = problem.K(lo, desc)
        nd = problem.shifted_solve(K, problem.G - problem.H(desc) + K * desc)
        step = float(np.max(np.abs(nd - desc)))
        if ascending:
            na = problem.shifted_solve(K, problem.G - problem.H(asc) + K * asc)
            step = max(step, float(np.max(np.abs(na - asc))))
            asc = na
        desc = nd
        gap = float(np.max(desc - asc)) if ascending else step
        trace.append(gap)
        if not np.all(np.isfinite(desc)):
            raise NonConvergence("iterate became non-finite")
        if step < tol_step and gap < tol_pair:
            break
    else:
        raise NonConvergence(f"no convergence in {max_iter} iterations (gap {trace[-1]:.3g})")
    v = 0.5 * (desc + asc)
    res = float(np.max(np.abs(problem.residual(v))))
    return SolveResult(v, it, res, trace, desc, asc)


def solve_auxiliary(problem: DiscreteProblem, profile: Optional[np.ndarray] = None,
                    **kw) -> tuple[SolveResult, SubSupPair]:
    """Flux-match, bracket and solve in one call."""
    t = flux_match_t(problem, problem.total_mass, profile)
    br = build_bracket(problem, t, profile)
    return monotone_solve(problem, br.sub, br.over, **kw), br


def critical_profile(problem: DiscreteProblem) -> np.ndarray:
    return Lambda0(_radius(problem.points))


def asymptotic_constant(r: np.ndarray, v: np.ndarray, exponent_guess: float = 0.5,
                        window: Optional[tuple[float, float]] = None) -> tuple[float, float]:
    """Fit v ~ C + A r^-kappa on the window; kappa is nan when v is flat."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    if window is None:
        window = (r[-1] / 100.0, r[-1] / 3.0)
    sel = (r >= window[0]) & (r <= window[1])
    if sel.sum() < 8:
        raise ValueError("fit window too short")
    rs, vs = r[sel], v[sel]
    if np.ptp(vs) <= 1e-12 * max(1.0, float(np.max(np.abs(vs)))):
        return float(np.mean(vs)), float("nan")
    x = np.log(rs / rs[0])

    def model(x, C, A, k):
        return C + A * np.exp(-k * x)

    p0 = (vs[-1], vs[0] - vs[-1], exponent_guess)
    with warnings.catch_warnings():
        # the covariance is unused; exact data make it singular
        warnings.simplefilter("ignore", opt.OptimizeWarning)
        popt, _ = opt.curve_fit(model, x, vs, p0=p0, maxfev=20000)
    return float(popt[0]), float(popt[2])
