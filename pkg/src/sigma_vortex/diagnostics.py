"""Measurements on computed fields: flux, circular averages, fits, probes."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.optimize as opt
from scipy.integrate import quad, solve_ivp

from .elliptic import TargetUnreachable
from .fields import log_flux_factor
from .mesh import log_tail_nodes
from .problem import TOPOLOGICAL, VortexConfig, derive_params


class TailNotDecaying(ValueError):
    """The flux integrand does not decay fast enough to be integrable."""


# ---------------------------------------------------------------- flux

@dataclass(frozen=True)
class FluxReport:
    value: float
    richardson_error: float
    tail: float

    def __float__(self) -> float:
        return self.value


def _trapezoid_richardson(t: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Trapezoid on a uniform grid, extrapolated against the 2h rule."""
    fine = float(np.trapezoid(y, t))
    start = (len(t) - 1) % 2
    head = float(np.trapezoid(y[:start + 1], t[:start + 1])) if start else 0.0
    coarse = head + float(np.trapezoid(y[start::2], t[start::2]))
    corr = (fine - coarse) / 3.0
    return fine + corr, abs(corr)


def _check_decay(r_end: float, log_r2rho: Callable[[np.ndarray], np.ndarray]) -> None:
    probe = np.array([r_end, 10 * r_end, 100 * r_end])
    vals = log_r2rho(probe)
    if not (vals[2] < vals[1] < vals[0] or np.all(np.isneginf(vals[1:]))):
        raise TailNotDecaying("r^2 times the flux density does not decrease at large r")


def integrate_radial(log_rho: Callable[[np.ndarray], np.ndarray], r_min: float = 1e-6,
                     r_max: float = 1e4, nodes: int = 4097, tail_order: int = 64) -> FluxReport:
    """Integral of rho over the plane for a radial density given by its log.

    Log-mesh trapezoid with Richardson extrapolation on [r_min, r_max], the
    disk r < r_min by a one-point rule and the exterior by Gauss-Legendre in
    1/ln r.
    """
    t = np.linspace(math.log(r_min), math.log(r_max), nodes)
    r = np.exp(t)
    y = 2 * math.pi * np.exp(2 * t + log_rho(r))
    core, err = _trapezoid_richardson(t, y)
    inner = math.pi * r_min**2 * float(np.exp(log_rho(np.array([r_min]))[0]))
    _check_decay(r_max, lambda s: 2 * np.log(s) + log_rho(s))
    tr, tw = log_tail_nodes(r_max, tail_order)
    tail = float(np.sum(np.exp(tw + log_rho(tr))))
    return FluxReport(core + inner + tail, err, tail)


def magnetic_flux(source, **kw) -> FluxReport:
    """Total flux of a branch result, or of a radial density callable rho(r).

    Branch results are integrated in regularized variables on their own mesh
    plus the exterior closure; callables go through ``integrate_radial``.
    """
    if hasattr(source, "log_density"):
        res = source
        t = np.log(res.r)
        y = 2 * math.pi * np.exp(2 * t + res.log_density)
        core, err = _trapezoid_richardson(t, y)
        inner = math.pi * res.r[0] ** 2 * float(np.exp(res.log_density[0]))
        if not np.all(np.isfinite(res.tail_log_density)):
            raise TailNotDecaying("flux density is not finite in the exterior")
        tail = float(np.sum(np.exp(res.tail_logw + res.tail_log_density)))
        return FluxReport(core + inner + tail, err, tail)
    if callable(source):
        def log_rho(r):
            with np.errstate(divide="ignore"):
                return np.log(source(r))
        return integrate_radial(log_rho, **kw)
    raise TypeError("expected a branch result or a radial density callable")


# ---------------------------------------------------------------- averages

def circular_average(fn: Callable[[np.ndarray], np.ndarray], radii: Sequence[float],
                     n_theta: int = 256, center=(0.0, 0.0)) -> np.ndarray:
    """Rows (r, mean of fn over the circle of radius r); trapezoid in angle."""
    radii = np.asarray(radii, dtype=float)
    th = 2 * math.pi * np.arange(n_theta) / n_theta
    pts = np.stack([center[0] + radii[:, None] * np.cos(th), center[1] + radii[:, None] * np.sin(th)],
                   axis=-1)
    vals = np.asarray(fn(pts), dtype=float)
    return np.column_stack([radii, vals.mean(axis=1)])


# ---------------------------------------------------------------- fits

class SolutionType(enum.Enum):
    Topological = "Topological"
    TypeI = "NonTopologicalTypeI"
    TypeII = "NonTopologicalTypeII"
    Inconclusive = "Inconclusive"


@dataclass(frozen=True)
class AsymptoticFit:
    beta_hat: float
    C_hat: float
    window: tuple[float, float]
    residual: float
    model: str
    loglog_coef: Optional[float] = None
    kappa_hat: Optional[float] = None
    condition: float = 1.0
    n_samples: int = 0
    corrections: tuple[float, ...] = ()

    @property
    def ill_conditioned(self) -> bool:
        return self.condition > 1e10


def _split(averages) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(averages, tuple) and len(averages) == 2:
        r, u = averages
    else:
        arr = np.asarray(averages, dtype=float)
        r, u = arr[:, 0], arr[:, 1]
    return np.asarray(r, dtype=float), np.asarray(u, dtype=float)


def fit_log_expansion(averages, model: str = "log", window: Optional[tuple[float, float]] = None,
                      beta_fixed: Optional[float] = None, corrections: int = 0) -> AsymptoticFit:
    """Least-squares fit of circular averages over a window.

    Models: ``log`` (C + beta ln r), ``loglog`` (adds gamma ln ln r and
    ``corrections`` terms (ln r)^-k, optionally with beta held fixed) and
    ``power`` (C + A r^-kappa, kappa by log-log regression on |u - C|).
    """
    r, u = _split(averages)
    if window is None:
        window = (float(r.max()) / 100.0, float(r.max()) / 3.0)
    lo, hi = window
    if not (hi > lo > 0) or math.log10(hi / lo) < 1.5 - 1e-12:
        raise ValueError("fit window must span at least 1.5 decades")
    sel = (r >= lo) & (r <= hi)
    if sel.sum() < 20:
        raise ValueError("need at least 20 samples inside the window")
    rs, us = r[sel], u[sel]
    L = np.log(rs)
    if model == "power":
        return _fit_power(rs, us, (lo, hi))
    cols, names = [np.ones_like(L)], ["C"]
    target = us.copy()
    if beta_fixed is None:
        cols.append(L)
        names.append("beta")
    else:
        target = target - beta_fixed * L
    if model == "loglog":
        cols.append(np.log(L))
        names.append("gamma")
        for k in range(1, corrections + 1):
            cols.append(L ** (-k))
            names.append(f"c{k}")
    elif model != "log":
        raise ValueError(f"unknown model {model!r}")
    A = np.column_stack(cols)
    # column scaling keeps the condition number meaningful
    scale = np.max(np.abs(A), axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, target, rcond=None)
    coef = coef / scale
    resid = float(np.sqrt(np.mean((A @ coef - target) ** 2)))
    cond = float(np.linalg.cond(A / scale))
    got = dict(zip(names, coef))
    return AsymptoticFit(
        beta_hat=float(got.get("beta", beta_fixed)), C_hat=float(got["C"]), window=(lo, hi),
        residual=resid, model=model, loglog_coef=float(got["gamma"]) if "gamma" in got else None,
        condition=cond, n_samples=int(sel.sum()),
        corrections=tuple(float(got[f"c{k}"]) for k in range(1, corrections + 1)))


def _fit_power(rs: np.ndarray, us: np.ndarray, window: tuple[float, float]) -> AsymptoticFit:
    x = np.log(rs / rs[0])
    if np.ptp(us) <= 1e-12 * max(1.0, float(np.max(np.abs(us)))):
        return AsymptoticFit(0.0, float(np.mean(us)), window, 0.0, "power", kappa_hat=None,
                             n_samples=len(rs))

    def model(x, C, A, k):
        return C + A * np.exp(-k * x)

    popt, _ = opt.curve_fit(model, x, us, p0=(us[-1], us[0] - us[-1], 0.5), maxfev=20000)
    C = float(popt[0])
    dev = np.abs(us - C)
    ok = dev > 0
    slope = np.polyfit(np.log(rs[ok]), np.log(dev[ok]), 1)[0]
    resid = float(np.sqrt(np.mean((model(x, *popt) - us) ** 2)))
    return AsymptoticFit(0.0, C, window, resid, "power", kappa_hat=float(-slope),
                         n_samples=len(rs))


def classify_solution(fit: AsymptoticFit, tol: float = 0.05,
                      residual_limit: float = 0.25) -> SolutionType:
    """Sign of the fitted log coefficient decides the far-field type."""
    if not math.isfinite(fit.residual) or fit.residual > residual_limit:
        return SolutionType.Inconclusive
    if fit.beta_hat < -tol:
        return SolutionType.TypeI
    if fit.beta_hat > tol:
        return SolutionType.TypeII
    if math.isfinite(fit.C_hat):
        return SolutionType.Topological
    return SolutionType.Inconclusive


# ---------------------------------------------------------------- probe

class Verdict(enum.Enum):
    DivergesUpward = "DivergesUpward"
    Bounded = "Bounded"
    Inconclusive = "Inconclusive"


@dataclass(frozen=True)
class DivergenceReport:
    growth_rate: float
    verdict: Verdict
    epsilon_used: float
    beta: float
    r_cut: float
    u_cut: float
    max_excess: float
    slope_gain: float
    window: Optional[tuple[float, float]]
    notes: tuple[str, ...] = field(default=())


def probe_epsilon(a: float, N: int, beta: float) -> float:
    """Exponent e with r^2 P e^{-a|u|} ~ r^e along u = beta ln r (radial, one pole)."""
    return 2.0 - 2.0 * a * N - a * max(beta, 0.0) + min(beta, 0.0)


def envelope_deficit(cfg: VortexConfig, beta: float, u_cut: float, r_cut: float) -> float:
    """Integral of r^2 h over ln r > ln r_cut along u = u_cut + beta ln(r / r_cut).

    In t = ln r the radial equation outside the cutoff disk reads
    u_tt = r^2 h(u), so a solution with u_t -> beta has u_t(r_cut) = beta
    minus this integral, evaluated on the true profile instead of the
    envelope. Infinite when the envelope tail is not integrable.
    """
    a, N = cfg.a, cfg.N
    if probe_epsilon(a, N, beta) >= 0:
        return math.inf
    lnA, tc = math.log(cfg.A0), math.log(r_cut)

    def f(s):
        u = u_cut + beta * s
        return math.exp(lnA + (2 - 2 * a * N) * (tc + s) + float(log_flux_factor(u, a)))

    val, _ = quad(f, 0.0, math.inf, epsabs=0.0, epsrel=1e-10, limit=200)
    return float(val)


def outward_excess(cfg: VortexConfig, beta: float, u_cut: float, r_cut: float,
                   decades: float, slope0: Optional[float] = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Integrate the radial equation outward from r_cut with slope slope0 (default beta).

    Returns (t, excess, slope) with excess = u - u_cut - beta (t - t_cut)
    and t = ln r. Only valid where the weight is A0 r^{-2aN}, i.e. for a
    radial configuration outside its cutoff disk.
    """
    a, N, A0 = cfg.a, cfg.N, cfg.A0
    lnA = math.log(A0)
    tc = math.log(r_cut)
    te = tc + decades * math.log(10.0)

    def rhs(t, y):
        return [y[1], math.exp(lnA + (2 - 2 * a * N) * t + float(log_flux_factor(y[0], a)))]

    def blow(t, y):
        return y[0] - u_cut - beta * (t - tc) - 1e3

    blow.terminal = True
    s0 = beta if slope0 is None else slope0
    sol = solve_ivp(rhs, (tc, te), [u_cut, s0], rtol=1e-10, atol=1e-12, dense_output=True,
                    events=blow)
    t = np.linspace(tc, float(sol.t[-1]), 2001)
    y = sol.sol(t)
    return t, y[0] - u_cut - beta * (t - tc), y[1]


def divergence_probe(cfg: VortexConfig, beta: Optional[float], r_cut: float = 1e2,
                     decades: float = 12.0, threshold: float = 10.0, min_decades: float = 2.0,
                     nodes: int = 1024, max_widen: int = 3) -> DivergenceReport:
    """Evidence for or against solutions of the class u = beta ln r + O(1).

    Stage one runs the minimal-branch outer iteration, with no regime gate,
    on the ball of radius r_cut with far-field slope beta imposed weakly
    (no flux through the boundary beyond the matched source). Stage two
    continues the circular average outward with the exact radial equation
    from the candidate's value at r_cut, and measures the excess of u over
    the envelope u(r_cut) + beta ln(r / r_cut). The slope of a solution of
    the class rises to beta from below, so when ``envelope_deficit`` is
    finite the starting slope is shot from [beta - deficit, beta] to reach
    beta at the horizon; otherwise it is beta.

    DivergesUpward is reported when the excess reaches ``threshold`` over a
    window of at least ``min_decades`` decades; Bounded when it stays below
    1 with slope gain under 0.1 over the whole horizon. When the source
    cannot be matched on B_{r_cut} the ball is widened by a decade, at most
    ``max_widen`` times.
    """
    from .branches import probe_candidate

    b = 0.0 if beta is TOPOLOGICAL else float(beta)
    if not cfg.is_radial:
        raise ValueError("the probe integrates the radial equation; use a radial configuration")
    p = derive_params(cfg)
    notes = []
    u_cut = None
    for _ in range(max_widen + 1):
        try:
            u_cut, note = probe_candidate(cfg, b, r_cut, nodes)
            if note:
                notes.append(note)
            break
        except TargetUnreachable as exc:
            # the weight cannot absorb the source on this ball; widen it
            notes.append(f"r_cut={r_cut:g}: {exc}")
            r_cut *= 10.0
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            notes.append(f"stage one failed: {exc}")
            break
    if u_cut is None:
        return DivergenceReport(float("nan"), Verdict.Inconclusive, probe_epsilon(p.a, p.N, b), b,
                                r_cut, float("nan"), float("nan"), float("nan"), None, tuple(notes))
    deficit = envelope_deficit(cfg, b, float(u_cut), r_cut)
    slope0 = b
    if math.isfinite(deficit):
        # shoot for end slope beta inside [beta - deficit, beta]
        end_gain = lambda s: float(outward_excess(cfg, b, u_cut, r_cut, decades, s)[2][-1]) - b
        slope0 = b - deficit
        if end_gain(slope0) < 0:
            slope0 = float(opt.brentq(end_gain, slope0, b, xtol=1e-12))
        notes.append(f"start slope {slope0:.9g} (envelope exterior flux {deficit:.6g})")
    t, excess, slope = outward_excess(cfg, b, u_cut, r_cut, decades, slope0)
    tc = t[0]
    span = (t[-1] - tc) / math.log(10.0)
    hit = np.flatnonzero(excess >= threshold)
    window = None
    if hit.size:
        k = hit[0]
        t_end = max(t[k], tc + min_decades * math.log(10.0))
        window = (r_cut, float(math.exp(t_end)))
        sel = t <= t_end
        growth = float(np.polyfit(t[sel] - tc, excess[sel], 1)[0])
        verdict = Verdict.DivergesUpward if (t_end - tc) / math.log(10.0) >= min_decades - 1e-12 \
            and span >= min_decades else Verdict.Inconclusive
    else:
        growth = float(np.polyfit(t - tc, excess, 1)[0])
        small = float(np.max(excess)) < 1.0 and float(slope[-1] - b) < 0.1
        verdict = Verdict.Bounded if small else Verdict.Inconclusive
    return DivergenceReport(growth, verdict, probe_epsilon(p.a, p.N, b), b, r_cut, float(u_cut),
                            float(np.max(excess)), float(slope[-1] - b), window, tuple(notes))


# ---------------------------------------------------------------- raw flux

def raw_flux(result, exclude_below: float = 0.0) -> float:
    """Flux from the raw integrand P e^u/(1+e^u)^{1+a} on the result's nodes.

    Radii below ``exclude_below`` are dropped; the exterior is not included,
    so compare against the regularized value restricted the same way.
    """
    bundle = result.bundle
    sel = result.r >= exclude_below
    pts = bundle.radial(result.r[sel])
    logd = bundle.log_P(pts) + log_flux_factor(result.u[sel], bundle.cfg.a)
    t = np.log(result.r[sel])
    return float(np.trapezoid(2 * math.pi * np.exp(2 * t + logd), t))


def regularized_flux_on(result, exclude_below: float = 0.0) -> float:
    sel = result.r >= exclude_below
    t = np.log(result.r[sel])
    return float(np.trapezoid(2 * math.pi * np.exp(2 * t + result.log_density[sel]), t))

