"""Analytic scaffolding: cutoff, regularized logs, weights and sources.

All fields are closed-form evaluators. Weights are handled in log space so
that V stays finite at poles and the cancellation of the pole singularity is
exact rather than numerical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate

from .problem import E_E, VortexConfig, derive_params

LN2 = math.log(2.0)


def _solve_quintic() -> np.ndarray:
    # rows: value, d1, d2 at t=1/2 and at t=1, for q(t) = sum c_k t^k
    rows, rhs = [], []
    for t0, (v, d1, d2) in ((0.5, (-LN2, 2.0, -4.0)), (1.0, (0.0, 0.0, 0.0))):
        rows.append([t0 ** k for k in range(6)])
        rows.append([k * t0 ** (k - 1) if k >= 1 else 0.0 for k in range(6)])
        rows.append([k * (k - 1) * t0 ** (k - 2) if k >= 2 else 0.0 for k in range(6)])
        rhs += [v, d1, d2]
    return np.linalg.solve(np.array(rows), np.array(rhs))


ZETA_COEFFS = _solve_quintic()
_Z1 = npoly.polyder(ZETA_COEFFS)
_Z2 = npoly.polyder(ZETA_COEFFS, 2)


def zeta(t) -> np.ndarray:
    """C^2 cutoff: ln t on (0, 1/2], quintic blend, 0 on [1, inf)."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(t <= 0.5, np.log(np.maximum(t, 0.0)), 0.0)
    mid = (t > 0.5) & (t < 1.0)
    return np.where(mid, npoly.polyval(np.clip(t, 0.5, 1.0), ZETA_COEFFS), out)


def zeta_tilde(t) -> np.ndarray:
    """zeta(t) - ln t: exactly 0 for t <= 1/2, exactly -ln t for t >= 1."""
    t = np.asarray(t, dtype=float)
    ts = np.maximum(t, 0.5)
    tc = np.minimum(ts, 1.0)
    out = np.where(t >= 1.0, -np.log(ts), 0.0)
    mid = (t > 0.5) & (t < 1.0)
    return np.where(mid, npoly.polyval(tc, ZETA_COEFFS) - np.log(tc), out)


def zeta_tilde_d1(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    ts = np.maximum(t, 0.5)
    tc = np.minimum(ts, 1.0)
    out = np.where(t >= 1.0, -1.0 / ts, 0.0)
    mid = (t > 0.5) & (t < 1.0)
    return np.where(mid, npoly.polyval(tc, _Z1) - 1.0 / tc, out)


def cutoff_density(t) -> np.ndarray:
    """-(zt'' + zt'/t) for zt = zeta_tilde; supported on [1/2, 1]."""
    t = np.asarray(t, dtype=float)
    ts = np.clip(t, 0.5, 1.0)
    # ln t terms cancel: (q'' + 1/t^2) + (q' - 1/t)/t = q'' + q'/t
    val = -(npoly.polyval(ts, _Z2) + npoly.polyval(ts, _Z1) / ts)
    return np.where((t > 0.5) & (t < 1.0), val, 0.0)


def cutoff_mass_fraction(t) -> np.ndarray:
    """-t zt'(t): fraction of a bump's mass inside radius t*sigma."""
    t = np.asarray(t, dtype=float)
    return -t * zeta_tilde_d1(t)


# ln(lambda): degree-5 Taylor polynomial of ln r in r^2 about r^2 = e^{2e}
RHO_E = math.exp(2 * math.e)


def ln_lambda(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    x = 1.0 - np.minimum(r, E_E) ** 2 / RHO_E
    inner = math.e - 0.5 * (x + x**2 / 2 + x**3 / 3 + x**4 / 4 + x**5 / 5)
    with np.errstate(divide="ignore"):
        return np.where(r >= E_E, np.log(np.maximum(r, E_E)), inner)


def ln_lambda_flux(r) -> np.ndarray:
    """r * d/dr ln(lambda); equals (1/2pi) times the enclosed Laplacian mass."""
    r = np.asarray(r, dtype=float)
    x = 1.0 - np.minimum(r, E_E) ** 2 / RHO_E
    return 1.0 - x**5


def lap_ln_lambda(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    x = 1.0 - np.minimum(r, E_E) ** 2 / RHO_E
    return 10.0 * x**4 / RHO_E


def _lambda_big_coeffs() -> np.ndarray:
    # m(rho) = c1 rho + c2 rho^2 + c3 rho^3 matches 2/ln(rho) to second order
    L = math.log(RHO_E)
    f0 = 2.0 / L
    f1 = -2.0 / (RHO_E * L**2)
    f2 = 2.0 / (RHO_E**2 * L**2) + 4.0 / (RHO_E**2 * L**3)
    A = np.array([[RHO_E, RHO_E**2, RHO_E**3],
                  [1.0, 2 * RHO_E, 3 * RHO_E**2],
                  [0.0, 2.0, 6 * RHO_E]])
    return np.linalg.solve(A, np.array([f0, f1, f2]))


LAMBDA_BIG_COEFFS = _lambda_big_coeffs()


def ln_Lambda_flux(r) -> np.ndarray:
    """r * d/dr ln(Lambda): cubic in r^2 inside B_{e^e}, 1/ln r outside."""
    r = np.asarray(r, dtype=float)
    c1, c2, c3 = LAMBDA_BIG_COEFFS
    rho = np.minimum(r, E_E) ** 2
    inner = rho * (c1 + rho * (c2 + rho * c3))
    return np.where(r >= E_E, 1.0 / np.log(np.maximum(r, E_E)), inner)


def ln_Lambda(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    c1, c2, c3 = LAMBDA_BIG_COEFFS
    rho = np.minimum(r, E_E) ** 2

    def prim(s):
        return c1 * s + c2 * s**2 / 2 + c3 * s**3 / 3

    inner = 1.0 - 0.5 * (prim(RHO_E) - prim(rho))
    return np.where(r >= E_E, np.log(np.log(np.maximum(r, E_E))), inner)


def lap_ln_Lambda(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    c1, c2, c3 = LAMBDA_BIG_COEFFS
    rho = np.minimum(r, E_E) ** 2
    inner = 2.0 * (c1 + 2 * c2 * rho + 3 * c3 * rho**2)
    rs = np.maximum(r, E_E)
    return np.where(r >= E_E, -np.exp(-2.0 * np.log(rs)) / np.log(rs) ** 2, inner)


def Lambda0(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return np.exp(-np.logaddexp(0.0, 2.0 * np.log(np.maximum(r, 1e-300))))


def log_flux_factor(u, a: float) -> np.ndarray:
    """log of e^u / (1 + e^u)^(1+a), overflow-free."""
    u = np.asarray(u, dtype=float)
    return u - (1.0 + a) * np.logaddexp(0.0, u)


def flux_factor(u, a: float) -> np.ndarray:
    return np.exp(log_flux_factor(u, a))


def _radii(x, pts: np.ndarray) -> np.ndarray:
    """Distances from points x (..., 2) to marked points, shape (..., k)."""
    x = np.asarray(x, dtype=float)
    if pts.size == 0:
        return np.zeros(x.shape[:-1] + (0,))
    d = x[..., None, :] - pts
    return np.hypot(d[..., 0], d[..., 1])


@dataclass(frozen=True)
class FieldBundle:
    """Evaluable fields of one configuration.

    Planar evaluators take points of shape (..., 2). When the configuration
    is radial the ``radial_*`` helpers take radii directly.
    """

    cfg: VortexConfig
    beta_star: float

    @property
    def _pp(self) -> np.ndarray:
        return np.array([p for p, _ in self.cfg.poles], dtype=float).reshape(-1, 2)

    @property
    def _pn(self) -> np.ndarray:
        return np.array([n for _, n in self.cfg.poles], dtype=float)

    @property
    def _qp(self) -> np.ndarray:
        return np.array([p for p, _ in self.cfg.antipoles], dtype=float).reshape(-1, 2)

    @property
    def _qm(self) -> np.ndarray:
        return np.array([m for _, m in self.cfg.antipoles], dtype=float)

    # planar evaluators
    def nu1(self, x) -> np.ndarray:
        s = self.cfg.sigma
        return np.sum(2 * self._pn * zeta(_radii(x, self._pp) / s), axis=-1)

    def nu2(self, x) -> np.ndarray:
        s = self.cfg.sigma
        return np.sum(2 * self._qm * zeta(_radii(x, self._qp) / s), axis=-1)

    def log_E(self, x) -> np.ndarray:
        """nu1 - nu2 (log of the factor e^{nu1 - nu2})."""
        return self.nu1(x) - self.nu2(x)

    def log_P(self, x) -> np.ndarray:
        d = _radii(x, self._pp)
        if np.any(d == 0):
            raise ValueError("P is singular at a pole; use the V-form")
        return math.log(self.cfg.A0) - self.cfg.a * np.sum(2 * self._pn * np.log(d), axis=-1)

    def P(self, x) -> np.ndarray:
        return np.exp(self.log_P(x))

    def log_V(self, x) -> np.ndarray:
        s, a = self.cfg.sigma, self.cfg.a
        zt = zeta_tilde(_radii(x, self._pp) / s) - math.log(s)
        return math.log(self.cfg.A0) + a * np.sum(2 * self._pn * zt, axis=-1) - a * self.nu2(x)

    def V(self, x) -> np.ndarray:
        return np.exp(self.log_V(x))

    def V_plateau(self, j: int = 0) -> float:
        """Value of V at the pole p_j, where the |x - p_j| singularity has cancelled."""
        cfg = self.cfg
        (pj, nj) = cfg.poles[j]
        val = math.log(cfg.A0) - 2 * cfg.a * nj * math.log(cfg.sigma)
        for k, ((pk, nk)) in enumerate(cfg.poles):
            if k != j:
                d = math.dist(pj, pk)
                val += 2 * cfg.a * nk * (float(zeta_tilde(d / cfg.sigma)) - math.log(cfg.sigma))
        return math.exp(val)

    def log_W(self, beta: float, x) -> np.ndarray:
        """log W_beta = log V - a beta ln(lambda)."""
        r = np.hypot(*np.moveaxis(np.asarray(x, dtype=float), -1, 0))
        return self.log_V(x) - self.cfg.a * beta * ln_lambda(r)

    def f1(self, x) -> np.ndarray:
        s = self.cfg.sigma
        t = _radii(x, self._pp) / s
        return np.sum(2 * self._pn * cutoff_density(t), axis=-1) / s**2

    def f2(self, x) -> np.ndarray:
        s = self.cfg.sigma
        t = _radii(x, self._qp) / s
        return np.sum(2 * self._qm * cutoff_density(t), axis=-1) / s**2

    def g(self, beta: float, x, critical: bool = False) -> np.ndarray:
        r = np.hypot(*np.moveaxis(np.asarray(x, dtype=float), -1, 0))
        out = self.f1(x) - self.f2(x) + beta * lap_ln_lambda(r)
        if critical:
            out = out - 2.0 * lap_ln_Lambda(r)
        return out

    def g_star(self, x) -> np.ndarray:
        return self.g(self.beta_star, x, critical=True)

    # radial helpers, valid when cfg.is_radial
    def _radial_point(self) -> tuple[float, float]:
        """Signed multiplicity at the origin: (+n for a pole, -m for an antipole)."""
        if not self.cfg.is_radial:
            raise ValueError("configuration is not radial")
        if self.cfg.poles:
            return float(self.cfg.poles[0][1]), 0.0
        if self.cfg.antipoles:
            return 0.0, float(self.cfg.antipoles[0][1])
        return 0.0, 0.0

    def radial(self, r) -> np.ndarray:
        """Embed radii as points on the positive x-axis."""
        r = np.asarray(r, dtype=float)
        return np.stack([r, np.zeros_like(r)], axis=-1)

    def radial_source_mass(self, beta: float, r, critical: bool = False) -> np.ndarray:
        """Closed-form integral of g over B_r for a radial configuration."""
        n, m = self._radial_point()
        r = np.asarray(r, dtype=float)
        t = r / self.cfg.sigma
        out = 4 * math.pi * (n - m) * cutoff_mass_fraction(t) + 2 * math.pi * beta * ln_lambda_flux(r)
        if critical:
            out = out - 4 * math.pi * ln_Lambda_flux(r)
        return out


def build_bundle(cfg: VortexConfig) -> FieldBundle:
    return FieldBundle(cfg=cfg, beta_star=derive_params(cfg).beta_star)


def eval_W_beta(bundle: FieldBundle, beta: float, x) -> np.ndarray:
    """W_beta = V lambda^{-a beta}. Grows without bound at antipoles."""
    return np.exp(bundle.log_W(beta, x))


def _romb_samples(nodes: int) -> int:
    return 2 ** max(4, int(math.ceil(math.log2(max(nodes, 2))))) + 1


def _log_trapezoid(fr, r_lo: float, r_hi: float, nodes: int) -> float:
    """Integral of 2 pi r f(r) dr on [r_lo, r_hi]: trapezoid in ln r, Romberg-extrapolated."""
    t, dt = np.linspace(math.log(r_lo), math.log(r_hi), _romb_samples(nodes), retstep=True)
    r = np.exp(t)
    return float(integrate.romb(2 * math.pi * r * r * fr(r), dt))


def _tail_integral(fr, r_start: float, nodes: int) -> float:
    """Integral of 2 pi r f(r) over r > r_start via u = 1/ln r (needs r_start > 1)."""
    u, du = np.linspace(0.0, 1.0 / math.log(r_start), _romb_samples(nodes), retstep=True)
    far = u < 1.0 / 300.0
    r = np.exp(1.0 / u[~far])
    y = np.empty_like(u)
    y[~far] = 2 * math.pi * r * r * fr(r) / u[~far] ** 2
    y[far] = _tail_limit(fr)
    return float(integrate.romb(y, du))


def _tail_limit(fr) -> float:
    # limit of 2 pi r^2 f(r) ln(r)^2 as r -> inf, sampled at r = e^300
    r = math.exp(300.0)
    return float(2 * math.pi * r * r * fr(np.array([r]))[0] * 300.0**2)


def check_source_mass(bundle: FieldBundle, beta: float, nodes: int = 2048,
                      critical: bool = False) -> float:
    """Relative mass defect of g_beta, each piece integrated about its own centre."""
    cfg = bundle.cfg
    s = cfg.sigma
    total = 0.0
    for _, n in cfg.poles:
        total += 2 * n * _log_trapezoid(lambda r: cutoff_density(r / s) / s**2, s / 2, s, nodes)
    for _, m in cfg.antipoles:
        total -= 2 * m * _log_trapezoid(lambda r: cutoff_density(r / s) / s**2, s / 2, s, nodes)
    r_lo = E_E * 1e-9
    total += beta * _log_trapezoid(lap_ln_lambda, r_lo, E_E, nodes)
    if critical:
        inner = _log_trapezoid(lap_ln_Lambda, r_lo, E_E, nodes)
        outer = _tail_integral(lap_ln_Lambda, E_E, nodes)
        total -= 2.0 * (inner + outer)
    target = 2 * math.pi * (2 * (cfg.N - cfg.M) + beta)
    return abs(total - target) / (1.0 + abs(target))
