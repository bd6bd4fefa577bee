"""Problem instances, derived exponents and the regime classifier."""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

E_E = math.exp(math.e)

Point = tuple[float, float]
Marked = tuple[Point, int]


class ConfigError(ValueError):
    """Raised when a problem instance violates its invariants."""


def _as_marked(items: Sequence) -> tuple[Marked, ...]:
    out = []
    for item in items:
        (x, y), k = item
        if int(k) != k or k < 1:
            raise ConfigError(f"multiplicity must be a positive integer, got {k!r}")
        out.append(((float(x), float(y)), int(k)))
    return tuple(out)


@dataclass(frozen=True)
class VortexConfig:
    """One instance of the gauged sigma-model equation.

    ``sigma`` and ``r0`` are filled with their defaults when omitted, so a
    constructed config always carries concrete values. ``strict`` enforces
    the standing assumption a*n_j < 1 for every pole.
    """

    poles: tuple[Marked, ...] = ()
    antipoles: tuple[Marked, ...] = ()
    a: float = 0.0
    A0: float = 1.0
    sigma: Optional[float] = None
    r0: Optional[float] = None
    strict: bool = True

    def __post_init__(self) -> None:
        poles = _as_marked(self.poles)
        antipoles = _as_marked(self.antipoles)
        object.__setattr__(self, "poles", poles)
        object.__setattr__(self, "antipoles", antipoles)
        a, A0 = float(self.a), float(self.A0)
        if not (math.isfinite(a) and a >= 0):
            raise ConfigError(f"a must be finite and >= 0, got {a}")
        if not (math.isfinite(A0) and A0 > 0):
            raise ConfigError(f"A0 must be finite and > 0, got {A0}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "A0", A0)
        if self.strict:
            for p, n in poles:
                if a * n >= 1:
                    raise ConfigError(f"an_j < 1 violated at pole {p}: a*n = {a * n:g}")
        pts = np.array([p for p, _ in poles + antipoles], dtype=float).reshape(-1, 2)
        dmin = math.inf
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                d = float(np.hypot(*(pts[i] - pts[j])))
                if d == 0.0:
                    raise ConfigError(f"coincident marked points at {tuple(pts[i])}")
                dmin = min(dmin, d)
        sigma = self.sigma
        if sigma is None:
            sigma = min(0.4 * dmin, 1.0)
        sigma = float(sigma)
        if not (sigma > 0 and math.isfinite(sigma)):
            raise ConfigError(f"sigma must be positive, got {sigma}")
        if 2 * sigma >= dmin:
            raise ConfigError(f"sigma={sigma:g} too large: balls overlap (min distance {dmin:g})")
        rmax_pt = float(np.max(np.hypot(pts[:, 0], pts[:, 1]))) if len(pts) else 0.0
        r0 = self.r0
        if r0 is None:
            r0 = max(E_E, 2 * rmax_pt + 2 * sigma)
        r0 = float(r0)
        if r0 < E_E:
            raise ConfigError(f"r0 must be >= e^e, got {r0}")
        if len(pts) and rmax_pt + sigma > r0:
            raise ConfigError("sigma-balls must lie inside B_r0")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "r0", r0)

    @property
    def N(self) -> int:
        return sum(n for _, n in self.poles)

    @property
    def M(self) -> int:
        return sum(m for _, m in self.antipoles)

    @property
    def is_radial(self) -> bool:
        """True when at most one marked point exists and it sits at the origin."""
        pts = self.poles + self.antipoles
        return len(pts) == 0 or (len(pts) == 1 and pts[0][0] == (0.0, 0.0))

    def with_(self, **changes) -> "VortexConfig":
        kw = dict(poles=self.poles, antipoles=self.antipoles, a=self.a, A0=self.A0,
                  sigma=self.sigma, r0=self.r0, strict=self.strict)
        kw.update(changes)
        return VortexConfig(**kw)


@dataclass(frozen=True)
class DerivedParams:
    N: int
    M: int
    a: float
    alpha_star: float
    beta_star: float
    beta_sharp: float
    beta_sharp_plus: float


@functools.lru_cache(maxsize=64)
def alpha_star_quadrature(cfg: VortexConfig, rtol: float = 1e-10, ring_nodes: int = 256) -> float:
    """(1/2pi) * integral of P over the plane, by pole-centred polar quadrature.

    P is split with the partition of unity chi_j = d_j^-8 / sum_k d_k^-8, so
    each piece is singular at one pole only and vanishes to high order at
    the others. In t = ln r the radial factor
    decays exponentially at both ends when a*n_j < 1 < a*N.
    """
    a, A0 = cfg.a, cfg.A0
    pts = np.array([p for p, _ in cfg.poles], dtype=float)
    ns = np.array([n for _, n in cfg.poles], dtype=float)
    # each piece is smooth and periodic on a ring, so the trapezoid rule in theta is spectral
    th = 2 * math.pi * np.arange(ring_nodes) / ring_nodes
    e = np.stack([np.cos(th), np.sin(th)], axis=-1)[:, None, :]
    total = 0.0
    for j in range(len(pts)):
        def ring(t: float, j: int = j) -> float:
            # log|x - p_k|^2 = 2t + log|e + e^-t (p_j - p_k)|^2 never overflows
            d = (pts[j] - pts) * math.exp(-t) if t < 700 else np.zeros_like(pts)
            ld2 = 2 * t + np.log(np.sum((e + d[None]) ** 2, axis=-1))
            ld2[:, j] = 2 * t
            chi = 1.0 / np.sum(np.exp(4 * (ld2[:, [j]] - ld2)), axis=1) if len(pts) > 1 else 1.0
            vals = chi * np.exp(math.log(A0) - a * (ld2 @ ns) + 2 * t)
            return 2 * math.pi * float(np.mean(vals))

        lo = -40.0 / max(1.0 - a * ns[j], 1e-3)
        hi = 40.0 / max(a * ns.sum() - 1.0, 1e-3)
        brk = sorted(math.log(d) for d in np.hypot(*(pts - pts[j]).T) if d > 0)
        edges = [lo] + [b for b in brk if lo < b < hi] + [hi]
        total += sum(integrate.quad(ring, x0, x1, epsabs=0.0, epsrel=rtol, limit=200)[0]
                     for x0, x1 in zip(edges, edges[1:]))
    return total / (2 * math.pi)


def derive_params(cfg: VortexConfig) -> DerivedParams:
    """Closed-form exponents of the instance; alpha* by quadrature when finite."""
    N, M, a = cfg.N, cfg.M, cfg.a
    if any(a * n >= 1 for _, n in cfg.poles) or a * N <= 1:
        alpha = math.inf
    else:
        alpha = alpha_star_quadrature(cfg)
    beta_star = min(0.0, 2 * a * N - 2, alpha - 2 * (N - M))
    if a == 0:
        beta_sharp = -math.inf
    else:
        beta_sharp = max(-2.0 * (N - M), (2 - 2 * a * N) / a)
    return DerivedParams(N=N, M=M, a=a, alpha_star=alpha, beta_star=beta_star,
                         beta_sharp=beta_sharp, beta_sharp_plus=max(0.0, beta_sharp))


class RegimeKind(enum.Enum):
    MinimalTypeI = "MinimalTypeI"
    CriticalMinimal = "CriticalMinimal"
    MultipleTypeI = "MultipleTypeI"
    MultipleTypeII = "MultipleTypeII"
    TopologicalMultiple = "TopologicalMultiple"
    NoLogSolution = "NoLogSolution"
    NoTopological = "NoTopological"
    PaperTension = "PaperTension"
    Unknown = "Unknown"

    @property
    def is_existence(self) -> bool:
        return self in _EXISTENCE


_EXISTENCE = {RegimeKind.MinimalTypeI, RegimeKind.CriticalMinimal, RegimeKind.MultipleTypeI,
              RegimeKind.MultipleTypeII, RegimeKind.TopologicalMultiple}


@dataclass(frozen=True)
class BetaRange:
    """Interval of the beta-line; a point when lo == hi with both ends closed."""

    lo: float
    hi: float
    lo_closed: bool = False
    hi_closed: bool = False

    def contains(self, beta: float) -> bool:
        if beta < self.lo or beta > self.hi:
            return False
        if beta == self.lo and not self.lo_closed:
            return False
        if beta == self.hi and not self.hi_closed:
            return False
        return True

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def __str__(self) -> str:
        if self.is_point:
            return "{%g}" % self.lo
        return "%s%g,%g%s" % ("[" if self.lo_closed else "(", self.lo, self.hi,
                              "]" if self.hi_closed else ")")


@dataclass(frozen=True)
class RegimeVerdict:
    kind: RegimeKind
    beta_range: BetaRange
    basis: str
    expected_flux: Optional[float] = None

    def flux_at(self, beta: float, params: DerivedParams) -> Optional[float]:
        """Expected flux at a given beta inside this verdict's range."""
        if not self.kind.is_existence:
            return None
        if self.kind is RegimeKind.TopologicalMultiple:
            return 4 * math.pi * (params.N - params.M)
        return 2 * math.pi * (2 * (params.N - params.M) + beta)


TOPOLOGICAL = None  # beta sentinel: the bounded (topological) solution class


def _open(lo: float, hi: float) -> BetaRange:
    return BetaRange(lo, hi)


def _point(b: float) -> BetaRange:
    return BetaRange(b, b, True, True)


def _verdict(kind: RegimeKind, rng: BetaRange, thm: str, params: DerivedParams,
             beta: Optional[float]) -> RegimeVerdict:
    v = RegimeVerdict(kind, rng, thm)
    if kind.is_existence:
        b = 0.0 if beta is None else beta
        return RegimeVerdict(kind, rng, thm, v.flux_at(b, params))
    return v


def _classify_a0(p: DerivedParams, beta: float) -> RegimeVerdict:
    N, M = p.N, p.M
    lo = -2.0 * (N - M)
    if M == N - 1:
        return _verdict(RegimeKind.NoLogSolution, _open(-math.inf, math.inf), "a0-no-solution-M=N-1", p, beta)
    if M < N - 1:
        if lo < beta < -2:
            return _verdict(RegimeKind.MinimalTypeI, _open(lo, -2.0), "a0-minimal", p, beta)
        if beta == -2:
            return _verdict(RegimeKind.CriticalMinimal, _point(-2.0), "a0-critical", p, beta)
        return _verdict(RegimeKind.NoLogSolution, _open(-math.inf, math.inf), "a0-outside-window", p, beta)
    return _verdict(RegimeKind.Unknown, _open(-math.inf, math.inf), "none", p, beta)


def classify_regime(params: DerivedParams, beta: Optional[float]) -> RegimeVerdict:
    """Verdict of the first matching existence or nonexistence result for the class u = beta ln|x| + O(1).

    ``beta=None`` (``TOPOLOGICAL``) asks about bounded solutions directly.
    """
    p = params
    N, M, a = p.N, p.M, p.a
    aN = a * N
    if beta is None:
        if a > 0 and aN > 1 and M < N:
            return _verdict(RegimeKind.TopologicalMultiple, _point(0.0), "topological-pair", p, None)
        if a > 0 and aN <= 1:
            tag = "no-bounded-aN=1" if aN == 1 else "no-bounded-aN<1"
            return _verdict(RegimeKind.NoTopological, _point(0.0), tag, p, None)
        return _verdict(RegimeKind.Unknown, _point(0.0), "none", p, None)
    beta = float(beta)
    if a == 0:
        return _classify_a0(p, beta)
    lo = -2.0 * (N - M)
    bs = p.beta_star
    if aN <= 1 and M < (1 + a) * N - 1:
        if lo < beta < bs:
            return _verdict(RegimeKind.MinimalTypeI, _open(lo, bs), "minimal-branch", p, beta)
        if beta == bs:
            return _verdict(RegimeKind.CriticalMinimal, _point(bs), "critical-branch", p, beta)
    if aN > 1 and M < N:
        if p.beta_sharp < beta < 0:
            return _verdict(RegimeKind.MultipleTypeI, _open(p.beta_sharp, 0.0), "type-I-pair", p, beta)
        if beta == 0:
            return _verdict(RegimeKind.TopologicalMultiple, _point(0.0), "topological-pair", p, beta)
    if aN < 1:
        t_lo, t_hi = (2 - 2 * aN) / a, (2 - aN) / a
        if t_lo <= beta < t_hi and beta >= p.beta_sharp_plus:
            return _verdict(RegimeKind.PaperTension, BetaRange(t_lo, t_hi, True, False),
                            "type-II-vs-gap-overlap", p, beta)
    if beta > p.beta_sharp_plus:
        return _verdict(RegimeKind.MultipleTypeII, _open(p.beta_sharp_plus, math.inf), "type-II-pair", p, beta)
    if aN < 1 and bs < beta < (2 - 2 * aN) / a:
        return _verdict(RegimeKind.NoLogSolution, _open(bs, (2 - 2 * aN) / a), "nonexistence-gap", p, beta)
    if aN == 1 and beta == 0:
        return _verdict(RegimeKind.NoTopological, _point(0.0), "no-bounded-aN=1", p, beta)
    return _verdict(RegimeKind.Unknown, _point(beta), "none", p, beta)


def _breakpoints(p: DerivedParams) -> list[float]:
    a, N, M = p.a, p.N, p.M
    cands = [-2.0 * (N - M), p.beta_star, p.beta_sharp, p.beta_sharp_plus, 0.0, -2.0]
    if a > 0:
        cands += [(2 - 2 * a * N) / a, (2 - a * N) / a]
    return sorted({c for c in cands if math.isfinite(c)})


@dataclass(frozen=True)
class _Piece:
    lo: float
    hi: float
    lo_closed: bool
    hi_closed: bool
    kind: RegimeKind
    basis: str


def feasible_ranges(params: DerivedParams) -> list[RegimeVerdict]:
    """Partition of the whole beta-line into merged verdict intervals."""
    bps = _breakpoints(params)
    edges = [-math.inf] + bps + [math.inf]
    pieces: list[_Piece] = []
    for i in range(len(edges) - 1):
        lo, hi = edges[i], edges[i + 1]
        if math.isinf(lo):
            mid = hi - 1.0
        elif math.isinf(hi):
            mid = lo + 1.0
        else:
            mid = 0.5 * (lo + hi)
        v = classify_regime(params, mid)
        pieces.append(_Piece(lo, hi, False, False, v.kind, v.basis))
        if math.isfinite(hi):
            v = classify_regime(params, hi)
            pieces.append(_Piece(hi, hi, True, True, v.kind, v.basis))
    merged: list[_Piece] = []
    for pc in pieces:
        if merged and merged[-1].kind is pc.kind and merged[-1].basis == pc.basis:
            last = merged[-1]
            merged[-1] = _Piece(last.lo, pc.hi, last.lo_closed, pc.hi_closed, pc.kind, pc.basis)
        else:
            merged.append(pc)
    out = []
    for pc in merged:
        rng = BetaRange(pc.lo, pc.hi, pc.lo_closed, pc.hi_closed)
        # flux quoted at the finite left end (right end for half-lines to -inf)
        anchor = pc.lo if math.isfinite(pc.lo) else pc.hi
        flux = RegimeVerdict(pc.kind, rng, pc.basis).flux_at(anchor, params)
        out.append(RegimeVerdict(pc.kind, rng, pc.basis, flux))
    return out
