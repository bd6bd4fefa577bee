"""Outer constructions: minimal, critical, ladder and a = 0 branches.

Every branch is solved for the bounded corrector v in

    u = -nu1 + nu2 + log_ell + v,   log_ell = beta ln(lambda)
                                   (beta* ln(lambda) - 2 ln(Lambda) when critical)

with the auxiliary problems of ``elliptic``. The radial path is the default;
``planar_minimal_branch`` covers the two-pole smoke case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .diagnostics import (AsymptoticFit, SolutionType, classify_solution, fit_log_expansion,
                          magnetic_flux)
from .elliptic import (BracketError, NonConvergence, NonlinearityKind, NonlinearitySpec,
                       TargetUnreachable, build_bracket, critical_profile, f2_spec,
                       flux_match_t, log_ell_fn, monotone_solve, planar_problem, radial_problem,
                       solve_auxiliary, solve_linear_gauge)
from .fields import FieldBundle, build_bundle
from .mesh import PlanarGrid, RadialMesh, log_tail_nodes
from .problem import RegimeKind, VortexConfig, classify_regime, derive_params

DEFAULT_NODES = 2048
DEFAULT_RMIN = 1e-4
DEFAULT_RMAX = 1e4


class RegimeMismatch(ValueError):
    """The requested branch is not claimed for this configuration and beta."""


class NoSolution(ValueError):
    """The configuration admits no solution of the requested class."""


class OuterNonConvergence(RuntimeError):
    def __init__(self, msg: str, trace: list):
        super().__init__(msg)
        self.trace = trace


class OuterBreakdown(RuntimeError):
    """An outer step had no admissible flux-matching constant."""

    def __init__(self, msg: str, trace: list, v: np.ndarray):
        super().__init__(msg)
        self.trace = trace
        self.v = v


class LadderDivergence(RuntimeError):
    def __init__(self, msg: str, trace: list):
        super().__init__(msg)
        self.trace = trace


def default_mesh(nodes: int = DEFAULT_NODES, r_max: float = DEFAULT_RMAX) -> RadialMesh:
    return RadialMesh.log_graded(DEFAULT_RMIN, r_max, nodes)


# ---------------------------------------------------------------- results

@dataclass
class BranchResult:
    """A converged radial branch, reassembled on its mesh."""

    kind: str
    bundle: FieldBundle
    beta: float
    mesh: RadialMesh
    v: np.ndarray
    log_ell: np.ndarray
    log_density: np.ndarray
    tail_r: np.ndarray
    tail_logw: np.ndarray
    tail_log_density: np.ndarray
    critical: bool = False
    flux: float = float("nan")
    flux_error: float = float("nan")
    fit: Optional[AsymptoticFit] = None
    classification: SolutionType = SolutionType.Inconclusive
    ladder_index: Optional[int] = None
    trace: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def r(self) -> np.ndarray:
        return self.mesh.r

    @property
    def n_core(self) -> int:
        return self.mesh.n_core

    @property
    def w(self) -> np.ndarray:
        return self.log_ell + self.v

    @property
    def u(self) -> np.ndarray:
        pts = self.mesh.points()
        return -self.bundle.nu1(pts) + self.bundle.nu2(pts) + self.w

    @property
    def C(self) -> float:
        """Far-field constant of v (value at the outermost node)."""
        return float(self.v[-1])

    @property
    def expected_flux(self) -> float:
        cfg = self.bundle.cfg
        return 2 * math.pi * (2 * (cfg.N - cfg.M) + self.beta)

    @property
    def outer_iterations(self) -> int:
        return sum(1 for row in self.trace if row.get("n", 0) >= 1)

    def v_at(self, points) -> np.ndarray:
        rr = np.hypot(*np.moveaxis(np.asarray(points, dtype=float), -1, 0))
        return _interp_log(rr, self.mesh.r, self.v)

    def w_at(self, points) -> np.ndarray:
        return log_ell_fn(self.beta, self.critical)(np.asarray(points, dtype=float)) + self.v_at(points)

    def u_at(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return -self.bundle.nu1(p) + self.bundle.nu2(p) + self.w_at(p)


@dataclass
class LadderState:
    """Shift sequence of a ladder: A_{i+1} = floor(C_i) + 1."""

    A: list = field(default_factory=list)
    C: list = field(default_factory=list)

    @staticmethod
    def next_shift(C: float) -> int:
        return int(math.floor(C)) + 1

    @property
    def strictly_increasing(self) -> bool:
        return all(b > a for a, b in zip(self.C, self.C[1:]))


@dataclass(frozen=True)
class LadderDefect:
    rung: int
    shift: float
    reason: str
    constants: tuple[float, ...]
    growth_ratio: float = float("nan")


@dataclass
class LadderOutcome:
    rungs: list
    state: LadderState
    defect: Optional[LadderDefect] = None
    w0_norm: float = float("nan")

    def __len__(self) -> int:
        return len(self.rungs)

    def __iter__(self):
        return iter(self.rungs)

    def __getitem__(self, i):
        return self.rungs[i]

    @property
    def ok(self) -> bool:
        return self.defect is None


# ---------------------------------------------------------------- helpers

def _interp_log(r: np.ndarray, nodes: np.ndarray, values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.interp(np.log(np.maximum(r, 1e-300)), np.log(nodes), values)


def _frozen_weight(bundle: FieldBundle, ll_fn, nodes: np.ndarray, v: np.ndarray):
    """log W_n = log V - a log(E + ell e^{v_{n-1}}) as a point function."""
    a = bundle.cfg.a
    vb = v.copy()
    if a == 0:
        return bundle.log_V

    def lw(p):
        rr = np.hypot(p[..., 0], p[..., 1])
        return bundle.log_V(p) - a * np.logaddexp(bundle.log_E(p), ll_fn(p) + _interp_log(rr, nodes, vb))

    return lw


def _raise_over(sub: np.ndarray, over: np.ndarray) -> np.ndarray:
    # a constant shift keeps a supersolution super since h is nondecreasing
    return over + max(0.0, float(np.max(sub - over)))


def _minimal_scheme(bundle: FieldBundle, beta: float, mesh: RadialMesh, critical: bool = False,
                    truncated: bool = False, max_outer: int = 200, tol: float = 1e-8,
                    seed_v: Optional[np.ndarray] = None) -> tuple[np.ndarray, list]:
    """Outer sequence v_n with W_n frozen at v_{n-1}; W_0 = P unless seeded."""
    ll_fn = log_ell_fn(beta, critical)
    w0 = None if seed_v is None else _frozen_weight(bundle, ll_fn, mesh.r, seed_v)
    problem = radial_problem(bundle, f2_spec(bundle, beta, w0, critical), beta, mesh, critical,
                             truncated=truncated)
    prof = critical_profile(problem) if critical else None
    res, br = solve_auxiliary(problem, prof)
    v = res.v
    trace = [{"n": 0, "inner": res.iterations, "step": float("nan"),
              "min_increment": float("nan"), "t": br.t, "C": float(v[-1])}]
    for n in range(1, max_outer + 1):
        pn = problem.with_nl(f2_spec(bundle, beta, _frozen_weight(bundle, ll_fn, mesh.r, v), critical))
        try:
            t = flux_match_t(pn, pn.total_mass, prof)
        except TargetUnreachable as exc:
            raise OuterBreakdown(f"outer step {n}: {exc}", trace, v) from exc
        br = build_bracket(pn, t, prof)
        sub = np.maximum(br.sub, v)
        res = monotone_solve(pn, sub, _raise_over(sub, br.over))
        inc = res.v - v
        step = float(np.max(np.abs(inc)))
        trace.append({"n": n, "inner": res.iterations, "step": step,
                      "min_increment": float(np.min(inc)), "t": t, "C": float(res.v[-1])})
        v = res.v
        if step < tol:
            return v, trace
    raise OuterNonConvergence(f"outer loop not converged in {max_outer} iterations", trace)


def _assemble(kind: str, bundle: FieldBundle, beta: float, mesh: RadialMesh, v: np.ndarray,
              critical: bool, trace: list, tail_order: int = 64) -> BranchResult:
    a = bundle.cfg.a
    ll_fn = log_ell_fn(beta, critical)
    pts = mesh.points()
    ll = ll_fn(pts)
    w = ll + v
    logd = bundle.log_V(pts) + w - (1 + a) * np.logaddexp(bundle.log_E(pts), w)
    tr, tw = log_tail_nodes(float(mesh.r[-1]), tail_order)
    tp = bundle.radial(tr)
    wt = ll_fn(tp) + v[-1]
    tlogd = bundle.log_V(tp) + wt - (1 + a) * np.logaddexp(bundle.log_E(tp), wt)
    res = BranchResult(kind, bundle, beta, mesh, v, ll, logd, tr, tw, tlogd, critical=critical,
                       trace=trace)
    fr = magnetic_flux(res)
    res.flux, res.flux_error = fr.value, fr.richardson_error
    return res


def _core_average(res: BranchResult) -> tuple[np.ndarray, np.ndarray]:
    k = res.n_core
    return res.r[:k], res.u[:k]


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise RegimeMismatch(msg)


# ---------------------------------------------------------------- minimal and critical

def minimal_branch(cfg: VortexConfig, beta: float, mesh: Optional[RadialMesh] = None,
                   max_outer: int = 200, tol: float = 1e-8, gate: bool = True) -> BranchResult:
    """Minimal type-I solution by the monotone outer scheme."""
    _require(cfg.is_radial, "radial backend needs collocated marked points")
    bundle = build_bundle(cfg)
    if gate:
        verdict = classify_regime(derive_params(cfg), beta)
        _require(verdict.kind is RegimeKind.MinimalTypeI,
                 f"beta={beta} is {verdict.kind.value} ({verdict.basis}), not MinimalTypeI")
    mesh = mesh or default_mesh()
    v, trace = _minimal_scheme(bundle, beta, mesh, max_outer=max_outer, tol=tol)
    res = _assemble("minimal", bundle, beta, mesh, v, False, trace)
    res.fit = fit_log_expansion(_core_average(res), "log")
    res.classification = classify_solution(res.fit)
    res.checks["min_outer_increment"] = min(
        (row["min_increment"] for row in trace if row["n"] >= 1), default=0.0)
    return res


def critical_branch(cfg: VortexConfig, mesh: Optional[RadialMesh] = None, max_outer: int = 200,
                    tol: float = 1e-8, cross_check: tuple[float, ...] = ()) -> BranchResult:
    """Minimal solution at beta = beta*, with the extra -2 ln(Lambda) profile.

    ``cross_check`` lists offsets d > 0; minimal branches at beta* - d are
    solved and the pointwise order w_beta <= w_beta* is recorded.
    """
    _require(cfg.is_radial, "radial backend needs collocated marked points")
    params = derive_params(cfg)
    bs = params.beta_star
    verdict = classify_regime(params, bs)
    _require(verdict.kind is RegimeKind.CriticalMinimal and cfg.a > 0,
             f"beta*={bs} is {verdict.kind.value}, not CriticalMinimal")
    bundle = build_bundle(cfg)
    mesh = mesh or default_mesh()
    v, trace = _minimal_scheme(bundle, bs, mesh, critical=True, max_outer=max_outer, tol=tol)
    res = _assemble("critical", bundle, bs, mesh, v, True, trace)
    k = res.n_core
    res.fit = fit_log_expansion(_core_average(res), "loglog", window=(res.r[k - 1] / 100, res.r[k - 1]),
                                beta_fixed=bs, corrections=2)
    res.classification = classify_solution(res.fit)
    if cross_check:
        ws = []
        for d in sorted(cross_check, reverse=True):
            ws.append(minimal_branch(cfg, bs - d, mesh, max_outer, tol).w)
        ws.append(res.w)
        res.checks["beta_order_violation"] = max(float(np.max(lo - hi)) for lo, hi in zip(ws, ws[1:]))
    return res


def a0_reference_branch(cfg: VortexConfig, beta: float, mesh: Optional[RadialMesh] = None,
                        tol: float = 1e-8) -> BranchResult:
    """a = 0 branch; the log slope beta here is minus the slope of the classical a = 0 result."""
    if cfg.a != 0:
        raise RegimeMismatch("the reference branch needs a = 0")
    if cfg.M == cfg.N - 1:
        raise NoSolution("M = N - 1: no solution of the log class exists")
    if not (cfg.M < cfg.N - 1 and -2 * (cfg.N - cfg.M) < beta < -2):
        raise RegimeMismatch(f"beta={beta} outside (-2(N-M), -2)")
    res = minimal_branch(cfg, beta, mesh, tol=tol)
    res.kind = "a0"
    return res


# ---------------------------------------------------------------- ladders

def _frozen_scheme(problem, bundle: FieldBundle, beta: float, mesh: RadialMesh,
                   seed: np.ndarray, max_outer: int, tol: float, stall: int = 3) -> tuple[np.ndarray, list]:
    """Frozen-denominator outer sequence started from a shifted seed.

    Raises LadderDivergence when the outer steps stop contracting for
    ``stall`` consecutive iterations while exceeding 1 in sup norm.
    """
    a = bundle.cfg.a
    lW = lambda p: bundle.log_W(beta, p)
    ll_fn = log_ell_fn(beta)
    v = seed.copy()
    trace = []
    for n in range(1, max_outer + 1):
        vb = v.copy()
        frozen = lambda p, vb=vb: _interp_log(np.hypot(p[..., 0], p[..., 1]), mesh.r, vb)
        spec = NonlinearitySpec(NonlinearityKind.FrozenDenominator, lW, ll_fn, bundle.log_E, a=a,
                                beta=beta, frozen=frozen)
        pn = problem.with_nl(spec)
        try:
            t = flux_match_t(pn, pn.total_mass)
            wl = solve_linear_gauge(pn, pn.G - pn.H(np.full_like(v, t)))
            over = float(np.max(np.abs(v))) + wl + float(np.max(np.abs(wl))) + abs(t)
            res = monotone_solve(pn, v, _raise_over(v, over), max_iter=2000)
        except (TargetUnreachable, NonConvergence, BracketError, FloatingPointError) as exc:
            raise LadderDivergence(f"inner solve failed at outer step {n}: {exc}", trace) from exc
        inc = res.v - v
        step = float(np.max(np.abs(inc)))
        trace.append({"n": n, "inner": res.iterations, "step": step,
                      "min_increment": float(np.min(inc)), "t": t, "C": float(res.v[-1])})
        v = res.v
        if step < tol:
            return v, trace
        steps = [row["step"] for row in trace[-(stall + 1):]]
        if len(steps) == stall + 1 and step > 1.0 and all(y >= 0.9 * x for x, y in zip(steps, steps[1:])):
            raise LadderDivergence("outer constants grow without contracting", trace)
    raise LadderDivergence(f"no convergence in {max_outer} outer steps", trace)


def _growth_ratio(trace: list) -> float:
    C = [row["C"] for row in trace]
    if len(C) < 3:
        return float("nan")
    d = np.diff(C)
    if d[-2] == 0:
        return float("nan")
    return float(d[-1] / d[-2])


def _ladder(cfg: VortexConfig, beta: float, rungs: int, kind: str, mesh: Optional[RadialMesh],
            max_outer: int, tol: float) -> LadderOutcome:
    _require(cfg.is_radial, "radial backend needs collocated marked points")
    bundle = build_bundle(cfg)
    a = cfg.a
    mesh = mesh or default_mesh()
    lW = lambda p: bundle.log_W(beta, p)
    zero = lambda p: np.zeros(p.shape[:-1])
    spec = NonlinearitySpec(NonlinearityKind.ExpF1, lW, zero, bundle.log_E, a=a, beta=beta)
    problem = radial_problem(bundle, spec, beta, mesh)
    state = LadderState()
    try:
        res0, _ = solve_auxiliary(problem)
    except (TargetUnreachable, NonConvergence, BracketError) as exc:
        return LadderOutcome([], state, LadderDefect(0, float("nan"), f"seed problem: {exc}", ()))
    w0 = res0.v
    nrm = float(np.max(np.abs(w0)))
    A = LadderState.next_shift(nrm / a)
    out = LadderOutcome([], state, None, nrm)
    for i in range(1, rungs + 1):
        state.A.append(A)
        try:
            v, trace = _frozen_scheme(problem, bundle, beta, mesh, w0 + A * (1 + a), max_outer, tol)
        except LadderDivergence as exc:
            out.defect = LadderDefect(i, A, str(exc), tuple(row["C"] for row in exc.trace),
                                      _growth_ratio(exc.trace))
            return out
        res = _assemble(kind, bundle, beta, mesh, v, False, trace)
        res.ladder_index = i
        C = res.C
        if state.C and C <= state.C[-1]:
            out.defect = LadderDefect(i, A, "ladder stall: constant did not increase",
                                      tuple(state.C + [C]))
            return out
        state.C.append(C)
        if kind == "topological":
            res.fit = fit_log_expansion(_core_average(res), "power")
        else:
            res.fit = fit_log_expansion(_core_average(res), "log")
        res.classification = classify_solution(res.fit)
        out.rungs.append(res)
        A = LadderState.next_shift(C)
    return out


def multiple_branch(cfg: VortexConfig, beta: float, rungs: int = 3, mesh: Optional[RadialMesh] = None,
                    max_outer: int = 200, tol: float = 1e-8) -> LadderOutcome:
    """Ladder of type-II (beta > beta#+) or type-I (aN > 1, beta in (beta#, 0)) solutions."""
    p = derive_params(cfg)
    kind = classify_regime(p, beta).kind
    _require(kind in (RegimeKind.MultipleTypeII, RegimeKind.MultipleTypeI),
             f"beta={beta} is {kind.value}, not a multiple-solution regime")
    return _ladder(cfg, beta, rungs, "multiple", mesh, max_outer, tol)


def topological_branch(cfg: VortexConfig, rungs: int = 3, mesh: Optional[RadialMesh] = None,
                       max_outer: int = 200, tol: float = 1e-8) -> LadderOutcome:
    """beta = 0 ladder of bounded solutions; refused unless aN > 1 and M < N."""
    p = derive_params(cfg)
    if not (p.a * p.N > 1 and p.M < p.N):
        raise RegimeMismatch(f"aN = {p.a * p.N:g}: topological ladder needs aN > 1 and M < N")
    return _ladder(cfg, 0.0, rungs, "topological", mesh, max_outer, tol)


# ---------------------------------------------------------------- planar backend

@dataclass
class PlanarBranchResult:
    bundle: FieldBundle
    beta: float
    grid: PlanarGrid
    v_grid: np.ndarray
    trace: list

    def _interp(self) -> RegularGridInterpolator:
        ax = self.grid.axis
        return RegularGridInterpolator((ax, ax), self.v_grid, bounds_error=False, fill_value=None)

    def v_at(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return self._interp()(p.reshape(-1, 2)).reshape(p.shape[:-1])

    def w_at(self, points) -> np.ndarray:
        return log_ell_fn(self.beta)(np.asarray(points, dtype=float)) + self.v_at(points)

    def u_at(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return -self.bundle.nu1(p) + self.bundle.nu2(p) + self.w_at(p)


def planar_minimal_branch(cfg: VortexConfig, beta: float, grid: PlanarGrid,
                          boundary_v: Callable[[np.ndarray], np.ndarray], max_outer: int = 200,
                          tol: float = 1e-8) -> PlanarBranchResult:
    """Minimal scheme on the disk grid with Dirichlet data for v on its rim."""
    verdict = classify_regime(derive_params(cfg), beta)
    _require(verdict.kind is RegimeKind.MinimalTypeI,
             f"beta={beta} is {verdict.kind.value}, not MinimalTypeI")
    bundle = build_bundle(cfg)
    a = cfg.a
    ll_fn = log_ell_fn(beta)
    source = lambda p: bundle.g(beta, p)
    problem = planar_problem(source, f2_spec(bundle, beta), grid, boundary_v)
    idx = problem.meta["idx"]
    full = problem.meta["boundary"].copy()

    def to_grid(v):
        out = full.copy()
        out[idx] = v
        return out.reshape(grid.n, grid.n)

    # with Dirichlet data any level gives a certified bracket; use the rim mean
    t = float(np.mean(full[np.flatnonzero(problem.meta["boundary"])])) if np.any(full) else 0.0
    br = build_bracket(problem, t)
    res = monotone_solve(problem, br.sub, br.over)
    v = res.v
    trace = [{"n": 0, "inner": res.iterations}]
    for n in range(1, max_outer + 1):
        interp = RegularGridInterpolator((grid.axis, grid.axis), to_grid(v), bounds_error=False,
                                         fill_value=None)
        vv = lambda p, f=interp: f(p.reshape(-1, 2)).reshape(p.shape[:-1])
        if a == 0:
            lw = bundle.log_V
        else:
            lw = lambda p, vv=vv: bundle.log_V(p) - a * np.logaddexp(bundle.log_E(p), ll_fn(p) + vv(p))
        pn = problem.with_nl(f2_spec(bundle, beta, lw))
        br = build_bracket(pn, t)
        sub = np.maximum(br.sub, v)
        r2 = monotone_solve(pn, sub, _raise_over(sub, br.over))
        step = float(np.max(np.abs(r2.v - v)))
        trace.append({"n": n, "inner": r2.iterations, "step": step,
                      "min_increment": float(np.min(r2.v - v))})
        v = r2.v
        if step < tol:
            return PlanarBranchResult(bundle, beta, grid, to_grid(v), trace)
    raise OuterNonConvergence(f"planar outer loop not converged in {max_outer} iterations", trace)


# ---------------------------------------------------------------- probe support

def probe_candidate(cfg: VortexConfig, beta: float, r_cut: float, nodes: int = 1024) -> tuple[float, str]:
    """Value of u at r_cut for the ungated minimal scheme on the ball B_{r_cut}.

    When a pole has a n_j >= 1 the weight W_0 = P is not integrable at the
    pole; the outer sequence is then started from v = 0 instead.
    """
    bundle = build_bundle(cfg)
    mesh = RadialMesh.log_graded(DEFAULT_RMIN, r_cut, nodes, buffer_decades=0.0)
    seed = None
    note = ""
    if any(cfg.a * n >= 1 for _, n in cfg.poles):
        seed = np.zeros(mesh.size)
        note = "outer sequence started from v = 0 (W_0 not integrable at the pole)"
    try:
        v, trace = _minimal_scheme(bundle, beta, mesh, truncated=True, seed_v=seed)
    except OuterBreakdown as exc:
        v = exc.v
        note = "; ".join(filter(None, [note, f"last iterate kept: {exc}"]))
    pt = bundle.radial(np.array([mesh.r[-1]]))
    u = float(-bundle.nu1(pt)[0] + bundle.nu2(pt)[0] + log_ell_fn(beta)(pt)[0] + v[-1])
    return u, note
