"""Run configuration, command dispatch and deterministic text output.

A run is described by a small key=value file with four sections::

    [problem]
    poles = 0,0:1
    a = 0.5
    A0 = 1

    [run]
    command = solve
    branch = minimal
    beta = -1.5

    [mesh]
    nodes = 2048

    [output]
    dir = out

Every artifact is plain text: profiles are CSV with a ``#`` header and
summaries are flat ``key=value`` files, written with LF endings and a fixed
number format so that identical configs produce identical bytes.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .branches import (DEFAULT_RMIN, BranchResult, LadderDivergence, NoSolution, OuterBreakdown, OuterNonConvergence,
                       RegimeMismatch, a0_reference_branch, critical_branch, minimal_branch,
                       multiple_branch, planar_minimal_branch, topological_branch)
from .diagnostics import Verdict, circular_average, divergence_probe
from .elliptic import BracketError, NonConvergence, TargetUnreachable
from .green import (annulus_dipole, certify_decay, log_tail_density, power_tail_density,
                    radial_potential)
from .mesh import PlanarGrid, RadialMesh
from .problem import (ConfigError, RegimeKind, VortexConfig, classify_regime, derive_params,
                      feasible_ranges)

COMMANDS = ("solve", "scan-beta", "verify-lemmas", "probe", "report")
BRANCHES = ("minimal", "critical", "multiple", "topological", "a0")
BACKENDS = ("radial", "planar")
PROFILE_HEADER = "# r,uBar,wBar,vBar,fluxDensity"
THREADS_ENV = "SIGMA_VORTEX_THREADS"

EXIT_OK, EXIT_DEFECT, EXIT_USAGE = 0, 1, 2


class ConfigParseError(ValueError):
    """Malformed or invalid run configuration; ``line`` is 1-based when known."""

    def __init__(self, msg: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line else msg)


# ---------------------------------------------------------------- run config

@dataclass(frozen=True)
class MeshSettings:
    backend: str = "radial"
    nodes: int = 2048
    rmax: float = 1e4
    h: float = 0.25
    L: float = 40.0


@dataclass(frozen=True)
class OutputSettings:
    dir: str = "out"
    profile: str = "profile.csv"
    summary: str = "summary.txt"


@dataclass(frozen=True)
class RunConfig:
    problem: VortexConfig
    command: str = "solve"
    branch: str = "minimal"
    beta: Optional[float] = None
    beta_range: Optional[tuple[float, float]] = None
    beta_steps: int = 5
    rungs: int = 3
    tol: float = 1e-8
    max_outer: int = 200
    mesh: MeshSettings = field(default_factory=MeshSettings)
    output: OutputSettings = field(default_factory=OutputSettings)


_KEYS = {
    "problem": ("poles", "antipoles", "a", "A0", "sigma", "r0", "standing_assumption"),
    "run": ("command", "branch", "beta", "beta_range", "beta_steps", "rungs", "tol", "max_outer"),
    "mesh": ("backend", "nodes", "rmax", "h", "L"),
    "output": ("dir", "profile", "summary"),
}

_MARK = re.compile(r"^\s*\(?\s*([^,():]+)\s*,\s*([^,():]+)\s*\)?\s*:\s*(\S+)\s*$")


def _line_index(text: str) -> dict[tuple[str, str], int]:
    """(section, key) -> 1-based line of its definition, for error messages."""
    out: dict[tuple[str, str], int] = {}
    sec = ""
    for i, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            sec = s[1:-1].strip()
        elif "=" in s and not s.startswith(("#", ";")):
            out.setdefault((sec, s.split("=", 1)[0].strip()), i)
    return out


def _parse_marks(s: str) -> tuple:
    items = []
    for chunk in filter(None, (c.strip() for c in s.split(";"))):
        m = _MARK.match(chunk)
        if not m:
            raise ValueError(f"expected 'x,y:n', got {chunk!r}")
        x, y, n = float(m.group(1)), float(m.group(2)), m.group(3)
        if not re.fullmatch(r"[0-9]+", n):
            raise ValueError(f"multiplicity must be a positive integer, got {n!r}")
        items.append(((x, y), int(n)))
    return tuple(items)


def _finite(s: str) -> float:
    x = float(s)
    if not math.isfinite(x):
        raise ValueError(f"expected a finite number, got {s!r}")
    return x


def _positive_int(s: str) -> int:
    if not re.fullmatch(r"\s*[0-9]+\s*", s) or int(s) < 1:
        raise ValueError(f"expected a positive integer, got {s!r}")
    return int(s)


def _pair(s: str) -> tuple[float, float]:
    parts = [p.strip() for p in s.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'lo,hi', got {s!r}")
    lo, hi = _finite(parts[0]), _finite(parts[1])
    if lo >= hi:
        raise ValueError(f"beta_range needs lo < hi, got {lo:g} >= {hi:g}")
    return lo, hi


def _choice(options: Sequence[str]):
    def conv(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return conv


_CONVERTERS = {
    ("problem", "poles"): _parse_marks, ("problem", "antipoles"): _parse_marks,
    ("problem", "a"): _finite, ("problem", "A0"): _finite, ("problem", "sigma"): _finite,
    ("problem", "r0"): _finite, ("problem", "standing_assumption"): _choice(("enforce", "relax")),
    ("run", "command"): _choice(COMMANDS), ("run", "branch"): _choice(BRANCHES),
    ("run", "beta"): _finite, ("run", "beta_range"): _pair, ("run", "beta_steps"): _positive_int,
    ("run", "rungs"): _positive_int, ("run", "tol"): _finite, ("run", "max_outer"): _positive_int,
    ("mesh", "backend"): _choice(BACKENDS), ("mesh", "nodes"): _positive_int,
    ("mesh", "rmax"): _finite, ("mesh", "h"): _finite, ("mesh", "L"): _finite,
    ("output", "dir"): str, ("output", "profile"): str, ("output", "summary"): str,
}


def parse_config(text: str, command: Optional[str] = None) -> RunConfig:
    """Parse and validate a run configuration.

    Syntax errors and unknown sections or keys raise ``ConfigParseError``
    with the offending line; invariant violations of the problem instance
    surface the same way, pointing at the ``[problem]`` header. A given
    ``command`` replaces the file's ``[run] command`` before validation.
    """
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError("key outside any section", exc.lineno) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigParseError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigParseError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigParseError("malformed line", lineno) from None
    lines = _line_index(text)
    header = {s: i for i, s in ((i, ln.strip()[1:-1].strip()) for i, ln in enumerate(text.splitlines(), 1)
                                if ln.strip().startswith("["))}
    vals: dict[tuple[str, str], object] = {}
    for sec in cp.sections():
        if sec not in _KEYS:
            raise ConfigParseError(f"unknown section [{sec}]", header.get(sec))
        for key, raw in cp.items(sec):
            line = lines.get((sec, key))
            if key not in _KEYS[sec]:
                raise ConfigParseError(f"unknown key {key!r} in [{sec}]", line)
            try:
                vals[(sec, key)] = _CONVERTERS[(sec, key)](raw.strip())
            except ValueError as exc:
                raise ConfigParseError(f"{key}: {exc}", line) from None
    g = lambda sec, key, default=None: vals.get((sec, key), default)
    if g("problem", "poles") is None:
        raise ConfigParseError("[problem] needs a 'poles' entry", header.get("problem"))
    try:
        problem = VortexConfig(poles=g("problem", "poles"), antipoles=g("problem", "antipoles", ()),
                               a=g("problem", "a", 0.0), A0=g("problem", "A0", 1.0),
                               sigma=g("problem", "sigma"), r0=g("problem", "r0"),
                               strict=g("problem", "standing_assumption", "enforce") == "enforce")
    except ConfigError as exc:
        raise ConfigParseError(str(exc), header.get("problem")) from None
    d = RunConfig(problem)
    rc = RunConfig(
        problem=problem,
        command=command or g("run", "command", d.command), branch=g("run", "branch", d.branch),
        beta=g("run", "beta"), beta_range=g("run", "beta_range"),
        beta_steps=g("run", "beta_steps", d.beta_steps), rungs=g("run", "rungs", d.rungs),
        tol=g("run", "tol", d.tol), max_outer=g("run", "max_outer", d.max_outer),
        mesh=MeshSettings(**{k: g("mesh", k, getattr(d.mesh, k)) for k in _KEYS["mesh"]}),
        output=OutputSettings(**{k: g("output", k, getattr(d.output, k)) for k in _KEYS["output"]}),
    )
    try:
        validate(rc)
    except ConfigParseError as exc:
        raise ConfigParseError(str(exc), header.get("run")) from None
    return rc


def validate(rc: RunConfig) -> None:
    """Command-specific requirements and cross-field checks."""
    if rc.command not in COMMANDS:
        raise ConfigParseError(f"unknown command {rc.command!r}")
    if not (rc.tol > 0 and rc.mesh.rmax > 1 and rc.mesh.nodes >= 3 and rc.mesh.h > 0 and rc.mesh.L > 0):
        raise ConfigParseError("tol, h and L must be positive, rmax > 1 and nodes >= 3")
    needs_beta = rc.branch in ("minimal", "multiple", "a0")
    if rc.command == "solve":
        if needs_beta and rc.beta is None:
            raise ConfigParseError(f"solve with branch={rc.branch} needs beta")
        if not needs_beta and rc.beta is not None:
            raise ConfigParseError(f"branch={rc.branch} fixes its own beta; remove the beta key")
        if rc.mesh.backend == "planar" and rc.branch != "minimal":
            raise ConfigParseError("the planar backend only runs the minimal branch")
    if rc.command == "scan-beta":
        if rc.beta_range is None:
            raise ConfigParseError("scan-beta needs beta_range")
        if rc.beta_steps < 2:
            raise ConfigParseError("scan-beta needs beta_steps >= 2")
    if rc.command == "probe" and rc.beta is None and rc.branch != "topological":
        raise ConfigParseError("probe needs beta, or branch=topological for the bounded class")


def _num(x: float) -> str:
    return repr(float(x))


def format_config(rc: RunConfig) -> str:
    """Inverse of ``parse_config``: every field written explicitly."""
    marks = lambda ms: "; ".join(f"{_num(x)},{_num(y)}:{n}" for (x, y), n in ms)
    p = rc.problem
    lines = ["[problem]", f"poles = {marks(p.poles)}"]
    if p.antipoles:
        lines.append(f"antipoles = {marks(p.antipoles)}")
    lines += [f"a = {_num(p.a)}", f"A0 = {_num(p.A0)}", f"sigma = {_num(p.sigma)}", f"r0 = {_num(p.r0)}",
              f"standing_assumption = {'enforce' if p.strict else 'relax'}", "",
              "[run]", f"command = {rc.command}", f"branch = {rc.branch}"]
    if rc.beta is not None:
        lines.append(f"beta = {_num(rc.beta)}")
    if rc.beta_range is not None:
        lines.append(f"beta_range = {_num(rc.beta_range[0])},{_num(rc.beta_range[1])}")
    lines += [f"beta_steps = {rc.beta_steps}", f"rungs = {rc.rungs}", f"tol = {_num(rc.tol)}",
              f"max_outer = {rc.max_outer}", "", "[mesh]", f"backend = {rc.mesh.backend}",
              f"nodes = {rc.mesh.nodes}", f"rmax = {_num(rc.mesh.rmax)}", f"h = {_num(rc.mesh.h)}",
              f"L = {_num(rc.mesh.L)}", "", "[output]", f"dir = {rc.output.dir}",
              f"profile = {rc.output.profile}", f"summary = {rc.output.summary}"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- text output

def fmt(x) -> str:
    """Fixed 12-significant-digit rendering used in every artifact."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return "%.11e" % x
    return str(x)


@dataclass(frozen=True)
class ProfileRecord:
    """Column data of a profile file; radii strictly increasing, values finite."""

    r: np.ndarray
    uBar: np.ndarray
    wBar: np.ndarray
    vBar: np.ndarray
    fluxDensity: np.ndarray

    def __post_init__(self) -> None:
        cols = [np.asarray(getattr(self, f.name), dtype=float) for f in dataclasses.fields(self)]
        if len({c.shape for c in cols}) != 1 or cols[0].ndim != 1:
            raise ValueError("profile columns must be 1-d arrays of equal length")
        if not all(np.all(np.isfinite(c)) for c in cols):
            raise ValueError("profile values must be finite")
        if np.any(np.diff(cols[0]) <= 0):
            raise ValueError("profile radii must be strictly increasing")
        for f, c in zip(dataclasses.fields(self), cols):
            object.__setattr__(self, f.name, c)

    @classmethod
    def empty(cls) -> "ProfileRecord":
        z = np.zeros(0)
        return cls(z, z, z, z, z)

    @classmethod
    def from_result(cls, result: BranchResult) -> "ProfileRecord":
        k = result.n_core
        return cls(result.r[:k], result.u[:k], result.w[:k], result.v[:k],
                   np.exp(result.log_density[:k]))

    def lines(self) -> list[str]:
        rows = np.stack([self.r, self.uBar, self.wBar, self.vBar, self.fluxDensity], axis=1)
        return [PROFILE_HEADER] + [",".join(fmt(x) for x in row) for row in rows]


def _write_text(path, lines: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_profile(result, path) -> None:
    """Write a BranchResult (core nodes only) or a ProfileRecord as CSV."""
    rec = result if isinstance(result, ProfileRecord) else ProfileRecord.from_result(result)
    _write_text(path, rec.lines())


def write_summary(path, items: Sequence[tuple[str, object]]) -> None:
    _write_text(path, [f"{k}={fmt(v)}" for k, v in items])


def read_summary(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        k, _, v = line.partition("=")
        out[k] = v
    return out


# ---------------------------------------------------------------- commands

_SOLVER_ERRORS = (RegimeMismatch, NoSolution, OuterNonConvergence, OuterBreakdown, LadderDivergence,
                  TargetUnreachable, BracketError, NonConvergence)


def _error_code(exc: Exception) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", type(exc).__name__).lower()


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigParseError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigParseError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _radial_mesh(rc: RunConfig) -> RadialMesh:
    return RadialMesh.log_graded(DEFAULT_RMIN, rc.mesh.rmax, rc.mesh.nodes)


def _problem_items(rc: RunConfig) -> list[tuple[str, object]]:
    p = rc.problem
    d = derive_params(p)
    return [("N", p.N), ("M", p.M), ("a", p.a), ("A0", p.A0), ("sigma", p.sigma), ("r0", p.r0),
            ("beta_star", d.beta_star), ("beta_sharp", d.beta_sharp), ("alpha_star", d.alpha_star)]


def _branch_items(res: BranchResult, prefix: str = "") -> list[tuple[str, object]]:
    rel = abs(res.flux - res.expected_flux) / abs(res.expected_flux) if res.expected_flux else math.nan
    items = [("beta", res.beta), ("flux", res.flux), ("flux_over_pi", res.flux / math.pi),
             ("expected_flux", res.expected_flux), ("flux_rel_error", rel), ("flux_richardson", res.flux_error),
             ("C", res.C), ("outer_iterations", res.outer_iterations)]
    if res.fit is not None:
        items += [("beta_hat", res.fit.beta_hat), ("C_hat", res.fit.C_hat),
                  ("fit_residual", res.fit.residual), ("fit_model", res.fit.model)]
        if res.fit.loglog_coef is not None:
            items.append(("loglog_coef", res.fit.loglog_coef))
    items.append(("classification", res.classification.value))
    items += [(k, v) for k, v in sorted(res.checks.items())]
    return [(prefix + k, v) for k, v in items]


def _flux_defects(res: BranchResult, tag: str = "") -> list[str]:
    ok = abs(res.flux - res.expected_flux) <= 0.01 * abs(res.expected_flux)
    return [] if ok else [f"{tag}flux_mismatch"]


def _solve_radial(rc: RunConfig, out: Path) -> tuple[list, list[str]]:
    cfg, mesh = rc.problem, _radial_mesh(rc)
    items: list = [("branch", rc.branch)]
    defects: list[str] = []
    if rc.branch in ("minimal", "a0", "critical"):
        if rc.branch == "minimal":
            res = minimal_branch(cfg, rc.beta, mesh, rc.max_outer, rc.tol)
        elif rc.branch == "a0":
            res = a0_reference_branch(cfg, rc.beta, mesh, rc.tol)
            items.append(("sign_note", "a=0 slope b maps to beta=-b"))
        else:
            res = critical_branch(cfg, mesh, rc.max_outer, rc.tol)
        write_profile(res, out / rc.output.profile)
        items += _branch_items(res)
        defects += _flux_defects(res)
        if res.checks.get("min_outer_increment", 0.0) < -1e-9:
            defects.append("outer_not_monotone")
        if rc.branch == "critical" and res.fit is not None and res.fit.loglog_coef is not None:
            if abs(res.fit.loglog_coef + 2.0) > 0.2:
                defects.append("loglog_coefficient")
        return items, defects
    if rc.branch == "multiple":
        outcome = multiple_branch(cfg, rc.beta, rc.rungs, mesh, rc.max_outer, rc.tol)
    else:
        outcome = topological_branch(cfg, rc.rungs, mesh, rc.max_outer, rc.tol)
    stem = Path(rc.output.profile)
    for i, res in enumerate(outcome, 1):
        write_profile(res, out / f"{stem.stem}_rung{i}{stem.suffix}")
        items += _branch_items(res, f"rung{i}_")
        defects += _flux_defects(res, f"rung{i}_")
    items += [("rungs_requested", rc.rungs), ("rungs_built", len(outcome)),
              ("constants_increasing", outcome.state.strictly_increasing)]
    if outcome.defect is not None:
        items += [("ladder_defect_rung", outcome.defect.rung), ("ladder_defect", outcome.defect.reason),
                  ("ladder_growth_ratio", outcome.defect.growth_ratio)]
        defects.append("ladder_" + re.sub(r"\W+", "_", outcome.defect.reason.split(":")[0]).strip("_"))
    return items, defects


def _collapsed(cfg: VortexConfig) -> VortexConfig:
    """All poles merged at the origin; used for planar far-field data."""
    return VortexConfig(poles=(((0.0, 0.0), cfg.N),), a=cfg.a, A0=cfg.A0, sigma=cfg.sigma, strict=False)


def _solve_planar(rc: RunConfig, out: Path) -> tuple[list, list[str]]:
    cfg = rc.problem
    if cfg.M:
        raise RegimeMismatch("planar boundary data needs M = 0")
    ref = minimal_branch(_collapsed(cfg), rc.beta, _radial_mesh(rc), rc.max_outer, rc.tol, gate=False)
    grid = PlanarGrid(rc.mesh.L, rc.mesh.h, rc.mesh.L)
    res = planar_minimal_branch(cfg, rc.beta, grid, ref.v_at, rc.max_outer, rc.tol)
    radii = np.geomspace(max(4 * rc.mesh.h, 1e-2), 0.9 * rc.mesh.L, 64)
    # circles through a marked point would sample u = -inf there
    marked = np.array([math.hypot(*p) for p, _ in cfg.poles + cfg.antipoles])
    radii = radii[np.all(np.abs(radii[:, None] - marked[None]) > 1e-6 * radii[:, None], axis=1)]
    b, a = res.bundle, cfg.a

    def density(p):
        w = res.w_at(p)
        return np.exp(b.log_V(p) + w - (1 + a) * np.logaddexp(b.log_E(p), w))

    cols = [circular_average(f, radii)[:, 1] for f in (res.u_at, res.w_at, res.v_at, density)]
    write_profile(ProfileRecord(radii, *cols), out / rc.output.profile)
    far = radii > 0.5 * rc.mesh.L
    cr = circular_average(ref.w_at, radii[far])[:, 1]
    rel = float(np.max(np.abs(cols[1][far] - cr) / np.abs(cr)))
    items = [("branch", "minimal"), ("backend", "planar"), ("beta", rc.beta), ("grid_h", rc.mesh.h),
             ("grid_L", rc.mesh.L), ("outer_iterations", len(res.trace) - 1),
             ("far_field_rel_diff_vs_radial", rel)]
    return items, ([] if rel <= 0.02 else ["planar_radial_disagreement"])


def _cmd_solve(rc: RunConfig, out: Path) -> tuple[list, list[str]]:
    if rc.mesh.backend == "planar":
        return _solve_planar(rc, out)
    return _solve_radial(rc, out)


def _regime_rows(rc: RunConfig) -> list[str]:
    rows = ["# lo,hi,lo_closed,hi_closed,kind,basis,flux_at_finite_end"]
    for v in feasible_ranges(derive_params(rc.problem)):
        br = v.beta_range
        rows.append(",".join([fmt(br.lo), fmt(br.hi), fmt(br.lo_closed), fmt(br.hi_closed), v.kind.value,
                              v.basis, fmt(v.expected_flux if v.expected_flux is not None else math.nan)]))
    return rows


def _scan_point(rc: RunConfig, i: int, beta: float, out: Path) -> list[str]:
    verdict = classify_regime(derive_params(rc.problem), beta)
    items: list = [("index", i), ("beta", beta), ("regime", verdict.kind.value), ("basis", verdict.basis)]
    status, flux, beta_hat = "skipped", math.nan, math.nan
    if verdict.kind is RegimeKind.MinimalTypeI and rc.problem.is_radial:
        try:
            res = minimal_branch(rc.problem, beta, _radial_mesh(rc), rc.max_outer, rc.tol)
            write_profile(res, out / f"profile_beta_{i:03d}.csv")
            items += _branch_items(res)[1:]
            flux, beta_hat = res.flux, res.fit.beta_hat if res.fit else math.nan
            status = "ok" if not _flux_defects(res) else "flux_mismatch"
        except _SOLVER_ERRORS as exc:
            status = _error_code(exc)
    items.append(("status", status))
    write_summary(out / f"summary_beta_{i:03d}.txt", items)
    return [fmt(beta), verdict.kind.value, fmt(flux), fmt(verdict.expected_flux or math.nan), fmt(beta_hat),
            status]


def _cmd_scan(rc: RunConfig, out: Path) -> tuple[list, list[str]]:
    lo, hi = rc.beta_range
    betas = np.linspace(lo, hi, rc.beta_steps)
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        rows = list(pool.map(lambda ib: _scan_point(rc, ib[0], float(ib[1]), out), enumerate(betas)))
    _write_text(out / "scan.csv", ["# beta,regime,flux,expected_flux,beta_hat,status"] + [",".join(r) for r in rows])
    _write_text(out / "regimes.csv", _regime_rows(rc))
    bad = [f"beta_{i:03d}_{r[-1]}" for i, r in enumerate(rows) if r[-1] not in ("ok", "skipped")]
    return [("points", len(rows)), ("solved", sum(r[-1] == "ok" for r in rows))], bad


def verify_lemmas() -> tuple[list, list[str]]:
    """Decay certificates for the three synthetic densities."""
    items: list = []
    defects: list[str] = []
    ann = annulus_dipole()
    l1 = 2 * math.pi  # |F| integrates to pi on each half of the dipole
    cases = [("compact", ann, dict(l1_norm=l1)), ("power", power_tail_density(3.0), {}),
             ("log", log_tail_density(4.0), {})]
    for name, spec, kw in cases:
        cert = certify_decay(radial_potential(spec), spec.decay, **kw)
        if name == "log":
            ok = cert.corrected_slope_u <= cert.slope_tol and cert.corrected_slope_grad <= cert.slope_tol
            items += [("log_slope_u", cert.corrected_slope_u), ("log_slope_grad", cert.corrected_slope_grad),
                      ("log_claimed_weight_slope_u", cert.slope_u),
                      ("log_claimed_weight_bounded", cert.u_bounded)]
        else:
            ok = cert.passed
            items += [(f"{name}_sup_u", cert.sup_u), (f"{name}_sup_grad", cert.sup_grad),
                      (f"{name}_margin", cert.margin)]
        items.append((f"{name}_passed", ok))
        if not ok:
            defects.append(f"certificate_{name}")
    return items, defects


def _cmd_verify(rc: RunConfig, out: Path) -> tuple[list, list[str]]:
    return verify_lemmas()


def _cmd_probe(rc: RunConfig, out: Path) -> tuple[list, list[str]]:
    beta = None if rc.branch == "topological" and rc.beta is None else rc.beta
    cfg = rc.problem if rc.problem.strict is False else rc.problem.with_(strict=False)
    rep = divergence_probe(cfg, beta)
    verdict = classify_regime(derive_params(rc.problem), beta)
    items = [("beta", "topological" if beta is None else beta), ("regime", verdict.kind.value),
             ("verdict", rep.verdict.value), ("growth_rate", rep.growth_rate), ("epsilon", rep.epsilon_used),
             ("r_cut", rep.r_cut), ("u_cut", rep.u_cut), ("max_excess", rep.max_excess),
             ("slope_gain", rep.slope_gain),
             ("window_lo", rep.window[0] if rep.window else math.nan),
             ("window_hi", rep.window[1] if rep.window else math.nan),
             ("notes", "; ".join(rep.notes) if rep.notes else "none")]
    defects = []
    if verdict.kind.is_existence and rep.verdict is Verdict.DivergesUpward:
        defects.append("probe_contradicts_existence")
    nonexist = verdict.kind in (RegimeKind.NoLogSolution, RegimeKind.NoTopological)
    if nonexist and rep.verdict is Verdict.Bounded:
        defects.append("probe_contradicts_nonexistence")
    return items, defects


def _cmd_report(rc: RunConfig, out: Path) -> tuple[list, list[str]]:
    _write_text(out / "regimes.csv", _regime_rows(rc))
    return [("regimes", len(feasible_ranges(derive_params(rc.problem))))], []


_DISPATCH = {"solve": _cmd_solve, "scan-beta": _cmd_scan, "verify-lemmas": _cmd_verify,
             "probe": _cmd_probe, "report": _cmd_report}


def run_command(rc: RunConfig, out_dir: Optional[str] = None) -> int:
    """Run one command, write its artifacts and a summary; return the exit status."""
    validate(rc)
    out = Path(out_dir if out_dir is not None else rc.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    head = [("command", rc.command)] + _problem_items(rc)
    try:
        items, defects = _DISPATCH[rc.command](rc, out)
    except _SOLVER_ERRORS as exc:
        items, defects = [("error", str(exc).replace("\n", " "))], [_error_code(exc)]
    status = "ok" if not defects else "defect"
    write_summary(out / rc.output.summary,
                  head + items + [("status", status), ("defects", ",".join(defects) or "none")])
    return EXIT_OK if not defects else EXIT_DEFECT


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="sigma-vortex", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="key=value run configuration")
    ap.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    args = ap.parse_args(argv)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        rc = parse_config(text, command=args.command)
        thread_count()
    except (OSError, ConfigParseError) as exc:
        print(f"sigma-vortex: {exc}", file=sys.stderr)
        return EXIT_USAGE
    code = run_command(rc, args.out)
    summary = Path(args.out if args.out is not None else rc.output.dir) / rc.output.summary
    print(summary.read_text(encoding="utf-8"), end="")
    return code


if __name__ == "__main__":
    sys.exit(main())
