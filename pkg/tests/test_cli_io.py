"""Run configuration parsing, command dispatch and deterministic output."""

from __future__ import annotations

import hashlib
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from sigma_vortex.cli import (EXIT_DEFECT, EXIT_OK, EXIT_USAGE, PROFILE_HEADER, ConfigParseError,
                              MeshSettings, OutputSettings, ProfileRecord, RunConfig, fmt, format_config,
                              main, parse_config, read_summary, run_command, thread_count, write_profile)
from sigma_vortex.problem import E_E, ConfigError, VortexConfig

FINITE_FLOATS = st.floats(allow_nan=False, allow_infinity=False, width=64)
COORDS = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False, allow_infinity=False)

DESK = """\
[problem]
poles = 0,0:1
a = 0.5
A0 = 1

[run]
branch = minimal
beta = -1.5
"""


def desk_text(**run) -> str:
    extra = "".join(f"{k} = {v}\n" for k, v in run.items())
    return DESK + extra


def sha(path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------- parsing

def test_minimal_file_gets_defaults():
    rc = parse_config("[problem]\npoles = 0,0:1\n", command="report")
    assert rc.problem.sigma == 1.0 and rc.problem.r0 == pytest.approx(max(E_E, 2.0))
    assert rc.mesh == MeshSettings() and rc.mesh.rmax == 1e4 and rc.mesh.nodes == 2048
    assert rc.output == OutputSettings()


def test_marks_parse_with_and_without_parentheses():
    rc = parse_config("[problem]\npoles = (-1,0):1; 1.0, 0 : 2\nantipoles = 0,3:1\n", command="report")
    assert rc.problem.poles == (((-1.0, 0.0), 1), ((1.0, 0.0), 2))
    assert rc.problem.antipoles == (((0.0, 3.0), 1),)


def test_standing_assumption_error():
    with pytest.raises(ConfigParseError, match="an_j < 1 violated") as ei:
        parse_config("[problem]\npoles = 0,0:1\na = 2\n", command="report")
    assert ei.value.line == 1


def test_standing_assumption_relaxed():
    rc = parse_config("[problem]\npoles = 0,0:1\na = 2\nstanding_assumption = relax\n", command="report")
    assert rc.problem.a == 2.0 and not rc.problem.strict


def test_beta_range_order_enforced():
    with pytest.raises(ConfigParseError, match="line 4"):
        parse_config("[problem]\npoles = 0,0:1\n[run]\nbeta_range = 1,0\n", command="scan-beta")


def test_unknown_key_reports_line():
    with pytest.raises(ConfigParseError, match="unknown key 'foo'") as ei:
        parse_config("[problem]\npoles = 0,0:1\n\nfoo = 1\n")
    assert ei.value.line == 4


@pytest.mark.parametrize("text, pattern", [
    ("poles = 0,0:1\n", "outside any section"),
    ("[problem]\npoles = 0,0:1\n[extra]\nx = 1\n", "unknown section"),
    ("[problem]\npoles = 0,0:1\npoles = 1,0:1\n", "duplicate key"),
    ("[problem]\na = 0.5\n", "needs a 'poles'"),
    ("[problem]\npoles = 0,0:x\n", "poles"),
    ("[problem]\npoles = 0,0:1\na = nan\n", "a:"),
    ("[problem]\npoles = 0,0:1\n[mesh]\nbackend = spectral\n", "backend"),
    ("[problem]\npoles = 0,0:1\n[mesh]\nnodes = -3\n", "nodes"),
])
def test_malformed_configs(text, pattern):
    with pytest.raises(ConfigParseError, match=pattern):
        parse_config(text, command="report")


@pytest.mark.parametrize("command, run, pattern", [
    ("solve", "", "needs beta"),
    ("solve", "branch = critical\nbeta = -1\n", "fixes its own beta"),
    ("scan-beta", "", "needs beta_range"),
    ("scan-beta", "beta_range = -1.9,-1.1\nbeta_steps = 1\n", "beta_steps"),
    ("probe", "", "probe needs beta"),
    ("solve", "beta = -1.5\n[mesh]\nbackend = planar\n[run2]\n", "unknown section"),
])
def test_command_requirements(command, run, pattern):
    with pytest.raises(ConfigParseError, match=pattern):
        parse_config("[problem]\npoles = 0,0:1\na = 0.5\n[run]\n" + run, command=command)


def test_planar_backend_minimal_only():
    text = "[problem]\npoles = 0,0:1\na = 0.5\n[run]\nbranch = critical\n[mesh]\nbackend = planar\n"
    with pytest.raises(ConfigParseError, match="planar backend"):
        parse_config(text, command="solve")


@st.composite
def run_configs(draw):
    n_poles = draw(st.integers(1, 2))
    pts = [(draw(COORDS), draw(COORDS)) for _ in range(n_poles)]
    ns = [draw(st.integers(1, 3)) for _ in range(n_poles)]
    a = draw(st.floats(0.0, 0.9)) / max(ns)
    anti = tuple(((draw(COORDS), draw(COORDS)), draw(st.integers(1, 2)))
                 for _ in range(draw(st.integers(0, 1))))
    try:
        problem = VortexConfig(poles=tuple(zip(pts, ns)), antipoles=anti, a=a,
                               A0=draw(st.floats(0.1, 10.0)))
    except ConfigError:
        assume(False)
    command = draw(st.sampled_from(["solve", "scan-beta", "probe", "report", "verify-lemmas"]))
    beta = draw(st.one_of(st.none(), st.floats(-5.0, 5.0)))
    lo = draw(st.floats(-5.0, 4.0))
    rng = draw(st.one_of(st.none(), st.just((lo, lo + draw(st.floats(0.1, 3.0))))))
    if command == "solve" and beta is None:
        beta = -1.5
    if command == "probe" and beta is None:
        beta = 0.0
    if command == "scan-beta" and rng is None:
        rng = (-1.9, -1.1)
    mesh = MeshSettings(draw(st.sampled_from(["radial", "planar"])) if command != "solve" else "radial",
                        draw(st.integers(3, 8192)), draw(st.floats(10.0, 1e6)), draw(st.floats(0.01, 1.0)),
                        draw(st.floats(1.0, 100.0)))
    return RunConfig(problem, command, "minimal", beta, rng, draw(st.integers(2, 20)), draw(st.integers(1, 6)),
                     draw(st.floats(1e-12, 1e-4)), draw(st.integers(1, 500)), mesh,
                     OutputSettings(draw(st.sampled_from(["out", "runs/a"])), "p.csv", "s.txt"))


@settings(max_examples=60)
@given(rc=run_configs())
def test_round_trip(rc):
    """parse(format(rc)) reproduces every field exactly."""
    assert parse_config(format_config(rc)) == rc


# ---------------------------------------------------------------- formatting and profiles

@pytest.mark.parametrize("x, s", [(math.pi, "3.14159265359e+00"), (True, "true"), (3, "3"),
                                  (math.nan, "nan"), (-math.inf, "-inf"), ("x", "x")])
def test_fmt(x, s):
    assert fmt(x) == s


@given(x=FINITE_FLOATS)
def test_fmt_has_twelve_significant_digits(x):
    """Rendering keeps 12 significant digits."""
    assert float(fmt(x)) == pytest.approx(x, rel=1e-11, abs=0.0) or x == 0.0


def test_empty_profile_is_header_only(tmp_path):
    p = tmp_path / "empty.csv"
    write_profile(ProfileRecord.empty(), p)
    assert p.read_bytes() == (PROFILE_HEADER + "\n").encode()


@pytest.mark.parametrize("cols", [
    ([1.0, 1.0], [0, 0], [0, 0], [0, 0], [0, 0]),
    ([1.0, 2.0], [0, math.nan], [0, 0], [0, 0], [0, 0]),
    ([1.0, 2.0], [0], [0, 0], [0, 0], [0, 0]),
])
def test_profile_record_invariants(cols):
    with pytest.raises(ValueError):
        ProfileRecord(*[np.asarray(c, dtype=float) for c in cols])


def test_desk_profile_rows_and_bytes(tmp_path, desk_minimal):
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_profile(desk_minimal, p1)
    write_profile(desk_minimal, p2)
    raw = p1.read_bytes()
    lines = raw.decode().split("\n")
    assert lines[0] == PROFILE_HEADER and lines[-1] == ""
    assert len(lines) - 2 == desk_minimal.n_core == 2048
    assert b"\r" not in raw
    assert sha(p1) == sha(p2)
    row = lines[1].split(",")
    assert len(row) == 5 and all(len(c.split("e")[0].replace("-", "").replace(".", "")) == 12 for c in row)


# ---------------------------------------------------------------- commands

def test_solve_desk_minimal(tmp_path):
    rc = parse_config(desk_text(), command="solve")
    assert run_command(rc, str(tmp_path)) == EXIT_OK
    s = read_summary(tmp_path / "summary.txt")
    assert s["status"] == "ok" and s["defects"] == "none"
    assert float(s["flux"]) == pytest.approx(math.pi, rel=1e-2)
    assert (tmp_path / "profile.csv").exists()


def test_solve_twice_is_byte_identical(tmp_path):
    rc = parse_config(desk_text(), command="solve")
    for d in ("r1", "r2"):
        run_command(rc, str(tmp_path / d))
    for name in ("summary.txt", "profile.csv"):
        assert sha(tmp_path / "r1" / name) == sha(tmp_path / "r2" / name)


def test_solve_in_nonexistence_regime_is_defect(tmp_path):
    rc = parse_config(desk_text().replace("beta = -1.5", "beta = 0.5"), command="solve")
    assert run_command(rc, str(tmp_path)) == EXIT_DEFECT
    assert read_summary(tmp_path / "summary.txt")["defects"] == "regime_mismatch"


def test_probe_nonexistence(tmp_path):
    rc = parse_config(desk_text().replace("beta = -1.5", "beta = 0.5"), command="probe")
    assert run_command(rc, str(tmp_path)) == EXIT_OK
    s = read_summary(tmp_path / "summary.txt")
    assert s["verdict"] == "DivergesUpward" and s["regime"] == "NoLogSolution"


def test_verify_lemmas_certificates_pass(tmp_path):
    rc = parse_config(DESK, command="verify-lemmas")
    assert run_command(rc, str(tmp_path)) == EXIT_OK
    assert read_summary(tmp_path / "summary.txt")["status"] == "ok"


def test_scan_beta_writes_rows(tmp_path):
    text = "[problem]\npoles = 0,0:1\na = 0.5\n[run]\nbeta_range = -1.9,0.5\nbeta_steps = 3\n"
    rc = parse_config(text, command="scan-beta")
    assert run_command(rc, str(tmp_path)) == EXIT_OK
    rows = (tmp_path / "scan.csv").read_text().splitlines()
    assert len(rows) == 4
    assert [r.split(",")[-1] for r in rows[1:]] == ["ok", "skipped", "skipped"]
    assert (tmp_path / "summary_beta_000.txt").exists() and (tmp_path / "regimes.csv").exists()


def test_report_regime_table(tmp_path):
    rc = parse_config(DESK, command="report")
    assert run_command(rc, str(tmp_path)) == EXIT_OK
    rows = (tmp_path / "regimes.csv").read_text().splitlines()
    assert rows[0].startswith("# lo,hi") and any("MinimalTypeI" in r for r in rows)


def test_main_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "desk.ini"
    cfg.write_text(DESK)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert "status=ok" in capsys.readouterr().out
    bad = tmp_path / "bad.ini"
    bad.write_text("[problem]\npoles = 0,0:1\na = 2\n")
    assert main(["solve", "--config", str(bad)]) == EXIT_USAGE
    assert "an_j < 1 violated" in capsys.readouterr().err
    assert main(["solve", "--config", str(tmp_path / "missing.ini")]) == EXIT_USAGE


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv("SIGMA_VORTEX_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("SIGMA_VORTEX_THREADS", "zero")
    with pytest.raises(ConfigParseError):
        thread_count()
    monkeypatch.delenv("SIGMA_VORTEX_THREADS")
    assert thread_count() == 1
