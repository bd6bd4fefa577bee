"""Problem instances, derived exponents and the regime classifier."""

from __future__ import annotations

import math

import pytest
from hypothesis import given, strategies as st

from sigma_vortex.problem import (E_E, TOPOLOGICAL, BetaRange, ConfigError, RegimeKind, RegimeVerdict,
                                  VortexConfig, classify_regime, derive_params, feasible_ranges)

FINITE_FLOATS = st.floats(allow_nan=False, allow_infinity=False, width=64)
BETAS = st.floats(min_value=-20.0, max_value=20.0, allow_nan=False, allow_infinity=False)
EXPONENTS = st.floats(min_value=0.0, max_value=3.0, allow_nan=False, allow_infinity=False)

# independent polar quadrature about p1 over the half plane x > 0, r = s^2
ALPHA_STAR_TWO_POLES = 2.1884396152265


def collocated(n: int, a: float, m: int = 0) -> VortexConfig:
    anti = (((3.0, 0.0), m),) if m else ()
    return VortexConfig(poles=(((0.0, 0.0), n),), antipoles=anti, a=a, strict=False)


# ---------------------------------------------------------------- VortexConfig

def test_defaults_fill_sigma_and_r0():
    cfg = VortexConfig(poles=(((0.0, 0.0), 1),), a=0.5)
    assert cfg.sigma == 1.0
    assert cfg.r0 == pytest.approx(max(E_E, 2.0))


def test_sigma_default_uses_pairwise_distance():
    cfg = VortexConfig(poles=(((-1.0, 0.0), 1), ((1.0, 0.0), 1)))
    assert cfg.sigma == pytest.approx(0.8)
    assert cfg.r0 == pytest.approx(max(E_E, 2 * 1.0 + 2 * 0.8))


def test_standing_assumption_enforced():
    with pytest.raises(ConfigError, match="an_j < 1 violated"):
        VortexConfig(poles=(((0.0, 0.0), 1),), a=2.0)


def test_relaxed_assumption_allows_large_an():
    cfg = VortexConfig(poles=(((0.0, 0.0), 2),), a=1.0, strict=False)
    assert cfg.N == 2


@pytest.mark.parametrize("kw", [
    dict(poles=(((0.0, 0.0), 1), ((0.0, 0.0), 1))),
    dict(poles=(((0.0, 0.0), 0),)),
    dict(poles=(((0.0, 0.0), 1),), a=-0.1),
    dict(poles=(((0.0, 0.0), 1),), A0=0.0),
    dict(poles=(((-1.0, 0.0), 1), ((1.0, 0.0), 1)), sigma=1.0),
    dict(poles=(((0.0, 0.0), 1),), r0=2.0),
])
def test_invalid_configs_rejected(kw):
    with pytest.raises(ConfigError):
        VortexConfig(**kw)


def test_empty_config_is_radial():
    cfg = VortexConfig()
    assert cfg.N == cfg.M == 0 and cfg.is_radial


# ---------------------------------------------------------------- derive_params

def test_desk_params():
    p = derive_params(VortexConfig(poles=(((0.0, 0.0), 1),), a=0.5))
    assert (p.N, p.M) == (1, 0)
    assert p.beta_star == -1.0
    assert p.beta_sharp == 2.0
    assert math.isinf(p.alpha_star)


def test_empty_params_give_flux_two_pi_beta():
    p = derive_params(VortexConfig(a=0.7))
    assert p.N == p.M == 0
    v = RegimeVerdict(RegimeKind.MinimalTypeI, BetaRange(-1.0, 2.0), "test")
    assert v.flux_at(1.0, p) == pytest.approx(2 * math.pi)


def test_alpha_star_infinite_when_some_an_at_least_one():
    p = derive_params(collocated(2, 1.0))
    assert math.isinf(p.alpha_star)


def test_alpha_star_matches_independent_quadrature():
    """Two poles (+-1, 0), n=1, a=0.75: partition-of-unity quadrature vs a half-plane rule."""
    cfg = VortexConfig(poles=(((-1.0, 0.0), 1), ((1.0, 0.0), 1)), a=0.75)
    assert derive_params(cfg).alpha_star == pytest.approx(ALPHA_STAR_TWO_POLES, rel=1e-8)


@given(n=st.integers(1, 4), m=st.integers(0, 3), a=EXPONENTS)
def test_beta_star_nonpositive_when_an_le_one(n, m, a):
    """aN <= 1 forces beta* = 2aN - 2 <= 0."""
    p = derive_params(collocated(n, a, m))
    if a * n <= 1:
        assert p.beta_star <= 0.0
        assert p.beta_star == pytest.approx(min(0.0, 2 * a * n - 2))


@given(n=st.integers(1, 4), m=st.integers(0, 3), a=st.floats(0.01, 3.0))
def test_beta_sharp_negative_iff(n, m, a):
    """beta# < 0 exactly when aN > 1 and N > M."""
    p = derive_params(collocated(n, a, m))
    assert (p.beta_sharp < 0) == (a * n > 1 and n > m)


# ---------------------------------------------------------------- classify_regime

def test_classify_desk_minimal():
    p = derive_params(VortexConfig(poles=(((0.0, 0.0), 1),), a=0.5))
    v = classify_regime(p, -1.5)
    assert v.kind is RegimeKind.MinimalTypeI
    assert (v.beta_range.lo, v.beta_range.hi) == (-2.0, -1.0)
    assert v.expected_flux == pytest.approx(math.pi)


def test_classify_desk_nonexistence():
    p = derive_params(VortexConfig(poles=(((0.0, 0.0), 1),), a=0.5))
    assert classify_regime(p, 0.5).kind is RegimeKind.NoLogSolution


def test_classify_no_topological_at_an_one():
    p = derive_params(collocated(1, 1.0))
    assert classify_regime(p, TOPOLOGICAL).kind is RegimeKind.NoTopological
    # beta = 0 = beta* here: the critical class u = -2 ln ln r + O(1), not bounded
    assert classify_regime(p, 0.0).kind is RegimeKind.CriticalMinimal


def test_classify_multiple_type_one():
    p = derive_params(collocated(2, 1.0))
    v = classify_regime(p, -1.0)
    assert v.kind is RegimeKind.MultipleTypeI
    assert (v.beta_range.lo, v.beta_range.hi) == (-2.0, 0.0)


def test_classify_critical_point():
    p = derive_params(VortexConfig(poles=(((0.0, 0.0), 1),), a=0.5))
    v = classify_regime(p, -1.0)
    assert v.kind is RegimeKind.CriticalMinimal and v.beta_range.is_point


def test_classify_a0_layers():
    p = derive_params(collocated(3, 0.0))
    assert classify_regime(p, -4.0).kind is RegimeKind.MinimalTypeI
    assert classify_regime(p, -2.0).kind is RegimeKind.CriticalMinimal
    assert classify_regime(p, -1.0).kind is RegimeKind.NoLogSolution
    p1 = derive_params(collocated(1, 0.0))
    assert classify_regime(p1, -1.0).kind is RegimeKind.NoLogSolution


@given(n=st.integers(0, 4), m=st.integers(0, 3), a=EXPONENTS, beta=BETAS)
def test_classifier_total(n, m, a, beta):
    """Every (params, beta) gets exactly one verdict, and flux iff existence."""
    cfg = collocated(n, a, m) if n else VortexConfig(a=a)
    v = classify_regime(derive_params(cfg), beta)
    assert isinstance(v.kind, RegimeKind)
    assert (v.expected_flux is not None) == v.kind.is_existence


@given(n=st.integers(1, 4), a=st.floats(0.05, 0.95), d=st.floats(0.01, 0.9))
def test_expected_flux_affine_with_slope_two_pi(n, a, d):
    """Inside one existence interval the expected flux moves with slope 2 pi."""
    p = derive_params(collocated(n, a / n))
    lo = -2.0 * n
    b1 = lo + d * (p.beta_star - lo)
    b2 = lo + 0.5 * (b1 + p.beta_star - 2 * lo)
    v1, v2 = classify_regime(p, b1), classify_regime(p, b2)
    if v1.kind is v2.kind is RegimeKind.MinimalTypeI and b2 != b1:
        assert (v2.expected_flux - v1.expected_flux) / (b2 - b1) == pytest.approx(2 * math.pi)


# ---------------------------------------------------------------- feasible_ranges

def test_feasible_ranges_desk():
    rows = feasible_ranges(derive_params(VortexConfig(poles=(((0.0, 0.0), 1),), a=0.5)))
    got = [(r.kind, r.beta_range.lo, r.beta_range.hi) for r in rows if r.kind is not RegimeKind.Unknown]
    assert got == [
        (RegimeKind.MinimalTypeI, -2.0, -1.0),
        (RegimeKind.CriticalMinimal, -1.0, -1.0),
        (RegimeKind.NoLogSolution, -1.0, 2.0),
        (RegimeKind.PaperTension, 2.0, 3.0),
        (RegimeKind.MultipleTypeII, 3.0, math.inf),
    ]
    tension = [r for r in rows if r.kind is RegimeKind.PaperTension][0]
    assert tension.beta_range.lo_closed and not tension.beta_range.hi_closed


def test_feasible_ranges_a0_layer():
    rows = feasible_ranges(derive_params(collocated(3, 0.0)))
    kinds = {r.kind: r.beta_range for r in rows}
    assert kinds[RegimeKind.MinimalTypeI].lo == -6.0
    assert kinds[RegimeKind.MinimalTypeI].hi == -2.0
    assert kinds[RegimeKind.CriticalMinimal].contains(-2.0)


def test_feasible_ranges_topological_present():
    rows = feasible_ranges(derive_params(collocated(1, 2.0)))
    assert any(r.kind is RegimeKind.TopologicalMultiple for r in rows)


@given(n=st.integers(1, 3), m=st.integers(0, 2), a=EXPONENTS, beta=BETAS)
def test_feasible_ranges_partition_agrees_with_classifier(n, m, a, beta):
    """The merged intervals cover the line and each one reports the pointwise verdict."""
    p = derive_params(collocated(n, a, m))
    rows = [r for r in feasible_ranges(p) if r.beta_range.contains(beta)]
    assert len(rows) == 1
    assert rows[0].kind is classify_regime(p, beta).kind
