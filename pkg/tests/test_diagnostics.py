"""Flux quadrature, circular averages, asymptotic fits and divergence probes."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sigma_vortex.diagnostics import (AsymptoticFit, SolutionType, TailNotDecaying, Verdict, circular_average,
                                      classify_solution, divergence_probe, envelope_deficit,
                                      fit_log_expansion, integrate_radial, magnetic_flux, probe_epsilon)
from sigma_vortex.fields import ln_lambda
from sigma_vortex.problem import TOPOLOGICAL, VortexConfig

COEFS = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)


def bubble(r):
    r = np.asarray(r, dtype=float)
    return 4.0 * np.exp(-2 * np.logaddexp(0.0, 2 * np.log(r)))


def fit_of(beta_hat: float, C_hat: float = 0.0, residual: float = 0.0) -> AsymptoticFit:
    return AsymptoticFit(beta_hat, C_hat, (1e2, 1e4), residual, "log")


# ---------------------------------------------------------------- flux

def test_flux_of_bubble_is_four_pi():
    rep = magnetic_flux(bubble)
    assert rep.value == pytest.approx(4 * math.pi, rel=1e-10)
    assert float(rep) == rep.value and rep.richardson_error < 1e-10


def test_flux_rejects_non_decaying_tail():
    with pytest.raises(TailNotDecaying):
        integrate_radial(lambda r: -2 * np.log(np.asarray(r, dtype=float)))


def test_flux_rejects_other_inputs():
    with pytest.raises(TypeError):
        magnetic_flux(3.0)


def test_desk_flux(desk_minimal):
    assert magnetic_flux(desk_minimal).value == pytest.approx(math.pi, rel=1e-2)


@given(s=st.floats(min_value=0.1, max_value=10.0))
def test_flux_scale_invariance(s):
    """Rescaling the bubble r -> r/s multiplies its mass by s^2."""
    rep = magnetic_flux(lambda r: bubble(np.asarray(r) / s))
    assert rep.value == pytest.approx(4 * math.pi * s**2, rel=1e-8)


# ---------------------------------------------------------------- circular averages

def test_average_of_odd_harmonic_vanishes():
    rows = circular_average(lambda p: p[..., 0], [0.5, 3.0, 40.0])
    assert np.allclose(rows[:, 1], 0.0, atol=1e-12)


@given(beta=COEFS)
def test_average_of_beta_ln_lambda(beta):
    """Radial fields average to themselves; beta ln lambda = beta ln r beyond e^e."""
    radii = np.geomspace(math.exp(math.e), 1e4, 7)
    rows = circular_average(lambda p: beta * ln_lambda(np.hypot(p[..., 0], p[..., 1])), radii)
    assert np.allclose(rows[:, 1], beta * np.log(radii), rtol=1e-12, atol=1e-12)


def test_average_about_center():
    rows = circular_average(lambda p: (p[..., 0] - 1.0) ** 2, [2.0], center=(1.0, 0.0))
    assert rows[0, 1] == pytest.approx(2.0)


# ---------------------------------------------------------------- fits

def test_fit_log_model_exact():
    r = np.geomspace(1.0, 1e4, 400)
    fit = fit_log_expansion((r, 3 + 5 * np.log(r)), "log")
    assert fit.beta_hat == pytest.approx(5.0, abs=1e-10)
    assert fit.C_hat == pytest.approx(3.0, abs=1e-9)
    assert fit.residual < 1e-10


def test_fit_loglog_model_exact():
    r = np.geomspace(3.0, 1e4, 400)
    fit = fit_log_expansion((r, -np.log(r) - 2 * np.log(np.log(r)) + 1), "loglog",
                            window=(1e2, 1e4))
    assert abs(fit.loglog_coef + 2.0) < 1e-6


@given(C=COEFS, beta=COEFS, gamma=COEFS)
def test_fit_loglog_recovers_coefficients(C, beta, gamma):
    """C + beta ln r + gamma ln ln r is reproduced by the loglog model."""
    r = np.geomspace(10.0, 1e5, 300)
    fit = fit_log_expansion((r, C + beta * np.log(r) + gamma * np.log(np.log(r))), "loglog",
                            window=(1e2, 1e5))
    assert fit.beta_hat == pytest.approx(beta, abs=1e-6)
    assert fit.loglog_coef == pytest.approx(gamma, abs=1e-5)


def test_fit_accepts_rows():
    r = np.geomspace(1.0, 1e4, 100)
    rows = np.column_stack([r, 2 * np.log(r)])
    assert fit_log_expansion(rows).beta_hat == pytest.approx(2.0)


def test_fit_window_checks():
    r = np.geomspace(1.0, 1e4, 100)
    with pytest.raises(ValueError, match="1.5 decades"):
        fit_log_expansion((r, np.log(r)), window=(1e2, 1e3))
    with pytest.raises(ValueError, match="20 samples"):
        fit_log_expansion((np.geomspace(1.0, 1e4, 30), np.zeros(30)), window=(1e2, 1e4))
    with pytest.raises(ValueError, match="unknown model"):
        fit_log_expansion((r, np.log(r)), "cubic")


def test_fit_flags_ill_conditioning():
    r = np.geomspace(1e3, 1e5, 200)
    u = -np.log(r) - 2 * np.log(np.log(r)) + 1
    assert not fit_log_expansion((r, u), "loglog", window=(1e3, 1e5)).ill_conditioned
    assert fit_log_expansion((r, u), "loglog", window=(1e3, 1e5), corrections=7).ill_conditioned


def test_fit_power_model():
    r = np.geomspace(1.0, 1e4, 400)
    fit = fit_log_expansion((r, 7 + 2 * r**-0.75), "power")
    assert fit.C_hat == pytest.approx(7.0, abs=1e-8)
    assert fit.kappa_hat == pytest.approx(0.75, rel=1e-4)


def test_desk_fit_slope(desk_minimal):
    k = desk_minimal.n_core
    fit = fit_log_expansion((desk_minimal.r[:k], desk_minimal.u[:k]))
    assert fit.beta_hat == pytest.approx(-1.5, rel=0.02)


# ---------------------------------------------------------------- classification

@pytest.mark.parametrize("fit, kind", [
    (fit_of(-1.5), SolutionType.TypeI),
    (fit_of(0.01, 7.0), SolutionType.Topological),
    (fit_of(3.0), SolutionType.TypeII),
    (fit_of(-1.5, residual=1.0), SolutionType.Inconclusive),
    (fit_of(0.0, math.inf), SolutionType.Inconclusive),
])
def test_classify_examples(fit, kind):
    assert classify_solution(fit) is kind


@given(beta=COEFS, C=COEFS)
def test_classify_follows_sign(beta, C):
    """Clear positive or negative slopes classify by sign, small ones as topological."""
    kind = classify_solution(fit_of(beta, C))
    expect = (SolutionType.TypeI if beta < -0.05 else SolutionType.TypeII if beta > 0.05
              else SolutionType.Topological)
    assert kind is expect


def test_classification_stable_under_window_shift(desk_minimal, desk_critical):
    for res in (desk_minimal, desk_critical):
        k = res.n_core
        rr = res.r[k - 1]
        base = fit_log_expansion((res.r[:k], res.u[:k]), window=(rr / 100, rr / 3))
        shifted = fit_log_expansion((res.r[:k], res.u[:k]), window=(rr / 100 / 10**0.5, rr / 3 / 10**0.5))
        assert classify_solution(base) is classify_solution(shifted) is SolutionType.TypeI


# ---------------------------------------------------------------- probes

def test_probe_epsilon():
    assert probe_epsilon(0.5, 1, 0.0) == pytest.approx(1.0)
    assert probe_epsilon(0.5, 1, -1.5) == pytest.approx(-0.5)


def test_probe_nonexistence_diverges(desk_cfg):
    rep = divergence_probe(desk_cfg, 0.0)
    assert rep.verdict is Verdict.DivergesUpward
    lo, hi = rep.window
    assert math.log10(hi / lo) >= 2.0


def test_probe_existence_bounded(desk_cfg):
    rep = divergence_probe(desk_cfg, -1.5)
    assert rep.verdict is Verdict.Bounded
    assert rep.max_excess < 1.0
    # the shot reaches slope beta at the horizon from below
    assert abs(rep.slope_gain) < 1e-8


def test_envelope_deficit_finite_iff_below_beta_star(desk_cfg):
    assert math.isfinite(envelope_deficit(desk_cfg, -1.5, -8.0, 1e2))
    assert math.isinf(envelope_deficit(desk_cfg, -1.0, -8.0, 1e2))
    assert math.isinf(envelope_deficit(desk_cfg, 0.0, -8.0, 1e2))


def test_probe_topological_an_one_diverges():
    cfg = VortexConfig(poles=(((0.0, 0.0), 1),), a=1.0, strict=False)
    rep = divergence_probe(cfg, TOPOLOGICAL)
    assert rep.verdict is Verdict.DivergesUpward
    assert rep.beta == 0.0


@pytest.mark.parametrize("beta", [-1.9, -1.7, -1.3, -1.1, -1.02])
def test_probe_asymmetry_existence_side(desk_cfg, beta):
    assert divergence_probe(desk_cfg, beta).verdict is Verdict.Bounded


@pytest.mark.parametrize("beta", [-0.5, 0.5, 1.5])
def test_probe_asymmetry_nonexistence_side(desk_cfg, beta):
    assert divergence_probe(desk_cfg, beta).verdict is Verdict.DivergesUpward


def test_probe_needs_radial_config():
    cfg = VortexConfig(poles=(((-1.0, 0.0), 1), ((1.0, 0.0), 1)), a=0.25)
    with pytest.raises(ValueError):
        divergence_probe(cfg, -1.0)
