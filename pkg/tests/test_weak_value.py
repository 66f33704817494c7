import math

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings
from hypothesis import strategies as st

from qsmooth.core import BlochYZ, Effect, NumericalError, Params
from qsmooth.weak_value import (
    KrausRecordPdf,
    LocalRecordPdf,
    generalized_weak_value,
    local_record_pdf,
    q8_swv_state,
    swv_components,
    weak_record_mean,
)

angles = st.floats(0.0, 2 * math.pi)
radii = st.floats(0.0, 1.0)


def state(r, a):
    return BlochYZ(r * math.sin(a), r * math.cos(a))


def effect(r, a):
    return Effect(1.0, r * math.sin(a), r * math.cos(a))


@settings(max_examples=50)
@given(radii, angles, st.floats(0.05, 2.0))
def test_weak_value_without_postselection_is_expectation(r, a, gu):
    p = Params(gamma_u=gu)
    rho = state(r, a)
    # 2 Re Tr(c_u rho) = -sqrt(gamma_u) y
    assert weak_record_mean(rho, Effect(1.0, 0.0, 0.0), p) == pytest.approx(-math.sqrt(gu) * rho.y, abs=1e-12)


def test_weak_value_zero_overlap_raises():
    with pytest.raises(NumericalError):
        generalized_weak_value(BlochYZ(0.0, -1.0), Effect(1.0, 0.0, 1.0), Params().c_unobserved())


@settings(max_examples=50)
@given(radii, angles, radii, angles)
def test_swv_matches_matrix_anticommutator(r1, a1, r2, a2):
    rho = state(r1, a1)
    e = effect(0.999 * r2, a2)
    m = e.matrix() @ rho.matrix() + rho.matrix() @ e.matrix()
    m = m / np.trace(m).real
    s = q8_swv_state(rho, e)
    assert np.allclose(s.matrix(), m, atol=1e-10)


def test_swv_can_exceed_unit_radius():
    rho = state(1.0, 0.3)
    e = effect(0.9, 2.6)
    s = q8_swv_state(rho, e)
    assert s.radius > 1.0
    with pytest.raises(NumericalError):
        swv_components(np.array([0.0]), np.array([-1.0]), np.array([1.0]), np.array([0.0]), np.array([1.0]))


@pytest.mark.parametrize("dt", [1e-2, 1e-3])
def test_kraus_density_normalized_with_stated_mean(dt):
    rng = np.random.default_rng(4)
    p = Params()
    for _ in range(5):
        rho = state(rng.uniform(), rng.uniform(0, 2 * math.pi))
        e = effect(rng.uniform(0, 0.99), rng.uniform(0, 2 * math.pi))
        k = KrausRecordPdf.build(rho, e, p.c_unobserved(), dt)
        lim = 12 / math.sqrt(dt)
        mass = scipy.integrate.quad(k.density, -lim, lim, limit=200)[0]
        mean = scipy.integrate.quad(lambda u: u * k.density(u), -lim, lim, limit=200)[0]
        assert mass == pytest.approx(1.0, abs=1e-10)
        assert mean == pytest.approx(k.mean, abs=1e-8 * max(1.0, abs(k.mean)))
        grid = k.mean + np.linspace(-3, 3, 600001)
        assert k.mode() == pytest.approx(grid[np.argmax(k.density(grid))], abs=2e-5)


def test_local_pdf_mode_solves_stationarity():
    pdf = LocalRecordPdf(0.8, 1e-2)
    u = pdf.mode()
    assert u * (1 + u * pdf.mean * pdf.dt) == pytest.approx(pdf.mean)
    assert LocalRecordPdf(0.0, 1e-3).mode() == 0.0


def test_local_pdf_mean_is_weak_value():
    p = Params()
    rho, e = state(0.9, 1.0), effect(0.5, 2.0)
    assert local_record_pdf(rho, e, p).mean == weak_record_mean(rho, e, p)


def test_kraus_mean_converges_to_weak_value():
    p = Params()
    rho, e = state(0.9, 1.0), effect(0.5, 2.0)
    wv = weak_record_mean(rho, e, p)
    gaps = [abs(KrausRecordPdf.build(rho, e, p.c_unobserved(), dt).mean - wv) for dt in (1e-2, 1e-3)]
    assert gaps[1] < gaps[0] / 5
