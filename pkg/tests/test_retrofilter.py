import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from qsmooth.core import Effect, NumericalError, Params
from qsmooth.retrofilter import effect_matrix, effect_overlap, final_effect, propagate_effect

SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0]).astype(complex)


def adjoint_no_jump_rate(p, x):
    """-dE/dt from the Heisenberg-picture generator with the observed jump removed."""
    a, b, z = x
    e = a * np.eye(2) + b * SY + z * SZ
    h = p.hamiltonian()
    co, cu = p.c_observed(), p.c_unobserved()
    out = 1j * (h @ e - e @ h) + cu.conj().T @ e @ cu
    for c in (co, cu):
        cdc = c.conj().T @ c
        out = out - 0.5 * (cdc @ e + e @ cdc)
    return np.array([0.5 * np.trace(out).real, 0.5 * np.trace(out @ SY).real, 0.5 * np.trace(out @ SZ).real])


@given(
    st.floats(0.0, 5.0),
    st.floats(0.05, 2.0),
    st.floats(0.0, 2.0),
    st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)),
)
def test_effect_matrix_matches_adjoint_generator(omega, go, gu, x):
    p = Params(omega=omega, gamma_o=go, gamma_u=gu)
    x = np.array(x)
    assert np.allclose(0.5 * effect_matrix(p) @ x, -adjoint_no_jump_rate(p, x), atol=1e-12)


def test_final_effect_is_excited_projector():
    p = Params()
    a, b, z = final_effect(p)
    assert b == 0 and a == z == pytest.approx(0.5 * p.gamma_o * p.dt)


def test_propagation_matches_matrix_exponential():
    p = Params(T=2.0)
    tab = propagate_effect(p)
    m = effect_matrix(p)
    x_T = final_effect(p)
    for k in (0, 500, 1500, 2000):
        exact = scipy.linalg.expm(0.5 * m * (k * p.dt - p.T)) @ x_T
        got = np.exp(tab.log_scale[k]) * np.array([tab.alpha[k], tab.beta[k], tab.zeta[k]])
        assert np.allclose(got, exact, rtol=1e-10, atol=0)


def test_effect_shrinks_backwards_and_stays_positive(default_params):
    tab = propagate_effect(default_params)
    assert np.all(np.hypot(tab.beta, tab.zeta) <= tab.alpha + 1e-12)
    assert tab.effect(0).is_positive()
    # a long jump-free future is less likely than a short one
    assert tab.log_scale[0] < tab.log_scale[-1] - 1.0


def test_every_keeps_rows():
    tab = propagate_effect(Params(T=1.0))
    sub = tab.every(10)
    assert len(sub) == 101 and sub.dt == pytest.approx(1e-2)
    assert sub.alpha[3] == tab.alpha[30]
    assert tab.every(1) is tab


def test_overlap_of_pure_state():
    e = Effect(1.0, 0.3, -0.4)
    th = 0.9
    assert effect_overlap(e, th) == pytest.approx(1 - 0.4 * math.cos(th) + 0.3 * math.sin(th))


@settings(max_examples=30)
@given(st.floats(0.0, 2 * math.pi))
def test_final_effect_overlap_vanishes_only_at_ground(theta):
    a, b, z = final_effect(Params())
    ov = a + z * math.cos(theta) + b * math.sin(theta)
    assert ov >= 0
    if abs(theta - math.pi) > 1e-3:
        assert ov > 0


def test_invalid_inputs():
    p = Params()
    with pytest.raises(ValueError):
        propagate_effect(p, T=1.0005)
    with pytest.raises(ValueError):
        propagate_effect(Params(gamma_o=0.0, gamma_u=1.0))
    with pytest.raises(ValueError):
        propagate_effect(p, final=np.zeros(3))
    with pytest.raises(NumericalError):
        propagate_effect(p, T=0.1, final=np.array([0.1, 1.0, 0.0]))
