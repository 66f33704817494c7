import math

import numpy as np
import pytest
import scipy.optimize

from qsmooth.core import BlochYZ, NumericalError, Params, PureAngle
from qsmooth.trajectory import (
    chunk_generator,
    diffusive_measurement_update,
    filtered_trajectory,
    integrate_theta_map,
    lindblad_generator,
    lindblad_solution,
    propagate_ostensible,
    step_true_sme,
    step_unnormalized_sme,
    theta_lambda_increment,
    waiting_time_pdf,
    weighted_mean_and_se,
)

SM = np.array([[0, 0], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])
SZ = np.diag([1.0, -1.0]).astype(complex)


def kraus_oracle(theta, u, dt, p):
    """Apply the no-jump Kraus operators to the pure state vector directly."""
    co = math.sqrt(p.gamma_o) * SM
    cu = -1j * math.sqrt(p.gamma_u) * SM
    h = 0.5 * p.omega * np.array([[0, 1], [1, 0]], dtype=complex)
    m = (
        np.eye(2)
        - 1j * dt * h
        + dt * u * cu
        - 0.5 * dt * cu.conj().T @ cu
        - 0.5 * dt * cu @ cu
        + 0.5 * dt * dt * u * u * cu @ cu
        - 0.5 * dt * co.conj().T @ co
    )
    psi = m @ np.array([math.cos(theta / 2), 1j * math.sin(theta / 2)])
    n = np.vdot(psi, psi).real
    rho = np.outer(psi, psi.conj()) / n
    return math.atan2(np.trace(rho @ SY).real, np.trace(rho @ SZ).real), n


def angle_gap(a, b):
    return abs((a - b + math.pi) % (2 * math.pi) - math.pi)


def test_ground_state_fixed_without_drive():
    p = Params(omega=0.0, gamma_o=1.0, gamma_u=0.0)
    th, lam = diffusive_measurement_update(math.pi, 1.0, 0.0, 1e-3, p)
    assert th == pytest.approx(math.pi) and lam == 1.0


def test_update_at_quarter_turn():
    p = Params()
    dt = 1e-3
    th, lam = diffusive_measurement_update(PureAngle(math.pi / 2), 1.0, 0.0, dt, p)
    assert th == pytest.approx(math.pi / 2 - dt * p.omega + dt * p.gamma / 2, abs=1e-15)


def test_lambda_unchanged_at_ground_state():
    p = Params()
    for u in (-30.0, 0.0, 12.0):
        _, lam = diffusive_measurement_update(math.pi, 2.0, u, 1e-3, p)
        assert lam == pytest.approx(2.0, abs=1e-14)


@pytest.mark.parametrize("dt", [1e-2, 1e-3, 1e-4])
def test_map_matches_kraus_oracle_to_dt_three_halves(dt):
    p = Params()
    worst_th = worst_lam = 0.0
    for th in np.linspace(0.1, 6.2, 13):
        for k in (-2, -1, 0, 1, 2):
            u = k / math.sqrt(dt)
            a, f = theta_lambda_increment(th, u, dt, p)
            b, n = kraus_oracle(th, u, dt, p)
            worst_th = max(worst_th, angle_gap(a, b))
            worst_lam = max(worst_lam, abs(f - n))
    assert worst_th < 2.5 * dt**1.5
    assert worst_lam < 3.5 * dt**1.5


@pytest.mark.parametrize("theta", [0.3, 1.7, 2.9, 4.4])
def test_ostensible_average_of_lambda(theta):
    p = Params()
    dt = 1e-3
    x, w = np.polynomial.hermite_e.hermegauss(40)
    u = x / math.sqrt(dt)
    _, f = theta_lambda_increment(theta, u, dt, p)
    avg = np.sum(w * f) / np.sum(w)
    assert avg == pytest.approx(1 - dt * 0.5 * p.gamma_o * (1 + math.cos(theta)), abs=5 * dt**2)


def test_true_sme_stays_pure_and_rejects_mixed():
    p = Params()
    rng = np.random.default_rng(3)
    s = BlochYZ(0.0, -1.0)
    for _ in range(200):
        s = step_true_sme(s, rng.standard_normal() / math.sqrt(1e-3), 1e-3, p)
        assert abs(s.radius - 1) < 1e-12
    with pytest.raises(ValueError):
        step_true_sme(BlochYZ(0.0, 0.5), 0.0, 1e-3, p)


def test_true_sme_raw_radius_second_order():
    p = Params()
    dt = 1e-3
    y, z = step_true_sme(BlochYZ(math.sin(1.0), math.cos(1.0)), 1.0 / math.sqrt(dt), dt, p, raw=True)
    assert abs(math.hypot(y, z) - 1) < 20 * dt


def test_ground_state_fixed_point_of_sme():
    p = Params(omega=0.0)
    s = step_true_sme(BlochYZ(0.0, -1.0), 0.0, 1e-3, p)
    assert s.z == pytest.approx(-1.0) and s.y == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("dt", [1e-2, 1e-3])
def test_sme_average_matches_theta_map(dt):
    """Averaged over the ostensible record the SME step and the angle map
    agree to second order (they differ pointwise at first order)."""
    p = Params()
    x, w = np.polynomial.hermite_e.hermegauss(60)
    w = w / w.sum()
    for theta in (0.4, 2.0, 3.5, 5.5):
        s = BlochYZ(math.sin(theta), math.cos(theta))
        sme = np.zeros(2)
        mp = np.zeros(2)
        for xi, wi in zip(x, w):
            u = xi / math.sqrt(dt)
            q, lam = step_unnormalized_sme(s, 1.0, u, dt, p)
            sme += wi * lam * np.array([q.y, q.z])
            th, f = theta_lambda_increment(theta, u, dt, p)
            mp += wi * f * np.array([math.sin(th), math.cos(th)])
        assert np.max(np.abs(sme - mp)) < 5 * dt**2


def test_unnormalized_sme_rejects_bad_lambda():
    with pytest.raises(ValueError):
        step_unnormalized_sme(BlochYZ(0.0, -1.0), 0.0, 0.0, 1e-3, Params())


def test_integrate_theta_map_zero_record_is_deterministic_flow():
    p = Params(gamma_u=0.5)
    th, ll = integrate_theta_map(np.zeros(1000), 1e-3, p)
    assert len(th) == 1001 and ll[0] == 0.0
    assert np.all(np.diff(ll) <= 1e-15)


def test_filtered_matches_lindblad_no_jump_branch():
    p = Params()
    times = np.array([0.5, 1.0, 2.0, 4.0])
    y, z, tr = lindblad_solution(p, times, include_jumps=False)
    for dt, tol in ((1e-3, 3e-3), (1e-4, 3e-4)):
        f = filtered_trajectory(p.replace(dt=dt))
        k = np.round(times / dt).astype(int)
        assert np.max(np.abs(f.y[k] - y / tr)) < tol
        assert np.max(np.abs(f.z[k] - z / tr)) < tol
        assert np.max(np.abs(f.norm_trace[k] - tr)) < tol


def test_filtered_radius_bounded(default_params):
    f = filtered_trajectory(default_params)
    assert np.all(np.hypot(f.y, f.z) <= 1 + 1e-12)
    assert np.all(np.diff(f.norm_trace) <= 0)


def test_lindblad_generator_is_trace_preserving_with_jumps():
    p = Params()
    g = lindblad_generator(p, include_jumps=True)
    y, z, tr = lindblad_solution(p, [0.0, 1.0, 3.0])
    assert np.allclose(tr, 1.0)
    assert np.max(np.abs(np.eye(2).reshape(-1) @ g)) < 1e-14
    assert np.max(np.abs(np.eye(2).reshape(-1) @ lindblad_generator(p, include_jumps=False))) > 0.1
    _, _, tr0 = lindblad_solution(p, [1.0], include_jumps=False)
    assert tr0[0] < 1


def test_propagation_is_reproducible_per_chunk():
    p = Params(T=0.2)
    a = propagate_ostensible(p, 50, chunk_generator(11, 3), [100, 200])
    b = propagate_ostensible(p, 50, chunk_generator(11, 3), [100, 200])
    c = propagate_ostensible(p, 50, chunk_generator(11, 4), [100, 200])
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0])


def test_weighted_mean_is_order_independent():
    rng = np.random.default_rng(0)
    v = rng.normal(size=1000)
    lw = rng.normal(size=1000)
    m1, s1 = weighted_mean_and_se(v, lw)
    idx = rng.permutation(1000)
    m2, s2 = weighted_mean_and_se(v[idx], lw[idx])
    assert m1 == m2 and s1 == s2
    m, s = weighted_mean_and_se(np.ones(10), np.zeros(10))
    assert m == 1.0 and s == 0.0


def test_waiting_time_distribution():
    p = Params()
    wt = waiting_time_pdf(p, T_max=40.0)
    assert wt.cdf[0] == 0.0 and np.all(np.diff(wt.cdf) >= 0)
    mass = np.sum(0.5 * (wt.pdf[1:] + wt.pdf[:-1])) * p.dt
    assert mass == pytest.approx(wt.cdf[-1], abs=2e-3)
    assert wt.cdf[-1] > 0.9999
    # median: the no-jump trace of the master equation crosses one half
    median = scipy.optimize.brentq(lambda t: lindblad_solution(p, [t], include_jumps=False)[2][0] - 0.5, 0.1, 20.0)
    assert wt.inverse_cdf(0.5) == pytest.approx(median, abs=2 * p.dt)
    with pytest.raises(NumericalError):
        wt.inverse_cdf(1.0)
    with pytest.raises(NumericalError):
        waiting_time_pdf(p, T_max=2.0)
