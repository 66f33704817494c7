"""Time steppers for the monitored qubit.

Covers the discrete (theta, lambda) measurement map for pure unnormalized
true states, Euler-Maruyama steps of the normalized and unnormalized
stochastic master equations, the deterministic filtered-state equation,
Monte Carlo sampling under the ostensible (record-independent) measure,
the Lindblad reference solution and the waiting-time distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import (
    BlochYZ,
    NumericalError,
    Params,
    PureAngle,
    UnknownRecord,
    angles_and_radii,
    state_from_angle,
    wrap_angle,
)

LOG_TINY = math.log(1e-300)


@dataclass(frozen=True)
class TrueTrajectory:
    """Pure unnormalized true-state trajectory.

    ``log_lambdas`` is the natural log of the trace of the unnormalized
    state, which is the ostensible weight of the unknown record.
    """

    thetas: np.ndarray
    log_lambdas: np.ndarray
    record: UnknownRecord
    dt: float

    @property
    def lambdas(self) -> np.ndarray:
        return np.exp(self.log_lambdas)


@dataclass(frozen=True)
class FilteredTrajectory:
    """Filtered (past-only) state with the trace of its unnormalized form."""

    y: np.ndarray
    z: np.ndarray
    norm_trace: np.ndarray
    dt: float

    def times(self) -> np.ndarray:
        return np.arange(len(self.y)) * self.dt

    def state(self, k: int) -> BlochYZ:
        return BlochYZ(float(self.y[k]), float(self.z[k]))

    def angles_and_radii(self):
        return angles_and_radii(self.y, self.z)


# --------------------------------------------------------------------------
# (theta, lambda) map


def theta_lambda_increment(theta, u, dt, params: Params):
    """Increments of theta and the multiplicative factor of lambda.

    Works elementwise on arrays.  Returns ``(theta_new_unwrapped,
    lambda_factor)`` with ``lambda_new = lambda * lambda_factor``.
    """
    go = params.gamma_o
    gu = params.gamma_u
    sq = math.sqrt(gu)
    s = np.sin(theta)
    c = np.cos(theta)
    u2dt2 = u * u * dt * dt
    theta_new = (
        theta
        - dt * params.omega
        + dt * 0.5 * go * s
        + (dt - u2dt2) * 0.5 * gu * s
        - u2dt2 * 0.5 * gu * c * s
        - u * dt * sq * (c + 1.0)
    )
    factor = (
        1.0
        - dt * 0.5 * go * (c + 1.0)
        - u * dt * sq * s
        - (dt - u2dt2) * 0.5 * gu
        - (dt - u2dt2) * 0.5 * gu * c
    )
    return theta_new, factor


def diffusive_measurement_update(theta, lam: float, u: float, dt: float, params: Params):
    """One no-jump step of the pure unnormalized true state.

    Parameters
    ----------
    theta : float or PureAngle
        Bloch angle before the step.
    lam : float
        Trace of the unnormalized state before the step.
    u : float
        Homodyne result for the step.
    dt : float
        Step length.
    params : Params

    Returns
    -------
    (float, float)
        Wrapped angle and trace after the step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(theta, PureAngle):
        theta = theta.theta
    theta_new, factor = theta_lambda_increment(theta, u, dt, params)
    return wrap_angle(float(theta_new)), float(lam * factor)


def integrate_theta_map(record: np.ndarray, dt: float, params: Params, theta0: float = math.pi):
    """Angles and log-traces generated by feeding a record through the map.

    Returns arrays of length ``len(record) + 1`` (unwrapped angles).
    """
    record = np.asarray(record, dtype=float)
    n = len(record)
    thetas = np.empty(n + 1)
    log_lams = np.empty(n + 1)
    thetas[0] = theta0
    log_lams[0] = 0.0
    th = theta0
    ll = 0.0
    for k in range(n):
        th_new, factor = theta_lambda_increment(th, record[k], dt, params)
        if factor <= 0:
            ll = -math.inf
        else:
            ll += math.log(factor)
        th = float(th_new)
        thetas[k + 1] = th
        log_lams[k + 1] = ll
    return thetas, log_lams


# --------------------------------------------------------------------------
# matrix-level stochastic master equations


def _dissipator(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    cd = c.conj().T
    cdc = cd @ c
    return c @ rho @ cd - 0.5 * (cdc @ rho + rho @ cdc)


def _hbar(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return c @ rho + rho @ c.conj().T


def _hnorm(c: np.ndarray, rho: np.ndarray) -> np.ndarray:
    h = _hbar(c, rho)
    return h - np.trace(h) * rho


def _commutator_term(params: Params, rho: np.ndarray) -> np.ndarray:
    h = params.hamiltonian()
    return -1j * (h @ rho - rho @ h)


def _project_pure(y: float, z: float) -> BlochYZ:
    r = math.hypot(y, z)
    if r == 0.0:
        raise NumericalError("true state collapsed to the origin")
    return BlochYZ(y / r, z / r)


def step_true_sme(state: BlochYZ, u: float, dt: float, params: Params, raw: bool = False):
    """Euler-Maruyama step of the normalized Ito SME for the true state.

    The innovation is ``u dt - <c_u + c_u^dag> dt``.  The result is
    projected back onto the unit circle unless ``raw`` is set, in which
    case the unprojected ``(y, z)`` tuple is returned (its radius deviates
    from one at second order in dt).
    """
    if abs(state.radius - 1.0) > 1e-6:
        raise ValueError("step_true_sme needs a pure input state")
    rho = state.matrix()
    cu = params.c_unobserved()
    co = params.c_observed()
    mean_u = np.trace(_hbar(cu, rho)).real
    drho = (
        _commutator_term(params, rho) * dt
        + _dissipator(cu, rho) * dt
        - _hnorm(0.5 * co.conj().T @ co, rho) * dt
        + (u * dt - mean_u * dt) * _hnorm(cu, rho)
    )
    new = rho + drho
    y = float(np.trace(new @ _SY).real)
    z = float(np.trace(new @ _SZ).real)
    if raw:
        return y, z
    return _project_pure(y, z)


def step_unnormalized_sme(state: BlochYZ, lam: float, u: float, dt: float, params: Params):
    """Euler step of the linear SME for the unnormalized true state.

    Returns the normalized direction (projected to the unit circle) and
    the new trace.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    rho = lam * state.matrix()
    cu = params.c_unobserved()
    co = params.c_observed()
    drho = (
        _commutator_term(params, rho) * dt
        + _dissipator(cu, rho) * dt
        + u * dt * _hbar(cu, rho)
        - dt * _hbar(0.5 * co.conj().T @ co, rho)
    )
    new = rho + drho
    tr = float(np.trace(new).real)
    if tr <= 0:
        raise NumericalError("unnormalized trace became non-positive")
    y = float(np.trace(new @ _SY).real) / tr
    z = float(np.trace(new @ _SZ).real) / tr
    return _project_pure(y, z), tr


_SY = np.array([[0, -1j], [1j, 0]])
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


# --------------------------------------------------------------------------
# filtered state


def filtered_derivative(y, z, params: Params):
    """Right-hand side of the filtered-state equation in Bloch form."""
    go = params.gamma_o
    gu = params.gamma_u
    dy = -params.omega * z - 0.5 * gu * y + 0.5 * go * y * z
    dz = params.omega * y - gu * (1.0 + z) - 0.5 * go * (1.0 - z * z)
    return dy, dz


def step_filtered(state: BlochYZ, dt: float, params: Params) -> BlochYZ:
    """Euler step of the deterministic filtered-state equation."""
    dy, dz = filtered_derivative(state.y, state.z, params)
    y = state.y + dt * dy
    z = state.z + dt * dz
    r = math.hypot(y, z)
    if r > 1.0:
        # Euler overshoot of order dt^2 on the boundary of the Bloch disc
        y, z = y / r, z / r
    return BlochYZ(y, z)


def filtered_trajectory(params: Params, T: float | None = None, initial: BlochYZ | None = None) -> FilteredTrajectory:
    """Filtered state and unnormalized trace on the grid t_k = k dt.

    The trace obeys ``d ln Tr = -(gamma_o / 2)(1 + z) dt``, the
    probability of no observed jump.
    """
    T = params.T if T is None else T
    n = int(round(T / params.dt))
    dt = params.dt
    initial = BlochYZ(0.0, -1.0) if initial is None else initial
    y = np.empty(n + 1)
    z = np.empty(n + 1)
    norm = np.empty(n + 1)
    y[0], z[0], norm[0] = initial.y, initial.z, 1.0
    go = params.gamma_o
    for k in range(n):
        dy, dz = filtered_derivative(y[k], z[k], params)
        yn = y[k] + dt * dy
        zn = z[k] + dt * dz
        r = math.hypot(yn, zn)
        if r > 1.0:
            yn, zn = yn / r, zn / r
        y[k + 1], z[k + 1] = yn, zn
        norm[k + 1] = norm[k] * (1.0 - 0.5 * go * (1.0 + z[k]) * dt)
    return FilteredTrajectory(y, z, norm, dt)


# --------------------------------------------------------------------------
# Monte Carlo under the ostensible measure


def chunk_generator(seed: int, chunk_index: int) -> np.random.Generator:
    """Counter-based stream for one chunk of trajectories."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk_index])))


def ostensible_noise(rng: np.random.Generator, shape, dt: float) -> np.ndarray:
    """Records drawn from the ostensible Gaussian, mean 0 and variance 1/dt."""
    return rng.standard_normal(shape) / math.sqrt(dt)


def propagate_ostensible(
    params: Params,
    n_traj: int,
    rng: np.random.Generator,
    probe_steps,
    with_jumps: bool = False,
    jump_rate: float | None = None,
    n_steps: int | None = None,
    initial_width: float = 0.0,
):
    """Evolve a batch of ostensible trajectories, recording probe steps.

    Parameters
    ----------
    params : Params
    n_traj : int
        Number of trajectories in the batch.
    rng : numpy.random.Generator
    probe_steps : sequence of int
        Step indices k (time k dt) at which angles and log-weights are kept.
    with_jumps : bool
        Also sample observed jumps with a constant ostensible rate and fold
        the likelihood ratio into the weight.  Needed to reproduce the
        full Lindblad evolution rather than the no-jump branch.
    jump_rate : float, optional
        Ostensible jump rate; defaults to ``gamma_o``.
    initial_width : float
        Standard deviation of a Gaussian spread of the starting angle
        around the ground state; 0 starts every trajectory at theta = pi.

    Returns
    -------
    thetas, log_weights : ndarray, shape (len(probe_steps), n_traj)
    """
    probe_steps = np.asarray(probe_steps, dtype=int)
    n_steps = int(probe_steps.max()) if n_steps is None else n_steps
    dt = params.dt
    theta = np.full(n_traj, math.pi)
    if initial_width > 0:
        theta = np.mod(theta + initial_width * rng.standard_normal(n_traj), 2 * math.pi)
    log_w = np.zeros(n_traj)
    out_theta = np.empty((len(probe_steps), n_traj))
    out_logw = np.empty((len(probe_steps), n_traj))
    want = {int(k): i for i, k in enumerate(probe_steps)}
    rate = params.gamma_o if jump_rate is None else jump_rate
    if with_jumps and rate <= 0:
        raise ValueError("ostensible jump rate must be positive")
    p_jump = rate * dt
    for k in range(n_steps + 1):
        if k in want:
            out_theta[want[k]] = theta
            out_logw[want[k]] = log_w
        if k == n_steps:
            break
        u = ostensible_noise(rng, n_traj, dt)
        new_theta, factor = theta_lambda_increment(theta, u, dt, params)
        if np.any(factor <= 0):
            raise NumericalError("ostensible weight factor became non-positive; reduce dt")
        if with_jumps:
            jumped = rng.random(n_traj) < p_jump
            jump_weight = params.gamma_o * 0.5 * (1.0 + np.cos(theta)) / rate
            with np.errstate(divide="ignore"):
                log_jump = np.log(jump_weight)
            log_w = np.where(jumped, log_w + log_jump, log_w + np.log(factor) - math.log1p(-p_jump))
            theta = np.where(jumped, math.pi, np.mod(new_theta, 2 * math.pi))
        else:
            log_w = log_w + np.log(factor)
            theta = np.mod(new_theta, 2 * math.pi)
    return out_theta, out_logw


def sample_ostensible_trajectory(params: Params, rng: np.random.Generator, T: float | None = None) -> TrueTrajectory:
    """Single no-jump true trajectory with an ostensibly sampled record."""
    T = params.T if T is None else T
    n = int(round(T / params.dt))
    record = ostensible_noise(rng, n, params.dt)
    thetas, log_lams = integrate_theta_map(record, params.dt, params)
    return TrueTrajectory(wrap_angle(thetas), log_lams, UnknownRecord(record, params.dt), params.dt)


def weighted_mean_and_se(values: np.ndarray, log_weights: np.ndarray):
    """Self-normalized weighted mean and its delta-method standard error.

    Sums are taken with ``math.fsum`` so the result does not depend on the
    order in which batches were concatenated.
    """
    values = np.asarray(values, dtype=float)
    lw = np.asarray(log_weights, dtype=float)
    w = np.exp(lw - lw.max())
    wsum = math.fsum(w)
    mean = math.fsum(w * values) / wsum
    var = math.fsum((w * (values - mean)) ** 2) / wsum**2
    return mean, math.sqrt(var)


# --------------------------------------------------------------------------
# Lindblad reference


def lindblad_generator(params: Params, include_jumps: bool = True) -> np.ndarray:
    """Superoperator of the master equation acting on row-stacked rho.

    With ``include_jumps=False`` the recycling term of the observed channel
    is dropped, which gives the (trace-decreasing) no-jump evolution of the
    unnormalized filtered state.
    """
    eye = np.eye(2)

    def left(a):
        return np.kron(a, eye)

    def right(a):
        return np.kron(eye, a.T)

    h = params.hamiltonian()
    cu = params.c_unobserved()
    co = params.c_observed()
    gen = -1j * (left(h) - right(h))
    for c, jump in ((cu, True), (co, include_jumps)):
        cd = c.conj().T
        cdc = cd @ c
        if jump:
            gen = gen + left(c) @ right(cd)
        gen = gen - 0.5 * (left(cdc) + right(cdc))
    return gen


def lindblad_solution(params: Params, times, initial: BlochYZ | None = None, include_jumps: bool = True):
    """Bloch components (y, z) and trace of the master-equation solution."""
    initial = BlochYZ(0.0, -1.0) if initial is None else initial
    gen = lindblad_generator(params, include_jumps)
    vec0 = initial.matrix().reshape(-1)
    ys, zs, trs = [], [], []
    for t in np.atleast_1d(times):
        rho = (scipy.linalg.expm(gen * t) @ vec0).reshape(2, 2)
        ys.append(np.trace(rho @ _SY).real)
        zs.append(np.trace(rho @ _SZ).real)
        trs.append(np.trace(rho).real)
    return np.array(ys), np.array(zs), np.array(trs)


# --------------------------------------------------------------------------
# waiting time


@dataclass(frozen=True)
class WaitingTime:
    """Tabulated waiting-time density and its cumulative distribution."""

    times: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray

    def inverse_cdf(self, x: float) -> float:
        """Time T with G(T) = x, by linear interpolation of the table."""
        if not 0.0 <= x < self.cdf[-1]:
            raise NumericalError(f"waiting-time CDF does not reach {x} on the tabulated range")
        return float(np.interp(x, self.cdf, self.times))


def waiting_time_pdf(
    params: Params,
    T_max: float = 20.0,
    dt: float | None = None,
    initial: BlochYZ | None = None,
    min_mass: float = 0.99,
) -> WaitingTime:
    """Probability density of the time of the first observed jump.

    The density is ``Tr[c_o^dag c_o rho_tilde_F(T)]`` with the unnormalized
    filtered state started from ``initial`` (ground state by default).  The
    CDF is one minus the no-jump probability.
    """
    dt = params.dt if dt is None else dt
    p = params.replace(dt=dt, T=round(T_max / dt) * dt)
    traj = filtered_trajectory(p, initial=initial)
    pdf = params.gamma_o * 0.5 * (1.0 + traj.z) * traj.norm_trace
    cdf = 1.0 - traj.norm_trace
    if cdf[-1] < min_mass:
        raise NumericalError(
            f"waiting-time mass {cdf[-1]:.4f} below {min_mass} by T_max={T_max}; extend T_max"
        )
    return WaitingTime(traj.times(), pdf, cdf)


__all__ = [
    "FilteredTrajectory",
    "TrueTrajectory",
    "WaitingTime",
    "chunk_generator",
    "diffusive_measurement_update",
    "filtered_derivative",
    "filtered_trajectory",
    "integrate_theta_map",
    "lindblad_generator",
    "lindblad_solution",
    "propagate_ostensible",
    "sample_ostensible_trajectory",
    "state_from_angle",
    "step_filtered",
    "step_true_sme",
    "step_unnormalized_sme",
    "waiting_time_pdf",
    "weighted_mean_and_se",
]
