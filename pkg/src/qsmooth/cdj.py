"""Most-likely unknown records by extremizing the record log-likelihood.

The log-likelihood of a homodyne record ``u_0..u_{K-1}`` given the
no-jump observed block ending in a jump is, up to a record-independent
constant,

    S = sum_k ln P(u_k | theta_k) + ln Tr[E S(theta_K)],
    ln P(u | theta) = -dt [u^2/2 + (gamma/2)(1 + cos theta) + u sqrt(Gamma) sin theta],

with ``theta`` driven by the first-order pure-state map

    theta_{k+1} = theta_k + dt [-omega + (gamma/2) sin theta_k
                                - sqrt(Gamma)(1 + cos theta_k) u_k],

``gamma`` the total rate and ``Gamma = gamma_u``.  Stationarity with
Lagrange multipliers ``p_k`` gives

    u_k = -sqrt(Gamma) (p_k (1 + cos theta_k) + sin theta_k),
    p_{k-1} = p_k (1 + dt [(gamma/2) cos + sqrt(Gamma) sin u_k])
              + dt [(gamma/2) sin - sqrt(Gamma) cos u_k],
    p_{K-1} = d/dtheta ln Tr[E S(theta_K)],

a two-point boundary problem with theta_0 = pi.  In the dt -> 0 limit
these become the Hamilton equations integrated by
:func:`integrate_hamilton_odes`.

By default the discrete equations are solved exactly by shooting on the
free initial multiplier: for a given ``p_{k-1}`` the update for ``p_k``
is a quadratic whose root continuous in dt is taken.  The returned
record is then an exact stationary point of :func:`path_log_likelihood`,
and the pure-state map reproduces the returned angles to rounding error.
The continuum equations, integrated with RK4, are available through
``method="rk4"`` and agree to first order in dt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import NumericalError, Params, UnknownRecord, wrap_angle
from .retrofilter import EffectTable, propagate_effect

BLOWUP = 1e8


@dataclass(frozen=True)
class CdjSolution:
    """A stationary path: angles theta_0..theta_K, multipliers, record.

    ``ps[k]`` is the multiplier paired with step k (it fixes ``us[k]``);
    ``p_init`` is the free initial multiplier used for shooting.
    """

    thetas: np.ndarray
    ps: np.ndarray
    us: UnknownRecord
    p_init: float
    score: float = math.nan
    residual: float = math.nan
    divergent: bool = False

    @property
    def final_theta(self) -> float:
        return wrap_angle(float(self.thetas[-1]))


@dataclass
class ShootingResult:
    """Best path together with every converged root of the scan."""

    best: CdjSolution
    roots: list = field(default_factory=list)
    discarded: int = 0


# --------------------------------------------------------------------------
# likelihood


def log_prob_increments(thetas: np.ndarray, us: np.ndarray, params: Params) -> np.ndarray:
    """Per-step ln P(u_k | theta_k) with the dt-only constant removed."""
    g = params.gamma
    sq = math.sqrt(params.gamma_u)
    return -params.dt * (0.5 * us * us + 0.5 * g * (1.0 + np.cos(thetas)) + us * sq * np.sin(thetas))


def state_map_angles(us: np.ndarray, params: Params, theta0: float = math.pi) -> np.ndarray:
    """Angles produced by the first-order pure-state map (unwrapped)."""
    us = np.asarray(us, dtype=float)
    g = params.gamma
    sq = math.sqrt(params.gamma_u)
    dt = params.dt
    th = np.empty(len(us) + 1)
    th[0] = theta0
    x = theta0
    for k, u in enumerate(us):
        x = x + dt * (-params.omega + 0.5 * g * math.sin(x) - sq * (1.0 + math.cos(x)) * u)
        th[k + 1] = x
    return th


def final_overlap(theta: float, effect=None) -> float:
    """Tr[E S(theta)] with E normalized; default E proportional to |e><e|."""
    if effect is None:
        return 1.0 + math.cos(theta)
    a, b, z = effect
    return a + z * math.cos(theta) + b * math.sin(theta)


def path_log_likelihood(record, params: Params, T: float | None = None, effect=None, theta0: float = math.pi) -> float:
    """Log-likelihood of an unknown record, up to a record-independent constant.

    Parameters
    ----------
    record : UnknownRecord or array_like
        Values u_0..u_{K-1}.
    params : Params
    T : float, optional
        Block length; the record must have exactly T/dt entries.
    effect : tuple, optional
        Normalized (alpha, beta, zeta) of the effect at the end of the
        record; defaults to the final-jump effect.

    Returns
    -------
    float
        ``-inf`` if the path ends where the final effect has no support.
    """
    values = record.values if isinstance(record, UnknownRecord) else np.asarray(record, dtype=float)
    T = params.T if T is None else T
    n = int(round(T / params.dt))
    if len(values) != n:
        raise ValueError(f"record has {len(values)} entries, expected {n}")
    th = state_map_angles(values, params, theta0)
    ov = final_overlap(th[-1], effect)
    if ov <= 0:
        return -math.inf
    return math.fsum(log_prob_increments(th[:-1], values, params)) + math.log(ov)


# --------------------------------------------------------------------------
# integrators


def _closure_u(theta, p, params: Params):
    sq = math.sqrt(params.gamma_u)
    return -sq * (p * (1.0 + np.cos(theta)) + np.sin(theta))


def _ode_rhs(theta, p, params: Params):
    g = params.gamma
    sq = math.sqrt(params.gamma_u)
    s = np.sin(theta)
    c = np.cos(theta)
    u = -sq * (p * (1.0 + c) + s)
    dth = -params.omega + 0.5 * g * s - sq * (1.0 + c) * u
    dp = -0.5 * g * p * c - sq * p * s * u + sq * c * u - 0.5 * g * s
    return dth, dp


def integrate_hamilton_odes(theta0: float, p0: float, params: Params, horizon: float | None = None) -> CdjSolution:
    """RK4 integration of the continuum Hamilton equations with u eliminated.

    Returns a solution with ``us[k]`` the closure value at t_k; the score
    is not filled in.  Divergence (|p| above 1e8) is flagged.
    """
    horizon = params.T if horizon is None else horizon
    n = int(round(horizon / params.dt))
    th, ps = _rk4_sweep(np.array([theta0], dtype=float), np.array([p0], dtype=float), params, n)
    th = th[:, 0]
    ps = ps[:, 0]
    divergent = not np.all(np.isfinite(ps)) or np.any(np.abs(ps) > BLOWUP)
    us = _closure_u(th[:-1], ps[:-1], params)
    record = UnknownRecord(np.nan_to_num(us, nan=0.0, posinf=0.0, neginf=0.0), params.dt)
    return CdjSolution(th, ps, record, float(p0), divergent=bool(divergent))


def _rk4_sweep(theta, p, params: Params, n: int):
    dt = params.dt
    th_out = np.empty((n + 1,) + theta.shape)
    p_out = np.empty((n + 1,) + theta.shape)
    th_out[0] = theta
    p_out[0] = p
    for k in range(n):
        a1, b1 = _ode_rhs(theta, p, params)
        a2, b2 = _ode_rhs(theta + 0.5 * dt * a1, p + 0.5 * dt * b1, params)
        a3, b3 = _ode_rhs(theta + 0.5 * dt * a2, p + 0.5 * dt * b2, params)
        a4, b4 = _ode_rhs(theta + dt * a3, p + dt * b3, params)
        theta = theta + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        p = p + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        p = np.where(np.abs(p) > BLOWUP, np.nan, p)
        th_out[k + 1] = theta
        p_out[k + 1] = p
    return th_out, p_out


def _discrete_step(theta, p_prev, params: Params):
    """Solve the backward multiplier relation for p_k given p_{k-1}."""
    dt = params.dt
    G = params.gamma_u
    g = params.gamma
    s = np.sin(theta)
    c = np.cos(theta)
    a = -dt * G * s * (1.0 + c)
    b = 1.0 + dt * 0.5 * g * c - dt * G * s * s + dt * G * c * (1.0 + c)
    c0 = dt * 0.5 * g * s + dt * G * c * s - p_prev
    disc = b * b - 4.0 * a * c0
    with np.errstate(invalid="ignore"):
        root = np.sqrt(np.where(disc < 0, np.nan, disc))
    p = -2.0 * c0 / (b + root)
    p = np.where(np.abs(p) > BLOWUP, np.nan, p)
    u = _closure_u(theta, p, params)
    theta_new = theta + dt * (-params.omega + 0.5 * g * s - math.sqrt(G) * (1.0 + c) * u)
    return theta_new, p, u


def _discrete_sweep(theta0, p_init, params: Params, n: int):
    theta = np.asarray(theta0, dtype=float) * np.ones_like(p_init)
    p = np.asarray(p_init, dtype=float)
    th_out = np.empty((n + 1,) + p.shape)
    p_out = np.empty((n,) + p.shape)
    th_out[0] = theta
    for k in range(n):
        theta, p, _ = _discrete_step(theta, p, params)
        th_out[k + 1] = theta
        p_out[k] = p
    return th_out, p_out


def discrete_hamilton_sweep(theta0: float, p_init: float, params: Params, horizon: float | None = None) -> CdjSolution:
    """Forward solution of the discrete stationarity equations."""
    horizon = params.T if horizon is None else horizon
    n = int(round(horizon / params.dt))
    th, ps = _discrete_sweep(theta0, np.array([p_init], dtype=float), params, n)
    th = th[:, 0]
    ps = ps[:, 0]
    divergent = not np.all(np.isfinite(ps))
    us = _closure_u(th[:-1], ps, params)
    record = UnknownRecord(np.nan_to_num(us, nan=0.0), params.dt)
    return CdjSolution(th, ps, record, float(p_init), divergent=bool(divergent))


# --------------------------------------------------------------------------
# shooting


def _terminal_multiplier(method, ps, k):
    # discrete: p_{k-1} pairs with the final angle theta_k; rk4: p at t_k
    return ps[k - 1] if method == "discrete" else ps[k]


def _residuals(thetas, ps, effect_rows, steps, method):
    """Final-condition residual in the multiplied form for each column.

    ``p * Tr[E S] - d/dtheta Tr[E S]`` vanishes at a root and stays finite
    where the overlap goes to zero.
    """
    cols = np.arange(thetas.shape[1])
    th = thetas[steps, cols]
    if method == "discrete":
        pk = ps[steps - 1, cols]
    else:
        pk = ps[steps, cols]
    a, b, z = effect_rows
    ov = a + z * np.cos(th) + b * np.sin(th)
    dov = -z * np.sin(th) + b * np.cos(th)
    return pk * ov - dov, ov, dov, pk


def _eval_residual(method, x, params, kb, er):
    th, ps = _sweep(method, x, params, int(kb.max()))
    r, _, _, _ = _residuals(th, ps, er, kb, method)
    return th, r


def _sweep(method, p_init, params, n):
    if method == "discrete":
        return _discrete_sweep(math.pi, p_init, params, n)
    if method == "rk4":
        return _rk4_sweep(np.full(p_init.shape, math.pi), p_init, params, n)
    raise ValueError(f"unknown method {method!r}")


def _effect_rows(effects: EffectTable | None, steps):
    if effects is None:
        one = np.ones(len(steps))
        return one, 0.0 * one, one
    return effects.alpha[steps], effects.beta[steps], effects.zeta[steps]


def _build_solution(method, p_init, params, n, effect_row):
    if method == "discrete":
        sol = discrete_hamilton_sweep(math.pi, p_init, params, n * params.dt)
    else:
        sol = integrate_hamilton_odes(math.pi, p_init, params, n * params.dt)
    if sol.divergent:
        return sol
    a, b, z = effect_row
    th_k = sol.thetas[-1]
    ov = a + z * math.cos(th_k) + b * math.sin(th_k)
    dov = -z * math.sin(th_k) + b * math.cos(th_k)
    pk = sol.ps[-1]
    residual = abs(pk - dov / ov) if ov > 0 else math.inf
    score = path_log_likelihood(sol.us, params, n * params.dt, effect=(a, b, z))
    return CdjSolution(sol.thetas, sol.ps, sol.us, sol.p_init, score, residual, False)


def shoot(
    params: Params,
    steps,
    effects: EffectTable | None = None,
    p_max: float = 50.0,
    n_scan: int = 401,
    method: str = "discrete",
    n_bisect: int = 80,
    singular_tol: float = 1e-3,
):
    """Find all shooting roots for final conditions at each step in ``steps``.

    Parameters
    ----------
    params : Params
    steps : sequence of int
        End steps k (time k dt) of the boundary problems.
    effects : EffectTable, optional
        Effects supplying the final condition at each end step; by default
        the final-jump effect is used for every step.
    p_max, n_scan : float, int
        Scan of the free initial multiplier over [-p_max, p_max].
    method : {"discrete", "rk4"}
    n_bisect : int
        Bisection iterations on each bracket.
    singular_tol : float
        Roots ending within this distance of the ground state are dropped.

    Returns
    -------
    list of (p_inits, n_discarded)
        Converged initial multipliers per requested step.
    """
    steps = np.asarray(steps, dtype=int)
    n = int(steps.max())
    grid = np.linspace(-p_max, p_max, n_scan)
    thetas, ps = _sweep(method, grid, params, n)
    brackets = []  # (step index position, lo, hi, r_lo)
    for j, k in enumerate(steps):
        er = _effect_rows(effects, np.array([k]))
        er = tuple(np.full(n_scan, float(x[0])) for x in er)
        r, _, _, _ = _residuals(thetas, ps, er, np.full(n_scan, k), method)
        ok = np.isfinite(r)
        sign_change = ok[:-1] & ok[1:] & (np.sign(r[:-1]) * np.sign(r[1:]) <= 0) & ~((r[:-1] == 0) & (r[1:] == 0))
        for i in np.nonzero(sign_change)[0]:
            brackets.append((j, grid[i], grid[i + 1], r[i]))
    if not brackets:
        return [([], 0) for _ in steps]
    pos = np.array([b[0] for b in brackets])
    lo = np.array([b[1] for b in brackets])
    hi = np.array([b[2] for b in brackets])
    r_lo = np.array([b[3] for b in brackets])
    kb = steps[pos]
    er_all = _effect_rows(effects, kb)
    _, r_hi = _eval_residual(method, hi, params, kb, er_all)
    # a few bisections to isolate the root, then Illinois regula falsi
    side = np.zeros(len(lo), dtype=int)
    for it in range(n_bisect):
        width = hi - lo
        if np.all(width <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(lo))):
            break
        if it < 6:
            x = 0.5 * (lo + hi)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                x = (lo * r_hi - hi * r_lo) / (r_hi - r_lo)
            inside = np.isfinite(x) & (x > lo) & (x < hi)
            x = np.where(inside, x, 0.5 * (lo + hi))
        _, r_x = _eval_residual(method, x, params, kb, er_all)
        bad = ~np.isfinite(r_x)
        done = r_x == 0
        left = (np.sign(r_x) == np.sign(r_lo)) & ~bad
        # root lies in [x, hi]
        lo_new = np.where(left | done, x, lo)
        hi_new = np.where(~left | done, x, hi)
        r_lo_new = np.where(left, r_x, r_lo)
        r_hi_new = np.where(~left & ~bad, r_x, r_hi)
        # Illinois: halve the residual kept twice in a row
        r_hi_new = np.where(left & (side == 1), 0.5 * r_hi_new, r_hi_new)
        r_lo_new = np.where(~left & ~bad & (side == -1), 0.5 * r_lo_new, r_lo_new)
        side = np.where(left, 1, np.where(bad, 0, -1))
        lo, hi, r_lo, r_hi = lo_new, hi_new, r_lo_new, r_hi_new
        if bad.any():
            r_hi = np.where(bad, np.nan, r_hi)
    mid = 0.5 * (lo + hi)
    th_m, p_m = _sweep(method, mid, params, int(kb.max()))
    r_mid, ov, _, _ = _residuals(th_m, p_m, er_all, kb, method)
    th_end = wrap_angle(th_m[kb, np.arange(len(kb))])
    out = [([], 0) for _ in steps]
    for b in range(len(brackets)):
        j = pos[b]
        roots, dropped = out[j]
        if not np.isfinite(r_mid[b]):
            continue
        if abs(th_end[b] - math.pi) < singular_tol or ov[b] <= 0:
            out[j] = (roots, dropped + 1)
            continue
        out[j] = (roots + [float(mid[b])], dropped)
    return out


def score_roots(method, p_inits, ks, params: Params, effect_rows):
    """Final angles and log-likelihood scores of many roots at once.

    Each column is re-scored by feeding its record through the pure-state
    map, so both integration methods are ranked by the same likelihood.
    """
    p_inits = np.asarray(p_inits, dtype=float)
    ks = np.asarray(ks, dtype=int)
    n = int(ks.max())
    th, ps = _sweep(method, p_inits, params, n)
    us = _closure_u(th[:n], ps[:n], params)
    g = params.gamma
    sq = math.sqrt(params.gamma_u)
    dt = params.dt
    x = np.full(len(p_inits), math.pi)
    cum = np.zeros(len(p_inits))
    final_th = np.full(len(p_inits), math.nan)
    scores = np.full(len(p_inits), math.nan)
    a, b, z = (np.broadcast_to(np.asarray(v, dtype=float), ks.shape) for v in effect_rows)
    for k in range(n + 1):
        hit = ks == k
        if hit.any():
            ov = a[hit] + z[hit] * np.cos(x[hit]) + b[hit] * np.sin(x[hit])
            with np.errstate(divide="ignore", invalid="ignore"):
                scores[hit] = np.where(ov > 0, cum[hit] + np.log(np.where(ov > 0, ov, 1.0)), -np.inf)
            final_th[hit] = x[hit]
        if k == n:
            break
        u = us[k]
        s_, c_ = np.sin(x), np.cos(x)
        cum = cum - dt * (0.5 * u * u + 0.5 * g * (1.0 + c_) + u * sq * s_)
        x = x + dt * (-params.omega + 0.5 * g * s_ - sq * (1.0 + c_) * u)
    scores = np.where(np.isfinite(final_th), scores, np.nan)
    return final_th, scores


def solve_q5(params: Params, T: float | None = None, p_max: float = 50.0, n_scan: int = 401, method: str = "discrete") -> ShootingResult:
    """Most-likely entire unknown record for a block of length T.

    Every converged root of the shooting scan is scored and the best one
    returned; the others are kept in ``roots`` for inspection.
    """
    T = params.T if T is None else T
    n = int(round(T / params.dt))
    (roots, dropped), = shoot(params, [n], None, p_max, n_scan, method)
    if not roots:
        raise NumericalError(
            f"no converged roots for the whole-record problem (scan [-{p_max}, {p_max}], {n_scan} points, {dropped} near-singular)"
        )
    sols = [_build_solution(method, r, params, n, (1.0, 0.0, 1.0)) for r in roots]
    sols = [s for s in sols if not s.divergent]
    if not sols:
        raise NumericalError("all shooting roots diverged on reconstruction")
    best = max(sols, key=lambda s: s.score)
    return ShootingResult(best, sols, dropped)


def q4_steps(params: Params, T: float | None = None, spacing: float = 0.02) -> np.ndarray:
    """End steps of the per-time problems: every ``spacing``, always including T."""
    T = params.T if T is None else T
    n = int(round(T / params.dt))
    stride = max(1, int(round(spacing / params.dt)))
    steps = list(range(stride, n + 1, stride))
    if steps[-1] != n:
        steps.append(n)
    return np.array(steps)


@dataclass
class Q4Result:
    """Terminal angles of the per-time most-likely past records."""

    steps: np.ndarray
    thetas: np.ndarray
    failed: list
    n_roots: np.ndarray
    dt: float

    def times(self) -> np.ndarray:
        return self.steps * self.dt


def solve_q4(
    params: Params,
    T: float | None = None,
    steps=None,
    effects: EffectTable | None = None,
    p_max: float = 50.0,
    n_scan: int = 401,
    method: str = "discrete",
) -> Q4Result:
    """Most-likely past record for each end step, keeping only its end state.

    For end step k the final condition uses the effect at t_k, so the
    estimate at t_k accounts for the future observed record.  Failures are
    reported per step; the sweep continues.
    """
    T = params.T if T is None else T
    effects = propagate_effect(params, T) if effects is None else effects
    steps = q4_steps(params, T) if steps is None else np.asarray(steps, dtype=int)
    found = shoot(params, steps, effects, p_max, n_scan, method)
    thetas = np.full(len(steps), math.nan)
    n_roots = np.zeros(len(steps), dtype=int)
    owner = np.array([j for j, (roots, _) in enumerate(found) for _ in roots], dtype=int)
    p_all = np.array([r for roots, _ in found for r in roots], dtype=float)
    if len(p_all):
        ks = steps[owner]
        final_th, scores = score_roots(method, p_all, ks, params, _effect_rows(effects, ks))
        for j in range(len(steps)):
            mine = np.nonzero((owner == j) & np.isfinite(scores))[0]
            if len(mine):
                best = mine[np.argmax(scores[mine])]
                thetas[j] = wrap_angle(float(final_th[best]))
                n_roots[j] = len(mine)
    failed = [int(k) for k, th in zip(steps, thetas) if not np.isfinite(th)]
    return Q4Result(steps, thetas, failed, n_roots, params.dt)
