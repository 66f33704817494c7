"""Backward propagation of the effect that encodes the future observed record.

Between jumps the effect ``E = alpha 1 + beta sigma_y + zeta sigma_z``
obeys a linear 3x3 ODE run backwards from the final jump, where
``E(T)`` is proportional to ``c_o^dag c_o dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Effect, NumericalError, Params, PureAngle


def effect_matrix(params: Params) -> np.ndarray:
    """Matrix M with ``dX/dt = M X / 2`` for ``X = (alpha, beta, zeta)``.

    Equivalently ``-dX/dt = -M X / 2``, solved backwards from T.
    """
    g = params.gamma_o
    G = params.gamma_u
    w = params.omega
    return np.array(
        [
            [g, 0.0, g + 2.0 * G],
            [0.0, g + G, -2.0 * w],
            [g, 2.0 * w, g + 2.0 * G],
        ]
    )


@dataclass(frozen=True)
class EffectTable:
    """Effects at grid times t_k = k dt, stored with a per-row log scale.

    The physical effect at row k is ``exp(log_scale[k]) * (alpha, beta,
    zeta)[k]``; consumers only ever need ratios, so the scale is optional.
    """

    alpha: np.ndarray
    beta: np.ndarray
    zeta: np.ndarray
    log_scale: np.ndarray
    dt: float

    def __len__(self) -> int:
        return len(self.alpha)

    def times(self) -> np.ndarray:
        return np.arange(len(self.alpha)) * self.dt

    def every(self, stride: int) -> "EffectTable":
        """Rows 0, stride, 2 stride, ... as a table with spacing stride * dt."""
        if stride == 1:
            return self
        sl = slice(None, None, stride)
        return EffectTable(self.alpha[sl], self.beta[sl], self.zeta[sl], self.log_scale[sl], self.dt * stride)

    def effect(self, k: int) -> Effect:
        return Effect(float(self.alpha[k]), float(self.beta[k]), float(self.zeta[k]))

    def overlap(self, theta) -> np.ndarray:
        """Tr[E_k S(theta_k)] for every row (theta broadcast against rows)."""
        return self.alpha + self.zeta * np.cos(theta) + self.beta * np.sin(theta)


def final_effect(params: Params) -> np.ndarray:
    """(alpha, beta, zeta) of ``c_o^dag c_o dt`` = gamma_o dt |e><e|."""
    a = 0.5 * params.gamma_o * params.dt
    return np.array([a, 0.0, a])


def propagate_effect(params: Params, T: float | None = None, final: np.ndarray | None = None, tol: float = 1e-12) -> EffectTable:
    """Integrate the effect backwards from T to 0 with fixed-step RK4.

    Parameters
    ----------
    params : Params
    T : float, optional
        Block length, defaults to ``params.T``; must be a multiple of dt.
    final : array_like, optional
        Final (alpha, beta, zeta); defaults to :func:`final_effect`.
    tol : float
        Allowed violation of ``alpha >= hypot(beta, zeta)`` relative to
        the row scale.

    Returns
    -------
    EffectTable
    """
    T = params.T if T is None else T
    dt = params.dt
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    if params.gamma_o == 0 and final is None:
        raise ValueError("final effect vanishes when gamma_o = 0")
    m = -0.5 * effect_matrix(params)  # d X / d s with s = T - t
    x = np.array(final_effect(params) if final is None else final, dtype=float)
    out = np.empty((n + 1, 3))
    log_scale = np.empty(n + 1)
    scale = np.max(np.abs(x))
    if scale <= 0:
        raise ValueError("final effect must be nonzero")
    x = x / scale
    acc = math.log(scale)
    out[n] = x
    log_scale[n] = acc
    for k in range(n - 1, -1, -1):
        k1 = m @ x
        k2 = m @ (x + 0.5 * dt * k1)
        k3 = m @ (x + 0.5 * dt * k2)
        k4 = m @ (x + dt * k3)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        s = np.max(np.abs(x))
        x = x / s
        acc += math.log(s)
        out[k] = x
        log_scale[k] = acc
    viol = np.hypot(out[:, 1], out[:, 2]) - out[:, 0]
    if np.any(viol > tol):
        k = int(np.argmax(viol))
        raise NumericalError(f"effect lost positivity at t={k * dt:.4f} (violation {viol[k]:.3e})")
    return EffectTable(out[:, 0].copy(), out[:, 1].copy(), out[:, 2].copy(), log_scale, dt)


def effect_overlap(effect: Effect, theta) -> float:
    """Tr[E S(theta)] = alpha + zeta cos(theta) + beta sin(theta)."""
    if isinstance(theta, PureAngle):
        theta = theta.theta
    return effect.alpha + effect.zeta * math.cos(theta) + effect.beta * math.sin(theta)
