"""Weak values, the local-record estimators and the smoothed weak-value state.

The weak value of a coupling ``c`` between a pre-state ``rho`` and an
effect ``E`` is ``2 Re Tr(E c rho) / Tr(E rho)``.  With ``rho`` the filtered
state and ``E`` the backward effect it is the conditioned mean (and, to
first order in dt, the mode) of the homodyne result at that time, which
gives the local record estimate.  The symmetrized operator
``(E rho + rho E) / Tr(E rho + rho E)`` is the smoothed weak-value (SWV)
estimate; it has unit trace but can have Bloch radius above one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cdj import state_map_angles
from .core import IDENTITY, BlochYZ, Effect, NumericalError, Params, UnknownRecord, wrap_angle
from .retrofilter import EffectTable
from .trajectory import FilteredTrajectory

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, (BlochYZ, Effect)):
        return x.matrix()
    return np.asarray(x, dtype=complex)


def generalized_weak_value(rho, effect, coupling) -> float:
    """``2 Re Tr(E c rho) / Tr(E rho)``.

    Parameters
    ----------
    rho : BlochYZ or (2, 2) array
        Pre-selected state.
    effect : Effect or (2, 2) array
        Post-selection effect.
    coupling : (2, 2) array
        Measurement coupling operator c.
    """
    r = _as_matrix(rho)
    e = _as_matrix(effect)
    c = np.asarray(coupling, dtype=complex)
    den = np.trace(e @ r).real
    if not den > 0:
        raise NumericalError("zero overlap between effect and state")
    return float(2.0 * np.trace(e @ c @ r).real / den)


def weak_record_mean(rho, effect, params: Params) -> float:
    """Conditioned mean of the homodyne result, the unobserved-channel weak value."""
    return generalized_weak_value(rho, effect, params.c_unobserved())


# --------------------------------------------------------------------------
# local record densities


@dataclass(frozen=True)
class LocalRecordPdf:
    """First-order density ``P_ost(u) [1 + u m dt]`` of a single record value."""

    mean: float
    dt: float

    def density(self, u):
        u = np.asarray(u, dtype=float)
        gauss = math.sqrt(self.dt / (2 * math.pi)) * np.exp(-0.5 * u * u * self.dt)
        return gauss * (1.0 + u * self.mean * self.dt)

    def mode(self) -> float:
        """Maximizer of the density (root of its logarithmic derivative)."""
        m, dt = self.mean, self.dt
        if m == 0.0:
            return 0.0
        # u (1 + u m dt) = m
        return (-1.0 + math.sqrt(1.0 + 4.0 * m * m * dt)) / (2.0 * m * dt)


def local_record_pdf(filtered: BlochYZ, effect: Effect, params: Params, dt: float | None = None) -> LocalRecordPdf:
    """Density of the homodyne result given the past and future observations.

    The mean (equal to the mode at first order in dt) is the weak value of
    the unobserved coupling between the filtered state and the effect.
    """
    dt = params.dt if dt is None else dt
    return LocalRecordPdf(weak_record_mean(filtered, effect, params), dt)


@dataclass(frozen=True)
class KrausRecordPdf:
    """Density ``P_ost(u) Tr[E A_u rho A_u^dag] / Z`` with the first-order Kraus
    operator ``A_u = 1 - (c^dag c + c^2) dt / 2 + c u dt``.

    ``Tr[E A_u rho A_u^dag] = a0 + a1 u dt + a2 u^2 dt^2`` exactly.
    """

    a0: float
    a1: float
    a2: float
    dt: float

    @classmethod
    def build(cls, rho, effect, coupling, dt: float) -> "KrausRecordPdf":
        r = _as_matrix(rho)
        e = _as_matrix(effect)
        c = np.asarray(coupling, dtype=complex)
        a = IDENTITY - 0.5 * (c.conj().T @ c + c @ c) * dt
        ad = a.conj().T
        cd = c.conj().T
        a0 = np.trace(e @ a @ r @ ad).real
        a1 = np.trace(e @ (c @ r @ ad + a @ r @ cd)).real
        a2 = np.trace(e @ c @ r @ cd).real
        if not a0 > 0:
            raise NumericalError("zero overlap between effect and state")
        return cls(float(a0), float(a1), float(a2), dt)

    def density(self, u):
        u = np.asarray(u, dtype=float)
        dt = self.dt
        gauss = math.sqrt(dt / (2 * math.pi)) * np.exp(-0.5 * u * u * dt)
        z = self.a0 + self.a2 * dt
        return gauss * (self.a0 + self.a1 * u * dt + self.a2 * u * u * dt * dt) / z

    @property
    def mean(self) -> float:
        return self.a1 / (self.a0 + self.a2 * self.dt)

    def mode(self) -> float:
        """Global maximizer, from the real roots of the stationarity cubic.

        The roots are polished by Newton steps on the cubic itself; the
        density is too flat at its peak for a direct maximization to
        resolve the O(dt) offset between mode and mean.
        """
        dt = self.dt
        coeffs = np.array([self.a2 * dt * dt, self.a1 * dt, self.a0 - 2.0 * self.a2 * dt, -self.a1])
        roots = np.roots(coeffs)
        real = roots[np.abs(roots.imag) < 1e-9 * np.maximum(1.0, np.abs(roots.real))].real
        if len(real) == 0:
            real = np.array([self.a1 / self.a0])
        slope = np.polyder(coeffs)
        for _ in range(3):
            d = np.polyval(slope, real)
            real = np.where(d != 0, real - np.polyval(coeffs, real) / np.where(d != 0, d, 1.0), real)
        return float(real[np.argmax(self.density(real))])


# --------------------------------------------------------------------------
# estimators along a block


@dataclass(frozen=True)
class WeakRecordResult:
    """Local-record estimate and the pure-state path it drives."""

    record: UnknownRecord
    thetas: np.ndarray
    clipped: np.ndarray

    def states(self):
        return np.sin(self.thetas), np.cos(self.thetas)


def weak_value_record(filtered: FilteredTrajectory, effects: EffectTable, params: Params) -> np.ndarray:
    """Unclipped weak value of the unobserved coupling at every grid time."""
    if len(filtered.y) != len(effects):
        raise ValueError("filtered trajectory and effect table are on different grids")
    rho = 0.5 * (IDENTITY[None] + filtered.y[:, None, None] * SIGMA_Y[None] + filtered.z[:, None, None] * SIGMA_Z[None])
    e = (
        effects.alpha[:, None, None] * IDENTITY[None]
        + effects.beta[:, None, None] * SIGMA_Y[None]
        + effects.zeta[:, None, None] * SIGMA_Z[None]
    )
    c = params.c_unobserved()
    num = 2.0 * np.einsum("kij,jl,kli->k", e, c, rho).real
    den = np.einsum("kij,kji->k", e, rho).real
    with np.errstate(divide="ignore", invalid="ignore"):
        return num / den


def q67_record_and_state(
    params: Params,
    filtered: FilteredTrajectory,
    effects: EffectTable,
    u_max: float = 1e3,
) -> WeakRecordResult:
    """Local most-likely (equivalently mean) record and its induced pure path.

    The record entry for step k is the weak value at t_k; entries beyond
    ``u_max`` in magnitude (or undefined) are clipped and flagged.  The
    state path is the first-order pure-state map driven by the record.
    """
    u = weak_value_record(filtered, effects, params)[:-1]
    bad = ~np.isfinite(u)
    clipped = bad | (np.abs(u) > u_max)
    u = np.where(bad, 0.0, u)
    u = np.clip(u, -u_max, u_max)
    thetas = wrap_angle(state_map_angles(u, params))
    return WeakRecordResult(UnknownRecord(u, params.dt), thetas, clipped)


def q8_swv_state(filtered: BlochYZ, effect: Effect) -> BlochYZ:
    """Smoothed weak-value operator ``(E rho + rho E) / Tr(E rho + rho E)``."""
    y, z = swv_components(
        np.array([filtered.y]), np.array([filtered.z]), np.array([effect.alpha]), np.array([effect.beta]), np.array([effect.zeta])
    )
    return BlochYZ(float(y[0]), float(z[0]), "indefinite")


def swv_components(y, z, alpha, beta, zeta):
    """Vectorized Bloch components of the smoothed weak-value operator.

    With ``E = alpha + beta sigma_y + zeta sigma_z`` and
    ``rho = (1 + y sigma_y + z sigma_z)/2`` the anticommutator is
    ``(alpha + beta y + zeta z) + (alpha y + beta) sigma_y + (alpha z + zeta) sigma_z``.
    """
    den = alpha + beta * y + zeta * z
    if np.any(den <= 0):
        raise NumericalError("zero overlap between effect and filtered state")
    return (alpha * y + beta) / den, (alpha * z + zeta) / den
