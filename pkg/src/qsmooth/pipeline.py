"""Assemble every estimator for one inter-jump block."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.interpolate

from . import cdj
from .core import Params, UnknownRecord, angles_and_radii, wrap_angle
from .fokker_planck import (
    PdfHistory,
    bloch_means,
    evolve_unnormalized_pdf,
    mode_angles,
    q2_angles,
    smoothed_history,
)
from .retrofilter import EffectTable, propagate_effect
from .trajectory import FilteredTrajectory, filtered_trajectory
from .weak_value import q67_record_and_state, swv_components, weak_value_record

ESTIMATORS = ("filtered", "q1", "q2", "q3", "q4", "q5", "q6", "q7", "q8")
PURE_ESTIMATORS = ("q2", "q3", "q4", "q5", "q6", "q7")
DENSITY_ESTIMATORS = ("q1", "q2", "q3")
CDJ_ESTIMATORS = ("q4", "q5")


@dataclass(frozen=True)
class Track:
    """Estimator trajectory: Bloch components on its own time grid."""

    name: str
    times: np.ndarray
    y: np.ndarray
    z: np.ndarray
    pure: bool
    kind: str = "state"
    angles: np.ndarray | None = None

    @property
    def theta(self) -> np.ndarray:
        if self.angles is not None:
            return self.angles
        return angles_and_radii(self.y, self.z)[0]

    @property
    def radius(self) -> np.ndarray:
        return np.hypot(self.y, self.z)

    def at(self, times: np.ndarray) -> "Track":
        """Resample onto ``times``; pure tracks interpolate their unwrapped angle."""
        times = np.asarray(times, dtype=float)
        hi = np.clip(np.searchsorted(self.times, times), 1, len(self.times) - 1)
        lo = hi - 1
        idx = np.where(np.abs(self.times[lo] - times) <= np.abs(self.times[hi] - times), lo, hi)
        exact = np.abs(self.times[idx] - times) < 1e-9
        if np.all(exact):
            angles = None if self.angles is None else self.angles[idx]
            return Track(self.name, times, self.y[idx], self.z[idx], self.pure, self.kind, angles)
        if not self.pure:
            raise ValueError(f"{self.name} is not available on the requested times")
        th = np.unwrap(self.theta)
        th_new = scipy.interpolate.CubicSpline(self.times, th)(times)
        return Track(self.name, times, np.sin(th_new), np.cos(th_new), True, self.kind)

    @classmethod
    def from_angles(cls, name, times, thetas) -> "Track":
        thetas = wrap_angle(np.asarray(thetas, dtype=float))
        return cls(name, np.asarray(times, dtype=float), np.sin(thetas), np.cos(thetas), True, "state", thetas)


@dataclass
class EstimatedRecord:
    """Unknown record attributed to a pure estimator, with clipping flags."""

    record: UnknownRecord
    clipped: np.ndarray


@dataclass
class BlockResult:
    """Everything computed for one block [0, T] ending in an observed jump.

    ``filtered`` and ``effects`` live on the full dt grid; the density
    history, smoothed densities and the density-based estimators live on
    the coarser grid ``history.times()`` when ``store_every > 1``.
    """

    params: Params
    filtered: FilteredTrajectory
    effects: EffectTable
    history: PdfHistory
    smoothed: np.ndarray
    store_every: int
    tracks: dict = field(default_factory=dict)
    records: dict = field(default_factory=dict)
    weak_mean: np.ndarray | None = None
    q5: object = None
    q4: object = None
    notes: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.params.times()

    @property
    def cost_times(self) -> np.ndarray:
        return self.history.times()

    @property
    def cost_index(self) -> np.ndarray:
        """Indices of the cost grid within the full dt grid."""
        return np.arange(len(self.history)) * self.store_every

    def smoothed_state(self):
        return self.tracks["q1"].y, self.tracks["q1"].z

    def swv_at_cost_grid(self):
        k = self.cost_index
        return swv_components(
            self.filtered.y[k], self.filtered.z[k], self.effects.alpha[k], self.effects.beta[k], self.effects.zeta[k]
        )


def invert_record(thetas: np.ndarray, params: Params, u_max: float = 1e3, singular_tol: float = 1e-6) -> EstimatedRecord:
    """Record that drives the first-order pure-state map through ``thetas``.

    Uses the forward difference, which makes the inversion the exact
    inverse of the map: feeding the result back reproduces ``thetas``
    wherever nothing was clipped.  Steps starting where
    ``1 + cos(theta)`` is below ``singular_tol`` carry no information about
    u and are set to zero (this always includes the ground-state start);
    values above ``u_max`` in magnitude are clipped.  Both are flagged.
    """
    if params.gamma_u <= 0:
        raise ValueError("records cannot be inverted without an unobserved channel")
    th = np.unwrap(np.asarray(thetas, dtype=float))
    dt = params.dt
    g = params.gamma
    sq = math.sqrt(params.gamma_u)
    rate = np.diff(th) / dt
    th0 = th[:-1]
    lever = sq * (1.0 + np.cos(th0))
    singular = (1.0 + np.cos(th0)) < singular_tol
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (-rate - params.omega + 0.5 * g * np.sin(th0)) / lever
    u = np.where(singular, 0.0, u)
    big = np.abs(u) > u_max
    u = np.clip(u, -u_max, u_max)
    return EstimatedRecord(UnknownRecord(u, dt), singular | big)


def run_block(
    params: Params,
    T: float | None = None,
    estimators=ESTIMATORS,
    store_every: int = 1,
    q4_spacing: float = 0.02,
    u_max: float = 1e3,
    with_records: bool = True,
) -> BlockResult:
    """Compute the requested estimators for a block of length T.

    Parameters
    ----------
    params : Params
    T : float, optional
        Block length (default ``params.T``).
    estimators : sequence of str
        Subset of :data:`ESTIMATORS`.
    store_every : int
        Stride of the stored density snapshots.  Estimator records (needed
        for the record-space costs) require ``store_every == 1``.
    q4_spacing : float
        Spacing of the end times of the per-time most-likely past records.
    u_max : float
        Clipping bound for estimated records.
    """
    T = params.T if T is None else T
    params = params.replace(T=T)
    want = set(estimators)
    if "q6" in want or "q7" in want:
        want |= {"q6", "q7"}
    filtered = filtered_trajectory(params)
    effects = propagate_effect(params)
    history = evolve_unnormalized_pdf(params, store_every=store_every)
    smoothed = smoothed_history(history, effects.every(store_every))
    res = BlockResult(params, filtered, effects, history, smoothed, store_every)
    times = params.times()
    ctimes = history.times()
    res.tracks["filtered"] = Track("filtered", times, filtered.y, filtered.z, False)

    ys, zs = bloch_means(history.grid, smoothed)
    radius = np.hypot(ys, zs)
    over = radius > 1.0
    ys = np.where(over, ys / np.maximum(radius, 1.0), ys)
    zs = np.where(over, zs / np.maximum(radius, 1.0), zs)
    res.tracks["q1"] = Track("q1", ctimes, ys, zs, False)
    if "q2" in want:
        res.tracks["q2"] = Track.from_angles("q2", ctimes, q2_angles(ys, zs))
    if "q3" in want:
        modes, degenerate = mode_angles(smoothed)
        res.tracks["q3"] = Track.from_angles("q3", ctimes, modes)
        res.notes["q3_degenerate_times"] = int(degenerate.sum())
    res.weak_mean = weak_value_record(filtered, effects, params)
    if "q6" in want:
        wv = q67_record_and_state(params, filtered, effects, u_max)
        for name in ("q6", "q7"):
            res.tracks[name] = Track.from_angles(name, times, wv.thetas)
            res.records[name] = EstimatedRecord(wv.record, wv.clipped)
        res.notes["q67_clipped_steps"] = int(wv.clipped.sum())
    if "q8" in want:
        y8, z8 = swv_components(filtered.y, filtered.z, effects.alpha, effects.beta, effects.zeta)
        res.tracks["q8"] = Track("q8", times, y8, z8, False, "indefinite")
    if "q5" in want:
        q5 = cdj.solve_q5(params)
        res.q5 = q5
        res.tracks["q5"] = Track.from_angles("q5", times, wrap_angle(q5.best.thetas))
        res.records["q5"] = EstimatedRecord(q5.best.us, np.zeros(len(q5.best.us.values), dtype=bool))
        res.notes["q5_roots"] = len(q5.roots)
    if "q4" in want:
        steps = cdj.q4_steps(params, spacing=q4_spacing)
        q4 = cdj.solve_q4(params, steps=steps, effects=effects)
        res.q4 = q4
        ok = np.isfinite(q4.thetas)
        q4_times = np.concatenate([[0.0], q4.times()[ok]])
        q4_theta = np.concatenate([[math.pi], q4.thetas[ok]])
        res.tracks["q4"] = Track.from_angles("q4", q4_times, q4_theta)
        res.notes["q4_failed_steps"] = list(q4.failed)
    if with_records and store_every == 1:
        for name in ("q2", "q3", "q4"):
            if name in res.tracks:
                full = res.tracks[name].at(times)
                res.records[name] = invert_record(np.unwrap(full.theta), params, u_max)
                res.notes[f"{name}_record_clipped"] = int(res.records[name].clipped.sum())
    return res
