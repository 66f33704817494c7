"""Modified expected costs of the estimators and their jump-time averages.

Costs are evaluated against the true state averaged over the smoothed
density of pure true states, so each is a closed form in the smoothed
Bloch vector, the smoothed density, the local record mean or the
smoothed weak value:

=====  ==========================================  ==================
cost   per-time value                              minimized by
=====  ==========================================  ==================
c1     Tr rho^2 - 2 Tr(rho rho_S) + 1              q1 (smoothed)
c2     -Tr(rho rho_S)                              q2 (lustrated)
c3     -density(theta)                             q3 (most likely)
c5     log-likelihood gap to the best record       q5
c6/c7  u^2 - 2 u <U>                               q6 = q7
c8     sum_j v_j^2 - 2 v_j w_j                     q8 (SWV)
=====  ==========================================  ==================
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import cdj
from .core import BlochYZ, Effect, NumericalError, Params, PureAngle, UnknownRecord, trace_product
from .fokker_planck import ThetaPdf, bloch_means, density_at
from .pipeline import BlockResult, run_block
from .trajectory import waiting_time_pdf
from .weak_value import q8_swv_state

COST_IDS = ("c1", "c2", "c3", "c5", "c6", "c7", "c8")
STATE_COSTS = ("c1", "c2", "c3", "c8")
RECORD_COSTS = ("c6", "c7")
TABLE_ROWS = ("c1", "c2", "c3", "c8")
TABLE_COLUMNS = ("q1", "q2", "q3", "q6", "q8")
# estimators a cost cannot be applied to
NOT_APPLICABLE = {"c3": ("filtered", "q1", "q8")}
OPTIMAL = {"c1": "q1", "c2": "q2", "c3": "q3", "c5": "q5", "c6": "q6", "c7": "q7", "c8": "q8"}


# --------------------------------------------------------------------------
# scalar costs


def _smoothed_vector(pdf) -> tuple[float, float]:
    if isinstance(pdf, BlochYZ):
        return pdf.y, pdf.z
    if not pdf.normalized:
        pdf = pdf.normalize()
    y, z = bloch_means(pdf.grid, pdf.values[None, :])
    return float(y[0]), float(z[0])


def cost_c1(estimate: BlochYZ, pdf: ThetaPdf | BlochYZ) -> float:
    """Trace-square deviation from a pure true state drawn from ``pdf``.

    ``pdf`` may also be the smoothed state itself, which is all the cost
    depends on.
    """
    ys, zs = _smoothed_vector(pdf)
    return float(c1_values(estimate.y, estimate.z, ys, zs))


def cost_c2(estimate: BlochYZ, smoothed: BlochYZ) -> float:
    """Negative fidelity with the smoothed state, ``-Tr(rho rho_S)``."""
    return -trace_product(estimate, smoothed)


def cost_c3(estimate, pdf: ThetaPdf) -> float:
    """Negative smoothed density (per radian) at a pure estimate."""
    if isinstance(estimate, BlochYZ):
        if abs(estimate.radius - 1.0) > 1e-9:
            raise ValueError("c3 applies to pure estimates only")
        estimate = PureAngle(math.atan2(estimate.y, estimate.z))
    if not isinstance(estimate, PureAngle):
        estimate = PureAngle(float(estimate))
    if not pdf.normalized:
        pdf = pdf.normalize()
    return -pdf.value_at(estimate.theta)


def cost_c5(record, params: Params, T: float | None = None, best=None) -> float:
    """Log-likelihood deficit of ``record`` relative to the most likely record.

    Parameters
    ----------
    record : UnknownRecord or array_like
    params : Params
    T : float, optional
        Block length; the record must have T/dt entries.
    best : UnknownRecord, array_like or ShootingResult, optional
        Most likely record; solved for when omitted.
    """
    T = params.T if T is None else T
    p = params.replace(T=T)
    if best is None:
        best = cdj.solve_q5(p)
    if isinstance(best, cdj.ShootingResult):
        best = best.best.us
    top = cdj.path_log_likelihood(best, p)
    value = cdj.path_log_likelihood(record, p)
    if value == -math.inf:
        return math.inf
    return top - value


def cost_c6_c7(u, mean):
    """``u^2 - 2 u <U>``; the local-mean and local-mode costs coincide."""
    u = np.asarray(u, dtype=float)
    out = u * u - 2.0 * u * np.asarray(mean, dtype=float)
    return float(out) if out.ndim == 0 else out


cost_c6 = cost_c6_c7
cost_c7 = cost_c6_c7


def cost_c8(estimate: BlochYZ, filtered: BlochYZ, effect: Effect) -> float:
    """Shifted square deviation of the Pauli components from the SWV ones."""
    w = q8_swv_state(filtered, effect)
    return float(c8_values(estimate.y, estimate.z, w.y, w.z))


# --------------------------------------------------------------------------
# vectorized forms


def c1_values(y, z, ys, zs):
    return 0.5 * (1.0 + y * y + z * z) - (1.0 + y * ys + z * zs) + 1.0


def c2_values(y, z, ys, zs):
    return -0.5 * (1.0 + y * ys + z * zs)


def c8_values(y, z, wy, wz):
    return y * y - 2.0 * y * wy + z * z - 2.0 * z * wz


# --------------------------------------------------------------------------
# reports


@dataclass
class CostReport:
    """Costs of one estimator for one block.

    ``per_time`` holds the state costs on ``times`` and the record costs
    on ``record_times``; ``scalars`` holds whole-record costs (c5);
    ``jump_averaged`` is filled by :func:`jump_time_average_all`.
    """

    estimator: str
    times: np.ndarray
    record_times: np.ndarray | None = None
    per_time: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    jump_averaged: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "times": self.times.tolist(),
            "record_times": None if self.record_times is None else self.record_times.tolist(),
            "per_time": {k: np.asarray(v).tolist() for k, v in self.per_time.items()},
            "scalars": dict(self.scalars),
            "jump_averaged": dict(self.jump_averaged),
            "flags": dict(self.flags),
        }


def applicable(cost: str, estimator: str, block: BlockResult | None = None) -> bool:
    if estimator in NOT_APPLICABLE.get(cost, ()):
        return False
    if block is not None and cost in RECORD_COSTS + ("c5",):
        return estimator in block.records
    return True


def per_time_costs(block: BlockResult, estimator: str, costs=COST_IDS, q5_record=None) -> CostReport:
    """State costs on the block's cost grid and record costs on the dt grid.

    c5 is included only when the block carries a most-likely record (its
    own q5 solution, or ``q5_record``).
    """
    if estimator not in block.tracks:
        raise KeyError(f"estimator {estimator!r} was not computed for this block")
    times = block.cost_times
    track = block.tracks[estimator].at(times)
    rep = CostReport(estimator, times)
    ys, zs = block.tracks["q1"].y, block.tracks["q1"].z
    for c in costs:
        if not applicable(c, estimator, block):
            continue
        if c == "c1":
            rep.per_time[c] = c1_values(track.y, track.z, ys, zs)
        elif c == "c2":
            rep.per_time[c] = c2_values(track.y, track.z, ys, zs)
        elif c == "c3":
            rep.per_time[c] = -density_at(block.smoothed, track.theta)
        elif c == "c8":
            wy, wz = block.swv_at_cost_grid()
            rep.per_time[c] = c8_values(track.y, track.z, wy, wz)
        elif c in RECORD_COSTS:
            est = block.records[estimator]
            mean = block.weak_mean[:-1]
            rep.per_time[c] = cost_c6_c7(est.record.values, mean)
            rep.record_times = np.arange(len(est.record.values)) * block.params.dt
            rep.flags[f"{c}_clipped_steps"] = int(est.clipped.sum())
        elif c == "c5":
            best = q5_record if q5_record is not None else (block.q5.best.us if block.q5 is not None else None)
            if best is None:
                continue
            rep.scalars[c] = cost_c5(block.records[estimator].record, block.params, best=best)
    if estimator == "q3" and "q3_degenerate_times" in block.notes:
        rep.flags["q3_degenerate_times"] = block.notes["q3_degenerate_times"]
    return rep


def c5_values(block: BlockResult, estimators=("q2", "q4", "q5", "q6", "q7")) -> dict:
    """Whole-record cost of every estimator with an attributed record."""
    if block.q5 is None:
        raise ValueError("block was run without the most likely record (q5)")
    best = block.q5.best.us
    out = {}
    for name in estimators:
        if name in block.records:
            out[name] = cost_c5(block.records[name].record, block.params, best=best)
    return out


# --------------------------------------------------------------------------
# jump-time average


@dataclass(frozen=True)
class Quadrature:
    """Jump-time nodes ``T_j = G^{-1}(x_j)`` with midpoint ``x_j = (j - 1/2) dx``.

    ``dt_avg`` is the local-time step of the inner average; every node is
    rounded to a positive multiple of it.
    """

    dx: float = 0.1
    dt_avg: float = 0.05
    T_max: float = 60.0

    @property
    def n_nodes(self) -> int:
        return int(round(1.0 / self.dx))

    def nodes(self, params: Params) -> np.ndarray:
        if abs(self.n_nodes * self.dx - 1.0) > 1e-9:
            raise ValueError("dx must divide one")
        stride = self.stride(params)
        need = 1.0 - 0.5 * self.dx
        T_max = self.T_max
        for _ in range(4):
            try:
                wt = waiting_time_pdf(params, T_max=T_max, dt=params.dt, min_mass=need)
                break
            except NumericalError:
                T_max *= 2
        else:
            raise NumericalError(f"waiting-time CDF does not reach {need} by T={T_max / 2:g}")
        x = (np.arange(1, self.n_nodes + 1) - 0.5) * self.dx
        raw = np.array([wt.inverse_cdf(v) for v in x])
        step = stride * params.dt
        return np.maximum(np.round(raw / step), 1) * step

    def stride(self, params: Params) -> int:
        s = int(round(self.dt_avg / params.dt))
        if s < 1 or abs(s * params.dt - self.dt_avg) > 1e-9:
            raise ValueError("dt_avg must be a multiple of dt")
        return s


def _block_costs(args):
    params, T, stride, estimators, costs = args
    want = set(estimators) - {"filtered"}
    block = run_block(params, T=T, estimators=tuple(want) or ("q1",), store_every=stride, with_records=False)
    out = {}
    for name in estimators:
        rep = per_time_costs(block, name, costs=[c for c in costs if c in STATE_COSTS])
        out[name] = dict(rep.per_time)
    return T, out


def _map(fn, items, threads: int):
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads <= 1 or len(items) <= 1:
        return [fn(a) for a in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as ex:
        return list(ex.map(fn, items))


@dataclass
class JumpAverageTable:
    """Jump-time-averaged costs: ``values[cost][estimator]`` (NaN when not applicable)."""

    values: dict
    nodes: np.ndarray
    weighting: str
    rows: tuple = TABLE_ROWS
    columns: tuple = TABLE_COLUMNS

    def row_minimizer(self, cost: str) -> str:
        row = {e: v for e, v in self.values[cost].items() if np.isfinite(v)}
        return min(row, key=row.get)

    def matrix(self) -> np.ndarray:
        return np.array([[self.values[c].get(e, math.nan) for e in self.columns] for c in self.rows])


def jump_time_average_all(
    params: Params,
    costs=TABLE_ROWS,
    estimators=TABLE_COLUMNS,
    quadrature: Quadrature | None = None,
    weighting: str = "pooled",
    threads: int = 1,
) -> JumpAverageTable:
    """Average state costs over the waiting-time distribution of the block length.

    Parameters
    ----------
    params : Params
        Physical parameters; ``params.T`` is ignored.
    costs, estimators : sequence of str
        Cost ids from :data:`STATE_COSTS` and estimator names.
    quadrature : Quadrature
    weighting : {"pooled", "per_block"}
        "pooled" divides the sum of every local-time sample over all nodes
        by the total sample count, so long blocks weigh more; "per_block"
        averages each block over its own local time first and then over
        the nodes with equal weight.
    threads : int
        Worker processes across the nodes (0 = one per CPU).
    """
    if weighting not in ("pooled", "per_block"):
        raise ValueError("weighting must be 'pooled' or 'per_block'")
    bad = [c for c in costs if c not in STATE_COSTS]
    if bad:
        raise ValueError(f"only state costs can be jump-averaged, not {bad}")
    quadrature = quadrature or Quadrature()
    nodes = quadrature.nodes(params)
    stride = quadrature.stride(params)
    jobs = [(params, float(T), stride, tuple(estimators), tuple(costs)) for T in nodes]
    results = _map(_block_costs, jobs, threads)
    values = {c: {} for c in costs}
    for c in costs:
        for e in estimators:
            if not applicable(c, e):
                values[c][e] = math.nan
                continue
            values[c][e] = average_over_nodes([r[e][c] for _, r in results], weighting)
    return JumpAverageTable(values, nodes, weighting, tuple(costs), tuple(estimators))


def jump_time_average(
    cost: str,
    estimator: str,
    params: Params,
    quadrature: Quadrature | None = None,
    weighting: str = "pooled",
    threads: int = 1,
) -> float:
    """Single entry of :func:`jump_time_average_all`."""
    if not applicable(cost, estimator):
        raise ValueError(f"{cost} does not apply to {estimator}")
    table = jump_time_average_all(params, (cost,), (estimator,), quadrature, weighting, threads)
    return table.values[cost][estimator]


def average_over_nodes(per_node_costs, weighting: str = "pooled") -> float:
    """Combine per-node local-time samples the way :func:`jump_time_average_all` does.

    ``per_node_costs`` is a sequence of 1-D arrays, one per jump-time node.
    """
    arrays = [np.asarray(a, dtype=float) for a in per_node_costs]
    if weighting == "pooled":
        return math.fsum(math.fsum(a) for a in arrays) / sum(len(a) for a in arrays)
    if weighting == "per_block":
        return math.fsum(math.fsum(a) / len(a) for a in arrays) / len(arrays)
    raise ValueError("weighting must be 'pooled' or 'per_block'")


__all__ = [
    "COST_IDS",
    "CostReport",
    "JumpAverageTable",
    "Quadrature",
    "average_over_nodes",
    "c5_values",
    "cost_c1",
    "cost_c2",
    "cost_c3",
    "cost_c5",
    "cost_c6_c7",
    "cost_c8",
    "jump_time_average",
    "jump_time_average_all",
    "per_time_costs",
]
