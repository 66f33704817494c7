"""Distribution of the pure true-state angle conditioned on the observed record.

The unnormalized past-conditioned density ``p(theta)`` of the true-state
angle obeys a one-dimensional drift-diffusion equation with a sink,

    dp/dt = -(gamma_o/2)(1 + cos theta) p - d/dtheta [V p]
            + 1/2 d^2/dtheta^2 [D p],

with ``V = -omega + (gamma_o/2 + Gamma) sin + (Gamma/2) sin cos`` and
``D = Gamma (1 + cos)^2`` where ``Gamma = gamma_u``.  It is obtained from
the (lambda, theta) Fokker-Planck equation of the ostensible trajectories
by integrating against lambda.  Multiplying by the overlap with the
backward effect gives the past-future (smoothed) density.

The solver is a finite-volume scheme on a periodic cell grid: limited
second-order upwind fluxes for the drift (explicit, two-stage SSP
Runge-Kutta), backward-Euler diffusion and an exact exponential sink.
Every part preserves positivity, and drift and diffusion conserve mass
exactly, so the total mass changes only through the sink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .core import TWO_PI, BlochYZ, NumericalError, Params, PureAngle, wrap_angle
from .retrofilter import EffectTable


@dataclass(frozen=True)
class ThetaPdf:
    """Density over a periodic cell grid ``theta_i = i * 2 pi / n``."""

    grid: np.ndarray
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != np.shape(self.grid):
            raise ValueError("grid and values differ in shape")
        if np.any(values < 0):
            raise ValueError("densities must be non-negative")
        if self.normalized and abs(self.mass() - 1.0) > 1e-9:
            raise ValueError("normalized flag set but mass is not one")
        object.__setattr__(self, "values", values)

    @property
    def spacing(self) -> float:
        return TWO_PI / len(self.grid)

    def mass(self) -> float:
        return float(np.sum(self.values) * self.spacing)

    def normalize(self) -> "ThetaPdf":
        m = self.mass()
        if not m > 0:
            raise NumericalError("cannot normalize a density with zero mass")
        return ThetaPdf(self.grid, self.values / m, True)

    def value_at(self, theta: float) -> float:
        """Density at an arbitrary angle from the local quadratic through the
        nearest node and its neighbours (the same model used to refine the
        mode, so the refined mode is never scored below a grid node)."""
        return float(_quadratic_value(self.values[None, :], np.array([theta]))[0])


def theta_grid(n: int) -> np.ndarray:
    return np.arange(n) * (TWO_PI / n)


INITIAL_WIDTH = 0.01


def gaussian_initial(n: int, center: float = math.pi, width: float = INITIAL_WIDTH) -> ThetaPdf:
    """Narrow Gaussian (wrapped) normalized on the cell grid."""
    grid = theta_grid(n)
    d = np.angle(np.exp(1j * (grid - center)))
    values = np.exp(-0.5 * (d / width) ** 2)
    values /= values.sum() * (TWO_PI / n)
    return ThetaPdf(grid, values, True)


def drift(theta, params: Params):
    """Effective drift V(theta) of the marginalized density."""
    gu = params.gamma_u
    s = np.sin(theta)
    return -params.omega + (0.5 * params.gamma_o + gu) * s + 0.5 * gu * s * np.cos(theta)


def diffusion(theta, params: Params):
    """Diffusion coefficient D(theta) = Gamma (1 + cos theta)^2."""
    return params.gamma_u * (1.0 + np.cos(theta)) ** 2


def sink(theta, params: Params):
    """Loss rate of the no-jump likelihood, (gamma_o/2)(1 + cos theta)."""
    return 0.5 * params.gamma_o * (1.0 + np.cos(theta))


def _van_leer(a, b):
    prod = a * b
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(prod > 0, 2.0 * prod / (a + b), 0.0)
    return out


class DensitySolver:
    """Time stepper for the unnormalized density on a fixed grid.

    Parameters
    ----------
    params : Params
    n : int, optional
        Number of grid cells (defaults to ``params.theta_grid_n``).
    step : float
        Outer step; internally split into equal sub-steps that respect the
        drift CFL limit.
    cfl : float
        Target Courant number of the drift sub-steps.
    """

    def __init__(self, params: Params, n: int | None = None, step: float | None = None, cfl: float = 0.4):
        self.params = params
        self.n = params.theta_grid_n if n is None else n
        self.h = TWO_PI / self.n
        self.grid = theta_grid(self.n)
        faces = self.grid + 0.5 * self.h
        self.v_face = drift(faces, params)
        step = params.dt if step is None else step
        vmax = float(np.max(np.abs(self.v_face)))
        self.n_sub = max(1, math.ceil(step * vmax / (cfl * self.h)))
        self.tau = step / self.n_sub
        if self.tau * vmax / self.h > 1.0:
            raise NumericalError("drift CFL condition violated")
        self.sink_factor = np.exp(-sink(self.grid, params) * self.tau)
        self._diffusion_lu = self._build_diffusion(diffusion(self.grid, params))

    def _build_diffusion(self, dcoef):
        n = self.n
        r = self.tau / self.h**2
        main = 1.0 + r * dcoef
        lower = -0.5 * r * np.roll(dcoef, 1)  # entry (i, i-1) uses D_{i-1}
        upper = -0.5 * r * np.roll(dcoef, -1)  # entry (i, i+1) uses D_{i+1}
        rows = np.concatenate([np.arange(n), np.arange(n), np.arange(n)])
        cols = np.concatenate([np.arange(n), (np.arange(n) - 1) % n, (np.arange(n) + 1) % n])
        vals = np.concatenate([main, lower, upper])
        mat = scipy.sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))
        return scipy.sparse.linalg.splu(mat)

    def _advection_rate(self, p):
        dl = p - np.roll(p, 1)
        dr = np.roll(p, -1) - p
        slope = _van_leer(dl, dr)
        left_state = p + 0.5 * slope  # value at face i+1/2 from cell i
        right_state = np.roll(p - 0.5 * slope, -1)  # from cell i+1
        v = self.v_face
        flux = np.where(v > 0, v * left_state, v * right_state)
        return -(flux - np.roll(flux, 1)) / self.h

    def substep(self, p):
        p1 = p + self.tau * self._advection_rate(p)
        p2 = 0.5 * (p + p1 + self.tau * self._advection_rate(p1))
        p2 = p2 * self.sink_factor
        p3 = self._diffusion_lu.solve(p2)
        return self._clip(p3)

    @staticmethod
    def _clip(p):
        top = np.max(p)
        low = np.min(p)
        if low < 0:
            if low < -1e-12 * top:
                raise NumericalError(f"density went negative ({low:.3e} vs max {top:.3e})")
            p = np.where(p < 0, 0.0, p)
        return p

    def step(self, p):
        for _ in range(self.n_sub):
            p = self.substep(p)
        return p


@dataclass(frozen=True)
class PdfHistory:
    """Unnormalized densities at grid times t_k = k dt.

    Row k holds ``exp(log_scale[k]) * values[k]``.
    """

    grid: np.ndarray
    values: np.ndarray
    log_scale: np.ndarray
    dt: float

    @property
    def spacing(self) -> float:
        return TWO_PI / len(self.grid)

    def __len__(self) -> int:
        return self.values.shape[0]

    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    def pdf(self, k: int, normalized: bool = True) -> ThetaPdf:
        out = ThetaPdf(self.grid, self.values[k])
        return out.normalize() if normalized else out

    def log_mass(self) -> np.ndarray:
        return np.log(self.values.sum(axis=1) * self.spacing) + self.log_scale

    def normalized_values(self) -> np.ndarray:
        return self.values / (self.values.sum(axis=1, keepdims=True) * self.spacing)


def evolve_unnormalized_pdf(
    params: Params,
    T: float | None = None,
    initial: ThetaPdf | None = None,
    cfl: float = 0.4,
    store_every: int = 1,
) -> PdfHistory:
    """Solve the density equation on [0, T], storing every dt.

    Parameters
    ----------
    params : Params
    T : float, optional
        Horizon, default ``params.T``.
    initial : ThetaPdf, optional
        Defaults to a Gaussian of width 0.01 at the ground state.
    cfl : float
        Courant number for the drift sub-steps.
    store_every : int
        Keep one snapshot every this many steps (the horizon must be a
        multiple of it); the history then has spacing ``store_every * dt``.

    Returns
    -------
    PdfHistory
    """
    T = params.T if T is None else T
    n_steps = int(round(T / params.dt))
    if initial is None:
        initial = gaussian_initial(params.theta_grid_n)
    if n_steps % store_every:
        raise ValueError("horizon is not a multiple of the storage stride")
    n = len(initial.grid)
    solver = DensitySolver(params, n=n, cfl=cfl)
    n_out = n_steps // store_every
    values = np.empty((n_out + 1, n))
    log_scale = np.zeros(n_out + 1)
    p = initial.values.copy()
    acc = 0.0
    values[0] = p
    for k in range(1, n_steps + 1):
        p = solver.step(p)
        top = p.max()
        if not top > 0:
            raise NumericalError("density vanished")
        if top < 1e-100:
            acc += math.log(top)
            p = p / top
        if k % store_every == 0:
            values[k // store_every] = p
            log_scale[k // store_every] = acc
    return PdfHistory(initial.grid, values, log_scale, params.dt * store_every)


# --------------------------------------------------------------------------
# smoothed density and the three density-based estimators


def smoothed_pdf(ptilde: ThetaPdf, alpha: float, beta: float, zeta: float) -> ThetaPdf:
    """Past-future density proportional to ``p(theta) Tr[E S(theta)]``."""
    weight = alpha + zeta * np.cos(ptilde.grid) + beta * np.sin(ptilde.grid)
    weight = np.where(weight < 0, 0.0, weight)
    values = ptilde.values * weight
    total = values.sum() * ptilde.spacing
    if not total > 0:
        raise NumericalError("smoothed density has zero total weight")
    return ThetaPdf(ptilde.grid, values / total, True)


def smoothed_history(history: PdfHistory, effects: EffectTable) -> np.ndarray:
    """Normalized smoothed densities for every stored time (rows)."""
    if len(effects) != len(history):
        raise ValueError("effect table and density history are on different grids")
    g = history.grid[None, :]
    weight = effects.alpha[:, None] + effects.zeta[:, None] * np.cos(g) + effects.beta[:, None] * np.sin(g)
    weight = np.maximum(weight, 0.0)
    values = history.values * weight
    total = values.sum(axis=1, keepdims=True) * history.spacing
    if np.any(total <= 0):
        raise NumericalError("smoothed density has zero total weight")
    return values / total


def bloch_means(grid: np.ndarray, normalized_rows: np.ndarray):
    """(y, z) = integrals of (sin, cos) against each normalized row."""
    h = TWO_PI / len(grid)
    y = normalized_rows @ np.sin(grid) * h
    z = normalized_rows @ np.cos(grid) * h
    return y, z


def q1_smoothed_state(pdf: ThetaPdf) -> BlochYZ:
    """Mean Bloch vector of a normalized density (trace-square optimum)."""
    if not pdf.normalized:
        pdf = pdf.normalize()
    y, z = bloch_means(pdf.grid, pdf.values[None, :])
    y, z = float(y[0]), float(z[0])
    r = math.hypot(y, z)
    if r > 1.0:
        # only rounding can push the mean outside the disc
        y, z = y / r, z / r
    return BlochYZ(y, z)


def q2_lustrated_state(smoothed: BlochYZ) -> PureAngle:
    """Pure state along the smoothed Bloch vector (largest eigenvector)."""
    if smoothed.y == 0.0 and smoothed.z == 0.0:
        raise NumericalError("smoothed state is maximally mixed; the leading eigenvector is not unique")
    return PureAngle(math.atan2(smoothed.y, smoothed.z))


def q2_angles(y: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Vectorized :func:`q2_lustrated_state` angles."""
    if np.any((y == 0) & (z == 0)):
        raise NumericalError("smoothed state is maximally mixed at some time")
    return wrap_angle(np.arctan2(y, z))


def _quadratic_value(rows: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Evaluate each row's local quadratic interpolant at ``theta`` (per row)."""
    n = rows.shape[1]
    h = TWO_PI / n
    pos = wrap_angle(np.asarray(theta, dtype=float)) / h
    i = np.rint(pos).astype(int)
    x = pos - i
    i = i % n
    r = np.arange(rows.shape[0])
    pm = rows[r, (i - 1) % n]
    p0 = rows[r, i]
    pp = rows[r, (i + 1) % n]
    val = p0 + 0.5 * x * (pp - pm) + 0.5 * x * x * (pp - 2 * p0 + pm)
    return np.maximum(val, 0.0)


def density_at(rows: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Density of each row at its own angle (local quadratic interpolation)."""
    return _quadratic_value(np.atleast_2d(rows), np.atleast_1d(theta))


def mode_angles(rows: np.ndarray, tie_tol: float = 1e-9):
    """Refined modes of each row and a flag for near-degenerate maxima.

    The grid maximum (lowest angle among ties) is refined by the vertex of
    the parabola through it and its two neighbours.
    """
    rows = np.atleast_2d(rows)
    n = rows.shape[1]
    h = TWO_PI / n
    i = np.argmax(rows, axis=1)
    r = np.arange(rows.shape[0])
    top = rows[r, i]
    # neighbouring nodes of a single smooth peak are not separate maxima
    pm = rows[r, (i - 1) % n]
    pp = rows[r, (i + 1) % n]
    near = (pm >= top * (1.0 - tie_tol)).astype(int) + (pp >= top * (1.0 - tie_tol)).astype(int)
    count = np.sum(rows >= top[:, None] * (1.0 - tie_tol), axis=1)
    degenerate = count > 1 + near
    curv = pm - 2.0 * top + pp
    with np.errstate(divide="ignore", invalid="ignore"):
        offset = np.where(curv < 0, 0.5 * (pm - pp) / curv, 0.0)
    offset = np.clip(offset, -0.5, 0.5)
    return wrap_angle((i + offset) * h), degenerate


def q3_most_likely_state(pdf: ThetaPdf) -> tuple[PureAngle, bool]:
    """Refined mode of a density and whether its maximum is degenerate."""
    angles, flags = mode_angles(pdf.values[None, :])
    return PureAngle(float(angles[0])), bool(flags[0])
