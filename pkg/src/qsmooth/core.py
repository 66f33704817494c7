"""Physical parameters, value types and Bloch-circle algebra for the qubit.

The qubit lives on the x = 0 great circle of the Bloch sphere, so every
state is described by its (y, z) components.  Pure states are labelled by
the angle ``theta`` with ``y = sin(theta)``, ``z = cos(theta)``; the excited
state is ``theta = 0`` and the ground state ``theta = pi``.

Matrix conventions used throughout the package:

* basis ordering ``|e>, |g>``, so ``sigma_z = diag(1, -1)``;
* lowering operator ``sigma_minus = |g><e|``;
* observed channel ``c_o = sqrt(gamma_o) sigma_minus``;
* unobserved (homodyne) channel ``c_u = -1j sqrt(gamma_u) sigma_minus``,
  whose phase makes ``<c_u + c_u^dag> = -sqrt(gamma_u) y``;
* Hamiltonian ``H = (omega / 2) sigma_x``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

TWO_PI = 2.0 * math.pi

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
IDENTITY = np.eye(2, dtype=complex)


class ConfigError(ValueError):
    """Invalid user-supplied configuration."""


class NumericalError(RuntimeError):
    """A numerical procedure failed or left its validity range."""


@dataclass(frozen=True)
class Params:
    """Physical and numerical parameters of a run.

    Rates are in units of ``1/T_gamma`` and times in units of ``T_gamma``,
    where ``T_gamma = 1/(gamma_o + gamma_u)``.

    Parameters
    ----------
    omega : float
        Rabi frequency.
    gamma_o : float
        Coupling rate of the observed (photodetected) channel.
    gamma_u : float
        Coupling rate of the unobserved (homodyne) channel.
    dt : float
        Integration step.
    T : float
        Duration of the inter-jump block; must be an integer multiple of dt.
    theta_grid_n : int
        Number of cells of the periodic theta grid.
    seed : int
        Seed for all random streams.
    """

    omega: float = 2.0
    gamma_o: float = 0.5
    gamma_u: float = 0.5
    dt: float = 1e-3
    T: float = 4.0
    theta_grid_n: int = 1024
    seed: int = 12345

    def __post_init__(self):
        for name in ("omega", "gamma_o", "gamma_u", "dt", "T"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"{name} must be a finite number, got {value!r}")
        if self.gamma_o < 0 or self.gamma_u < 0:
            raise ConfigError("coupling rates must be non-negative")
        if self.gamma_o + self.gamma_u <= 0:
            raise ConfigError("total coupling gamma_o + gamma_u must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.T <= 0:
            raise ConfigError("T must be positive")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ConfigError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if not isinstance(self.theta_grid_n, int) or self.theta_grid_n < 64:
            raise ConfigError("theta_grid_n must be an integer >= 64")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    @property
    def gamma(self) -> float:
        """Total decay rate."""
        return self.gamma_o + self.gamma_u

    @property
    def n_steps(self) -> int:
        """Number of integration steps K with T = K dt."""
        return int(round(self.T / self.dt))

    def times(self) -> np.ndarray:
        """Grid times t_k = k dt, k = 0..K."""
        return np.arange(self.n_steps + 1) * self.dt

    def replace(self, **changes) -> "Params":
        return dataclasses.replace(self, **changes)

    def with_split(self, observed_fraction: float) -> "Params":
        """Same total rate, with ``gamma_o = observed_fraction * gamma``."""
        g = self.gamma
        return self.replace(gamma_o=observed_fraction * g, gamma_u=(1.0 - observed_fraction) * g)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Params":
        if not isinstance(data, dict) or not data:
            raise ConfigError("configuration must be a non-empty JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("theta_grid_n", "seed"):
            if key in kwargs and isinstance(kwargs[key], float) and kwargs[key].is_integer():
                kwargs[key] = int(kwargs[key])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # operators in the |e>, |g> basis
    def hamiltonian(self) -> np.ndarray:
        return 0.5 * self.omega * SIGMA_X

    def c_observed(self) -> np.ndarray:
        return math.sqrt(self.gamma_o) * SIGMA_MINUS

    def c_unobserved(self) -> np.ndarray:
        return -1j * math.sqrt(self.gamma_u) * SIGMA_MINUS


@dataclass(frozen=True)
class BlochYZ:
    """Unit-trace Hermitian qubit operator with x = 0.

    ``kind='state'`` means a physical density matrix (radius at most one);
    ``kind='indefinite'`` allows any radius, as needed for the smoothed
    weak-value operator.
    """

    y: float
    z: float
    kind: str = "state"

    def __post_init__(self):
        if self.kind not in ("state", "indefinite"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == "state" and self.y * self.y + self.z * self.z > 1.0 + 1e-9:
            raise ValueError(f"Bloch radius exceeds one for a state: ({self.y}, {self.z})")

    @property
    def radius(self) -> float:
        return math.hypot(self.y, self.z)

    def matrix(self) -> np.ndarray:
        return 0.5 * (IDENTITY + self.y * SIGMA_Y + self.z * SIGMA_Z)

    @classmethod
    def from_matrix(cls, rho: np.ndarray, kind: str = "state") -> "BlochYZ":
        rho = np.asarray(rho, dtype=complex)
        tr = np.trace(rho).real
        y = np.trace(rho @ SIGMA_Y).real / tr
        z = np.trace(rho @ SIGMA_Z).real / tr
        return cls(float(y), float(z), kind)


@dataclass(frozen=True)
class PureAngle:
    """Pure state on the y-z great circle, stored as theta in [0, 2 pi)."""

    theta: float

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ValueError("theta must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def state(self) -> BlochYZ:
        return state_from_angle(self.theta)


@dataclass(frozen=True)
class UnknownRecord:
    """Homodyne record u_t on a uniform grid starting at ``t0``."""

    values: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("record must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("record contains non-finite entries")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def span(self) -> float:
        return len(self.values) * self.dt


@dataclass(frozen=True)
class ObservedBlock:
    """Observed record with no jumps on [0, T) and a single jump at T."""

    T: float

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("block duration must be positive")


@dataclass(frozen=True)
class Effect:
    """Effect operator ``alpha * 1 + beta * sigma_y + zeta * sigma_z``."""

    alpha: float
    beta: float
    zeta: float

    def matrix(self) -> np.ndarray:
        return self.alpha * IDENTITY + self.beta * SIGMA_Y + self.zeta * SIGMA_Z

    def is_positive(self, tol: float = 1e-12) -> bool:
        return self.alpha >= math.hypot(self.beta, self.zeta) - tol

    def scaled(self, k: float) -> "Effect":
        return Effect(k * self.alpha, k * self.beta, k * self.zeta)


def wrap_angle(theta):
    """Map angles into [0, 2 pi); works on scalars and arrays."""
    wrapped = np.mod(theta, TWO_PI)
    # np.mod can return exactly 2 pi for tiny negative inputs
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def state_from_angle(theta) -> BlochYZ:
    """Pure state with Bloch components ``(sin theta, cos theta)``."""
    if isinstance(theta, PureAngle):
        theta = theta.theta
    if not math.isfinite(theta):
        raise ValueError("theta must be finite")
    return BlochYZ(math.sin(theta), math.cos(theta), "state")


def angle_and_radius(state: BlochYZ) -> tuple[float, float]:
    """Polar form ``(theta, R)`` of a Bloch vector; R = 0 maps to theta = 0."""
    r = math.hypot(state.y, state.z)
    if r == 0.0:
        return 0.0, 0.0
    return wrap_angle(math.atan2(state.y, state.z)), r


def trace_product(a: BlochYZ, b: BlochYZ) -> float:
    """Tr(rho_a rho_b) for two operators on the y-z circle."""
    return 0.5 * (1.0 + a.y * b.y + a.z * b.z)


def angles_and_radii(y: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`angle_and_radius` for component arrays."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    r = np.hypot(y, z)
    theta = np.where(r == 0.0, 0.0, wrap_angle(np.arctan2(y, z)))
    return theta, r
