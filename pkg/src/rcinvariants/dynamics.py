"""Ground-truth chaotic systems and a fixed-step RK4 integrator.

Lorenz 96 is the main test system; Lorenz 63 is kept as a small oracle
system with well-known exponents.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _backend
from .errors import DivergenceError, InvalidArgumentError

BLOWUP_THRESHOLD = 1e6

LORENZ96 = "lorenz96"
LORENZ63 = "lorenz63"


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled multivariate trajectory; row t is the state at t*dt."""

    dt: float
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InvalidArgumentError(f"data must be 2-D (T, D), got shape {data.shape}")
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(data)):
            raise InvalidArgumentError("time series contains non-finite values")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def D(self) -> int:
        return self.data.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.T) * self.dt

    def __len__(self) -> int:
        return self.T

    def segment(self, start: int, stop: int) -> TimeSeries:
        return TimeSeries(self.dt, self.data[start:stop])

    def __eq__(self, other):
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.dt == other.dt and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True)
class SystemSpec:
    kind: str = LORENZ96
    dimension: int = 10
    forcing: float = 8.0
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0

    def __post_init__(self):
        if self.kind == LORENZ96:
            if self.dimension < 4:
                raise InvalidArgumentError(
                    f"Lorenz 96 needs dimension >= 4, got {self.dimension}")
        elif self.kind == LORENZ63:
            if self.dimension != 3:
                raise InvalidArgumentError("Lorenz 63 has dimension 3")
        else:
            raise InvalidArgumentError(f"unknown system kind {self.kind!r}")

    def rhs(self, u: np.ndarray) -> np.ndarray:
        if self.kind == LORENZ96:
            return l96_rhs(u, self.forcing)
        return l63_rhs(u, self.sigma, self.rho, self.beta)

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        if self.kind == LORENZ96:
            return l96_jacobian(u, self.forcing)
        return l63_jacobian(u, self.sigma, self.rho, self.beta)


@dataclass(frozen=True)
class IntegrationConfig:
    dt: float = 0.01
    n_steps: int = 10_000
    n_transient: int = 2_000
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidArgumentError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 0 or self.n_transient < 0:
            raise InvalidArgumentError("n_steps and n_transient must be non-negative")


def _check_l96_state(state) -> np.ndarray:
    u = np.asarray(state, dtype=np.float64)
    if u.ndim != 1 or u.shape[0] < 4:
        raise InvalidArgumentError(
            f"Lorenz 96 state must be a vector of length >= 4, got shape {u.shape}")
    return u


def l96_rhs(state, F: float) -> np.ndarray:
    """du_k/dt = -u_{k-1} (u_{k-2} - u_{k+1}) - u_k + F, indices cyclic."""
    u = _check_l96_state(state)
    return -np.roll(u, 1) * (np.roll(u, 2) - np.roll(u, -1)) - u + F


def l96_jacobian(state, F: float) -> np.ndarray:
    u = _check_l96_state(state)
    D = u.shape[0]
    k = np.arange(D)
    J = np.zeros((D, D))
    J[k, k] = -1.0
    J[k, (k - 1) % D] = np.roll(u, -1) - np.roll(u, 2)
    J[k, (k - 2) % D] = -np.roll(u, 1)
    J[k, (k + 1) % D] = np.roll(u, 1)
    return J


def l63_rhs(state, sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0):
    x, y, z = np.asarray(state, dtype=np.float64)
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def l63_jacobian(state, sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0):
    x, y, z = np.asarray(state, dtype=np.float64)
    return np.array([
        [-sigma, sigma, 0.0],
        [rho - z, -1.0, -x],
        [y, x, -beta],
    ])


def rk4_step(rhs: Callable[[np.ndarray], np.ndarray], state, dt: float,
             step: int | None = None) -> np.ndarray:
    """One classical Runge-Kutta step.

    ``step`` is only used to label the error if the result is non-finite.
    """
    u = np.asarray(state, dtype=np.float64)
    k1 = rhs(u)
    k2 = rhs(u + 0.5 * dt * k1)
    k3 = rhs(u + 0.5 * dt * k2)
    k4 = rhs(u + dt * k3)
    out = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise DivergenceError("non-finite RK4 update", step)
    return out


def random_initial_condition(spec: SystemSpec, seed: int) -> np.ndarray:
    """Uniform draw in [F-1, F+1] per site (L96) or a unit box near (1, 1, 1) (L63)."""
    rng = np.random.default_rng(seed)
    if spec.kind == LORENZ96:
        return spec.forcing + rng.uniform(-1.0, 1.0, spec.dimension)
    return 1.0 + rng.uniform(-0.5, 0.5, 3)


def generate_trajectory(spec: SystemSpec, u0, cfg: IntegrationConfig) -> TimeSeries:
    """Integrate ``n_transient + n_steps`` RK4 steps and keep the last ``n_steps``."""
    u0 = np.ascontiguousarray(u0, dtype=np.float64)
    if u0.shape != (spec.dimension,):
        raise InvalidArgumentError(
            f"u0 has shape {u0.shape}, expected ({spec.dimension},)")
    if not np.all(np.isfinite(u0)):
        raise InvalidArgumentError("u0 must be finite")
    if spec.kind == LORENZ96:
        data, fail = _backend.kernels.l96_trajectory(
            u0, float(spec.forcing), float(cfg.dt), int(cfg.n_transient), int(cfg.n_steps))
        if fail >= 0:
            raise DivergenceError("trajectory diverged (|u| > 1e6)", int(fail))
        return TimeSeries(cfg.dt, np.asarray(data))

    u = u0.copy()
    data = np.empty((cfg.n_steps, spec.dimension))
    for step in range(cfg.n_transient + cfg.n_steps):
        u = rk4_step(spec.rhs, u, cfg.dt, step)
        if np.max(np.abs(u)) > BLOWUP_THRESHOLD:
            raise DivergenceError("trajectory diverged (|u| > 1e6)", step)
        if step >= cfg.n_transient:
            data[step - cfg.n_transient] = u
    return TimeSeries(cfg.dt, data)
