"""Reservoir computer: construction, open-loop driving, ridge readout,
closed-loop forecasting and the autonomous-map Jacobian.

The state update is

    r(t) = a * tanh(A r(t-1) + W_in u(t-1) + b) + (1 - a) * r(t-1)

with leak rate ``a`` and scalar bias ``b``. In closed loop the input is
replaced by the readout ``W_out r(t-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import _backend
from .dynamics import TimeSeries
from .errors import DivergenceError, IllConditionedError, InvalidArgumentError
from .invariants import LeConfig, LyapunovSpectrum, _finish, initial_tangent_basis

MAX_BUILD_RETRIES = 5
DEFAULT_WASHOUT = 200


@dataclass(frozen=True)
class ReservoirParams:
    N: int = 400
    rho_A: float = 0.02
    rho_SR: float = 0.9
    sigma: float = 0.5
    sigma_b: float = 0.0
    leak_rate: float = 1.0
    beta: float = 1e-6

    def __post_init__(self):
        if self.N < 1:
            raise InvalidArgumentError("N must be positive")
        if not 0 < self.rho_A <= 1:
            raise InvalidArgumentError(f"rho_A must be in (0, 1], got {self.rho_A}")
        if not self.rho_SR > 0:
            raise InvalidArgumentError(f"rho_SR must be positive, got {self.rho_SR}")
        if not self.sigma > 0:
            raise InvalidArgumentError(f"sigma must be positive, got {self.sigma}")
        if not 0 <= self.leak_rate <= 1:
            raise InvalidArgumentError(f"leak_rate must be in [0, 1], got {self.leak_rate}")
        if not self.beta >= 0:
            raise InvalidArgumentError(f"beta must be non-negative, got {self.beta}")
        if not np.isfinite(self.sigma_b):
            raise InvalidArgumentError("sigma_b must be finite")

    def replace(self, **changes) -> ReservoirParams:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ReservoirParams(**values)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True, eq=False)
class Reservoir:
    A: sp.csr_matrix
    W_in: np.ndarray
    params: ReservoirParams
    seed: int

    @property
    def N(self) -> int:
        return self.W_in.shape[0]

    @property
    def D(self) -> int:
        return self.W_in.shape[1]

    def kernel_args(self):
        """(indptr, indices, data, W_in, bias, leak) in the layout the kernels expect."""
        return (self.A.indptr, self.A.indices, self.A.data, self.W_in,
                float(self.params.sigma_b), float(self.params.leak_rate))

    def __eq__(self, other):
        if not isinstance(other, Reservoir):
            return NotImplemented
        return (self.params == other.params and self.seed == other.seed
                and np.array_equal(self.W_in, other.W_in)
                and (self.A != other.A).nnz == 0)

    __hash__ = None


@dataclass(frozen=True)
class Standardizer:
    """Per-component affine map to zero mean, unit variance."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> Standardizer:
        data = np.asarray(data, dtype=np.float64)
        scale = data.std(axis=0)
        scale[scale == 0] = 1.0
        return cls(data.mean(axis=0), scale)

    @classmethod
    def identity(cls, D: int) -> Standardizer:
        return cls(np.zeros(D), np.ones(D))

    def transform(self, x):
        if isinstance(x, TimeSeries):
            return TimeSeries(x.dt, (x.data - self.mean) / self.scale)
        return (np.asarray(x) - self.mean) / self.scale

    def inverse(self, x):
        if isinstance(x, TimeSeries):
            return TimeSeries(x.dt, x.data * self.scale + self.mean)
        return np.asarray(x) * self.scale + self.mean


def spectral_radius(A, n_iter: int = 1000, tol: float = 1e-6, block: int = 8,
                    seed: int = 0) -> float:
    """Largest eigenvalue modulus by block power iteration.

    A single power vector does not settle when the dominant eigenvalues are a
    complex pair, so a small block is iterated and the Ritz values of the
    projected matrix are checked for convergence.
    """
    n = A.shape[0]
    p = min(block, n)
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    prev = None
    for it in range(1, n_iter + 1):
        Z = A @ Q
        if not np.any(Z):
            return 0.0
        if it % 10 == 0 or it == n_iter:
            H = Q.T @ Z
            est = float(np.max(np.abs(np.linalg.eigvals(H))))
            if prev is not None and abs(est - prev) <= tol * max(est, 1e-300):
                return est
            prev = est
        Q, _ = np.linalg.qr(Z)
    return prev if prev is not None else 0.0


def _draw_adjacency(N: int, density: float, rng: np.random.Generator) -> sp.csr_matrix:
    mask = rng.random((N, N)) < density
    values = rng.uniform(-1.0, 1.0, size=(N, N))
    A = sp.csr_matrix(np.where(mask, values, 0.0))
    A.indptr = A.indptr.astype(np.int32)
    A.indices = A.indices.astype(np.int32)
    return A


def build_reservoir(params: ReservoirParams, D: int, seed: int) -> Reservoir:
    """Random sparse adjacency rescaled to ``rho_SR`` plus dense input weights."""
    if params.N < 10:
        raise InvalidArgumentError(f"reservoir size must be >= 10, got {params.N}")
    if D < 1:
        raise InvalidArgumentError("input dimension must be >= 1")
    for attempt in range(MAX_BUILD_RETRIES + 1):
        rng = np.random.default_rng(seed + attempt)
        A = _draw_adjacency(params.N, params.rho_A, rng)
        radius = spectral_radius(A, seed=seed + attempt)
        if radius > 1e-8:
            break
    else:
        raise InvalidArgumentError(
            f"adjacency spectral radius numerically zero after {MAX_BUILD_RETRIES} retries")
    A = A * (params.rho_SR / radius)
    A.indptr = A.indptr.astype(np.int32)
    A.indices = A.indices.astype(np.int32)
    W_in = rng.uniform(-params.sigma, params.sigma, size=(params.N, D))
    return Reservoir(A, np.ascontiguousarray(W_in), params, seed)


def drive(res: Reservoir, r_prev, u_prev) -> np.ndarray:
    r_prev = np.asarray(r_prev, dtype=np.float64)
    u_prev = np.asarray(u_prev, dtype=np.float64)
    if not (np.all(np.isfinite(r_prev)) and np.all(np.isfinite(u_prev))):
        raise InvalidArgumentError("non-finite reservoir state or input")
    a = res.params.leak_rate
    z = res.A @ r_prev + res.W_in @ u_prev + res.params.sigma_b
    return a * np.tanh(z) + (1.0 - a) * r_prev


def _drive_states(res: Reservoir, r_init, U) -> np.ndarray:
    U = np.ascontiguousarray(U, dtype=np.float64)
    if not np.all(np.isfinite(U)):
        raise InvalidArgumentError("non-finite input series")
    r_init = np.ascontiguousarray(r_init, dtype=np.float64)
    return _backend.kernels.rc_drive(*res.kernel_args(), r_init, U)


def synchronize(res: Reservoir, series: TimeSeries, r_init=None) -> np.ndarray:
    """Drive open-loop through the whole series and return the final state."""
    r_init = np.zeros(res.N) if r_init is None else np.asarray(r_init, dtype=np.float64)
    if series.T == 0:
        return r_init.copy()
    return _drive_states(res, r_init, series.data)[-1].copy()


def collect_states(res: Reservoir, series: TimeSeries, washout: int = DEFAULT_WASHOUT,
                   r_init=None) -> tuple[np.ndarray, np.ndarray]:
    """Reservoir states (N x T') and aligned targets (D x T'), T' = T - washout.

    Column t of the states has consumed inputs u(0..t-1) and is paired with
    target u(t), so ``W_out @ states`` approximates the targets.
    """
    if not 0 <= washout < series.T:
        raise InvalidArgumentError(f"washout {washout} must be in [0, T={series.T})")
    r_init = np.zeros(res.N) if r_init is None else np.asarray(r_init, dtype=np.float64)
    driven = _drive_states(res, r_init, series.data[:-1])
    states = np.vstack([r_init[None, :], driven])
    return states[washout:].T.copy(), series.data[washout:].T.copy()


def train_readout(states, targets, beta: float) -> np.ndarray:
    """Ridge solution W_out = U S^T (S S^T + beta I)^-1 via Cholesky."""
    S = np.atleast_2d(np.asarray(states, dtype=np.float64))
    U = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if S.shape[1] < 1 or S.shape[1] != U.shape[1]:
        raise InvalidArgumentError(
            f"states {S.shape} and targets {U.shape} must share a non-empty time axis")
    if beta < 0:
        raise InvalidArgumentError("beta must be non-negative")
    G = S @ S.T
    G[np.diag_indices_from(G)] += beta
    try:
        c, low = scipy.linalg.cho_factor(G, lower=False, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(
            "normal equations are singular; use beta > 0") from exc
    d = np.abs(np.diag(c))
    if beta == 0 and d.min() <= np.sqrt(np.finfo(float).eps * G.shape[0]) * d.max():
        raise IllConditionedError(
            f"normal equations are ill-conditioned (beta={beta}); use beta > 0")
    W_out = scipy.linalg.cho_solve((c, low), S @ U.T).T
    if not np.all(np.isfinite(W_out)):
        raise IllConditionedError("readout has non-finite entries; use beta > 0")
    return np.ascontiguousarray(W_out)


def forecast(res: Reservoir, W_out, r0, n_steps: int, dt: float = 1.0
             ) -> tuple[TimeSeries, np.ndarray]:
    """Closed-loop forecast from a synchronized state ``r0``.

    Returns the forecast series (row t is ``W_out r(t+1)``) and the final
    reservoir state.
    """
    W_out = np.ascontiguousarray(W_out, dtype=np.float64)
    r0 = np.ascontiguousarray(r0, dtype=np.float64)
    out, r_final, fail = _backend.kernels.rc_forecast(
        res.A.indptr, res.A.indices, res.A.data, res.W_in, W_out,
        float(res.params.sigma_b), float(res.params.leak_rate), r0, int(n_steps))
    if fail >= 0:
        raise DivergenceError("forecast became non-finite", int(fail))
    return TimeSeries(dt, np.asarray(out)), np.asarray(r_final)


def autonomous_step(res: Reservoir, W_out, r) -> np.ndarray:
    return drive(res, r, np.asarray(W_out) @ r)


def rc_jacobian(res: Reservoir, W_out, r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    a = res.params.leak_rate
    M = res.A.toarray() + res.W_in @ np.asarray(W_out)
    z = M @ r + res.params.sigma_b
    return a * (1.0 - np.tanh(z) ** 2)[:, None] * M + (1.0 - a) * np.eye(res.N)


def rc_lyapunov_spectrum(res: Reservoir, W_out, r0, cfg: LeConfig) -> LyapunovSpectrum:
    """Leading exponents of the autonomous reservoir map, per unit time ``cfg.dt``.

    Tangent vectors are propagated matrix-free through the kernel backend.
    """
    k = cfg.n_exponents or res.N
    Q0 = initial_tangent_basis(res.N, k, cfg.seed)
    sums, _, fail, min_rdiag = _backend.kernels.rc_lyapunov(
        res.A.indptr, res.A.indices, res.A.data, res.W_in,
        np.ascontiguousarray(W_out, dtype=np.float64),
        float(res.params.sigma_b), float(res.params.leak_rate),
        np.ascontiguousarray(r0, dtype=np.float64), Q0,
        int(cfg.transient), int(cfg.n_steps), int(cfg.qr_interval))
    return _finish(sums, fail, min_rdiag, cfg, cfg.transient, cfg.dt, "reservoir orbit")


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """A reservoir, its readout, and the input normalization it was trained with."""

    reservoir: Reservoir
    W_out: np.ndarray
    standardizer: Standardizer
    r_final: np.ndarray = field(repr=False)

    def synchronize(self, series: TimeSeries) -> np.ndarray:
        return synchronize(self.reservoir, self.standardizer.transform(series))

    def forecast(self, r0, n_steps: int, dt: float) -> TimeSeries:
        """Forecast in physical (un-normalized) units."""
        out, _ = forecast(self.reservoir, self.W_out, r0, n_steps, dt)
        return self.standardizer.inverse(out)

    def lyapunov_spectrum(self, r0, cfg: LeConfig) -> LyapunovSpectrum:
        return rc_lyapunov_spectrum(self.reservoir, self.W_out, r0, cfg)


def train_model(params: ReservoirParams, series: TimeSeries, seed: int,
                washout: int = DEFAULT_WASHOUT,
                standardizer: Standardizer | None = None) -> TrainedModel:
    """Build, drive and fit a reservoir on ``series`` (physical units)."""
    standardizer = standardizer or Standardizer.fit(series.data)
    res = build_reservoir(params, series.D, seed)
    z = standardizer.transform(series)
    states, targets = collect_states(res, z, washout)
    W_out = train_readout(states, targets, params.beta)
    # state after consuming the last training sample, ready to forecast onward
    r_last = drive(res, states[:, -1], z.data[-1])
    return TrainedModel(res, W_out, standardizer, r_last)
