"""Dynamical invariants: Lyapunov spectra, Kaplan-Yorke dimension, and a
data-driven largest-exponent estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from . import _backend
from .dynamics import LORENZ96, SystemSpec, TimeSeries
from .errors import (ConditioningError, DegenerateDataError, DivergenceError,
                     InvalidArgumentError)

# R-diagonal entries at or below this are treated as a collapsed tangent basis.
RDIAG_FLOOR = np.finfo(np.float64).tiny
ZERO_EXPONENT_TOL = 0.02


@dataclass(frozen=True)
class LyapunovSpectrum:
    exponents: np.ndarray
    n_steps_used: int
    dt: float

    def __post_init__(self):
        ex = np.asarray(self.exponents, dtype=np.float64).ravel()
        if not np.all(np.isfinite(ex)):
            raise InvalidArgumentError("Lyapunov exponents must be finite")
        if np.any(np.diff(ex) > 0):
            raise InvalidArgumentError("Lyapunov exponents must be sorted descending")
        ex.setflags(write=False)
        object.__setattr__(self, "exponents", ex)

    def __len__(self):
        return len(self.exponents)

    @property
    def largest(self) -> float:
        return float(self.exponents[0])

    def sign_counts(self, tol: float = ZERO_EXPONENT_TOL) -> tuple[int, int, int]:
        """(positive, zero, negative) counts with ``|lambda| < tol`` counted as zero."""
        ex = self.exponents
        return int(np.sum(ex > tol)), int(np.sum(np.abs(ex) < tol)), int(np.sum(ex < -tol))

    def __eq__(self, other):
        if not isinstance(other, LyapunovSpectrum):
            return NotImplemented
        return (np.array_equal(self.exponents, other.exponents)
                and self.n_steps_used == other.n_steps_used and self.dt == other.dt)

    __hash__ = None


@dataclass(frozen=True)
class LeConfig:
    """Settings for the QR (Benettin) procedure.

    ``n_transient=None`` discards 10% of ``n_steps``. ``n_exponents=None``
    computes the full spectrum. ``seed`` fixes the random initial tangent basis.
    """

    n_steps: int = 100_000
    n_transient: int | None = None
    qr_interval: int = 10
    n_exponents: int | None = None
    dt: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 1:
            raise InvalidArgumentError("n_steps must be >= 1")
        if self.qr_interval < 1:
            raise InvalidArgumentError("qr_interval must be >= 1")
        if self.n_transient is not None and self.n_transient < 0:
            raise InvalidArgumentError("n_transient must be non-negative")
        if self.n_exponents is not None and self.n_exponents < 1:
            raise InvalidArgumentError("n_exponents must be >= 1")
        if not self.dt > 0:
            raise InvalidArgumentError("dt must be positive")

    @property
    def transient(self) -> int:
        return self.n_steps // 10 if self.n_transient is None else self.n_transient


def initial_tangent_basis(dim: int, k: int, seed: int) -> np.ndarray:
    """k random orthonormal vectors of length ``dim``, returned as rows."""
    if k > dim:
        raise InvalidArgumentError(f"cannot request {k} exponents of a {dim}-D system")
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((dim, k)))
    return np.ascontiguousarray(Q.T)


def _accumulated_steps(cfg: LeConfig, n_transient: int) -> int:
    # log-R sums start at the last re-orthonormalization at or before the transient end
    start = (n_transient // cfg.qr_interval) * cfg.qr_interval
    return n_transient + cfg.n_steps - start


def _finish(sums, fail, min_rdiag, cfg: LeConfig, n_transient: int, dt: float,
            what: str) -> LyapunovSpectrum:
    if fail >= 0:
        raise DivergenceError(f"{what} diverged during Lyapunov computation", int(fail))
    if not min_rdiag > RDIAG_FLOOR:
        raise ConditioningError(
            f"tangent basis collapsed (min R diagonal {min_rdiag:.3g}); "
            "reduce qr_interval")
    steps = _accumulated_steps(cfg, n_transient)
    ex = np.sort(np.asarray(sums) / (steps * dt))[::-1]
    return LyapunovSpectrum(ex, cfg.n_steps, dt)


def lyapunov_spectrum_flow(rhs: Callable, jacobian: Callable, u0, cfg: LeConfig
                           ) -> LyapunovSpectrum:
    """QR method for a generic ODE, tangent vectors pushed through the RK4 stages."""
    u = np.array(u0, dtype=np.float64)
    D = u.shape[0]
    k = cfg.n_exponents or D
    V = initial_tangent_basis(D, k, cfg.seed).T.copy()
    n_tr = cfg.transient
    total = n_tr + cfg.n_steps
    dt = cfg.dt
    sums = np.zeros(k)
    min_rdiag = np.inf
    for step in range(total):
        k1 = rhs(u)
        K1 = jacobian(u) @ V
        u2 = u + 0.5 * dt * k1
        k2 = rhs(u2)
        K2 = jacobian(u2) @ (V + 0.5 * dt * K1)
        u3 = u + 0.5 * dt * k2
        k3 = rhs(u3)
        K3 = jacobian(u3) @ (V + 0.5 * dt * K2)
        u4 = u + dt * k3
        k4 = rhs(u4)
        K4 = jacobian(u4) @ (V + dt * K3)
        u = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        V = V + dt / 6.0 * (K1 + 2 * K2 + 2 * K3 + K4)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > 1e6:
            raise DivergenceError("base trajectory diverged during Lyapunov computation", step)
        if (step + 1) % cfg.qr_interval == 0 or step + 1 == total:
            V, rdiag = _backend._fallback._reorthonormalize(V)
            if step >= n_tr:
                min_rdiag = min(min_rdiag, rdiag.min())
                if rdiag.min() > 0:
                    sums += np.log(rdiag)
    return _finish(sums, -1, min_rdiag, cfg, n_tr, dt, "base trajectory")


def lyapunov_spectrum_ode(spec, u0, cfg: LeConfig) -> LyapunovSpectrum:
    """Lyapunov spectrum of an ODE system in units of 1/time.

    ``spec`` is a :class:`SystemSpec` or any object exposing ``rhs(u)`` and
    ``jacobian(u)``. Lorenz 96 runs through the kernel backend.
    """
    u0 = np.ascontiguousarray(u0, dtype=np.float64)
    D = u0.shape[0]
    k = cfg.n_exponents or D
    if k > D:
        raise InvalidArgumentError(f"n_exponents={k} exceeds system dimension {D}")
    if isinstance(spec, SystemSpec) and spec.kind == LORENZ96:
        Q0 = initial_tangent_basis(D, k, cfg.seed)
        sums, _, fail, min_rdiag = _backend.kernels.l96_lyapunov(
            u0, float(spec.forcing), float(cfg.dt), Q0, int(cfg.transient),
            int(cfg.n_steps), int(cfg.qr_interval))
        return _finish(sums, fail, min_rdiag, cfg, cfg.transient, cfg.dt, "base trajectory")
    return lyapunov_spectrum_flow(spec.rhs, spec.jacobian, u0, cfg)


def lyapunov_spectrum_map(jacobian_at: Callable, step: Callable, r0, cfg: LeConfig
                          ) -> LyapunovSpectrum:
    """QR method for a discrete map; per-step exponents are divided by ``cfg.dt``."""
    r = np.array(r0, dtype=np.float64)
    dim = r.shape[0]
    k = cfg.n_exponents or dim
    V = initial_tangent_basis(dim, k, cfg.seed).T.copy()
    n_tr = cfg.transient
    total = n_tr + cfg.n_steps
    sums = np.zeros(k)
    min_rdiag = np.inf
    for t in range(total):
        V = np.asarray(jacobian_at(r)) @ V
        r = np.asarray(step(r), dtype=np.float64)
        if not np.all(np.isfinite(r)):
            raise DivergenceError("map orbit went non-finite", t)
        if (t + 1) % cfg.qr_interval == 0 or t + 1 == total:
            V, rdiag = _backend._fallback._reorthonormalize(V)
            if t >= n_tr:
                min_rdiag = min(min_rdiag, rdiag.min())
                if rdiag.min() > 0:
                    sums += np.log(rdiag)
    return _finish(sums, -1, min_rdiag, cfg, n_tr, cfg.dt, "map orbit")


def kaplan_yorke_dimension(spectrum) -> float:
    """Kaplan-Yorke dimension of a descending spectrum.

    Uses the largest index whose partial sum is non-negative. Returns 0 when
    the top exponent is negative and the spectrum length when the partial
    sums never go negative.
    """
    ex = np.asarray(getattr(spectrum, "exponents", spectrum), dtype=np.float64).ravel()
    if ex.size == 0:
        raise InvalidArgumentError("empty spectrum")
    if ex[0] < 0:
        return 0.0
    csum = np.cumsum(ex)
    ky_index = int(np.sum(csum >= 0))
    if ky_index >= ex.size:
        return float(ex.size)
    return ky_index + csum[ky_index - 1] / abs(ex[ky_index])


# --------------------------------------------------------------------------
# Largest exponent from data (Rosenstein)
# --------------------------------------------------------------------------

def first_autocorrelation_zero(x: np.ndarray, max_lag: int | None = None) -> int:
    """First lag at which the component-averaged autocorrelation drops below 0."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    x = x - x.mean(axis=0)
    T = x.shape[0]
    max_lag = min(max_lag or T // 2, T - 1)
    nfft = 1 << int(np.ceil(np.log2(2 * T)))
    f = np.fft.rfft(x, nfft, axis=0)
    ac = np.fft.irfft(f * np.conj(f), nfft, axis=0)[: max_lag + 1]
    var = ac[0]
    ac = np.mean(ac[:, var > 0] / var[var > 0], axis=1)
    below = np.nonzero(ac[1:] < 0)[0]
    return int(below[0] + 1) if below.size else max_lag


def delay_embed(x: np.ndarray, embed_dim: int, delay: int) -> np.ndarray:
    """Stack ``embed_dim`` delayed copies of the (possibly vector) observation."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0] - (embed_dim - 1) * delay
    if n <= 0:
        raise InvalidArgumentError("series too short for the requested embedding")
    return np.concatenate([x[i * delay: i * delay + n] for i in range(embed_dim)], axis=1)


def _nearest_outside_window(E: np.ndarray, n_ref: int, idx: np.ndarray,
                            theiler_window: int) -> np.ndarray:
    tree = cKDTree(E[:n_ref])
    nn = np.full(idx.size, -1)
    todo = np.arange(idx.size)
    kq = 8
    while todo.size and kq <= n_ref:
        dist, j = tree.query(E[idx[todo]], k=kq)
        ok = (np.abs(j - idx[todo][:, None]) > theiler_window) & (dist > 0) & (j < n_ref)
        has = ok.any(axis=1)
        first = np.argmax(ok, axis=1)
        nn[todo[has]] = j[has, first[has]]
        todo = todo[~has]
        kq *= 4
    return nn


def divergence_curve(series: TimeSeries, embed_dim: int, delay: int,
                     theiler_window: int, horizon: int, max_points: int = 20_000
                     ) -> np.ndarray:
    """Mean log separation of nearest-neighbour pairs after k = 0..horizon-1 steps."""
    E = delay_embed(series.data, embed_dim, delay)
    n_ref = E.shape[0] - horizon
    if n_ref <= 2 * theiler_window + 2:
        raise InvalidArgumentError("series too short for the requested embedding and fit window")
    stride = max(1, n_ref // max_points)
    idx = np.arange(0, n_ref, stride)
    nn = _nearest_outside_window(E, n_ref, idx, theiler_window)
    keep = nn >= 0
    if not np.any(keep):
        raise DegenerateDataError("no admissible nearest neighbours")
    i0, j0 = idx[keep], nn[keep]
    tiny = np.finfo(np.float64).tiny
    return np.array([
        np.mean(np.log(np.linalg.norm(E[i0 + s] - E[j0 + s], axis=1) + tiny))
        for s in range(horizon)
    ])


def default_fit_range(curve: np.ndarray, lo: float = 0.1, hi: float = 0.5) -> tuple[int, int]:
    """Steps where the curve has risen between ``lo`` and ``hi`` of its total rise."""
    c0, cmax = curve[0], curve.max()
    rise = cmax - c0
    if rise <= 0:
        return 0, len(curve)
    a = int(np.argmax(curve >= c0 + lo * rise))
    b = int(np.argmax(curve >= c0 + hi * rise))
    if b - a < 2:
        return 0, len(curve)
    return a, b


def largest_le_from_data(series: TimeSeries, embed_dim: int | None = None,
                         delay: int | None = None, theiler_window: int | None = None,
                         fit_range: tuple[int, int] | None = None,
                         horizon: int | None = None) -> float:
    """Rosenstein estimate of the largest Lyapunov exponent, per unit time.

    Defaults: a multivariate series is used as its own embedding
    (``embed_dim=1``), a scalar series gets ``embed_dim=10``; the delay is the
    first zero of the autocorrelation and the Theiler window is
    ``delay * embed_dim``. The slope is fitted where the mean log divergence
    has risen by 10-50% of its total rise unless ``fit_range`` is given.
    """
    x = series.data
    if x.shape[0] < 3 or np.all(np.ptp(x, axis=0) == 0):
        raise DegenerateDataError("series is constant")
    if embed_dim is None:
        embed_dim = 1 if series.D > 1 else 10
    if delay is None:
        delay = first_autocorrelation_zero(x, max_lag=min(x.shape[0] // 4, 5000))
    if theiler_window is None:
        theiler_window = delay * embed_dim
    if horizon is None:
        horizon = fit_range[1] if fit_range is not None else 8 * max(delay, 10)
    if fit_range is not None:
        a, b = fit_range
        if not 0 <= a < b <= horizon:
            raise InvalidArgumentError(f"fit_range {fit_range} outside [0, {horizon}]")
    if x.shape[0] <= (embed_dim - 1) * delay + horizon + 2 * theiler_window + 2:
        raise InvalidArgumentError("series too short for embedding and fit window")
    curve = divergence_curve(series, embed_dim, delay, theiler_window, horizon)
    a, b = fit_range if fit_range is not None else default_fit_range(curve)
    steps = np.arange(a, b) * series.dt
    return float(np.polyfit(steps, curve[a:b], 1)[0])
