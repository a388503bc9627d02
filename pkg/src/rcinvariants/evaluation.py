"""Forecast skill: climate-normalized RMSE and valid prediction time (VPT)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dynamics import TimeSeries
from .errors import InvalidArgumentError
from .invariants import LyapunovSpectrum, kaplan_yorke_dimension
from .training import forecast_window

DEFAULT_EPSILON = 0.3


@dataclass(frozen=True)
class ClimateStats:
    mean: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if np.any(sigma <= 0):
            raise InvalidArgumentError("climate sigma components must be positive")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))

    @classmethod
    def from_series(cls, series: TimeSeries) -> ClimateStats:
        return cls(series.data.mean(axis=0), series.data.std(axis=0))


class Vpt(NamedTuple):
    value: float
    censored: bool


@dataclass(frozen=True)
class VptReport:
    vpt_values: np.ndarray
    censored: np.ndarray
    epsilon: float
    lambda1: float

    @property
    def mean(self) -> float:
        return float(np.mean(self.vpt_values))

    @property
    def median(self) -> float:
        return float(np.median(self.vpt_values))

    @property
    def n_censored(self) -> int:
        return int(np.sum(self.censored))


def normalized_rmse(forecast, truth, stats: ClimateStats) -> np.ndarray:
    """sqrt(mean_i ((u_i^f - u_i) / sigma_i)^2) per step."""
    f = np.asarray(getattr(forecast, "data", forecast), dtype=np.float64)
    u = np.asarray(getattr(truth, "data", truth), dtype=np.float64)
    if f.shape != u.shape or f.ndim != 2 or f.shape[1] != stats.sigma.shape[0]:
        raise InvalidArgumentError(
            f"forecast {f.shape}, truth {u.shape} and stats ({stats.sigma.shape[0]},) disagree")
    return np.sqrt(np.mean(((f - u) / stats.sigma) ** 2, axis=1))


def valid_prediction_time(rmse, epsilon: float, dt: float, lambda1: float) -> Vpt:
    """Time of the first step whose RMSE exceeds ``epsilon``, in Lyapunov times.

    If the threshold is never crossed the full horizon is returned with
    ``censored=True``.
    """
    rmse = np.asarray(rmse, dtype=np.float64)
    above = np.nonzero(rmse > epsilon)[0]
    if above.size == 0:
        return Vpt(rmse.size * dt * lambda1, True)
    return Vpt(int(above[0]) * dt * lambda1, False)


def vpt_distribution(model, test_series: TimeSeries, n_ics: int, sync_len: int,
                     horizon: int, epsilon: float, lambda1: float,
                     stats: ClimateStats, map_fn=map) -> VptReport:
    """VPT over ``n_ics`` non-overlapping windows of the test series.

    Windows are independent; ``map_fn`` (e.g. ``ThreadPoolExecutor.map``)
    may evaluate them concurrently, results keep window order.

    ``model`` needs ``synchronize(series) -> state`` and
    ``forecast(state, n_steps, dt) -> TimeSeries`` in physical units, as
    :class:`~rcinvariants.reservoir.TrainedModel` provides.
    """
    if n_ics < 1:
        raise InvalidArgumentError("n_ics must be >= 1")
    window = sync_len + 1 + horizon
    if n_ics * window > test_series.T:
        raise InvalidArgumentError(
            f"test series has {test_series.T} steps; {n_ics} windows of {window} need "
            f"{n_ics * window}")

    def one(i):
        sync_seg, truth = forecast_window(test_series, i * window, sync_len, horizon)
        r0 = model.synchronize(sync_seg)
        fc = model.forecast(r0, horizon, test_series.dt)
        return valid_prediction_time(normalized_rmse(fc, truth, stats), epsilon,
                                     test_series.dt, lambda1)

    results = list(map_fn(one, range(n_ics)))
    values = [v.value for v in results]
    censored = [v.censored for v in results]
    return VptReport(np.array(values), np.array(censored, dtype=bool), epsilon, lambda1)


@dataclass(frozen=True)
class InvariantComparison:
    exponent_errors: np.ndarray
    lambda1_relative_error: float
    ky_dimension_rc: float
    ky_dimension_truth: float

    @property
    def ky_dimension_error(self) -> float:
        return abs(self.ky_dimension_rc - self.ky_dimension_truth)


def compare_invariants(rc_spectrum: LyapunovSpectrum, truth_spectrum: LyapunovSpectrum
                       ) -> InvariantComparison:
    rc = np.asarray(rc_spectrum.exponents)
    tr = np.asarray(truth_spectrum.exponents)
    if rc.size == 0 or tr.size == 0:
        raise InvalidArgumentError("spectra must be non-empty")
    k = min(rc.size, tr.size)
    rel = abs(rc[0] - tr[0]) / abs(tr[0]) if tr[0] != 0 else float(abs(rc[0] - tr[0]))
    return InvariantComparison(rc[:k] - tr[:k], float(rel),
                               kaplan_yorke_dimension(rc), kaplan_yorke_dimension(tr))
