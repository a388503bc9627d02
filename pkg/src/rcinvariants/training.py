"""Invariant-constrained loss and hyperparameter search for reservoir computers.

The loss has two parts: a squared mismatch between the target invariants
(leading Lyapunov exponents and/or Kaplan-Yorke dimension) and those of the
autonomous reservoir, plus an exponentially down-weighted squared forecast
error summed over M validation forecasts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cmaes import LOG10, CmaEsConfig, CmaEsResult, Dimension, SearchSpace, cma_es_minimize
from .dynamics import TimeSeries
from .errors import (ConditioningError, DivergenceError, IllConditionedError,
                     InvalidArgumentError)
from .invariants import LeConfig, kaplan_yorke_dimension
from .reservoir import (DEFAULT_WASHOUT, ReservoirParams, Standardizer, TrainedModel,
                        train_model)

DIVERGENCE_PENALTY = 1e6

# order used for CMA-ES vectors and the history CSV
PARAM_NAMES = ("rho_A", "rho_SR", "sigma", "sigma_b", "leak_rate", "beta")


@dataclass(frozen=True)
class InvariantTargets:
    leading_les: np.ndarray | None = None
    fractal_dimension: float | None = None

    def __post_init__(self):
        if self.leading_les is not None:
            les = np.asarray(self.leading_les, dtype=np.float64).ravel()
            if les.size == 0:
                les = None
            elif np.any(np.diff(les) > 0):
                raise InvalidArgumentError("leading_les must be sorted descending")
            object.__setattr__(self, "leading_les", les)
        if self.fractal_dimension is not None:
            object.__setattr__(self, "fractal_dimension", float(self.fractal_dimension))

    @property
    def k(self) -> int:
        return 0 if self.leading_les is None else len(self.leading_les)

    @property
    def is_empty(self) -> bool:
        return self.leading_les is None and self.fractal_dimension is None


@dataclass(frozen=True)
class LossConfig:
    """Weights and windows of the training loss.

    ``epsilon2=None`` scales the forecast term by ``1 / (M * n_t * D)`` (one
    over the number of squared-error summands) so it is O(1) like the
    normalized invariant term. With ``normalize_invariants`` the exponents
    are divided by the target's ``|lambda_1|`` and the dimension by the
    target dimension before differencing.
    """

    epsilon1: float = 1.0
    epsilon2: float | None = None
    t_i: int = 0
    t_f: int = 440
    M: int = 7
    rc_le_steps: int = 5000
    rc_le_transient: int = 500
    normalize_invariants: bool = True
    sync_len: int = 200
    washout: int = DEFAULT_WASHOUT
    divergence_penalty: float = DIVERGENCE_PENALTY

    def __post_init__(self):
        if self.epsilon1 < 0 or (self.epsilon2 is not None and self.epsilon2 < 0):
            raise InvalidArgumentError("epsilon weights must be non-negative")
        if self.epsilon1 + (1.0 if self.epsilon2 is None else self.epsilon2) <= 0:
            raise InvalidArgumentError("epsilon1 + epsilon2 must be positive")
        if not 0 <= self.t_i < self.t_f:
            raise InvalidArgumentError("need 0 <= t_i < t_f")
        if self.M < 1:
            raise InvalidArgumentError("M must be >= 1")
        if self.rc_le_steps < 1 or self.rc_le_transient < 0:
            raise InvalidArgumentError("invalid reservoir Lyapunov step counts")
        if self.sync_len < 1 or self.washout < 0:
            raise InvalidArgumentError("invalid sync_len / washout")


def exponential_weights(t_i: int, t_f: int) -> np.ndarray:
    t = np.arange(t_i, t_f + 1)
    return np.exp(-(t - t_i) / (t_f - t_i))


def invariant_mismatch(targets: InvariantTargets, rc: InvariantTargets,
                       normalize: bool = True) -> float:
    """Squared distance over whichever invariants the targets provide."""
    total = 0.0
    if targets.leading_les is not None:
        if rc.leading_les is None or len(rc.leading_les) < targets.k:
            raise InvalidArgumentError(f"reservoir invariants need {targets.k} exponents")
        diff = targets.leading_les - rc.leading_les[: targets.k]
        if normalize and targets.leading_les[0] != 0:
            diff = diff / abs(targets.leading_les[0])
        total += float(diff @ diff)
    if targets.fractal_dimension is not None:
        if rc.fractal_dimension is None:
            raise InvalidArgumentError("reservoir invariants lack a fractal dimension")
        diff = targets.fractal_dimension - rc.fractal_dimension
        if normalize and targets.fractal_dimension != 0:
            diff /= targets.fractal_dimension
        total += diff * diff
    return total


def forecast_error(cfg: LossConfig, forecasts: Sequence, truths: Sequence) -> float:
    """Exponentially weighted squared error summed over forecasts, steps and components."""
    if len(forecasts) != len(truths) or len(forecasts) == 0:
        raise InvalidArgumentError(
            f"need equal, non-zero numbers of forecasts and truths "
            f"({len(forecasts)} vs {len(truths)})")
    n_t = cfg.t_f - cfg.t_i + 1
    w = exponential_weights(cfg.t_i, cfg.t_f)
    total = 0.0
    for fc, tr in zip(forecasts, truths):
        f = np.asarray(getattr(fc, "data", fc), dtype=np.float64)
        u = np.asarray(getattr(tr, "data", tr), dtype=np.float64)
        if f.ndim == 1:
            f, u = f[:, None], u[:, None]
        if f.shape != u.shape or f.shape[0] != n_t:
            raise InvalidArgumentError(
                f"forecast {f.shape} / truth {u.shape} must both cover {n_t} steps")
        total += float(w @ np.sum((f - u) ** 2, axis=1))
    return total


def compute_loss(cfg: LossConfig, targets: InvariantTargets, rc_invariants: InvariantTargets,
                 forecasts: Sequence, truths: Sequence) -> float:
    """epsilon1 * |C_u - C_RC|^2 + epsilon2 * sum_k sum_t |u_f - u|^2 exp(-(t-t_i)/(t_f-t_i)).

    Forecasts and truths hold rows for steps t_i..t_f.
    """
    inv = 0.0
    if cfg.epsilon1 > 0 and not targets.is_empty:
        inv = invariant_mismatch(targets, rc_invariants, cfg.normalize_invariants)
    fc = forecast_error(cfg, forecasts, truths)
    eps2 = cfg.epsilon2
    if eps2 is None:
        f0 = np.asarray(getattr(forecasts[0], "data", forecasts[0]))
        D = 1 if f0.ndim == 1 else f0.shape[1]
        eps2 = 1.0 / (len(forecasts) * (cfg.t_f - cfg.t_i + 1) * D)
    return cfg.epsilon1 * inv + eps2 * fc


def split_data(series: TimeSeries, train_frac: float, val_frac: float
               ) -> tuple[TimeSeries, TimeSeries, TimeSeries]:
    """Contiguous chronological split; the remainder is the test set."""
    if not (train_frac > 0 and val_frac > 0 and train_frac + val_frac <= 1):
        raise InvalidArgumentError("fractions must be positive and sum to at most 1")
    T = series.T
    n_train = int(math.floor(T * train_frac + 1e-9))
    n_val = int(math.floor(T * val_frac + 1e-9))
    n_test = T - n_train - n_val
    if min(n_train, n_val, n_test) <= 0:
        raise InvalidArgumentError(
            f"split of {T} steps gives an empty set ({n_train}, {n_val}, {n_test})")
    return (series.segment(0, n_train), series.segment(n_train, n_train + n_val),
            series.segment(n_train + n_val, T))


def forecast_window(series: TimeSeries, start: int, sync_len: int, horizon: int
                    ) -> tuple[TimeSeries, TimeSeries]:
    """Synchronization segment and the truth a forecast from its end should match.

    The state after synchronizing on ``series[start:start+sync_len]`` already
    predicts the next sample; the forecast's first row is one step later.
    """
    first = start + sync_len + 1
    if start < 0 or first + horizon > series.T:
        raise InvalidArgumentError("forecast window exceeds the series")
    return series.segment(start, start + sync_len), series.segment(first, first + horizon)


def validation_windows(val_series: TimeSeries, M: int, sync_len: int, horizon: int
                       ) -> list[tuple[TimeSeries, TimeSeries]]:
    """M windows with start points spread uniformly over the validation split."""
    last_start = val_series.T - sync_len - 1 - horizon
    if last_start < 0:
        raise InvalidArgumentError(
            f"validation split ({val_series.T} steps) too short for sync {sync_len} "
            f"+ horizon {horizon}")
    starts = np.linspace(0, last_start, M).round().astype(int)
    return [forecast_window(val_series, int(s), sync_len, horizon) for s in starts]


def params_from_point(point: Sequence[float], names: Sequence[str], N: int,
                      base: ReservoirParams | None = None) -> ReservoirParams:
    base = base or ReservoirParams(N=N)
    return base.replace(N=N, **{n: float(v) for n, v in zip(names, point)})


def reservoir_search_space(bounds: dict | None = None) -> SearchSpace:
    """Default box for the six searched hyperparameters (N is fixed)."""
    default = {
        "rho_A": (0.005, 0.1, "linear"),
        "rho_SR": (0.05, 1.5, "linear"),
        "sigma": (0.01, 2.0, LOG10),
        "sigma_b": (0.0, 2.0, "linear"),
        "leak_rate": (0.05, 1.0, "linear"),
        "beta": (1e-10, 1e-2, LOG10),
    }
    if bounds:
        unknown = set(bounds) - set(default)
        if unknown:
            raise InvalidArgumentError(f"unknown hyperparameters: {sorted(unknown)}")
        default.update(bounds)
    return SearchSpace(tuple(Dimension(n, *default[n]) for n in PARAM_NAMES))


@dataclass
class CandidateResult:
    loss: float
    invariant_term: float = 0.0
    forecast_term: float = 0.0
    rc_invariants: InvariantTargets = field(default_factory=InvariantTargets)
    failed: str | None = None
    model: TrainedModel | None = field(default=None, repr=False)


def rc_invariants_for(model: TrainedModel, targets: InvariantTargets, cfg: LossConfig,
                      dt: float, seed: int = 0) -> InvariantTargets:
    """Reservoir counterparts of whichever invariants ``targets`` provides."""
    if targets.is_empty:
        return InvariantTargets()
    k = targets.k
    if targets.fractal_dimension is not None:
        k = max(k, model.reservoir.D)
    k = min(k, model.reservoir.N)
    le_cfg = LeConfig(n_steps=cfg.rc_le_steps, n_transient=cfg.rc_le_transient,
                      n_exponents=k, dt=dt, seed=seed)
    spectrum = model.lyapunov_spectrum(model.r_final, le_cfg)
    les = spectrum.exponents[: targets.k] if targets.k else None
    ky = kaplan_yorke_dimension(spectrum) if targets.fractal_dimension is not None else None
    return InvariantTargets(les, ky)


def evaluate_candidate_detailed(params: ReservoirParams, train_series: TimeSeries,
                                val_windows: Sequence[tuple[TimeSeries, TimeSeries]],
                                targets: InvariantTargets, loss_cfg: LossConfig, seed: int,
                                standardizer: Standardizer | None = None,
                                keep_model: bool = False) -> CandidateResult:
    """Train a candidate and score it; numerical failures map to the penalty."""
    if len(val_windows) != loss_cfg.M:
        raise InvalidArgumentError(f"expected M={loss_cfg.M} validation windows")
    standardizer = standardizer or Standardizer.fit(train_series.data)
    try:
        model = train_model(params, train_series, seed, loss_cfg.washout, standardizer)
    except IllConditionedError as exc:
        return CandidateResult(loss_cfg.divergence_penalty, failed=f"readout: {exc}")

    forecasts, truths = [], []
    horizon = loss_cfg.t_f + 1
    sl = slice(loss_cfg.t_i, loss_cfg.t_f + 1)
    for sync_seg, truth in val_windows:
        if truth.T != horizon:
            raise InvalidArgumentError(f"truth segments must have {horizon} steps")
        r0 = model.synchronize(sync_seg)
        try:
            fc = model.forecast(r0, horizon, train_series.dt)
        except DivergenceError as exc:
            return CandidateResult(loss_cfg.divergence_penalty, failed=f"forecast: {exc}")
        forecasts.append(standardizer.transform(fc.data[sl]))
        truths.append(standardizer.transform(truth.data[sl]))

    try:
        rc_inv = rc_invariants_for(model, targets, loss_cfg, train_series.dt, seed)
    except (DivergenceError, ConditioningError) as exc:
        return CandidateResult(loss_cfg.divergence_penalty, failed=f"invariants: {exc}")

    inv = 0.0
    if loss_cfg.epsilon1 > 0 and not targets.is_empty:
        inv = invariant_mismatch(targets, rc_inv, loss_cfg.normalize_invariants)
    loss = compute_loss(loss_cfg, targets, rc_inv, forecasts, truths)
    if not np.isfinite(loss):
        return CandidateResult(loss_cfg.divergence_penalty, failed="non-finite loss")
    return CandidateResult(loss, loss_cfg.epsilon1 * inv, loss - loss_cfg.epsilon1 * inv,
                           rc_inv, model=model if keep_model else None)


def evaluate_candidate(params: ReservoirParams, train_series: TimeSeries,
                       val_windows: Sequence[tuple[TimeSeries, TimeSeries]],
                       targets: InvariantTargets, loss_cfg: LossConfig, seed: int,
                       standardizer: Standardizer | None = None) -> float:
    return evaluate_candidate_detailed(params, train_series, val_windows, targets,
                                       loss_cfg, seed, standardizer).loss


@dataclass
class SearchResult:
    best_params: ReservoirParams
    best_loss: float
    cma: CmaEsResult
    space: SearchSpace


def search_hyperparameters(train_series: TimeSeries, val_series: TimeSeries,
                           targets: InvariantTargets, loss_cfg: LossConfig,
                           space: SearchSpace, cma_cfg: CmaEsConfig, N: int,
                           reservoir_seed: int, map_fn=map, callback=None) -> SearchResult:
    """CMA-ES over reservoir hyperparameters with a fixed reservoir seed."""
    windows = validation_windows(val_series, loss_cfg.M, loss_cfg.sync_len, loss_cfg.t_f + 1)
    standardizer = Standardizer.fit(train_series.data)
    names = space.names

    def objective(point):
        params = params_from_point(point, names, N)
        return evaluate_candidate(params, train_series, windows, targets, loss_cfg,
                                  reservoir_seed, standardizer)

    result = cma_es_minimize(objective, space, cma_cfg, map_fn=map_fn, callback=callback)
    return SearchResult(params_from_point(result.best_point, names, N), result.best_loss,
                        result, space)
