"""(mu/mu_w, lambda)-CMA-ES over a box-bounded search space.

The optimizer works in the unit hypercube; each :class:`Dimension` maps its
unit coordinate to a physical value either linearly or in log10. Samples
falling outside the cube are clipped, and the clipped points are what gets
evaluated and used for the update.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError

LINEAR = "linear"
LOG10 = "log10"


@dataclass(frozen=True)
class Dimension:
    name: str
    lower: float
    upper: float
    scale: str = LINEAR

    def __post_init__(self):
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise InvalidArgumentError(f"{self.name}: bounds must be finite")
        if not self.lower < self.upper:
            raise InvalidArgumentError(f"{self.name}: lower bound must be < upper bound")
        if self.scale not in (LINEAR, LOG10):
            raise InvalidArgumentError(f"{self.name}: unknown scale {self.scale!r}")
        if self.scale == LOG10 and self.lower <= 0:
            raise InvalidArgumentError(f"{self.name}: log10 scale needs positive bounds")

    def from_unit(self, x: float) -> float:
        x = min(max(x, 0.0), 1.0)
        if self.scale == LOG10:
            lo, hi = math.log10(self.lower), math.log10(self.upper)
            v = 10.0 ** (lo + x * (hi - lo))
        else:
            v = self.lower + x * (self.upper - self.lower)
        return min(max(v, self.lower), self.upper)

    def to_unit(self, v: float) -> float:
        if self.scale == LOG10:
            lo, hi = math.log10(self.lower), math.log10(self.upper)
            return (math.log10(v) - lo) / (hi - lo)
        return (v - self.lower) / (self.upper - self.lower)


@dataclass(frozen=True)
class SearchSpace:
    dimensions: tuple[Dimension, ...]

    def __post_init__(self):
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise InvalidArgumentError("duplicate dimension names")
        if not names:
            raise InvalidArgumentError("search space is empty")

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dimensions]

    def __len__(self):
        return len(self.dimensions)

    def from_unit(self, x: np.ndarray) -> np.ndarray:
        return np.array([d.from_unit(float(v)) for d, v in zip(self.dimensions, x)])

    def to_unit(self, values: Sequence[float]) -> np.ndarray:
        return np.array([d.to_unit(float(v)) for d, v in zip(self.dimensions, values)])

    def as_dict(self, values: Sequence[float]) -> dict[str, float]:
        return {d.name: float(v) for d, v in zip(self.dimensions, values)}

    @classmethod
    def box(cls, lower: float, upper: float, n: int) -> SearchSpace:
        return cls(tuple(Dimension(f"x{i}", lower, upper) for i in range(n)))


@dataclass(frozen=True)
class CmaEsConfig:
    population_size: int | None = None
    max_generations: int = 100
    initial_step_size: float = 0.3
    seed: int = 0
    target_loss: float | None = None

    def __post_init__(self):
        if self.population_size is not None and self.population_size < 4:
            raise InvalidArgumentError("population_size must be >= 4")
        if not self.initial_step_size > 0:
            raise InvalidArgumentError("initial_step_size must be positive")
        if self.max_generations < 1:
            raise InvalidArgumentError("max_generations must be >= 1")

    def population_for(self, n: int) -> int:
        return self.population_size or 4 + int(3 * math.log(n))


@dataclass(frozen=True)
class Evaluation:
    generation: int
    candidate_index: int
    loss: float
    point: np.ndarray


@dataclass
class CmaEsResult:
    best_point: np.ndarray
    best_loss: float
    history: list[Evaluation] = field(default_factory=list)
    best_per_generation: list[tuple[np.ndarray, float]] = field(default_factory=list)
    n_evaluations: int = 0
    stop_reason: str = ""


def cma_es_minimize(objective: Callable[[np.ndarray], float], space: SearchSpace,
                    cfg: CmaEsConfig, x0: Sequence[float] | None = None,
                    map_fn: Callable[[Callable, Iterable], Iterable] = map,
                    callback: Callable[[int, CmaEsResult], None] | None = None
                    ) -> CmaEsResult:
    """Minimize ``objective`` (taking physical-unit points) over ``space``.

    ``map_fn`` evaluates one generation; pass an executor's ``map`` to run
    candidates in parallel. Results are consumed in candidate order, so the
    run is identical for any ``map_fn`` that preserves order.
    """
    n = len(space)
    lam = cfg.population_for(n)
    mu = lam // 2
    w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mueff = 1.0 / np.sum(w ** 2)

    cs = (mueff + 2) / (n + mueff + 5)
    ds = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

    rng = np.random.default_rng(cfg.seed)
    m = np.full(n, 0.5) if x0 is None else np.clip(space.to_unit(x0), 0.0, 1.0)
    sigma = float(cfg.initial_step_size)
    C = np.eye(n)
    B = np.eye(n)
    Dg = np.ones(n)
    p_sigma = np.zeros(n)
    p_c = np.zeros(n)

    result = CmaEsResult(best_point=space.from_unit(m), best_loss=math.inf)
    for gen in range(cfg.max_generations):
        Z = rng.standard_normal((lam, n))
        X = np.clip(m + sigma * (Z * Dg) @ B.T, 0.0, 1.0)
        points = [space.from_unit(x) for x in X]
        losses = np.array([float(v) for v in map_fn(objective, points)])
        losses[np.isnan(losses)] = math.inf
        result.n_evaluations += lam

        for i, (pt, loss) in enumerate(zip(points, losses)):
            result.history.append(Evaluation(gen, i, float(loss), pt))
            if loss < result.best_loss:
                result.best_loss = float(loss)
                result.best_point = pt
        result.best_per_generation.append((result.best_point, result.best_loss))
        if callback is not None:
            callback(gen, result)

        if cfg.target_loss is not None and result.best_loss <= cfg.target_loss:
            result.stop_reason = "target_loss"
            break

        order = np.argsort(losses, kind="stable")[:mu]
        Y = (X[order] - m) / sigma
        y_w = w @ Y
        m = m + sigma * y_w

        C_inv_sqrt_y = B @ ((B.T @ y_w) / Dg)
        p_sigma = (1 - cs) * p_sigma + math.sqrt(cs * (2 - cs) * mueff) * C_inv_sqrt_y
        norm_ps = np.linalg.norm(p_sigma)
        h_sigma = norm_ps / math.sqrt(1 - (1 - cs) ** (2 * (gen + 1))) < (1.4 + 2 / (n + 1)) * chi_n
        p_c = (1 - cc) * p_c + h_sigma * math.sqrt(cc * (2 - cc) * mueff) * y_w
        rank_mu = (Y * w[:, None]).T @ Y
        C = ((1 - c1 - cmu) * C
             + c1 * (np.outer(p_c, p_c) + (1 - h_sigma) * cc * (2 - cc) * C)
             + cmu * rank_mu)
        sigma *= math.exp((cs / ds) * (norm_ps / chi_n - 1))

        C = np.triu(C) + np.triu(C, 1).T
        evals, B = np.linalg.eigh(C)
        Dg = np.sqrt(np.maximum(evals, 1e-300))
        if sigma * Dg.max() < 1e-14:
            result.stop_reason = "step_size"
            break
    else:
        result.stop_reason = "max_generations"
    return result
