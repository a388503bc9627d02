from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcinvariants.cmaes import CmaEsConfig, Dimension, SearchSpace, cma_es_minimize
from rcinvariants.errors import InvalidArgumentError


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def rosenbrock(x):
    return float(100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)


class TestDimension:
    def test_log_scale_round_trip(self):
        d = Dimension("beta", 1e-10, 1e-2, "log10")
        assert abs(d.from_unit(0.5) - 1e-6) < 1e-18
        assert abs(d.to_unit(1e-6) - 0.5) < 1e-12

    def test_from_unit_clips(self):
        d = Dimension("x", -2.0, 3.0)
        assert d.from_unit(-0.4) == -2.0 and d.from_unit(7.0) == 3.0

    @pytest.mark.parametrize("args", [("x", 1.0, 1.0), ("x", 0.0, np.inf), ("x", 0.0, 1.0, "ln"),
                                      ("x", 0.0, 1.0, "log10")])
    def test_invalid(self, args):
        with pytest.raises(InvalidArgumentError):
            Dimension(*args)


class TestMinimize:
    def test_sphere_10d(self):
        res = cma_es_minimize(sphere, SearchSpace.box(-5, 5, 10),
                              CmaEsConfig(max_generations=2000, seed=1, target_loss=1e-10))
        assert res.best_loss < 1e-8 and res.n_evaluations <= 20_000

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_rosenbrock_2d(self, seed):
        res = cma_es_minimize(rosenbrock, SearchSpace.box(-2, 2, 2),
                              CmaEsConfig(max_generations=8000, seed=seed, target_loss=1e-9))
        assert res.best_loss < 1e-6 and res.n_evaluations <= 50_000
        np.testing.assert_allclose(res.best_point, [1, 1], atol=1e-2)

    def test_boundary_optimum(self):
        res = cma_es_minimize(lambda x: float(np.sum((np.asarray(x) - 3.0) ** 2)),
                              SearchSpace.box(-1, 1, 3), CmaEsConfig(max_generations=200))
        np.testing.assert_allclose(res.best_point, [1, 1, 1], atol=1e-6)

    def test_all_samples_within_bounds(self):
        space = SearchSpace((Dimension("a", -1, 1), Dimension("b", 1e-4, 1e2, "log10")))
        res = cma_es_minimize(lambda x: -x[0] - np.log10(x[1]), space,
                              CmaEsConfig(max_generations=30, initial_step_size=2.0))
        for ev in res.history:
            assert -1 <= ev.point[0] <= 1 and 1e-4 <= ev.point[1] <= 1e2

    def test_log_dimension_searched_in_exponent_space(self):
        space = SearchSpace((Dimension("b", 1e-8, 1.0, "log10"),))
        res = cma_es_minimize(lambda x: (np.log10(x[0]) + 6) ** 2, space,
                              CmaEsConfig(max_generations=100, seed=3))
        assert abs(np.log10(res.best_point[0]) + 6) < 1e-4

    def test_parallel_equals_serial(self):
        space = SearchSpace.box(-2, 2, 4)
        cfg = CmaEsConfig(max_generations=40, seed=11)
        serial = cma_es_minimize(rosenbrock, space, cfg)
        with ThreadPoolExecutor(4) as pool:
            parallel = cma_es_minimize(rosenbrock, space, cfg, map_fn=pool.map)
        assert len(serial.best_per_generation) == len(parallel.best_per_generation)
        for (pa, la), (pb, lb) in zip(serial.best_per_generation, parallel.best_per_generation):
            np.testing.assert_array_equal(pa, pb)
            assert la == lb

    def test_nan_treated_as_worst(self):
        res = cma_es_minimize(lambda x: np.nan if x[0] > 0 else x[0] ** 2,
                              SearchSpace.box(-1, 1, 1), CmaEsConfig(max_generations=50))
        assert res.best_point[0] <= 0 and np.isfinite(res.best_loss)

    def test_stop_reasons(self):
        space = SearchSpace.box(-1, 1, 2)
        assert cma_es_minimize(sphere, space, CmaEsConfig(max_generations=3)).stop_reason \
            == "max_generations"
        assert cma_es_minimize(sphere, space, CmaEsConfig(max_generations=500, target_loss=1e-3)
                               ).stop_reason == "target_loss"

    def test_history_records_every_candidate(self):
        cfg = CmaEsConfig(max_generations=5, population_size=6)
        res = cma_es_minimize(sphere, SearchSpace.box(-1, 1, 3), cfg)
        assert res.n_evaluations == len(res.history) == 30
        assert [e.candidate_index for e in res.history[:6]] == list(range(6))

    def test_best_is_best_ever(self):
        res = cma_es_minimize(sphere, SearchSpace.box(-3, 3, 3), CmaEsConfig(max_generations=20))
        assert res.best_loss == min(e.loss for e in res.history)
        losses = [b for _, b in res.best_per_generation]
        assert all(a >= b for a, b in zip(losses, losses[1:]))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([10.0, 0.001, 1e6]))
def test_rank_based_scale_invariance(seed, scale):
    space = SearchSpace.box(-2, 2, 3)
    cfg = CmaEsConfig(max_generations=15, seed=seed)
    a = cma_es_minimize(rosenbrock, space, cfg)
    b = cma_es_minimize(lambda x: scale * rosenbrock(x), space, cfg)
    for ea, eb in zip(a.history, b.history):
        np.testing.assert_array_equal(ea.point, eb.point)
