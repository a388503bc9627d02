from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcinvariants.cmaes import CmaEsConfig
from rcinvariants.dynamics import TimeSeries
from rcinvariants.errors import DivergenceError, InvalidArgumentError
from rcinvariants.reservoir import ReservoirParams, TrainedModel
from rcinvariants.training import (DIVERGENCE_PENALTY, PARAM_NAMES, InvariantTargets,
                                   LossConfig, compute_loss, evaluate_candidate,
                                   evaluate_candidate_detailed, exponential_weights,
                                   forecast_window, params_from_point, reservoir_search_space,
                                   search_hyperparameters, split_data, validation_windows)

L1 = 1.14


def scalar_cfg(**kw):
    return LossConfig(t_i=0, t_f=4, M=1, **kw)


class TestLossConfig:
    @pytest.mark.parametrize("kw", [dict(epsilon1=-1), dict(epsilon1=0, epsilon2=0),
                                    dict(t_i=5, t_f=5), dict(M=0)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidArgumentError):
            LossConfig(**kw)


class TestLoss:
    def test_perfect_is_zero(self):
        cfg = scalar_cfg(epsilon2=1.0)
        t = InvariantTargets(np.array([1.0, 0.2]), 2.5)
        truth = [np.ones((5, 3))] * 1
        assert compute_loss(cfg, t, t, truth, truth) == 0.0

    def test_invariant_term_arithmetic(self):
        cfg = scalar_cfg(epsilon1=1.0, epsilon2=0.0, normalize_invariants=False)
        z = [np.zeros(5)]
        loss = compute_loss(cfg, InvariantTargets(np.array([1.0])),
                            InvariantTargets(np.array([0.9])), z, z)
        assert abs(loss - 0.01) < 1e-15

    def test_forecast_weight_at_endpoints(self):
        cfg = scalar_cfg(epsilon1=0.0, epsilon2=1.0)
        truth = [np.zeros(5)]
        first, last = np.zeros(5), np.zeros(5)
        first[0], last[-1] = 2.0, 2.0
        empty = InvariantTargets()
        assert compute_loss(cfg, empty, empty, [first], truth) == 4.0
        assert abs(compute_loss(cfg, empty, empty, [last], truth) - 4 * np.exp(-1)) < 1e-15

    def test_weights_exact(self):
        w = exponential_weights(3, 13)
        assert w[0] == 1.0 and w[-1] == np.exp(-1.0) and len(w) == 11

    def test_normalized_invariants(self):
        cfg = scalar_cfg(epsilon1=1.0, epsilon2=0.0)
        z = [np.zeros(5)]
        loss = compute_loss(cfg, InvariantTargets(np.array([2.0]), 4.0),
                            InvariantTargets(np.array([1.0]), 3.0), z, z)
        assert abs(loss - (0.5 ** 2 + 0.25 ** 2)) < 1e-15

    def test_absent_components_contribute_nothing(self):
        cfg = scalar_cfg(epsilon1=1.0, epsilon2=0.0)
        z = [np.zeros(5)]
        loss = compute_loss(cfg, InvariantTargets(np.array([1.0])),
                            InvariantTargets(np.array([1.0]), 9.0), z, z)
        assert loss == 0.0

    def test_auto_epsilon2(self):
        cfg = LossConfig(t_i=0, t_f=9, M=2, epsilon1=0.0)
        fc = [np.ones((10, 3))] * 2
        tr = [np.zeros((10, 3))] * 2
        w = exponential_weights(0, 9).sum()
        expected = (2 * 3 * w) / (2 * 10 * 3)
        assert abs(compute_loss(cfg, InvariantTargets(), InvariantTargets(), fc, tr) - expected) < 1e-14

    def test_mismatched_lengths(self):
        cfg = scalar_cfg()
        with pytest.raises(InvalidArgumentError):
            compute_loss(cfg, InvariantTargets(), InvariantTargets(), [np.zeros(5)] * 2,
                         [np.zeros(5)])
        with pytest.raises(InvalidArgumentError):
            compute_loss(cfg, InvariantTargets(), InvariantTargets(), [np.zeros(4)],
                         [np.zeros(4)])

    @given(st.floats(0.0, 100.0), st.floats(0.01, 100.0),
           st.floats(0.01, 3) | st.floats(-3, -0.01), st.floats(-3, 3))
    def test_strictly_increasing_in_epsilon1(self, e1, de, target, rc):
        if abs(target - rc) < 1e-6:
            return
        z = [np.ones(5)]
        t, r = InvariantTargets(np.array([target])), InvariantTargets(np.array([rc]))
        a = compute_loss(scalar_cfg(epsilon1=e1, epsilon2=1.0), t, r, z, [np.zeros(5)])
        b = compute_loss(scalar_cfg(epsilon1=e1 + de, epsilon2=1.0), t, r, z, [np.zeros(5)])
        assert b > a

    def test_targets_require_descending(self):
        with pytest.raises(InvalidArgumentError):
            InvariantTargets(np.array([0.1, 1.0]))
        assert InvariantTargets(np.array([])).is_empty


class TestSplit:
    def series(self, n):
        return TimeSeries(0.01, np.arange(n, dtype=float)[:, None])

    def test_lengths(self):
        a, b, c = split_data(self.series(1000), 0.5, 0.25)
        assert (a.T, b.T, c.T) == (500, 250, 250)

    def test_concatenation(self):
        s = self.series(997)
        parts = split_data(s, 0.3, 0.3)
        np.testing.assert_array_equal(np.vstack([p.data for p in parts]), s.data)

    def test_empty_split(self):
        with pytest.raises(InvalidArgumentError):
            split_data(self.series(100), 0.999, 0.0009)

    @pytest.mark.parametrize("fr", [(0.0, 0.5), (0.6, 0.5), (-0.1, 0.2)])
    def test_bad_fractions(self, fr):
        with pytest.raises(InvalidArgumentError):
            split_data(self.series(100), *fr)


class TestWindows:
    def test_forecast_window_alignment(self):
        s = TimeSeries(0.01, np.arange(100, dtype=float)[:, None])
        sync, truth = forecast_window(s, 10, 20, 5)
        assert sync.data[0, 0] == 10 and sync.data[-1, 0] == 29
        np.testing.assert_array_equal(truth.data[:, 0], [31, 32, 33, 34, 35])

    def test_validation_windows_spread(self):
        s = TimeSeries(0.01, np.arange(1000, dtype=float)[:, None])
        wins = validation_windows(s, 7, 100, 50)
        starts = [w[0].data[0, 0] for w in wins]
        assert starts[0] == 0 and starts[-1] == 1000 - 100 - 1 - 50 and len(wins) == 7
        with pytest.raises(InvalidArgumentError):
            validation_windows(s, 3, 900, 200)


class TestSearchSpace:
    def test_default_space(self):
        space = reservoir_search_space()
        assert space.names == list(PARAM_NAMES)
        scales = {d.name: d.scale for d in space.dimensions}
        assert scales["beta"] == "log10" and scales["sigma"] == "log10"

    def test_params_from_point(self):
        p = params_from_point([0.05, 0.8, 0.1, 0.5, 0.7, 1e-6], PARAM_NAMES, 123)
        assert p.N == 123 and p.rho_SR == 0.8 and p.beta == 1e-6

    def test_unknown_bound(self):
        with pytest.raises(InvalidArgumentError):
            reservoir_search_space({"rho_Sr": (0, 1, "linear")})


@pytest.fixture(scope="module")
def candidate_setup(l96_series):
    train = l96_series.segment(0, 5000)
    val = l96_series.segment(20_000, 25_000)
    cfg = LossConfig(t_f=100, M=3, rc_le_steps=500, rc_le_transient=50)
    wins = validation_windows(val, cfg.M, cfg.sync_len, cfg.t_f + 1)
    params = ReservoirParams(N=100, rho_A=0.05, rho_SR=0.3, sigma=0.05, sigma_b=0.6,
                             leak_rate=0.7, beta=1e-8)
    return train, val, cfg, wins, params


class TestEvaluateCandidate:
    def test_deterministic(self, candidate_setup):
        train, _, cfg, wins, params = candidate_setup
        t = InvariantTargets(np.array([L1]))
        assert (evaluate_candidate(params, train, wins, t, cfg, 4)
                == evaluate_candidate(params, train, wins, t, cfg, 4))

    def test_constrained_minus_unconstrained_is_invariant_term(self, candidate_setup):
        train, _, cfg, wins, params = candidate_setup
        t = InvariantTargets(np.array([L1]))
        con = evaluate_candidate_detailed(params, train, wins, t, cfg, 4)
        unc_cfg = LossConfig(**{**cfg.__dict__, "epsilon1": 0.0})
        unc = evaluate_candidate(params, train, wins, t, unc_cfg, 4)
        expected = cfg.epsilon1 * ((L1 - con.rc_invariants.leading_les[0]) / L1) ** 2
        assert abs((con.loss - unc) - expected) < 1e-12

    def test_fractal_dimension_target_computes_full_rc_spectrum(self, candidate_setup):
        train, _, cfg, wins, params = candidate_setup
        res = evaluate_candidate_detailed(params, train, wins, InvariantTargets(None, 6.6), cfg, 4)
        assert res.rc_invariants.fractal_dimension is not None and res.failed is None

    def test_divergence_maps_to_penalty(self, candidate_setup, monkeypatch):
        train, _, cfg, wins, params = candidate_setup

        def boom(self, r0, n_steps, dt):
            raise DivergenceError("forecast became non-finite", 3)

        monkeypatch.setattr(TrainedModel, "forecast", boom)
        res = evaluate_candidate_detailed(params, train, wins, InvariantTargets(), cfg, 4)
        assert res.loss == DIVERGENCE_PENALTY and "forecast" in res.failed

    def test_wrong_window_count(self, candidate_setup):
        train, _, cfg, wins, params = candidate_setup
        with pytest.raises(InvalidArgumentError):
            evaluate_candidate(params, train, wins[:1], InvariantTargets(), cfg, 4)


class TestSearch:
    def test_small_search_parallel_matches_serial(self, candidate_setup):
        train, val, cfg, _, _ = candidate_setup
        cma = CmaEsConfig(max_generations=2, population_size=4, seed=5)
        t = InvariantTargets(np.array([L1]))
        serial = search_hyperparameters(train, val, t, cfg, reservoir_search_space(), cma, 60, 2)
        with ThreadPoolExecutor(2) as pool:
            par = search_hyperparameters(train, val, t, cfg, reservoir_search_space(), cma, 60, 2,
                                         map_fn=pool.map)
        assert serial.best_loss == par.best_loss
        assert serial.best_params == par.best_params
        assert serial.best_params.N == 60
        assert serial.cma.n_evaluations == 8
