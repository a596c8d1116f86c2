import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from wams_tsa.errors import ConfigError, StabilizabilityError
from wams_tsa.grid import GridModel, StateVector, default_five_machine, spectral_radius
from wams_tsa.lqr import (LqrConfig, control, evaluate_cost, lqr_gain, riccati_residual,
                          solve_riccati)


def scalar(a, b, q, p):
    cfg = LqrConfig([[q]], [[p]])
    sol = solve_riccati([[a]], [[b]], cfg)
    return sol, lqr_gain([[a]], [[b]], sol, [[p]])


class TestRiccati:
    def test_zero_dynamics_gives_q_exactly(self):
        q = np.diag([1.0, 2.0, 3.0])
        sol = solve_riccati(np.zeros((3, 3)), np.eye(3), LqrConfig(q, np.eye(3)))
        assert np.array_equal(sol.s_matrix, q)

    def test_scalar_reference_value(self):
        sol, k = scalar(0.9, 1.0, 1.0, 1.0)
        s_ref = oracles.scalar_dare(0.9, 1.0, 1.0, 1.0)
        assert s_ref == pytest.approx(1.4839, abs=5e-5)
        assert sol.s_matrix[0, 0] == pytest.approx(s_ref, abs=1e-9)
        assert k[0, 0] == pytest.approx(0.5377, abs=5e-5)
        assert k[0, 0] == pytest.approx(oracles.scalar_gain(0.9, 1.0, s_ref, 1.0), abs=1e-9)

    @given(st.floats(-0.99, 0.99), st.floats(0.1, 3.0), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
    def test_scalar_closed_form(self, a, b, q, p):
        sol, _ = scalar(a, b, q, p)
        assert sol.s_matrix[0, 0] == pytest.approx(oracles.scalar_dare(a, b, q, p), abs=1e-9)

    def test_residual_and_symmetry_on_default_model(self):
        m = default_five_machine()
        cfg = LqrConfig.identity(5, 5)
        sol = solve_riccati(m.a_d, m.b_d, cfg)
        s = sol.s_matrix
        assert np.abs(s - s.T).max() <= 1e-10
        assert np.linalg.eigvalsh(s).min() > 0
        assert oracles.riccati_residual(m.a_d, m.b_d, s, cfg.q_weight, cfg.p_weight) <= 1e-8
        assert riccati_residual(m.a_d, m.b_d, s, cfg.q_weight, cfg.p_weight) <= cfg.riccati_tol

    def test_unstabilizable_raises(self):
        cfg = LqrConfig([[1.0]], [[1.0]], riccati_max_iter=500)
        with pytest.raises(StabilizabilityError):
            solve_riccati([[1.5]], [[0.0]], cfg)

    def test_config_validation(self):
        with pytest.raises(ConfigError) as exc:
            LqrConfig(np.eye(2), [[0.0]])
        assert exc.value.path == "p_weight"
        with pytest.raises(ConfigError):
            LqrConfig(np.eye(2), np.eye(1), beta=0.0)
        with pytest.raises(ConfigError):
            LqrConfig(np.eye(2), np.eye(1), riccati_tol=0.0)
        with pytest.raises(ConfigError):
            LqrConfig([[1.0, 0.2], [0.0, 1.0]], np.eye(1))


class TestGain:
    def test_zero_input_matrix(self):
        cfg = LqrConfig.identity(2, 1)
        a = np.array([[0.5, 0.1], [0.0, 0.4]])
        b = np.zeros((2, 1))
        sol = solve_riccati(a, b, cfg)
        assert np.array_equal(lqr_gain(a, b, sol, cfg.p_weight), np.zeros((1, 2)))

    def test_closed_loop_stable_on_default_model(self):
        m = default_five_machine()
        cfg = LqrConfig.identity(5, 5)
        k = lqr_gain(m.a_d, m.b_d, solve_riccati(m.a_d, m.b_d, cfg), cfg.p_weight)
        assert spectral_radius(m.a_d - m.b_d @ k) < 1


class TestControl:
    def test_zero_state(self):
        assert np.array_equal(control(np.ones((2, 3)), np.zeros(3)), np.zeros(2))

    def test_scalar(self):
        assert control([[2.0]], StateVector([3.0])).tolist() == [-6.0]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            control(np.ones((2, 3)), np.zeros(2))

    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=3), st.floats(-10, 10))
    def test_linearity(self, x, c):
        k = np.array([[1.0, -2.0, 0.5], [0.3, 0.0, 4.0]])
        x = np.array(x)
        assert np.allclose(control(k, c * x), c * control(k, x), atol=1e-9)


class TestCost:
    def _model(self, w=0.0):
        a = np.array([[1.02, 0.1], [0.0, 0.95]])
        b = np.array([[0.0], [1.0]])
        return GridModel(a, b, np.eye(2), w * np.eye(2), np.ones(2), 0.1)

    def test_noiseless_zero_state(self, rng):
        m = self._model()
        cfg = LqrConfig.identity(2, 1)
        assert evaluate_cost(m, np.ones((1, 2)), cfg, 50, 3, rng) == 0.0

    def test_single_term(self, rng):
        m = self._model()
        q = np.array([[2.0, 0.5], [0.5, 1.0]])
        cfg = LqrConfig(q, [[1.0]])
        x0 = np.array([1.0, -2.0])
        assert evaluate_cost(m, np.zeros((1, 2)), cfg, 1, 1, rng, x0=x0) == pytest.approx(x0 @ q @ x0)

    def test_discount_applies(self, rng):
        m = self._model()
        x0 = np.array([1.0, 1.0])
        full = evaluate_cost(m, np.zeros((1, 2)), LqrConfig.identity(2, 1), 2, 1, rng, x0=x0)
        half = evaluate_cost(m, np.zeros((1, 2)), LqrConfig.identity(2, 1, beta=0.5), 2, 1, rng, x0=x0)
        x1 = m.a_d @ x0
        assert full == pytest.approx(x0 @ x0 + x1 @ x1)
        assert half == pytest.approx(x0 @ x0 + 0.5 * x1 @ x1)

    def test_lqr_gain_beats_perturbed_gains(self):
        m = self._model()
        cfg = LqrConfig.identity(2, 1)
        k = lqr_gain(m.a_d, m.b_d, solve_riccati(m.a_d, m.b_d, cfg), cfg.p_weight)
        x0 = np.array([1.0, -1.0])
        r = np.random.default_rng(0)
        j_opt = evaluate_cost(m, k, cfg, 500, 1, r, x0=x0)
        for _ in range(20):
            d = r.standard_normal(k.shape)
            d *= 0.1 / np.linalg.norm(d)
            assert j_opt <= evaluate_cost(m, k + d, cfg, 500, 1, r, x0=x0) + 1e-12

    def test_argument_checks(self, rng):
        with pytest.raises(ValueError):
            evaluate_cost(self._model(), np.zeros((1, 2)), LqrConfig.identity(2, 1), 0, 1, rng)
