from __future__ import annotations

import numpy as np
import pytest

from safecopter.checks import random_input, random_state
from safecopter.dual import jvp
from safecopter.dynamics import (
    A_XY,
    E3,
    STATE_SIZE,
    AugmentedState,
    AugmentedStateRate,
    VehicleParams,
    WrenchRateInput,
    allocate,
    drift,
    effectiveness_matrix,
    input_directions,
    reformulated_force_rate,
    saturate,
    state_derivative,
)
from safecopter.exceptions import ConfigurationError
from safecopter.utils import cross


class TestAugmentedState:
    def test_vector_layout(self, initial_state):
        vector = initial_state.to_vector()
        assert vector.shape == (STATE_SIZE,)
        restored = AugmentedState.from_vector(vector)
        np.testing.assert_array_equal(restored.R, initial_state.R)
        assert restored.T == initial_state.T

    def test_from_vector_rejects_wrong_size(self):
        with pytest.raises(ValueError):
            AugmentedState.from_vector(np.zeros(STATE_SIZE - 1))

    def test_hover_thrust_axis(self, params):
        x = AugmentedState.hover(params)
        np.testing.assert_allclose(x.z_B, E3)
        np.testing.assert_allclose(x.force, -params.m * params.g * E3)

    def test_rate_defaults_to_zero(self):
        np.testing.assert_array_equal(
            AugmentedStateRate(T=2.0).to_vector(), np.eye(STATE_SIZE)[-1] * 2.0
        )


class TestStateDerivative:
    def test_hover_is_equilibrium(self, params):
        x = AugmentedState.hover(params, yaw=0.7)
        rate = state_derivative(x, WrenchRateInput.zero(), params).to_vector()
        np.testing.assert_allclose(rate, 0.0, atol=1e-12)

    def test_free_fall(self, params):
        x = AugmentedState.from_euler(np.zeros(3), np.zeros(3), 0.2, -0.1, 0.3, np.zeros(3), 0.0)
        rate = state_derivative(x, WrenchRateInput.zero(), params)
        np.testing.assert_allclose(rate.v, params.g * E3)

    def test_affine_in_input(self, rng, params, cfg):
        x = random_state(rng, params, cfg)
        nu1, nu2 = random_input(rng), random_input(rng)
        both = WrenchRateInput.from_array(nu1.as_array() + nu2.as_array())
        residual = (
            state_derivative(x, both, params).to_vector()
            - state_derivative(x, nu1, params).to_vector()
            - state_derivative(x, nu2, params).to_vector()
            + drift(x, params).to_vector()
        )
        np.testing.assert_allclose(residual, 0.0, atol=1e-12)

    def test_input_directions(self, rng, params, cfg):
        x = random_state(rng, params, cfg)
        base = drift(x, params).to_vector()
        for i, direction in enumerate(input_directions(params)):
            nu = WrenchRateInput.from_array(np.eye(4)[i])
            np.testing.assert_allclose(
                state_derivative(x, nu, params).to_vector() - base,
                direction.to_vector(),
                atol=1e-12,
            )

    def test_gyroscopic_torque_cancels(self, rng, params, cfg):
        x = random_state(rng, params, cfg)
        nu = WrenchRateInput(T_dot=0.0, M=cross(x.omega, params.J @ x.omega))
        np.testing.assert_allclose(state_derivative(x, nu, params).omega, 0.0, atol=1e-12)

    def test_thrust_offset_acts_on_velocity_only(self, rng, params, cfg):
        x = random_state(rng, params, cfg)
        nu = random_input(rng)
        base = state_derivative(x, nu, params)
        shifted = state_derivative(x, nu, params, thrust_offset=-3.0)
        np.testing.assert_allclose(shifted.v - base.v, 3.0 * x.z_B / params.m, atol=1e-12)
        for name in ("p", "R", "omega"):
            np.testing.assert_array_equal(getattr(shifted, name), getattr(base, name))
        assert shifted.T == base.T


class TestForceRate:
    def test_rate_about_body_x(self, params):
        x = AugmentedState(
            p=np.zeros(3), v=np.zeros(3), R=np.eye(3), omega=np.array([1.0, 0.0, 0.0]), T=1.0
        )
        np.testing.assert_allclose(
            reformulated_force_rate(x, WrenchRateInput.zero()), [0.0, 1.0, 0.0]
        )

    def test_cross_product_identity(self, rng):
        for _ in range(20):
            omega = rng.normal(size=3)
            np.testing.assert_allclose(cross(omega, E3), A_XY @ omega[:2], atol=1e-15)

    def test_matches_exact_derivative(self, rng, params, cfg):
        for _ in range(10):
            x = random_state(rng, params, cfg)
            nu = random_input(rng)
            np.testing.assert_allclose(
                jvp(lambda s: s.force, x, state_derivative(x, nu, params)),
                reformulated_force_rate(x, nu),
                rtol=1e-12,
                atol=1e-12,
            )


class TestAllocation:
    def test_hover_splits_evenly(self, params):
        u = allocate([params.hover_thrust, 0.0, 0.0, 0.0], params)
        np.testing.assert_allclose(u, params.hover_thrust / params.rotor_count)

    def test_zero_wrench(self, params):
        np.testing.assert_allclose(allocate(np.zeros(4), params), 0.0, atol=1e-15)

    def test_reproduces_wrench(self, rng, params):
        for _ in range(20):
            wrench = np.concatenate([[rng.uniform(0.0, 80.0)], rng.normal(scale=2.0, size=3)])
            assert np.linalg.norm(params.B @ allocate(wrench, params) - wrench) <= 1e-10

    def test_saturate_within_bounds(self, params):
        u = np.full(params.rotor_count, 0.5 * params.u_max)
        u_sat, wrench, saturated = saturate(u, params)
        assert not saturated
        np.testing.assert_array_equal(u_sat, u)
        np.testing.assert_allclose(wrench, params.B @ u)

    def test_saturate_clamps(self, params):
        u = np.array([-1.0, 0.2, 2.0 * params.u_max, 0.3, 0.4, 0.5])
        u_sat, wrench, saturated = saturate(u, params)
        assert saturated
        assert u_sat[0] == 0.0
        assert u_sat[2] == params.u_max
        np.testing.assert_allclose(wrench, params.B @ u_sat)


class TestVehicleParams:
    def test_hexacopter_defaults(self, params):
        assert params.rotor_count == 6
        assert params.B.shape == (4, 6)
        assert np.linalg.matrix_rank(params.B) == 4
        assert params.u_max == pytest.approx(0.6371 * params.m * params.g)

    def test_effectiveness_rows(self):
        B = effectiveness_matrix(arm_length=0.5, torque_coefficient=0.01, rotor_count=4)
        np.testing.assert_array_equal(B[0], np.ones(4))
        np.testing.assert_allclose(B[1:3].sum(axis=1), 0.0, atol=1e-15)
        np.testing.assert_allclose(B[3], [0.01, -0.01, 0.01, -0.01])

    def test_too_few_rotors(self):
        with pytest.raises(ConfigurationError):
            effectiveness_matrix(arm_length=0.3, torque_coefficient=0.01, rotor_count=3)

    @pytest.mark.parametrize(
        "changes",
        [
            {"m": 0.0},
            {"g": -9.81},
            {"u_max": 0.0},
            {"J": np.array([[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])},
            {"J": -np.eye(3)},
            {"B": np.zeros((4, 6))},
        ],
    )
    def test_invalid(self, params, changes):
        values = {"m": params.m, "J": params.J, "g": params.g, "B": params.B, "u_max": params.u_max}
        values.update(changes)
        with pytest.raises(ConfigurationError):
            VehicleParams(**values)
