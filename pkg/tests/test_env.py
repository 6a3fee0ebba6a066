import itertools

import numpy as np
import pytest

from edgesense.channel import ChannelParams, TransmissionPlan
from edgesense.dkf import Topology
from edgesense.env import CostWeights, SensingEnv, reset, state_features, unflatten_features
from edgesense.errors import DimensionMismatch
from edgesense.obsbound import ActionBounds


def _env(sys, m=2, kappa=(0.3, 0.4), **kwargs):
    topo = Topology.complete(m)
    channel = ChannelParams.from_rows(list(kappa)[:m], sys.n)
    return SensingEnv(sys, topo, channel, **kwargs)


def test_reset_gives_initial_traces(diagonal_system):
    state = reset(diagonal_system, Topology.complete(2))

    assert state.slot == 0
    assert state.traces == [pytest.approx(3.0), pytest.approx(3.0)]


def test_reset_rejects_wrong_gamma0(diagonal_system):
    with pytest.raises(DimensionMismatch):
        reset(diagonal_system, Topology.complete(2), Gamma0=np.eye(2))


def test_silent_slot_costs_open_loop_prediction(diagonal_system):
    env = _env(diagonal_system)
    state = env.reset()
    result = env.step(state, TransmissionPlan.constant(0.0, 2, 3), np.random.default_rng(0))
    A = diagonal_system.A
    predicted = np.trace(A @ diagonal_system.Gamma0 @ A.T + diagonal_system.Qnoise)

    assert result.receptions.count() == 0
    assert result.power_term == 0.0
    assert result.cost == pytest.approx(0.1 * 2 * predicted)
    assert result.state.slot == 1


def test_power_at_unit_level(diagonal_system):
    env = _env(diagonal_system, weights=CostWeights(alpha=0.0, beta=0.5))
    mu = np.array([[0.7] * 3, [0.6] * 3])
    result = env.step(env.reset(), mu, np.random.default_rng(1))

    assert result.power_term == pytest.approx(0.5 * 2 * 3, rel=1e-12)
    assert result.cost == pytest.approx(result.power_term)


def test_expected_cost_matches_enumeration(scalar_system):
    env = SensingEnv(scalar_system, Topology.isolated(1), ChannelParams.from_rows([0.3], 2))
    mu = np.array([[0.4, 0.7]])
    power = 0.1 * float(np.sum(np.log(1 - mu) / np.log(0.3)))
    predicted = 0.81 + 0.1

    outcomes = []
    for bits in itertools.product([0, 1], repeat=2):
        prob = np.prod([r if b else 1 - r for r, b in zip(mu[0], bits)])
        info = 1 / predicted + sum(b / u for b, u in zip(bits, [0.01, 0.02]))
        outcomes.append((prob, 0.1 / info + power))
    mean = sum(p * c for p, c in outcomes)
    std = np.sqrt(sum(p * (c - mean) ** 2 for p, c in outcomes))

    rng = np.random.default_rng(42)
    samples = 20_000
    costs = []
    for _ in range(samples):
        state = env.reset()
        costs.append(env.step(state, mu, rng).cost)
    assert abs(np.mean(costs) - mean) <= 3 * std / np.sqrt(samples)


def test_features_are_flattened_covariances(diagonal_system):
    env = _env(diagonal_system)
    state = env.reset()
    features = state_features(state)

    assert features.shape == (env.feature_dim,)
    assert env.feature_dim == 2 * 9
    assert env.action_dim == 6
    blocks = unflatten_features(features, 2, 3)
    assert all(np.array_equal(block, np.eye(3)) for block in blocks)
    with pytest.raises(DimensionMismatch):
        unflatten_features(features[:-1], 2, 3)


def test_steps_are_seed_deterministic(diagonal_system):
    def run(seed):
        env = _env(diagonal_system)
        rng = np.random.default_rng(seed)
        state = env.reset(rng)
        costs = []
        for _ in range(10):
            result = env.step(state, TransmissionPlan.constant(0.5, 2, 3), rng)
            state = result.state
            costs.append(result.cost)
        return costs, env.x_true

    first, second = run(3), run(3)
    assert first[0] == second[0]
    assert np.array_equal(first[1], second[1])


def test_out_of_bounds_actions_are_clamped(diagonal_system):
    env = _env(diagonal_system, bounds=ActionBounds(0.2, 0.6))
    rng = np.random.default_rng(0)
    state = env.reset()

    env.step(state, TransmissionPlan.constant(0.4, 2, 3), rng)
    assert env.clamp_count == 0
    env.step(state, TransmissionPlan.constant(0.9, 2, 3), rng)
    env.step(state, np.full(6, 0.1), rng)
    assert env.clamp_count == 2


def test_recorded_trajectory_rows(diagonal_system):
    env = _env(diagonal_system, record=True)
    rng = np.random.default_rng(4)
    state = env.reset(rng)
    for _ in range(3):
        state = env.step(state, TransmissionPlan.constant(1.0 - 0.4, 2, 3), rng).state

    assert [row["k"] for row in env.trajectory] == [1, 2, 3]
    row = env.trajectory[-1]
    assert {"cost", "trace_p_0", "trace_p_1", "received_0", "receptions"} <= set(row)
    assert row["action_min"] == pytest.approx(0.6)


def test_channel_shape_must_match(diagonal_system):
    with pytest.raises(DimensionMismatch):
        SensingEnv(diagonal_system, Topology.complete(2), ChannelParams.from_rows([0.3], 3))


def test_cost_weights_validation():
    with pytest.raises(ValueError):
        CostWeights(alpha=0.0, beta=0.0)
    with pytest.raises(ValueError):
        CostWeights(alpha=-1.0)
