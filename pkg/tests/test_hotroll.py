import numpy as np
import pytest
from pydantic import ValidationError

from edgesense.hotroll import (
    HotRollParams,
    build_lambda,
    build_Q,
    build_system,
    coefficients,
    simulate_noiseless,
    steady_state,
)
from edgesense.linsys import observability_index


def test_build_Q_three_nodes():
    expected = np.array([[-2, 2, 0], [1, -2, 1], [0, 2, -2]], dtype=float)

    assert np.array_equal(build_Q(3), expected)


def test_build_Q_two_nodes():
    assert np.array_equal(build_Q(2), np.array([[-2.0, 2.0], [2.0, -2.0]]))


@pytest.mark.parametrize("nu", range(2, 11))
def test_build_Q_rows_sum_to_zero(nu):
    assert np.all(build_Q(nu).sum(axis=1) == 0)


def test_build_Q_rejects_single_node():
    with pytest.raises(ValueError):
        build_Q(1)


def test_build_lambda_examples():
    assert np.array_equal(build_lambda(1, 3, 0.5), 0.5 * np.eye(3))
    assert np.array_equal(build_lambda(2, 1, 0.5), np.array([[0.5, 0.0], [-0.5, 0.5]]))
    columns = build_lambda(4, 2, 0.5).sum(axis=0)
    assert np.all(columns[:-2] == 0)


def test_coefficients_match_formulas():
    alpha_c, beta_c, omega = coefficients(HotRollParams())

    assert omega == 0.5
    assert alpha_c == pytest.approx(0.2 * 40 / (1e-4 * 7900 * 460), rel=1e-12)
    assert beta_c == pytest.approx(2 * 0.2 * 5.67e-8 * 0.85 / (0.01 * 7900 * 460), rel=1e-12)
    assert alpha_c == pytest.approx(2.2014e-2, rel=1e-4)
    assert beta_c == pytest.approx(5.30e-13, rel=1e-2)


def test_default_system_dimensions():
    sys = build_system()

    assert (sys.d, sys.n) == (30, 10)
    assert np.array_equal(sys.Gamma0, np.eye(30))
    assert np.allclose(sys.Qnoise, 0.1 * np.eye(30))
    assert np.allclose(sys.Unoise, 0.01)
    assert observability_index(sys) == 3


def test_observation_reads_top_surface_nodes():
    G = build_system().G

    assert np.all(G.sum(axis=1) == 1)
    for i in range(10):
        # 1-based column 3i - 2
        assert G[i, 3 * (i + 1) - 2 - 1] == 1.0


def test_transition_entries_follow_stencil():
    params = HotRollParams()
    alpha_c, _, omega = coefficients(params)
    F = build_system(params).A
    Q = build_Q(params.nu)
    for row in range(30):
        for col in range(30):
            block_r, node_r = divmod(row, 3)
            block_c, node_c = divmod(col, 3)
            expected = 0.0
            if block_r == block_c:
                expected = alpha_c * Q[node_r, node_c] + (omega if node_r == node_c else 0.0)
            elif block_r == block_c + 1 and node_r == node_c:
                expected = -omega
            assert F[row, col] == pytest.approx(expected, abs=1e-15)


def test_radiation_input_on_surfaces():
    params = HotRollParams()
    _, beta_c, _ = coefficients(params)
    u = build_system(params).u
    surface = beta_c * (1180.0**4 - 325.0**4)

    assert surface == pytest.approx(1.0226, rel=1e-3)
    assert np.allclose(u.reshape(10, 3), [[surface, 0.0, surface]] * 10)


def test_noiseless_trajectory_cools_and_settles():
    sys = build_system()
    trajectory = simulate_noiseless(sys, 1000)
    means = trajectory.mean(axis=1)

    assert trajectory.shape == (1001, 30)
    assert means[0] == pytest.approx(1180.0)
    assert means[1] < means[0]
    assert means[-1] < means[0]
    assert np.allclose(trajectory[-1], steady_state(sys), atol=1e-9)


def test_params_validation():
    with pytest.raises(ValidationError):
        HotRollParams(nu=1)
    with pytest.raises(ValidationError):
        HotRollParams(c=-1.0)
    assert HotRollParams(**{"lambda": 30.0}).lam == 30.0


def test_overrides_change_dimensions():
    sys = build_system(HotRollParams(tau_s=2, nu=2), q_scale=0.2)

    assert (sys.d, sys.n) == (4, 2)
    assert np.allclose(sys.Qnoise, 0.2 * np.eye(4))
