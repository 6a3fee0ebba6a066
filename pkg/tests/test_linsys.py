import numpy as np
import pytest

from edgesense.dkf import Topology
from edgesense.errors import (
    DimensionMismatch,
    IllConditionedTransform,
    InvalidSystem,
    NotObservable,
    ZeroNoiseVariance,
)
from edgesense.hotroll import build_system
from edgesense.linsys import (
    LtiSystem,
    is_L_step_observable,
    jordanize,
    numerical_rank,
    observability_index,
    observability_matrix,
)
from tests.conftest import make_system


def test_numerical_rank_is_relative_to_largest_singular_value():
    matrix = np.array([[1.0, 0.0], [0.0, 1e-12]])

    assert numerical_rank(matrix) == 1
    assert numerical_rank(matrix, rank_tol=1e-13) == 2
    assert numerical_rank(1e-20 * np.eye(3)) == 3
    assert numerical_rank(np.zeros((3, 2))) == 0
    assert numerical_rank(np.array([[1.0, 2.0], [2.0, 4.0]])) == 1


def test_observability_index(chain_system, diagonal_system):
    assert observability_index(chain_system) == 3
    assert observability_index(diagonal_system) == 1


def test_unobservable_pair_is_rejected():
    with pytest.raises(NotObservable):
        make_system(np.diag([0.5, 0.7]), [[1.0, 0.0]])


def test_singular_transition_is_rejected():
    with pytest.raises(InvalidSystem):
        make_system([[1.0, 0.0], [0.0, 0.0]], np.eye(2))


@pytest.mark.parametrize("variance", [0.0, -0.01])
def test_nonpositive_noise_variance_is_rejected(variance):
    with pytest.raises(ZeroNoiseVariance):
        LtiSystem(A=np.eye(2), G=np.eye(2), Qnoise=np.eye(2), Unoise=[0.1, variance],
                  x0_mean=np.zeros(2), Gamma0=np.eye(2))


def test_shape_mismatch_is_rejected():
    with pytest.raises(DimensionMismatch):
        LtiSystem(A=np.eye(2), G=np.ones((1, 3)), Qnoise=np.eye(2), Unoise=[0.1],
                  x0_mean=np.zeros(2), Gamma0=np.eye(2))


def test_system_arrays_are_read_only(diagonal_system):
    with pytest.raises(ValueError):
        diagonal_system.A[0, 0] = 2.0


def test_jordanize_diagonal_gives_one_block_per_eigenvalue(diagonal_system):
    jf = jordanize(diagonal_system)

    assert len(jf.blocks) == 3
    assert [size for _, size, _ in jf.blocks] == [1, 1, 1]
    assert abs(jf.blocks[0][2]) == pytest.approx(0.9)
    assert np.allclose(jf.P @ jf.J @ np.linalg.inv(jf.P), diagonal_system.A, atol=1e-12)


def test_jordanize_chain_is_single_block(chain_system):
    jf = jordanize(chain_system)

    assert len(jf.blocks) == 1
    assert jf.blocks[0][1] == 3
    assert np.allclose(jf.Gtilde, chain_system.G @ jf.P)
    first = jf.P[:, 0]
    assert np.allclose(chain_system.A @ first, 0.9 * first, atol=1e-10)


def test_jordanize_hot_rolling_reconstructs():
    sys = build_system()
    jf = jordanize(sys)

    assert sum(size for _, size, _ in jf.blocks) == 30
    recon = jf.P @ jf.J @ np.linalg.inv(jf.P)
    assert np.max(np.abs(recon - sys.A)) < 1e-8


def test_ill_conditioned_split_raises_without_merging():
    sys = make_system([[1.0, 10.0], [0.0, 2.0]], np.eye(2))

    with pytest.raises(IllConditionedTransform):
        jordanize(sys, cond_limit=1.5, merge_on_ill_conditioning=False)

    merged = jordanize(sys, cond_limit=1.5)
    assert len(merged.blocks) == 1
    assert merged.condition == pytest.approx(1.0)


def test_observability_matrix_layout(chain_system, pair_complete):
    jf = jordanize(chain_system)
    window = [np.ones((2, 3), dtype=int)] * 2
    O = observability_matrix(jf, window, pair_complete, 0)

    assert O.shape == (2 * 3 * 2, 3)


def test_observability_matrix_zeroes_missing_rows(chain_system, pair_complete):
    jf = jordanize(chain_system)
    gamma = np.zeros((2, 3), dtype=int)
    gamma[1, 0] = 1
    O = observability_matrix(jf, [gamma], pair_complete, 0)

    assert np.count_nonzero(np.abs(O).sum(axis=1)) == 1


def test_l_step_observability(chain_system, pair_complete):
    jf = jordanize(chain_system)
    full = np.ones((2, 3), dtype=int)
    silent = np.zeros((2, 3), dtype=int)

    assert is_L_step_observable(jf, [full] * 3, pair_complete, 0)
    assert not is_L_step_observable(jf, [full] * 2, pair_complete, 0)
    assert not is_L_step_observable(jf, [silent] * 5, pair_complete, 1)


def test_isolated_ecu_ignores_neighbor_receptions(chain_system):
    jf = jordanize(chain_system)
    gamma = np.zeros((2, 3), dtype=int)
    gamma[1] = 1

    assert not is_L_step_observable(jf, [gamma] * 3, Topology.isolated(2), 0)
    assert is_L_step_observable(jf, [gamma] * 3, Topology.isolated(2), 1)


def test_observability_matrix_checks_shapes(chain_system, pair_complete):
    jf = jordanize(chain_system)

    with pytest.raises(DimensionMismatch):
        observability_matrix(jf, [np.ones((3, 3), dtype=int)], pair_complete, 0)
    with pytest.raises(DimensionMismatch):
        observability_matrix(jf, [], pair_complete, 0)
