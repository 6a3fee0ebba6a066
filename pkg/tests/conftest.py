from __future__ import annotations

import numpy as np
import pytest

from edgesense.dkf import Topology
from edgesense.linsys import LtiSystem


def make_system(A, G, q=0.1, r=0.01, gamma0=1.0, x0=None, u=None) -> LtiSystem:
    A = np.asarray(A, dtype=float)
    G = np.asarray(G, dtype=float)
    d, n = A.shape[0], G.shape[0]
    return LtiSystem(
        A=A,
        G=G,
        Qnoise=q * np.eye(d),
        Unoise=np.full(n, r),
        x0_mean=np.zeros(d) if x0 is None else x0,
        Gamma0=gamma0 * np.eye(d),
        u=u,
    )


@pytest.fixture
def chain_system() -> LtiSystem:
    """Single 3x3 Jordan block seen only through its first coordinate."""

    A = [[0.9, 1.0, 0.0], [0.0, 0.9, 1.0], [0.0, 0.0, 0.9]]
    G = [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.5, 0.0, 0.0]]
    return make_system(A, G)


@pytest.fixture
def diagonal_system() -> LtiSystem:
    return make_system(np.diag([0.5, 0.7, 0.9]), np.eye(3))


@pytest.fixture
def scalar_system() -> LtiSystem:
    return LtiSystem(
        A=[[0.9]],
        G=[[1.0], [1.0]],
        Qnoise=[[0.1]],
        Unoise=[0.01, 0.02],
        x0_mean=[0.0],
        Gamma0=[[1.0]],
    )


@pytest.fixture
def pair_complete() -> Topology:
    return Topology.complete(2)


@pytest.fixture
def small_config_text() -> str:
    return """
seed = 7

[hotroll]
tau_s = 2
nu = 2

[training]
episodes = 1
steps = 4
batch_size = 2
buffer_capacity = 16
hidden = 8

[evaluation]
repetitions = 2
horizon = 6
window = 3
l_list = [3, 5]
p0_list = [0.9, 0.95]
"""
