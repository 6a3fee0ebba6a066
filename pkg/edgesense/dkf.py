"""Distributed Kalman filtering over an undirected ECU graph."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from edgesense.config import settings
from edgesense.errors import DimensionMismatch, SingularCovariance
from edgesense.linsys import LtiSystem

logger = logging.getLogger(__name__)


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


@dataclass(frozen=True)
class Topology:
    """Static undirected ECU graph with adjacency H (no self loops)."""

    H: np.ndarray
    neighbor_sets: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self) -> None:
        H = np.array(self.H, dtype=int, copy=True)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise DimensionMismatch(f"adjacency must be square, got {H.shape}")
        if not np.isin(H, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        if not np.array_equal(H, H.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(H)):
            raise ValueError("adjacency must have a zero diagonal")
        H.setflags(write=False)
        object.__setattr__(self, "H", H)
        sets = tuple(tuple(int(i) for i in np.flatnonzero(row)) for row in H)
        object.__setattr__(self, "neighbor_sets", sets)

    @property
    def m(self) -> int:
        return int(self.H.shape[0])

    @property
    def D(self) -> np.ndarray:
        return np.eye(self.m, dtype=int) + self.H

    def theta(self, j: int) -> np.ndarray:
        """Theta_j = diag of row j of D."""

        return np.diag(self.D[j])

    def neighborhood(self, j: int) -> list[int]:
        """N_j U {j} in ascending order."""

        return sorted((j, *self.neighbor_sets[j]))

    @classmethod
    def complete(cls, m: int) -> "Topology":
        return cls(np.ones((m, m), dtype=int) - np.eye(m, dtype=int))

    @classmethod
    def isolated(cls, m: int) -> "Topology":
        return cls(np.zeros((m, m), dtype=int))

    @classmethod
    def ring(cls, m: int) -> "Topology":
        H = np.zeros((m, m), dtype=int)
        for i in range(m):
            for step in (-1, 1):
                k = (i + step) % m
                if k != i:
                    H[i, k] = 1
        return cls(H)


@dataclass(frozen=True)
class InfoPair:
    """Information contribution (S, y) of one ECU for one slot."""

    S_local: np.ndarray
    y_local: np.ndarray

    @classmethod
    def zeros(cls, d: int) -> "InfoPair":
        return cls(np.zeros((d, d)), np.zeros(d))

    def __add__(self, other: "InfoPair") -> "InfoPair":
        return InfoPair(self.S_local + other.S_local, self.y_local + other.y_local)


@dataclass(frozen=True)
class EcuBelief:
    """One ECU's covariance recursion state and estimate."""

    P_pred: np.ndarray
    P_post: np.ndarray
    x_hat: np.ndarray
    x_pred: np.ndarray | None = None

    @classmethod
    def initial(cls, Gamma0: np.ndarray, x0_mean: np.ndarray) -> "EcuBelief":
        P = symmetrize(np.array(Gamma0, dtype=float))
        x = np.array(x0_mean, dtype=float)
        return cls(P_pred=P, P_post=P, x_hat=x, x_pred=x)

    @property
    def trace(self) -> float:
        return float(np.trace(self.P_post))


def local_preprocess(
    sys: LtiSystem, topo: Topology, j: int, gamma_row: np.ndarray, y_obs: np.ndarray
) -> InfoPair:
    """Information sums over the sensors ECU j received (unreceived rows are omitted)."""

    if not 0 <= j < topo.m:
        raise DimensionMismatch(f"ECU index {j} outside 0..{topo.m - 1}")
    gamma_row = np.asarray(gamma_row).astype(bool)
    if gamma_row.shape != (sys.n,):
        raise DimensionMismatch(f"reception row must have {sys.n} entries")
    if not gamma_row.any():
        return InfoPair.zeros(sys.d)
    G = sys.G[gamma_row]
    weights = 1.0 / sys.Unoise[gamma_row]
    y = np.asarray(y_obs, dtype=float)[gamma_row]
    S = symmetrize(G.T @ (weights[:, None] * G))
    return InfoPair(S, G.T @ (weights * y))


def fuse_neighbors(pairs: Sequence[InfoPair], topo: Topology, j: int) -> InfoPair:
    """Sum the pairs of N_j U {j}."""

    if len(pairs) != topo.m:
        raise DimensionMismatch(f"expected {topo.m} information pairs, got {len(pairs)}")
    fused = pairs[j]
    for i in topo.neighbor_sets[j]:
        fused = fused + pairs[i]
    return InfoPair(symmetrize(fused.S_local), fused.y_local)


def predict(belief: EcuBelief, sys: LtiSystem) -> EcuBelief:
    """P_pred = A P A^T + Q and x_pred = A x_hat - u."""

    P_pred = symmetrize(sys.A @ belief.P_post @ sys.A.T + sys.Qnoise)
    x_pred = sys.A @ belief.x_hat - sys.input_vector
    return EcuBelief(P_pred=P_pred, P_post=belief.P_post, x_hat=belief.x_hat, x_pred=x_pred)


def _spd_inverse(matrix: np.ndarray) -> np.ndarray:
    """Cholesky inverse with one jitter retry."""

    eye = np.eye(matrix.shape[0])
    for jitter in (0.0, settings.covariance_jitter):
        try:
            factor = linalg.cho_factor(matrix + jitter * eye, lower=True, check_finite=True)
        except (linalg.LinAlgError, ValueError):
            continue
        if jitter:
            logger.debug("covariance inversion needed jitter %.1e", jitter)
        return symmetrize(linalg.cho_solve(factor, eye))
    raise SingularCovariance("matrix is not positive definite even after jitter")


def update(belief: EcuBelief, fused: InfoPair) -> EcuBelief:
    """P_post = (P_pred^-1 + S)^-1 and x_hat = P_post (P_pred^-1 x_pred + y)."""

    x_pred = belief.x_hat if belief.x_pred is None else belief.x_pred
    if not np.any(fused.S_local) and not np.any(fused.y_local):
        return EcuBelief(P_pred=belief.P_pred, P_post=belief.P_pred, x_hat=x_pred, x_pred=x_pred)
    info_pred = _spd_inverse(belief.P_pred)
    P_post = _spd_inverse(symmetrize(info_pred + fused.S_local))
    x_hat = P_post @ (info_pred @ x_pred + fused.y_local)
    return EcuBelief(P_pred=belief.P_pred, P_post=P_post, x_hat=x_hat, x_pred=x_pred)


def dkf_step(
    beliefs: Sequence[EcuBelief],
    sys: LtiSystem,
    topo: Topology,
    gamma: np.ndarray,
    y_obs: np.ndarray,
) -> list[EcuBelief]:
    """One slot: predict, preprocess, exchange with neighbors once, update."""

    predicted = [predict(belief, sys) for belief in beliefs]
    pairs = [local_preprocess(sys, topo, j, gamma[j], y_obs) for j in range(topo.m)]
    return [update(predicted[j], fuse_neighbors(pairs, topo, j)) for j in range(topo.m)]


def centralized_step(
    P: np.ndarray, x: np.ndarray, sys: LtiSystem, received: np.ndarray, y_obs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Reference centralized Kalman step in covariance (gain) form."""

    P_pred = sys.A @ P @ sys.A.T + sys.Qnoise
    x_pred = sys.A @ x - sys.input_vector
    mask = np.asarray(received).astype(bool)
    if not mask.any():
        return P_pred, x_pred
    G = sys.G[mask]
    R = np.diag(sys.Unoise[mask])
    innovation_cov = G @ P_pred @ G.T + R
    gain = linalg.solve(innovation_cov, G @ P_pred, assume_a="pos").T
    x_post = x_pred + gain @ (np.asarray(y_obs, dtype=float)[mask] - G @ x_pred)
    identity = np.eye(sys.d)
    # Joseph form
    P_post = (identity - gain @ G) @ P_pred @ (identity - gain @ G).T + gain @ R @ gain.T
    return symmetrize(P_post), x_post
