"""Linear time-invariant plant, block decomposition and observability matrices."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Sequence

import numpy as np
from scipy import linalg
from scipy.cluster.hierarchy import fcluster, linkage

from edgesense.config import settings
from edgesense.errors import (
    DimensionMismatch,
    IllConditionedTransform,
    InvalidSystem,
    NotObservable,
    ZeroEigenvalue,
    ZeroNoiseVariance,
)

if TYPE_CHECKING:  # pragma: no cover
    from edgesense.dkf import Topology

logger = logging.getLogger(__name__)


def _frozen(array: Any, dtype: Any = float) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def numerical_rank(matrix: np.ndarray, rank_tol: float | None = None) -> int:
    """Count singular values above ``rank_tol * sigma_max`` of the matrix as given."""

    tol = settings.rank_tol if rank_tol is None else rank_tol
    matrix = np.asarray(matrix)
    if matrix.size == 0:
        return 0
    sigma = np.linalg.svd(matrix, compute_uv=False)
    if sigma[0] == 0.0:
        return 0
    return int(np.count_nonzero(sigma > tol * sigma[0]))


def _psd_check(name: str, matrix: np.ndarray, dim: int) -> None:
    if matrix.shape != (dim, dim):
        raise DimensionMismatch(f"{name} must be {dim}x{dim}, got {matrix.shape}")
    scale = max(1.0, float(np.abs(matrix).max(initial=0.0)))
    if not np.allclose(matrix, matrix.T, atol=1e-12 * scale):
        raise InvalidSystem(f"{name} must be symmetric")
    if dim and np.linalg.eigvalsh(0.5 * (matrix + matrix.T)).min() < -1e-10 * scale:
        raise InvalidSystem(f"{name} must be positive semidefinite")


@dataclass(frozen=True)
class LtiSystem:
    """Plant x+ = A x - u + w observed by n single-row sensors y_i = G_i x + v_i."""

    A: np.ndarray
    G: np.ndarray
    Qnoise: np.ndarray
    Unoise: np.ndarray
    x0_mean: np.ndarray
    Gamma0: np.ndarray
    u: np.ndarray | None = None

    def __post_init__(self) -> None:
        A = _frozen(self.A)
        G = _frozen(np.atleast_2d(self.G))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        d = A.shape[0]
        if G.shape[1] != d:
            raise DimensionMismatch(f"G must have {d} columns, got {G.shape}")
        Q = _frozen(self.Qnoise)
        Gamma0 = _frozen(self.Gamma0)
        _psd_check("Qnoise", Q, d)
        _psd_check("Gamma0", Gamma0, d)
        U = _frozen(np.ravel(self.Unoise))
        if U.shape != (G.shape[0],):
            raise DimensionMismatch(f"Unoise must hold {G.shape[0]} variances, got {U.shape}")
        if not np.all(U > 0):
            raise ZeroNoiseVariance("observation noise variances must be positive")
        x0 = _frozen(np.ravel(self.x0_mean))
        if x0.shape != (d,):
            raise DimensionMismatch(f"x0_mean must have length {d}")
        u = None if self.u is None else _frozen(np.ravel(self.u))
        if u is not None and u.shape != (d,):
            raise DimensionMismatch(f"u must have length {d}")

        norm = max(np.abs(A).sum(axis=1).max(), 1e-300)
        eig = np.linalg.eigvals(A)
        if np.abs(eig).min() < settings.singular_tol * norm:
            raise InvalidSystem("A must be invertible")

        for name, value in (("A", A), ("G", G), ("Qnoise", Q), ("Unoise", U),
                            ("x0_mean", x0), ("Gamma0", Gamma0), ("u", u)):
            object.__setattr__(self, name, value)

        # raises NotObservable
        observability_index(self)

    @property
    def d(self) -> int:
        return int(self.A.shape[0])

    @property
    def n(self) -> int:
        return int(self.G.shape[0])

    @property
    def input_vector(self) -> np.ndarray:
        """Known constant input subtracted each step (zeros when the plant has none)."""

        return np.zeros(self.d) if self.u is None else self.u

    @property
    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.A, 2))


@dataclass(frozen=True)
class JordanForm:
    """Block decomposition A = P J P^-1 with one block per eigenvalue cluster."""

    P: np.ndarray
    J: np.ndarray
    blocks: tuple[tuple[int, int, complex], ...]
    Gtilde: np.ndarray
    condition: float = field(default=1.0)

    @property
    def d(self) -> int:
        return int(self.J.shape[0])

    @property
    def n(self) -> int:
        return int(self.Gtilde.shape[0])

    @property
    def block_starts(self) -> list[int]:
        return [start for start, _, _ in self.blocks]


def _stacked(A: np.ndarray, G: np.ndarray, L: int) -> np.ndarray:
    rows = []
    power = np.eye(A.shape[0], dtype=A.dtype)
    for _ in range(L):
        rows.append(G @ power)
        power = power @ A
    return np.vstack(rows)


def observability_index_of(A: np.ndarray, G: np.ndarray, rank_tol: float | None = None) -> int:
    """Smallest L <= d with rank [G; GA; ...; GA^(L-1)] = d."""

    d = A.shape[0]
    for L in range(1, d + 1):
        if numerical_rank(_stacked(A, G, L), rank_tol) == d:
            return L
    raise NotObservable(f"(A, G) is not observable: rank at L={d} is below {d}")


def observability_index(sys: LtiSystem, rank_tol: float | None = None) -> int:
    return observability_index_of(sys.A, sys.G, rank_tol)


def _cluster_levels(eig: np.ndarray, base_tol: float) -> list[np.ndarray]:
    """Flat cluster labelings from fine to coarse along the single-linkage dendrogram."""

    if eig.size == 1:
        return [np.zeros(1, dtype=int)]
    points = np.column_stack([eig.real, eig.imag])
    tree = linkage(points, method="single")
    heights = [base_tol] + sorted({float(h) for h in tree[:, 2] if h > base_tol})
    levels = []
    seen: set[tuple[int, ...]] = set()
    for height in heights:
        labels = fcluster(tree, t=height, criterion="distance") - 1
        key = tuple(labels.tolist())
        if key not in seen:
            seen.add(key)
            levels.append(labels)
    return levels


def _ordered_centroids(eig: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    count = labels.max() + 1
    centroids = np.array([eig[labels == c].mean() for c in range(count)])
    sizes = np.array([int(np.count_nonzero(labels == c)) for c in range(count)])
    order = sorted(range(count), key=lambda c: (-abs(centroids[c]), -centroids[c].real,
                                                -centroids[c].imag))
    return centroids[order], sizes[order]


def _block_diagonalize(
    A: np.ndarray, centroids: np.ndarray, sizes: np.ndarray
) -> tuple[np.ndarray, np.ndarray] | None:
    """Reorder a complex Schur form by cluster and decouple clusters by Sylvester solves."""

    T, Z = linalg.schur(A.astype(complex), output="complex")
    d = A.shape[0]
    offset = 0
    for idx in range(len(centroids) - 1):
        remaining = centroids[idx:]

        def select(x: complex, remaining: np.ndarray = remaining) -> bool:
            return bool(np.argmin(np.abs(remaining - x)) == 0)

        T2, Z2, sdim = linalg.schur(T[offset:, offset:], output="complex", sort=select)
        if sdim != sizes[idx]:
            return None
        T[offset:, offset:] = T2
        T[:offset, offset:] = T[:offset, offset:] @ Z2
        Z[:, offset:] = Z[:, offset:] @ Z2
        offset += sdim

    P = Z.copy()
    starts = np.concatenate([[0], np.cumsum(sizes)])
    for a, b in zip(starts[:-1], starts[1:]):
        if b >= d:
            break
        T11, T22, T12 = T[a:b, a:b], T[b:, b:], T[a:b, b:]
        Y = linalg.solve_sylvester(T11, -T22, -T12)
        if not np.all(np.isfinite(Y)):
            return None
        T[a:b, b:] = 0.0
        P[:, b:] = P[:, b:] + P[:, a:b] @ Y

    J = np.zeros_like(T)
    for a, b in zip(starts[:-1], starts[1:]):
        J[a:b, a:b] = np.triu(T[a:b, a:b])
    return P, J


def jordanize(
    sys: LtiSystem,
    *,
    eig_cluster_tol: float | None = None,
    cond_limit: float | None = None,
    jordan_tol: float | None = None,
    merge_on_ill_conditioning: bool = True,
) -> JordanForm:
    """Decompose A into invariant-subspace blocks, one per eigenvalue cluster.

    Clusters start at ``eig_cluster_tol * ||A||_inf``; when a clustering level cannot be
    decoupled within ``cond_limit`` the next coarser dendrogram level is tried.
    """

    tol = settings.eig_cluster_tol if eig_cluster_tol is None else eig_cluster_tol
    limit = settings.cond_limit if cond_limit is None else cond_limit
    recon_tol = settings.jordan_tol if jordan_tol is None else jordan_tol

    A = sys.A
    norm = float(np.abs(A).sum(axis=1).max())
    eig = np.linalg.eigvals(A)
    if np.abs(eig).min() < settings.singular_tol * norm:
        raise ZeroEigenvalue("A has an eigenvalue numerically equal to zero")

    last_condition = np.inf
    for level, labels in enumerate(_cluster_levels(eig, tol * norm)):
        centroids, sizes = _ordered_centroids(eig, labels)
        result = _block_diagonalize(A, centroids, sizes)
        if result is None:
            condition = np.inf
        else:
            P, J = result
            condition = float(np.linalg.cond(P))
        if result is not None and condition <= limit:
            residual = np.abs(P @ J @ np.linalg.inv(P) - A).sum(axis=1).max()
            if residual <= recon_tol * norm:
                starts = np.concatenate([[0], np.cumsum(sizes)])
                blocks = tuple(
                    (int(a), int(s), complex(c)) for a, s, c in zip(starts[:-1], sizes, centroids)
                )
                if level:
                    logger.info("merged eigenvalue clusters to %d blocks (level %d)",
                                len(blocks), level)
                return JordanForm(P=_frozen(P, complex), J=_frozen(J, complex), blocks=blocks,
                                  Gtilde=_frozen(sys.G @ P, complex), condition=condition)
            condition = np.inf
        last_condition = condition
        if not merge_on_ill_conditioning:
            break
    raise IllConditionedTransform(last_condition, limit)


def _gamma(reception: Any) -> np.ndarray:
    return np.asarray(getattr(reception, "gamma", reception))


def observability_matrix(
    jf: JordanForm, receptions: Sequence[Any], topo: "Topology", j: int
) -> np.ndarray:
    """Stack (Theta_j kron I_n) C_{k0+t} Gtilde J^t over the window.

    Rows are grouped by slot, then by ECU of N_j U {j} in ascending order, then by sensor; a
    row is zero when that ECU did not receive that sensor in that slot.
    """

    if not 0 <= j < topo.m:
        raise DimensionMismatch(f"ECU index {j} outside 0..{topo.m - 1}")
    if len(receptions) < 1:
        raise DimensionMismatch("reception window must contain at least one slot")
    hood = topo.neighborhood(j)
    n = jf.n
    blocks = []
    power = np.eye(jf.d, dtype=complex)
    for reception in receptions:
        gamma = _gamma(reception)
        if gamma.shape != (topo.m, n):
            raise DimensionMismatch(f"reception must be {topo.m}x{n}, got {gamma.shape}")
        rows = jf.Gtilde @ power
        for tau in hood:
            blocks.append(gamma[tau][:, None] * rows)
        power = power @ jf.J
    return np.vstack(blocks)


def is_L_step_observable(
    jf: JordanForm,
    receptions: Sequence[Any],
    topo: "Topology",
    j: int,
    rank_tol: float | None = None,
) -> bool:
    return numerical_rank(observability_matrix(jf, receptions, topo, j), rank_tol) == jf.d
