"""Sensing-scheduling MDP: covariance state, transmission-plan action, power/accuracy cost."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from edgesense.channel import (
    ChannelParams,
    ReceptionMatrix,
    TransmissionPlan,
    plan_power,
    sample_receptions,
)
from edgesense.dkf import EcuBelief, Topology, dkf_step
from edgesense.errors import DimensionMismatch
from edgesense.linsys import LtiSystem
from edgesense.obsbound import ActionBounds

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostWeights:
    alpha: float = 0.1
    beta: float = 0.1

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("cost weights must be non-negative")
        if self.alpha == 0 and self.beta == 0:
            raise ValueError("alpha and beta cannot both be zero")


@dataclass(frozen=True)
class MdpState:
    """Every ECU's belief at slot k."""

    beliefs: tuple[EcuBelief, ...]
    slot: int = 0

    @property
    def traces(self) -> list[float]:
        return [belief.trace for belief in self.beliefs]


@dataclass(frozen=True)
class StepResult:
    state: MdpState
    cost: float
    receptions: ReceptionMatrix
    accuracy_term: float
    power_term: float


def _psd_factor(matrix: np.ndarray) -> np.ndarray:
    """F with F F^T = matrix for a symmetric PSD matrix."""

    values, vectors = np.linalg.eigh(matrix)
    return vectors * np.sqrt(np.clip(values, 0.0, None))


def reset(sys: LtiSystem, topo: Topology, Gamma0: np.ndarray | None = None) -> MdpState:
    """Every ECU starts from P = Gamma0 and x_hat = x0_mean."""

    P0 = sys.Gamma0 if Gamma0 is None else np.asarray(Gamma0, dtype=float)
    if P0.shape != (sys.d, sys.d):
        raise DimensionMismatch(f"Gamma0 must be {sys.d}x{sys.d}")
    belief = EcuBelief.initial(P0, sys.x0_mean)
    return MdpState(beliefs=tuple(belief for _ in range(topo.m)), slot=0)


def state_features(state: MdpState) -> np.ndarray:
    """Row-major flattening of each P_post, ECUs in ascending order."""

    return np.concatenate([belief.P_post.ravel() for belief in state.beliefs])


def unflatten_features(features: np.ndarray, m: int, d: int) -> list[np.ndarray]:
    features = np.asarray(features, dtype=float)
    if features.shape != (m * d * d,):
        raise DimensionMismatch(f"expected {m * d * d} features, got {features.shape}")
    return [block.reshape(d, d) for block in np.split(features, m)]


@dataclass
class SensingEnv:
    """Plant, ECU graph and channel simulated slot by slot.

    The true state is simulated alongside the covariance recursion so that realized receptions
    and estimates are available; the cost depends only on beliefs, action and receptions.
    """

    sys: LtiSystem
    topo: Topology
    channel: ChannelParams
    weights: CostWeights = field(default_factory=CostWeights)
    bounds: ActionBounds | None = None
    record: bool = False
    clamp_count: int = 0
    x_true: np.ndarray | None = None
    trajectory: list[dict[str, Any]] = field(default_factory=list)
    _noise_factor: np.ndarray = field(init=False, repr=False)
    _init_factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._noise_factor = _psd_factor(self.sys.Qnoise)
        self._init_factor = _psd_factor(self.sys.Gamma0)
        if self.channel.kappa.shape != (self.topo.m, self.sys.n):
            raise DimensionMismatch(
                f"kappa {self.channel.kappa.shape} does not match m={self.topo.m}, n={self.sys.n}"
            )

    @property
    def m(self) -> int:
        return self.topo.m

    @property
    def n(self) -> int:
        return self.sys.n

    @property
    def feature_dim(self) -> int:
        return self.topo.m * self.sys.d * self.sys.d

    @property
    def action_dim(self) -> int:
        return self.m * self.n

    def reset(self, rng: np.random.Generator | None = None) -> MdpState:
        """Initial beliefs; draws the true initial state when an rng is given."""

        if rng is None:
            self.x_true = np.array(self.sys.x0_mean, dtype=float)
        else:
            self.x_true = self.sys.x0_mean + self._init_factor @ rng.standard_normal(self.sys.d)
        self.trajectory = []
        return reset(self.sys, self.topo)

    def state_features(self, state: MdpState) -> np.ndarray:
        return state_features(state)

    def _clamp(self, action: TransmissionPlan | np.ndarray) -> TransmissionPlan:
        mu = np.asarray(getattr(action, "mu", action), dtype=float).reshape(self.m, self.n)
        if self.bounds is None or self.bounds.contains(mu):
            return action if isinstance(action, TransmissionPlan) else TransmissionPlan(mu)
        self.clamp_count += 1
        if self.clamp_count == 1:
            logger.warning("action outside [%.6f, %.6f]; clamping", self.bounds.mu_lo,
                           self.bounds.mu_hi)
        else:
            logger.debug("clamped action (%d so far)", self.clamp_count)
        return TransmissionPlan(np.clip(mu, self.bounds.mu_lo, self.bounds.mu_hi))

    def step(
        self, state: MdpState, action: TransmissionPlan | np.ndarray, rng: np.random.Generator
    ) -> StepResult:
        """Draw receptions, advance the plant, filter and price the slot.

        Draw order per slot: receptions, process noise, observation noise.
        """

        plan = self._clamp(action)
        if self.x_true is None:
            self.x_true = np.array(self.sys.x0_mean, dtype=float)
        receptions = sample_receptions(plan, rng)
        noise = self._noise_factor @ rng.standard_normal(self.sys.d)
        self.x_true = self.sys.A @ self.x_true - self.sys.input_vector + noise
        y_obs = self.sys.G @ self.x_true + rng.normal(0.0, np.sqrt(self.sys.Unoise))

        beliefs = dkf_step(state.beliefs, self.sys, self.topo, receptions.gamma, y_obs)
        next_state = MdpState(beliefs=tuple(beliefs), slot=state.slot + 1)
        accuracy = self.weights.alpha * float(sum(b.trace for b in beliefs))
        power = self.weights.beta * float(plan_power(plan, self.channel).sum())
        cost = accuracy + power
        if self.record:
            row: dict[str, Any] = {"k": next_state.slot, "cost": cost}
            for j, belief in enumerate(beliefs):
                row[f"trace_p_{j}"] = belief.trace
                row[f"received_{j}"] = int(receptions.gamma[j].sum())
            row.update(
                action_min=float(plan.mu.min()),
                action_mean=float(plan.mu.mean()),
                action_max=float(plan.mu.max()),
                receptions=receptions.count(),
            )
            self.trajectory.append(row)
        return StepResult(next_state, cost, receptions, accuracy, power)
