"""Deterministic policy-gradient actor-critic over the compressed action interval."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import special

from edgesense.channel import TransmissionPlan
from edgesense.env import MdpState, state_features
from edgesense.errors import DimensionMismatch, NonFiniteActivation
from edgesense.obsbound import ActionBounds

logger = logging.getLogger(__name__)

PARAM_NAMES = ("W1", "b1", "W2", "b2")
TRAINING_LOG_COLUMNS = ["episode", "mean_cost", "mean_power_term", "mean_accuracy_term"]


class TrainConfig(BaseModel):
    """Training schedule and optimizer settings."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    episodes: int = Field(200, gt=0)
    steps: int = Field(1000, gt=0)
    lr_actor: float = Field(1e-4, gt=0)
    lr_critic: float = Field(1e-3, gt=0)
    noise_std: float = Field(0.02, ge=0)
    discount: float = 0.99
    soft_update_rate: float = 0.001
    batch_size: int = Field(64, gt=0)
    buffer_capacity: int = Field(100_000, gt=0)
    hidden: int = Field(1024, gt=0)
    reward_scale: float = Field(1.0, gt=0)
    buffer_dtype: str = "float32"
    seed: int = Field(0, ge=0)

    @field_validator("discount", "soft_update_rate")
    @classmethod
    def _validate_open_unit(cls, value: float) -> float:
        if not 0.0 < value < 1.0:
            raise ValueError("must lie strictly inside (0, 1)")
        return value

    @field_validator("buffer_dtype")
    @classmethod
    def _validate_dtype(cls, value: str) -> str:
        if value not in {"float32", "float64"}:
            raise ValueError("buffer_dtype must be float32 or float64")
        return value


@dataclass
class MlpParams:
    """One-hidden-layer perceptron weights."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        if self.W1.shape[1] != self.b1.shape[0] or self.W2.shape != (self.b1.shape[0],
                                                                      self.b2.shape[0]):
            raise DimensionMismatch("inconsistent layer shapes")

    @classmethod
    def init(
        cls, rng: np.random.Generator, input_dim: int, hidden: int, output_dim: int
    ) -> "MlpParams":
        """Uniform fan-in initialization in +-1/sqrt(fan_in)."""

        lim1 = 1.0 / np.sqrt(input_dim)
        lim2 = 1.0 / np.sqrt(hidden)
        return cls(
            W1=rng.uniform(-lim1, lim1, size=(input_dim, hidden)),
            b1=rng.uniform(-lim1, lim1, size=hidden),
            W2=rng.uniform(-lim2, lim2, size=(hidden, output_dim)),
            b2=rng.uniform(-lim2, lim2, size=output_dim),
        )

    @classmethod
    def zeros(cls, input_dim: int, hidden: int, output_dim: int) -> "MlpParams":
        return cls(np.zeros((input_dim, hidden)), np.zeros(hidden),
                   np.zeros((hidden, output_dim)), np.zeros(output_dim))

    @property
    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: tuple(getattr(self, name).shape) for name in PARAM_NAMES}

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "MlpParams":
        return MlpParams(**{name: value.copy() for name, value in self.arrays().items()})

    def distance(self, other: "MlpParams") -> float:
        return float(np.sqrt(sum(np.sum((getattr(self, k) - getattr(other, k)) ** 2)
                                 for k in PARAM_NAMES)))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(value)) for value in self.arrays().values())


def _check_finite(name: str, values: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NonFiniteActivation(f"{name} produced non-finite values")
    return values


def _hidden(params: MlpParams, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    pre = inputs @ params.W1 + params.b1
    return pre, np.maximum(pre, 0.0)


def _backprop(
    params: MlpParams, inputs: np.ndarray, pre: np.ndarray, hidden: np.ndarray, grad_out: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Parameter gradients and input gradient given dLoss/dOutput (per sample rows)."""

    grad_hidden = (grad_out @ params.W2.T) * (pre > 0.0)
    grads = {
        "W2": hidden.T @ grad_out,
        "b2": grad_out.sum(axis=0),
        "W1": inputs.T @ grad_hidden,
        "b1": grad_hidden.sum(axis=0),
    }
    return grads, grad_hidden @ params.W1.T


@dataclass
class Actor:
    """pi(s) = lo + (hi - lo) * logistic(MLP(s)), reshaped to m x n."""

    params: MlpParams
    bounds: ActionBounds
    m: int
    n: int

    def forward(self, features: np.ndarray) -> np.ndarray:
        batch = np.atleast_2d(features)
        _, hidden = _hidden(self.params, batch)
        logits = _check_finite("actor", hidden @ self.params.W2 + self.params.b2)
        lo, hi = self.bounds.mu_lo, self.bounds.mu_hi
        return np.clip(lo + (hi - lo) * special.expit(logits), lo, hi)

    def plan(self, features: np.ndarray) -> TransmissionPlan:
        return TransmissionPlan(self.forward(features)[0].reshape(self.m, self.n))

    def param_gradient(
        self, features: np.ndarray, grad_action: np.ndarray
    ) -> dict[str, np.ndarray]:
        """Gradient of sum(grad_action * pi(features)) with respect to every parameter."""

        batch = np.atleast_2d(features)
        pre, hidden = _hidden(self.params, batch)
        squashed = special.expit(hidden @ self.params.W2 + self.params.b2)
        scale = self.bounds.mu_hi - self.bounds.mu_lo
        grad_logits = grad_action * scale * squashed * (1.0 - squashed)
        grads, _ = _backprop(self.params, batch, pre, hidden, grad_logits)
        return grads


def actor_forward(params: MlpParams, features: np.ndarray, bounds: ActionBounds, m: int,
                  n: int) -> TransmissionPlan:
    return Actor(params, bounds, m, n).plan(features)


class CriticLike(Protocol):
    def forward(self, features: np.ndarray, action: np.ndarray) -> np.ndarray: ...

    def action_gradient(self, features: np.ndarray, action: np.ndarray) -> np.ndarray: ...


@dataclass
class Critic:
    """Q(s, a) = MLP([s, a]) with a scalar linear output."""

    params: MlpParams
    state_dim: int

    def _inputs(self, features: np.ndarray, action: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(features)
        action = np.atleast_2d(action).reshape(features.shape[0], -1)
        return np.hstack([features, action])

    def forward(self, features: np.ndarray, action: np.ndarray) -> np.ndarray:
        _, hidden = _hidden(self.params, self._inputs(features, action))
        return _check_finite("critic", hidden @ self.params.W2 + self.params.b2)[:, 0]

    def _grads(
        self, features: np.ndarray, action: np.ndarray, grad_q: np.ndarray
    ) -> tuple[dict[str, np.ndarray], np.ndarray]:
        inputs = self._inputs(features, action)
        pre, hidden = _hidden(self.params, inputs)
        return _backprop(self.params, inputs, pre, hidden, np.reshape(grad_q, (-1, 1)))

    def param_gradient(
        self, features: np.ndarray, action: np.ndarray, grad_q: np.ndarray
    ) -> dict[str, np.ndarray]:
        return self._grads(features, action, grad_q)[0]

    def action_gradient(self, features: np.ndarray, action: np.ndarray) -> np.ndarray:
        """dQ/da per sample."""

        ones = np.ones(np.atleast_2d(features).shape[0])
        return self._grads(features, action, ones)[1][:, self.state_dim:]


def critic_forward(params: MlpParams, features: np.ndarray, action: np.ndarray) -> float:
    features = np.atleast_2d(features)
    return float(Critic(params, features.shape[1]).forward(features, action)[0])


@dataclass
class Adam:
    """Adaptive moment estimation with bias correction."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    moments: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def step(self, params: MlpParams, grads: dict[str, np.ndarray]) -> None:
        """Descend along grads in place."""

        self.t += 1
        for name in PARAM_NAMES:
            grad = grads[name]
            m, v = self.moments.get(name, (np.zeros_like(grad), np.zeros_like(grad)))
            m = self.beta1 * m + (1.0 - self.beta1) * grad
            v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.moments[name] = (m, v)
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            value = getattr(params, name)
            value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class Batch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring of (s, a, r, s') transitions."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int,
                 dtype: str = "float32") -> None:
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim), dtype=dtype)
        self.actions = np.zeros((capacity, action_dim), dtype=dtype)
        self.rewards = np.zeros(capacity, dtype=dtype)
        self.next_states = np.zeros((capacity, state_dim), dtype=dtype)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, state: np.ndarray, action: np.ndarray, reward: float,
            next_state: np.ndarray) -> None:
        i = self.cursor
        self.states[i] = state
        self.actions[i] = np.ravel(action)
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size < batch_size:
            raise ValueError(f"buffer holds {self.size} transitions, need {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return Batch(
            states=self.states[idx].astype(float),
            actions=self.actions[idx].astype(float),
            rewards=self.rewards[idx].astype(float),
            next_states=self.next_states[idx].astype(float),
        )


def critic_targets(
    batch: Batch, actor_target: Actor, critic_target: CriticLike, discount: float
) -> np.ndarray:
    """r + discount * Q_targ(s', pi_targ(s'))."""

    next_actions = actor_target.forward(batch.next_states)
    return batch.rewards + discount * critic_target.forward(batch.next_states, next_actions)


def critic_loss(critic: Critic, batch: Batch, targets: np.ndarray) -> float:
    residual = critic.forward(batch.states, batch.actions) - targets
    return float(np.mean(residual**2))


def update_critic(critic: Critic, optimizer: Adam, batch: Batch, targets: np.ndarray) -> float:
    """One Adam step on the mean squared TD error; returns the pre-step loss."""

    residual = critic.forward(batch.states, batch.actions) - targets
    grad_q = 2.0 * residual / residual.size
    optimizer.step(critic.params, critic.param_gradient(batch.states, batch.actions, grad_q))
    return float(np.mean(residual**2))


def update_actor(actor: Actor, critic: CriticLike, optimizer: Adam, states: np.ndarray) -> float:
    """One Adam ascent step on mean Q(s, pi(s)); returns the pre-step objective."""

    states = np.atleast_2d(states)
    actions = actor.forward(states)
    q_values = critic.forward(states, actions)
    grad_action = critic.action_gradient(states, actions) / states.shape[0]
    ascent = actor.param_gradient(states, grad_action)
    optimizer.step(actor.params, {name: -grad for name, grad in ascent.items()})
    return float(np.mean(q_values))


def soft_update(target: MlpParams, online: MlpParams, rate: float) -> MlpParams:
    """target <- rate * online + (1 - rate) * target, in place."""

    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    for name in PARAM_NAMES:
        value = getattr(target, name)
        value *= 1.0 - rate
        value += rate * getattr(online, name)
    return target


class TrainableEnv(Protocol):
    m: int
    n: int
    bounds: ActionBounds | None

    @property
    def feature_dim(self) -> int: ...

    def reset(self, rng: np.random.Generator | None = None) -> Any: ...

    def state_features(self, state: Any) -> np.ndarray: ...

    def step(self, state: Any, action: Any, rng: np.random.Generator) -> Any: ...


@dataclass
class Agent:
    actor: Actor
    critic: Critic
    actor_target: Actor
    critic_target: Critic
    actor_opt: Adam
    critic_opt: Adam

    @classmethod
    def create(cls, rng: np.random.Generator, state_dim: int, m: int, n: int,
               bounds: ActionBounds, cfg: TrainConfig) -> "Agent":
        actor_params = MlpParams.init(rng, state_dim, cfg.hidden, m * n)
        critic_params = MlpParams.init(rng, state_dim + m * n, cfg.hidden, 1)
        return cls(
            actor=Actor(actor_params, bounds, m, n),
            critic=Critic(critic_params, state_dim),
            actor_target=Actor(actor_params.copy(), bounds, m, n),
            critic_target=Critic(critic_params.copy(), state_dim),
            actor_opt=Adam(cfg.lr_actor),
            critic_opt=Adam(cfg.lr_critic),
        )

    def policy(self) -> "ActorPolicy":
        return ActorPolicy(self.actor)

    def checkpoint(self) -> dict[str, Any]:
        return {
            "shapes": {"actor": self.actor.params.shapes, "critic": self.critic.params.shapes},
            "actor": self.actor.params.arrays(),
            "critic": self.critic.params.arrays(),
            "actor_target": self.actor_target.params.arrays(),
            "critic_target": self.critic_target.params.arrays(),
            "bounds": (self.actor.bounds.mu_lo, self.actor.bounds.mu_hi),
            "m": self.actor.m,
            "n": self.actor.n,
            "state_dim": self.critic.state_dim,
        }

    @classmethod
    def from_checkpoint(cls, payload: dict[str, Any], cfg: TrainConfig) -> "Agent":
        bounds = ActionBounds(*payload["bounds"])
        m, n, state_dim = payload["m"], payload["n"], payload["state_dim"]

        def params(key: str) -> MlpParams:
            return MlpParams(**{k: np.array(v, dtype=float) for k, v in payload[key].items()})

        return cls(
            actor=Actor(params("actor"), bounds, m, n),
            critic=Critic(params("critic"), state_dim),
            actor_target=Actor(params("actor_target"), bounds, m, n),
            critic_target=Critic(params("critic_target"), state_dim),
            actor_opt=Adam(cfg.lr_actor),
            critic_opt=Adam(cfg.lr_critic),
        )


@dataclass
class ActorPolicy:
    """Greedy actor used for evaluation (no exploration noise)."""

    actor: Actor
    name: str = "oidm"

    def act(self, state: MdpState, slot: int) -> TransmissionPlan:
        return self.actor.plan(state_features(state))


@dataclass
class TrainResult:
    agent: Agent
    log: pd.DataFrame
    buffer: ReplayBuffer
    updates: int


def train(
    env: TrainableEnv,
    bounds: ActionBounds,
    cfg: TrainConfig,
    checkpoint_path: str | Path | None = None,
) -> TrainResult:
    """Explore with clipped Gaussian noise, replay, critic then actor step, soft targets."""

    from edgesense.storage import save_checkpoint

    root = np.random.SeedSequence(cfg.seed)
    init_seq, env_seq, noise_seq, replay_seq = root.spawn(4)
    agent = Agent.create(np.random.default_rng(init_seq), env.feature_dim, env.m, env.n,
                         bounds, cfg)
    env_rng = np.random.default_rng(env_seq)
    noise_rng = np.random.default_rng(noise_seq)
    replay_rng = np.random.default_rng(replay_seq)
    buffer = ReplayBuffer(cfg.buffer_capacity, env.feature_dim, env.m * env.n, cfg.buffer_dtype)
    rows = []
    updates = 0
    try:
        for episode in range(cfg.episodes):
            state = env.reset(env_rng)
            features = env.state_features(state)
            costs, powers, accuracies = [], [], []
            for _ in range(cfg.steps):
                action = agent.actor.forward(features)[0]
                action = action + noise_rng.normal(0.0, cfg.noise_std, size=action.shape)
                action = np.clip(action, bounds.mu_lo, bounds.mu_hi)
                result = env.step(state, TransmissionPlan(action.reshape(env.m, env.n)), env_rng)
                next_features = env.state_features(result.state)
                buffer.add(features, action, -cfg.reward_scale * result.cost, next_features)
                costs.append(result.cost)
                powers.append(result.power_term)
                accuracies.append(result.accuracy_term)
                state, features = result.state, next_features

                if len(buffer) < cfg.batch_size:
                    continue
                batch = buffer.sample(cfg.batch_size, replay_rng)
                targets = critic_targets(batch, agent.actor_target, agent.critic_target,
                                         cfg.discount)
                update_critic(agent.critic, agent.critic_opt, batch, targets)
                update_actor(agent.actor, agent.critic, agent.actor_opt, batch.states)
                soft_update(agent.critic_target.params, agent.critic.params, cfg.soft_update_rate)
                soft_update(agent.actor_target.params, agent.actor.params, cfg.soft_update_rate)
                updates += 1
                if not (agent.actor.params.is_finite() and agent.critic.params.is_finite()):
                    raise NonFiniteActivation("network parameters became non-finite")

            row = {
                "episode": episode,
                "mean_cost": float(np.mean(costs)),
                "mean_power_term": float(np.mean(powers)),
                "mean_accuracy_term": float(np.mean(accuracies)),
            }
            rows.append(row)
            logger.info("episode %d mean cost %.6f (power %.6f, accuracy %.6f)", episode,
                        row["mean_cost"], row["mean_power_term"], row["mean_accuracy_term"])
    except NonFiniteActivation:
        logger.error("non-finite activation after %d updates; dumping state", updates)
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, agent.checkpoint())
        raise

    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, agent.checkpoint())
    log = pd.DataFrame(rows, columns=TRAINING_LOG_COLUMNS)
    return TrainResult(agent=agent, log=log, buffer=buffer, updates=updates)
