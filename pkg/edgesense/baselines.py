"""Comparison policies over the compressed action interval."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Protocol

import numpy as np

from edgesense.channel import TransmissionPlan
from edgesense.obsbound import ActionBounds


class Policy(Protocol):
    name: str

    def act(self, state: Any, slot: int) -> TransmissionPlan: ...


class BaselineKind(str, Enum):
    SPM = "spm"
    RSM = "rsm"
    PSM = "psm"


@dataclass
class BaselinePolicy:
    """SPM always transmits at mu_hi, RSM draws uniformly, PSM alternates hi and lo."""

    kind: BaselineKind
    bounds: ActionBounds
    m: int
    n: int
    start_high: bool = True
    rng: np.random.Generator | None = None

    def __post_init__(self) -> None:
        self.kind = BaselineKind(self.kind)
        if self.kind is BaselineKind.RSM and self.rng is None:
            raise ValueError("RSM needs a random generator")

    @property
    def name(self) -> str:
        return self.kind.value

    def act(self, state: Any, slot: int) -> TransmissionPlan:
        return baseline_action(self, slot)


def baseline_action(policy: BaselinePolicy, slot: int) -> TransmissionPlan:
    lo, hi = policy.bounds.mu_lo, policy.bounds.mu_hi
    shape = (policy.m, policy.n)
    if policy.kind is BaselineKind.SPM:
        return TransmissionPlan.constant(hi, *shape)
    if policy.kind is BaselineKind.RSM:
        assert policy.rng is not None
        return TransmissionPlan(policy.rng.uniform(lo, hi, size=shape))
    high = (slot % 2 == 0) == policy.start_high
    return TransmissionPlan.constant(hi if high else lo, *shape)

