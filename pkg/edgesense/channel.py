"""Transmission power <-> success-rate conversion and Bernoulli reception sampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable

import numpy as np

from edgesense.config import settings
from edgesense.errors import DimensionMismatch, InfinitePower, NegativePower


def _readonly(array: Any, dtype: Any = float) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ChannelParams:
    """Per (ecu, sensor) channel constants kappa in (0, 1)."""

    kappa: np.ndarray

    def __post_init__(self) -> None:
        kappa = np.atleast_2d(np.asarray(self.kappa, dtype=float))
        if kappa.ndim != 2:
            raise DimensionMismatch("kappa must be an m x n matrix")
        if np.any(kappa <= 0.0) or np.any(kappa >= 1.0):
            raise ValueError("kappa entries must lie strictly inside (0, 1)")
        object.__setattr__(self, "kappa", _readonly(kappa))

    @property
    def m(self) -> int:
        return int(self.kappa.shape[0])

    @property
    def n(self) -> int:
        return int(self.kappa.shape[1])

    @classmethod
    def from_rows(cls, kappa_per_ecu: Iterable[float], n: int) -> "ChannelParams":
        """One kappa per ECU shared by all its sensor links."""

        rows = np.asarray(list(kappa_per_ecu), dtype=float)
        return cls(np.repeat(rows[:, None], n, axis=1))

    @classmethod
    def from_physical(
        cls, epsilon: float, noise_density: float, bandwidth: float, m: int, n: int
    ) -> "ChannelParams":
        """kappa = exp(-epsilon / (N W)) for every link."""

        if noise_density <= 0 or bandwidth <= 0 or epsilon <= 0:
            raise ValueError("epsilon, noise density and bandwidth must be positive")
        value = float(np.exp(-epsilon / (noise_density * bandwidth)))
        return cls(np.full((m, n), min(value, settings.unlinked_kappa)))

    def with_overrides(
        self,
        overrides: Iterable[tuple[int, int, float]] = (),
        unlinked: Iterable[tuple[int, int]] = (),
    ) -> "ChannelParams":
        kappa = np.array(self.kappa, copy=True)
        for ecu, sensor, value in overrides:
            kappa[ecu, sensor] = value
        for ecu, sensor in unlinked:
            kappa[ecu, sensor] = settings.unlinked_kappa
        return ChannelParams(kappa)


@dataclass(frozen=True)
class TransmissionPlan:
    """Success rates mu[ecu, sensor] for one slot."""

    mu: np.ndarray

    def __post_init__(self) -> None:
        mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        if np.any(~np.isfinite(mu)) or np.any(mu < 0.0) or np.any(mu > 1.0):
            raise ValueError("success rates must lie in [0, 1]")
        object.__setattr__(self, "mu", _readonly(mu))

    @classmethod
    def constant(cls, value: float, m: int, n: int) -> "TransmissionPlan":
        return cls(np.full((m, n), float(value)))


@dataclass(frozen=True)
class ReceptionMatrix:
    """Realized reception indicators gamma[ecu, sensor] for one slot."""

    gamma: np.ndarray

    def __post_init__(self) -> None:
        gamma = np.atleast_2d(np.asarray(self.gamma))
        if not np.isin(gamma, (0, 1)).all():
            raise ValueError("reception indicators must be 0 or 1")
        object.__setattr__(self, "gamma", _readonly(gamma, np.int8))

    def selection(self, j: int) -> np.ndarray:
        """Diagonal of C_{j,k}."""

        return self.gamma[j]

    def count(self) -> int:
        return int(self.gamma.sum())

    def bitmask(self, j: int) -> int:
        """Sensor reception pattern of ECU j packed with sensor 0 as the lowest bit."""

        return int(sum(int(bit) << i for i, bit in enumerate(self.gamma[j])))


def success_rate_to_power(mu: float | np.ndarray, kappa: float | np.ndarray) -> Any:
    """E = ln(1 - mu) / ln(kappa)."""

    mu_arr = np.asarray(mu, dtype=float)
    kappa_arr = np.asarray(kappa, dtype=float)
    if np.any(mu_arr >= 1.0):
        raise InfinitePower("mu = 1 requires infinite transmission power")
    if np.any(mu_arr < 0.0):
        raise ValueError("success rate must be non-negative")
    power = np.log1p(-mu_arr) / np.log(kappa_arr)
    # -0.0 from log1p(0) / log(kappa)
    power = np.abs(power)
    return float(power) if power.ndim == 0 else power


def power_to_success_rate(power: float | np.ndarray, kappa: float | np.ndarray) -> Any:
    """mu = 1 - kappa^E."""

    power_arr = np.asarray(power, dtype=float)
    if np.any(power_arr < 0.0):
        raise NegativePower("transmission power must be non-negative")
    mu = -np.expm1(power_arr * np.log(np.asarray(kappa, dtype=float)))
    return float(mu) if mu.ndim == 0 else mu


def plan_power(plan: TransmissionPlan, channel: ChannelParams) -> np.ndarray:
    """Per-link power E[ecu, sensor] needed to realize a plan."""

    if plan.mu.shape != channel.kappa.shape:
        raise DimensionMismatch(f"plan {plan.mu.shape} does not match kappa {channel.kappa.shape}")
    return success_rate_to_power(plan.mu, channel.kappa)


def sample_receptions(plan: TransmissionPlan, rng: np.random.Generator) -> ReceptionMatrix:
    """Independent Bernoulli(mu) draws consumed in row-major (ecu, sensor) order."""

    draws = rng.random(plan.mu.shape)
    return ReceptionMatrix((draws < plan.mu).astype(np.int8))
