"""Observability conditions, probability bounds and action-space compression."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Any, Callable, Literal, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import optimize, special, stats

from edgesense.channel import TransmissionPlan, sample_receptions
from edgesense.config import settings
from edgesense.dkf import Topology
from edgesense.errors import (
    DimensionMismatch,
    EmptyActionSpace,
    EnumerationTooLarge,
    TargetUnreachable,
    UncoveredBlock,
)
from edgesense.linsys import (
    JordanForm,
    LtiSystem,
    is_L_step_observable,
    numerical_rank,
    observability_index_of,
)

logger = logging.getLogger(__name__)

Bound = Literal["lower", "upper"]


@dataclass(frozen=True)
class BoundContext:
    """Everything the bounds need for ECU j over windows of L slots."""

    zeta: int
    rank_gtilde: int
    M_set: tuple[int, ...]
    L: int
    topo: Topology
    ecu: int
    n: int

    def __post_init__(self) -> None:
        if self.L < 1:
            raise ValueError("window length must be positive")
        if not self.M_set:
            raise ValueError("M_set must be nonempty")
        if self.varrho > self.varpi:
            raise ValueError(f"varrho={self.varrho} exceeds varpi={self.varpi}")

    @property
    def hood_size(self) -> int:
        return len(self.topo.neighborhood(self.ecu))

    @property
    def varpi(self) -> int:
        """Transmission opportunities (|N_j| + 1) n L."""

        return self.hood_size * self.n * self.L

    @property
    def varrho(self) -> int:
        """Success-count threshold (zeta - 1) rank(Gtilde) + 1."""

        return (self.zeta - 1) * self.rank_gtilde + 1


@dataclass(frozen=True)
class ActionBounds:
    """Compressed action interval [mu_lo, mu_hi] shared by every link."""

    mu_lo: float
    mu_hi: float
    p0: float | None = None
    L: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.mu_lo <= self.mu_hi <= 1.0:
            raise ValueError(f"invalid action bounds ({self.mu_lo}, {self.mu_hi})")

    @property
    def width(self) -> float:
        return self.mu_hi - self.mu_lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.mu_lo + self.mu_hi)

    def contains(self, mu: np.ndarray, atol: float = 0.0) -> bool:
        mu = np.asarray(mu)
        return bool(np.all(mu >= self.mu_lo - atol) and np.all(mu <= self.mu_hi + atol))


def _gamma(reception: Any) -> np.ndarray:
    return np.asarray(getattr(reception, "gamma", reception))


def _hood_coverage(receptions: Sequence[Any], topo: Topology, j: int) -> np.ndarray:
    """coverage[k, i] = number of ECUs in N_j U {j} that received sensor i in slot k."""

    hood = topo.neighborhood(j)
    return np.array([_gamma(r)[hood].sum(axis=0) for r in receptions])


def necessary_condition(
    receptions: Sequence[Any], topo: Topology, j: int, ctx: BoundContext
) -> bool:
    """Total neighborhood receptions reach (zeta - 1) rank(Gtilde) + 1."""

    return int(_hood_coverage(receptions, topo, j).sum()) >= ctx.varrho


def sufficient_condition(
    receptions: Sequence[Any], topo: Topology, j: int, ctx: BoundContext
) -> bool:
    """A contiguous run of at least zeta slots where every row of M is received."""

    coverage = _hood_coverage(receptions, topo, j)
    hit = (coverage[:, list(ctx.M_set)] >= 1).all(axis=1)
    run = 0
    for slot_hit in hit:
        run = run + 1 if slot_hit else 0
        if run >= ctx.zeta:
            return True
    return False


def compute_M(jf: JordanForm, threshold: float | None = None) -> tuple[int, ...]:
    """Rows of Gtilde that see the first column of some block (lowest index per block).

    Without an explicit threshold each block gets its own cutoff: the global floor
    m_threshold * max|Gtilde|, raised to eps^(1/size) times the column peak. The leading
    eigenvector of a defective size-s block is only resolved to about eps^(1/s), so
    smaller entries in its column are rounding residue, not support.
    """

    magnitude = np.abs(jf.Gtilde)
    floor = settings.m_threshold * float(magnitude.max(initial=0.0))
    eps = float(np.finfo(float).eps)
    chosen = []
    for start, size, _ in jf.blocks:
        column = magnitude[:, start]
        if threshold is None:
            cutoff = max(floor, eps ** (1.0 / size) * float(column.max(initial=0.0)))
        else:
            cutoff = threshold
        rows = np.flatnonzero(column > cutoff)
        if rows.size == 0:
            raise UncoveredBlock(start)
        chosen.append(int(rows[0]))
    return tuple(sorted(set(chosen)))


def build_context(
    jf: JordanForm, topo: Topology, j: int, L: int, threshold: float | None = None
) -> BoundContext:
    zeta = observability_index_of(jf.J, jf.Gtilde)
    return BoundContext(
        zeta=zeta,
        rank_gtilde=numerical_rank(jf.Gtilde),
        M_set=compute_M(jf, threshold),
        L=L,
        topo=topo,
        ecu=j,
        n=jf.n,
    )


def effective_rates(plan: TransmissionPlan, topo: Topology, j: int) -> np.ndarray:
    """mu_hat[i] = 1 - prod over N_j U {j} of (1 - mu[tau, i])."""

    hood = topo.neighborhood(j)
    return 1.0 - np.prod(1.0 - plan.mu[hood], axis=0)


def _lower_uniform(zeta: int, L: int, M_count: int, mu_hat: float) -> float:
    iotas = np.arange(zeta, L + 1)
    terms = special.comb(L, iotas) * (mu_hat**iotas * (1.0 - mu_hat) ** (L - iotas)) ** M_count
    return float(np.clip(terms.sum(), 0.0, 1.0))


def lower_bound_phi(ctx: BoundContext, mu_hat: Any) -> float:
    """Lower bound on the window observability probability.

    ``mu_hat`` is a scalar (uniform fast path) or an array of shape (|M|, L) holding the
    effective rate of each row of M in each slot; the latter enumerates slot subsets.
    """

    mu_hat = np.asarray(mu_hat, dtype=float)
    M_count, L, zeta = len(ctx.M_set), ctx.L, ctx.zeta
    if mu_hat.ndim == 0:
        return _lower_uniform(zeta, L, M_count, float(mu_hat))
    if mu_hat.shape != (M_count, L):
        raise DimensionMismatch(f"mu_hat must have shape {(M_count, L)}, got {mu_hat.shape}")
    if np.all(mu_hat == mu_hat.flat[0]):
        return _lower_uniform(zeta, L, M_count, float(mu_hat.flat[0]))

    subsets = int(sum(special.comb(L, iota, exact=True) for iota in range(zeta, L + 1)))
    if subsets > settings.enumeration_budget:
        raise EnumerationTooLarge(f"{subsets} slot subsets exceed {settings.enumeration_budget}")
    total = 0.0
    for iota in range(zeta, L + 1):
        for chosen in itertools.combinations(range(L), iota):
            mask = np.zeros(L, dtype=bool)
            mask[list(chosen)] = True
            total += float(np.prod(np.where(mask, mu_hat, 1.0 - mu_hat)))
    return float(np.clip(total, 0.0, 1.0))


def poisson_binomial_tail(rates: Sequence[float], threshold: int) -> float:
    """P[at least ``threshold`` successes] for independent trials with the given rates."""

    if threshold <= 0:
        return 1.0
    pmf = np.array([1.0])
    for p in rates:
        nxt = np.zeros(pmf.size + 1)
        nxt[:-1] = pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    if threshold >= pmf.size:
        return 0.0
    return float(np.clip(pmf[threshold:].sum(), 0.0, 1.0))


def binomial_tail(trials: int, threshold: int, rate: float) -> float:
    """P[Bin(trials, rate) >= threshold]."""

    if threshold <= 0:
        return 1.0
    return float(stats.binom.sf(threshold - 1, trials, rate))


def upper_bound_phi(ctx: BoundContext, mu: Any) -> float:
    """Probability that at least varrho of the varpi neighborhood transmissions succeed."""

    mu = np.asarray(mu, dtype=float)
    if mu.ndim == 0:
        return binomial_tail(ctx.varpi, ctx.varrho, float(mu))
    rates = mu.ravel()
    if rates.size != ctx.varpi:
        raise DimensionMismatch(f"expected {ctx.varpi} rates, got {rates.size}")
    return poisson_binomial_tail(rates, ctx.varrho)


def _uniform_bound(bound: Bound, ctx: BoundContext) -> Callable[[float], float]:
    if bound == "lower":
        hood = ctx.hood_size
        return lambda mu: lower_bound_phi(ctx, 1.0 - (1.0 - mu) ** hood)
    if bound == "upper":
        return lambda mu: upper_bound_phi(ctx, mu)
    raise ValueError(f"unknown bound {bound!r}")


def solve_rate_for_target(bound: Bound, ctx: BoundContext, p0: float) -> float:
    """Uniform success rate at which the chosen bound equals p0."""

    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie in (0, 1)")
    phi = _uniform_bound(bound, ctx)
    if phi(0.0) >= p0:
        return 0.0
    supremum = phi(1.0)
    if supremum < p0:
        raise TargetUnreachable(p0, supremum)
    root = optimize.brentq(lambda mu: phi(mu) - p0, 0.0, 1.0, xtol=1e-14, maxiter=500)
    return float(np.clip(root, 0.0, 1.0))


def action_bounds(
    contexts: Sequence[BoundContext], p0: float, L: int | None = None
) -> ActionBounds:
    """Compress [0, 1] to [max_j solve(upper), max_j solve(lower)]."""

    if not contexts:
        raise ValueError("at least one ECU context is required")
    window = contexts[0].L if L is None else L
    if any(ctx.L != window for ctx in contexts):
        raise ValueError("every context must use the same window length")
    mu_hi = max(solve_rate_for_target("lower", ctx, p0) for ctx in contexts)
    mu_lo = max(solve_rate_for_target("upper", ctx, p0) for ctx in contexts)
    if mu_lo > mu_hi:
        raise EmptyActionSpace(mu_lo, mu_hi)
    logger.info("action bounds L=%d p0=%s -> [%.6f, %.6f]", window, p0, mu_lo, mu_hi)
    return ActionBounds(mu_lo=mu_lo, mu_hi=mu_hi, p0=p0, L=window)


def system_contexts(
    jf: JordanForm, topo: Topology, L: int, threshold: float | None = None
) -> list[BoundContext]:
    """One context per ECU, sharing zeta, rank and M."""

    base = build_context(jf, topo, 0, L, threshold)
    return [
        BoundContext(zeta=base.zeta, rank_gtilde=base.rank_gtilde, M_set=base.M_set, L=L,
                     topo=topo, ecu=j, n=base.n)
        for j in range(topo.m)
    ]


def stability_floor(spectral_norm: float, L: int) -> float:
    """1 - 1 / a^(2L); non-positive (vacuous) when a <= 1."""

    return float(1.0 - spectral_norm ** (-2.0 * L))


def _mc_chunk(
    jf: JordanForm,
    topo: Topology,
    j: int,
    plan: TransmissionPlan,
    L: int,
    trials: int,
    seed: np.random.SeedSequence,
) -> int:
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        window = [sample_receptions(plan, rng) for _ in range(L)]
        hits += is_L_step_observable(jf, window, topo, j)
    return hits


def mc_observability(
    sys: LtiSystem | JordanForm,
    topo: Topology,
    j: int,
    plan: TransmissionPlan,
    L: int,
    trials: int,
    rng: np.random.Generator | np.random.SeedSequence | int | None = None,
    chunks: int = 8,
) -> tuple[float, float]:
    """Monte Carlo estimate of the L-step observability probability and its std error."""

    from edgesense.linsys import jordanize

    jf = sys if isinstance(sys, JordanForm) else jordanize(sys)
    if isinstance(rng, np.random.Generator):
        root = np.random.SeedSequence(int(rng.integers(0, 2**63)))
    elif isinstance(rng, np.random.SeedSequence):
        root = rng
    else:
        root = np.random.SeedSequence(rng)
    chunks = max(1, min(chunks, trials))
    sizes = [trials // chunks + (1 if c < trials % chunks else 0) for c in range(chunks)]
    seeds = root.spawn(chunks)
    counts = Parallel(n_jobs=settings.n_jobs)(
        delayed(_mc_chunk)(jf, topo, j, plan, L, size, seed) for size, seed in zip(sizes, seeds)
    )
    estimate = sum(counts) / trials
    return estimate, float(np.sqrt(estimate * (1.0 - estimate) / trials))


@dataclass(frozen=True)
class LowerBoundGap:
    """Monte Carlo observability against the lower bound at one uniform rate."""

    mu: float
    phi_lo: float
    phi_mc: float
    stderr: float

    @property
    def gap(self) -> float:
        return self.phi_mc - self.phi_lo


def lower_bound_gap(
    jf: JordanForm,
    ctx: BoundContext,
    mu: float,
    trials: int,
    rng: np.random.Generator | np.random.SeedSequence | int | None = None,
) -> LowerBoundGap:
    plan = TransmissionPlan.constant(mu, ctx.topo.m, ctx.n)
    phi_lo = lower_bound_phi(ctx, 1.0 - (1.0 - mu) ** ctx.hood_size)
    estimate, stderr = mc_observability(jf, ctx.topo, ctx.ecu, plan, ctx.L, trials, rng)
    logger.debug("lower bound gap at mu=%.6f L=%d: mc %.4f vs %.4f", mu, ctx.L, estimate, phi_lo)
    return LowerBoundGap(mu=mu, phi_lo=phi_lo, phi_mc=estimate, stderr=stderr)


def exact_observability(
    jf: JordanForm, topo: Topology, j: int, plan: TransmissionPlan, L: int
) -> float:
    """Exact window observability probability by enumerating every neighborhood outcome."""

    hood = topo.neighborhood(j)
    n = jf.n
    bits = len(hood) * n * L
    if 2**bits > settings.enumeration_budget:
        raise EnumerationTooLarge(f"2^{bits} reception outcomes exceed the enumeration budget")
    rates = np.tile(plan.mu[hood].ravel(), L)
    total = 0.0
    for outcome in itertools.product((0, 1), repeat=bits):
        pattern = np.array(outcome, dtype=np.int8)
        prob = float(np.prod(np.where(pattern == 1, rates, 1.0 - rates)))
        if prob == 0.0:
            continue
        slots = pattern.reshape(L, len(hood), n)
        window = []
        for slot in slots:
            gamma = np.zeros((topo.m, n), dtype=np.int8)
            gamma[hood] = slot
            window.append(gamma)
        if is_L_step_observable(jf, window, topo, j):
            total += prob
    return total
