"""Experiment protocols: compression sweeps, training, evaluation and comparison tables."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from edgesense.baselines import BaselineKind, BaselinePolicy, Policy
from edgesense.channel import ChannelParams
from edgesense.config import settings
from edgesense.ddpg import Actor, ActorPolicy, Agent, TrainResult, train
from edgesense.dkf import Topology
from edgesense.env import CostWeights, SensingEnv
from edgesense.errors import EdgeSenseError
from edgesense.hotroll import build_system
from edgesense.linsys import JordanForm, LtiSystem, is_L_step_observable, jordanize
from edgesense.models import ExperimentConfig
from edgesense.obsbound import (
    ActionBounds,
    BoundContext,
    action_bounds,
    lower_bound_gap,
    stability_floor,
    system_contexts,
)
from edgesense.storage import read_matrix

logger = logging.getLogger(__name__)

POLICIES = ("oidm", "spm", "rsm", "psm")
SUMMARY_COLUMNS = ["policy", "repetitions", "mean_cost", "stderr", "accuracy_term",
                   "power_term", "discounted_cost", "observability"]
RUN_COLUMNS = ["run", "mean_cost", "accuracy_term", "power_term", "discounted_cost",
               "observability"]

# spawn-key namespaces under the master seed
_TRAIN, _EVAL, _GAP = 1, 2, 3

GAP_COLUMNS = ["phi_lo", "phi_mc", "phi_mc_stderr", "phi_lo_gap"]


def derive_seed(seed: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=tuple(keys))


@dataclass(frozen=True)
class Components:
    sys: LtiSystem
    topo: Topology
    channel: ChannelParams


def build_plant(config: ExperimentConfig) -> LtiSystem:
    section = config.hotroll
    if config.plant.kind == "hotroll":
        return build_system(section.params(), q_scale=section.q_scale,
                            noise_variance=section.noise_variance,
                            gamma0_scale=section.gamma0_scale)
    files = config.matrices
    assert files is not None
    A = read_matrix(files.A)
    G = read_matrix(files.G)
    d, n = A.shape[0], G.shape[0]
    return LtiSystem(
        A=A,
        G=G,
        Qnoise=read_matrix(files.Q) if files.Q else section.q_scale * np.eye(d),
        Unoise=read_matrix(files.U).ravel() if files.U else np.full(n, section.noise_variance),
        x0_mean=read_matrix(files.x0_mean).ravel() if files.x0_mean else np.zeros(d),
        Gamma0=read_matrix(files.Gamma0) if files.Gamma0 else section.gamma0_scale * np.eye(d),
        u=read_matrix(files.u).ravel() if files.u else None,
    )


def build_topology(config: ExperimentConfig) -> Topology:
    section = config.topology
    if section.kind == "custom":
        return Topology(np.asarray(section.adjacency, dtype=int))
    return getattr(Topology, section.kind)(section.m)


def build_channel(config: ExperimentConfig, m: int, n: int) -> ChannelParams:
    section = config.channel
    if section.kappa is not None:
        channel = ChannelParams(np.asarray(section.kappa, dtype=float))
    elif section.epsilon is not None:
        channel = ChannelParams.from_physical(section.epsilon, section.noise_density or 0.0,
                                              section.bandwidth or 0.0, m, n)
    else:
        rows = section.kappa_per_ecu or []
        if len(rows) != m:
            raise ValueError(f"kappa_per_ecu has {len(rows)} entries for {m} ECUs")
        channel = ChannelParams.from_rows(rows, n)
    overrides = [(o.ecu, o.sensor, o.kappa) for o in section.overrides]
    unlinked = [(pair[0], pair[1]) for pair in section.unlinked]
    return channel.with_overrides(overrides, unlinked)


def build_components(config: ExperimentConfig) -> Components:
    sys = build_plant(config)
    topo = build_topology(config)
    return Components(sys=sys, topo=topo, channel=build_channel(config, topo.m, sys.n))


def build_bounds(
    config: ExperimentConfig,
    parts: Components,
    *,
    L: int | None = None,
    p0: float | None = None,
    jf: JordanForm | None = None,
) -> ActionBounds:
    """Compressed interval for (L, p0), or the configured fixed interval."""

    L = config.observability.L if L is None else L
    p0 = config.observability.p0 if p0 is None else p0
    fixed = config.observability.fixed_bounds
    if fixed is not None:
        return ActionBounds(fixed[0], fixed[1], p0=p0, L=L)
    jf = jordanize(parts.sys) if jf is None else jf
    floor = stability_floor(parts.sys.spectral_norm, L)
    logger.info("stability threshold for L=%d: %.6f (spectral norm %.6f)", L, floor,
                parts.sys.spectral_norm)
    return action_bounds(system_contexts(jf, parts.topo, L), p0, L)


def build_env(
    config: ExperimentConfig,
    parts: Components,
    bounds: ActionBounds,
    *,
    beta: float | None = None,
    record: bool = False,
) -> SensingEnv:
    weights = CostWeights(config.cost.alpha, config.cost.beta if beta is None else beta)
    return SensingEnv(parts.sys, parts.topo, parts.channel, weights, bounds, record=record)


def gap_columns(
    config: ExperimentConfig, jf: JordanForm, ctx: BoundContext, mu: float, key: int = 0
) -> dict[str, float]:
    """Monte Carlo observability at the uniform rate mu against the lower bound for ECU 0."""

    trials = config.observability.mc_trials
    if trials == 0:
        return dict.fromkeys(GAP_COLUMNS, float("nan"))
    seed = derive_seed(config.seed, _GAP, ctx.L, key)
    result = lower_bound_gap(jf, ctx, mu, trials, seed)
    if result.gap < -3.0 * result.stderr:
        logger.warning("lower bound exceeds Monte Carlo observability at L=%d mu=%.6f: %.4f > %.4f",
                       ctx.L, mu, result.phi_lo, result.phi_mc)
    return {"phi_lo": result.phi_lo, "phi_mc": result.phi_mc,
            "phi_mc_stderr": result.stderr, "phi_lo_gap": result.gap}


def run_bounds(config: ExperimentConfig) -> pd.DataFrame:
    parts = build_components(config)
    jf = jordanize(parts.sys)
    L, p0 = config.observability.L, config.observability.p0
    bounds = build_bounds(config, parts, jf=jf)
    ctx = system_contexts(jf, parts.topo, L)[0]
    return pd.DataFrame([{
        "L": L,
        "p0": p0,
        "mu_lo": bounds.mu_lo,
        "mu_hi": bounds.mu_hi,
        "width": bounds.width,
        "zeta": ctx.zeta,
        "rank_gtilde": ctx.rank_gtilde,
        "m_set": " ".join(str(i) for i in ctx.M_set),
        "blocks": len(jf.blocks),
        "stability_floor": stability_floor(parts.sys.spectral_norm, L),
        **gap_columns(config, jf, ctx, bounds.mu_hi),
    }])


def run_train(
    config: ExperimentConfig,
    *,
    bounds: ActionBounds | None = None,
    beta: float | None = None,
    checkpoint: str | Path | None = None,
    cell: int = 0,
) -> TrainResult:
    parts = build_components(config)
    bounds = build_bounds(config, parts) if bounds is None else bounds
    env = build_env(config, parts, bounds, beta=beta)
    seed = int(derive_seed(config.seed, _TRAIN, cell).generate_state(1, np.uint64)[0] >> 1)
    cfg = config.training.model_copy(update={"seed": seed})
    result = train(env, bounds, cfg, checkpoint_path=checkpoint)
    if env.clamp_count:
        logger.warning("training clamped %d actions", env.clamp_count)
    return result


def _make_policy(
    kind: str, bounds: ActionBounds, m: int, n: int, rng: np.random.Generator,
    start_high: bool, actor: Actor | None,
) -> Policy:
    if kind == "oidm":
        if actor is None:
            raise ValueError("oidm evaluation needs a trained actor")
        return ActorPolicy(actor)
    return BaselinePolicy(BaselineKind(kind), bounds, m, n, start_high=start_high, rng=rng)


def window_observability(
    jf: JordanForm,
    receptions: Sequence[np.ndarray],
    topo: Topology,
    window: int,
    sliding: bool = False,
) -> float:
    """Fraction of (window, ECU) pairs that are window-step observable."""

    stride = 1 if sliding else window
    starts = range(0, len(receptions) - window + 1, stride)
    checks = [
        is_L_step_observable(jf, receptions[s : s + window], topo, j)
        for s in starts
        for j in range(topo.m)
    ]
    return float(np.mean(checks)) if checks else float("nan")


def _rollout(
    env: SensingEnv,
    kind: str,
    actor: Actor | None,
    horizon: int,
    seed: np.random.SeedSequence,
    discount: float,
    start_high: bool,
    jf: JordanForm | None,
    window: int,
    sliding: bool,
) -> tuple[dict[str, float], list[dict[str, Any]]]:
    env_seq, policy_seq = seed.spawn(2)
    rng = np.random.default_rng(env_seq)
    policy = _make_policy(kind, env.bounds or ActionBounds(0.0, 1.0), env.m, env.n,
                          np.random.default_rng(policy_seq), start_high, actor)
    state = env.reset(rng)
    costs, accuracies, powers, receptions = [], [], [], []
    for k in range(horizon):
        result = env.step(state, policy.act(state, k), rng)
        costs.append(result.cost)
        accuracies.append(result.accuracy_term)
        powers.append(result.power_term)
        receptions.append(result.receptions.gamma)
        state = result.state
    costs_arr = np.asarray(costs)
    row = {
        "mean_cost": float(costs_arr.mean()),
        "accuracy_term": float(np.mean(accuracies)),
        "power_term": float(np.mean(powers)),
        "discounted_cost": float(np.sum(costs_arr * discount ** np.arange(horizon))),
        "observability": (window_observability(jf, receptions, env.topo, window, sliding)
                          if jf is not None else float("nan")),
    }
    return row, env.trajectory


@dataclass
class EvalSummary:
    policy: str
    runs: pd.DataFrame
    summary: dict[str, Any]
    trajectories: pd.DataFrame | None = None


def run_eval(
    config: ExperimentConfig,
    policy: str,
    H: int | None = None,
    *,
    agent: Agent | None = None,
    bounds: ActionBounds | None = None,
    beta: float | None = None,
    check_observability: bool = True,
    trajectory: bool = False,
    cell: int = 0,
) -> EvalSummary:
    """H independent trajectories; time-averaged cost per run, averaged over runs."""

    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    H = config.evaluation.repetitions if H is None else H
    parts = build_components(config)
    jf = jordanize(parts.sys) if check_observability else None
    bounds = build_bounds(config, parts, jf=jf) if bounds is None else bounds
    if policy == "oidm" and agent is None:
        agent = run_train(config, bounds=bounds, beta=beta, cell=cell).agent
    actor = agent.actor if agent is not None else None
    evaluation = config.evaluation
    seeds = [derive_seed(config.seed, _EVAL, cell, h) for h in range(H)]
    outputs = Parallel(n_jobs=settings.n_jobs)(
        delayed(_rollout)(
            build_env(config, parts, bounds, beta=beta, record=trajectory), policy, actor,
            evaluation.horizon, seed, config.training.discount, evaluation.psm_start_high, jf,
            evaluation.window, evaluation.sliding_windows,
        )
        for seed in seeds
    )
    runs = pd.DataFrame(
        [{"run": h, **row} for h, (row, _) in enumerate(outputs)], columns=RUN_COLUMNS
    )
    stderr = float(runs["mean_cost"].std(ddof=1) / np.sqrt(H)) if H > 1 else 0.0
    summary = {
        "policy": policy,
        "repetitions": H,
        "mean_cost": float(runs["mean_cost"].mean()),
        "stderr": stderr,
        "accuracy_term": float(runs["accuracy_term"].mean()),
        "power_term": float(runs["power_term"].mean()),
        "discounted_cost": float(runs["discounted_cost"].mean()),
        "observability": float(runs["observability"].mean()),
    }
    traj = None
    if trajectory:
        traj = pd.DataFrame([{"run": h, **step} for h, (_, steps) in enumerate(outputs)
                             for step in steps])
    logger.info("%s over %d runs: mean cost %.6f (stderr %.6f)", policy, H,
                summary["mean_cost"], stderr)
    return EvalSummary(policy=policy, runs=runs, summary=summary, trajectories=traj)


def dkf_trace_table(trajectories: pd.DataFrame, m: int) -> pd.DataFrame:
    """Long per-ECU view (run, k, j, trace_p, receptions) of an environment trajectory log."""

    rows = []
    for record in trajectories.to_dict("records"):
        for j in range(m):
            rows.append({"run": record["run"], "k": record["k"], "j": j,
                         "trace_p": record[f"trace_p_{j}"],
                         "receptions": record[f"received_{j}"]})
    return pd.DataFrame(rows, columns=["run", "k", "j", "trace_p", "receptions"])


def default_beta_list(config: ExperimentConfig, values: Sequence[float] | None = None,
                      multiples: Sequence[float] = (0.0, 0.1, 1.0, 10.0)) -> list[float]:
    if values is not None:
        return list(values)
    if config.evaluation.beta_list is not None:
        return list(config.evaluation.beta_list)
    return [mult * config.cost.alpha for mult in multiples]


def run_fig5(config: ExperimentConfig, beta_list: Sequence[float] | None = None) -> pd.DataFrame:
    """Expected cost of every policy against the power weight."""

    parts = build_components(config)
    bounds = build_bounds(config, parts)
    rows = []
    for cell, beta in enumerate(default_beta_list(config, beta_list)):
        agent = run_train(config, bounds=bounds, beta=beta, cell=cell).agent
        for policy in POLICIES:
            result = run_eval(config, policy, agent=agent, bounds=bounds, beta=beta,
                              check_observability=False, cell=cell)
            s = result.summary
            rows.append({"beta": beta, "policy": policy, "mean_cost": s["mean_cost"],
                         "stderr": s["stderr"], "accuracy_term": s["accuracy_term"],
                         "power_term": s["power_term"]})
    return pd.DataFrame(rows, columns=["beta", "policy", "mean_cost", "stderr",
                                       "accuracy_term", "power_term"])


def run_table1(
    config: ExperimentConfig,
    L_list: Sequence[int] | None = None,
    beta_list: Sequence[float] | None = None,
) -> pd.DataFrame:
    """Posterior window observability of the trained policy for each (L, beta)."""

    parts = build_components(config)
    jf = jordanize(parts.sys)
    L_values = list(L_list) if L_list is not None else list(config.evaluation.l_list)
    betas = default_beta_list(config, beta_list, multiples=(0.0, 10.0))
    rows = []
    cell = 0
    for L in L_values:
        bounds = build_bounds(config, parts, L=L, jf=jf)
        for beta in betas:
            agent = run_train(config, bounds=bounds, beta=beta, cell=cell).agent
            result = run_eval(config, "oidm", agent=agent, bounds=bounds, beta=beta, cell=cell)
            rows.append({"L": L, "beta": beta, "mu_lo": bounds.mu_lo, "mu_hi": bounds.mu_hi,
                         "observability": result.summary["observability"],
                         "mean_cost": result.summary["mean_cost"]})
            cell += 1
    return pd.DataFrame(rows, columns=["L", "beta", "mu_lo", "mu_hi", "observability",
                                       "mean_cost"])


def _fig6_cell(config: ExperimentConfig, parts: Components, jf: JordanForm, L: int,
               p0: float, key: int) -> dict[str, Any]:
    try:
        bounds = build_bounds(config, parts, L=L, p0=p0, jf=jf)
    except EdgeSenseError as exc:
        logger.warning("no interval for L=%d p0=%s: %s", L, p0, exc)
        return {"L": L, "p0": p0, "mu_lo": float("nan"), "mu_hi": float("nan"),
                "width": float("nan"), "status": type(exc).__name__,
                **dict.fromkeys(GAP_COLUMNS, float("nan"))}
    ctx = system_contexts(jf, parts.topo, L)[0]
    return {"L": L, "p0": p0, "mu_lo": bounds.mu_lo, "mu_hi": bounds.mu_hi,
            "width": bounds.width, "status": "ok",
            **gap_columns(config, jf, ctx, bounds.mu_hi, key)}


def run_fig6(
    config: ExperimentConfig,
    L_list: Sequence[int] | None = None,
    p0_list: Sequence[float] | None = None,
) -> pd.DataFrame:
    """(L, p0) grid of compressed intervals.

    ``narrowest_at_min_L`` flags whether the smallest L gives the narrowest interval at that p0;
    it is reported rather than enforced.
    """

    parts = build_components(config)
    jf = jordanize(parts.sys)
    L_values = sorted(L_list if L_list is not None else config.evaluation.l_list)
    p0_values = list(p0_list if p0_list is not None else config.evaluation.p0_list)
    cells = Parallel(n_jobs=settings.n_jobs)(
        delayed(_fig6_cell)(config, parts, jf, L, p0, key)
        for L in L_values for key, p0 in enumerate(p0_values)
    )
    frame = pd.DataFrame(cells, columns=["L", "p0", "mu_lo", "mu_hi", "width", "status",
                                         *GAP_COLUMNS])
    flags = {}
    for p0, group in frame.groupby("p0", sort=False):
        widths = group.set_index("L")["width"]
        smallest = widths.loc[L_values[0]]
        flags[p0] = bool(np.all(smallest <= widths.dropna() + 1e-15))
        if not flags[p0]:
            logger.warning("at p0=%s the smallest L does not give the narrowest interval", p0)
    frame["narrowest_at_min_L"] = frame["p0"].map(flags)
    return frame
