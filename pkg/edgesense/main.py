"""Command-line entry point: ``edgesense bounds|train|eval|table1|fig5|fig6``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import pandas as pd
from pydantic import ValidationError

from edgesense.audit import RunManifest
from edgesense.config import settings
from edgesense.ddpg import Agent
from edgesense.errors import ConfigError, EdgeSenseError
from edgesense.experiments import (
    POLICIES,
    SUMMARY_COLUMNS,
    dkf_trace_table,
    run_bounds,
    run_eval,
    run_fig5,
    run_fig6,
    run_table1,
    run_train,
)
from edgesense.models import ExperimentConfig, load_config
from edgesense.storage import load_checkpoint, write_table

logger = logging.getLogger("edgesense")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(level=(level or settings.log_level).upper(), format=LOG_FORMAT)


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgesense", description=__doc__)
    parser.add_argument("command", choices=["bounds", "train", "eval", "table1", "fig5", "fig6"])
    parser.add_argument("--config", type=Path, help="TOML experiment config")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--out", type=Path, help="output directory (overrides the config)")
    parser.add_argument("--policy", choices=POLICIES, default="oidm")
    parser.add_argument("--checkpoint", type=Path, help="actor/critic checkpoint to load or save")
    parser.add_argument("--p0", type=float)
    parser.add_argument("--L", type=int, dest="L")
    parser.add_argument("--L-list", type=_int_list, dest="L_list")
    parser.add_argument("--beta-list", type=_float_list, dest="beta_list")
    parser.add_argument("--p0-list", type=_float_list, dest="p0_list")
    parser.add_argument("--repetitions", type=int)
    parser.add_argument("--trajectory", action="store_true", help="dump per-step eval logs")
    parser.add_argument("--log-level")
    return parser


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    update: dict[str, Any] = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.out is not None:
        update["output"] = config.output.model_copy(update={"dir": str(args.out)})
    obs: dict[str, Any] = {}
    if args.p0 is not None:
        obs["p0"] = args.p0
    if args.L is not None:
        obs["L"] = args.L
    if obs:
        update["observability"] = config.observability.model_copy(update=obs)
    if args.repetitions is not None:
        update["evaluation"] = config.evaluation.model_copy(
            update={"repetitions": args.repetitions}
        )
    merged = config.model_copy(update=update)
    try:
        return ExperimentConfig.model_validate(merged.model_dump())
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"command-line override {where}: {first['msg']}") from exc


def execute(config: ExperimentConfig, args: argparse.Namespace) -> Path:
    out_dir = Path(config.output.dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.start(config, args.command)

    def emit(name: str, frame: Any) -> None:
        manifest.record(write_table(out_dir / name, frame))

    if args.command == "bounds":
        emit("bounds.csv", run_bounds(config))
    elif args.command == "train":
        checkpoint = args.checkpoint or out_dir / "checkpoint.joblib"
        result = run_train(config, checkpoint=checkpoint)
        emit("training_log.csv", result.log)
        manifest.record(checkpoint)
    elif args.command == "eval":
        agent = None
        if args.policy == "oidm" and args.checkpoint is not None:
            agent = Agent.from_checkpoint(load_checkpoint(args.checkpoint), config.training)
        summary = run_eval(config, args.policy, agent=agent, trajectory=args.trajectory)
        emit("summary.csv", _summary_frame(summary.summary))
        emit("runs.csv", summary.runs)
        if summary.trajectories is not None:
            emit("trajectory.csv", summary.trajectories)
            emit("dkf_trace.csv", dkf_trace_table(summary.trajectories, config.topology.m))
    elif args.command == "table1":
        emit("table1.csv", run_table1(config, args.L_list, args.beta_list))
    elif args.command == "fig5":
        emit("fig5.csv", run_fig5(config, args.beta_list))
    elif args.command == "fig6":
        emit("fig6.csv", run_fig6(config, args.L_list, args.p0_list))
    return manifest.finish(out_dir)


def _summary_frame(summary: dict[str, Any]) -> pd.DataFrame:
    return pd.DataFrame([summary], columns=SUMMARY_COLUMNS)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args.config) if args.config else ExperimentConfig()
        config = apply_overrides(config, args)
        manifest = execute(config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EdgeSenseError as exc:
        logger.error("%s failed: %s", args.command, exc)
        return 1
    print(f"{args.command} finished; manifest at {manifest}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
