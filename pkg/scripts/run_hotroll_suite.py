"""Run the hot-rolling suite: bounds, interval grid, policy costs and observability."""
from __future__ import annotations

import os
from pathlib import Path

from edgesense.audit import RunManifest
from edgesense.experiments import run_bounds, run_fig5, run_fig6, run_table1
from edgesense.models import ExperimentConfig, load_config
from edgesense.storage import write_table

CONFIG = os.getenv("EDGESENSE_CONFIG")
OUT_DIR = Path(os.getenv("EDGESENSE_OUT_DIR", "runs/hotroll"))


def main() -> None:
    config = load_config(CONFIG) if CONFIG else ExperimentConfig()
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.start(config, "suite")
    for name, frame in (
        ("bounds.csv", run_bounds(config)),
        ("fig6.csv", run_fig6(config)),
        ("fig5.csv", run_fig5(config)),
        ("table1.csv", run_table1(config)),
    ):
        manifest.record(write_table(OUT_DIR / name, frame))
        print(f"Wrote {name}.")
    manifest.finish(OUT_DIR)
    print(f"Suite complete in {OUT_DIR}.")


if __name__ == "__main__":  # pragma: no cover
    main()
