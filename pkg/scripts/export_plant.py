"""Export the hot-rolling plant matrices in the plain-text matrix format."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from edgesense.hotroll import HotRollParams, build_system, simulate_noiseless
from edgesense.storage import write_matrix

OUT_DIR = Path(os.getenv("EDGESENSE_PLANT_DIR", "plant"))


def main() -> None:
    sys = build_system(HotRollParams())
    OUT_DIR.mkdir(parents=True, exist_ok=True)
    exports = {
        "A": sys.A,
        "G": sys.G,
        "Q": sys.Qnoise,
        "U": sys.Unoise[None, :],
        "Gamma0": sys.Gamma0,
        "x0_mean": sys.x0_mean[None, :],
        "u": sys.input_vector[None, :],
    }
    for name, matrix in exports.items():
        write_matrix(OUT_DIR / f"{name}.txt", matrix)
    trajectory = simulate_noiseless(sys, HotRollParams().T_slots)
    write_matrix(OUT_DIR / "noiseless_mean.txt", trajectory.mean(axis=1)[:, None])
    print(f"Exported plant (d={sys.d}, n={sys.n}, |A|_2={np.linalg.norm(sys.A, 2):.6f}) "
          f"to {OUT_DIR}.")


if __name__ == "__main__":  # pragma: no cover
    main()
