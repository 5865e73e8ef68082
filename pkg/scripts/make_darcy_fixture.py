"""Regenerate the committed Darcy reference parameters and observations.

    python scripts/make_darcy_fixture.py [--seed 42]
"""
import argparse
from pathlib import Path

import numpy as np

from kalman_inversion.forward_models import DarcyConfig, darcy_solve

DATA = Path(__file__).resolve().parents[1] / "src" / "kalman_inversion" / "data"


def write_vector(path, values):
    path.write_text("".join(f"{float(v)!r}\n" for v in values))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=42)
    args = parser.parse_args()
    config = DarcyConfig()
    theta_ref = np.random.default_rng(args.seed).standard_normal(config.n_kl)
    write_vector(DATA / "darcy_theta_ref.txt", theta_ref)
    write_vector(DATA / "darcy_y_ref.txt", darcy_solve(theta_ref, config))
    print(f"wrote {DATA}/darcy_theta_ref.txt and darcy_y_ref.txt (seed={args.seed})")


if __name__ == "__main__":
    main()
