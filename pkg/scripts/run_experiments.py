"""Run every config in scripts/configs through the CLI and tabulate the ablation.

    python scripts/run_experiments.py [--out runs]
"""
import argparse
from pathlib import Path

from kalman_inversion.cli import EXIT_DIVERGED, EXIT_OK, compare_command, run_command

CONFIGS = Path(__file__).resolve().parent / "configs"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs")
    args = parser.parse_args()
    out = Path(args.out)
    for cfg in sorted(CONFIGS.glob("*.json")):
        code = run_command(cfg, out=out / cfg.stem)
        status = {EXIT_OK: "ok", EXIT_DIVERGED: "diverged"}.get(code, f"error ({code})")
        print(f"{cfg.stem:<24} {status}")
    print()
    compare_command([out / "elliptic2_adaptive" / "summary.json", out / "elliptic2_fixed" / "summary.json"])


if __name__ == "__main__":
    main()
