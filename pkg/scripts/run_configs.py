"""Run the bundled example configs through the CLI and list the files written.

    python3 scripts/run_configs.py [--out DIR] [--workers N]
"""

import argparse
import sys
from pathlib import Path

from ebpop.cli import run

ROOT = Path(__file__).resolve().parent.parent
JOBS = [
    ("regret", "regret_pi2.yaml"),
    ("npmle", "regret_pi2.yaml"),
    ("alphafit", "alphafit_pi2.yaml"),
    ("contract", "contract_dirichlet.yaml"),
    ("lengen", "lengen_simple.yaml"),
    ("regret", "gaussian_pi2.yaml"),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out")
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    status = 0
    for sub, cfg in JOBS:
        print(f"# {sub} {cfg}", flush=True)
        code = run(sub, ROOT / "configs" / cfg, [f"output_dir={args.out}"], workers=args.workers)
        status = max(status, code)
    return status


if __name__ == "__main__":
    sys.exit(main())
