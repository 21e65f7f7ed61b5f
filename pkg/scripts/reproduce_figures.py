#!/usr/bin/env python3
"""Emit the figure-style summary CSVs for all simulation presets into out/.

Usage: python scripts/reproduce_figures.py [--replicates N] [--seed S]
"""
import argparse
import sys
from pathlib import Path

from seqaudit.cli import main as cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--replicates", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="out")
    args = parser.parse_args()

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for preset in ("fig1", "fig2a", "fig2b", "fig5"):
        out = out_dir / f"{preset}.csv"
        code = cli_main([
            "simulate", "--preset", preset,
            "--replicates", str(args.replicates),
            "--seed", str(args.seed),
            "--out", str(out),
        ])
        if code != 0:
            return code
        print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
