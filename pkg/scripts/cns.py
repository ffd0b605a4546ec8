#!/usr/bin/env python3
"""Dispatch to the subcommand scripts.

Usage:
    uv run scripts/cns.py simulate --config run.toml
    uv run scripts/cns.py verify --config verify.toml --out runs/verify
"""

from __future__ import annotations

import argparse
import importlib
import sys
from pathlib import Path

# Add parent directory to path for internal imports
sys.path.insert(0, str(Path(__file__).parent))

SUBCOMMANDS = ("simulate", "ensemble", "verify", "tightness", "martingale", "lowmach")


def main(argv: list[str] | None = None) -> None:
    argv = sys.argv[1:] if argv is None else argv
    parser = argparse.ArgumentParser(
        description="Stochastic compressible Navier-Stokes simulator and verification harness",
        usage="cns.py {%s} [options]" % ",".join(SUBCOMMANDS),
    )
    parser.add_argument("command", choices=SUBCOMMANDS)
    args = parser.parse_args(argv[:1])
    module = importlib.import_module(args.command)
    module.main(argv[1:])


if __name__ == "__main__":
    main()
