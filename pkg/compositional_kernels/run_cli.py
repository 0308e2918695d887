"""Entrypoint for the kernel_tools command line.

Usage:
  python run_cli.py select --input counts.csv --label-column y --seed 0 --output-dir out/
  python run_cli.py --help
"""
import sys

from kernel_tools.cli.main import main

if __name__ == "__main__":
    sys.exit(main())
