"""Wall-time comparison of the three spectral backends.

Usage: python scripts/backend_bench.py [--n 1000] [--k 50] [--reps 5]
"""

import argparse
import sys

from gseat.cli import main as cli_main


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--k", type=int, default=50)
    parser.add_argument("--reps", type=int, default=5)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()
    argv = ["bench", "--n", str(args.n), "--k", str(args.k), "--reps", str(args.reps)]
    if args.out:
        argv += ["--out", args.out]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
