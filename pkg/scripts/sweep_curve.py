#!/usr/bin/env python3
"""Emit the error-rate-vs-ensemble-size curve on the standard benchmark."""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fhmm.benchmark import standard_benchmark, standard_config
from fhmm.ensemble import sweep_k, write_sweep_csv


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sessions", type=int, default=12_000)
    parser.add_argument("--seed", type=int, default=11)
    parser.add_argument("--ks", default="1,2,4,8,16,24,32")
    parser.add_argument("--out", default="sweep.csv")
    args = parser.parse_args()

    bench = standard_benchmark(n_train=args.sessions, n_test=0, seed=args.seed)
    sessions = bench.train
    ks = [int(tok) for tok in args.ks.split(",")]
    curve = sweep_k(sessions, ks, standard_config(base_seed=args.seed))
    write_sweep_csv(curve, args.out)
    for k, error in curve:
        print(f"k={k:>3}  error={error:.4f}")
    print(f"curve written to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
