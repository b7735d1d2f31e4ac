#!/usr/bin/env python3
"""Plot aggregate_M*_T*.csv curves written by `kflearn-cli learn`."""
import argparse
import glob
import os
import re

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("directory")
    ap.add_argument("-o", "--output", default="curves.png")
    args = ap.parse_args()

    files = sorted(glob.glob(os.path.join(args.directory, "aggregate_M*_T*.csv")))
    if not files:
        raise SystemExit(f"no aggregate CSV files in {args.directory}")
    fig, ax = plt.subplots(figsize=(6, 4))
    for path in files:
        m, t = re.search(r"aggregate_M(\d+)_T(\d+)\.csv$", path).groups()
        df = pd.read_csv(path)
        mean, se = df["mean_gap_normalized"], df["stderr_gap_normalized"]
        ax.semilogy(df["iter"], mean, label=f"M={m}, T={t}")
        ax.fill_between(df["iter"], (mean - se).clip(lower=1e-12), mean + se, alpha=0.2)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("(J(L_k) - J*) / (J(L_0) - J*)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)


if __name__ == "__main__":
    main()
