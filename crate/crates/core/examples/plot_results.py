"""Plots the CSVs emitted by `aihf plotdata` / `aihf example2`.

usage: python plot_results.py <csv> [<out.png>]
"""
import sys

import matplotlib.pyplot as plt
import pandas as pd


def main():
    path = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) > 2 else path.rsplit(".", 1)[0] + ".png"
    df = pd.read_csv(path)
    fig, ax = plt.subplots(figsize=(7, 4))
    if {"action", "method", "mean"} <= set(df.columns):
        for name, g in df.groupby("method"):
            ax.plot(g["action"], g["mean"], marker="o", ms=3, label=name)
        ax.set_xlabel("action")
        ax.set_ylabel("mean probability")
    elif "log_k" in df.columns:
        ax.plot(df["log_k"], df["log_mean_policy_gap"], "o-", label="policy gap")
        ax.plot(df["log_k"], df["log_mean_grad_norm_sq"], "s-", label="grad norm^2")
        ax.set_xlabel("log K")
    else:
        for (cell, method), g in df.groupby(["cell", "method"]):
            ax.plot(g["k"], g["grad_norm"], lw=0.8, label=f"{method} #{cell}")
        ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel("step direction norm")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
