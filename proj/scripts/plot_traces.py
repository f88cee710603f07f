#!/usr/bin/env python3
"""Plot traces written by `vrs_cli run`.

One panel per (method, b): median grad_norm_sq over seeds against epochs, one
line per sampling scheme. If speedup.csv exists, a second figure shows median
epochs-to-eps against b.
"""
import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd


def load(out_dir: Path) -> pd.DataFrame:
    manifest = pd.read_csv(out_dir / "manifest.csv")
    manifest = manifest[manifest["status"] == "ok"]
    frames = []
    for row in manifest.itertuples():
        t = pd.read_csv(out_dir / row.file)
        t["method"], t["scheme"], t["b"], t["seed"] = row.method, row.scheme, row.b, row.seed
        frames.append(t)
    if not frames:
        raise SystemExit(f"no successful cells in {out_dir}")
    return pd.concat(frames, ignore_index=True)


def median_curve(g: pd.DataFrame, x: str, points: int = 200):
    # checkpoints land at the first step past each mark, so seeds disagree on
    # the exact x values; interpolate log values onto a shared grid first
    seeds = [t.sort_values(x) for _, t in g.groupby("seed")]
    end = min(t[x].iloc[-1] for t in seeds)
    grid = np.linspace(0.0, end, points)
    logs = [np.interp(grid, t[x], np.log(t["grad_norm_sq"].clip(lower=1e-300))) for t in seeds]
    return grid, np.exp(np.median(logs, axis=0))


def plot_traces(df: pd.DataFrame, x: str, path: Path) -> None:
    panels = sorted(df.groupby(["method", "b"]).groups)
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.6), squeeze=False)
    for ax, (method, b) in zip(axes[0], panels):
        sub = df[(df["method"] == method) & (df["b"] == b)]
        for scheme, g in sub.groupby("scheme"):
            grid, med = median_curve(g, x)
            ax.semilogy(grid, med, label=scheme)
        ax.set_title(f"{method}, b={b:g}")
        ax.set_xlabel("epochs" if x == "epoch" else "stochastic gradient evaluations")
        ax.set_ylabel("grad_norm_sq (median)")
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_speedup(out_dir: Path, path: Path) -> None:
    sp = pd.read_csv(out_dir / "speedup.csv", na_values=["not_reached"])
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for (method, scheme), g in sp.groupby(["method", "scheme"]):
        g = g.sort_values("b")
        ax.loglog(g["b"], g["median_epochs_to_eps"], marker="o", label=f"{method}/{scheme}")
    ax.set_xlabel("b")
    ax.set_ylabel("median epochs to eps")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", type=Path, help="directory holding manifest.csv and traces")
    ap.add_argument("--x", choices=["epoch", "sgrad_evals"], default="epoch")
    ap.add_argument("--prefix", default="traces", help="output file prefix (PNG)")
    args = ap.parse_args()

    plot_traces(load(args.out_dir), args.x, args.out_dir / f"{args.prefix}.png")
    if (args.out_dir / "speedup.csv").exists():
        plot_speedup(args.out_dir, args.out_dir / f"{args.prefix}_speedup.png")


if __name__ == "__main__":
    main()
