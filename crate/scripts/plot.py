#!/usr/bin/env python3
"""Render figures from a compass output directory.

usage: plot.py OUT_DIR [--save DIR]
"""
import argparse
import os

import matplotlib.pyplot as plt
import numpy as np


def load(path):
    with open(path) as f:
        lines = [line for line in f if not line.startswith("#")]
    return np.genfromtxt(lines, delimiter=",", names=True)


def fig1(out, ax):
    d = load(os.path.join(out, "fig1_scan.csv"))
    ax.semilogx(d["a_over_B"], d["D_S"], "o-")
    ax.set_xlabel("a / B")
    ax.set_ylabel("D_S")


def fig2(out, axes):
    r = load(os.path.join(out, "fig2_response.csv"))
    axes[0].plot(r["theta_rad"], r["phi_S_uncontrolled"], "ks", ms=3, label="free")
    axes[0].plot(r["theta_rad"], r["phi_S_controlled"], "ro", ms=3, label="control")
    axes[0].set_xlabel("theta")
    axes[0].set_ylabel("Phi_S")
    axes[0].legend()
    t = load(os.path.join(out, "fig2_traces.csv"))
    for name in t.dtype.names[1:5]:
        axes[1].plot(t["t_us"], t[name], label=name)
    axes[1].set_xlabel("t (us)")
    axes[1].set_ylabel("f_S")
    axes[1].legend(fontsize=7)


def fig3(out, ax):
    d = load(os.path.join(out, "fig3_scan.csv"))
    for dv in np.unique(d["d"]):
        sel = d["d"] == dv
        ax.plot(d["gamma_per_us"][sel], d["D_S"][sel], "o-", label=f"d = {dv:g}")
    ax.set_xlabel("gamma (1/us)")
    ax.set_ylabel("D_S")
    ax.legend()


def main():
    p = argparse.ArgumentParser()
    p.add_argument("out")
    p.add_argument("--save")
    args = p.parse_args()
    jobs = [
        ("fig1_scan.csv", fig1, 1),
        ("fig2_response.csv", fig2, 2),
        ("fig3_scan.csv", fig3, 1),
    ]
    for csv, draw, panels in jobs:
        if not os.path.exists(os.path.join(args.out, csv)):
            continue
        fig, axes = plt.subplots(1, panels, figsize=(5 * panels, 4))
        draw(args.out, axes)
        fig.tight_layout()
        if args.save:
            os.makedirs(args.save, exist_ok=True)
            fig.savefig(os.path.join(args.save, csv.split("_")[0] + ".png"), dpi=120)
    if not args.save:
        plt.show()


if __name__ == "__main__":
    main()
