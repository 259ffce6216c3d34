#!/usr/bin/env python3
"""Quick-look plots from a results directory produced by `safebayes run`.

Usage: python3 scripts/plot_results.py results/wrong50 [out.png]

Reads aggregate.csv and draws the square-risk, MAP-order, overconfidence and
selected-eta curves per method (the four-panel layout of the simulation
studies).  CSV is the contract; this script is a convenience viewer.
"""

import csv
import sys
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    agg = sys.argv[1].rstrip("/") + "/aggregate.csv"
    out = sys.argv[2] if len(sys.argv) > 2 else sys.argv[1].rstrip("/") + "/curves.png"
    series = defaultdict(lambda: defaultdict(list))
    with open(agg) as fh:
        for row in csv.DictReader(fh):
            m = row["method"]
            series[m]["n"].append(int(row["n"]))
            for col in ("sq_risk_mean", "map_order_mean", "overconfidence_mean"):
                series[m][col].append(float(row[col]) if row[col] != "NA" else float("nan"))
            series[m]["eta"].append(float(row["eta_hat_geomean"]) if row["eta_hat_geomean"] != "NA" else float("nan"))

    fig, axes = plt.subplots(4, 1, figsize=(7, 14), sharex=True)
    panels = [
        ("sq_risk_mean", "square risk"),
        ("map_order_mean", "MAP model order"),
        ("overconfidence_mean", "self-confidence ratio"),
        ("eta", "selected eta (geometric mean)"),
    ]
    for ax, (col, label) in zip(axes, panels):
        for m, data in sorted(series.items()):
            ax.plot(data["n"], data[col], label=m, lw=1.2)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=7)
    axes[-1].set_xlabel("sample size n")
    axes[-1].set_yscale("log", base=2)
    fig.tight_layout()
    fig.savefig(out, dpi=130)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
