#!/usr/bin/env python3
"""Static plots for a bench results directory: latency box plots, rolling
latency bands and concurrency scatter."""

import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def ok_latencies(exp):
    return [r["latency_ms"] for r in exp["records"] if r["success"]]


def main(out_dir: Path) -> None:
    doc = json.loads((out_dir / "results.json").read_text())
    experiments = doc["experiments"]
    sequential = [e for e in experiments if e["spec"]["kind"] != "concurrency"]
    concurrent = [e for e in experiments if e["spec"]["kind"] == "concurrency"]

    if sequential:
        fig, ax = plt.subplots(figsize=(max(6, len(sequential) * 0.9), 4))
        ax.boxplot([ok_latencies(e) for e in sequential])
        ax.set_xticks(range(1, len(sequential) + 1), [e["name"] for e in sequential])
        ax.set_ylabel("latency (ms)")
        ax.tick_params(axis="x", rotation=60)
        fig.tight_layout()
        fig.savefig(out_dir / "latency_box.png", dpi=120)
        plt.close(fig)

        fig, ax = plt.subplots(figsize=(8, 4))
        for e in sequential:
            mean = e["rolling_mean_ms"]
            lat = ok_latencies(e)
            if not mean:
                continue
            lo = [min(lat[i:i + 4]) for i in range(len(mean))]
            hi = [max(lat[i:i + 4]) for i in range(len(mean))]
            xs = range(len(mean))
            ax.plot(xs, mean, label=e["name"])
            ax.fill_between(xs, lo, hi, alpha=0.2)
        ax.set_xlabel("request")
        ax.set_ylabel("latency, 4-sample rolling mean (ms)")
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(out_dir / "latency_rolling.png", dpi=120)
        plt.close(fig)

    if concurrent:
        fig, ax = plt.subplots(figsize=(8, 4))
        for e in concurrent:
            c = e["spec"]["concurrency"]
            ok = [r["latency_ms"] for r in e["records"] if r["success"]]
            bad = [r["latency_ms"] for r in e["records"] if not r["success"]]
            ax.scatter([c] * len(ok), ok, s=8, c="tab:blue")
            ax.scatter([c] * len(bad), bad, s=8, c="tab:red", marker="x")
        ax.set_xscale("log")
        ax.set_xlabel("concurrency")
        ax.set_ylabel("latency (ms); red = failed")
        fig.tight_layout()
        fig.savefig(out_dir / "concurrency_scatter.png", dpi=120)
        plt.close(fig)


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit("usage: plot_results.py RESULTS_DIR")
    main(Path(sys.argv[1]))
