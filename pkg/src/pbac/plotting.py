"""Latency CDF figures rendered from a report (needs the ``plot`` extra)."""

from __future__ import annotations

import os

from .bench import PercentileReport


def render_cdf(report: PercentileReport, out_dir: str) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for mode in report.modes():
        xs = sorted(report.latencies(mode))
        if not xs:
            continue
        ys = [(k + 1) / len(xs) for k in range(len(xs))]
        ax.step([x / 1000 for x in xs], ys, where="post", label=mode)
    ax.set_xlabel("latency (ms)")
    ax.set_ylabel("fraction of requests")
    ax.set_title(report.name)
    ax.grid(True, alpha=0.3)
    if report.samples:
        ax.legend(loc="lower right", fontsize="small")
    path = os.path.join(out_dir, f"{report.name}.png")
    # no Software/date metadata so re-renders stay byte-stable
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path
