"""Report figures rendered straight to files (no display needed)."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 3.6),
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "savefig.dpi": 120,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-stable
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_reliability(series, path, max_hosts: int = 12) -> Path:
    """Step plot of each host's reliability score over simulated time."""
    per_host = defaultdict(list)
    for t, host, value in series:
        per_host[host].append((t, value))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for host in sorted(per_host)[:max_hosts]:
            pts = per_host[host]
            ax.step([p[0] for p in pts], [p[1] for p in pts], where="post", lw=1, label=host)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("reliability (%)")
        ax.set_ylim(-5, 105)
        if per_host:
            ax.legend(fontsize=6, ncol=4, loc="lower left", frameon=False)
        return _save(fig, path)


def plot_completions(log, path) -> Path:
    """Cumulative job completions against time, with failure declarations marked."""
    done = [r.time for r in log.records if r.kind == "JobCompleted"]
    declared = [r.time for r in log.records if r.kind == "HostDeclaredFailed"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if done:
            ax.step(done, range(1, len(done) + 1), where="post", color="C0", label="completed")
        for t in declared:
            ax.axvline(t, color="C3", lw=0.5, alpha=0.4)
        ax.set_xlabel("time (s)")
        ax.set_ylabel("jobs completed")
        return _save(fig, path)


def plot_sweep(rows, path) -> Path:
    """Mean completion rate per grid point with min/max whiskers."""
    labels = [r["point"] for r in rows]
    means = [r["mean_completion_rate"] for r in rows]
    lo = [m - r["min_completion_rate"] for m, r in zip(means, rows)]
    hi = [r["max_completion_rate"] - m for m, r in zip(means, rows)]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.errorbar(range(len(rows)), means, yerr=[lo, hi], fmt="o", capsize=4)
        ax.set_xticks(range(len(rows)), labels, rotation=20, ha="right", fontsize=7)
        ax.set_ylabel("completion rate")
        ax.set_ylim(0, 1.05)
        return _save(fig, path)
