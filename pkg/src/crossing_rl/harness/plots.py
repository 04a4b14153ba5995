"""PNG figures written next to the CSV outputs."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import CurvePoint, Metrics  # noqa: E402


def plot_curve(path, curve: list[CurvePoint], title: str = ""):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    eps = [p.episode for p in curve]
    ax.plot(eps, [p.metrics.success_rate for p in curve], marker="o", label="success rate")
    ctr = [p.metrics.ctr for p in curve]
    if any(not math.isnan(c) for c in ctr):
        ax.plot(eps, ctr, marker="s", linestyle="--", label="CTR")
    ax.set_xlabel("training episodes")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_metrics(path, metrics: Metrics, title: str = ""):
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar(["success", "collision", "timeout"],
           [metrics.successes, metrics.collisions, metrics.timeouts],
           color=["tab:green", "tab:red", "tab:orange"])
    ax.set_ylabel("episodes")
    ax.set_title(title or f"success rate {metrics.success_rate:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_trace(path, rows: list[dict], title: str = ""):
    """Ego and traffic speed over time, ego acceleration and the chosen actions."""
    t = [r["time"] for r in rows]
    fig, (ax_v, ax_a) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    ax_v.plot(t, [r["ego_v"] for r in rows], color="k", linewidth=2, label="ego")
    vids = sorted({k[3:-2] for k in rows[0] if k.startswith("veh") and k.endswith("_v")}, key=int)
    for vid in vids:
        active = [r[f"veh{vid}_active"] for r in rows]
        vs = [r[f"veh{vid}_v"] if on else math.nan for r, on in zip(rows, active)]
        ax_v.plot(t, vs, label=f"{rows[0][f'veh{vid}_intention']} #{vid}")
    ax_v.set_ylabel("speed [m/s]")
    ax_v.legend(fontsize=7, loc="upper right")
    ax_v.grid(alpha=0.3)
    ax_a.plot(t, [r["ego_a"] for r in rows], color="k", label="ego a")
    ax_a.set_ylabel("acceleration [m/s²]")
    ax_a.set_xlabel("time [s]")
    ax_a.grid(alpha=0.3)
    prev = None
    for r in rows:
        if r["action"] != prev:
            ax_a.axvline(r["time"], color="gray", alpha=0.3)
            ax_a.text(r["time"], 4.5, r["action"], fontsize=6, rotation=90, va="top")
            prev = r["action"]
    ax_a.set_ylim(-5.5, 5.5)
    ax_v.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
