"""Figure rendering for run reports.

Figures are written next to the delimited output; everything uses the Agg
backend so reports render identically on headless machines.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .fusion import normalized_weights  # noqa: E402
from .harness import Metrics  # noqa: E402


def save_weight_curves(n_values: Sequence[int], path: str | Path) -> Path:
    """Normalized recency-weight curves for several window lengths."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for n_max in n_values:
        weights = normalized_weights(n_max)
        ax.plot(range(n_max + 1), weights, marker="o", markersize=3, label=f"N={n_max}")
    ax.set_xlabel("gaze sample index n")
    ax.set_ylabel("normalized weight")
    ax.set_title("Recency weighting by window length")
    ax.legend()
    ax.grid(True, alpha=0.3)
    path = Path(path)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def save_success_bars(metrics: dict[tuple[str, float], Metrics], path: str | Path) -> Path:
    """One bar per (scenario, noise level) success rate."""
    labels = [f"{sid}\nsigma={sigma:g}" if sigma else sid for (sid, sigma) in metrics]
    values = [m.success_rate for m in metrics.values()]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(labels)), 4.0))
    ax.bar(range(len(values)), values, color="#4878d0")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylim(0, 105)
    ax.set_ylabel("success rate (%)")
    ax.set_title("Selection success by scenario")
    ax.grid(True, axis="y", alpha=0.3)
    path = Path(path)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def save_noise_curves(metrics: dict[tuple[str, float], Metrics], path: str | Path) -> Path:
    """Success rate versus gaze jitter, one curve per scenario."""
    by_scenario: dict[str, list[tuple[float, float]]] = {}
    for (sid, sigma), m in metrics.items():
        by_scenario.setdefault(sid, []).append((sigma, m.success_rate))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for sid, points in sorted(by_scenario.items()):
        points.sort()
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=sid)
    ax.set_xlabel("gaze jitter sigma (cm)")
    ax.set_ylabel("success rate (%)")
    ax.set_ylim(0, 105)
    ax.set_title("Robustness to gaze jitter")
    ax.legend()
    ax.grid(True, alpha=0.3)
    path = Path(path)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path
