"""PNG figures for convergence curves and edge-count sweeps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from app.bench import SweepResult  # noqa: E402


def plot_convergence(report: dict[int, list[tuple[int, float]]], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 5))
    for bucket, series in sorted(report.items()):
        if not series:
            continue
        iterations, values = zip(*series)
        ax.plot(iterations, values, label=f"{bucket} DAGs")
    ax.set_xlabel("Training iteration")
    ax.set_ylabel("Mean makespan")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_sweep(result: SweepResult, path: Path) -> Path:
    edges = list(range(1, result.max_edges + 1))
    fig, ax = plt.subplots(figsize=(8, 5))
    for bucket in sorted(result.makespans):
        ax.plot(edges, [result.reduction(bucket, m) for m in edges], marker="o", label=f"{bucket} DAGs")
    ax.axhline(0.0, color="grey", linewidth=0.8)
    ax.set_xticks(edges)
    ax.set_xlabel("Added edges")
    ax.set_ylabel("Makespan reduction (%)")
    ax.set_title(f"Rule: {result.rule}")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
