"""Static figure emission.  Everything renders through the Agg backend
and is written to disk; nothing opens a window."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, out_path: str, manifest: str | None) -> None:
    metadata = {"Description": manifest} if manifest else None
    fig.savefig(out_path, metadata=metadata)
    plt.close(fig)


def save_learning_curve(
    curves: dict[str, list[float]],
    out_path: str,
    title: str = "Training curve",
    manifest: str | None = None,
) -> None:
    """Line plot of per-episode returns, one line per labeled curve."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, returns in curves.items():
        ax.plot(range(len(returns)), returns, label=label, linewidth=1.2)
    ax.set_xlabel("episode")
    ax.set_ylabel("return")
    ax.set_title(title)
    if curves:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, out_path, manifest)


def save_rate_timeline(
    seconds: list[int],
    apm: list[float],
    epm: list[float],
    out_path: str,
    title: str = "Instantaneous action rates",
    manifest: str | None = None,
) -> None:
    """APM/EPM over game time for a single replay side."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(seconds, apm, label="APM", linewidth=1.0)
    ax.plot(seconds, epm, label="EPM", linewidth=1.0)
    ax.set_xlabel("game second")
    ax.set_ylabel("actions per minute")
    ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, out_path, manifest)


def save_metric_bars(
    labels: list[str],
    groups: dict[str, list[float]],
    out_path: str,
    title: str,
    ylabel: str,
    manifest: str | None = None,
) -> None:
    """Grouped bar chart, one bar group per label."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    width = 0.8 / max(len(groups), 1)
    for i, (name, values) in enumerate(groups.items()):
        xs = [j + i * width for j in range(len(labels))]
        ax.bar(xs, values, width=width, label=name)
    ax.set_xticks([j + 0.4 - width / 2 for j in range(len(labels))])
    ax.set_xticklabels(labels)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path, manifest)
