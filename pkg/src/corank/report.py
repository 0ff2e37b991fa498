"""Figure rendering for the report paths; every figure lands next to its table."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_metrics_figure(rows, path, title=None):
    """Bar chart of a metrics report: one bar per (metric, k) line."""
    labels = [m if k is None else f"{m}@{k}" for m, k, _ in rows]
    values = [v for _, _, v in rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(labels)), 3.2))
    ax.bar(range(len(values)), values, color="#4878d0")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("value")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_training_curves(log_rows, path, title=None):
    """Objective vs epoch, with any extra logged metrics on a twin axis."""
    epochs = [row["epoch"] for row in log_rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(epochs, [row["objective"] for row in log_rows], "-o", ms=3,
            color="#4878d0", label="objective")
    ax.set_xlabel("epoch")
    ax.set_ylabel("objective")
    extras = [c for c in log_rows[0] if c not in ("epoch", "objective")]
    if extras:
        twin = ax.twinx()
        for col, color in zip(extras, ("#d65f5f", "#6acc64", "#956cb4")):
            twin.plot(epochs, [row.get(col) for row in log_rows], "-s", ms=3,
                      color=color, label=col)
        twin.set_ylabel(" / ".join(extras))
        lines, labels = ax.get_legend_handles_labels()
        tl, tlab = twin.get_legend_handles_labels()
        ax.legend(lines + tl, labels + tlab, fontsize=8)
    else:
        ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_kernel_bench_figure(rows, slopes, path):
    """Log-log runtime vs total ratings, one line per kernel, slopes in the legend."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    kernels = sorted({r["kernel"] for r in rows})
    colors = {"naive": "#d65f5f", "fast": "#6acc64", "scan": "#4878d0"}
    for kernel in kernels:
        sub = sorted((r for r in rows if r["kernel"] == kernel),
                     key=lambda r: r["ratings"])
        label = kernel
        if slopes and kernel in slopes:
            label = f"{kernel} (slope {slopes[kernel]:.2f})"
        ax.loglog([r["ratings"] for r in sub], [r["mean_s"] for r in sub],
                  "-o", ms=4, color=colors.get(kernel), label=label)
    ax.set_xlabel("total ratings")
    ax.set_ylabel("seconds per gradient")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_encode_bench_figure(rows, path):
    """Encoding time against propagation depth (near-linear expected)."""
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    sub = sorted(rows, key=lambda r: r["depth"])
    ax.plot([r["depth"] for r in sub], [r["mean_s"] for r in sub], "-o",
            color="#4878d0")
    ax.set_xlabel("encoding depth")
    ax.set_ylabel("seconds")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
