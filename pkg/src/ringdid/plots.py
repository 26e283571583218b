"""Figure rendering for the report path.

Every function writes one PNG and returns the path.  The non-interactive
backend is forced at import so the CLI works headless; rendering is
deterministic for fixed inputs.
"""
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .curve import Z95

_DPI = 150


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def curve_figure(curve, path, title=None):
    """Effect curve with 95% bars; the anchor bin is marked hollow."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    mid = curve.midpoints
    ax.axhline(0.0, color="0.6", lw=0.8, zorder=1)
    for edge in curve.edges_hi[:-1]:
        ax.axvline(edge, color="0.9", lw=0.6, zorder=0)
    ax.errorbar(
        mid[:-1],
        curve.tau_hat[:-1],
        yerr=Z95 * curve.se[:-1],
        fmt="o",
        color="tab:blue",
        ecolor="tab:blue",
        capsize=3,
        markersize=5,
        zorder=3,
    )
    ax.plot(
        mid[-1],
        curve.tau_hat[-1],
        "o",
        markerfacecolor="white",
        markeredgecolor="tab:blue",
        markersize=6,
        zorder=3,
    )
    ax.annotate(
        "anchor",
        (mid[-1], 0.0),
        textcoords="offset points",
        xytext=(0, 8),
        ha="center",
        fontsize=8,
        color="0.4",
    )
    ax.set_xlabel("distance from treatment point")
    ax.set_ylabel("effect relative to outermost bin")
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def ring_figure(diffs, rings, estimate, path, title=None):
    """Outcome changes against distance with the two ring means drawn in."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    keep = diffs.distances <= rings.d_c
    d = diffs.distances[keep]
    dy = diffs.delta_y[keep]
    ax.scatter(d, dy, s=8, alpha=0.35, color="0.5", linewidths=0, zorder=2)
    treated_mean = estimate.group_means["treated"]
    control_mean = estimate.group_means["control"]
    ax.hlines(treated_mean, 0.0, rings.d_t, color="tab:red", lw=2.0, zorder=3, label="treated mean")
    ax.hlines(
        control_mean, rings.d_t, rings.d_c, color="tab:blue", lw=2.0, zorder=3, label="control mean"
    )
    for x in (rings.d_t, rings.d_c):
        ax.axvline(x, color="0.75", lw=0.8, ls="--", zorder=1)
    ax.set_xlabel("distance from treatment point")
    ax.set_ylabel("outcome change")
    ax.legend(loc="best", fontsize=8)
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def rc_ring_figure(estimate, path, title=None):
    """Four cell means of the double difference, grouped by ring."""
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    order = ["treated_period0", "treated_period1", "control_period0", "control_period1"]
    values = [estimate.group_means[k] for k in order]
    xs = np.array([0.0, 1.0, 2.6, 3.6])
    colors = ["tab:red", "tab:red", "tab:blue", "tab:blue"]
    bars = ax.bar(xs, values, width=0.8, color=colors)
    bars[0].set_alpha(0.45)
    bars[2].set_alpha(0.45)
    ax.set_xticks(xs)
    ax.set_xticklabels(["before", "after", "before", "after"])
    ax.text(0.5, -0.14, "treated ring", transform=ax.get_xaxis_transform(), ha="center")
    ax.text(3.1, -0.14, "control ring", transform=ax.get_xaxis_transform(), ha="center")
    ax.set_ylabel("mean outcome")
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def distance_figure(sample, path, title=None):
    """Histogram of unit distances to the treatment point."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    bins = min(50, max(10, sample.n // 20))
    ax.hist(sample.distances, bins=bins, color="tab:blue", alpha=0.7)
    ax.set_xlabel("distance from treatment point")
    ax.set_ylabel("units")
    if title:
        ax.set_title(title)
    return _finish(fig, path)


def mc_figure(report, target, path, title=None):
    """Sampling distribution of one target across replications."""
    draws = report.draws[target]
    estimates = np.array([t.estimate for t in draws])
    summary = report.targets[target]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    bins = min(40, max(10, len(estimates) // 10))
    ax.hist(estimates, bins=bins, color="tab:blue", alpha=0.7)
    ax.axvline(summary.mean_estimate, color="tab:blue", lw=1.6, label="mean estimate")
    ax.axvline(summary.mean_truth, color="tab:red", lw=1.6, ls="--", label="target")
    ax.set_xlabel(target)
    ax.set_ylabel("replications")
    ax.legend(loc="best", fontsize=8)
    if title:
        ax.set_title(title)
    return _finish(fig, path)
