"""SVG chart rendering for control charts and scree curves."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "lbspc"

_SVG_META = {"Date": None}  # keep outputs byte-identical between runs


def save_control_chart(result, path, title: str = "Phase II control chart") -> None:
    """Statistic trace with limit line and alarm marker."""
    fig, ax = plt.subplots(figsize=(7, 4))
    t = range(1, len(result.Q) + 1)
    ax.plot(t, result.Q, marker="o", ms=3, lw=1, color="tab:blue", label="$Q_t$")
    ax.axhline(result.h, color="tab:red", ls="--", lw=1, label="control limit")
    if result.alarm_time is not None:
        ax.plot(
            result.alarm_time, result.Q[result.alarm_time - 1],
            marker="x", ms=10, color="tab:red", label=f"alarm t={result.alarm_time}",
        )
    ax.set_xlabel("t")
    ax.set_ylabel("charting statistic")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def save_phase1_chart(result, path, title: str = "Phase I changepoint statistic") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    taus = range(2, 2 + len(result.statistic_trace))
    ax.plot(taus, result.statistic_trace, marker="o", ms=3, lw=1, color="tab:blue")
    if result.changepoint_estimate is not None:
        ax.axvline(
            result.changepoint_estimate + 1, color="tab:red", ls="--",
            label=f"estimated shift at t={result.changepoint_estimate + 1}",
        )
        ax.legend(loc="best", fontsize=8)
    ax.set_xlabel(r"candidate shift time $\tau$")
    ax.set_ylabel(r"$T(\tau)$")
    ax.set_title(f"{title} (p = {result.p_value:.4g})")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def save_scree_plot(curve, path, title: str = "Reconstruction distance") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(curve.k_values, curve.distances, marker="o", ms=3, lw=1)
    ax.axvline(curve.selected_k, color="tab:red", ls="--",
               label=f"selected k = {curve.selected_k}")
    ax.set_xlabel("k")
    ax.set_ylabel(r"$\|D_k\|_F$")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
