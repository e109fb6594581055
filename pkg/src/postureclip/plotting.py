"""Figures written next to the text/CSV reports. Uses the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .cohort import GroupReport  # noqa: E402
from .fsm import EventKind, FeedbackEvent  # noqa: E402

FIG_WIDTH = 7.0
FSIZE = 9
_SAVE_KW = {"dpi": 120, "metadata": {"Software": None}}

plt.rc("font", size=FSIZE)
plt.rc("axes", titlesize=FSIZE, labelsize=FSIZE, linewidth=0.6)
plt.rc("legend", fontsize=FSIZE - 1)

BEFORE_COLOR = "#8c8c8c"
AFTER_COLOR = "#2b6cb0"


def _bars(ax, labels, before, after, ylabel, title):
    xs = range(len(labels))
    w = 0.38
    ax.bar([x - w / 2 for x in xs], before, w, label="Before", color=BEFORE_COLOR)
    ax.bar([x + w / 2 for x in xs], after, w, label="After", color=AFTER_COLOR)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)


def cohort_figure(report: GroupReport, path) -> Path:
    """Before/after bars per group for each angle, plus deviation prevalence."""
    measures = list(dict.fromkeys(r.measure for r in report.angles))
    devs = list(dict.fromkeys(r.measure for r in report.deviations))
    ncols = max(1, len(measures) + len(devs))
    fig, axes = plt.subplots(1, ncols, figsize=(FIG_WIDTH * ncols / 3, 2.8), squeeze=False)
    axes = axes[0]
    for ax, m in zip(axes, measures):
        rows = [r for r in report.angles if r.measure == m]
        _bars(ax, [r.group for r in rows], [r.mean_before for r in rows], [r.mean_after for r in rows],
              "degrees", rows[0].label)
    for ax, m in zip(axes[len(measures):], devs):
        rows = [r for r in report.deviations if r.measure == m]
        _bars(ax, [r.group for r in rows], [r.mean_before for r in rows], [r.mean_after for r in rows],
              "% of participants", rows[0].label)
    if len(axes):
        axes[0].legend(frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


_EVENT_STYLE = {
    EventKind.NOTIFY_VIBRATE: ("#d69e2e", "notify"),
    EventKind.DARKEN_START: ("#c05621", "darken"),
    EventKind.BLACKOUT: ("#1a202c", "blackout"),
    EventKind.RESTORE: ("#2f855a", "restore"),
}


def session_figure(trace, events: list[FeedbackEvent], threshold_deg: float, path) -> Path:
    """Tilt and screen brightness over a replayed session, with feedback events marked."""
    t = [row[0] / 1000.0 for row in trace]
    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(FIG_WIDTH, 4.0))
    ax1.plot(t, [row[1] for row in trace], lw=0.8, color=AFTER_COLOR)
    ax1.axhline(threshold_deg, color="#e53e3e", lw=0.8, ls="--", label="threshold")
    moving = [row[0] / 1000.0 for row in trace if row[3]]
    if moving:
        ax1.plot(moving, [0.0] * len(moving), "|", color=BEFORE_COLOR, ms=4, label="motion")
    ax1.set_ylabel("tilt (deg)")
    ax1.legend(frameon=False, loc="upper right")
    ax2.plot(t, [row[2] for row in trace], lw=1.0, color="#1a202c")
    ax2.set_ylim(-0.05, 1.05)
    ax2.set_ylabel("brightness")
    ax2.set_xlabel("time (s)")
    seen = set()
    for ev in events:
        if ev.kind not in _EVENT_STYLE:
            continue
        color, label = _EVENT_STYLE[ev.kind]
        ax2.axvline(ev.t_ms / 1000.0, color=color, lw=0.8, label=None if ev.kind in seen else label)
        seen.add(ev.kind)
    if seen:
        ax2.legend(frameon=False, loc="lower left", ncol=4)
    for ax in (ax1, ax2):
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path
