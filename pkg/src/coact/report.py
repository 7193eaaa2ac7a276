"""Episode reports: event stream, metrics file, and rendered figures.

The event stream is newline-delimited JSON with a fixed key order per event
type, so identical runs produce byte-identical files. Figures are rendered
headlessly to PNG next to the report.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .engine import ComparisonResult, EpisodeResult
from .stats import AnovaResult


def write_events(events: list[dict], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for event in events:
            fh.write(json.dumps(event))
            fh.write("\n")
    return path


def write_report(payload: dict, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def _timeline_figure(result: EpisodeResult, iso_clearance: float, path: Path) -> Path:
    t = np.array([r.t for r in result.records])
    alpha = np.array([r.alpha for r in result.records])
    dist = np.array([r.min_distance for r in result.records])

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(9, 6), sharex=True)
    ax1.plot(t, alpha, lw=1.2, color="tab:blue")
    ax1.set_ylabel("speed scale")
    ax1.set_ylim(-0.05, 1.05)
    ax1.grid(alpha=0.3)
    for tw in result.warning_times:
        ax1.axvline(tw, color="tab:red", ls="--", lw=1.0)

    ax2.plot(t, dist, lw=1.2, color="tab:green")
    ax2.axhline(iso_clearance, color="tab:red", ls=":", lw=1.0, label="protective margin")
    ax2.set_ylabel("worst separation [m]")
    ax2.set_xlabel("time [s]")
    ax2.grid(alpha=0.3)
    ax2.legend(loc="upper right")
    fig.suptitle(f"{result.mode} episode")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _speed_figure(result: EpisodeResult, path: Path) -> Path:
    t = np.array([r.t for r in result.records])
    v_max = np.array([r.v_max for r in result.records])
    v_rh = np.array([r.v_rh for r in result.records])

    fig, ax = plt.subplots(figsize=(9, 3.5))
    ax.plot(t, v_max, lw=1.2, color="tab:orange", label="monitored limit")
    ax.plot(t, v_rh, lw=1.2, color="tab:blue", label="approach speed")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("speed [m/s]")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _comparison_figure(comparison: ComparisonResult, path: Path) -> Path:
    labels = ["execution time [s]", "downtime [s]"]
    pred = [comparison.predictive.execution_time, comparison.predictive.downtime]
    base = [comparison.baseline.execution_time, comparison.baseline.downtime]

    x = np.arange(len(labels))
    width = 0.35
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - width / 2, base, width, label="baseline", color="tab:gray")
    ax.bar(x + width / 2, pred, width, label="predictive", color="tab:blue")
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.grid(alpha=0.3, axis="y")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_run_report(
    result: EpisodeResult,
    iso_clearance: float,
    outdir: str | Path,
    scenario_name: str,
) -> dict:
    """Write events.ndjson, the figures, and report.json for one episode."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    events_path = write_events(result.events, outdir / "events.ndjson")
    figures = [
        _timeline_figure(result, iso_clearance, outdir / "timeline.png"),
        _speed_figure(result, outdir / "speeds.png"),
    ]
    payload = {
        "scenario": scenario_name,
        "mode": result.mode,
        "metrics": result.metrics,
        "warning_times": result.warning_times,
        "events": events_path.name,
        "figures": [f.name for f in figures],
    }
    write_report(payload, outdir / "report.json")
    return payload


def render_comparison_report(
    comparison: ComparisonResult,
    iso_clearance: float,
    outdir: str | Path,
    scenario_name: str,
) -> dict:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    pred_events = write_events(
        comparison.predictive.events, outdir / "events_predictive.ndjson"
    )
    base_events = write_events(
        comparison.baseline.events, outdir / "events_baseline.ndjson"
    )
    figures = [
        _comparison_figure(comparison, outdir / "comparison.png"),
        _timeline_figure(
            comparison.predictive, iso_clearance, outdir / "timeline_predictive.png"
        ),
        _timeline_figure(
            comparison.baseline, iso_clearance, outdir / "timeline_baseline.png"
        ),
    ]
    payload = {
        "scenario": scenario_name,
        "predictive": comparison.predictive.metrics,
        "baseline": comparison.baseline.metrics,
        "execution_improvement": comparison.execution_improvement,
        "downtime_reduction": comparison.downtime_reduction,
        "events": [pred_events.name, base_events.name],
        "figures": [f.name for f in figures],
    }
    write_report(payload, outdir / "report.json")
    return payload


def format_anova_table(result: AnovaResult) -> str:
    """Plain-text summary in the usual two-block layout."""
    lines = ["SUMMARY"]
    lines.append(f"{'Groups':<14}{'Count':>8}{'Sum':>12}{'Average':>12}{'Variance':>12}")
    for i, g in enumerate(result.groups):
        label = g.label or f"group {i + 1}"
        lines.append(
            f"{label:<14}{g.count:>8d}{g.total:>12.4g}{g.mean:>12.6g}{g.variance:>12.6g}"
        )
    lines.append("")
    lines.append("ANOVA")
    lines.append(
        f"{'Source':<16}{'SS':>12}{'df':>6}{'MS':>12}{'F':>10}{'P-value':>12}{'F crit':>10}"
    )
    lines.append(
        f"{'Between groups':<16}{result.ss_between:>12.4f}{result.df_between:>6d}"
        f"{result.ms_between:>12.4f}{result.f_stat:>10.4f}{result.p_value:>12.6f}"
        f"{result.f_crit:>10.5f}"
    )
    lines.append(
        f"{'Within groups':<16}{result.ss_within:>12.4f}{result.df_within:>6d}"
        f"{result.ms_within:>12.4f}"
    )
    lines.append(
        f"{'Total':<16}{result.ss_between + result.ss_within:>12.4f}"
        f"{result.df_between + result.df_within:>6d}"
    )
    return "\n".join(lines)


def anova_figure(result: AnovaResult, path: str | Path) -> Path:
    path = Path(path)
    labels = [g.label or f"group {i + 1}" for i, g in enumerate(result.groups)]
    means = [g.mean for g in result.groups]
    errs = [np.sqrt(g.variance / g.count) for g in result.groups]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(labels, means, yerr=errs, capsize=4, color="tab:blue", alpha=0.8)
    ax.set_ylabel("group mean")
    ax.set_title(
        f"F = {result.f_stat:.3f}, p = {result.p_value:.5f}, "
        f"F crit = {result.f_crit:.3f}"
    )
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
