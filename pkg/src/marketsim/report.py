"""Report emission: delimited metric tables plus rendered figures.

The report path always writes machine-readable CSV/JSON; when figures are
enabled the same directory gets PNG charts of the market indices, per-agent
funds trajectories, and the per-agent metric table.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from marketsim.domain import StepRecord
from marketsim.metrics import METRIC_COLUMNS, AgentMetrics, StepIndices

INDEX_COLUMNS = ["step", "gini", "theil", "cv", "hhi", "cr4", "active_ratio"]


def metrics_csv(agent_metrics: Mapping[str, AgentMetrics]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["agent_id", *METRIC_COLUMNS, "mms_interactions"])
    for agent_id in sorted(agent_metrics):
        m = agent_metrics[agent_id]
        row = m.to_json()
        writer.writerow([agent_id, *(row[c] for c in METRIC_COLUMNS), m.mms_interactions])
    return buffer.getvalue()


def indices_csv(indices: Sequence[StepIndices]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(INDEX_COLUMNS)
    for entry in indices:
        row = entry.to_json()
        writer.writerow(["" if row[c] is None else row[c] for c in INDEX_COLUMNS])
    return buffer.getvalue()


def funds_series(records: Sequence[StepRecord]) -> dict[str, list[int]]:
    """End-of-step funds per agent across the episode."""
    series: dict[str, list[int]] = {}
    for record in records:
        for agent_id, state in record.snapshot.items():
            series.setdefault(agent_id, []).append(state.funds)
    return series


def mean_funds_series(per_run: Sequence[Mapping[str, Sequence[int]]]) -> dict[str, list[float]]:
    agents = sorted(per_run[0])
    return {
        a: list(np.mean([run[a] for run in per_run], axis=0)) for a in agents
    }


def _fig_market_indices(indices: Sequence[StepIndices], path: Path) -> None:
    steps = [i.step for i in indices]
    panels = [
        ("Gini", [i.gini for i in indices]),
        ("Theil", [i.theil for i in indices]),
        ("CV", [i.cv for i in indices]),
        ("HHI", [i.hhi for i in indices]),
        ("CR4", [i.cr4 for i in indices]),
        ("Active ratio", [i.active_ratio for i in indices]),
    ]
    fig, axes = plt.subplots(2, 3, figsize=(12, 6), sharex=True)
    for ax, (title, values) in zip(axes.flat, panels):
        xs = [s for s, v in zip(steps, values) if v is not None]
        ys = [v for v in values if v is not None]
        ax.plot(xs, ys, marker="o")
        ax.set_title(title)
        ax.set_xlabel("step")
        ax.grid(True, alpha=0.3)
    fig.suptitle("Market indices per step")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _fig_funds(funds: Mapping[str, Sequence[float]], path: Path) -> None:
    fig, ax = plt.subplots(figsize=(10, 6))
    for agent_id in sorted(funds):
        ax.plot(range(len(funds[agent_id])), funds[agent_id], label=agent_id, alpha=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("end-of-step funds")
    ax.set_title("Funds trajectories")
    ax.grid(True, alpha=0.3)
    if len(funds) <= 24:
        ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _fig_agent_metrics(agent_metrics: Mapping[str, AgentMetrics], path: Path) -> None:
    agents = sorted(agent_metrics)
    fig, axes = plt.subplots(3, 3, figsize=(14, 10))
    for ax, column in zip(axes.flat, METRIC_COLUMNS):
        values = [agent_metrics[a].to_json()[column] for a in agents]
        ax.bar(range(len(agents)), values)
        ax.set_title(column)
        ax.set_xticks(range(len(agents)))
        ax.set_xticklabels(agents, rotation=90, fontsize=6)
    fig.suptitle("Per-agent metrics")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(
    out_dir: str | Path,
    agent_metrics: Mapping[str, AgentMetrics],
    market_indices: Sequence[StepIndices],
    funds: Mapping[str, Sequence[float]] | None = None,
    figures: bool = True,
    prefix: str = "metrics",
) -> dict[str, Path]:
    """Write the delimited report (CSV + JSON) and, optionally, figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    csv_path = out_dir / f"{prefix}.csv"
    csv_path.write_text(metrics_csv(agent_metrics), encoding="utf-8")
    paths["metrics_csv"] = csv_path

    json_path = out_dir / f"{prefix}.json"
    json_path.write_text(
        json.dumps(
            {
                "agent_metrics": {a: m.to_json() for a, m in sorted(agent_metrics.items())},
                "market_indices": [i.to_json() for i in market_indices],
            },
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    paths["metrics_json"] = json_path

    indices_path = out_dir / "market_indices.csv"
    indices_path.write_text(indices_csv(market_indices), encoding="utf-8")
    paths["indices_csv"] = indices_path

    if figures:
        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        fig_indices = fig_dir / "market_indices.png"
        _fig_market_indices(market_indices, fig_indices)
        paths["fig_market_indices"] = fig_indices
        fig_metrics = fig_dir / "agent_metrics.png"
        _fig_agent_metrics(agent_metrics, fig_metrics)
        paths["fig_agent_metrics"] = fig_metrics
        if funds:
            fig_funds = fig_dir / "funds_trajectories.png"
            _fig_funds(funds, fig_funds)
            paths["fig_funds"] = fig_funds
    return paths
