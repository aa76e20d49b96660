"""Figure builders over the simulator's metrics and sweep CSV schemas.

Six figure types are supported: training reward curves, utility-ratio
bars, latency against task size, latency against migration bandwidth, and
latency/reputation by attack scenario. Rendering is a pure function of
the input CSV: fixed style, fixed variant ordering, fixed smoothing, so
re-rendering the same file reproduces the same image bytes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIGURE_IDS = (
    "reward_curve",
    "rho_bars",
    "latency_tasksize",
    "latency_bandwidth",
    "attack_latency",
    "attack_reputation",
)

# stable display order; unknown variants sort after these, alphabetically
VARIANT_ORDER = ("hybrid_gdm", "hybrid_gdm_nopre", "hybrid_gdm_fullpre", "random")
VARIANT_LABELS = {
    "hybrid_gdm": "hybrid diffusion",
    "hybrid_gdm_nopre": "no pre-migration",
    "hybrid_gdm_fullpre": "full pre-migration",
    "random": "random",
}

SMOOTH_WINDOW = 20  # moving-average window for reward curves


class SchemaError(ValueError):
    """Raised when an input CSV is missing a required column or has no rows."""


@dataclass
class FigureSpec:
    figure_id: str
    inputs: list[Path]  # one or more CSV files
    output: Path
    labels: list[str] = field(default_factory=list)  # per input, reward_curve only

    def __post_init__(self) -> None:
        if self.figure_id not in FIGURE_IDS:
            raise SchemaError(f"unknown figure id {self.figure_id!r} (use one of {FIGURE_IDS})")
        self.inputs = [Path(p) for p in self.inputs]
        self.output = Path(self.output)


def read_rows(path: Path, required: tuple[str, ...]) -> list[dict]:
    """Read a CSV, skipping '#' schema/comment lines, validating columns."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    for column in required:
        if column not in rows[0]:
            raise SchemaError(f"{path}: missing required column {column!r}")
    return rows


def _variant_sort_key(name: str) -> tuple[int, str]:
    return (VARIANT_ORDER.index(name), "") if name in VARIANT_ORDER else (len(VARIANT_ORDER), name)


def _smooth(values: np.ndarray, window: int = SMOOTH_WINDOW) -> np.ndarray:
    if len(values) <= 1 or window <= 1:
        return values
    w = min(window, len(values))
    kernel = np.ones(w) / w
    padded = np.concatenate([np.full(w - 1, values[0]), values])
    return np.convolve(padded, kernel, mode="valid")


def _new_axes():
    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=120)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _sweep_table(spec: FigureSpec, param: str, metric: str):
    """Aggregate sweep rows to mean metric per (value, variant)."""
    rows = read_rows(spec.inputs[0], ("param", "value", "seed", "variant", metric))
    rows = [r for r in rows if r["param"] == param]
    if not rows:
        raise SchemaError(f"{spec.inputs[0]}: no rows for param {param!r}")
    values = sorted({r["value"] for r in rows}, key=lambda v: (len(v), v) if not _is_float(v) else (0, float(v)))
    variants = sorted({r["variant"] for r in rows}, key=_variant_sort_key)
    table = np.full((len(values), len(variants)), np.nan)
    for i, value in enumerate(values):
        for j, variant in enumerate(variants):
            picked = [float(r[metric]) for r in rows if r["value"] == value and r["variant"] == variant]
            if picked:
                table[i, j] = float(np.mean(picked))
    return values, variants, table


def _is_float(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def _grouped_bars(ax, values, variants, table, ylabel):
    width = 0.8 / len(variants)
    x = np.arange(len(values))
    for j, variant in enumerate(variants):
        ax.bar(
            x + (j - (len(variants) - 1) / 2) * width,
            table[:, j],
            width=width,
            label=VARIANT_LABELS.get(variant, variant),
        )
    ax.set_xticks(x)
    ax.set_xticklabels(values)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)


def _lines_over_values(ax, values, variants, table, xlabel, ylabel):
    x = np.array([float(v) for v in values])
    for j, variant in enumerate(variants):
        ax.plot(x, table[:, j], marker="o", label=VARIANT_LABELS.get(variant, variant))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)


def build_figure(spec: FigureSpec):
    """Build the matplotlib figure for a spec; returns (fig, ax)."""
    fig, ax = _new_axes()
    try:
        if spec.figure_id == "reward_curve":
            labels = spec.labels or [p.stem for p in spec.inputs]
            if len(labels) != len(spec.inputs):
                raise SchemaError("one label per input CSV required")
            for path, label in zip(spec.inputs, labels):
                rows = read_rows(path, ("epoch", "train_reward_mean"))
                epochs = np.array([float(r["epoch"]) for r in rows])
                rewards = np.array([float(r["train_reward_mean"]) for r in rows])
                ax.plot(epochs, _smooth(rewards), label=VARIANT_LABELS.get(label, label))
            ax.set_xlabel("training epoch")
            ax.set_ylabel(f"reward (moving average, window {SMOOTH_WINDOW})")
            ax.legend(fontsize=8)
        elif spec.figure_id == "rho_bars":
            values, variants, table = _sweep_table(spec, "utility_ratio", "mean_reward")
            _grouped_bars(ax, values, variants, table, "mean eval reward")
            ax.set_xlabel("utility weight ratio")
        elif spec.figure_id == "latency_tasksize":
            values, variants, table = _sweep_table(spec, "task_size", "mean_latency")
            _lines_over_values(ax, values, variants, table, "task size (MB)", "mean latency (s)")
        elif spec.figure_id == "latency_bandwidth":
            values, variants, table = _sweep_table(spec, "migration_bandwidth", "mean_latency")
            _lines_over_values(ax, values, variants, table, "migration bandwidth (Mbit/s)", "mean latency (s)")
        elif spec.figure_id == "attack_latency":
            values, variants, table = _sweep_table(spec, "attack_type", "mean_latency")
            _grouped_bars(ax, values, variants, table, "mean latency (s)")
            ax.set_xlabel("attack scenario")
        elif spec.figure_id == "attack_reputation":
            values, variants, table = _sweep_table(spec, "attack_type", "mean_selected_reputation")
            _grouped_bars(ax, values, variants, table, "mean selected reputation")
            ax.set_xlabel("attack scenario")
        fig.tight_layout()
        return fig, ax
    except Exception:
        plt.close(fig)
        raise


def render(spec: FigureSpec) -> Path:
    """Render a spec to its output image; no file is written on error."""
    fig, _ = build_figure(spec)
    try:
        spec.output.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.output, metadata={"Software": "plotkit"})
    finally:
        plt.close(fig)
    return spec.output
