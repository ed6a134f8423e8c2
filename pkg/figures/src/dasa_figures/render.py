"""Figure and summary rendering from simulator trace CSVs.

Consumes only the files the simulator CLI emits: a manifest listing one
mean-curve CSV per sweep point, each with the fixed schema
``k,delta_sq,gate,median_error,epsilon,mean_staleness``.  Produces one
log-scale comparison panel per manifest plus a plain-text summary with
the final error of every curve and all pairwise ratios.  Rendering is a
pure function of the input files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

TRACE_COLUMNS = ("k", "delta_sq", "gate", "median_error", "epsilon", "mean_staleness")

X_AXES = ("updates", "iterations")


class SchemaError(ValueError):
    """A trace CSV does not carry the expected columns."""


@dataclass(frozen=True)
class Curve:
    label: str
    k: np.ndarray
    delta_sq: np.ndarray
    updates: np.ndarray

    @property
    def final_delta_sq(self) -> float:
        return float(self.delta_sq[-1])


@dataclass(frozen=True)
class RenderResult:
    image_paths: list[Path]
    summary_path: Path
    summary_text: str
    finals: dict[str, float]
    ratios: dict[tuple[str, str], float]


def load_trace(path: str | Path) -> dict[str, np.ndarray]:
    """Parse one trace CSV; schema mismatches report the exact column diff."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise SchemaError(f"{path}: empty trace file")
    header = tuple(lines[0].split(","))
    if header != TRACE_COLUMNS:
        missing = [c for c in TRACE_COLUMNS if c not in header]
        extra = [c for c in header if c not in TRACE_COLUMNS]
        raise SchemaError(
            f"{path}: column mismatch; missing {missing or 'none'}, unexpected {extra or 'none'}"
        )
    rows = [line.split(",") for line in lines[1:] if line.strip()]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    data = np.array([[float(cell) for cell in row] for row in rows])
    return {name: data[:, j] for j, name in enumerate(TRACE_COLUMNS)}


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    manifest = json.loads(path.read_text())
    if "points" not in manifest or not manifest["points"]:
        raise ValueError(f"{path}: manifest lists no points")
    return manifest


def load_curves(manifest_path: str | Path) -> list[Curve]:
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    curves = []
    for point in manifest["points"]:
        csv_path = manifest_path.parent / point["csv"]
        if not csv_path.exists():
            raise FileNotFoundError(f"manifest references missing CSV: {csv_path}")
        trace = load_trace(csv_path)
        curves.append(
            Curve(
                label=point["label"],
                k=trace["k"],
                delta_sq=trace["delta_sq"],
                updates=np.cumsum(trace["gate"]),
            )
        )
    return curves


def summarize(curves: list[Curve]) -> tuple[str, dict, dict]:
    """Final errors per curve and every ordered pairwise ratio."""
    finals = {c.label: c.final_delta_sq for c in curves}
    lines = [f"curve {c.label}: final_delta_sq = {c.final_delta_sq!r}" for c in curves]
    ratios: dict[tuple[str, str], float] = {}
    for a in curves:
        for b in curves:
            if a.label == b.label:
                continue
            ratio = a.final_delta_sq / b.final_delta_sq
            ratios[(a.label, b.label)] = ratio
            lines.append(f"ratio {a.label}/{b.label} = {ratio!r}")
    return "\n".join(lines) + "\n", finals, ratios


def render_comparison(
    manifest_path: str | Path,
    out_dir: str | Path,
    x_axis: str = "updates",
    formats: tuple[str, ...] = ("png",),
) -> RenderResult:
    """Render the manifest's curves into one panel plus a ratio summary."""
    if x_axis not in X_AXES:
        raise ValueError(f"x_axis must be one of {X_AXES}, got {x_axis!r}")
    manifest_path = Path(manifest_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(manifest_path)
    curves = load_curves(manifest_path)
    name = manifest.get("name", manifest_path.stem)

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for curve in curves:
        x = curve.updates if x_axis == "updates" else curve.k
        ax.plot(x, curve.delta_sq, label=curve.label, linewidth=1.2)
    ax.set_yscale("log")
    ax.set_xlabel("cumulative updates" if x_axis == "updates" else "iteration")
    ax.set_ylabel("squared parameter error")
    ax.set_title(name)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    image_paths = []
    for fmt in formats:
        image_path = out_dir / f"{name}.{fmt}"
        fig.savefig(image_path, dpi=150)
        image_paths.append(image_path)
    plt.close(fig)

    summary_text, finals, ratios = summarize(curves)
    summary_path = out_dir / f"{name}.summary.txt"
    summary_path.write_text(summary_text)
    return RenderResult(
        image_paths=image_paths,
        summary_path=summary_path,
        summary_text=summary_text,
        finals=finals,
        ratios=ratios,
    )
