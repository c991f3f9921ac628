"""Dataset report rendering: delimited metric scores plus figure files.

Writes one CSV row per QA pair (every present metric across the three
fields) and a score-distribution histogram PNG per metric, so a dataset can
be eyeballed without the web viewer.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .datastore import DatasetRecord, Workspace  # noqa: E402
from .metrics import FIELDS, METRIC_NAMES  # noqa: E402


def _columns(dataset: DatasetRecord) -> list[tuple[str, str]]:
    present = []
    for field_name in FIELDS:
        for metric in METRIC_NAMES:
            if any(p.metric_report.get(metric, field_name) is not None for p in dataset.pairs):
                present.append((field_name, metric))
    return present


def write_report(workspace: Workspace, dataset_id: str, out_dir: str | Path) -> dict:
    """Render pairs.csv and per-metric histograms into out_dir."""
    dataset = workspace.load_dataset(dataset_id)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    columns = _columns(dataset)

    csv_path = out / "pairs.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["pair_id", "doc_id", "chunk_id", "question", "answer"]
            + [f"{field_name}_{metric}" for field_name, metric in columns]
        )
        for pair in dataset.pairs:
            writer.writerow(
                [pair.pair_id, pair.doc_id, pair.chunk_id, pair.question, pair.answer]
                + [pair.metric_report.get(m, f) for f, m in columns]
            )

    figures = []
    for field_name, metric in columns:
        values = [
            v
            for p in dataset.pairs
            if (v := p.metric_report.get(metric, field_name)) is not None
        ]
        if not values:
            continue
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.hist(values, bins=20, range=(0, 1), color="#4878b0", edgecolor="white")
        ax.set_xlabel(f"{metric} ({field_name})")
        ax.set_ylabel("pairs")
        ax.set_title(f"{metric} distribution, {field_name} field")
        fig.tight_layout()
        figure_path = out / f"hist_{field_name}_{metric}.png"
        fig.savefig(figure_path, dpi=120)
        plt.close(fig)
        figures.append(str(figure_path))

    return {
        "dataset_id": dataset_id,
        "csv": str(csv_path),
        "figures": figures,
        "pairs": len(dataset.pairs),
    }
