"""Simulated-clinician evaluation: iterate oracle clicks against a model,
record per-click Dice/HD95 traces, and aggregate them into benchmark reports.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clicks import Click, EmptyGroundTruth, encode_clicks, oracle_click
from .data import DatasetManifest, Provenance, SliceRecord
from .geometry import (
    PIXEL_UNITS,
    MetricReport,
    PixelSpacing,
    as_mask,
    dice,
    distance_field,
    extract_contour,
    hd95,
    mask_to_rle,
    rle_to_mask,
    worst_case_distance_mm,
)
from .network import RevisionInput, RevisionUNet
from .network import to_mask as binarize
from .training import DegradeParams, degrade_mask


class MixedBudget(ValueError):
    """Traces with different click budgets cannot be aggregated."""


def compute_metrics(gt_mask, pred_mask, spacing: PixelSpacing) -> MetricReport:
    """Dice, HD95 and the one-sided worst boundary error for a mask pair.

    Distance metrics need both contours; when exactly one is empty they are
    reported as the image diagonal in mm (the worst realizable distance), and
    as 0 when both are empty.
    """
    gt = as_mask(gt_mask)
    pred = as_mask(pred_mask)
    overlap = dice(gt, pred)
    gt_contour = extract_contour(gt)
    pred_contour = extract_contour(pred)
    if gt_contour.is_empty and pred_contour.is_empty:
        return MetricReport(dsc=overlap, hd95_mm=0.0, max_error_mm=0.0)
    if gt_contour.is_empty or pred_contour.is_empty:
        worst = worst_case_distance_mm(gt.shape, spacing)
        return MetricReport(dsc=overlap, hd95_mm=worst, max_error_mm=worst)
    robust = hd95(gt_contour, pred_contour, spacing)
    one_sided = float(distance_field(gt_contour, pred_contour, spacing).distances.max())
    return MetricReport(dsc=overlap, hd95_mm=robust, max_error_mm=one_sided)


@dataclass
class RevisionTrace:
    """Per-click record of one simulated revision session.

    ``metrics`` and ``masks_rle`` have K+1 entries (initial state plus one per
    click); ``clicks`` and ``latencies_ms`` have K.  The stored masks make
    every metric entry recomputable offline.
    """

    provenance: Provenance
    organ_id: str
    spacing: PixelSpacing
    metrics: list[MetricReport]
    clicks: list[Click]
    latencies_ms: list[float]
    masks_rle: list[dict]

    def __post_init__(self) -> None:
        if len(self.metrics) != len(self.clicks) + 1 or len(self.masks_rle) != len(self.metrics):
            raise ValueError("trace must hold K clicks, K+1 metric entries and K+1 masks")
        if [c.ordinal for c in self.clicks] != list(range(1, len(self.clicks) + 1)):
            raise ValueError("click ordinals must be contiguous from 1")
        if len(self.latencies_ms) != len(self.clicks):
            raise ValueError("one latency per click required")

    def mask_at(self, click_count: int) -> np.ndarray:
        return rle_to_mask(self.masks_rle[click_count])

    def to_json(self) -> dict:
        return {
            "v": 1,
            "provenance": self.provenance.to_json(),
            "organ": self.organ_id,
            "spacing": [self.spacing.row_mm, self.spacing.col_mm],
            "metrics": [
                {"dsc": m.dsc, "hd95_mm": m.hd95_mm, "max_error_mm": m.max_error_mm}
                for m in self.metrics
            ],
            "clicks": [c.to_json() for c in self.clicks],
            "latencies_ms": list(self.latencies_ms),
            "masks_rle": self.masks_rle,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "RevisionTrace":
        return cls(
            provenance=Provenance.from_json(payload["provenance"]),
            organ_id=payload["organ"],
            spacing=PixelSpacing(*payload["spacing"]),
            metrics=[MetricReport(**m) for m in payload["metrics"]],
            clicks=[Click.from_json(c) for c in payload["clicks"]],
            latencies_ms=[float(x) for x in payload["latencies_ms"]],
            masks_rle=payload["masks_rle"],
        )


def simulate_revision(
    model: RevisionUNet,
    record: SliceRecord,
    organ_id: str,
    initial,
    max_clicks: int = 3,
    rng: np.random.Generator | None = None,
) -> RevisionTrace:
    """Play one revision session with the argmax-error click oracle.

    Each step clicks the ground-truth boundary point farthest (in pixels)
    from the current predicted contour, re-runs the model on the accumulated
    click image, and records metrics (in mm) plus the model latency.  ``rng``
    only backs the uniform fallback used when the prediction has no contour.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    gt = as_mask(record.gt_masks[organ_id])
    gt_contour = extract_contour(gt)
    if gt_contour.is_empty:
        raise EmptyGroundTruth(f"organ {organ_id!r} has an empty ground-truth mask")
    current = as_mask(initial).copy()
    metrics = [compute_metrics(gt, current, record.spacing)]
    masks_rle = [mask_to_rle(current)]
    clicks: list[Click] = []
    latencies: list[float] = []
    for k in range(1, max_clicks + 1):
        pred_contour = extract_contour(current)
        clicks.append(oracle_click(gt_contour, pred_contour, PIXEL_UNITS, rng=rng, ordinal=k))
        rev = RevisionInput(record.image, current, encode_clicks(clicks, gt.shape))
        started = time.perf_counter()
        prob = model.predict(rev)
        latencies.append((time.perf_counter() - started) * 1000.0)
        current = binarize(prob)
        metrics.append(compute_metrics(gt, current, record.spacing))
        masks_rle.append(mask_to_rle(current))
    return RevisionTrace(
        provenance=record.provenance,
        organ_id=organ_id,
        spacing=record.spacing,
        metrics=metrics,
        clicks=clicks,
        latencies_ms=latencies,
        masks_rle=masks_rle,
    )


@dataclass(frozen=True)
class MetricCurve:
    """Mean DSC and HD95 per click count (index 0 = initial mask)."""

    mean_dsc: tuple[float, ...]
    mean_hd95_mm: tuple[float, ...]
    n_traces: int


@dataclass
class BenchmarkReport:
    """Per-organ and overall mean metric curves for one evaluated dataset."""

    max_clicks: int
    overall: MetricCurve
    organs: dict[str, MetricCurve]
    dataset: str = ""
    checkpoint_id: str = ""

    def to_json(self) -> dict:
        def curve(c: MetricCurve) -> dict:
            return {
                "mean_dsc": list(c.mean_dsc),
                "mean_hd95_mm": list(c.mean_hd95_mm),
                "n_traces": c.n_traces,
            }

        return {
            "v": 1,
            "max_clicks": self.max_clicks,
            "dataset": self.dataset,
            "checkpoint_id": self.checkpoint_id,
            "overall": curve(self.overall),
            "organs": {organ: curve(c) for organ, c in sorted(self.organs.items())},
        }

    @classmethod
    def from_json(cls, payload: dict) -> "BenchmarkReport":
        def curve(p: dict) -> MetricCurve:
            return MetricCurve(
                mean_dsc=tuple(p["mean_dsc"]),
                mean_hd95_mm=tuple(p["mean_hd95_mm"]),
                n_traces=int(p["n_traces"]),
            )

        return cls(
            max_clicks=int(payload["max_clicks"]),
            dataset=payload.get("dataset", ""),
            checkpoint_id=payload.get("checkpoint_id", ""),
            overall=curve(payload["overall"]),
            organs={organ: curve(c) for organ, c in payload["organs"].items()},
        )


def _curve(traces: list[RevisionTrace], max_clicks: int) -> MetricCurve:
    dsc = tuple(
        float(np.mean([t.metrics[i].dsc for t in traces])) for i in range(max_clicks + 1)
    )
    hd = tuple(
        float(np.mean([t.metrics[i].hd95_mm for t in traces])) for i in range(max_clicks + 1)
    )
    return MetricCurve(mean_dsc=dsc, mean_hd95_mm=hd, n_traces=len(traces))


def aggregate(
    traces: list[RevisionTrace], dataset: str = "", checkpoint_id: str = ""
) -> BenchmarkReport:
    """Unweighted per-trace means, grouped by organ and overall."""
    if not traces:
        raise ValueError("no traces to aggregate")
    budgets = {len(t.clicks) for t in traces}
    if len(budgets) != 1:
        raise MixedBudget(f"traces mix click budgets {sorted(budgets)}")
    max_clicks = budgets.pop()
    organs: dict[str, list[RevisionTrace]] = {}
    for trace in traces:
        organs.setdefault(trace.organ_id, []).append(trace)
    return BenchmarkReport(
        max_clicks=max_clicks,
        overall=_curve(traces, max_clicks),
        organs={organ: _curve(ts, max_clicks) for organ, ts in organs.items()},
        dataset=dataset,
        checkpoint_id=checkpoint_id,
    )


def evaluate_manifest(
    model: RevisionUNet,
    manifest: DatasetManifest,
    split: str = "test",
    max_clicks: int = 3,
    seed: int = 0,
    degrade: DegradeParams = DegradeParams(),
    dataset: str | None = None,
    checkpoint_id: str = "",
) -> tuple[BenchmarkReport, list[RevisionTrace]]:
    """Evaluate every entry of a manifest split.

    Initial masks come from the mask degrader with the evaluation seed, so a
    (checkpoint, manifest, seed) triple always yields the same report.
    """
    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"manifest has no {split!r} entries")
    rng = np.random.default_rng(seed)
    traces = []
    for entry in entries:
        record = manifest.to_record(entry)
        gt = record.gt_masks[entry.organ_id]
        initial = degrade_mask(gt, rng, degrade)
        traces.append(
            simulate_revision(model, record, entry.organ_id, initial, max_clicks, rng=rng)
        )
    report = aggregate(
        traces, dataset=dataset if dataset is not None else split, checkpoint_id=checkpoint_id
    )
    return report, traces


# --- report emission ---------------------------------------------------------

def render_table(report: BenchmarkReport) -> str:
    """Fixed-width table with one DSC/HD95(mm) column per organ plus overall."""
    organs = sorted(report.organs)
    headers = ["DSC/HD95(mm)", "ALL"] + organs
    rows = []
    for i in range(report.max_clicks + 1):
        label = "Initial" if i == 0 else f"Click {i}"
        cells = [f"{report.overall.mean_dsc[i]:.2f}/{report.overall.mean_hd95_mm[i]:.1f}"]
        for organ in organs:
            curve = report.organs[organ]
            cells.append(f"{curve.mean_dsc[i]:.2f}/{curve.mean_hd95_mm[i]:.1f}")
        rows.append([label] + cells)
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def emit_report(report: BenchmarkReport, out_dir, plots: bool = False) -> dict[str, Path]:
    """Write report.csv, report.json, table.txt and (optionally) plot images.

    The CSV has one row per organ and click count ("ALL" rows carry the
    overall means) with full-precision floats, so it parses back into an
    identical report.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    csv_path = out_dir / "report.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# v=1 dataset={report.dataset} checkpoint={report.checkpoint_id} "
                 f"max_clicks={report.max_clicks}\n")
        writer = csv.writer(fh)
        writer.writerow(["organ", "clicks", "mean_dsc", "mean_hd95_mm", "n_traces"])
        for organ, curve in [("ALL", report.overall)] + sorted(report.organs.items()):
            for i in range(report.max_clicks + 1):
                writer.writerow(
                    [organ, i, repr(curve.mean_dsc[i]), repr(curve.mean_hd95_mm[i]), curve.n_traces]
                )
    paths["csv"] = csv_path

    json_path = out_dir / "report.json"
    json_path.write_text(json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8")
    paths["json"] = json_path

    table_path = out_dir / "table.txt"
    table_path.write_text(render_table(report), encoding="utf-8")
    paths["table"] = table_path

    if plots:
        paths.update(_plot_curves(report, out_dir))
    return paths


def parse_report_csv(path) -> BenchmarkReport:
    """Reconstruct a report from :func:`emit_report`'s CSV output."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        header = fh.readline().strip()
        meta = dict(
            part.split("=", 1) for part in header.lstrip("# ").split() if "=" in part
        )
        reader = csv.DictReader(fh)
        curves: dict[str, dict[int, tuple[float, float]]] = {}
        counts: dict[str, int] = {}
        for row in reader:
            organ = row["organ"]
            curves.setdefault(organ, {})[int(row["clicks"])] = (
                float(row["mean_dsc"]),
                float(row["mean_hd95_mm"]),
            )
            counts[organ] = int(row["n_traces"])
    max_clicks = int(meta["max_clicks"])

    def curve(organ: str) -> MetricCurve:
        points = curves[organ]
        return MetricCurve(
            mean_dsc=tuple(points[i][0] for i in range(max_clicks + 1)),
            mean_hd95_mm=tuple(points[i][1] for i in range(max_clicks + 1)),
            n_traces=counts[organ],
        )

    return BenchmarkReport(
        max_clicks=max_clicks,
        dataset=meta.get("dataset", ""),
        checkpoint_id=meta.get("checkpoint", ""),
        overall=curve("ALL"),
        organs={organ: curve(organ) for organ in curves if organ != "ALL"},
    )


def _plot_curves(report: BenchmarkReport, out_dir: Path) -> dict[str, Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    organs = sorted(report.organs)
    clicks = list(range(report.max_clicks + 1))
    paths = {}
    for metric, attr, ylabel in (
        ("dsc", "mean_dsc", "DSC"),
        ("hd95", "mean_hd95_mm", "HD95 (mm)"),
    ):
        fig, ax = plt.subplots(figsize=(1.8 + 1.2 * max(1, len(organs)), 3.2))
        width = 0.8 / len(clicks)
        x = np.arange(len(organs))
        for i in clicks:
            values = [getattr(report.organs[o], attr)[i] for o in organs]
            label = "initial" if i == 0 else f"click {i}"
            ax.bar(x + (i - report.max_clicks / 2) * width, values, width=width, label=label)
        ax.set_xticks(x)
        ax.set_xticklabels(organs, rotation=30, ha="right")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths[metric] = path
    return paths


def write_traces(traces: list[RevisionTrace], path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace.to_json()) + "\n")
    return path


def read_traces(path) -> list[RevisionTrace]:
    traces = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                traces.append(RevisionTrace.from_json(json.loads(line)))
    return traces
