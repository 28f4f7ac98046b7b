"""
Metric report rendering.

Text reports are ``key value`` lines in a fixed key order; ``null`` marks an
undefined metric.  Floats are printed with six decimals so repeated runs
produce byte-identical files.  Per-stage timings are wall-clock and only
included on request.
"""

from pathlib import Path
from typing import Any, List, Optional, Tuple, Union

from vital_occ_stream.core.models import OCC_CLASS_NAMES
from vital_occ_stream.decoder.models import MetricReport
from vital_occ_stream.pipeline.models import STAGES

FLOAT_DIGITS = 6


def _fmt(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.{FLOAT_DIGITS}f}"
    return str(value)


def report_items(report: MetricReport, include_timings: bool = False) -> List[Tuple[str, Any]]:
    """Flatten a report into ordered ``(key, value)`` pairs."""
    items: List[Tuple[str, Any]] = [
        ("frame_count", report.frame_count),
        ("miou", report.miou),
        ("miou_dynamic", report.miou_dynamic),
        ("miou_static", report.miou_static),
        ("geometry_iou", report.geometry_iou),
    ]
    for name in OCC_CLASS_NAMES[1:]:
        items.append((f"iou.{name}", report.per_class_iou.get(name)))
    if report.rayiou is not None:
        for key, value in report.rayiou.thresholds.items():
            items.append((f"rayiou.{key}", value))
        items.append(("rayiou.mean", report.rayiou.mean))
        items.append(("rayiou.rays", report.rayiou.rays))
    if report.losses is not None:
        losses = report.losses
        for key in ("occ", "fore", "bin", "depth", "det", "mask", "total"):
            items.append((f"loss.{key}", getattr(losses, key)))
        for key, weight in losses.weights.items():
            items.append((f"loss_weight.{key}", weight))
    if include_timings:
        for stage in STAGES:
            if stage in report.timings_ms:
                items.append((f"timing_ms.{stage}", report.timings_ms[stage]))
    for row in report.frames:
        prefix = f"frame.{row.timestep}"
        items.append((f"{prefix}.miou", row.miou))
        items.append((f"{prefix}.geometry_iou", row.geometry_iou))
        if row.rayiou is not None:
            items.append((f"{prefix}.rayiou", row.rayiou))
        if row.selected_queries is not None:
            items.append((f"{prefix}.selected_queries", row.selected_queries))
    return items


def format_report(report: MetricReport, as_json: bool = False, include_timings: bool = False) -> str:
    if as_json:
        exclude = None if include_timings else {"timings_ms"}
        return report.model_dump_json(indent=2, exclude=exclude) + "\n"
    return "".join(f"{key} {_fmt(value)}\n" for key, value in report_items(report, include_timings))


def write_report(
    path: Union[str, Path],
    report: MetricReport,
    as_json: bool = False,
    include_timings: bool = False,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_report(report, as_json, include_timings), encoding="utf-8")
    return path


def report_filename(as_json: bool, suffix: Optional[str] = None) -> str:
    stem = "report" if suffix is None else f"report_{suffix}"
    return f"{stem}.json" if as_json else f"{stem}.txt"
