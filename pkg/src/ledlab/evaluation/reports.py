"""Writers for metric tables, per-episode records, error CDFs and small SVG figures."""
from __future__ import annotations

import csv
import json
from html import escape
from pathlib import Path

import numpy as np

from .metrics import MetricsReport, PredictionRecord, error_cdf

REPORT_FIELDS = ("row", "split", "n", "le", "le_se", "acc3", "acc3_se", "acc5", "acc5_se")


def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def write_reports_csv(path, rows) -> None:
    """``rows`` is a list of ``(row_name, {split: MetricsReport})``; an empty dict marks an absent row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for name, reports in rows:
            if not reports:
                w.writerow([name, "", "", "", "", "", "", "", ""])
                continue
            for split in sorted(reports):
                r = reports[split]
                w.writerow([name, split, r.n] + [_fmt(getattr(r, k)) for k in REPORT_FIELDS[3:]])


def read_reports_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def format_table(rows, splits, labels: dict | None = None) -> str:
    """Aligned text table with LE, Acc@3m and Acc@5m (each with its SE) per split.

    Accuracies are shown in percent. Absent rows print dashes.
    """
    labels = labels or {}
    cell_w = 13
    head1 = f"{'':<20}" + "".join(f" | {s:^{3 * cell_w + 2}}" for s in splits)
    head2 = f"{'':<20}" + "".join(
        " | " + " ".join(f"{c:>{cell_w}}" for c in ("LE", "Acc@3m", "Acc@5m")) for _ in splits)
    lines = [head1, head2, "-" * len(head2)]
    for name, reports in rows:
        line = f"{labels.get(name, name):<20}"
        for s in splits:
            r = reports.get(s) if reports else None
            if r is None:
                cells = ["-"] * 3
            else:
                cells = [f"{r.le:.2f}±{r.le_se:.2f}", f"{100 * r.acc3:.1f}±{100 * r.acc3_se:.1f}",
                         f"{100 * r.acc5:.1f}±{100 * r.acc5_se:.1f}"]
            line += " | " + " ".join(f"{c:>{cell_w}}" for c in cells)
        lines.append(line.rstrip())
    return "\n".join(lines) + "\n"


def write_records_jsonl(path, records: list[PredictionRecord]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_records_jsonl(path) -> list[PredictionRecord]:
    with open(path) as fh:
        return [PredictionRecord(**json.loads(line)) for line in fh if line.strip()]


def write_cdf_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("le", "fraction"))
        for e, f in error_cdf(records):
            w.writerow((_fmt(e), _fmt(f)))


def cdf_svg(curves: dict, max_le: float | None = None, width: int = 420, height: int = 300) -> str:
    """Step plot of the LE CDF for each named set of records."""
    pad = 40
    data = {name: error_cdf(recs) for name, recs in curves.items()}
    top = max_le or max((pts[-1][0] for pts in data.values() if pts), default=1.0) or 1.0
    sx = lambda e: pad + (width - 2 * pad) * min(e, top) / top  # noqa: E731
    sy = lambda f: height - pad - (height - 2 * pad) * f  # noqa: E731
    palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width / 2}" y="{height - 8}" font-size="12" text-anchor="middle">LE (m)</text>']
    for x in (3.0, 5.0):
        if x <= top:
            parts.append(f'<line x1="{sx(x):.1f}" y1="{pad}" x2="{sx(x):.1f}" y2="{height - pad}" '
                         f'stroke="#bbb" stroke-dasharray="4 3"/>')
    for i, (name, pts) in enumerate(data.items()):
        color = palette[i % len(palette)]
        path = f"M{sx(0):.1f},{sy(0):.1f}"
        prev = 0.0
        for e, f in pts:
            path += f" H{sx(e):.1f} V{sy(f):.1f}"
            prev = f
        path += f" H{sx(top):.1f} V{sy(prev):.1f}"
        parts.append(f'<path d="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - pad - 4}" y="{pad + 14 * (i + 1)}" font-size="11" '
                     f'text-anchor="end" fill="{color}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap_svg(raster: np.ndarray, probs: np.ndarray, true_xy, meters_per_pixel: float,
                radius_m: float = 3.0) -> str:
    """Predicted distribution over a floor map.

    The map is drawn as pixel rectangles, the distribution as translucent
    cells, the true position as a green dot and the 3 m threshold as a red
    circle around it.
    """
    img = np.asarray(raster)
    if img.ndim == 3 and img.shape[0] == 3:
        img = np.moveaxis(img, 0, -1)
    if img.dtype != np.uint8:
        img = np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
    h, w = img.shape[:2]
    gh, gw = probs.shape
    cy, cx = h / gh, w / gw
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * 3}" height="{h * 3}" '
             f'viewBox="0 0 {w} {h}" shape-rendering="crispEdges">']
    for r in range(h):
        c = 0
        while c < w:
            run = c
            while run + 1 < w and (img[r, run + 1] == img[r, c]).all():
                run += 1
            rgb = "#%02x%02x%02x" % tuple(int(v) for v in img[r, c])
            parts.append(f'<rect x="{c}" y="{r}" width="{run - c + 1}" height="1" fill="{rgb}"/>')
            c = run + 1
    peak = float(probs.max()) or 1.0
    for r in range(gh):
        for c in range(gw):
            a = float(probs[r, c]) / peak
            if a > 0.02:
                parts.append(f'<rect x="{c * cx:.2f}" y="{r * cy:.2f}" width="{cx:.2f}" height="{cy:.2f}" '
                             f'fill="#0050ff" fill-opacity="{0.7 * a:.3f}"/>')
    tx, ty = true_xy[0] / meters_per_pixel, true_xy[1] / meters_per_pixel
    parts.append(f'<circle cx="{tx:.2f}" cy="{ty:.2f}" r="{radius_m / meters_per_pixel:.2f}" '
                 f'fill="none" stroke="red" stroke-width="0.8"/>')
    parts.append(f'<circle cx="{tx:.2f}" cy="{ty:.2f}" r="1.5" fill="#00c000"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report_bundle(out_dir, name: str, records_by_split: dict, svg: bool = False) -> list:
    """CSV, text table, JSONL records and CDF CSV for one predictor; returns its report row."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = {s: MetricsReport.from_records(s, recs) for s, recs in records_by_split.items()}
    rows = [(name, reports)]
    write_reports_csv(out_dir / "reports.csv", rows)
    (out_dir / "table.txt").write_text(format_table(rows, sorted(reports)))
    for s, recs in sorted(records_by_split.items()):
        write_records_jsonl(out_dir / f"records_{s}.jsonl", recs)
        write_cdf_csv(out_dir / f"cdf_{s}.csv", recs)
    if svg:
        (out_dir / "cdf.svg").write_text(cdf_svg(dict(sorted(records_by_split.items()))))
    return rows
