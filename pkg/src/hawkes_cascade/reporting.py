"""Deterministic artifact writers: CSV, JSON, run manifests, and SVG charts.

Result artifacts (CSV/JSON reports) are byte-reproducible functions of the
configuration and seed: keys are sorted, floats use repr round-tripping, and
column orders are fixed by the writers.  The run manifest is the one
deliberately non-reproducible file (it carries wall-clock timestamps) and it
lists every other artifact the run produced.
"""

from __future__ import annotations

import datetime
import json
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import __version__


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """UTF-8, comma-delimited, '.' decimal separator, mandatory header row."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_json(path: str, obj) -> None:
    """Stable key ordering and full-precision floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


@dataclass
class RunManifest:
    """Per-run metadata: config hash, seed, version, timestamps, artifact list."""

    config_hash: str
    master_seed: int
    out_dir: str
    started_utc: str = field(default_factory=lambda: _utcnow())
    files: list = field(default_factory=list)

    def register(self, path: str) -> str:
        rel = os.path.relpath(path, self.out_dir)
        if rel not in self.files:
            self.files.append(rel)
        return path

    def csv(self, name: str, header, rows) -> str:
        path = os.path.join(self.out_dir, name)
        write_csv(path, header, rows)
        return self.register(path)

    def json(self, name: str, obj) -> str:
        path = os.path.join(self.out_dir, name)
        write_json(path, obj)
        return self.register(path)

    def finalize(self, wall_clock_s: Optional[float] = None) -> str:
        path = os.path.join(self.out_dir, "manifest.json")
        files = set(self.files)
        # successive commands of the same run (same config and seed) into one
        # directory keep a single manifest covering every artifact
        if os.path.exists(path):
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    previous = json.load(fh)
                if (previous.get("config_hash") == self.config_hash
                        and previous.get("master_seed") == self.master_seed):
                    files.update(previous.get("files", []))
            except (OSError, json.JSONDecodeError):
                pass
        payload = {
            "artifact_version": __version__,
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "started_utc": self.started_utc,
            "finished_utc": _utcnow(),
            "files": sorted(files),
        }
        if wall_clock_s is not None:
            payload["wall_clock_s"] = wall_clock_s
        write_json(path, payload)
        return path


def _utcnow() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------- SVG charts

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
            "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def svg_line_chart(path: str, series: Sequence[tuple], title: str = "",
                   x_label: str = "", y_label: str = "",
                   width: int = 860, height: int = 460) -> None:
    """Minimal multi-series polyline chart; series = [(name, xs, ys), ...]."""
    margin_l, margin_r, margin_t, margin_b = 62, 16, 34, 44
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x_min, x_max = min(xs_all), max(xs_all)
    y_min, y_max = min(ys_all), max(ys_all)
    if x_max == x_min:
        x_max = x_min + 1.0
    if y_max == y_min:
        y_max = y_min + 1.0
    pad = 0.04 * (y_max - y_min)
    y_min -= pad
    y_max += pad

    def sx(x):
        return margin_l + (x - x_min) / (x_max - x_min) * plot_w

    def sy(y):
        return margin_t + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#444"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
                     f'font-size="14">{title}</text>')
    for i in range(5):
        xv = x_min + i * (x_max - x_min) / 4
        yv = y_min + i * (y_max - y_min) / 4
        parts.append(f'<line x1="{sx(xv):.1f}" y1="{margin_t + plot_h}" '
                     f'x2="{sx(xv):.1f}" y2="{margin_t + plot_h + 4}" stroke="#444"/>')
        parts.append(f'<text x="{sx(xv):.1f}" y="{margin_t + plot_h + 18}" '
                     f'text-anchor="middle">{xv:.4g}</text>')
        parts.append(f'<line x1="{margin_l - 4}" y1="{sy(yv):.1f}" '
                     f'x2="{margin_l}" y2="{sy(yv):.1f}" stroke="#444"/>')
        parts.append(f'<text x="{margin_l - 8}" y="{sy(yv) + 4:.1f}" '
                     f'text-anchor="end">{yv:.4g}</text>')
    if x_label:
        parts.append(f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 8}" '
                     f'text-anchor="middle">{x_label}</text>')
    if y_label:
        parts.append(f'<text x="14" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
                     f'transform="rotate(-90 14 {margin_t + plot_h / 2:.1f})">{y_label}</text>')

    for idx, (name, xs, ys) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1.3"/>')
        if name:
            ly = margin_t + 16 + 16 * idx
            parts.append(f'<line x1="{width - 150}" y1="{ly - 4}" x2="{width - 126}" '
                         f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{width - 120}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
