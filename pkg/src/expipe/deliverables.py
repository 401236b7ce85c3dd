"""Stage 4: SVG line graphs, summary graphs with error bars, and
per-tick bar frames for external video stitching.

SVG is emitted as text so identical inputs give identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import EmptyCsv, EmptySeries, NonFiniteValue, UnknownColumn
from .model import canonical_json, write_text_atomic

PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
)
N_TICKS = 5
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 80, 170, 60, 70
DEFAULT_FPS = 10


@dataclass
class Series:
    name: str
    x: Sequence[float]
    y: Sequence[float]
    spread: Sequence[float] | None = None


@dataclass
class PlotSpec:
    title: str
    x_label: str
    y_label: str
    series: list[Series]
    width: int = 800
    height: int = 600
    show_band: bool = False
    error_bars: bool = False
    # explicit (position, label) x ticks; default is N_TICKS linear ticks
    x_ticks: list[tuple[float, str]] | None = None


@dataclass
class FrameManifest:
    frames: list[str]
    frames_per_second: int = DEFAULT_FPS
    stitch_command: list[str] | None = None

    def to_json(self) -> str:
        return canonical_json(
            {"frames": self.frames, "fps": self.frames_per_second, "stitch_command": self.stitch_command}
        )


def _esc(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def _f(v: float) -> str:
    s = f"{v:.3f}"
    return "0.000" if s == "-0.000" else s


def nice_step(raw: float) -> float:
    """Round ``raw`` up to 1, 2 or 5 times a power of ten."""
    if raw <= 0 or not math.isfinite(raw):
        return 1.0
    mag = 10.0 ** math.floor(math.log10(raw))
    for m in (1.0, 2.0, 5.0, 10.0):
        if m * mag >= raw * (1 - 1e-12):
            return m * mag
    return 10.0 * mag


def _tick_labels(lo: float, hi: float) -> list[tuple[float, str]]:
    step = nice_step((hi - lo) / (N_TICKS - 1))
    decimals = max(0, -math.floor(math.log10(step)))
    ticks = []
    for i in range(N_TICKS):
        v = lo + (hi - lo) * i / (N_TICKS - 1)
        ticks.append((v, f"{v:.{decimals}f}"))
    return ticks


def _extent(values: list[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        pad = abs(lo) * 0.5 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def _check(spec: PlotSpec) -> None:
    if not spec.series:
        raise EmptySeries("plot has no series")
    for s in spec.series:
        if len(s.x) == 0:
            raise EmptySeries(f"series {s.name!r} is empty")
        if len(s.x) != len(s.y) or (s.spread is not None and len(s.spread) != len(s.y)):
            raise ValueError(f"series {s.name!r}: x, y and spread lengths differ")
        for v in list(s.x) + list(s.y) + list(s.spread or ()):
            if not math.isfinite(v):
                raise NonFiniteValue(f"series {s.name!r} contains {v}")


def render_linegraph(spec: PlotSpec) -> str:
    _check(spec)
    left, right = MARGIN_LEFT, spec.width - MARGIN_RIGHT
    top, bottom = MARGIN_TOP, spec.height - MARGIN_BOTTOM

    xs = [float(v) for s in spec.series for v in s.x]
    ys = []
    for s in spec.series:
        spread = s.spread if (s.spread is not None and (spec.show_band or spec.error_bars)) else None
        for i, y in enumerate(s.y):
            d = abs(spread[i]) if spread is not None else 0.0
            ys += [y - d, y + d]
    x_lo, x_hi = _extent(xs)
    y_lo, y_hi = _extent(ys)

    def px(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * (right - left)

    def py(y: float) -> float:
        return bottom - (y - y_lo) / (y_hi - y_lo) * (bottom - top)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{spec.width}" '
        f'height="{spec.height}" viewBox="0 0 {spec.width} {spec.height}">',
        f'<rect x="0" y="0" width="{spec.width}" height="{spec.height}" fill="#ffffff"/>',
        f'<text x="{_f(spec.width / 2)}" y="{_f(top / 2)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="18">{_esc(spec.title)}</text>',
    ]

    out.append('<g class="axes" stroke="#000000" stroke-width="1">')
    out.append(f'<line x1="{_f(left)}" y1="{_f(bottom)}" x2="{_f(right)}" y2="{_f(bottom)}"/>')
    out.append(f'<line x1="{_f(left)}" y1="{_f(top)}" x2="{_f(left)}" y2="{_f(bottom)}"/>')
    out.append("</g>")

    x_ticks = spec.x_ticks if spec.x_ticks is not None else _tick_labels(x_lo, x_hi)
    out.append('<g class="ticks" font-family="sans-serif" font-size="12">')
    for v, label in x_ticks:
        x = px(v)
        out.append(f'<line x1="{_f(x)}" y1="{_f(bottom)}" x2="{_f(x)}" y2="{_f(bottom + 5)}" stroke="#000000"/>')
        out.append(f'<text x="{_f(x)}" y="{_f(bottom + 20)}" text-anchor="middle">{_esc(label)}</text>')
    for v, label in _tick_labels(y_lo, y_hi):
        y = py(v)
        out.append(f'<line x1="{_f(left - 5)}" y1="{_f(y)}" x2="{_f(left)}" y2="{_f(y)}" stroke="#000000"/>')
        out.append(f'<text x="{_f(left - 8)}" y="{_f(y + 4)}" text-anchor="end">{_esc(label)}</text>')
    out.append("</g>")

    out.append(
        f'<text x="{_f((left + right) / 2)}" y="{_f(spec.height - 20)}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{_esc(spec.x_label)}</text>'
    )
    cy = (top + bottom) / 2
    out.append(
        f'<text x="20.000" y="{_f(cy)}" text-anchor="middle" transform="rotate(-90 20.000 {_f(cy)})" '
        f'font-family="sans-serif" font-size="14">{_esc(spec.y_label)}</text>'
    )

    for i, s in enumerate(spec.series):
        color = PALETTE[i % len(PALETTE)]
        pts = list(zip(s.x, s.y))
        out.append(f'<g class="series" id="series-{i}">')
        if spec.show_band and s.spread is not None:
            upper = [f"{_f(px(x))},{_f(py(y + abs(d)))}" for (x, y), d in zip(pts, s.spread)]
            lower = [f"{_f(px(x))},{_f(py(y - abs(d)))}" for (x, y), d in zip(pts, s.spread)]
            out.append(
                f'<polygon points="{" ".join(upper + lower[::-1])}" fill="{color}" '
                'fill-opacity="0.2" stroke="none"/>'
            )
        coords = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        if spec.error_bars and s.spread is not None:
            out.append('<g class="errorbars">')
            for (x, y), d in zip(pts, s.spread):
                X, y1, y2 = px(x), py(y - abs(d)), py(y + abs(d))
                out.append(f'<line x1="{_f(X)}" y1="{_f(y1)}" x2="{_f(X)}" y2="{_f(y2)}" stroke="{color}"/>')
                for yy in (y1, y2):
                    out.append(
                        f'<line x1="{_f(X - 4)}" y1="{_f(yy)}" x2="{_f(X + 4)}" y2="{_f(yy)}" stroke="{color}"/>'
                    )
            out.append("</g>")
        out.append("</g>")

    out.append('<g class="legend" font-family="sans-serif" font-size="12">')
    lx = right + 20
    for i, s in enumerate(spec.series):
        color = PALETTE[i % len(PALETTE)]
        ly = top + 10 + 20 * i
        out.append(f'<rect x="{_f(lx)}" y="{_f(ly - 9)}" width="14" height="10" fill="{color}"/>')
        out.append(f'<text x="{_f(lx + 20)}" y="{_f(ly)}">{_esc(s.name)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def summary_plot_spec(
    tables: Sequence[tuple[str, object]], title: str, x_label: str, y_label: str
) -> PlotSpec:
    """Error-bar graph over criteria values. Numeric criteria are placed at
    their values; otherwise at ordinal positions 1..n."""
    first = tables[0][1]
    if len(first) == 0:
        raise EmptySeries("summary table is empty")
    if first.numeric:
        xs = [float(v) for v in first.scalars]
    else:
        xs = [float(i) for i in range(1, len(first) + 1)]
    ticks = list(zip(xs, first.labels))
    series = [Series(name, xs, list(t.values), list(t.spreads)) for name, t in tables]
    return PlotSpec(title, x_label, y_label, series, error_bars=True, x_ticks=ticks)


def render_summary_linegraph(table, title: str, x_label: str, y_label: str, name: str | None = None) -> str:
    series_name = name or (f"{table.reducer_name}({table.column})" if table.column else "summary")
    return render_linegraph(summary_plot_spec([(series_name, table)], title, x_label, y_label))


# ---------------------------------------------------------------------------
# imagizing


def _bar_frame(tick: int, value: float, fraction: float, column: str) -> str:
    w, h, pad = 400, 80, 10
    inner = w - 2 * pad
    return "\n".join(
        [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
            f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>',
            f'<rect x="{pad}" y="{pad}" width="{_f(inner * fraction)}" height="30" fill="{PALETTE[0]}"/>',
            f'<rect x="{pad}" y="{pad}" width="{inner}" height="30" fill="none" stroke="#000000"/>',
            f'<text x="{pad}" y="{h - 15}" font-family="sans-serif" font-size="12">'
            f"tick {tick}: {_esc(column)} = {_f(value)}</text>",
            "</svg>",
        ]
    ) + "\n"


def render_stitch_command(template: Sequence[str], frames_dir, output) -> list[str]:
    return [
        part.replace("{frames_dir}", str(frames_dir)).replace("{output}", str(output))
        for part in template
    ]


def imagize_csv(
    csv_path,
    value_column: str,
    out_dir,
    fps: int = DEFAULT_FPS,
    stitch_template: Sequence[str] | None = None,
) -> FrameManifest:
    """One bar-chart SVG frame per CSV row plus ``frames.json``. The stitch
    command is rendered for the record and never executed here."""
    from .stats import read_numeric_csv

    header, data = read_numeric_csv(csv_path)
    if value_column not in header:
        raise UnknownColumn(f"column {value_column!r} not in {', '.join(header)}")
    if data.shape[0] == 0:
        raise EmptyCsv(f"{csv_path} has no data rows")
    col = data[:, header.index(value_column)]
    ticks = data[:, header.index("tick")] if "tick" in header else range(len(col))
    vmax = float(col.max())

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = []
    for tick, value in zip(ticks, col):
        tick = int(tick)
        fraction = min(1.0, max(0.0, value / vmax)) if vmax > 0 else 0.0
        name = f"frame-{tick:06d}.svg"
        write_text_atomic(out_dir / name, _bar_frame(tick, float(value), fraction, value_column))
        frames.append(name)

    stitch = None
    if stitch_template:
        stitch = render_stitch_command(stitch_template, out_dir, out_dir / "video.mp4")
    manifest = FrameManifest(frames, fps, stitch)
    write_text_atomic(out_dir / "frames.json", manifest.to_json())
    return manifest
