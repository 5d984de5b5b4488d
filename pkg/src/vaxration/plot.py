"""Minimal SVG line charts for allocation curves."""

from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

from .allocation import read_curve

WIDTH, HEIGHT = 640, 400
MARGIN = 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
BENCH_COLORS = ("#555555", "#aa3377", "#228833")

# column -> (title, benchmarks drawn as horizontal lines)
FAMILIES = {
    "share_black_indigenous": ("Black and Indigenous share of doses", (
        "population_share_black_indigenous", "death_share_black_indigenous",
        "age_adjusted_death_share_black_indigenous")),
    "share_black_indigenous_hispanic": ("Black, Indigenous and Hispanic share of doses", (
        "population_share_black_indigenous_hispanic", "death_share_black_indigenous_latino",
        "age_adjusted_death_share_black_indigenous_latino")),
    "share_high_adi": ("High-ADI share of doses", ("population_share_high_adi",)),
    "share_female": ("Female share of doses", ("population_share_female",)),
    "mean_age": ("Mean age of dose recipients", ("population_mean_age",)),
    "marginal_share_high_adi": ("Marginal high-ADI share", ()),
}


class PlotError(ValueError):
    pass


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def line_chart(series: dict, title: str, benchmarks: dict | None = None, y_label: str = "") -> str:
    """Render ``{name: [(x, y), ...]}`` as an SVG document string."""
    points = [p for pts in series.values() for p in pts]
    if not points:
        raise PlotError(f"{title}: nothing to plot")
    benchmarks = benchmarks or {}
    xs = [x for x, _ in points]
    ys = [y for _, y in points] + list(benchmarks.values())
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(x):
        return MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2 * MARGIN)

    def sy(y):
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2 * MARGIN)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<text x="{MARGIN}" y="{HEIGHT - MARGIN + 18}" font-size="11">{x0:.6g}</text>',
        f'<text x="{WIDTH - MARGIN}" y="{HEIGHT - MARGIN + 18}" font-size="11" text-anchor="end">{x1:.6g}</text>',
        f'<text x="{MARGIN - 4}" y="{sy(y0) - 2}" font-size="11" text-anchor="end">{y0:.4g}</text>',
        f'<text x="{MARGIN - 4}" y="{sy(y1) + 10}" font-size="11" text-anchor="end">{y1:.4g}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle" font-size="12">supply (person-units)</text>',
    ]
    if y_label:
        out.append(f'<text x="14" y="{HEIGHT / 2}" font-size="12" transform="rotate(-90 14 {HEIGHT / 2})" '
                   f'text-anchor="middle">{escape(y_label)}</text>')
    for i, (name, value) in enumerate(benchmarks.items()):
        color = BENCH_COLORS[i % len(BENCH_COLORS)]
        y = _fmt(sy(value))
        out.append(f'<line class="benchmark" x1="{MARGIN}" y1="{y}" x2="{WIDTH - MARGIN}" y2="{y}" '
                   f'stroke="{color}" stroke-dasharray="5,4"><title>{escape(name)}</title></line>')
    for i, (name, pts) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        if len(pts) == 1:
            x, y = pts[0]
            out.append(f'<circle class="series" cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="3" fill="{color}">'
                       f'<title>{escape(name)}</title></circle>')
        elif pts:
            coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
            out.append(f'<polyline class="series" fill="none" stroke="{color}" stroke-width="1.5" '
                       f'points="{coords}"><title>{escape(name)}</title></polyline>')
        out.append(f'<text x="{WIDTH - MARGIN - 4}" y="{MARGIN + 14 * (i + 1)}" font-size="11" '
                   f'text-anchor="end" fill="{color}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def read_benchmarks(path) -> dict[str, float]:
    path = Path(path)
    if not path.exists():
        return {}
    with path.open(newline="") as fh:
        return {row["benchmark"]: float(row["value"]) for row in csv.DictReader(fh)}


def plot_bundle(bundle, out_dir=None) -> list[Path]:
    """One SVG per curve family, with all policies overlaid.  Nothing is written on error."""
    bundle = Path(bundle)
    if not bundle.is_dir():
        raise PlotError(f"{bundle}: not a bundle directory")
    curve_files = sorted(bundle.glob("allocation_curve_*.csv"))
    if not curve_files:
        raise PlotError(f"{bundle}: no allocation_curve_*.csv files")
    curves = {}
    for f in curve_files:
        rows = read_curve(f)
        if not rows:
            raise PlotError(f"{f}: empty allocation curve")
        curves[rows[0]["policy"]] = rows
    bench = read_benchmarks(bundle / "benchmarks.csv")
    docs = {}
    for column, (title, bench_names) in FAMILIES.items():
        series = {
            policy: [(float(r["supply"]), float(r[column])) for r in rows if r[column] != ""]
            for policy, rows in curves.items()
        }
        lines = {name: bench[name] for name in bench_names if name in bench}
        docs[f"{column}.svg"] = line_chart(series, title, lines, column)
    out = Path(out_dir) if out_dir is not None else bundle / "plots"
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in docs.items():
        (out / name).write_text(text)
        paths.append(out / name)
    return paths
