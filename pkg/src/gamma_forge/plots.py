"""CSV tables and small hand-written SVG charts for report artifacts.

No plotting library: each chart is a polyline on a log-scale y axis.
Empty inputs still produce a header-only CSV and a blank chart.
"""

import csv
import json
import math
import os

WIDTH, HEIGHT, PAD = 480, 320, 40
FLOOR = 1e-16


def _scale(xs, ys):
    lo_x, hi_x = (min(xs), max(xs)) if xs else (0.0, 1.0)
    logs = [math.log10(max(y, FLOOR)) for y in ys] or [0.0]
    lo_y, hi_y = min(logs), max(logs)
    if hi_x == lo_x:
        hi_x = lo_x + 1
    if hi_y == lo_y:
        hi_y = lo_y + 1

    def to_px(x, y):
        px = PAD + (x - lo_x) / (hi_x - lo_x) * (WIDTH - 2 * PAD)
        py = HEIGHT - PAD - (math.log10(max(y, FLOOR)) - lo_y) / (hi_y - lo_y) * (HEIGHT - 2 * PAD)
        return f"{px:.2f},{py:.2f}"

    return to_px, (lo_x, hi_x, lo_y, hi_y)


def svg_chart(series, title, xlabel, ylabel):
    """``series`` is a list of (name, colour, [(x, y), ...])."""
    xs = [p[0] for _, _, pts in series for p in pts]
    ys = [p[1] for _, _, pts in series for p in pts]
    to_px, (lo_x, hi_x, lo_y, hi_y) = _scale(xs, ys)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle" font-size="11">{xlabel}</text>',
        f'<text x="12" y="{HEIGHT / 2}" font-size="11" transform="rotate(-90 12 {HEIGHT / 2})">{ylabel} (log10)</text>',
        f'<text x="{PAD}" y="{HEIGHT - PAD + 14}" font-size="10">{lo_x:g}</text>',
        f'<text x="{WIDTH - PAD}" y="{HEIGHT - PAD + 14}" font-size="10" text-anchor="end">{hi_x:g}</text>',
        f'<text x="{PAD - 4}" y="{HEIGHT - PAD}" font-size="10" text-anchor="end">{lo_y:.1f}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 4}" font-size="10" text-anchor="end">{hi_y:.1f}</text>',
    ]
    for k, (name, colour, pts) in enumerate(series):
        if pts:
            coords = " ".join(to_px(x, y) for x, y in pts)
            parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{coords}"/>')
        parts.append(f'<text x="{WIDTH - PAD}" y="{PAD + 14 * k}" font-size="10" text-anchor="end" '
                     f'fill="{colour}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def staircase(values):
    """Step outline of a descending list: index i holds values[i] on [i, i+1)."""
    pts = []
    for i, v in enumerate(values):
        pts += [(i, v), (i + 1, v)]
    return pts


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def decay_chart(out_dir, buckets, lam=None, C=None):
    """``buckets`` rows are (gap, max_l1, count)."""
    rows = sorted(buckets)
    write_csv(os.path.join(out_dir, "decay.csv"), ["gap", "max_l1", "count"], rows)
    series = [("max l1 difference", "steelblue", [(g, v) for g, v, _ in rows if v > 0])]
    if lam is not None and C is not None and rows:
        series.append(("fit", "firebrick", [(g, C * lam ** g) for g, _, _ in rows]))
    path = os.path.join(out_dir, "decay.svg")
    with open(path, "w") as fh:
        fh.write(svg_chart(series, "bicombing decay", "gap", "max l1"))
    return path


def spectrum_chart(out_dir, values, name="spectrum"):
    vals = sorted((float(v) for v in values), reverse=True)
    write_csv(os.path.join(out_dir, f"{name}.csv"), ["index", "sigma"], list(enumerate(vals)))
    path = os.path.join(out_dir, f"{name}.svg")
    with open(path, "w") as fh:
        fh.write(svg_chart([("singular values", "darkgreen", staircase([v for v in vals if v > 0]))],
                           "singular values", "index", "sigma"))
    return path


def emit_plots(report_path, out_dir):
    """Charts for whatever the report carries; returns the written paths."""
    with open(report_path) as fh:
        report = json.load(fh)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    bic = report.get("suites", {}).get("bicombing", {}).get("measured", {})
    written.append(decay_chart(out_dir, [tuple(r) for r in bic.get("decay_buckets", [])],
                               bic.get("lambda1_hat"), bic.get("C1_hat")))
    spec = report.get("suites", {}).get("spectral", {}).get("measured", {})
    written.append(spectrum_chart(out_dir, spec.get("singular_values", [])))
    return written
