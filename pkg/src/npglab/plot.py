"""Static SVG convergence plots written by hand (no plotting dependency)."""
import csv
import math
import os
from xml.sax.saxutils import escape

from npglab.solver import CSV_HEADER

WIDTH, HEIGHT = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 30, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
Y_FLOOR = 1e-16
DOMINATION_TOL = 1e-8


class CsvFormatError(ValueError):
    pass


def read_run_csv(path):
    """Parse a run CSV into a list of row dicts; raises ``CsvFormatError``."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    if rows[0] != CSV_HEADER:
        raise CsvFormatError(f"{path}: row 1: unexpected header")
    if len(rows) == 1:
        raise CsvFormatError(f"{path}: no data rows")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise CsvFormatError(f"{path}: row {i}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        try:
            rec = {"t": int(row[0]), "overflow": int(row[-1])}
            rec.update({k: float(v) for k, v in zip(CSV_HEADER[1:-1], row[1:-1])})
        except ValueError as e:
            raise CsvFormatError(f"{path}: row {i}: {e}") from None
        out.append(rec)
    return out


def domination_violations(rows):
    """Row indices (1-based data rows) where ``delta > bound + tol``."""
    return [i for i, r in enumerate(rows, start=1)
            if not math.isnan(r["bound"]) and r["delta"] > r["bound"] + DOMINATION_TOL]


def _fmt(x):
    return f"{x:.2f}"


def render_svg(series):
    """``series`` is a list of ``(label, rows)``; returns SVG text."""
    t_max = max(max(r["t"] for r in rows) for _, rows in series) or 1
    ys = [max(v, Y_FLOOR) for _, rows in series for r in rows
          for v in (r["delta"], r["bound"]) if math.isfinite(v)]
    lo = math.floor(math.log10(min(ys)))
    hi = math.ceil(math.log10(max(ys)))
    if hi == lo:
        hi += 1
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(t):
        return LEFT + pw * t / t_max

    def py(v):
        return TOP + ph * (hi - math.log10(max(v, Y_FLOOR))) / (hi - lo)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    step = max(1, (hi - lo) // 8)
    for e in range(lo, hi + 1, step):
        y = _fmt(py(10.0**e))
        out.append(f'<line x1="{LEFT}" y1="{y}" x2="{LEFT + pw}" y2="{y}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{y}" text-anchor="end" dominant-baseline="middle">1e{e}</text>')
    for k in range(6):
        t = t_max * k / 5
        x = _fmt(px(t))
        out.append(f'<text x="{x}" y="{TOP + ph + 18}" text-anchor="middle">{t:g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 10}" text-anchor="middle">iteration t</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.2f})">V*(mu) - V^t(mu)</text>')

    for i, (label, rows) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        for key, dash in (("delta", ""), ("bound", ' stroke-dasharray="6 4"')):
            pts = " ".join(f"{_fmt(px(r['t']))},{_fmt(py(r[key]))}" for r in rows
                           if math.isfinite(r[key]))
            if pts:
                out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{pts}"/>')
        ly = TOP + 16 + 36 * i
        lx = LEFT + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">{escape(label)}</text>')
        out.append(f'<line x1="{lx}" y1="{ly + 16}" x2="{lx + 24}" y2="{ly + 16}" stroke="{color}" '
                   f'stroke-width="1.5" stroke-dasharray="6 4"/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 20}">{escape(label)} bound</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def label_for(path):
    return os.path.splitext(os.path.basename(path))[0]
