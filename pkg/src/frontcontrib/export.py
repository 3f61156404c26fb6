"""Deterministic CSV traces and dependency-free SVG error plots."""

from __future__ import annotations

import math
from pathlib import Path
from typing import List
from xml.sax.saxutils import escape

from .errors import OutputError
from .harness import EquivalenceReport

CSV_HEADER = "iteration,y_bp,y_fc,abs_err,gate1,gate2"
DISPLAY_FLOOR = 1e-18


def _num(x: float) -> str:
    return format(x, ".17g")


def csv_text(report: EquivalenceReport) -> str:
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(",".join((str(r.iteration), _num(r.y_bp), _num(r.y_fc),
                               _num(r.abs_err), r.gate1.value, r.gate2.value)))
    return "\n".join(lines) + "\n"


def _write(path, text: str) -> None:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(path, exc) from exc


def emit_csv(report: EquivalenceReport, path) -> None:
    _write(path, csv_text(report))


# plot geometry
WIDTH, HEIGHT = 720, 400
LEFT, RIGHT, TOP, BOTTOM = 80, 20, 50, 50


def _ticks_log(lo: int, hi: int) -> List[int]:
    step = max(1, math.ceil((hi - lo) / 8))
    return list(range(lo, hi + 1, step))


def svg_text(report: EquivalenceReport, log_scale: bool = True) -> str:
    rows = report.rows
    if not rows:
        raise ValueError("report has no rows")
    cfg = report.config
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    n_max = max(rows[-1].iteration, 1)

    if log_scale:
        vals = [math.log10(max(r.abs_err, DISPLAY_FLOOR)) for r in rows if not r.unsupported]
        lo = math.floor(min(vals, default=math.log10(DISPLAY_FLOOR)))
        hi = math.ceil(max(vals, default=lo + 1))
        if hi <= lo:
            hi = lo + 1
        ticks = [(t, f"1e{t}") for t in _ticks_log(lo, hi)]

        def ymap(err):
            v = math.log10(max(err, DISPLAY_FLOOR))
            return TOP + ph * (hi - v) / (hi - lo)
    else:
        top = max((r.abs_err for r in rows if not r.unsupported), default=0.0) or 1.0
        ticks = [(top * k / 4, format(top * k / 4, ".2e")) for k in range(5)]

        def ymap(err):
            return TOP + ph * (1.0 - min(err, top) / top)

        lo, hi = 0.0, top

    def xmap(i):
        return LEFT + pw * i / n_max

    title = (f"|y_bp - y_fc| per iteration: variant={cfg.variant} seed={cfg.seed} "
             f"schedule={cfg.schedule_mode} eta={cfg.eta:g}")
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="14">{escape(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for value, label in ticks:
        y = TOP + ph * (hi - value) / (hi - lo)
        out.append(f'<line x1="{LEFT - 4}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" '
                   f'stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{y + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{label}</text>')
    for k in range(5):
        i = round(n_max * k / 4)
        x = xmap(i)
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 18}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{i}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">training iteration</text>')
    ylabel = "abs error (log10)" if log_scale else "abs error"
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{ylabel}</text>')

    pts = " ".join(f"{xmap(r.iteration):.2f},{ymap(r.abs_err):.2f}"
                   for r in rows if not r.unsupported)
    if pts:
        out.append(f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{pts}"/>')
    for r in rows:
        if r.unsupported:
            out.append(f'<circle cx="{xmap(r.iteration):.2f}" cy="{TOP + ph:.2f}" r="2.5" '
                       f'fill="#d62728"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(report: EquivalenceReport, path, log_scale: bool = True) -> None:
    _write(path, svg_text(report, log_scale))
