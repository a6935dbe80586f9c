"""SVG line-chart grids and plain-text summary tables from metrics.csv."""

from __future__ import annotations

from html import escape

import numpy as np

from .evaluate.runner import EvalReport, build_reports

REP_ORDER = ("raw", "pca", "concept_span", "aggregate", "demographics")
REGIME_ORDER = ("year_agnostic", "fixed_window", "prior_year", "full_history")
MODEL_COLORS = {"lr": "#1f77b4", "rf": "#d62728"}
FALLBACK_COLORS = ("#2ca02c", "#9467bd", "#8c564b")

PANEL_W, PANEL_H = 220, 160
MARGIN_L, MARGIN_T, GAP = 60, 50, 30


def _ordered(values, preferred):
    values = set(values)
    return [v for v in preferred if v in values] + sorted(values - set(preferred))


def format_drop(drop: float | None) -> str:
    """Max drop as a number, or "*(+x)" when every later year beat the first one."""
    if drop is None:
        return "-"
    if drop < 0:
        return f"*(+{-drop:.2f})"
    return f"{drop:.2f}"


def format_avg(report: EvalReport | None) -> str:
    if report is None or not report.years:
        return "-"
    mean, std = report.average_auroc
    return f"{mean:.2f} ± {std:.2f}"


def render_tables(reports: list[EvalReport], n_boot: int | None = None) -> str:
    out = ["# AUROC summary", ""]
    if n_boot is not None:
        out += [f"Error bars and stderr: stratified bootstrap of the test set, n_boot={n_boot}.", ""]
    by_key = {(r.task, r.regime, r.model, r.representation): r for r in reports}
    for task in sorted({r.task for r in reports}):
        task_reports = [r for r in reports if r.task == task]
        for regime in _ordered({r.regime for r in task_reports}, REGIME_ORDER):
            sub = [r for r in task_reports if r.regime == regime]
            reps = _ordered({r.representation for r in sub}, REP_ORDER)
            models = sorted({r.model for r in sub})
            temporal = regime != "year_agnostic"
            out.append(f"## {task} / {regime}")
            out.append("")
            header = ["model"] + [f"avg {rep}" for rep in reps]
            if temporal:
                header += [f"max drop {rep}" for rep in reps]
            out.append("| " + " | ".join(header) + " |")
            out.append("|" + "---|" * len(header))
            for m in models:
                cells = [m] + [format_avg(by_key.get((task, regime, m, rep))) for rep in reps]
                if temporal:
                    cells += [format_drop(by_key[(task, regime, m, rep)].max_drop)
                              if (task, regime, m, rep) in by_key else "-" for rep in reps]
                out.append("| " + " | ".join(cells) + " |")
            out.append("")
    return "\n".join(out)


def _series(report: EvalReport, years: list[int]):
    """(x, y, err) triples; year-agnostic results are drawn flat across all years."""
    if report.regime == "year_agnostic":
        if not report.years:
            return []
        mean, std = report.average_auroc
        return [(y, mean, std) for y in years]
    return [(int(y.test_year), y.auroc, y.stderr) for y in report.years if isinstance(y.test_year, int)]


def render_svg(reports: list[EvalReport], task: str, switch_year: int | None = None) -> str:
    """Grid of panels: representations as columns, regimes as rows, one series per model."""
    sub = [r for r in reports if r.task == task]
    reps = _ordered({r.representation for r in sub}, REP_ORDER)
    regimes = _ordered({r.regime for r in sub}, REGIME_ORDER)
    models = sorted({r.model for r in sub})
    years = sorted({int(y.test_year) for r in sub for y in r.years if isinstance(y.test_year, int)})
    if not years:
        years = [switch_year] if switch_year is not None else [0]
    x_lo, x_hi = min(years) - 0.5, max(years) + 0.5
    vals = [v for r in sub for (_, v, e) in _series(r, years) for v in (v - (e or 0), v + (e or 0))]
    y_lo = min(0.4, np.floor(min(vals) * 10) / 10) if vals else 0.4
    y_hi = 1.0

    width = MARGIN_L + len(reps) * (PANEL_W + GAP) + 80
    height = MARGIN_T + len(regimes) * (PANEL_H + GAP) + 30
    colors = dict(MODEL_COLORS)
    for i, m in enumerate(x for x in models if x not in colors):
        colors[m] = FALLBACK_COLORS[i % len(FALLBACK_COLORS)]

    def px(x):
        return (x - x_lo) / (x_hi - x_lo) * PANEL_W

    def py(y):
        return PANEL_H - (y - y_lo) / (y_hi - y_lo) * PANEL_H

    by_key = {(r.regime, r.representation, r.model): r for r in sub}
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
        f'<title>AUROC by test year: {escape(task)}</title>',
        f'<text x="{MARGIN_L}" y="18" font-size="13">{escape(task)}: AUROC by test year '
        f'(error bars: ± stderr)</text>',
    ]
    for j, rep in enumerate(reps):
        x0 = MARGIN_L + j * (PANEL_W + GAP)
        out.append(f'<text x="{x0 + PANEL_W / 2:.1f}" y="{MARGIN_T - 8}" text-anchor="middle">{escape(rep)}</text>')
    for i, regime in enumerate(regimes):
        y0 = MARGIN_T + i * (PANEL_H + GAP)
        out.append(f'<text x="12" y="{y0 + PANEL_H / 2:.1f}" transform="rotate(-90 12 {y0 + PANEL_H / 2:.1f})" '
                   f'text-anchor="middle">{escape(regime)}</text>')
        for j, rep in enumerate(reps):
            x0 = MARGIN_L + j * (PANEL_W + GAP)
            out.append(f'<g class="panel" data-representation="{escape(rep)}" data-regime="{escape(regime)}" '
                       f'transform="translate({x0},{y0})">')
            out.append(f'<rect width="{PANEL_W}" height="{PANEL_H}" fill="white" stroke="#999"/>')
            if switch_year is not None and x_lo <= switch_year <= x_hi:
                out.append(f'<rect class="switch" x="{px(switch_year - 0.5):.1f}" width="{px(switch_year + 0.5) - px(switch_year - 0.5):.1f}" '
                           f'height="{PANEL_H}" fill="#cccccc" fill-opacity="0.5"/>')
            for tick in np.arange(np.ceil(y_lo * 10) / 10, y_hi + 1e-9, 0.1):
                out.append(f'<line x1="0" x2="{PANEL_W}" y1="{py(tick):.1f}" y2="{py(tick):.1f}" stroke="#eee"/>')
                if j == 0:
                    out.append(f'<text x="-4" y="{py(tick) + 3:.1f}" text-anchor="end">{tick:.1f}</text>')
            if i == len(regimes) - 1:
                step = max(1, int(np.ceil(len(years) / 6)))
                for yr in years[::step]:
                    out.append(f'<text x="{px(yr):.1f}" y="{PANEL_H + 12}" text-anchor="middle">{yr}</text>')
            for m in models:
                r = by_key.get((regime, rep, m))
                if r is None:
                    continue
                pts = _series(r, years)
                if not pts:
                    continue
                c = colors[m]
                coords = " ".join(f"{px(x):.1f},{py(v):.1f}" for x, v, _ in pts)
                out.append(f'<g class="series" data-model="{escape(m)}">')
                out.append(f'<polyline points="{coords}" fill="none" stroke="{c}" stroke-width="1.5"/>')
                for x, v, e in pts:
                    e = e or 0.0
                    out.append(f'<line class="errorbar" x1="{px(x):.1f}" x2="{px(x):.1f}" y1="{py(v - e):.1f}" '
                               f'y2="{py(v + e):.1f}" stroke="{c}"/>')
                    out.append(f'<circle cx="{px(x):.1f}" cy="{py(v):.1f}" r="2" fill="{c}"/>')
                out.append("</g>")
            out.append("</g>")
    lx = MARGIN_L + len(reps) * (PANEL_W + GAP)
    for k, m in enumerate(models):
        out.append(f'<rect x="{lx}" y="{MARGIN_T + 14 * k}" width="10" height="10" fill="{colors[m]}"/>')
        out.append(f'<text x="{lx + 14}" y="{MARGIN_T + 14 * k + 9}">{escape(m)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_all(rows, switch_year: int | None = None, n_boot: int | None = None) -> dict[str, str]:
    """File name -> content for every figure and the tables file."""
    reports = build_reports(rows)
    files = {f"{task}.svg": render_svg(reports, task, switch_year) for task in sorted({r.task for r in reports})}
    files["tables.md"] = render_tables(reports, n_boot)
    return files
