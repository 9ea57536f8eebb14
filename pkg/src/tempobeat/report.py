"""Self-contained HTML report assembled from artifacts already in an output directory.

Nothing is recomputed here: each section reads the CSV/JSON/SVG written by the
other subcommands and is replaced by a short note when its inputs are missing.
"""
from __future__ import annotations

import csv
import json
from html import escape
from pathlib import Path

from .svg import line_chart

CSS = """
body { font-family: sans-serif; max-width: 980px; margin: 2em auto; color: #1f2937; }
table { border-collapse: collapse; margin: 0.5em 0 1.5em; font-size: 13px; }
th, td { border: 1px solid #d1d5db; padding: 3px 8px; text-align: right; }
th { background: #f3f4f6; }
td.l, th.l { text-align: left; }
.note { color: #6b7280; font-style: italic; }
.grid td { width: 2.2em; padding: 2px; font-size: 11px; }
"""


def _read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def _note(text):
    return f'<p class="note">{escape(text)}</p>'


def _table(header, rows, left=1):
    cls = lambda i: ' class="l"' if i < left else ""  # noqa: E731
    head = "".join(f"<th{cls(i)}>{escape(str(h))}</th>" for i, h in enumerate(header))
    body = "".join(
        "<tr>" + "".join(f"<td{cls(i)}>{escape(str(v))}</td>" for i, v in enumerate(r)) + "</tr>" for r in rows)
    return f"<table><tr>{head}</tr>{body}</table>"


def _num(v, fmt="{:.4f}"):
    if v is None or v == "":
        return ""
    return fmt.format(float(v))


class _Collector:
    def __init__(self, out: Path):
        self.out = out
        self.used = []

    def path(self, name):
        p = self.out / name
        if p.is_file():
            self.used.append(p)
            return p
        return None


def _profiles(c):
    parts = ["<h2>Standardized activity</h2>"]
    hour, wd, hist = c.path("profile_hour.csv"), c.path("profile_weekday.csv"), c.path("histogram.csv")
    if hour:
        rows = _read_csv(hour)
        parts.append(line_chart([("mean z", [int(r["hour"]) for r in rows], [float(r["mean_z"]) for r in rows])],
                                "Mean z by hour of day", "hour", "z"))
    if wd:
        rows = _read_csv(wd)
        parts.append(_table(["weekday", "mean z", "hours"],
                            [[r["weekday"], _num(r["mean_z"]), r["count"]] for r in rows]))
    if hist:
        rows = _read_csv(hist)
        parts.append(_table(["from", "to", "hours"], [[r["lo"], r["hi"], r["count"]] for r in rows], left=0))
    if not (hour or wd or hist):
        parts.append(_note("No profile artifacts; run `tempobeat ingest`."))
    return "\n".join(parts)


def _acf(c):
    parts = ["<h2>Autocorrelation</h2>"]
    found = False
    for name in ("acf_hours.svg", "acf_days.svg"):
        p = c.path(name)
        if p:
            parts.append(p.read_text(encoding="utf-8"))
            found = True
    if not found:
        parts.append(_note("No correlograms; run `tempobeat acf`."))
    return "\n".join(parts)


def _fits(c):
    parts = ["<h2>Mixed models</h2>"]
    fits = {}
    for name in ("empty", "full", "restricted"):
        p = c.path(f"fit_{name}.json")
        if p:
            fits[name] = json.loads(p.read_text(encoding="utf-8"))
    if not fits:
        parts.append(_note("No model fits; run `tempobeat fit`."))
        return "\n".join(parts)
    if "empty" in fits:
        f = fits["empty"]
        parts.append("<h3>Variance components, empty model</h3>")
        rows = [[r["component"], _num(r["estimate"]), _num(r["se"]), f"{100 * r['share']:.1f}%",
                 f"{100 * r['cumulative_share']:.1f}%"] for r in f["random_effects"]]
        parts.append(_table(["component", "variance", "se", "share", "cumulative"], rows))
        parts.append(f"<p>Log-likelihood {f['loglik']:.2f}; LR test against a linear model "
                     f"&chi;&sup2; = {f['lr_chi2']:.2f}; n = {f['n_obs']}.</p>")
    for name in ("full", "restricted"):
        if name not in fits:
            continue
        f = fits[name]
        parts.append(f"<h3>Fixed effects, {escape(name)} model</h3>")
        rows = [[b["name"], _num(b["coef"]), _num(b["se"]), _num(b["z"], "{:.2f}"), _num(b["p"], "{:.3g}"),
                 f"[{_num(b['ci95'][0])}, {_num(b['ci95'][1])}]"] for b in f["fixed_effects"]]
        parts.append(_table(["term", "coef", "se", "z", "p", "95% CI"], rows))
        rows = [[r["component"], _num(r["estimate"]), f"{100 * r['share']:.1f}%"] for r in f["random_effects"]]
        parts.append(_table(["component", "variance", "share"], rows))
        if f.get("dropped_columns"):
            parts.append(_note("Constant columns left out: " + ", ".join(f["dropped_columns"])))
    return "\n".join(parts)


def _rmsd(c):
    parts = ["<h2>Prediction error</h2>"]
    found = False
    for name in ("rmsd_weekday.svg", "rmsd_hour.svg"):
        p = c.path(name)
        if p:
            parts.append(p.read_text(encoding="utf-8"))
            found = True
    rows = []
    for name in ("empty", "full", "restricted"):
        p = c.path(f"rmsd_{name}.json")
        if p:
            d = json.loads(p.read_text(encoding="utf-8"))
            rows.append([name, _num(d["overall"]), d["n"], _num(d["overall_daily"]), d["n_days"]])
    if rows:
        found = True
        parts.append(_table(["model", "hourly RMSD", "hours", "daily RMSD", "days"], rows))
    grid = c.path("rmsd_empty_grid.csv")
    if grid:
        cells = {(r["weekday"], int(r["hour"])): r["rmsd"] for r in _read_csv(grid)}
        days = list(dict.fromkeys(k[0] for k in cells))
        body = [[d] + [_num(cells.get((d, h)), "{:.3f}") for h in range(24)] for d in days]
        parts.append("<h3>RMSD by weekday and hour, empty model</h3>")
        parts.append(_table(["weekday"] + list(range(24)), body).replace("<table>", '<table class="grid">', 1))
    if not found:
        parts.append(_note("No RMSD artifacts; run `tempobeat rmsd`."))
    return "\n".join(parts)


def _recommendation(c):
    parts = ["<h2>Recommended slots</h2>"]
    p = c.path("recommendation.json")
    if not p:
        parts.append(_note("No recommendation; run `tempobeat recommend`."))
        return "\n".join(parts)
    rec = json.loads(p.read_text(encoding="utf-8"))
    best = rec["best_slot"]
    parts.append(f"<p>Best slot: <b>{escape(best['weekday'])} {best['hour']:02d}:00</b> "
                 f"(mean RMSD {best['rmsd']:.4f} over models {escape(', '.join(rec['models']))}). "
                 f"Best weekday {escape(rec['best_weekday'])}, best hour {rec['best_hour']}.</p>")
    rows = [[i, s["weekday"], s["hour"], _num(s["rmsd"]), s["count"]]
            for i, s in enumerate(rec["ranked_slots"][:10], start=1)]
    parts.append(_table(["rank", "weekday", "hour", "rmsd", "count"], rows, left=2))
    return "\n".join(parts)


def _anomalies(c):
    parts = ["<h2>Anomalous hours</h2>"]
    p = c.path("anomalies.csv")
    if not p:
        parts.append(_note("No anomaly list; run `tempobeat anomalies`."))
        return "\n".join(parts)
    rows = _read_csv(p)
    parts.append(f"<p>{len(rows)} hours flagged.</p>")
    parts.append(_table(["timestamp", "z"], [[r["timestamp"], _num(r["z"], "{:.2f}")] for r in rows[:25]]))
    return "\n".join(parts)


def build_report(out_dir):
    """Return (html, list of artifact paths read)."""
    c = _Collector(Path(out_dir))
    sections = [_profiles(c), _acf(c), _fits(c), _rmsd(c), _recommendation(c), _anomalies(c)]
    html = ("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>tempobeat report</title>"
            f"<style>{CSS}</style></head><body>\n<h1>Temporal activity report</h1>\n"
            + "\n".join(sections) + "\n</body></html>\n")
    return html, c.used
