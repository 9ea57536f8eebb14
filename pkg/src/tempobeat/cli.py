"""Command-line entry point.

Every subcommand writes its artifacts into ``--out`` and records them, with
content digests and timings, in ``manifest.json`` there.  Exit codes:
0 success, 1 data error, 2 model non-convergence, 3 usage error.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .acf import PRESETS, aggregate_daily, correlogram
from .core import Weekday, calendar_keys, flag_anomalies, format_stamp, proxy_r2, summary_profiles, to_hours
from .errors import DataError, InsufficientSpan, NotConverged
from .ingest import (
    BUNDLE_DATA,
    BUNDLE_META,
    assemble_dataset,
    load_config,
    parse_events,
    parse_observations,
    parse_weather,
    read_bundle,
    write_bundle,
)
from .mlm import build_design, fit_ml, predict_conditional, standard_spec
from .rmsd import axis_csv, recommend, report_from_dict, rmsd_report
from .svg import bar_chart, line_chart

log = logging.getLogger("tempobeat")

EXIT_OK, EXIT_DATA, EXIT_CONVERGENCE, EXIT_USAGE = 0, 1, 2, 3
MODELS = ("empty", "full", "restricted")
AXIS_FILES = {"weekday": "weekday", "hour": "hour", "grid": "weekday_hour"}
DATASET_DIR = "dataset"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _fmt(x):
    return repr(float(x))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects outputs and timings for one subcommand and writes the manifest."""

    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs = []
        self.inputs = {}
        self.timings = {}
        self.config = None
        self.started = dt.datetime.now(dt.timezone.utc)

    def stage(self, name):
        run = self

        class _Timer:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = round(time.perf_counter() - self.t0, 6)

        return _Timer()

    def write(self, name, text):
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        self.outputs.append(path)
        return path

    def add_input(self, path):
        if path is not None and Path(path).is_file():
            self.inputs[str(path)] = _sha256(path)

    def finish(self):
        manifest_path = self.out / "manifest.json"
        manifest = {"tool": "tempobeat", "runs": {}}
        if manifest_path.exists():
            try:
                manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                pass
        manifest.setdefault("runs", {})[self.command] = {
            "tool_version": __version__,
            "started": self.started.isoformat(timespec="seconds"),
            "config": self.config,
            "inputs": self.inputs,
            "timings": self.timings,
            "outputs": {str(p.relative_to(self.out)): _sha256(p) for p in self.outputs},
        }
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- shared loading -----------------------------------------------------------

def _config(args):
    cfg = load_config(args.config, obs_gap_policy=args.fill_gaps, anomaly_k=args.k,
                      min_count=args.min_count, seed=args.seed,
                      drop_anomalies=True if getattr(args, "drop_anomalies", False) else None)
    return cfg


def load_dataset(args, run: Run):
    """Dataset from --dataset, raw --obs inputs, or the bundle in --out."""
    cfg = _config(args)
    run.config = cfg.snapshot()
    if args.dataset:
        bundle = Path(args.dataset)
    elif args.obs:
        return _assemble(args, cfg, run)
    else:
        bundle = Path(args.out) / DATASET_DIR
        if not (bundle / BUNDLE_DATA).exists():
            raise UsageError("no input: pass --obs (and optionally --weather/--events) or --dataset,"
                             " or run `tempobeat ingest` first")
    run.add_input(bundle / BUNDLE_DATA)
    run.add_input(bundle / BUNDLE_META)
    return read_bundle(bundle)


def _assemble(args, cfg, run):
    with run.stage("parse"):
        run.add_input(args.obs)
        obs = parse_observations(args.obs, tz=cfg.timezone)
        weather = None
        if args.weather:
            run.add_input(args.weather)
            weather = parse_weather(args.weather, cfg.stations, tz=cfg.timezone, max_gap=cfg.weather_max_gap)
        events = None
        if args.events:
            run.add_input(args.events)
            events = parse_events(args.events)
    with run.stage("assemble"):
        return assemble_dataset(obs, weather, events, cfg)


def _models(args):
    return MODELS if args.model in (None, "all") else (args.model,)


def _threads():
    try:
        return max(1, int(os.environ.get("TEMPOBEAT_THREADS", "3")))
    except ValueError:
        return 1


def _predictions_csv(design, yhat):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", "observed", "predicted"])
    for stamp, obs, pred in zip(design.stamps, design.y, yhat):
        w.writerow([format_stamp(stamp), _fmt(obs), _fmt(pred)])
    return buf.getvalue()


def _read_predictions(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    stamps = to_hours([r["timestamp"] for r in rows])
    return stamps, np.array([float(r["observed"]) for r in rows]), np.array([float(r["predicted"]) for r in rows])


def _fit_one(dataset, name):
    design = build_design(dataset, standard_spec(name, dataset))
    fit = fit_ml(design)
    return design, fit, predict_conditional(fit, design)


def run_fits(dataset, names, run: Run):
    results = {}
    with run.stage("fit"):
        with ThreadPoolExecutor(max_workers=min(len(names), _threads())) as pool:
            futures = {name: pool.submit(_fit_one, dataset, name) for name in names}
            for name in names:
                results[name] = futures[name].result()
    for name in names:
        design, fit, yhat = results[name]
        run.write(f"fit_{name}.json", json.dumps(fit.to_dict(), indent=2) + "\n")
        run.write(f"predictions_{name}.csv", _predictions_csv(design, yhat))
    return results


# -- subcommands ------------------------------------------------------------

def cmd_ingest(args, run):
    dataset = load_dataset(args, run)
    bundle = Path(args.out) / DATASET_DIR
    with run.stage("write"):
        run.outputs.extend(write_bundle(dataset, bundle))
        fills = io.StringIO()
        w = csv.writer(fills, lineterminator="\n")
        w.writerow(["station", "timestamp", "columns"])
        for f in dataset.fills:
            w.writerow([f.station, f.stamp.isoformat(timespec="minutes"), ";".join(f.columns)])
        run.write("weather_fills.csv", fills.getvalue())
        try:
            _write_profiles(dataset, run)
        except InsufficientSpan as exc:
            log.warning("profiles skipped: %s", exc)
    print(f"ingested {len(dataset)} hours from {format_stamp(dataset.grid[0])} to "
          f"{format_stamp(dataset.grid[-1])}; {len(dataset.covariates.names)} covariates; "
          f"{len(dataset.fills)} weather hours interpolated")
    return EXIT_OK


def _write_profiles(dataset, run):
    prof = summary_profiles(dataset.y)
    rows = [["hour", "mean_z", "count"]] + [[h, _fmt(prof.by_hour[h]), int(prof.hour_counts[h])] for h in range(24)]
    run.write("profile_hour.csv", _csv(rows))
    rows = [["weekday", "mean_z", "count"]] + [
        [Weekday(d).label, _fmt(prof.by_weekday[d]), int(prof.weekday_counts[d])] for d in range(7)]
    run.write("profile_weekday.csv", _csv(rows))
    rows = [["weekday", "hour", "mean_z", "count"]] + [
        [Weekday(d).label, h, _fmt(prof.week[d, h]), int(prof.week_counts[d, h])]
        for d in range(7) for h in range(24)]
    run.write("profile_week.csv", _csv(rows))
    edges = prof.hist_edges
    lows = [-np.inf, *edges[:-1], edges[-1]]
    highs = [edges[0], *edges[1:], np.inf]
    rows = [["lo", "hi", "count"]] + [[_fmt(lo), _fmt(hi), int(c)] for lo, hi, c in zip(lows, highs, prof.hist_counts)]
    run.write("histogram.csv", _csv(rows))


def _csv(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def cmd_acf(args, run):
    dataset = load_dataset(args, run)
    with run.stage("acf"):
        daily = aggregate_daily(dataset.grid, dataset.raw)
        if daily.trimmed:
            log.info("partial days left out of the day series: %s", ", ".join(daily.trimmed))
        results = {}
        for name, p in PRESETS.items():
            z = dataset.y.z if p.lag_unit == "hour" else daily.z
            max_lag = min(p.max_lag, len(z) - 1)
            max_lag -= max_lag % p.lag_step
            results[name] = correlogram(z, p.lag_unit, p.lag_step, max_lag)
    for name, series in results.items():
        run.write(f"acf_{name}.csv", _csv([["lag", "r"]] + [[lag, _fmt(r)] for lag, r in series.rows()]))
    hours = [(PRESETS[n].title, results[n].lags.tolist(), results[n].r.tolist()) for n in ("hour_step1", "hour_step24")]
    days = [(PRESETS[n].title, results[n].lags.tolist(), results[n].r.tolist()) for n in ("day_step1", "day_step7")]
    run.write("acf_hours.svg", line_chart(hours, "Autocorrelation, hourly series", "lag (hours)", "r", ylim=(-1, 1)))
    run.write("acf_days.svg", line_chart(days, "Autocorrelation, daily series", "lag (days)", "r", ylim=(-1, 1)))
    if daily.trimmed:
        run.write("acf_trimmed_days.txt", "\n".join(daily.trimmed) + "\n")
    return EXIT_OK


def cmd_fit(args, run):
    dataset = load_dataset(args, run)
    names = _models(args)
    results = run_fits(dataset, names, run)
    bad = []
    for name in names:
        fit = results[name][1]
        comps = fit.components
        print(f"{name}: n={fit.n_obs} loglik={fit.loglik:.4f} LR={fit.lr_chi2_vs_linear:.2f} "
              + " ".join(f"{c}={comps.sigma2[c]:.4f}({comps.shares[c]:.1%})" for c in comps.sigma2)
              + ("" if fit.converged else " NOT CONVERGED"))
        if not fit.converged:
            bad.append(name)
    if bad:
        raise NotConverged(f"model(s) {', '.join(bad)} did not converge")
    return EXIT_OK


def _reports(args, run, names):
    """RMSD reports from predictions already in --out, fitting only what is missing."""
    out = Path(args.out)
    missing = [n for n in names if not (out / f"predictions_{n}.csv").exists()]
    dataset = None
    if missing:
        dataset = load_dataset(args, run)
        run_fits(dataset, missing, run)
    elif run.config is None:
        run.config = _config(args).snapshot()
    reports = {}
    with run.stage("rmsd"):
        for name in names:
            path = out / f"predictions_{name}.csv"
            run.add_input(path)
            stamps, obs, pred = _read_predictions(path)
            reports[name] = rmsd_report(obs, pred, calendar_keys(stamps), name)
    return reports


def cmd_rmsd(args, run):
    names = _models(args)
    reports = _reports(args, run, names)
    axes = AXIS_FILES if args.axis in (None, "all") else {args.axis: AXIS_FILES[args.axis]}
    for name, rep in reports.items():
        run.write(f"rmsd_{name}.json", json.dumps(rep.to_dict(), indent=2) + "\n")
        for axis in axes:
            run.write(f"rmsd_{name}_{axis}.csv", axis_csv(rep, AXIS_FILES[axis]))
        print(f"{name}: overall RMSD {rep.overall:.4f} over {rep.n} hours")
    labels = [Weekday(d).label[:3] for d in range(7)]
    run.write("rmsd_weekday.svg", bar_chart(labels, [(n, r.by_weekday.tolist()) for n, r in reports.items()],
                                            "RMSD by weekday (daily means)", "weekday", "RMSD"))
    run.write("rmsd_hour.svg", bar_chart(list(range(24)), [(n, r.by_hour.tolist()) for n, r in reports.items()],
                                         "RMSD by hour", "hour", "RMSD"))
    return EXIT_OK


def cmd_recommend(args, run):
    names = _models(args)
    out = Path(args.out)
    reports = {}
    if all((out / f"rmsd_{n}.json").exists() for n in names):
        run.config = _config(args).snapshot()
        for n in names:
            run.add_input(out / f"rmsd_{n}.json")
            reports[n] = report_from_dict(json.loads((out / f"rmsd_{n}.json").read_text(encoding="utf-8")))
    else:
        reports = _reports(args, run, names)
    min_count = args.min_count if args.min_count is not None else 4
    rec = recommend(list(reports.values()), min_count=min_count)
    run.write("recommendation.json", json.dumps(rec.to_dict(), indent=2) + "\n")
    print(rec.table())
    return EXIT_OK


def cmd_anomalies(args, run):
    dataset = load_dataset(args, run)
    k = args.k if args.k is not None else 2.0
    flags = flag_anomalies(dataset.y, k)
    rows = [["timestamp", "z", "value"]]
    index = {np.datetime64(s, "h"): i for i, s in enumerate(dataset.grid)}
    for stamp, z in flags:
        rows.append([stamp.isoformat(timespec="minutes"), _fmt(z), _fmt(dataset.raw[index[np.datetime64(stamp, "h")]])])
    run.write("anomalies.csv", _csv(rows))
    print(f"{len(flags)} of {len(dataset)} hours exceed |z| > {k:g}")
    return EXIT_OK


def cmd_proxy(args, run):
    dataset = load_dataset(args, run)
    if dataset.row_count is None:
        raise UsageError("proxy needs a row_count column in the observations file")
    r2 = proxy_r2(dataset.raw, dataset.row_count)
    print(f"R2 = {r2:.6f}")
    run.write("proxy.json", json.dumps({"r2": r2, "n": len(dataset)}, indent=2) + "\n")
    return EXIT_OK


def cmd_synth(args, run):
    from .synth import REFERENCE_EVENT_EFFECTS, random_events, reference_config, write_synthetic

    seed = args.seed if args.seed is not None else 0
    start = dt.date.fromisoformat(args.start)
    end = dt.date.fromisoformat(args.end)
    events = random_events(start, end, seed=seed) if args.events_calendar else ()
    wn = [1.0] * 7
    hn = [1.0] * 24
    if args.favor_slot:
        day, hour = args.favor_slot.split("-")
        wn[Weekday.parse(day)] = 0.5
        hn[int(hour)] = 0.5
    cfg = reference_config(seed=seed, start=start, end=end, events=events,
                        event_effects=dict(REFERENCE_EVENT_EFFECTS) if events else {},
                        event_noise=2.0 if events else 1.0,
                        weekday_noise_multipliers=tuple(wn), hour_noise_multipliers=tuple(hn))
    run.config = cfg.to_dict()
    with run.stage("generate"):
        paths = write_synthetic(cfg, args.out, noise_rel=args.noise_rel)
    run.outputs.extend(paths)
    print(f"wrote {', '.join(p.name for p in paths)} to {args.out}")
    return EXIT_OK


def cmd_report(args, run):
    from .report import build_report

    run.config = _config(args).snapshot()
    html, used = build_report(Path(args.out))
    for p in used:
        run.add_input(p)
    run.write("report.html", html)
    print(f"wrote {Path(args.out) / 'report.html'}")
    return EXIT_OK


COMMANDS = {
    "ingest": (cmd_ingest, "validate inputs and write the canonical dataset bundle"),
    "acf": (cmd_acf, "correlograms at hour/day/week lags (CSV + SVG)"),
    "fit": (cmd_fit, "fit the empty/full/restricted mixed models (JSON)"),
    "rmsd": (cmd_rmsd, "RMSD by weekday, hour and weekday x hour (CSV + SVG)"),
    "recommend": (cmd_recommend, "rank weekday x hour slots by RMSD"),
    "anomalies": (cmd_anomalies, "hours more than k standard deviations from the mean"),
    "proxy": (cmd_proxy, "R2 between file sizes and row counts"),
    "synth": (cmd_synth, "generate a synthetic dataset with known structure"),
    "report": (cmd_report, "HTML report assembled from earlier artifacts"),
}


def build_parser():
    parser = _Parser(prog="tempobeat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tempobeat {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--obs", metavar="PATH")
        p.add_argument("--weather", metavar="PATH")
        p.add_argument("--events", metavar="PATH")
        p.add_argument("--dataset", metavar="DIR", help="canonical bundle written by `ingest`")
        p.add_argument("--model", choices=MODELS + ("all",), default=None)
        p.add_argument("--axis", choices=("weekday", "hour", "grid", "all"), default=None)
        p.add_argument("--k", type=float, default=None, help="anomaly threshold in sd units")
        p.add_argument("--min-count", type=int, default=None, dest="min_count")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", metavar="DIR", default="out")
        p.add_argument("--fill-gaps", choices=("zero", "interpolate", "error"), default=None, dest="fill_gaps")
        p.add_argument("--verbose", "-v", action="store_true")
        if name == "ingest":
            p.add_argument("--drop-anomalies", action="store_true",
                           help="exclude hours with |z| > k from model fitting")
        if name == "synth":
            p.add_argument("--start", default="2018-01-01")
            p.add_argument("--end", default="2019-05-31")
            p.add_argument("--no-events", dest="events_calendar", action="store_false")
            p.add_argument("--noise-rel", type=float, default=None,
                           help="also write a row_count column with this relative noise")
            p.add_argument("--favor-slot", default="thu-11",
                           help="weekday-hour slot given half the residual noise, e.g. thu-11; '' for none")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="tempobeat: %(levelname)s: %(message)s", stream=sys.stderr)
    func = COMMANDS[args.command][0]
    run = None
    try:
        run = Run(args, args.command)
        code = func(args, run)
        run.finish()
        return code
    except UsageError as exc:
        print(f"tempobeat {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotConverged as exc:
        if run is not None:
            run.finish()
        print(f"tempobeat {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DataError as exc:
        print(f"tempobeat {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"tempobeat {args.command}: error: {exc.filename}: file not found", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError) as exc:
        print(f"tempobeat {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
