"""Evaluation harness: budget curves, sensor-failure robustness, force bins.

Every section function is pure given (dataset, config, seeds): trials are
split with a seeded plan, standardization statistics come from training
columns only, and all randomness flows through ``numpy.random.default_rng``
with recorded seeds, so a manifest re-run reproduces each number exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import svr
from .dataset import DeformationDataset, split, standardize
from .errors import ValidationError

DEFAULT_FORCE_INTERVALS = ((0.0, 4.9), (4.9, 9.8), (9.8, 19.6), (19.6, 34.3))
DEFAULT_EVAL_SEEDS = (0, 1, 2)
DEFAULT_SPLIT_FRACTIONS = (0.85, 0.0, 0.15)

_PALETTE = {
    "greedy_svr": "#1f77b4",
    "pca_qr": "#d62728",
    "entropy": "#2ca02c",
    "mi": "#9467bd",
    "baseline": "#7f7f7f",
}


@dataclass
class EvaluationReport:
    """Container for the three report sections plus provenance."""

    error_vs_budget: dict | None = None
    robustness: dict | None = None
    force_intervals: dict | None = None
    runtime: dict = field(default_factory=dict)
    seeds: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "error_vs_budget": self.error_vs_budget,
            "robustness": self.robustness,
            "force_intervals": self.force_intervals,
            "runtime": self.runtime,
            "seeds": list(self.seeds),
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        return cls(
            error_vs_budget=d.get("error_vs_budget"),
            robustness=d.get("robustness"),
            force_intervals=d.get("force_intervals"),
            runtime=d.get("runtime", {}),
            seeds=list(d.get("seeds", [])),
            config=d.get("config", {}),
        )


def dataset_fingerprint(data: DeformationDataset) -> str:
    """Content hash over readings, geometry and metadata (sha256 hex)."""
    h = hashlib.sha256()
    for arr in (data.X, data.sensor_sites, data.force_positions, data.force_magnitudes):
        a = np.ascontiguousarray(np.asarray(arr, dtype=float))
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    h.update(json.dumps(data.meta, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _restricted_features(std_data: DeformationDataset, selection) -> np.ndarray:
    sel = np.asarray(selection, dtype=int)
    if sel.size == 0:
        raise ValidationError("sensor selection is empty")
    return std_data.X[sel].T


def error_vs_budget(data: DeformationDataset, selections: dict, budgets,
                    params: svr.SvrHyperParams,
                    seeds=DEFAULT_EVAL_SEEDS,
                    fractions=DEFAULT_SPLIT_FRACTIONS,
                    tol: float = svr.DEFAULT_KKT_TOL,
                    max_pairs: int = svr.DEFAULT_MAX_PAIRS) -> dict:
    """Held-out localization error per (method, budget), mean/std over seeds.

    ``selections`` maps method name to its SelectionResult; each requested
    budget must be covered.  Each seed re-splits the trials, standardizes
    on the training columns, trains a locator on the selected sensors and
    scores the mean Euclidean test error in mm.
    """
    budgets = [int(b) for b in budgets]
    for method, result in selections.items():
        missing = [b for b in budgets if b not in result.selections]
        if missing:
            raise ValidationError(f"{method} selection lacks budgets {missing}")

    methods: dict[str, dict] = {}
    for method, result in selections.items():
        per_budget: dict[str, dict] = {}
        for k in budgets:
            sel = result.selections[k]
            cells = []
            for seed in seeds:
                train, _, test = split(data.n_trials, fractions, seed=seed)
                std_data, _ = standardize(data, train)
                feats = _restricted_features(std_data, sel)
                locator = svr.fit_locator(feats[train], data.force_positions[train],
                                          params, tol=tol, max_pairs=max_pairs)
                pred = locator.locate(feats[test])
                err = float(np.mean(svr.euclidean_error(pred, data.force_positions[test])))
                cells.append({"seed": int(seed), "error_mm": err})
            errors = np.array([c["error_mm"] for c in cells])
            per_budget[str(k)] = {
                "mean_mm": float(errors.mean()),
                "std_mm": float(errors.std()),
                "cells": cells,
            }
        methods[method] = per_budget

    return {
        "budgets": budgets,
        "seeds": [int(s) for s in seeds],
        "fractions": list(fractions),
        "params": params.to_dict(),
        "methods": methods,
    }


def failure_robustness(data: DeformationDataset, selections: dict,
                       params: svr.SvrHyperParams,
                       failure_counts=range(6), repetitions: int = 20,
                       seed: int = 0, split_seed: int = 0,
                       fractions=DEFAULT_SPLIT_FRACTIONS,
                       tol: float = svr.DEFAULT_KKT_TOL,
                       max_pairs: int = svr.DEFAULT_MAX_PAIRS) -> dict:
    """Zero random subsets of standardized test readings, model unchanged.

    ``selections`` maps method name to a fixed sensor index list; all
    lists must share one length (the budget) so the same failure patterns
    apply to every method, making the comparison paired.
    """
    failure_counts = [int(f) for f in failure_counts]
    sel_lists = {m: [int(i) for i in v] for m, v in selections.items()}
    budgets = {len(v) for v in sel_lists.values()}
    if len(budgets) != 1:
        raise ValidationError(f"selections must share a budget, got sizes {sorted(budgets)}")
    budget = budgets.pop()
    if max(failure_counts) > budget:
        raise ValidationError(
            f"cannot fail {max(failure_counts)} of {budget} sensors"
        )

    rng = np.random.default_rng(seed)
    patterns = {
        f: [np.sort(rng.choice(budget, size=f, replace=False)) for _ in range(repetitions)]
        for f in failure_counts
    }

    train, _, test = split(data.n_trials, fractions, seed=split_seed)
    std_data, _ = standardize(data, train)

    methods: dict[str, dict] = {}
    for method, sel in sel_lists.items():
        feats = _restricted_features(std_data, sel)
        locator = svr.fit_locator(feats[train], data.force_positions[train],
                                  params, tol=tol, max_pairs=max_pairs)
        per_count: dict[str, dict] = {}
        for f in failure_counts:
            cells = []
            for rep in range(repetitions):
                readings = feats[test].copy()
                if f:
                    readings[:, patterns[f][rep]] = 0.0
                pred = locator.locate(readings)
                err = float(np.mean(svr.euclidean_error(pred, data.force_positions[test])))
                cells.append({"rep": rep, "error_mm": err})
            errors = np.array([c["error_mm"] for c in cells])
            per_count[str(f)] = {
                "mean_mm": float(errors.mean()),
                "std_mm": float(errors.std()),
                "cells": cells,
            }
        methods[method] = per_count

    return {
        "failure_counts": failure_counts,
        "repetitions": repetitions,
        "seed": seed,
        "split": {"seed": split_seed, "fractions": list(fractions)},
        "params": params.to_dict(),
        "budget": budget,
        "methods": methods,
    }


def force_interval_report(data: DeformationDataset, params: svr.SvrHyperParams,
                          magnitude_params: svr.SvrHyperParams | None = None,
                          selection=None, intervals=DEFAULT_FORCE_INTERVALS,
                          split_seed: int = 0, fractions=DEFAULT_SPLIT_FRACTIONS,
                          tol: float = svr.DEFAULT_KKT_TOL,
                          max_pairs: int = svr.DEFAULT_MAX_PAIRS) -> dict:
    """Bin held-out trials by true magnitude; report per-bin precision.

    Trains a locator with a magnitude head and reports mean/std of the
    position error (mm) and of the absolute magnitude error (N) for each
    populated interval (lo, hi]; empty intervals are omitted.
    """
    train, _, test = split(data.n_trials, fractions, seed=split_seed)
    std_data, _ = standardize(data, train)
    sel = np.arange(data.n_sensors) if selection is None else selection
    feats = _restricted_features(std_data, sel)
    locator = svr.fit_locator(feats[train], data.force_positions[train], params,
                              magnitudes=data.force_magnitudes[train],
                              magnitude_params=magnitude_params,
                              tol=tol, max_pairs=max_pairs)
    pred_pos = locator.locate(feats[test])
    pred_mag = locator.magnitude(feats[test])
    pos_err = svr.euclidean_error(pred_pos, data.force_positions[test])
    mag_err = np.abs(pred_mag - data.force_magnitudes[test])
    true_mag = data.force_magnitudes[test]

    bins = []
    for lo, hi in intervals:
        mask = (true_mag > lo) & (true_mag <= hi)
        count = int(mask.sum())
        if count == 0:
            continue
        bins.append({
            "lo_n": float(lo),
            "hi_n": float(hi),
            "count": count,
            "position_mean_mm": float(pos_err[mask].mean()),
            "position_std_mm": float(pos_err[mask].std()),
            "magnitude_mean_n": float(mag_err[mask].mean()),
            "magnitude_std_n": float(mag_err[mask].std()),
        })

    return {
        "intervals": [[float(lo), float(hi)] for lo, hi in intervals],
        "split": {"seed": split_seed, "fractions": list(fractions)},
        "params": params.to_dict(),
        "magnitude_params": (magnitude_params or params).to_dict(),
        "n_test": int(len(test)),
        "bins": bins,
    }


# ---------------------------------------------------------------------------
# Report emission


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def _svg_line_chart(series, xlabel: str, ylabel: str,
                    width: int = 640, height: int = 420) -> str:
    """Minimal deterministic SVG line chart (no external dependencies).

    ``series`` is a list of (label, xs, ys) triples drawn in order with a
    fixed palette, so identical inputs give identical bytes.
    """
    ml, mr, mt, mb = 64, 16, 16, 48
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys]
    if not xs_all:
        raise ValidationError("cannot plot an empty series list")
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    y_lo = min(y_lo, 0.0)

    def px(x):
        return ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr)

    def py(y):
        return height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{ml}" y1="{height - mb}" x2="{width - mr}" y2="{height - mb}" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" '
        'stroke="black" stroke-width="1"/>',
    ]
    for i in range(5):
        xv = x_lo + (x_hi - x_lo) * i / 4
        yv = y_lo + (y_hi - y_lo) * i / 4
        out.append(f'<line x1="{_fmt(px(xv))}" y1="{height - mb}" x2="{_fmt(px(xv))}" '
                   f'y2="{height - mb + 4}" stroke="black" stroke-width="1"/>')
        out.append(f'<text x="{_fmt(px(xv))}" y="{height - mb + 18}" font-size="11" '
                   f'text-anchor="middle" font-family="sans-serif">{format(xv, ".4g")}</text>')
        out.append(f'<line x1="{ml - 4}" y1="{_fmt(py(yv))}" x2="{ml}" '
                   f'y2="{_fmt(py(yv))}" stroke="black" stroke-width="1"/>')
        out.append(f'<text x="{ml - 7}" y="{_fmt(py(yv) + 4)}" font-size="11" '
                   f'text-anchor="end" font-family="sans-serif">{format(yv, ".4g")}</text>')
    out.append(f'<text x="{(ml + width - mr) // 2}" y="{height - 10}" font-size="13" '
               f'text-anchor="middle" font-family="sans-serif">{xlabel}</text>')
    out.append(f'<text x="14" y="{(mt + height - mb) // 2}" font-size="13" '
               f'text-anchor="middle" font-family="sans-serif" '
               f'transform="rotate(-90 14 {(mt + height - mb) // 2})">{ylabel}</text>')

    for li, (label, xs, ys) in enumerate(series):
        color = _PALETTE.get(label, "#333333")
        pts = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   'stroke-width="2"/>')
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3" '
                       f'fill="{color}"/>')
        ly = mt + 16 + 16 * li
        out.append(f'<line x1="{width - mr - 130}" y1="{ly - 4}" x2="{width - mr - 104}" '
                   f'y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - mr - 98}" y="{ly}" font-size="12" '
                   f'font-family="sans-serif">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def emit_report(report: EvaluationReport, out_dir, dataset_hash: str | None = None,
                generated_at: str | None = None) -> list:
    """Write CSV tables, SVG charts and the JSON manifest under ``out_dir``.

    Only the manifest carries volatile fields (timestamp, runtimes); the
    CSV/SVG outputs are byte-determined by the report contents.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def path_of(name):
        p = os.path.join(out_dir, name)
        written.append(p)
        return p

    if report.error_vs_budget is not None:
        section = report.error_vs_budget
        rows = []
        for method in sorted(section["methods"]):
            for k in section["budgets"]:
                cell = section["methods"][method][str(k)]
                for c in cell["cells"]:
                    rows.append([method, k, c["seed"], _fmt(c["error_mm"])])
        _write_csv(path_of("error_vs_budget.csv"),
                   ["method", "budget", "seed", "error_mm"], rows)
        series = []
        for method in sorted(section["methods"]):
            xs = [float(k) for k in section["budgets"]]
            ys = [section["methods"][method][str(k)]["mean_mm"] for k in section["budgets"]]
            series.append((method, xs, ys))
        with open(path_of("error_vs_budget.svg"), "w", encoding="utf-8") as fh:
            fh.write(_svg_line_chart(series, "sensor budget", "mean position error [mm]"))

    if report.robustness is not None:
        section = report.robustness
        rows = []
        for method in sorted(section["methods"]):
            for f in section["failure_counts"]:
                cell = section["methods"][method][str(f)]
                for c in cell["cells"]:
                    rows.append([method, f, c["rep"], _fmt(c["error_mm"])])
        _write_csv(path_of("robustness.csv"),
                   ["method", "failures", "repetition", "error_mm"], rows)
        series = []
        for method in sorted(section["methods"]):
            xs = [float(f) for f in section["failure_counts"]]
            ys = [section["methods"][method][str(f)]["mean_mm"]
                  for f in section["failure_counts"]]
            series.append((method, xs, ys))
        with open(path_of("robustness.svg"), "w", encoding="utf-8") as fh:
            fh.write(_svg_line_chart(series, "failed sensors", "mean position error [mm]"))

    if report.force_intervals is not None:
        rows = [
            [_fmt(b["lo_n"]), _fmt(b["hi_n"]), b["count"],
             _fmt(b["position_mean_mm"]), _fmt(b["position_std_mm"]),
             _fmt(b["magnitude_mean_n"]), _fmt(b["magnitude_std_n"])]
            for b in report.force_intervals["bins"]
        ]
        _write_csv(path_of("force_intervals.csv"),
                   ["interval_lo_n", "interval_hi_n", "count",
                    "position_mean_mm", "position_std_mm",
                    "magnitude_mean_n", "magnitude_std_n"], rows)

    manifest = {
        "version": 1,
        "dataset_hash": dataset_hash,
        "generated_at": generated_at,
        "seeds": list(report.seeds),
        "config": report.config,
        "runtime": report.runtime,
        "report": report.to_dict(),
    }
    with open(path_of("manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return written
