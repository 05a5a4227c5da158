"""Command-line pipeline: simulate -> filter -> select -> train -> eval.

Each subcommand reads and writes JSON artifacts so every stage can be
inspected or re-run independently.  All outputs embed their fully
resolved configuration; identical inputs and seeds give byte-identical
artifacts (the report manifest additionally carries wall-clock metadata).

Exit codes: 0 success, 1 validation/usage problems, 2 solver convergence
or matrix conditioning failures.  Errors are reported as a single
machine-parsable line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import evaluation, plate, svr
from .dataset import load_dataset, make_folds, save_dataset, split, standardize
from .errors import SparseTouchError, ValidationError
from .evaluation import EvaluationReport
from .filtering import FilterConfig, default_com_radius, filter_pipeline
from .gp import GpKernelParams
from .placement import (SelectionGoal, entropy_select, greedy_svr_select,
                        load_selection, mi_select, pca_qr_select, save_selection)

_METHOD_BY_FLAG = {
    "greedy-svr": "greedy_svr",
    "pca-qr": "pca_qr",
    "entropy": "entropy",
    "mi": "mi",
}

# Pipeline defaults, tuned on the default plate dataset.  Screening inside
# `select` favours a cheap solve (small C); the final locator stages favour
# accuracy.  gamma 0.2 suits the few-sensor feature vectors those stages see;
# training on hundreds of sensors wants a smaller gamma (or --grid-search).
_SELECT_SVR = {"c": 4.0, "eps": 1e-2, "gamma": 0.2, "max_pairs": 200_000}
_FINAL_SVR = {"c": 20.0, "eps": 1e-2, "gamma": 0.2, "max_pairs": 3_000_000}
_DEFAULT_L_SCALE = 0.033
_DEFAULT_L_P = 1.9


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("SPARSETOUCH_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"SPARSETOUCH_SEED must be an integer, got {env!r}")
    return 0


def _parse_shape(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise ValidationError(f"expected a shape like 30x18, got {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ValidationError(f"expected a comma-separated number list, got {text!r}")


def _parse_ints(text: str) -> tuple[int, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValidationError(f"expected integers like 1,3,5 or 0-5, got {text!r}")
    return tuple(out)


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_candidate_file(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return np.asarray(doc["candidates"], dtype=int)


def _position_trials(data, all_magnitudes: bool, n_trials, seed: int):
    """Restrict to the strongest magnitude (default) and subsample trials.

    Position experiments use single-magnitude patterns so the locator is
    not asked to disambiguate load level from geometry; pass
    ``--all-magnitudes`` to keep every trial.
    """
    info = {"all_magnitudes": bool(all_magnitudes)}
    out = data
    if not all_magnitudes:
        strongest = float(np.max(data.force_magnitudes))
        keep = np.flatnonzero(data.force_magnitudes == strongest)
        out = out.restrict_trials(keep)
        info["magnitude"] = strongest
    if n_trials is not None and n_trials < out.n_trials:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(out.n_trials, size=int(n_trials), replace=False))
        out = out.restrict_trials(keep)
        info["subsampled_to"] = int(n_trials)
        info["subsample_seed"] = seed
    info["n_trials"] = int(out.n_trials)
    return out, info


def _svr_params(args) -> svr.SvrHyperParams:
    return svr.SvrHyperParams(C=args.c, epsilon=args.eps, gamma=args.gamma)


def _add_svr_flags(p, defaults, folds=5):
    p.add_argument("--c", type=float, default=defaults["c"],
                   help="SVR complexity trade-off")
    p.add_argument("--eps", type=float, default=defaults["eps"],
                   help="SVR tube half-width (normalized target units)")
    p.add_argument("--gamma", type=float, default=defaults["gamma"],
                   help="RBF sensitivity; lower it for many-sensor inputs")
    p.add_argument("--grid-search", action="store_true",
                   help="cross-validate C/eps/gamma over the built-in grid instead")
    p.add_argument("--folds", type=int, default=folds,
                   help="cross-validation fold count")
    p.add_argument("--max-pairs", type=int, default=defaults["max_pairs"],
                   help="dual solver iteration cap")


def _add_trial_flags(p, trials=None):
    p.add_argument("--all-magnitudes", action="store_true",
                   help="keep every magnitude level (default: strongest only)")
    p.add_argument("--trials", type=int, default=trials,
                   help="subsample this many trials for speed (seeded)")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    spec = plate.PlateSpec(
        width_a=args.width, height_b=args.height, thickness_h=args.thickness,
        youngs_E=args.youngs, poisson_nu=args.poisson, series_terms=args.series_terms,
    )
    grid = plate.default_sampling_grid(
        spec,
        sensor_shape=_parse_shape(args.sensor_grid),
        force_shape=_parse_shape(args.force_grid),
        magnitudes=_parse_floats(args.magnitudes),
    )
    data = plate.generate_dataset(spec, grid, signal=args.signal)
    save_dataset(data, args.out)
    print(f"wrote {args.out}: {data.n_sensors} sensors x {data.n_trials} trials "
          f"({args.signal})")
    return 0


def cmd_filter(args) -> int:
    data = load_dataset(args.input)
    sites = data.sensor_sites
    radius = args.radius if args.radius is not None else default_com_radius(sites)
    config = FilterConfig(k_neighbors=args.knn, com_radius=radius,
                          support_margin=args.margin)
    kept = filter_pipeline(sites, config)
    if kept.size == 0:
        raise ValidationError("no candidate sites survive the filters; relax them")
    _write_json(args.out, {
        "version": 1,
        "config": {"knn": args.knn, "radius": radius, "margin": args.margin,
                   "radius_was_default": args.radius is None},
        "n_sites": int(len(sites)),
        "candidates": [int(i) for i in kept],
    })
    print(f"wrote {args.out}: {kept.size} of {len(sites)} sites feasible")
    return 0


def cmd_select(args) -> int:
    data = load_dataset(args.input)
    seed = _resolve_seed(args.seed)
    cand = (_load_candidate_file(args.candidates) if args.candidates
            else np.arange(data.n_sensors))
    method = _METHOD_BY_FLAG[args.method]
    goal = SelectionGoal(max_budget=args.budget, target_error=args.target_error)

    pos_data, restrict_info = _position_trials(data, args.all_magnitudes,
                                               args.trials, seed)

    if method in ("entropy", "mi"):
        params = GpKernelParams(l_scale=args.l_scale, l_p=args.l_p,
                                beta_inv=args.beta_inv)
        select = entropy_select if method == "entropy" else mi_select
        result = select(data.sensor_sites, cand, params, goal,
                        coord_scale=data.surface_diagonal())
    else:
        std_data, _ = standardize(pos_data, np.arange(pos_data.n_trials))
        if method == "pca_qr":
            result = pca_qr_select(std_data.X, budgets=range(1, args.budget + 1),
                                   candidates=cand)
        else:
            folds = make_folds(pos_data.n_trials, args.folds, seed=seed)
            if args.grid_search:
                feats = std_data.X[cand].T
                params, cv_err = svr.grid_search_cv(feats, pos_data.force_positions,
                                                    folds, max_pairs=args.max_pairs,
                                                    skip_failures=True)
                print(f"grid search: C={params.C} eps={params.epsilon} "
                      f"gamma={params.gamma} (cv {cv_err:.3f} mm)")
            else:
                params = _svr_params(args)
            result = greedy_svr_select(std_data.X, pos_data.force_positions, cand,
                                       goal, folds, params,
                                       max_pairs=args.max_pairs, jobs=args.jobs,
                                       rehearse=args.rehearse_hyperparams)

    result.config["cli"] = {"seed": seed, "restrict": restrict_info,
                            "candidates_file": args.candidates}
    save_selection(result, args.out)
    top = result.selections[result.budgets[-1]]
    print(f"wrote {args.out}: {args.method} budgets 1..{result.budgets[-1]}, "
          f"final selection {top}")
    return 0


def cmd_train(args) -> int:
    data = load_dataset(args.input)
    seed = _resolve_seed(args.seed)

    if args.sensors:
        sel = list(_parse_ints(args.sensors))
        origin = {"sensors": sel}
    elif args.selection:
        result = load_selection(args.selection)
        budget = args.budget or result.budgets[-1]
        if budget not in result.selections:
            raise ValidationError(
                f"selection file lacks budget {budget}; has {result.budgets}")
        sel = result.selections[budget]
        origin = {"selection_file": args.selection, "budget": budget,
                  "method": result.method}
    elif args.candidates:
        sel = [int(i) for i in _load_candidate_file(args.candidates)]
        origin = {"candidates_file": args.candidates}
    else:
        sel = list(range(data.n_sensors))
        origin = {"all_sensors": True}

    use_data, restrict_info = _position_trials(
        data, args.all_magnitudes or args.magnitude_head, args.trials, seed)

    fractions = (args.train_fraction, 0.0, 1.0 - args.train_fraction)
    train, _, test = split(use_data.n_trials, fractions, seed=seed)
    std_data, stats = standardize(use_data, train)
    feats = std_data.X[np.asarray(sel, dtype=int)].T

    if args.grid_search:
        folds = make_folds(len(train), args.folds, seed=seed)
        params, cv_err = svr.grid_search_cv(feats[train], use_data.force_positions[train],
                                            folds, max_pairs=args.max_pairs)
        print(f"grid search: C={params.C} eps={params.epsilon} gamma={params.gamma} "
              f"(cv {cv_err:.3f} mm)")
    else:
        params = _svr_params(args)

    locator = svr.fit_locator(
        feats[train], use_data.force_positions[train], params,
        magnitudes=use_data.force_magnitudes[train] if args.magnitude_head else None,
        stats=stats, max_pairs=args.max_pairs,
    )
    pred = locator.locate(feats[test])
    test_err = float(np.mean(svr.euclidean_error(pred, use_data.force_positions[test])))

    doc = {
        "version": 1,
        "config": {
            "seed": seed, "fractions": list(fractions), "origin": origin,
            "restrict": restrict_info, "params": params.to_dict(),
            "magnitude_head": bool(args.magnitude_head),
        },
        "selection": [int(i) for i in sel],
        "test_error_mm": test_err,
        "locator": locator.to_dict(),
    }
    _write_json(args.out, doc)
    print(f"wrote {args.out}: test position error {test_err:.3f} mm "
          f"on {len(test)} held-out trials")
    return 0


def _merge_report(out_dir: str, data, update) -> None:
    """Fold new sections into an existing report directory and re-emit."""
    manifest_path = os.path.join(out_dir, "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            report = EvaluationReport.from_dict(json.load(fh)["report"])
    else:
        report = EvaluationReport()
    update(report)
    report.seeds = sorted(set(map(int, report.seeds)))
    evaluation.emit_report(
        report, out_dir,
        dataset_hash=evaluation.dataset_fingerprint(data),
        generated_at=time.strftime("%Y-%m-%dT%H:%M:%S"),
    )


def _load_selections(paths) -> dict:
    out = {}
    for p in paths:
        result = load_selection(p)
        if result.method in out:
            raise ValidationError(f"duplicate selection method {result.method!r}")
        out[result.method] = result
    return out


def cmd_eval(args) -> int:
    data = load_dataset(args.input)
    seed = _resolve_seed(args.seed)
    selections = _load_selections(args.selections)
    budgets = _parse_ints(args.budgets)
    params = _svr_params(args)
    seeds = _parse_ints(args.seeds)
    fractions = (args.train_fraction, 0.0, 1.0 - args.train_fraction)

    pos_data, restrict_info = _position_trials(data, args.all_magnitudes,
                                               args.trials, seed)
    t0 = time.perf_counter()
    section = evaluation.error_vs_budget(pos_data, selections, budgets, params,
                                         seeds=seeds, fractions=fractions,
                                         max_pairs=args.max_pairs)
    section["restrict"] = restrict_info
    budget_s = time.perf_counter() - t0

    intervals_section = None
    n_levels = len(set(np.asarray(data.force_magnitudes).tolist()))
    if args.intervals == "on" or (args.intervals == "auto" and n_levels >= 2):
        # force-vs-error table for the first method's largest-budget set,
        # i.e. the sensor layout one would actually build
        first = selections[sorted(selections)[0]]
        chosen = first.selections[first.budgets[-1]]
        t0 = time.perf_counter()
        intervals_section = evaluation.force_interval_report(
            data, params, selection=chosen, split_seed=seed, fractions=fractions,
            max_pairs=args.max_pairs)
        intervals_section["selection"] = {"method": first.method,
                                          "budget": first.budgets[-1]}
        intervals_s = time.perf_counter() - t0

    def update(report: EvaluationReport):
        report.error_vs_budget = section
        report.runtime["error_vs_budget_s"] = round(budget_s, 3)
        report.seeds = list(report.seeds) + list(seeds)
        report.config["error_vs_budget"] = {"budgets": list(budgets),
                                            "params": params.to_dict()}
        if intervals_section is not None:
            report.force_intervals = intervals_section
            report.runtime["force_intervals_s"] = round(intervals_s, 3)

    _merge_report(args.out_dir, data, update)
    for method in sorted(section["methods"]):
        best = min(section["methods"][method][str(k)]["mean_mm"] for k in budgets)
        print(f"{method}: best mean error {best:.3f} mm over budgets {list(budgets)}")
    print(f"report written to {args.out_dir}")
    return 0


def cmd_robustness(args) -> int:
    data = load_dataset(args.input)
    seed = _resolve_seed(args.seed)
    selections = _load_selections(args.selections)
    params = _svr_params(args)
    failure_counts = _parse_ints(args.failures)
    fractions = (args.train_fraction, 0.0, 1.0 - args.train_fraction)

    pos_data, restrict_info = _position_trials(data, args.all_magnitudes,
                                               args.trials, seed)
    sel_lists = {}
    for method, result in selections.items():
        if args.budget not in result.selections:
            raise ValidationError(
                f"{method} selection lacks budget {args.budget}; has {result.budgets}")
        sel_lists[method] = result.selections[args.budget]

    t0 = time.perf_counter()
    section = evaluation.failure_robustness(
        pos_data, sel_lists, params, failure_counts=failure_counts,
        repetitions=args.reps, seed=seed, split_seed=args.split_seed,
        fractions=fractions, max_pairs=args.max_pairs)
    section["restrict"] = restrict_info
    elapsed = time.perf_counter() - t0

    def update(report: EvaluationReport):
        report.robustness = section
        report.runtime["robustness_s"] = round(elapsed, 3)
        report.seeds = list(report.seeds) + [seed, args.split_seed]
        report.config["robustness"] = {"budget": args.budget,
                                       "failure_counts": list(failure_counts),
                                       "repetitions": args.reps,
                                       "params": params.to_dict()}

    _merge_report(args.out_dir, data, update)
    lo, hi = min(failure_counts), max(failure_counts)
    for method in sorted(section["methods"]):
        base = section["methods"][method][str(lo)]["mean_mm"]
        worst = section["methods"][method][str(hi)]["mean_mm"]
        print(f"{method}: {base:.3f} mm at {lo} failures -> {worst:.3f} mm "
              f"at {hi} failures")
    print(f"report written to {args.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="sparsetouch",
                     description="Sparse deformation-sensor placement and "
                                 "contact-force localization toolkit")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic plate dataset")
    p.add_argument("--out", required=True, help="output dataset JSON path")
    p.add_argument("--width", type=float, default=200.0, help="plate width (mm)")
    p.add_argument("--height", type=float, default=120.0, help="plate height (mm)")
    p.add_argument("--thickness", type=float, default=2.0, help="plate thickness (mm)")
    p.add_argument("--youngs", type=float, default=2000.0, help="Young's modulus (MPa)")
    p.add_argument("--poisson", type=float, default=0.35, help="Poisson ratio")
    p.add_argument("--series-terms", type=int, default=100,
                   help="series truncation order")
    p.add_argument("--sensor-grid", default="30x18", help="sensor grid, e.g. 30x18")
    p.add_argument("--force-grid", default="40x24", help="force grid, e.g. 40x24")
    p.add_argument("--magnitudes", default="5,10,20,34",
                   help="comma-separated load magnitudes (N)")
    p.add_argument("--signal", choices=plate.SIGNALS, default="deflection",
                   help="which field the sensors read")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("filter", help="drop infeasible sensor sites")
    p.add_argument("--in", dest="input", required=True, help="dataset JSON path")
    p.add_argument("--out", required=True, help="output candidate JSON path")
    p.add_argument("--knn", type=int, default=8, help="neighborhood size")
    p.add_argument("--radius", type=float, default=None,
                   help="max centroid offset (mm); default 0.15x grid pitch")
    p.add_argument("--margin", type=float, default=10.0,
                   help="support strip width to exclude (mm)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("select", help="choose sensor subsets per budget")
    p.add_argument("--in", dest="input", required=True, help="dataset JSON path")
    p.add_argument("--candidates", default=None, help="candidate JSON from `filter`")
    p.add_argument("--method", required=True, choices=sorted(_METHOD_BY_FLAG),
                   help="selection strategy")
    p.add_argument("--budget", type=int, required=True, help="max sensor count K")
    p.add_argument("--target-error", type=float, default=None,
                   help="stop greedy selection at this cv error (mm)")
    p.add_argument("--out", required=True, help="output selection JSON path")
    p.add_argument("--seed", type=int, default=None,
                   help="seed (default: SPARSETOUCH_SEED or 0)")
    p.add_argument("--jobs", type=int, default=1, help="parallel candidate scoring")
    p.add_argument("--l-scale", type=float, default=_DEFAULT_L_SCALE,
                   help="GP kernel length scale (normalized coords)")
    p.add_argument("--l-p", type=float, default=_DEFAULT_L_P, help="GP kernel exponent")
    p.add_argument("--beta-inv", type=float, default=1e-4, help="GP observation noise")
    p.add_argument("--rehearse-hyperparams", action="store_true",
                   help="re-run the hyperparameter grid search after every "
                        "greedy pick instead of once up front")
    _add_svr_flags(p, _SELECT_SVR, folds=3)
    _add_trial_flags(p, trials=240)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="train a force locator on chosen sensors")
    p.add_argument("--in", dest="input", required=True, help="dataset JSON path")
    p.add_argument("--candidates", default=None, help="candidate JSON from `filter`")
    p.add_argument("--selection", default=None, help="selection JSON from `select`")
    p.add_argument("--budget", type=int, default=None,
                   help="budget to take from the selection file")
    p.add_argument("--sensors", default=None,
                   help="explicit sensor indices, e.g. 12,40,77")
    p.add_argument("--magnitude-head", action="store_true",
                   help="also regress the force magnitude (keeps all magnitudes)")
    p.add_argument("--train-fraction", type=float, default=0.85,
                   help="fraction of trials used for training")
    p.add_argument("--seed", type=int, default=None,
                   help="seed (default: SPARSETOUCH_SEED or 0)")
    p.add_argument("--out", required=True, help="output model JSON path")
    _add_svr_flags(p, _FINAL_SVR)
    _add_trial_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="error-vs-budget (and force-interval) report")
    p.add_argument("--in", dest="input", required=True, help="dataset JSON path")
    p.add_argument("--selections", nargs="+", required=True,
                   help="selection JSON files (one per method)")
    p.add_argument("--budgets", required=True, help="budgets, e.g. 3,5,10")
    p.add_argument("--seeds", default="0,1,2", help="split seeds, e.g. 0,1,2")
    p.add_argument("--train-fraction", type=float, default=0.85)
    p.add_argument("--intervals", choices=("auto", "on", "off"), default="auto",
                   help="include the force-interval table, computed on the "
                        "first selection file's largest budget (auto: only "
                        "when the dataset has several load magnitudes)")
    p.add_argument("--seed", type=int, default=None,
                   help="seed (default: SPARSETOUCH_SEED or 0)")
    p.add_argument("--out-dir", required=True, help="report directory")
    _add_svr_flags(p, _FINAL_SVR)
    _add_trial_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("robustness", help="sensor-failure degradation report")
    p.add_argument("--in", dest="input", required=True, help="dataset JSON path")
    p.add_argument("--selections", nargs="+", required=True,
                   help="selection JSON files (one per method)")
    p.add_argument("--budget", type=int, default=10, help="selection budget to test")
    p.add_argument("--failures", default="0-5", help="failure counts, e.g. 0-5")
    p.add_argument("--reps", type=int, default=20, help="random failure draws per count")
    p.add_argument("--split-seed", type=int, default=0, help="train/test split seed")
    p.add_argument("--train-fraction", type=float, default=0.85)
    p.add_argument("--seed", type=int, default=None,
                   help="failure-pattern seed (default: SPARSETOUCH_SEED or 0)")
    p.add_argument("--out-dir", required=True, help="report directory")
    _add_svr_flags(p, _FINAL_SVR)
    _add_trial_flags(p)
    p.set_defaults(func=cmd_robustness)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except SparseTouchError as exc:
        print(f"sparsetouch: error kind={type(exc).__name__} "
              f"exit={exc.exit_code} msg={exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"sparsetouch: error kind=OSError exit=1 msg={exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
