"""Report sections: invariants, determinism, and emitted-file properties."""

import filecmp
import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from sparsetouch import evaluation, svr
from sparsetouch.dataset import DeformationDataset, split
from sparsetouch.errors import ValidationError
from sparsetouch.placement import SelectionResult

PARAMS = svr.SvrHyperParams(C=10.0, epsilon=1e-3, gamma=0.5)


def _selection(method, picks_by_budget):
    budgets = sorted(picks_by_budget)
    return SelectionResult(method=method, budgets=budgets,
                           selections=dict(picks_by_budget),
                           scores={k: 0.0 for k in budgets})


@pytest.fixture(scope="module")
def budget_section(small_dataset):
    sels = {
        "greedy_svr": _selection("greedy_svr", {2: [10, 30], 4: [10, 30, 5, 40]}),
        "entropy": _selection("entropy", {2: [0, 47], 4: [0, 47, 20, 27]}),
    }
    return evaluation.error_vs_budget(small_dataset, sels, [2, 4], PARAMS,
                                      seeds=(0, 1))


def test_error_vs_budget_aggregates_cells(budget_section):
    for method, per_budget in budget_section["methods"].items():
        for k, cell in per_budget.items():
            errors = np.array([c["error_mm"] for c in cell["cells"]])
            assert cell["mean_mm"] == pytest.approx(errors.mean(), rel=1e-12)
            assert cell["std_mm"] == pytest.approx(errors.std(), rel=1e-12)
            assert {c["seed"] for c in cell["cells"]} == {0, 1}
            assert np.all(np.isfinite(errors))


def test_error_vs_budget_requires_budget_coverage(small_dataset):
    sels = {"entropy": _selection("entropy", {2: [0, 47]})}
    with pytest.raises(ValidationError):
        evaluation.error_vs_budget(small_dataset, sels, [2, 3], PARAMS, seeds=(0,))


def test_unused_validation_columns_never_leak(small_dataset):
    """Numbers must not depend on trials assigned to the unused middle split."""
    fractions = (0.7, 0.15, 0.15)
    _, val, _ = split(small_dataset.n_trials, fractions, seed=0)
    poisoned_X = small_dataset.X.copy()
    poisoned_X[:, val] += 1e6
    poisoned = DeformationDataset(
        X=poisoned_X, sensor_sites=small_dataset.sensor_sites,
        force_positions=small_dataset.force_positions,
        force_magnitudes=small_dataset.force_magnitudes,
        meta=small_dataset.meta)

    sels = {"mi": _selection("mi", {3: [4, 22, 41]})}
    clean = evaluation.error_vs_budget(small_dataset, sels, [3], PARAMS,
                                       seeds=(0,), fractions=fractions)
    dirty = evaluation.error_vs_budget(poisoned, sels, [3], PARAMS,
                                       seeds=(0,), fractions=fractions)
    assert clean == dirty


# -- sensor-failure robustness ------------------------------------------------


@pytest.fixture(scope="module")
def robustness_section(small_dataset):
    sels = {"greedy_svr": [10, 30, 5, 40], "pca_qr": [0, 47, 20, 27]}
    return evaluation.failure_robustness(small_dataset, sels, PARAMS,
                                         failure_counts=range(4),
                                         repetitions=6, seed=0)


def test_zero_failures_reproduce_the_intact_model(small_dataset, robustness_section):
    sel = [10, 30, 5, 40]
    train, _, test = split(small_dataset.n_trials,
                           evaluation.DEFAULT_SPLIT_FRACTIONS, seed=0)
    from sparsetouch.dataset import standardize
    std_data, _ = standardize(small_dataset, train)
    feats = std_data.X[sel].T
    locator = svr.fit_locator(feats[train], small_dataset.force_positions[train],
                              PARAMS)
    pred = locator.locate(feats[test])
    baseline = float(np.mean(svr.euclidean_error(
        pred, small_dataset.force_positions[test])))

    cell = robustness_section["methods"]["greedy_svr"]["0"]
    assert cell["mean_mm"] == pytest.approx(baseline, rel=1e-12)
    assert cell["std_mm"] < 1e-12  # nothing random happens at f = 0
    assert all(c["error_mm"] == cell["cells"][0]["error_mm"]
               for c in cell["cells"])


def test_failures_hurt_and_patterns_are_paired(small_dataset, robustness_section):
    for method in ("greedy_svr", "pca_qr"):
        per = robustness_section["methods"][method]
        assert per["3"]["mean_mm"] > per["0"]["mean_mm"]

    # identical selections must see identical failure draws
    twin = evaluation.failure_robustness(
        small_dataset, {"entropy": [10, 30, 5, 40], "mi": [10, 30, 5, 40]},
        PARAMS, failure_counts=[2], repetitions=6, seed=0)
    assert (twin["methods"]["entropy"]["2"]["cells"]
            == twin["methods"]["mi"]["2"]["cells"])


def test_robustness_validates_selection_shapes(small_dataset):
    with pytest.raises(ValidationError):
        evaluation.failure_robustness(
            small_dataset, {"a": [0, 1], "b": [0, 1, 2]}, PARAMS,
            failure_counts=[0], repetitions=2)
    with pytest.raises(ValidationError):
        evaluation.failure_robustness(
            small_dataset, {"a": [0, 1]}, PARAMS,
            failure_counts=[3], repetitions=2)


# -- force-interval table -----------------------------------------------------


def test_force_intervals_skip_empty_bins(small_dataset):
    # the fixture only loads at 10 N and 34 N, so of the four default
    # magnitude intervals at most two can be populated
    section = evaluation.force_interval_report(small_dataset, PARAMS,
                                               selection=list(range(12)))
    spans = [(b["lo_n"], b["hi_n"]) for b in section["bins"]]
    assert spans == [(9.8, 19.6), (19.6, 34.3)]
    for b in section["bins"]:
        assert b["count"] > 0
        assert np.isfinite(b["position_mean_mm"])
        assert np.isfinite(b["magnitude_mean_n"])


def test_single_magnitude_dataset_yields_one_bin(small_dataset):
    only34 = np.flatnonzero(small_dataset.force_magnitudes == 34.0)
    data = small_dataset.restrict_trials(only34)
    section = evaluation.force_interval_report(data, PARAMS,
                                               selection=list(range(12)))
    assert [(b["lo_n"], b["hi_n"]) for b in section["bins"]] == [(19.6, 34.3)]
    assert section["bins"][0]["count"] == len(
        split(data.n_trials, evaluation.DEFAULT_SPLIT_FRACTIONS, seed=0)[2])


# -- emission -----------------------------------------------------------------


def _full_report(budget_section, robustness_section):
    return evaluation.EvaluationReport(
        error_vs_budget=budget_section,
        robustness=robustness_section,
        force_intervals={"bins": [
            {"lo_n": 9.8, "hi_n": 19.6, "count": 3, "position_mean_mm": 4.0,
             "position_std_mm": 1.0, "magnitude_mean_n": 0.7,
             "magnitude_std_n": 0.2},
        ]},
        seeds=[0, 1], config={"note": "fixture"})


def test_emission_is_byte_deterministic(tmp_path, budget_section, robustness_section):
    report = _full_report(budget_section, robustness_section)
    a = tmp_path / "a"
    b = tmp_path / "b"
    evaluation.emit_report(report, a, dataset_hash="h", generated_at="t")
    evaluation.emit_report(report, b, dataset_hash="h", generated_at="t")
    names = ["error_vs_budget.csv", "error_vs_budget.svg", "robustness.csv",
             "robustness.svg", "force_intervals.csv", "manifest.json"]
    for name in names:
        assert (a / name).exists()
        assert filecmp.cmp(a / name, b / name, shallow=False), name


def test_emitted_svgs_are_well_formed_xml(tmp_path, budget_section, robustness_section):
    report = _full_report(budget_section, robustness_section)
    evaluation.emit_report(report, tmp_path, dataset_hash="h", generated_at="t")
    for name in ("error_vs_budget.svg", "robustness.svg"):
        root = ET.parse(tmp_path / name).getroot()
        assert root.tag.endswith("svg")
        assert len(list(root)) > 4


def test_csv_rows_match_report_cells(tmp_path, budget_section):
    report = evaluation.EvaluationReport(error_vs_budget=budget_section)
    evaluation.emit_report(report, tmp_path)
    lines = (tmp_path / "error_vs_budget.csv").read_text().splitlines()
    assert lines[0] == "method,budget,seed,error_mm"
    n_cells = sum(len(cell["cells"])
                  for per in budget_section["methods"].values()
                  for cell in per.values())
    assert len(lines) == 1 + n_cells
    # spot-check one row against the section dict
    method, budget, seed, err = lines[1].split(",")
    want = next(c for c in budget_section["methods"][method][budget]["cells"]
                if c["seed"] == int(seed))
    assert float(err) == pytest.approx(want["error_mm"], rel=1e-9)


def test_empty_bins_emit_header_only_csv(tmp_path):
    report = evaluation.EvaluationReport(force_intervals={"bins": []})
    written = evaluation.emit_report(report, tmp_path)
    csv_path = tmp_path / "force_intervals.csv"
    assert str(csv_path) in written
    assert csv_path.read_text().splitlines() == [
        "interval_lo_n,interval_hi_n,count,position_mean_mm,position_std_mm,"
        "magnitude_mean_n,magnitude_std_n"]
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["report"]["force_intervals"] == {"bins": []}
    assert not (tmp_path / "error_vs_budget.csv").exists()


def test_svg_chart_rejects_empty_series():
    with pytest.raises(ValidationError):
        evaluation._svg_line_chart([], "x", "y")


# -- provenance ----------------------------------------------------------------


def test_dataset_fingerprint_tracks_content(small_dataset):
    base = evaluation.dataset_fingerprint(small_dataset)
    assert len(base) == 64 and int(base, 16) >= 0
    assert evaluation.dataset_fingerprint(small_dataset) == base

    bumped_X = small_dataset.X.copy()
    bumped_X[0, 0] += 1e-9
    bumped = DeformationDataset(
        X=bumped_X, sensor_sites=small_dataset.sensor_sites,
        force_positions=small_dataset.force_positions,
        force_magnitudes=small_dataset.force_magnitudes,
        meta=small_dataset.meta)
    assert evaluation.dataset_fingerprint(bumped) != base

    relabeled = DeformationDataset(
        X=small_dataset.X, sensor_sites=small_dataset.sensor_sites,
        force_positions=small_dataset.force_positions,
        force_magnitudes=small_dataset.force_magnitudes,
        meta={**small_dataset.meta, "note": "x"})
    assert evaluation.dataset_fingerprint(relabeled) != base


def test_report_roundtrip(budget_section):
    report = evaluation.EvaluationReport(error_vs_budget=budget_section,
                                         runtime={"s": 1.5}, seeds=[0, 1],
                                         config={"k": "v"})
    again = evaluation.EvaluationReport.from_dict(report.to_dict())
    assert again.to_dict() == report.to_dict()
