"""Sensor-selection strategies over the feasible candidate sites.

Four methods produce ordered subsets per budget:

* greedy_svr_select -- wrapper-style greedy forward selection scored by
  cross-validated localization error (data-driven, slow, accurate)
* pca_qr_select -- QR column pivoting of the principal-component
  loadings (data-driven, one-shot per budget)
* entropy_select -- greedy maximum GP posterior variance (model-based,
  purely geometric)
* mi_select -- greedy mutual-information gain via the posterior
  variance ratio (model-based, aware of the unselected remainder D\\A)

All ties break toward the lowest candidate index so runs are
reproducible bit for bit.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import gp, svr
from .errors import ConditioningError, ConvergenceError, ValidationError

log = logging.getLogger("sparsetouch.placement")

METHODS = ("greedy_svr", "pca_qr", "entropy", "mi")

_SINGULAR_SENTINEL = 1e-12
_MI_DENOM_FLOOR = 1e-12


@dataclass(frozen=True)
class SelectionGoal:
    """Budget cap and optional target localization error (mm)."""

    max_budget: int
    target_error: float | None = None

    def __post_init__(self):
        if int(self.max_budget) != self.max_budget or self.max_budget < 1:
            raise ValidationError(f"max_budget must be a positive integer, got {self.max_budget}")
        if self.target_error is not None and not self.target_error > 0:
            raise ValidationError(f"target_error must be positive, got {self.target_error}")


@dataclass
class SelectionResult:
    """Ordered selections per budget plus per-step diagnostics.

    For the greedy methods ``selections[K]`` is a prefix of
    ``selections[K+1]``; the PCA+QR method re-derives each budget and
    offers no prefix guarantee.
    """

    method: str
    budgets: list[int]
    selections: dict[int, list[int]]
    scores: dict[int, float]
    config: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}; valid: {METHODS}")
        for k in self.budgets:
            sel = self.selections[k]
            if len(set(sel)) != len(sel):
                raise ValidationError(f"selection at budget {k} contains duplicates")

    def selection(self, budget: int) -> list[int]:
        return list(self.selections[budget])

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "budgets": list(self.budgets),
            "selections": {str(k): list(map(int, v)) for k, v in self.selections.items()},
            "scores": {str(k): float(v) for k, v in self.scores.items()},
            "config": self.config,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionResult":
        return cls(
            method=d["method"],
            budgets=[int(k) for k in d["budgets"]],
            selections={int(k): [int(i) for i in v] for k, v in d["selections"].items()},
            scores={int(k): float(v) for k, v in d["scores"].items()},
            config=d.get("config", {}),
            seed=d.get("seed"),
        )


def save_selection(result: SelectionResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_selection(path) -> SelectionResult:
    with open(path, "r", encoding="utf-8") as fh:
        return SelectionResult.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Greedy SVR (wrapper method)


def greedy_svr_select(X_std, positions, candidates, goal: SelectionGoal, folds,
                      params: svr.SvrHyperParams,
                      tol: float = svr.DEFAULT_KKT_TOL,
                      max_pairs: int = svr.DEFAULT_MAX_PAIRS,
                      jobs: int = 1, rehearse: bool = False) -> SelectionResult:
    """Forward selection by cross-validated localization error.

    ``X_std`` is the standardized (sensors, trials) matrix; candidate
    row indices come from the feasibility filter.  At every step the
    candidate whose addition gives the lowest mean-fold position RMSE is
    appended (ties toward the lower index).  Candidates whose dual solve
    fails to converge are skipped for that step and logged.  Stops early
    once ``goal.target_error`` (mm) is reached, when set.

    Screening normally keeps the hyperparameters fixed for every subset;
    ``rehearse=True`` re-runs the grid search on the selected subset after
    each pick, so later steps screen with parameters tuned to the current
    feature count (slower, mostly useful at small budgets).
    """
    X = np.asarray(X_std, dtype=float)
    P = np.asarray(positions, dtype=float)
    cand = [int(c) for c in candidates]
    if not cand:
        raise ValidationError("candidate set is empty")
    if len(set(cand)) != len(cand):
        raise ValidationError("candidate set contains duplicates")
    if goal.max_budget > len(cand):
        raise ValidationError(
            f"budget {goal.max_budget} exceeds the {len(cand)} candidates"
        )
    m = X.shape[1]
    if P.shape != (m, 2):
        raise ValidationError(f"positions must be ({m}, 2), got {P.shape}")

    # squared feature distances accumulate one sensor at a time:
    # D2(S + m) = D2(S) + (x_m - x_m^T)^2, so each candidate evaluation
    # costs one rank-1 distance update plus the kernel exp.
    d2_base = np.zeros((m, m))
    selected: list[int] = []
    selections: dict[int, list[int]] = {}
    scores: dict[int, float] = {}
    skipped: list[dict] = []
    step_params = params
    rehearsed: dict[int, dict] = {}

    def eval_candidate(c: int, pr: svr.SvrHyperParams) -> tuple[float, int]:
        row = X[c]
        diff = row[:, None] - row[None, :]
        K = np.exp(-pr.gamma * (d2_base + diff * diff))
        err = svr.cv_position_error(None, P, pr, folds, tol=tol,
                                    max_pairs=max_pairs, gram=K)
        return err, c

    budgets = []
    for step in range(goal.max_budget):
        remaining = [c for c in cand if c not in selected]
        results = []
        failures = []
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                futures = {pool.submit(eval_candidate, c, step_params): c
                           for c in remaining}
                for fut, c in futures.items():
                    try:
                        results.append(fut.result())
                    except ConvergenceError as exc:
                        failures.append((c, exc))
        else:
            for c in remaining:
                try:
                    results.append(eval_candidate(c, step_params))
                except ConvergenceError as exc:
                    failures.append((c, exc))
        for c, exc in failures:
            log.warning("budget %d: candidate %d skipped (%s)", step + 1, c, exc)
            skipped.append({"budget": step + 1, "candidate": c, "residual": exc.residual})
        if not results:
            raise ConvergenceError(
                f"every remaining candidate failed to converge at budget {step + 1}",
                residual=None,
            )
        err, best = min(results)
        selected.append(best)
        row = X[best]
        diff = row[:, None] - row[None, :]
        d2_base += diff * diff

        k = step + 1
        budgets.append(k)
        selections[k] = list(selected)
        scores[k] = float(err)
        if goal.target_error is not None and err <= goal.target_error:
            break
        if rehearse and k < goal.max_budget:
            step_params, cv = svr.grid_search_cv(
                X[np.asarray(selected)].T, P, folds, tol=tol,
                max_pairs=max_pairs, skip_failures=True)
            rehearsed[k] = {"params": step_params.to_dict(), "cv_error": cv}

    return SelectionResult(
        method="greedy_svr", budgets=budgets, selections=selections, scores=scores,
        config={
            "params": params.to_dict(),
            "goal": {"max_budget": goal.max_budget, "target_error": goal.target_error},
            "folds": {"k": folds.k, "seed": folds.seed},
            "n_trials": m,
            "skipped": skipped,
            "rehearsed": rehearsed,
        },
        seed=folds.seed,
    )


# ---------------------------------------------------------------------------
# PCA + QR column pivoting


def pca(X) -> tuple[np.ndarray, np.ndarray]:
    """Principal directions of sensor space and their variance spectrum.

    Expects standardized data (rows already centered over trials); no
    internal recentering is applied.  Returns (components, spectrum)
    with orthonormal columns and a non-increasing spectrum.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValidationError("pca needs a 2-D matrix with at least 2 trials")
    if not np.isfinite(X).all():
        raise ValidationError("pca input contains non-finite values")
    if not X.any():
        raise ValidationError("pca input is identically zero")
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    spectrum = (s * s) / X.shape[1]
    return U, spectrum


def qr_column_pivoting(B) -> np.ndarray:
    """Greedy column pivot order: largest residual norm first, ties by index."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.size == 0:
        raise ValidationError("qr_column_pivoting needs a non-empty 2-D matrix")
    work = B.copy()
    n = B.shape[1]
    norms = (work * work).sum(axis=0)
    chosen = np.zeros(n, dtype=bool)
    perm = np.empty(n, dtype=int)
    for step in range(n):
        masked = np.where(chosen, -np.inf, norms)
        pivot = int(masked.argmax())
        perm[step] = pivot
        chosen[pivot] = True
        norm = np.sqrt(max(norms[pivot], 0.0))
        if norm > 0.0:
            q = work[:, pivot] / norm
            proj = q @ work
            proj[chosen] = 0.0
            work -= np.outer(q, proj)
            norms = (work * work).sum(axis=0)
            norms[chosen] = 0.0
    return perm


def condition_number(A) -> float:
    """sigma_max / sigma_min, +inf when the smallest value vanishes."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        raise ValidationError("condition_number needs a non-empty matrix")
    s = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
    if s[-1] < _SINGULAR_SENTINEL * s[0]:
        return float("inf")
    return float(s[0] / s[-1])


def pca_qr_select(X_std, budgets, candidates=None) -> SelectionResult:
    """Per budget i: pivot the top-i component loadings, keep i locations.

    Budgets beyond the numerical rank of the data are dropped (with a
    note in the result config) rather than padded with arbitrary picks.
    """
    X = np.asarray(X_std, dtype=float)
    cand = np.arange(X.shape[0]) if candidates is None else np.asarray(
        sorted(int(c) for c in candidates), dtype=int)
    if cand.size == 0:
        raise ValidationError("candidate set is empty")
    budgets = sorted(int(b) for b in budgets)
    if budgets and budgets[0] < 1:
        raise ValidationError("budgets must be positive")

    components, spectrum = pca(X[cand])
    rank = int((spectrum > _SINGULAR_SENTINEL * spectrum[0]).sum())
    attainable = [b for b in budgets if b <= rank]
    dropped = [b for b in budgets if b > rank]

    selections: dict[int, list[int]] = {}
    scores: dict[int, float] = {}
    for k in attainable:
        psi = components[:, :k]
        perm = qr_column_pivoting(psi.T)
        picked = perm[:k]
        selections[k] = [int(cand[i]) for i in picked]
        scores[k] = condition_number(psi[picked, :])

    config = {"rank": rank, "n_candidates": int(cand.size)}
    if dropped:
        config["dropped_budgets"] = dropped
        log.warning("budgets %s exceed data rank %d and were dropped", dropped, rank)
    return SelectionResult(method="pca_qr", budgets=attainable,
                           selections=selections, scores=scores, config=config)


def cs_reconstruct(readings, components, selected) -> np.ndarray:
    """Estimate the full field from readings at the selected locations.

    Least-squares fit of the top-k component coefficients (exactly
    identified when the reading count equals k), then expansion back to
    every location.  ``readings`` is (m,) or (m, trials).
    """
    psi = np.asarray(components, dtype=float)
    sel = np.asarray(selected, dtype=int)
    R = np.asarray(readings, dtype=float)
    if psi.ndim != 2:
        raise ValidationError("components must be a 2-D (locations, k) matrix")
    k = psi.shape[1]
    if sel.size < k:
        raise ValidationError(f"need at least {k} readings to identify {k} coefficients")
    if R.shape[0] != sel.size:
        raise ValidationError("one reading per selected location is required")
    op = psi[sel, :]
    if not np.isfinite(condition_number(op)):
        raise ConditioningError(
            "sampling operator is numerically singular (condition number sentinel)",
            min_eigenvalue=0.0,
        )
    alpha, *_ = np.linalg.lstsq(op, R, rcond=None)
    return psi @ alpha


def reconstruction_error(estimate, truth) -> float:
    """Relative Frobenius error ||estimate - truth|| / ||truth||."""
    E = np.asarray(estimate, dtype=float)
    T = np.asarray(truth, dtype=float)
    denom = float(np.linalg.norm(T))
    if denom == 0.0:
        raise ValidationError("ground truth is identically zero")
    return float(np.linalg.norm(E - T) / denom)


# ---------------------------------------------------------------------------
# GP-based selectors (purely geometric)


def _normalized_locations(locations, coord_scale):
    locations = np.asarray(locations, dtype=float)
    if locations.ndim != 2 or locations.shape[1] != 2:
        raise ValidationError(f"locations must be (n, 2), got {locations.shape}")
    if coord_scale is None:
        span = locations.max(axis=0) - locations.min(axis=0)
        coord_scale = float(np.hypot(*span)) or 1.0
    return locations / float(coord_scale), float(coord_scale)


def _feasible_indices(feasible, n):
    idx = np.asarray(sorted(int(i) for i in feasible), dtype=int)
    if idx.size == 0:
        raise ValidationError("feasible set is empty")
    if idx[0] < 0 or idx[-1] >= n:
        raise ValidationError("feasible indices outside the location table")
    if len(set(idx.tolist())) != idx.size:
        raise ValidationError("feasible set contains duplicates")
    return idx


def entropy_select(locations, feasible, params: gp.GpKernelParams,
                   goal: SelectionGoal, coord_scale=None) -> SelectionResult:
    """Greedy maximum-posterior-variance placement (ties by index)."""
    locs, scale = _normalized_locations(locations, coord_scale)
    V = _feasible_indices(feasible, len(locs))
    if goal.max_budget > V.size:
        raise ValidationError(f"budget {goal.max_budget} exceeds {V.size} feasible sites")

    K_cond = gp.exp_kernel_matrix(locs, locs, params)
    K_cond[np.diag_indices(len(locs))] += params.beta_inv + gp.CHOLESKY_JITTER

    selected: list[int] = []
    selections: dict[int, list[int]] = {}
    scores: dict[int, float] = {}
    for step in range(goal.max_budget):
        remaining = [int(i) for i in V if i not in selected]
        var = _latent_variances(K_cond, selected, remaining, params)
        pick_pos = int(np.argmax(var))
        pick = remaining[pick_pos]
        selected.append(pick)
        k = step + 1
        selections[k] = list(selected)
        v = max(float(var[pick_pos]), 0.0)
        scores[k] = 0.5 * float(np.log(2.0 * np.pi * np.e * max(v, np.finfo(float).tiny)))
    return SelectionResult(
        method="entropy", budgets=list(range(1, goal.max_budget + 1)),
        selections=selections, scores=scores,
        config={"kernel": params.to_dict(), "coord_scale": scale,
                "n_feasible": int(V.size)},
    )


def _latent_variances(K_noisy, selected, targets, params):
    """sigma^2_{y|selected} for each target; K_noisy has noise on its diagonal."""
    if not selected:
        return np.ones(len(targets))
    sel = list(selected)
    L = gp.cholesky_or_error(K_noisy[np.ix_(sel, sel)])
    cross = K_noisy[np.ix_(sel, targets)].copy()
    # off-diagonal entries carry no noise term, but a target may appear in
    # `selected` complement only, so only true diagonal hits need undoing
    for col, t in enumerate(targets):
        if t in selected:
            cross[sel.index(t), col] -= params.beta_inv + gp.CHOLESKY_JITTER
    W = solve_triangular(L, cross, lower=True)
    return 1.0 - (W * W).sum(axis=0)


def mi_select(locations, feasible, params: gp.GpKernelParams,
              goal: SelectionGoal, coord_scale=None) -> SelectionResult:
    """Greedy mutual-information placement via the variance-ratio rule.

    Picks argmax over feasible y of sigma^2_{y|A} / sigma^2_{y|B(y)}
    with B(y) the unselected remainder of the full location set D
    (feasible or not).  Near-deterministic candidates (denominator under
    1e-12) are skipped with a log message.
    """
    locs, scale = _normalized_locations(locations, coord_scale)
    n = len(locs)
    V = _feasible_indices(feasible, n)
    if goal.max_budget > V.size:
        raise ValidationError(f"budget {goal.max_budget} exceeds {V.size} feasible sites")

    noise = params.beta_inv + gp.CHOLESKY_JITTER
    K_noisy = gp.exp_kernel_matrix(locs, locs, params)
    K_noisy[np.diag_indices(n)] += noise

    selected: list[int] = []
    selections: dict[int, list[int]] = {}
    scores: dict[int, float] = {}
    skipped: list[dict] = []
    for step in range(goal.max_budget):
        remaining_V = [int(i) for i in V if i not in selected]
        S = [i for i in range(n) if i not in selected]  # D \ A
        pos_in_S = {site: r for r, site in enumerate(S)}

        num = _latent_variances(K_noisy, selected, remaining_V, params)

        L = gp.cholesky_or_error(K_noisy[np.ix_(S, S)])
        inv = np.linalg.inv(L)
        prec_diag = (inv * inv).sum(axis=0)  # diag of (K_SS + noise I)^-1
        denom_all = 1.0 / prec_diag - noise  # sigma^2_{y|S \ y} per site in S

        best = None
        for r, y in enumerate(remaining_V):
            den = denom_all[pos_in_S[y]]
            if den < _MI_DENOM_FLOOR:
                skipped.append({"budget": step + 1, "site": y, "denominator": float(den)})
                log.warning("budget %d: site %d nearly deterministic given the rest "
                            "(denominator %.3e), skipped", step + 1, y, den)
                continue
            ratio = max(float(num[r]), 0.0) / float(den)
            if best is None or ratio > best[0]:
                best = (ratio, y)
        if best is None:
            raise ConditioningError(
                f"all candidates at budget {step + 1} are near-deterministic",
                min_eigenvalue=float(denom_all.min()),
            )
        ratio, pick = best
        selected.append(pick)
        k = step + 1
        selections[k] = list(selected)
        scores[k] = float(np.log(max(ratio, np.finfo(float).tiny)))

    return SelectionResult(
        method="mi", budgets=list(range(1, goal.max_budget + 1)),
        selections=selections, scores=scores,
        config={"kernel": params.to_dict(), "coord_scale": scale,
                "n_feasible": int(V.size), "n_total": n, "skipped": skipped},
    )
