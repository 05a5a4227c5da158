"""Epsilon-insensitive support vector regression and the force locator.

The dual problem is solved by pairwise coordinate optimization on the
maximal-KKT-violation pair (see ``_smo_py`` for the reference solver).
A compiled twin of the solver is used when available; set the
environment variable ``SPARSETOUCH_PURE_PYTHON=1`` before import to
force the numpy fallback.

Input features are expected to be standardized sensor readings (rows =
trials).  The :class:`ForceLocator` trains one SVR head per target
(contact u, contact v, optionally magnitude) and rescales targets to a
unit box internally so that one C/epsilon grid is meaningful across
plate geometries; predictions are mapped back to millimetres / newtons.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import ConvergenceError, ValidationError

if os.environ.get("SPARSETOUCH_PURE_PYTHON"):
    from . import _smo_py as _solver

    SOLVER_BACKEND = "python"
else:
    try:
        from . import _smo as _solver

        SOLVER_BACKEND = "compiled"
    except ImportError:  # extension not built
        from . import _smo_py as _solver

        SOLVER_BACKEND = "python"

DEFAULT_KKT_TOL = 1e-5
DEFAULT_MAX_PAIRS = 100_000

DEFAULT_GRID_C = (0.1, 1.0, 10.0, 20.0, 100.0)
DEFAULT_GRID_EPSILON = (1e-6, 1e-4, 1e-2)
DEFAULT_GRID_GAMMA = (2e-4, 2e-3, 2e-2)


def solver_backend() -> str:
    """Name of the active dual-solver backend ('compiled' or 'python')."""
    return SOLVER_BACKEND


@dataclass(frozen=True)
class SvrHyperParams:
    """Regularization C, tube half-width epsilon, RBF sensitivity gamma."""

    C: float
    epsilon: float
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.C) and self.C > 0):
            raise ValidationError(f"C must be positive, got {self.C}")
        if not (np.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValidationError(f"epsilon must be non-negative, got {self.epsilon}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValidationError(f"gamma must be positive, got {self.gamma}")

    def to_dict(self) -> dict:
        return {"C": self.C, "epsilon": self.epsilon, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "SvrHyperParams":
        return cls(C=float(d["C"]), epsilon=float(d["epsilon"]), gamma=float(d["gamma"]))


def default_grid() -> tuple[SvrHyperParams, ...]:
    """The built-in hyperparameter grid (gamma-major for kernel reuse)."""
    return tuple(
        SvrHyperParams(C=c, epsilon=e, gamma=g)
        for g, c, e in product(DEFAULT_GRID_GAMMA, DEFAULT_GRID_C, DEFAULT_GRID_EPSILON)
    )


def rbf_kernel(x1, x2, gamma: float) -> float:
    """exp(-gamma * ||x1 - x2||^2) for a single vector pair."""
    a = np.asarray(x1, dtype=float)
    b = np.asarray(x2, dtype=float)
    if a.shape != b.shape:
        raise ValidationError(
            f"kernel arguments must share a shape, got {a.shape} vs {b.shape}"
        )
    d = a - b
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_kernel_matrix(A, B, gamma: float) -> np.ndarray:
    """Pairwise RBF kernel between the rows of A (n,d) and B (m,d)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValidationError(
            f"kernel arguments must share a feature dimension, "
            f"got {A.shape[1]} vs {B.shape[1]}"
        )
    sq = (
        (A * A).sum(axis=1)[:, None]
        + (B * B).sum(axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass
class SvrModel:
    """A trained single-output SVR: F(x) = sum_j coef_j k(s_j, x) + bias."""

    support_inputs: np.ndarray
    coef: np.ndarray
    bias: float
    params: SvrHyperParams

    @property
    def n_features(self) -> int:
        return self.support_inputs.shape[1]

    def predict(self, x):
        """Evaluate the model; 1-D input -> scalar, 2-D input -> vector."""
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise ValidationError(
                f"query has {X.shape[1]} features, model expects {self.n_features}"
            )
        out = rbf_kernel_matrix(X, self.support_inputs, self.params.gamma) @ self.coef
        out += self.bias
        return float(out[0]) if single else out

    def to_dict(self) -> dict:
        return {
            "support_inputs": self.support_inputs.tolist(),
            "coef": self.coef.tolist(),
            "bias": self.bias,
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvrModel":
        return cls(
            support_inputs=np.asarray(d["support_inputs"], dtype=float),
            coef=np.asarray(d["coef"], dtype=float),
            bias=float(d["bias"]),
            params=SvrHyperParams.from_dict(d["params"]),
        )


@dataclass(frozen=True)
class TrainingObjective:
    """Primal objective decomposition: slack per sample and total loss."""

    slack: np.ndarray
    objective: float


def training_objective(model: SvrModel, targets) -> TrainingObjective:
    """Recompute xi_i = max(0, |F(x_i) - y_i| - eps) and L = ||w||^2/2 + C sum(xi)."""
    y = np.asarray(targets, dtype=float)
    preds = model.predict(model.support_inputs)
    xi = np.maximum(0.0, np.abs(preds - y) - model.params.epsilon)
    K = rbf_kernel_matrix(model.support_inputs, model.support_inputs, model.params.gamma)
    w_norm_sq = float(model.coef @ K @ model.coef)
    return TrainingObjective(slack=xi, objective=0.5 * w_norm_sq + model.params.C * xi.sum())


def _solve_on_gram(K, y, params: SvrHyperParams, tol: float, max_pairs: int):
    """Run the dual solver on a precomputed Gram matrix; raise on no convergence."""
    res = _solver.solve_svr_smo(K, y, params.C, params.epsilon, tol=tol, max_pairs=max_pairs)
    if not res.converged:
        raise ConvergenceError(
            f"dual solver hit the {max_pairs}-pair cap "
            f"(KKT violation {res.kkt_violation:.3e} > tol {tol:.0e})",
            residual=res.kkt_violation,
        )
    return res


def train_svr(inputs, targets, params: SvrHyperParams,
              tol: float = DEFAULT_KKT_TOL,
              max_pairs: int = DEFAULT_MAX_PAIRS) -> SvrModel:
    """Train a single-output epsilon-SVR on rows of ``inputs``.

    Raises a validation error on malformed/non-finite data and a
    convergence error (carrying the residual KKT violation) when the
    iteration cap is reached.
    """
    X = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"inputs must be 2-D (samples x features), got ndim={X.ndim}")
    if y.ndim != 1 or len(y) != len(X):
        raise ValidationError(
            f"targets must be 1-D with one value per input row, "
            f"got {y.shape} for {len(X)} rows"
        )
    if len(X) < 2:
        raise ValidationError("training needs at least 2 samples")
    if not np.isfinite(X).all() or not np.isfinite(y).all():
        raise ValidationError("training data contains non-finite values")

    K = rbf_kernel_matrix(X, X, params.gamma)
    res = _solve_on_gram(K, y, params, tol, max_pairs)
    return SvrModel(support_inputs=X.copy(), coef=res.beta, bias=res.bias, params=params)


def predict(model: SvrModel, x):
    """Functional alias for :meth:`SvrModel.predict`."""
    return model.predict(x)


# ---------------------------------------------------------------------------
# Multi-output locator


def _target_box(positions: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower corner and diagonal of the positions' bounding box (diag >= tiny)."""
    lo = positions.min(axis=0)
    span = positions.max(axis=0) - lo
    diag = float(np.hypot(*span)) if positions.shape[1] == 2 else float(np.linalg.norm(span))
    return lo, diag if diag > 0 else 1.0


@dataclass
class ForceLocator:
    """Per-target SVR bundle mapping a reading vector to contact position.

    ``target_offset``/``target_scale`` hold the training-set position
    box used to normalize targets during training; ``magnitude_scale``
    plays the same role for the optional magnitude head.
    """

    model_u: SvrModel
    model_v: SvrModel
    target_offset: np.ndarray
    target_scale: float
    model_magnitude: SvrModel | None = None
    magnitude_scale: float = 1.0
    stats: object = None  # StandardizationStats the readings must match
    hyperparams: dict = field(default_factory=dict)

    def __post_init__(self):
        dims = {self.model_u.n_features, self.model_v.n_features}
        if self.model_magnitude is not None:
            dims.add(self.model_magnitude.n_features)
        if len(dims) != 1:
            raise ValidationError(f"component models disagree on input dimension: {dims}")

    @property
    def n_features(self) -> int:
        return self.model_u.n_features

    @property
    def has_magnitude(self) -> bool:
        return self.model_magnitude is not None

    def locate(self, readings):
        """Predict contact positions (mm) for one reading vector or a batch."""
        R = np.asarray(readings, dtype=float)
        single = R.ndim == 1
        R = np.atleast_2d(R)
        u = self.model_u.predict(R) * self.target_scale + self.target_offset[0]
        v = self.model_v.predict(R) * self.target_scale + self.target_offset[1]
        pos = np.column_stack((u, v))
        return pos[0] if single else pos

    def magnitude(self, readings):
        if self.model_magnitude is None:
            raise ValidationError("locator was trained without a magnitude head")
        R = np.atleast_2d(np.asarray(readings, dtype=float))
        out = self.model_magnitude.predict(R) * self.magnitude_scale
        return float(out[0]) if np.asarray(readings).ndim == 1 else out

    def to_dict(self) -> dict:
        d = {
            "model_u": self.model_u.to_dict(),
            "model_v": self.model_v.to_dict(),
            "target_offset": [float(t) for t in self.target_offset],
            "target_scale": self.target_scale,
            "magnitude_scale": self.magnitude_scale,
            "hyperparams": dict(self.hyperparams),
        }
        if self.model_magnitude is not None:
            d["model_magnitude"] = self.model_magnitude.to_dict()
        if self.stats is not None and hasattr(self.stats, "to_dict"):
            d["stats"] = self.stats.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ForceLocator":
        from .dataset import StandardizationStats

        return cls(
            model_u=SvrModel.from_dict(d["model_u"]),
            model_v=SvrModel.from_dict(d["model_v"]),
            target_offset=np.asarray(d["target_offset"], dtype=float),
            target_scale=float(d["target_scale"]),
            model_magnitude=(
                SvrModel.from_dict(d["model_magnitude"]) if "model_magnitude" in d else None
            ),
            magnitude_scale=float(d.get("magnitude_scale", 1.0)),
            stats=StandardizationStats.from_dict(d["stats"]) if "stats" in d else None,
            hyperparams=dict(d.get("hyperparams", {})),
        )


def save_locator(locator: ForceLocator, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(locator.to_dict(), fh, indent=1)
        fh.write("\n")


def load_locator(path) -> ForceLocator:
    with open(path, "r", encoding="utf-8") as fh:
        return ForceLocator.from_dict(json.load(fh))


def fit_locator(features, positions, params: SvrHyperParams,
                magnitudes=None, magnitude_params: SvrHyperParams | None = None,
                stats=None, tol: float = DEFAULT_KKT_TOL,
                max_pairs: int = DEFAULT_MAX_PAIRS) -> ForceLocator:
    """Train the position heads (and optional magnitude head) jointly.

    ``features`` is (trials, sensors) standardized readings; ``positions``
    is (trials, 2) in mm.  The Gram matrix is shared across heads with
    identical gamma.
    """
    F = np.asarray(features, dtype=float)
    P = np.asarray(positions, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2 or len(P) != len(F):
        raise ValidationError(
            f"positions must be (trials, 2) matching features, got {P.shape}"
        )
    offset, scale = _target_box(P)
    targets_u = (P[:, 0] - offset[0]) / scale
    targets_v = (P[:, 1] - offset[1]) / scale
    if not np.isfinite(F).all():
        raise ValidationError("training data contains non-finite values")

    K = rbf_kernel_matrix(F, F, params.gamma)
    res_u = _solve_on_gram(K, targets_u, params, tol, max_pairs)
    res_v = _solve_on_gram(K, targets_v, params, tol, max_pairs)
    Xc = F.copy()
    model_u = SvrModel(support_inputs=Xc, coef=res_u.beta, bias=res_u.bias, params=params)
    model_v = SvrModel(support_inputs=Xc, coef=res_v.beta, bias=res_v.bias, params=params)

    model_m = None
    mag_scale = 1.0
    if magnitudes is not None:
        m = np.asarray(magnitudes, dtype=float)
        mparams = magnitude_params or params
        mag_scale = float(np.abs(m).max()) or 1.0
        Km = K if mparams.gamma == params.gamma else rbf_kernel_matrix(F, F, mparams.gamma)
        res_m = _solve_on_gram(Km, m / mag_scale, mparams, tol, max_pairs)
        model_m = SvrModel(support_inputs=Xc, coef=res_m.beta, bias=res_m.bias, params=mparams)

    hp = {"position": params.to_dict()}
    if model_m is not None:
        hp["magnitude"] = (magnitude_params or params).to_dict()
    return ForceLocator(
        model_u=model_u, model_v=model_v,
        target_offset=np.asarray(offset, dtype=float), target_scale=scale,
        model_magnitude=model_m, magnitude_scale=mag_scale,
        stats=stats, hyperparams=hp,
    )


def locate_force(locator: ForceLocator, readings):
    """Predict the contact position (and magnitude if trained) for readings.

    Single reading vector -> (u, v) ndarray, or (u, v, magnitude) when the
    locator has a magnitude head.
    """
    pos = locator.locate(readings)
    if locator.has_magnitude and np.asarray(readings).ndim == 1:
        return np.append(pos, locator.magnitude(readings))
    return pos


def euclidean_error(predicted, truth) -> np.ndarray:
    """Per-row Euclidean distance between predicted and true positions."""
    d = np.atleast_2d(np.asarray(predicted, float)) - np.atleast_2d(np.asarray(truth, float))
    return np.sqrt((d * d).sum(axis=1))


def cv_position_error(features, positions, params: SvrHyperParams, folds,
                      tol: float = DEFAULT_KKT_TOL,
                      max_pairs: int = DEFAULT_MAX_PAIRS,
                      gram: np.ndarray | None = None) -> float:
    """Mean over folds of the validation RMSE of Euclidean position error (mm).

    ``gram`` may carry a precomputed full kernel matrix for ``params.gamma``
    (greedy selection and grid search reuse it across C/epsilon values);
    ``features`` may then be None.
    """
    P = np.asarray(positions, dtype=float)
    if gram is None:
        F = np.asarray(features, dtype=float)
        K = rbf_kernel_matrix(F, F, params.gamma)
    else:
        K = gram

    fold_errors = []
    for f in range(folds.k):
        val = folds.fold_indices(f)
        tr = folds.train_indices(f)
        Ktr = K[np.ix_(tr, tr)]
        Kval = K[np.ix_(val, tr)]
        offset, scale = _target_box(P[tr])
        preds = np.empty((len(val), 2))
        for axis in range(2):
            y = (P[tr, axis] - offset[axis]) / scale
            res = _solve_on_gram(Ktr, y, params, tol, max_pairs)
            preds[:, axis] = (Kval @ res.beta + res.bias) * scale + offset[axis]
        err = euclidean_error(preds, P[val])
        fold_errors.append(float(np.sqrt(np.mean(err ** 2))))
    return float(np.mean(fold_errors))


def grid_search_cv(features, positions, folds, grid=None,
                   tol: float = DEFAULT_KKT_TOL,
                   max_pairs: int = DEFAULT_MAX_PAIRS,
                   skip_failures: bool = False) -> tuple[SvrHyperParams, float]:
    """Pick the grid point with minimal mean-fold position RMSE.

    Exact ties break toward smaller C, then smaller gamma, then smaller
    epsilon.  Returns (best params, its cv error in mm).  Convergence
    failures normally propagate; with ``skip_failures`` the offending grid
    point is dropped instead (everything failing still raises).
    """
    candidates = tuple(grid) if grid is not None else default_grid()
    if not candidates:
        raise ValidationError("hyperparameter grid is empty")

    F = np.asarray(features, dtype=float)
    P = np.asarray(positions, dtype=float)

    best = None
    last_failure = None
    gram_cache: tuple[float, np.ndarray] | None = None
    for params in candidates:
        if gram_cache is None or gram_cache[0] != params.gamma:
            gram_cache = (params.gamma, rbf_kernel_matrix(F, F, params.gamma))
        try:
            err = cv_position_error(F, P, params, folds, tol=tol, max_pairs=max_pairs,
                                    gram=gram_cache[1])
        except ConvergenceError as exc:
            if not skip_failures:
                raise
            last_failure = exc
            continue
        key = (err, params.C, params.gamma, params.epsilon)
        if best is None or key < best[0]:
            best = (key, params, err)
    if best is None:
        raise ConvergenceError(
            "every grid point failed to converge", residual=last_failure.residual
        )
    return best[1], best[2]
