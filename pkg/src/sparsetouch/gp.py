"""Gaussian-process model of deformation as a function of sensor location.

The kernel is exponential in the (approximate) geodesic distance between
sites; on the flat plate surrogate the unfolded surface is the plane, so
the geodesic distance is exactly the Euclidean one.  Coordinates are
normalized by a caller-supplied scale (the plate diagonal in the default
pipeline) so that the length-scale hyperparameter is dimensionless.

Posterior moments are always computed through a cached Cholesky factor
of the observation covariance; explicit inverses never appear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import ConditioningError, ValidationError

DEFAULT_BETA_INV = 1e-4
CHOLESKY_JITTER = 1e-8

# module-wide count of posterior variances clamped up to zero (diagnostics)
_VARIANCE_CLAMPS = 0


def variance_clamp_count() -> int:
    """How many posterior variances were clamped from slightly negative to 0."""
    return _VARIANCE_CLAMPS


def geodesic_distance(a, b) -> float:
    """Distance between two unfolded-surface points (Euclidean when flat)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b))


@dataclass(frozen=True)
class GpKernelParams:
    """Exponential-kernel hyperparameters (on normalized coordinates)."""

    l_scale: float
    l_p: float
    beta_inv: float = DEFAULT_BETA_INV

    def __post_init__(self):
        if not (np.isfinite(self.l_scale) and self.l_scale > 0):
            raise ValidationError(f"l_scale must be positive, got {self.l_scale}")
        if not (np.isfinite(self.l_p) and 0 < self.l_p <= 2):
            raise ValidationError(f"l_p must lie in (0, 2], got {self.l_p}")
        if not (np.isfinite(self.beta_inv) and self.beta_inv >= 0):
            raise ValidationError(f"beta_inv must be non-negative, got {self.beta_inv}")

    def to_dict(self) -> dict:
        return {"l_scale": self.l_scale, "l_p": self.l_p, "beta_inv": self.beta_inv}

    @classmethod
    def from_dict(cls, d: dict) -> "GpKernelParams":
        return cls(l_scale=float(d["l_scale"]), l_p=float(d["l_p"]),
                   beta_inv=float(d.get("beta_inv", DEFAULT_BETA_INV)))


def exp_kernel(a, b, params: GpKernelParams) -> float:
    """k(a, b) = exp(-(d(a, b)/l_scale)^l_p) for one pair of points."""
    d = geodesic_distance(a, b)
    return float(np.exp(-((d / params.l_scale) ** params.l_p)))


def exp_kernel_matrix(A, B, params: GpKernelParams) -> np.ndarray:
    """Pairwise kernel between rows of two normalized location arrays."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    sq = (
        (A * A).sum(axis=1)[:, None]
        + (B * B).sum(axis=1)[None, :]
        - 2.0 * (A @ B.T)
    )
    np.maximum(sq, 0.0, out=sq)
    d = np.sqrt(sq)
    return np.exp(-((d / params.l_scale) ** params.l_p))


def cholesky_or_error(M: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, or a conditioning error naming min eigenvalue."""
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        lam = float(np.linalg.eigvalsh(M).min())
        raise ConditioningError(
            f"covariance is not positive definite (min eigenvalue {lam:.3e})",
            min_eigenvalue=lam,
        ) from None


class GpModel:
    """GP over a fixed table of candidate locations.

    Parameters
    ----------
    locations : (n, 2) site coordinates in mm
    params : kernel hyperparameters (length scale on normalized coords)
    coord_scale : normalization length in mm (plate diagonal in the
        pipeline); default is the diagonal of the locations' bounding box
    mu : per-location prior mean (defaults to zeros)
    observed : indices of conditioned sites
    values : observation at each conditioned site; shape (k,) or (k, T)
        for T simultaneous trials

    The observation covariance is k(p_i, p_j) + (beta_inv + jitter) on
    the diagonal, factored once and reused for every query.
    """

    def __init__(self, locations, params: GpKernelParams, coord_scale=None,
                 mu=None, observed=(), values=None):
        locations = np.asarray(locations, dtype=float)
        if locations.ndim != 2 or locations.shape[1] != 2:
            raise ValidationError(f"locations must be (n, 2), got {locations.shape}")
        if coord_scale is None:
            span = locations.max(axis=0) - locations.min(axis=0)
            coord_scale = float(np.hypot(*span)) or 1.0
        if coord_scale <= 0:
            raise ValidationError(f"coord_scale must be positive, got {coord_scale}")

        self.params = params
        self.coord_scale = float(coord_scale)
        self.locations = locations / self.coord_scale
        n = len(locations)
        self.mu = np.zeros(n) if mu is None else np.asarray(mu, dtype=float)
        if self.mu.shape != (n,):
            raise ValidationError(f"mu must have one entry per location, got {self.mu.shape}")

        self.observed = tuple(int(i) for i in observed)
        if len(set(self.observed)) != len(self.observed):
            raise ValidationError("observed indices contain duplicates")
        for i in self.observed:
            if not (0 <= i < n):
                raise ValidationError(f"observed index {i} outside 0..{n - 1}")
        k = len(self.observed)
        if values is None:
            values = np.zeros(k)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape[0] != k:
            raise ValidationError(
                f"values must have one row per observed site, got {self.values.shape}"
            )

        self._noise = params.beta_inv + CHOLESKY_JITTER
        if k:
            pa = self.locations[list(self.observed)]
            sigma = exp_kernel_matrix(pa, pa, params)
            sigma[np.diag_indices(k)] += self._noise
            self._chol = cholesky_or_error(sigma)
        else:
            self._chol = np.zeros((0, 0))

    # -- queries ----------------------------------------------------------

    def _query_index(self, query) -> int:
        if np.isscalar(query) or getattr(query, "ndim", None) == 0:
            idx = int(query)
            if not (0 <= idx < len(self.locations)):
                raise ValidationError(f"query index {idx} outside the location table")
            return idx
        q = np.asarray(query, dtype=float) / self.coord_scale
        d = np.linalg.norm(self.locations - q[None, :], axis=1)
        idx = int(d.argmin())
        if d[idx] > 1e-9:
            raise ValidationError(
                "query location is not in the model's location table; "
                "pass an index or a known site coordinate"
            )
        return idx

    def posterior(self, query):
        """Posterior (mean, variance) at a site index or known location.

        The variance is the latent k(y,y) - k_yA Sigma_AA^-1 k_Ay (no
        observation noise), clamped at zero if it dips below by rounding.
        """
        global _VARIANCE_CLAMPS
        idx = self._query_index(query)
        if not self.observed:
            return float(self.mu[idx]), 1.0

        pa = self.locations[list(self.observed)]
        k_vec = exp_kernel_matrix(pa, self.locations[idx], self.params)[:, 0]
        w = solve_triangular(self._chol, k_vec, lower=True)
        var = 1.0 - float(w @ w)
        if var < 0.0:
            if var < -1e-9:
                raise ConditioningError(
                    f"posterior variance {var:.3e} below the numerical floor",
                    min_eigenvalue=var,
                )
            _VARIANCE_CLAMPS += 1
            var = 0.0

        centered = self.values - self.mu[list(self.observed)].reshape(
            (-1,) + (1,) * (self.values.ndim - 1)
        )
        t = cho_solve((self._chol, True), centered)
        mean = self.mu[idx] + k_vec @ t
        mean = float(mean) if np.ndim(mean) == 0 else np.asarray(mean)
        return mean, var

    def condition_on(self, index: int, value) -> "GpModel":
        """New model with one more observed site (original untouched)."""
        idx = self._query_index(index)
        if idx in self.observed:
            raise ValidationError(f"site {idx} is already observed")
        value = np.asarray(value, dtype=float)
        if self.values.ndim > 1 and value.shape != self.values.shape[1:]:
            raise ValidationError(
                f"value shape {value.shape} does not match stored trials "
                f"{self.values.shape[1:]}"
            )
        model = object.__new__(GpModel)
        model.params = self.params
        model.coord_scale = self.coord_scale
        model.locations = self.locations
        model.mu = self.mu
        model.observed = self.observed + (idx,)
        model.values = np.concatenate((self.values, value[None, ...]))
        model._noise = self._noise

        # extend the Cholesky factor by one row: [L 0; w^T d]
        k = len(self.observed)
        if k == 0:
            model._chol = np.asarray([[np.sqrt(1.0 + self._noise)]])
            return model
        pa = self.locations[list(self.observed)]
        k_vec = exp_kernel_matrix(pa, self.locations[idx], self.params)[:, 0]
        w = solve_triangular(self._chol, k_vec, lower=True)
        d_sq = 1.0 + self._noise - float(w @ w)
        if d_sq <= 0.0:
            raise ConditioningError(
                f"covariance update is not positive definite "
                f"(Schur complement {d_sq:.3e})",
                min_eigenvalue=d_sq,
            )
        chol = np.zeros((k + 1, k + 1))
        chol[:k, :k] = self._chol
        chol[k, :k] = w
        chol[k, k] = np.sqrt(d_sq)
        model._chol = chol
        return model


def gp_posterior(model: GpModel, query):
    """Functional alias for :meth:`GpModel.posterior`."""
    return model.posterior(query)


def gp_grid_search(locations, values, l_scale_grid, l_p_grid, folds,
                   coord_scale=None, beta_inv: float = DEFAULT_BETA_INV) -> GpKernelParams:
    """Cross-validate kernel hyperparameters over sensor locations.

    ``values`` holds readings per location, shape (n,) or (n, T); each
    location's trial mean is treated as its prior mean and the centered
    residuals are scored by Gaussian negative log-likelihood on held-out
    locations (predictive variance includes the observation noise).
    Folds partition locations.  Ties break toward smaller l_scale, then
    smaller l_p.
    """
    locations = np.asarray(locations, dtype=float)
    V = np.asarray(values, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if len(V) != len(locations):
        raise ValidationError("values must have one row per location")
    l_scales = tuple(float(s) for s in l_scale_grid)
    l_ps = tuple(float(p) for p in l_p_grid)
    if not l_scales or not l_ps:
        raise ValidationError("hyperparameter grids must be non-empty")

    mu = V.mean(axis=1)
    centered = V - mu[:, None]

    best = None
    failures = []
    for ls in l_scales:
        for lp in l_ps:
            params = GpKernelParams(l_scale=ls, l_p=lp, beta_inv=beta_inv)
            try:
                nll = _fold_nll(locations, centered, params, folds, coord_scale)
            except ConditioningError as exc:
                failures.append((ls, lp, exc))
                continue
            key = (nll, ls, lp)
            if best is None or key < best[0]:
                best = (key, params)
    if best is None:
        raise ConditioningError(
            "every grid point failed Cholesky factorization",
            min_eigenvalue=min(f[2].min_eigenvalue for f in failures),
        )
    return best[1]


def _fold_nll(locations, centered, params, folds, coord_scale) -> float:
    fold_scores = []
    for f in range(folds.k):
        held = folds.fold_indices(f)
        train = folds.train_indices(f)
        model = GpModel(locations, params, coord_scale=coord_scale,
                        mu=np.zeros(len(locations)),
                        observed=train, values=centered[train])
        total = 0.0
        count = 0
        for idx in held:
            mean, var = model.posterior(int(idx))
            pv = var + params.beta_inv + CHOLESKY_JITTER
            resid = centered[idx] - mean
            total += float(np.sum(0.5 * (np.log(2.0 * np.pi * pv) + resid ** 2 / pv)))
            count += resid.size
        fold_scores.append(total / count)
    return float(np.mean(fold_scores))
