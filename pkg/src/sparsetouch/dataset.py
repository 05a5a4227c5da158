"""Dataset model, standardization and split/fold machinery.

The readings matrix X has one row per sensor site and one column per force
trial.  All operations here are value-semantic: they never mutate their
inputs and are deterministic functions of their arguments and seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError

FORMAT_VERSION = 1

# Rows whose spread over the stats columns falls below this (relative to the
# row mean) are treated as dead channels and standardized to all-zero.
_ZERO_VARIANCE_REL = 1e-12


@dataclass(frozen=True)
class DeformationDataset:
    """Readings of N candidate sensors over M force trials.

    X : (N, M) readings in the units of the generating signal
    sensor_sites : (N, 2) unfolded coordinates in mm
    force_positions : (M, 2) load positions in mm
    force_magnitudes : (M,) load magnitudes in N
    meta : provenance record (generating plate spec, signal, grid summary)
    """

    X: np.ndarray
    sensor_sites: np.ndarray
    force_positions: np.ndarray
    force_magnitudes: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float))
        object.__setattr__(self, "sensor_sites", np.asarray(self.sensor_sites, dtype=float))
        object.__setattr__(self, "force_positions", np.asarray(self.force_positions, dtype=float))
        object.__setattr__(self, "force_magnitudes", np.asarray(self.force_magnitudes, dtype=float))
        n, m = self.X.shape
        if self.sensor_sites.shape != (n, 2):
            raise ValidationError(
                f"sensor_sites shape {self.sensor_sites.shape} does not match {n} readings rows"
            )
        if self.force_positions.shape != (m, 2) or self.force_magnitudes.shape != (m,):
            raise ValidationError(
                f"force trial arrays do not match {m} readings columns"
            )
        if not np.all(np.isfinite(self.X)):
            raise ValidationError("readings matrix contains non-finite entries")

    @property
    def n_sensors(self) -> int:
        return self.X.shape[0]

    @property
    def n_trials(self) -> int:
        return self.X.shape[1]

    def surface_diagonal(self) -> float:
        """Length scale used to normalize coordinates and position errors."""
        plate = self.meta.get("plate") if isinstance(self.meta, dict) else None
        if plate and "width_a" in plate and "height_b" in plate:
            return float(np.hypot(plate["width_a"], plate["height_b"]))
        lo = self.sensor_sites.min(axis=0)
        hi = self.sensor_sites.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def restrict_trials(self, trial_idx) -> "DeformationDataset":
        """New dataset containing only the given trial columns."""
        trial_idx = np.asarray(trial_idx, dtype=int)
        return DeformationDataset(
            X=self.X[:, trial_idx].copy(),
            sensor_sites=self.sensor_sites.copy(),
            force_positions=self.force_positions[trial_idx].copy(),
            force_magnitudes=self.force_magnitudes[trial_idx].copy(),
            meta=dict(self.meta),
        )


@dataclass(frozen=True)
class StandardizationStats:
    """Per-sensor mean and population standard deviation.

    ``zero_variance`` flags channels whose readings were constant over the
    stats columns; those rows standardize to all-zero instead of blowing up.
    """

    mean: np.ndarray
    std: np.ndarray
    zero_variance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=float))
        object.__setattr__(self, "zero_variance", np.asarray(self.zero_variance, dtype=bool))
        if np.any(self.std < 0):
            raise ValidationError("standard deviations must be non-negative")

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Standardize columns of X (N x anything) with these statistics."""
        safe = np.where(self.zero_variance, 1.0, self.std)
        Z = (X - self.mean[:, None]) / safe[:, None]
        Z[self.zero_variance, :] = 0.0
        return Z

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "zero_variance": self.zero_variance.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        return cls(
            mean=np.asarray(d["mean"], dtype=float),
            std=np.asarray(d["std"], dtype=float),
            zero_variance=np.asarray(d["zero_variance"], dtype=bool),
        )


def standardize(data: DeformationDataset, stats_source) -> tuple[DeformationDataset, StandardizationStats]:
    """Standardize every sensor row using statistics from ``stats_source`` columns.

    Statistics are computed only over the given trial subset (normally the
    training split) and applied to all columns, so held-out trials never
    leak into the transform.  Population (divide-by-n) convention.
    """
    src = np.asarray(stats_source, dtype=int)
    if src.size == 0:
        raise ValidationError("stats_source must be a non-empty trial subset")
    sub = data.X[:, src]
    mean = sub.mean(axis=1)
    std = sub.std(axis=1)  # population std
    dead = std <= _ZERO_VARIANCE_REL * np.maximum(1.0, np.abs(mean))
    stats = StandardizationStats(mean=mean, std=std, zero_variance=dead)
    out = replace(data, X=stats.apply(data.X))
    return out, stats


@dataclass(frozen=True)
class FoldPlan:
    """Deterministic k-fold assignment of trials, a pure function of (seed, M, k)."""

    k: int
    assignment: np.ndarray
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "assignment", np.asarray(self.assignment, dtype=int))
        counts = np.bincount(self.assignment, minlength=self.k)
        if len(counts) != self.k or np.any(counts == 0):
            raise ValidationError("every fold must be non-empty")

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "assignment": self.assignment.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        return cls(k=int(d["k"]), assignment=np.asarray(d["assignment"], dtype=int), seed=int(d["seed"]))


def make_folds(n_trials: int, k: int, seed: int = 0) -> FoldPlan:
    """Pseudo-random k-fold partition with fold sizes differing by at most one."""
    if k < 2:
        raise ValidationError(f"fold count must be at least 2, got {k}")
    if k > n_trials:
        raise ValidationError(f"fold count {k} exceeds trial count {n_trials}")
    perm = np.random.default_rng(seed).permutation(n_trials)
    assignment = np.empty(n_trials, dtype=int)
    base, extra = divmod(n_trials, k)
    start = 0
    for fold in range(k):
        size = base + (1 if fold < extra else 0)
        assignment[perm[start:start + size]] = fold
        start += size
    return FoldPlan(k=k, assignment=assignment, seed=seed)


def split(data_or_m, fractions, seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint train/validation/test trial-index sets covering all trials.

    ``fractions`` are three non-negative numbers summing to 1 (tolerance
    1e-9); a zero fraction yields an empty set.  Sizes follow the
    largest-remainder rule so e.g. (0.8, 0.1, 0.1) on 3000 trials gives
    exactly 2400/300/300.  Deterministic in ``seed``.
    """
    m = data_or_m.n_trials if isinstance(data_or_m, DeformationDataset) else int(data_or_m)
    fractions = np.asarray(fractions, dtype=float)
    if fractions.shape != (3,) or np.any(fractions < 0):
        raise ValidationError("fractions must be three non-negative numbers")
    if abs(fractions.sum() - 1.0) > 1e-9:
        raise ValidationError(f"fractions must sum to 1, got {fractions.sum()!r}")

    ideal = fractions * m
    counts = np.floor(ideal).astype(int)
    remainder = ideal - counts
    # Hand out the leftover trials to the largest remainders, ties by index.
    for i in np.lexsort((np.arange(3), -remainder))[: m - counts.sum()]:
        counts[i] += 1

    perm = np.random.default_rng(seed).permutation(m)
    bounds = np.cumsum(counts)
    train = np.sort(perm[: bounds[0]])
    val = np.sort(perm[bounds[0]: bounds[1]])
    test = np.sort(perm[bounds[1]:])
    return train, val, test


def save_dataset(data: DeformationDataset, path):
    """Write the single-document JSON dataset format."""
    doc = {
        "version": FORMAT_VERSION,
        "meta": data.meta,
        "sensor_sites": data.sensor_sites.tolist(),
        "force_trials": [
            {"u": float(u), "v": float(v), "magnitude": float(p)}
            for (u, v), p in zip(data.force_positions, data.force_magnitudes)
        ],
        "X": data.X.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_dataset(path) -> DeformationDataset:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != FORMAT_VERSION:
        raise ValidationError(f"unsupported dataset format version {doc.get('version')!r}")
    trials = doc["force_trials"]
    return DeformationDataset(
        X=np.asarray(doc["X"], dtype=float),
        sensor_sites=np.asarray(doc["sensor_sites"], dtype=float),
        force_positions=np.array([[t["u"], t["v"]] for t in trials], dtype=float),
        force_magnitudes=np.array([t["magnitude"] for t in trials], dtype=float),
        meta=doc.get("meta", {}),
    )
