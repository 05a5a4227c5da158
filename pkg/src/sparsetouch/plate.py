"""Analytic thin-plate bending surrogate used to synthesize deformation data.

A rectangular, simply supported Kirchhoff plate under a transverse point
load has the classical double-sine series solution

    w(u, v) = (4 P / (pi^4 D a b)) * sum_{m,n} sin(m pi u0/a) sin(n pi v0/b)
                  * sin(m pi u/a) sin(n pi v/b) / ((m/a)^2 + (n/b)^2)^2

with flexural rigidity D = E h^3 / (12 (1 - nu^2)).  Units are mm, N and
MPa throughout, so deflections come out in mm and D in N*mm.

Surface strain along an axis is obtained by term-wise differentiation,
eps = -(h/2) * d^2 w / d axis^2, never by numerical differencing.

Datasets are assembled from the separable structure of the series: the
reduction over the (m, n) modes is a single matrix product between a
sensor-side factor table and a load-side factor table.  The trial axis is
processed in fixed-size chunks so results are bit-identical no matter how
chunks are scheduled across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError

# Fixed chunk width for dataset assembly; constant so that per-entry
# summation is independent of the --jobs setting.
_TRIAL_CHUNK = 512

SIGNALS = ("deflection", "strain_u", "strain_v")


@dataclass(frozen=True)
class PlateSpec:
    """Geometry and material of the simply supported rectangular plate.

    Lengths in mm, Young's modulus in MPa.  ``series_terms`` truncates both
    sum indices of the double-sine series.
    """

    width_a: float = 200.0
    height_b: float = 120.0
    thickness_h: float = 2.0
    youngs_E: float = 2000.0
    poisson_nu: float = 0.35
    series_terms: int = 100

    def __post_init__(self):
        vals = (self.width_a, self.height_b, self.thickness_h, self.youngs_E)
        if not all(math.isfinite(v) and v > 0 for v in vals):
            raise ValidationError(f"plate dimensions and modulus must be finite and positive: {self}")
        if not (0.0 <= self.poisson_nu < 0.5) or not math.isfinite(self.poisson_nu):
            raise ValidationError(f"poisson_nu must lie in [0, 0.5): {self.poisson_nu}")
        if self.series_terms < 1:
            raise ValidationError(f"series_terms must be >= 1: {self.series_terms}")
        if not math.isfinite(self.flexural_rigidity) or self.flexural_rigidity <= 0:
            raise ValidationError("flexural rigidity is not finite and positive")

    @property
    def flexural_rigidity(self) -> float:
        """D = E h^3 / (12 (1 - nu^2)) in N*mm."""
        h = self.thickness_h
        return self.youngs_E * h**3 / (12.0 * (1.0 - self.poisson_nu**2))

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width_a, self.height_b)

    def to_dict(self) -> dict:
        return {
            "width_a": self.width_a,
            "height_b": self.height_b,
            "thickness_h": self.thickness_h,
            "youngs_E": self.youngs_E,
            "poisson_nu": self.poisson_nu,
            "series_terms": self.series_terms,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PlateSpec":
        return cls(**d)


@dataclass(frozen=True)
class SensorSite:
    """A candidate measurement location on the unfolded (flat) surface."""

    u: float
    v: float

    @property
    def uv(self) -> tuple[float, float]:
        return (self.u, self.v)

    @property
    def xyz(self) -> tuple[float, float, float]:
        # The surrogate surface is flat, so the 3D embedding is trivial.
        return (self.u, self.v, 0.0)


@dataclass(frozen=True)
class ForceTrial:
    """One applied point load: position on the surface plus magnitude in N."""

    u: float
    v: float
    magnitude: float = 1.0

    @property
    def position(self) -> tuple[float, float]:
        return (self.u, self.v)


@dataclass(frozen=True)
class SamplingGrid:
    """Sensor sites, force sites and the magnitudes applied at each site.

    Trials are the cross product of force sites and magnitudes, ordered
    site-major.  Force sites must lie strictly inside the plate; loads on
    the boundary would produce an identically zero field and are rejected
    to surface grid-construction mistakes.
    """

    sensor_sites: tuple[tuple[float, float], ...]
    force_sites: tuple[tuple[float, float], ...]
    force_magnitudes: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if not self.sensor_sites or not self.force_sites or not self.force_magnitudes:
            raise ValidationError("sampling grid must have sensor sites, force sites and magnitudes")
        for name, sites in (("sensor_sites", self.sensor_sites), ("force_sites", self.force_sites)):
            if len(set(sites)) != len(sites):
                raise ValidationError(f"{name} contains duplicates")
        if len(set(self.force_magnitudes)) != len(self.force_magnitudes):
            raise ValidationError("force_magnitudes contains duplicates")

    @property
    def n_trials(self) -> int:
        return len(self.force_sites) * len(self.force_magnitudes)

    def trials(self):
        """Yield ForceTrial records in site-major order."""
        for (u, v) in self.force_sites:
            for p in self.force_magnitudes:
                yield ForceTrial(u, v, p)

    def validate_against(self, spec: PlateSpec):
        a, b = spec.width_a, spec.height_b
        for (u, v) in self.sensor_sites:
            if not (0.0 <= u <= a and 0.0 <= v <= b):
                raise ValidationError(f"sensor site ({u}, {v}) outside plate [0,{a}]x[0,{b}]")
        for (u, v) in self.force_sites:
            if not (0.0 < u < a and 0.0 < v < b):
                raise ValidationError(f"force site ({u}, {v}) must lie strictly inside the plate")


def _check_query(spec: PlateSpec, u: float, v: float):
    if not (math.isfinite(u) and math.isfinite(v)):
        raise ValidationError(f"non-finite query point ({u}, {v})")
    if not (0.0 <= u <= spec.width_a and 0.0 <= v <= spec.height_b):
        raise DomainError(f"query ({u}, {v}) outside plate [0,{spec.width_a}]x[0,{spec.height_b}]")


def _check_load(spec: PlateSpec, load: ForceTrial):
    if not all(math.isfinite(x) for x in (load.u, load.v, load.magnitude)):
        raise ValidationError(f"non-finite load {load}")
    if not (0.0 < load.u < spec.width_a and 0.0 < load.v < spec.height_b):
        raise DomainError(f"load at ({load.u}, {load.v}) must lie strictly inside the plate")


def _sine_factors(coords: np.ndarray, length: float, terms: int) -> np.ndarray:
    """sin(m pi x / L) table of shape (len(coords), terms), m = 1..terms.

    Entries are forced to exact zero for coordinates sitting on 0 or L so
    the simply supported boundary condition holds exactly in floating point.
    """
    coords = np.asarray(coords, dtype=float)
    m = np.arange(1, terms + 1, dtype=float)
    table = np.sin(np.pi / length * coords[:, None] * m[None, :])
    on_boundary = (coords == 0.0) | (coords == length)
    if np.any(on_boundary):
        table[on_boundary, :] = 0.0
    return table


def _mode_denominator(spec: PlateSpec) -> np.ndarray:
    """((m/a)^2 + (n/b)^2)^2 table of shape (terms, terms)."""
    t = spec.series_terms
    m = np.arange(1, t + 1, dtype=float)
    ma = (m / spec.width_a) ** 2
    nb = (m / spec.height_b) ** 2
    return (ma[:, None] + nb[None, :]) ** 2


def _load_coefficient(spec: PlateSpec, magnitude: float) -> float:
    return 4.0 * magnitude / (math.pi**4 * spec.flexural_rigidity * spec.width_a * spec.height_b)


def _sensor_mode_table(spec: PlateSpec, sites: np.ndarray, signal: str) -> np.ndarray:
    """Per-site mode factor table of shape (n_sites, terms**2).

    deflection: sin(m pi u/a) sin(n pi v/b)
    strain_u:   (h/2) (m pi/a)^2 sin sin   (from eps = -(h/2) w'' term-wise)
    strain_v:   (h/2) (n pi/b)^2 sin sin
    """
    t = spec.series_terms
    su = _sine_factors(sites[:, 0], spec.width_a, t)
    sv = _sine_factors(sites[:, 1], spec.height_b, t)
    if signal == "strain_u":
        m = np.arange(1, t + 1, dtype=float)
        su = su * (spec.thickness_h / 2.0) * (m * math.pi / spec.width_a) ** 2
    elif signal == "strain_v":
        n = np.arange(1, t + 1, dtype=float)
        sv = sv * (spec.thickness_h / 2.0) * (n * math.pi / spec.height_b) ** 2
    elif signal != "deflection":
        raise ValidationError(f"unknown signal {signal!r}; expected one of {SIGNALS}")
    return (su[:, :, None] * sv[:, None, :]).reshape(len(sites), t * t)


def _load_mode_table(spec: PlateSpec, positions: np.ndarray) -> np.ndarray:
    """Per-load mode factor table (without magnitude), shape (n_loads, terms**2)."""
    t = spec.series_terms
    lu = _sine_factors(positions[:, 0], spec.width_a, t)
    lv = _sine_factors(positions[:, 1], spec.height_b, t)
    denom = _mode_denominator(spec)
    return ((lu[:, :, None] * lv[:, None, :]) / denom[None, :, :]).reshape(len(positions), t * t)


def deflection(spec: PlateSpec, load: ForceTrial, query) -> float:
    """Transverse deflection w (mm) at ``query`` under the point load.

    ``query`` may touch the plate edges (where w vanishes identically);
    the load must lie strictly inside.
    """
    u, v = float(query[0]), float(query[1])
    _check_query(spec, u, v)
    _check_load(spec, load)
    sensor = _sensor_mode_table(spec, np.array([[u, v]]), "deflection")
    modes = _load_mode_table(spec, np.array([[load.u, load.v]]))
    return _load_coefficient(spec, load.magnitude) * float(np.sum(sensor[0] * modes[0]))


def surface_strain(spec: PlateSpec, load: ForceTrial, query, axis: str) -> float:
    """Surface strain eps = -(h/2) d^2w/d(axis)^2 at ``query``, dimensionless.

    The second derivative is taken term-wise on the series, so the result
    is analytic in the truncated model.
    """
    if axis not in ("u", "v"):
        raise ValidationError(f"axis must be 'u' or 'v', got {axis!r}")
    u, v = float(query[0]), float(query[1])
    _check_query(spec, u, v)
    _check_load(spec, load)
    sensor = _sensor_mode_table(spec, np.array([[u, v]]), f"strain_{axis}")
    modes = _load_mode_table(spec, np.array([[load.u, load.v]]))
    return _load_coefficient(spec, load.magnitude) * float(np.sum(sensor[0] * modes[0]))


def generate_dataset(spec: PlateSpec, grid: SamplingGrid, signal: str = "deflection"):
    """Simulate the full readings matrix for every (force site x magnitude) trial.

    Returns a :class:`sparsetouch.dataset.DeformationDataset` whose row i,
    column j holds the chosen signal at sensor i under trial j.  Entries are
    deterministic and independent of chunk scheduling.
    """
    from .dataset import DeformationDataset

    if signal not in SIGNALS:
        raise ValidationError(f"unknown signal {signal!r}; expected one of {SIGNALS}")
    grid.validate_against(spec)

    sites = np.asarray(grid.sensor_sites, dtype=float)
    positions = np.array([(t.u, t.v) for t in grid.trials()], dtype=float)
    magnitudes = np.array([t.magnitude for t in grid.trials()], dtype=float)

    sensor_modes = _sensor_mode_table(spec, sites, signal)
    coef = np.array([_load_coefficient(spec, p) for p in magnitudes])

    n, m = len(sites), len(positions)
    X = np.empty((n, m), dtype=float)
    for start in range(0, m, _TRIAL_CHUNK):
        stop = min(start + _TRIAL_CHUNK, m)
        load_modes = _load_mode_table(spec, positions[start:stop])
        X[:, start:stop] = (sensor_modes @ load_modes.T) * coef[start:stop][None, :]

    meta = {
        "plate": spec.to_dict(),
        "signal": signal,
        "grid": {
            "n_sensor_sites": len(grid.sensor_sites),
            "n_force_sites": len(grid.force_sites),
            "force_magnitudes": list(grid.force_magnitudes),
        },
    }
    return DeformationDataset(
        X=X,
        sensor_sites=sites,
        force_positions=positions,
        force_magnitudes=magnitudes,
        meta=meta,
    )


def default_plate_spec() -> PlateSpec:
    """Desk-scale shell footprint: 200 x 120 mm printed-plastic plate."""
    return PlateSpec()


def rectangular_grid(n_u: int, n_v: int, width: float, height: float) -> tuple[tuple[float, float], ...]:
    """Cell-centered n_u x n_v grid strictly inside (0, width) x (0, height)."""
    if n_u < 1 or n_v < 1:
        raise ValidationError("grid dimensions must be positive")
    us = (np.arange(n_u) + 0.5) * (width / n_u)
    vs = (np.arange(n_v) + 0.5) * (height / n_v)
    return tuple((float(u), float(v)) for v in vs for u in us)


def default_sampling_grid(
    spec: PlateSpec | None = None,
    sensor_shape: tuple[int, int] = (30, 18),
    force_shape: tuple[int, int] = (40, 24),
    magnitudes: tuple[float, ...] = (5.0, 10.0, 20.0, 34.0),
) -> SamplingGrid:
    """Default desk-scale sampling: 540 sensor sites, 960 force sites, 4 magnitudes."""
    spec = spec or default_plate_spec()
    return SamplingGrid(
        sensor_sites=rectangular_grid(*sensor_shape, spec.width_a, spec.height_b),
        force_sites=rectangular_grid(*force_shape, spec.width_a, spec.height_b),
        force_magnitudes=magnitudes,
    )
