"""Synthetic P/L/C reflectivity datasets drawn from the adjusted Dubois model.

Scene parameters are drawn i.i.d. uniform over their ranges, pushed through
the forward model once per band, and optionally perturbed with independent
Gaussian noise in dB (0.5 dB matches the radiometric accuracy of the
drone-borne sensor the default band profile describes).
"""

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import dubois
from .exceptions import ConfigurationError, FormatError, InputError
from .soil import dielectric_from_moisture

__all__ = [
    "Scenario",
    "RangeSpec",
    "SampleSet",
    "generate",
    "split",
    "to_nn_dataset",
    "read_sampleset",
    "write_sampleset",
    "SAMPLESET_COLUMNS",
    "BARE_FEATURES",
    "VEGETATED_FEATURES",
]

SAMPLESET_COLUMNS = (
    "theta_deg", "h_rms_cm", "height_m", "sigma_p_db", "sigma_l_db", "sigma_c_db", "mv",
)
BARE_FEATURES = ("theta", "h_rms", "height", "sigma_p", "sigma_l", "sigma_c")
VEGETATED_FEATURES = BARE_FEATURES[:5]

_NA = "NA"


class Scenario(str, Enum):
    BARE = "bare"
    VEGETATED = "vegetated"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        if key in ("veg", "vegetated"):
            return cls.VEGETATED
        if key == "bare":
            return cls.BARE
        raise ConfigurationError(f"unknown scenario {value!r} (expected bare or veg)")

    @property
    def n_features(self):
        return 6 if self is Scenario.BARE else 5


@dataclass(frozen=True)
class RangeSpec:
    """Sampling ranges (min, max) for each scene parameter."""

    theta: tuple = (60.0, 65.0)
    mv: tuple = (0.05, 0.45)
    h_rms: tuple = (1.5, 3.5)
    crop_height: tuple = (0.0, 0.5)

    def __post_init__(self):
        for name in ("theta", "mv", "h_rms", "crop_height"):
            lo, hi = getattr(self, name)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ConfigurationError(f"invalid {name} range ({lo}, {hi})")
        if not (0 < self.theta[0] and self.theta[1] < 90):
            raise ConfigurationError("theta range must lie inside (0, 90)")
        if self.mv[0] < 0 or self.mv[1] > 0.5:
            raise ConfigurationError("mv range must lie inside [0, 0.5]")
        if self.h_rms[0] <= 0:
            raise ConfigurationError("h_rms range must be positive")
        if self.crop_height[0] < 0:
            raise ConfigurationError("crop height range must be >= 0")

    @classmethod
    def for_scenario(cls, scenario, **overrides):
        scenario = Scenario.parse(scenario)
        height = (0.0, 0.5) if scenario is Scenario.BARE else (0.5, 3.0)
        return cls(**{"crop_height": height, **overrides})


@dataclass
class SampleSet:
    """Column-oriented table of synthetic or tuning records.

    ``sigma_c`` may contain NaN (written as ``NA``).
    """

    theta: np.ndarray
    h_rms: np.ndarray
    height: np.ndarray
    sigma_p: np.ndarray
    sigma_l: np.ndarray
    sigma_c: np.ndarray
    mv: np.ndarray
    scenario: Scenario = Scenario.BARE
    extra: dict = field(default_factory=dict)

    _COLS = ("theta", "h_rms", "height", "sigma_p", "sigma_l", "sigma_c", "mv")

    def __post_init__(self):
        self.scenario = Scenario.parse(self.scenario)
        n = None
        for name in self._COLS:
            col = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            setattr(self, name, col)
            if n is None:
                n = col.shape[0]
            elif col.shape != (n,):
                raise InputError(f"column {name} has {col.shape[0]} rows, expected {n}")

    def __len__(self):
        return self.theta.shape[0]

    def subset(self, index):
        index = np.asarray(index)
        cols = {name: getattr(self, name)[index] for name in self._COLS}
        extra = {k: np.asarray(v)[index] for k, v in self.extra.items()}
        return SampleSet(**cols, scenario=self.scenario, extra=extra)

    def sigma(self, band):
        """Reflectivity column (dB) for band ``'P'``, ``'L'`` or ``'C'``."""
        return {"P": self.sigma_p, "L": self.sigma_l, "C": self.sigma_c}[band.upper()]

    def equals(self, other):
        return self.scenario == other.scenario and all(
            np.array_equal(getattr(self, c), getattr(other, c), equal_nan=True)
            for c in self._COLS
        )

    @classmethod
    def concat(cls, sets, scenario=None):
        sets = list(sets)
        cols = {c: np.concatenate([getattr(s, c) for s in sets]) for c in cls._COLS}
        return cls(**cols, scenario=scenario or sets[0].scenario)


def generate(
    scenario,
    ranges=None,
    n=10_000,
    seed=None,
    noise_db=0.5,
    constants=dubois.DEFAULT_CONSTANTS,
    wavelengths_cm=None,
):
    """Draw ``n`` synthetic records for ``scenario``.

    Parameters
    ----------
    scenario : Scenario or str
    ranges : RangeSpec, optional
        Defaults to :meth:`RangeSpec.for_scenario`.
    n : int
    seed : int or None
    noise_db : float
        Standard deviation of the additive dB noise, independent per band.
    constants : DuboisConstants
    wavelengths_cm : dict, optional
        Band profile ``{"P": ..., "L": ..., "C": ...}`` in cm.

    Returns
    -------
    SampleSet
    """
    scenario = Scenario.parse(scenario)
    ranges = ranges or RangeSpec.for_scenario(scenario)
    if not isinstance(ranges, RangeSpec):
        raise ConfigurationError("ranges must be a RangeSpec")
    if int(n) != n or n <= 0:
        raise ConfigurationError("n must be a positive integer")
    if not noise_db >= 0:
        raise ConfigurationError("noise_db must be >= 0")
    bands = dict(dubois.BANDS_CM if wavelengths_cm is None else wavelengths_cm)
    rng = np.random.default_rng(seed)
    n = int(n)

    theta = rng.uniform(*ranges.theta, size=n)
    mv = rng.uniform(*ranges.mv, size=n)
    h_rms = rng.uniform(*ranges.h_rms, size=n)
    height = rng.uniform(*ranges.crop_height, size=n)
    eps = dielectric_from_moisture(mv)

    sigma = {}
    for band in ("P", "L", "C"):
        clean = dubois.forward_db(theta, h_rms, eps, bands[band], height, constants)
        noise = rng.normal(0.0, noise_db, size=n) if noise_db > 0 else 0.0
        sigma[band] = clean + noise

    return SampleSet(
        theta=theta, h_rms=h_rms, height=height,
        sigma_p=sigma["P"], sigma_l=sigma["L"], sigma_c=sigma["C"],
        mv=mv, scenario=scenario,
    )


def split(samples, fraction=0.8, seed=None):
    """Seeded shuffle into ``(train, holdout)`` of sizes ``floor(n*fraction)`` and the rest."""
    if not 0 < fraction < 1:
        raise ConfigurationError("fraction must lie in (0, 1)")
    n = len(samples)
    perm = np.random.default_rng(seed).permutation(n)
    k = int(math.floor(n * fraction))
    return samples.subset(perm[:k]), samples.subset(perm[k:])


def to_nn_dataset(samples, scenario=None):
    """Network inputs and targets.

    Bare: ``[theta, h_rms, height, sigma_P, sigma_L, sigma_C]``;
    vegetated: the same without ``sigma_C``. Target is ``mv``.
    """
    scenario = samples.scenario if scenario is None else Scenario.parse(scenario)
    if scenario is not samples.scenario:
        raise InputError(
            f"sample set is {samples.scenario.value}, requested {scenario.value} inputs"
        )
    names = BARE_FEATURES if scenario is Scenario.BARE else VEGETATED_FEATURES
    X = np.column_stack([getattr(samples, name) for name in names])
    if not np.all(np.isfinite(X)):
        raise InputError(f"non-finite values in {scenario.value} network inputs")
    return X, samples.mv.copy()


def _fmt(v):
    return _NA if not math.isfinite(v) else repr(float(v))


def write_sampleset(samples, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SAMPLESET_COLUMNS)
        cols = [getattr(samples, c) for c in SampleSet._COLS]
        for row in zip(*cols):
            writer.writerow([_fmt(v) for v in row])


def read_sampleset(path, scenario=None, missing_bands=("C",)):
    """Read a sample CSV.

    ``missing_bands`` lists the bands whose column may hold ``NA``. Extra
    columns (e.g. ``site``, ``date``) are kept in ``SampleSet.extra``.
    When ``scenario`` is None it is inferred: vegetated if any record is at
    or above 0.5 m or the C band is entirely missing.
    """
    path = Path(path)
    allowed_na = {f"sigma_{b.lower()}_db" for b in missing_bands}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError("empty file", 1, path=path) from None
        missing = [c for c in SAMPLESET_COLUMNS if c not in header]
        if missing:
            raise FormatError(f"missing columns {missing}", 1, path=path)
        idx = {c: header.index(c) for c in SAMPLESET_COLUMNS}
        extra_names = [h for h in header if h not in SAMPLESET_COLUMNS]
        data = {c: [] for c in SAMPLESET_COLUMNS}
        extra = {h: [] for h in extra_names}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not t.strip() for t in row):
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"expected {len(header)} fields, found {len(row)}", lineno, path=path
                )
            for c in SAMPLESET_COLUMNS:
                tok = row[idx[c]].strip()
                if tok == _NA:
                    if c not in allowed_na:
                        raise FormatError(f"NA not allowed in {c}", lineno, idx[c] + 1, path)
                    data[c].append(math.nan)
                    continue
                try:
                    data[c].append(float(tok))
                except ValueError:
                    raise FormatError(f"not a number: {tok!r}", lineno, idx[c] + 1, path) from None
            for h in extra_names:
                extra[h].append(row[header.index(h)])
    if not data["mv"]:
        raise FormatError("no records", 2, path=path)
    cols = [np.array(data[c]) for c in SAMPLESET_COLUMNS]
    if scenario is None:
        veg = np.any(cols[2] >= 0.5) or np.all(np.isnan(cols[5]))
        scenario = Scenario.VEGETATED if veg else Scenario.BARE
    return SampleSet(*cols, scenario=scenario, extra={k: np.array(v) for k, v in extra.items()})
