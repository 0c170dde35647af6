"""Adjusted Dubois backscatter model for multiband (P/L/C) co-polarized SAR.

The reflectivity of a soil surface, optionally under a crop canopy, is the
product of five terms::

    sigma0 = f(theta) * g(kh, theta)**a * m(eps, theta) * lambda_cm**b
             * n_H(height) * n_w(lambda_m)

with

* ``f(theta)   = cos(theta)**1.5 / sin(theta)**5``
* ``g(kh, theta) = kh * sin(theta)``, ``kh = 2*pi*h_rms / lambda``
* ``m(eps, theta) = 10**(c * eps * tan(theta) + d)``
* ``n_H(h)     = 10**(a0 * h + b0)``
* ``n_w(lam)   = 10**(c0 * lam**2 + d0 * lam)``

Units
-----
The roughness and power-law wavelength terms take the wavelength in
**centimetres**. The wavelength correction ``n_w`` takes it in **metres**:
with the default ``c0 = -2.4`` and ``d0 = 1.76`` a centimetre argument
gives ``n_w ~ 1e-65`` at C band, while metres give factors between 1.1
and 1.9 peaking near 0.37 m. Every public function here takes
``lambda_cm`` and converts internally.

All angles are in degrees. Functions broadcast over numpy arrays.
"""

from dataclasses import astuple, dataclass, fields, replace
from enum import Enum

import numpy as np

from .exceptions import DomainError

__all__ = [
    "DuboisConstants",
    "SceneParams",
    "Reflectivity",
    "ValidityFlag",
    "BANDS_CM",
    "normalized_roughness",
    "angular_term",
    "roughness_term",
    "moisture_term",
    "height_term",
    "wavelength_term",
    "forward_linear",
    "forward_db",
    "forward_reflectivity",
    "validity_check",
    "db_from_linear",
    "linear_from_db",
]

#: Default band profile, wavelength in cm (P-HH, L-HH, C-VV).
BANDS_CM = {"P": 70.5, "L": 22.8, "C": 5.6}


@dataclass(frozen=True)
class DuboisConstants:
    """The eight fitted coefficients of the adjusted model.

    The zero-order coefficient of the wavelength correction is folded into
    ``b0``, which is why there is no ``e0``.
    """

    a: float = 1.4
    b: float = 0.47
    c: float = 0.014
    d: float = -0.72
    a0: float = 0.42
    b0: float = 0.17
    c0: float = -2.4
    d0: float = 1.76

    # Dubois validity region (advisory).
    MV_VALID_MAX = 0.35
    KH_VALID_MAX = 3.0
    THETA_VALID_MIN = 30.0

    def __post_init__(self):
        if not np.all(np.isfinite(astuple(self))):
            raise DomainError("Dubois constants must be finite")

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]

    def to_array(self):
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values):
        return cls(*(float(v) for v in values))

    def to_dict(self):
        return dict(zip(self.names(), astuple(self)))

    def replace(self, **changes):
        return replace(self, **changes)


DEFAULT_CONSTANTS = DuboisConstants()


@dataclass(frozen=True)
class SceneParams:
    """Inputs of one forward evaluation. Fields may be scalars or arrays."""

    theta: float
    h_rms: float
    eps: float
    lambda_cm: float
    crop_height: float = 0.0

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if np.any(theta <= 0) or np.any(theta >= 90):
            raise DomainError("incidence angle must lie in (0, 90) degrees")
        if np.any(np.asarray(self.h_rms) <= 0):
            raise DomainError("rms roughness must be > 0")
        if np.any(np.asarray(self.lambda_cm) <= 0):
            raise DomainError("wavelength must be > 0")
        if np.any(np.asarray(self.crop_height) < 0):
            raise DomainError("crop height must be >= 0")

    @property
    def kh(self):
        return normalized_roughness(self.h_rms, self.lambda_cm)


@dataclass(frozen=True)
class Reflectivity:
    """Backscatter coefficient held in linear power; dB on demand."""

    linear: float

    def __post_init__(self):
        if np.any(np.asarray(self.linear) <= 0):
            raise DomainError("linear reflectivity must be > 0")

    @property
    def db(self):
        return db_from_linear(self.linear)

    @classmethod
    def from_db(cls, db):
        return cls(linear_from_db(db))


class ValidityFlag(str, Enum):
    MOISTURE_HIGH = "MoistureHigh"
    ROUGHNESS_HIGH = "RoughnessHigh"
    ANGLE_LOW = "AngleLow"


def _f(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def db_from_linear(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("cannot take dB of a non-positive power")
    return _f(10.0 * np.log10(x))


def linear_from_db(x):
    return _f(10.0 ** (np.asarray(x, dtype=float) / 10.0))


def normalized_roughness(h_rms, lambda_cm):
    """``k * h_rms`` with wavenumber ``k = 2*pi/lambda``."""
    h_rms = np.asarray(h_rms, dtype=float)
    lambda_cm = np.asarray(lambda_cm, dtype=float)
    if np.any(h_rms <= 0) or np.any(lambda_cm <= 0):
        raise DomainError("roughness and wavelength must be > 0")
    return _f(2.0 * np.pi / lambda_cm * h_rms)


def angular_term(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0) or np.any(theta > 90):
        raise DomainError("incidence angle must lie in (0, 90] degrees")
    t = np.radians(theta)
    cos = np.where(theta == 90, 0.0, np.cos(t))
    return _f(cos**1.5 / np.sin(t) ** 5)


def roughness_term(h_lambda, theta):
    h_lambda = np.asarray(h_lambda, dtype=float)
    if np.any(h_lambda < 0):
        raise DomainError("normalized roughness must be >= 0")
    return _f(h_lambda * np.sin(np.radians(theta)))


def moisture_term(eps, theta, constants=DEFAULT_CONSTANTS):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0) or np.any(theta >= 90):
        raise DomainError("moisture term needs theta in (0, 90) degrees")
    exponent = constants.c * np.asarray(eps, dtype=float) * np.tan(np.radians(theta))
    return _f(10.0 ** (exponent + constants.d))


def height_term(crop_height, constants=DEFAULT_CONSTANTS):
    h = np.asarray(crop_height, dtype=float)
    if np.any(h < 0):
        raise DomainError("crop height must be >= 0")
    return _f(10.0 ** (constants.a0 * h + constants.b0))


def wavelength_term(lambda_cm, constants=DEFAULT_CONSTANTS):
    lam = np.asarray(lambda_cm, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("wavelength must be > 0")
    lam_m = lam / 100.0
    return _f(10.0 ** (constants.c0 * lam_m**2 + constants.d0 * lam_m))


def forward_linear(
    theta, h_rms, eps, lambda_cm, crop_height=0.0,
    constants=DEFAULT_CONSTANTS, wavelength_correction=True,
):
    """Linear reflectivity of the adjusted model (broadcasting).

    With ``wavelength_correction=False`` the ``n_w`` factor is dropped,
    which is the height-adjusted model used for residual diagnostics.
    """
    scene = SceneParams(theta, h_rms, eps, lambda_cm, crop_height)
    lam = np.asarray(lambda_cm, dtype=float)
    g = roughness_term(scene.kh, theta)
    sigma = (
        angular_term(theta)
        * np.asarray(g) ** constants.a
        * moisture_term(eps, theta, constants)
        * lam**constants.b
        * height_term(crop_height, constants)
    )
    if wavelength_correction:
        sigma = sigma * wavelength_term(lam, constants)
    return _f(sigma)


def forward_db(*args, **kwargs):
    """:func:`forward_linear` expressed in dB."""
    return db_from_linear(forward_linear(*args, **kwargs))


def forward_reflectivity(scene, constants=DEFAULT_CONSTANTS, wavelength_correction=True):
    """Evaluate the model for a :class:`SceneParams`; returns :class:`Reflectivity`."""
    return Reflectivity(
        forward_linear(
            scene.theta, scene.h_rms, scene.eps, scene.lambda_cm,
            scene.crop_height, constants, wavelength_correction,
        )
    )


def validity_check(scene, mv):
    """Flags for conditions outside the Dubois validity region.

    Advisory only. ``scene`` needs scalar ``theta``, ``h_rms`` and
    ``lambda_cm`` (``eps`` is not used).
    """
    flags = []
    if mv >= DuboisConstants.MV_VALID_MAX:
        flags.append(ValidityFlag.MOISTURE_HIGH)
    if normalized_roughness(scene.h_rms, scene.lambda_cm) >= DuboisConstants.KH_VALID_MAX:
        flags.append(ValidityFlag.ROUGHNESS_HIGH)
    if scene.theta <= DuboisConstants.THETA_VALID_MIN:
        flags.append(ValidityFlag.ANGLE_LOW)
    return flags
