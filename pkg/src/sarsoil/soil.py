"""Soil water content conversions.

Gravimetric to volumetric moisture, and the mapping between volumetric
moisture and the real dielectric constant of moist soil. The dielectric
mapping is the Topp cubic for mineral soils; swap ``TOPP_COEFFS`` or pass your
own coefficients to use another empirical polynomial.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .exceptions import DomainError

__all__ = [
    "MoistureSample",
    "TOPP_COEFFS",
    "MV_MAX",
    "volumetric_from_gravimetric",
    "dielectric_from_moisture",
    "moisture_from_dielectric",
]

#: Topp polynomial coefficients, lowest order first.
TOPP_COEFFS = (3.03, 9.3, 146.0, -76.7)

#: Upper bound of the volumetric moisture domain handled by the mixing model.
MV_MAX = 0.5


def volumetric_from_gravimetric(W, rho_a, rho_w=1.0):
    """Volumetric moisture (cm3/cm3) from gravimetric moisture (g/g).

    Parameters
    ----------
    W : float or array_like
        Gravimetric water content, grams of water per gram of dry soil.
    rho_a : float or array_like
        Dry bulk density of the soil, g/cm3.
    rho_w : float or array_like, optional
        Density of water, g/cm3. Defaults to 1.

    Returns
    -------
    float or ndarray
        ``W * rho_a / rho_w``.
    """
    W = np.asarray(W, dtype=float)
    rho_a = np.asarray(rho_a, dtype=float)
    rho_w = np.asarray(rho_w, dtype=float)
    if np.any(W < 0):
        raise DomainError("gravimetric moisture must be >= 0")
    if np.any(rho_a <= 0) or np.any(rho_w <= 0):
        raise DomainError("densities must be > 0")
    out = W * rho_a / rho_w
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MoistureSample:
    """A gravimetric field sample and the volumetric moisture it implies."""

    gravimetric: float
    bulk_density: float
    water_density: float = 1.0

    def __post_init__(self):
        if self.gravimetric < 0 or self.bulk_density < 0:
            raise DomainError("moisture sample fields must be >= 0")
        if self.water_density <= 0:
            raise DomainError("water density must be > 0")

    @property
    def volumetric(self):
        return volumetric_from_gravimetric(
            self.gravimetric, self.bulk_density, self.water_density
        )


def _check_mv(mv):
    mv = np.asarray(mv, dtype=float)
    if np.any(~np.isfinite(mv)) or np.any(mv < 0) or np.any(mv > MV_MAX):
        raise DomainError(f"volumetric moisture must lie in [0, {MV_MAX}]")
    return mv


def dielectric_from_moisture(mv, coeffs=TOPP_COEFFS):
    """Real dielectric constant of soil at volumetric moisture ``mv``.

    Accepts scalars or arrays; ``mv`` must lie in [0, 0.5].
    """
    mv = _check_mv(mv)
    eps = np.polynomial.polynomial.polyval(mv, coeffs)
    return float(eps) if eps.ndim == 0 else eps


def _invert_scalar(eps, coeffs, xtol):
    lo_eps = np.polynomial.polynomial.polyval(0.0, coeffs)
    hi_eps = np.polynomial.polynomial.polyval(MV_MAX, coeffs)
    if not (lo_eps <= eps <= hi_eps):
        raise DomainError(
            f"dielectric constant {eps!r} outside [{lo_eps}, {hi_eps:.6g}]"
        )
    if eps == lo_eps:
        return 0.0
    if eps == hi_eps:
        return MV_MAX

    def f(x):
        return np.polynomial.polynomial.polyval(x, coeffs) - eps

    return bisect(f, 0.0, MV_MAX, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)


def moisture_from_dielectric(eps, coeffs=TOPP_COEFFS, xtol=1e-12):
    """Invert :func:`dielectric_from_moisture` by bisection on [0, 0.5].

    The polynomial is strictly increasing on the domain, so the bracket
    always holds a single root.
    """
    arr = np.asarray(eps, dtype=float)
    if arr.ndim == 0:
        return _invert_scalar(float(arr), coeffs, xtol)
    flat = [_invert_scalar(float(e), coeffs, xtol) for e in arr.ravel()]
    return np.asarray(flat).reshape(arr.shape)
