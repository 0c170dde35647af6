"""Refitting the empirical coefficients from tuning data.

* The crop-height linear model (H-LM): ``h = intercept + coef_l*sigma_L +
  coef_p*sigma_P`` with reflectivities in dB, fitted by ordinary least
  squares and clamped to [0, 3] m on evaluation.
* The eight adjusted-Dubois constants, fitted by Levenberg-Marquardt on the
  dB-domain squared error over all (record, band) pairs.
* Reflectivity residuals against the model without the wavelength
  correction, summarised per band.
"""

from dataclasses import astuple, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import dubois
from ._kv import float_fields, read_kv, write_kv
from .exceptions import FitError, FormatError, TrainingError
from .lm import LMOptions, levenberg_marquardt
from .soil import dielectric_from_moisture

__all__ = [
    "HeightLmCoeffs",
    "HeightLmFit",
    "HEIGHT_CLAMP",
    "raw_height",
    "estimate_height",
    "fit_height_lm",
    "HeightLinearModel",
    "residual_sigma_dif",
    "residual_summary",
    "dubois_design",
    "dubois_mse",
    "DuboisFit",
    "fit_dubois_constants",
    "read_height_lm",
    "write_height_lm",
    "read_constants",
    "write_constants",
]

HEIGHT_CLAMP = (0.0, 3.0)


@dataclass(frozen=True)
class HeightLmCoeffs:
    intercept: float = 3.119
    coef_l: float = 0.1372
    coef_p: float = 0.1117

    def __post_init__(self):
        if not np.all(np.isfinite(astuple(self))):
            raise FitError("height model coefficients must be finite")


def raw_height(sigma_l_db, sigma_p_db, coeffs=HeightLmCoeffs()):
    """Unclamped H-LM evaluation (metres)."""
    out = (
        coeffs.intercept
        + coeffs.coef_l * np.asarray(sigma_l_db, dtype=float)
        + coeffs.coef_p * np.asarray(sigma_p_db, dtype=float)
    )
    return float(out) if out.ndim == 0 else out


def estimate_height(sigma_l_db, sigma_p_db, coeffs=HeightLmCoeffs(), clamp=HEIGHT_CLAMP):
    """Crop height (m) from L- and P-band reflectivity in dB, clamped to ``clamp``."""
    out = np.clip(raw_height(sigma_l_db, sigma_p_db, coeffs), *clamp)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class HeightLmFit:
    coeffs: HeightLmCoeffs
    rmse: float
    residuals: np.ndarray


def fit_height_lm(sigma_l_db, sigma_p_db, height):
    """Ordinary least squares for ``height ~ 1 + sigma_L + sigma_P``.

    Raises
    ------
    FitError
        With fewer than 3 records or a rank-deficient design.
    """
    sl = np.asarray(sigma_l_db, dtype=float).ravel()
    sp = np.asarray(sigma_p_db, dtype=float).ravel()
    h = np.asarray(height, dtype=float).ravel()
    if not (sl.shape == sp.shape == h.shape):
        raise FitError("sigma_L, sigma_P and height differ in length")
    if sl.size < 3:
        raise FitError("need at least 3 records to fit the height model")
    if not np.all(np.isfinite(np.concatenate([sl, sp, h]))):
        raise FitError("non-finite values in height-model data")
    A = np.column_stack([np.ones_like(sl), sl, sp])
    coef, _, rank, _ = np.linalg.lstsq(A, h, rcond=None)
    if rank < 3:
        raise FitError("rank-deficient design: sigma_L and sigma_P do not vary independently")
    residuals = h - A @ coef
    return HeightLmFit(
        HeightLmCoeffs(*map(float, coef)), float(np.sqrt(np.mean(residuals**2))), residuals
    )


class HeightLinearModel(RegressorMixin, BaseEstimator):
    """H-LM as a scikit-learn regressor; ``X`` columns are ``[sigma_L, sigma_P]`` in dB.

    Parameters
    ----------
    clamp : (float, float) or None, default=(0.0, 3.0)
        Bounds applied to predictions; None disables clamping.
    """

    def __init__(self, clamp=HEIGHT_CLAMP):
        self.clamp = clamp

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if X.shape[1] != 2:
            raise FitError("X must have two columns: sigma_L, sigma_P")
        res = fit_height_lm(X[:, 0], X[:, 1], y)
        self.coeffs_ = res.coeffs
        self.intercept_ = res.coeffs.intercept
        self.coef_ = np.array([res.coeffs.coef_l, res.coeffs.coef_p])
        self.rmse_ = res.rmse
        self.n_features_in_ = 2
        return self

    @classmethod
    def from_coeffs(cls, coeffs=HeightLmCoeffs(), clamp=HEIGHT_CLAMP):
        est = cls(clamp=clamp)
        est.coeffs_ = coeffs
        est.intercept_ = coeffs.intercept
        est.coef_ = np.array([coeffs.coef_l, coeffs.coef_p])
        est.n_features_in_ = 2
        return est

    def predict(self, X):
        check_is_fitted(self, "coeffs_")
        X = check_array(X, dtype=float)
        h = raw_height(X[:, 0], X[:, 1], self.coeffs_)
        return np.clip(h, *self.clamp) if self.clamp is not None else h


def residual_sigma_dif(measured_db, scene, constants=dubois.DEFAULT_CONSTANTS):
    """Measured minus modelled reflectivity (dB), model without ``n_w``."""
    model = dubois.forward_db(
        scene.theta, scene.h_rms, scene.eps, scene.lambda_cm, scene.crop_height,
        constants, wavelength_correction=False,
    )
    out = np.asarray(measured_db, dtype=float) - model
    return float(out) if out.ndim == 0 else out


def _band_observations(records, wavelengths_cm):
    """Stack finite (record, band) pairs into flat arrays."""
    eps = dielectric_from_moisture(records.mv)
    rows = []
    for band, lam in wavelengths_cm.items():
        sig = records.sigma(band)
        ok = np.isfinite(sig)
        rows.append(
            dict(
                band=np.full(ok.sum(), band),
                theta=records.theta[ok],
                h_rms=records.h_rms[ok],
                eps=eps[ok],
                height=records.height[ok],
                lam=np.full(ok.sum(), float(lam)),
                sigma=sig[ok],
            )
        )
    return {k: np.concatenate([r[k] for r in rows]) for k in rows[0]}


def residual_summary(records, constants=dubois.DEFAULT_CONSTANTS, wavelengths_cm=None,
                     wavelength_correction=False):
    """Per-band quartiles of measured minus modelled reflectivity (dB).

    With the default ``wavelength_correction=False`` the spread per band
    shows the trend that ``n_w`` absorbs.
    """
    bands = dict(dubois.BANDS_CM if wavelengths_cm is None else wavelengths_cm)
    obs = _band_observations(records, bands)
    model = dubois.forward_db(
        obs["theta"], obs["h_rms"], obs["eps"], obs["lam"], obs["height"],
        constants, wavelength_correction=wavelength_correction,
    )
    resid = obs["sigma"] - model
    rows = []
    for band, lam in bands.items():
        r = resid[obs["band"] == band]
        if r.size == 0:
            continue
        q = np.percentile(r, [0, 25, 50, 75, 100])
        rows.append(
            dict(band=band, lambda_cm=float(lam), n=int(r.size), min=q[0], q1=q[1],
                 median=q[2], q3=q[3], max=q[4], mean=float(r.mean()))
        )
    return rows


def dubois_design(theta, h_rms, eps, lambda_cm, height):
    """Columns of d(sigma_dB)/d(constant), ordered like :class:`DuboisConstants`.

    The dB model is affine in all eight constants, so this is both the
    Jacobian and the regression design matrix.
    """
    t = np.radians(np.asarray(theta, dtype=float))
    lam = np.asarray(lambda_cm, dtype=float)
    lam_m = lam / 100.0
    g = dubois.normalized_roughness(h_rms, lam) * np.sin(t)
    ones = np.ones_like(t * lam)
    cols = [
        np.log10(g) * ones,                   # a
        np.log10(lam) * ones,                 # b
        np.asarray(eps) * np.tan(t) * ones,   # c
        ones,                                 # d
        np.asarray(height) * ones,            # a0
        ones,                                 # b0
        lam_m**2 * ones,                      # c0
        lam_m * ones,                         # d0
    ]
    return 10.0 * np.column_stack(cols)


def dubois_mse(constants, records, wavelengths_cm=None):
    """Mean squared dB error of the full model over all finite (record, band) pairs."""
    bands = dict(dubois.BANDS_CM if wavelengths_cm is None else wavelengths_cm)
    obs = _band_observations(records, bands)
    model = dubois.forward_db(
        obs["theta"], obs["h_rms"], obs["eps"], obs["lam"], obs["height"], constants
    )
    return float(np.mean((model - obs["sigma"]) ** 2))


@dataclass
class DuboisFit:
    constants: dubois.DuboisConstants
    mse: float
    mse_history: list = field(default_factory=list)
    iterations: int = 0


DUBOIS_LM_OPTIONS = LMOptions(max_iter=200, mse_goal=1e-20)


def fit_dubois_constants(records, init=dubois.DEFAULT_CONSTANTS, wavelengths_cm=None,
                         options=DUBOIS_LM_OPTIONS):
    """Fit the eight constants by LM on the dB-domain squared error.

    ``b``, ``b0``, ``c0`` and ``d0`` (and ``d`` with ``b0``) are not
    separately identifiable from three wavelengths; the damping keeps the
    solution near ``init`` along those directions, and only predictions are
    meaningful there.

    Raises
    ------
    FitError
        If a band has no observations, fewer than two distinct moisture or
        height values are present, or LM stops on the iteration cap. In the
        last case ``exc.best`` holds the best-so-far :class:`DuboisFit`.
    """
    bands = dict(dubois.BANDS_CM if wavelengths_cm is None else wavelengths_cm)
    for band in bands:
        if not np.any(np.isfinite(records.sigma(band))):
            raise FitError(f"no {band}-band observations; all bands are required")
    if np.unique(records.mv).size < 2:
        raise FitError("need at least two distinct moisture values")
    if np.unique(records.height).size < 2:
        raise FitError("need at least two distinct crop heights")

    obs = _band_observations(records, bands)
    design = dubois_design(obs["theta"], obs["h_rms"], obs["eps"], obs["lam"], obs["height"])

    def residual(x):
        c = dubois.DuboisConstants.from_array(x)
        return dubois.forward_db(
            obs["theta"], obs["h_rms"], obs["eps"], obs["lam"], obs["height"], c
        ) - obs["sigma"]

    try:
        res = levenberg_marquardt(residual, lambda x: design, init.to_array(), options)
    except TrainingError as exc:
        raise FitError(str(exc)) from exc
    fit = DuboisFit(
        dubois.DuboisConstants.from_array(res.x), res.mse, list(res.mse_history), res.iterations
    )
    if res.reason == "max_iter":
        raise FitError(f"no convergence after {res.iterations} iterations", best=fit)
    return fit


def write_constants(constants, path):
    write_kv(constants.to_dict(), path)


def read_constants(path):
    kv = read_kv(path)
    names = dubois.DuboisConstants.names()
    unknown = set(kv) - set(names)
    if unknown:
        raise FormatError(f"unknown constants {sorted(unknown)}", path=path)
    return dubois.DuboisConstants(**float_fields(kv, names, path))


def write_height_lm(coeffs, path, rmse=None):
    data = {"intercept": coeffs.intercept, "coef_l": coeffs.coef_l, "coef_p": coeffs.coef_p}
    if rmse is not None:
        data["rmse"] = float(rmse)
    write_kv(data, path)


def read_height_lm(path):
    kv = read_kv(path)
    keys = ("intercept", "coef_l", "coef_p")
    missing = [k for k in keys if k not in kv]
    if missing:
        raise FormatError(f"missing keys {missing}", path=path)
    return HeightLmCoeffs(**float_fields(kv, keys, path))
