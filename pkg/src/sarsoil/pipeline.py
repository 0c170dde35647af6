"""Per-point and per-raster soil moisture retrieval.

For every pixel the crop height is first estimated from the P and L bands
with the linear height model. Below the height threshold the bare-soil
network is used with inputs ``[theta, h_rms, height, sigma_P, sigma_L,
sigma_C]``; at or above it the vegetated network with ``[theta, h_rms,
height, sigma_P, sigma_L]`` (the C band saturates under canopy and is not
used). The height fed to the networks is the clamped estimate. Retrieved
moisture is clamped to [0, 0.5].
"""

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import dubois
from ._kv import float_fields, read_kv, write_kv
from .calibration import (
    HEIGHT_CLAMP,
    HeightLmCoeffs,
    estimate_height,
    fit_height_lm,
    read_constants,
    read_height_lm,
    write_constants,
    write_height_lm,
)
from .exceptions import ConfigurationError, FormatError, InputError
from .mlp import MLPRegressorLM, Mlp, load_mlp, save_mlp
from .raster import Raster, check_same_grid, moving_average
from .synth import SampleSet, Scenario, to_nn_dataset

logger = logging.getLogger(__name__)

__all__ = [
    "Branch",
    "RetrievalModel",
    "PointEstimate",
    "estimate_arrays",
    "estimate_point",
    "estimate_raster",
    "EvaluationReport",
    "evaluate",
    "train_retrieval_model",
    "SoilMoistureRetriever",
    "save_bundle",
    "load_bundle",
    "MV_CLAMP",
    "BUNDLE_VERSION",
]

MV_CLAMP = (0.0, 0.5)
BUNDLE_VERSION = 1


class Branch(IntEnum):
    BARE = 0
    VEGETATED = 1


@dataclass
class RetrievalModel:
    """Everything the retrieval needs: constants, height model, both networks."""

    constants: dubois.DuboisConstants = field(default_factory=dubois.DuboisConstants)
    height_lm: HeightLmCoeffs = field(default_factory=HeightLmCoeffs)
    bnn: Mlp = None
    vnn: Mlp = None
    height_threshold: float = 0.5
    h_rms_default: float = 2.21
    wavelengths_cm: dict = field(default_factory=lambda: dict(dubois.BANDS_CM))

    def __post_init__(self):
        if not HEIGHT_CLAMP[0] < self.height_threshold < HEIGHT_CLAMP[1]:
            raise ConfigurationError("height threshold must lie in (0, 3) m")
        if self.bnn is not None and self.bnn.spec.n_inputs != 6:
            raise ConfigurationError("bare-soil network must take 6 inputs")
        if self.vnn is not None and self.vnn.spec.n_inputs != 5:
            raise ConfigurationError("vegetated network must take 5 inputs")
        if not self.h_rms_default > 0:
            raise ConfigurationError("default roughness must be > 0")

    def check_trained(self):
        if self.bnn is None or self.vnn is None:
            raise ConfigurationError("retrieval model has no trained networks")


@dataclass
class PointEstimate:
    mv: float
    height: float
    branch: Branch
    validity_flags: list = field(default_factory=list)


def estimate_arrays(sigma_p, sigma_l, sigma_c, theta, h_rms, model):
    """Vectorised retrieval over flat arrays.

    ``sigma_c`` may be None or contain NaN; affected bare-branch samples get
    NaN outputs. Returns ``(mv, height, branch)``; ``branch`` holds
    :class:`Branch` values as floats, NaN where the sample was not
    retrievable.
    """
    model.check_trained()
    sp = np.asarray(sigma_p, dtype=float).ravel()
    sl = np.asarray(sigma_l, dtype=float).ravel()
    n = sp.size
    sc = np.full(n, np.nan) if sigma_c is None else np.broadcast_to(
        np.asarray(sigma_c, dtype=float).ravel(), (n,))
    theta = np.broadcast_to(np.asarray(theta, dtype=float).ravel(), (n,))
    h_rms = model.h_rms_default if h_rms is None else h_rms
    h_rms = np.broadcast_to(np.asarray(h_rms, dtype=float).ravel(), (n,))

    mv = np.full(n, np.nan)
    height = np.full(n, np.nan)
    branch = np.full(n, np.nan)

    base_ok = np.isfinite(sp) & np.isfinite(sl) & np.isfinite(theta) & np.isfinite(h_rms)
    h = np.full(n, np.nan)
    h[base_ok] = estimate_height(sl[base_ok], sp[base_ok], model.height_lm)
    veg = base_ok & (h >= model.height_threshold)
    bare = base_ok & (h < model.height_threshold) & np.isfinite(sc)

    if bare.any():
        X = np.column_stack([theta[bare], h_rms[bare], h[bare], sp[bare], sl[bare], sc[bare]])
        mv[bare] = model.bnn.predict(X)
        branch[bare] = Branch.BARE
    if veg.any():
        X = np.column_stack([theta[veg], h_rms[veg], h[veg], sp[veg], sl[veg]])
        mv[veg] = model.vnn.predict(X)
        branch[veg] = Branch.VEGETATED
    done = bare | veg
    height[done] = h[done]
    mv[done] = np.clip(mv[done], *MV_CLAMP)
    return mv, height, branch


def _flags(mv, theta, h_rms, branch, model):
    bands = ("P", "L", "C") if branch is Branch.BARE else ("P", "L")
    flags = []
    for band in bands:
        scene = dubois.SceneParams(theta, h_rms, 1.0, model.wavelengths_cm[band])
        for f in dubois.validity_check(scene, mv):
            if f not in flags:
                flags.append(f)
    return flags


def estimate_point(sigma_p_db, sigma_l_db, sigma_c_db, theta, h_rms=None, model=None):
    """Retrieve moisture for one observation.

    ``sigma_c_db`` may be None when the estimated height puts the sample on
    the vegetated branch.

    Raises
    ------
    InputError
        Non-finite P/L reflectivity, or missing C band on the bare branch.
    ConfigurationError
        The model has no trained networks.
    """
    if model is None:
        raise ConfigurationError("a RetrievalModel is required")
    model.check_trained()
    if not (np.isfinite(sigma_p_db) and np.isfinite(sigma_l_db)):
        raise InputError("P- and L-band reflectivity must be finite")
    h_rms = model.h_rms_default if h_rms is None else h_rms
    sc = np.nan if sigma_c_db is None else sigma_c_db
    mv, height, branch = estimate_arrays(sigma_p_db, sigma_l_db, sc, theta, h_rms, model)
    if np.isnan(branch[0]):
        raise InputError("C-band reflectivity is required on the bare-soil branch")
    branch = Branch(int(branch[0]))
    flags = _flags(float(mv[0]), theta, h_rms, branch, model)
    return PointEstimate(float(mv[0]), float(height[0]), branch, flags)


def _despeckle(raster, window_m):
    # Average in linear power, report back in dB.
    lin = Raster.like(raster, 10.0 ** (raster.masked() / 10.0))
    out = moving_average(lin, window_m)
    return Raster.like(raster, 10.0 * np.log10(out.masked()))


def estimate_raster(sigma_p, sigma_l, sigma_c, theta, h_rms=None, model=None,
                    speckle_window_m=None, nodata=None):
    """Retrieve moisture maps from dB reflectivity rasters.

    Parameters
    ----------
    sigma_p, sigma_l : Raster
    sigma_c : Raster or None
        Without it, pixels on the bare branch become NODATA.
    theta : Raster or float
        Incidence angle in degrees.
    h_rms : float, optional
        Scene roughness (cm); defaults to ``model.h_rms_default``.
    model : RetrievalModel
    speckle_window_m : float, optional
        Moving-average window applied to each reflectivity raster first
        (in linear power).
    nodata : float, optional
        Output NODATA value; defaults to that of ``sigma_l``.

    Returns
    -------
    dict
        ``{"mv": Raster, "height": Raster, "branch": Raster}``; branch
        cells are 0 (bare) or 1 (vegetated).
    """
    if model is None:
        raise ConfigurationError("a RetrievalModel is required")
    theta_r = theta if isinstance(theta, Raster) else None
    check_same_grid({"sigma_l": sigma_l, "sigma_p": sigma_p, "sigma_c": sigma_c, "theta": theta_r})
    if speckle_window_m:
        sigma_p = _despeckle(sigma_p, speckle_window_m)
        sigma_l = _despeckle(sigma_l, speckle_window_m)
        if sigma_c is not None:
            sigma_c = _despeckle(sigma_c, speckle_window_m)
    th = theta_r.masked() if theta_r is not None else float(theta)
    mv, height, branch = estimate_arrays(
        sigma_p.masked(), sigma_l.masked(),
        None if sigma_c is None else sigma_c.masked(), th, h_rms, model,
    )
    shape = sigma_l.values.shape
    nodata = sigma_l.nodata if nodata is None else nodata
    return {
        "mv": Raster.like(sigma_l, mv.reshape(shape), nodata),
        "height": Raster.like(sigma_l, height.reshape(shape), nodata),
        "branch": Raster.like(sigma_l, branch.reshape(shape), nodata),
    }


@dataclass
class EvaluationReport:
    rmse: float
    bias: float
    n: int
    per_branch: dict = field(default_factory=dict)

    def to_text(self):
        lines = [f"n={self.n}", f"rmse={self.rmse:.6f}", f"bias={self.bias:+.6f}"]
        for name, sub in self.per_branch.items():
            lines.append(f"{name}: n={sub.n} rmse={sub.rmse:.6f} bias={sub.bias:+.6f}")
        return "\n".join(lines) + "\n"


def evaluate(estimates, truth, branches=None):
    """RMSE and bias of ``estimates - truth``; pairs with NaN are skipped.

    With ``branches`` (values of :class:`Branch`), sub-reports per branch
    are added under ``"bare"`` and ``"vegetated"``.
    """
    est = np.asarray(estimates, dtype=float).ravel()
    ref = np.asarray(truth, dtype=float).ravel()
    if est.shape != ref.shape:
        raise InputError("estimates and truth differ in length")
    ok = np.isfinite(est) & np.isfinite(ref)
    if not ok.any():
        raise InputError("no valid estimate/truth pairs")
    err = est[ok] - ref[ok]
    report = EvaluationReport(float(np.sqrt(np.mean(err**2))), float(err.mean()), int(ok.sum()))
    if branches is not None:
        br = np.asarray(branches, dtype=float).ravel()
        for b in Branch:
            sel = ok & (br == b)
            if sel.any():
                report.per_branch[b.name.lower()] = evaluate(est[sel], ref[sel])
    return report


def _fit_net(samples, scenario, **mlp_params):
    X, y = to_nn_dataset(samples, scenario)
    return MLPRegressorLM(**mlp_params).fit(X, y)


def train_retrieval_model(bare, vegetated, height_data=None, constants=None,
                          height_threshold=0.5, h_rms_default=2.21, **mlp_params):
    """Train both networks and (optionally) refit the height model.

    Parameters
    ----------
    bare, vegetated : SampleSet
        Training sets for the two networks.
    height_data : SampleSet, optional
        Records for an OLS refit of the height model. When None the
        default coefficients are kept.
    **mlp_params
        Passed to :class:`MLPRegressorLM` (e.g. ``max_iter``, ``random_state``).

    Returns
    -------
    RetrievalModel
    """
    bnn = _fit_net(bare, Scenario.BARE, **mlp_params)
    vnn = _fit_net(vegetated, Scenario.VEGETATED, **mlp_params)
    coeffs = HeightLmCoeffs()
    if height_data is not None:
        coeffs = fit_height_lm(height_data.sigma_l, height_data.sigma_p, height_data.height).coeffs
    return RetrievalModel(
        constants=constants or dubois.DuboisConstants(),
        height_lm=coeffs,
        bnn=bnn.network_,
        vnn=vnn.network_,
        height_threshold=height_threshold,
        h_rms_default=h_rms_default,
    )


class SoilMoistureRetriever(RegressorMixin, BaseEstimator):
    """The complete retrieval as a scikit-learn regressor.

    ``X`` columns are ``[theta, h_rms, sigma_P, sigma_L, sigma_C]``
    (``sigma_C`` may be NaN for vegetated samples); the target is ``mv``.
    ``fit`` also needs the true crop heights: it refits the height model on
    all samples and trains each network on the samples of its branch.

    Parameters
    ----------
    height_threshold : float, default=0.5
    hidden_layer_sizes : tuple, default=(20, 20)
    max_iter : int, default=500
    mse_goal : float, default=1e-6
    refit_height_model : bool, default=True
        When False the default height coefficients are kept.
    random_state : int or None, default=0

    Attributes
    ----------
    model_ : RetrievalModel
    """

    def __init__(self, height_threshold=0.5, hidden_layer_sizes=(20, 20), max_iter=500,
                 mse_goal=1e-6, refit_height_model=True, random_state=0):
        self.height_threshold = height_threshold
        self.hidden_layer_sizes = hidden_layer_sizes
        self.max_iter = max_iter
        self.mse_goal = mse_goal
        self.refit_height_model = refit_height_model
        self.random_state = random_state

    def fit(self, X, y, height=None):
        if height is None:
            raise InputError("fit needs the true crop heights")
        X, y = check_X_y(X, y, dtype=float, ensure_all_finite="allow-nan", y_numeric=True)
        if X.shape[1] != 5:
            raise InputError("X must have columns theta, h_rms, sigma_P, sigma_L, sigma_C")
        height = np.asarray(height, dtype=float).ravel()
        full = SampleSet(X[:, 0], X[:, 1], height, X[:, 2], X[:, 3], X[:, 4], y)
        bare_idx = np.flatnonzero(height < self.height_threshold)
        veg_idx = np.flatnonzero(height >= self.height_threshold)
        if bare_idx.size == 0 or veg_idx.size == 0:
            raise InputError("training data must contain both bare and vegetated samples")
        bare = full.subset(bare_idx)
        veg = full.subset(veg_idx)
        veg.scenario = Scenario.VEGETATED
        self.model_ = train_retrieval_model(
            bare, veg,
            height_data=full if self.refit_height_model else None,
            height_threshold=self.height_threshold,
            h_rms_default=float(np.median(X[:, 1])),
            hidden_layer_sizes=self.hidden_layer_sizes,
            max_iter=self.max_iter,
            mse_goal=self.mse_goal,
            random_state=self.random_state,
        )
        self.n_features_in_ = 5
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float, ensure_all_finite="allow-nan")
        mv, _, _ = estimate_arrays(X[:, 2], X[:, 3], X[:, 4], X[:, 0], X[:, 1], self.model_)
        return mv

    def predict_height(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float, ensure_all_finite="allow-nan")
        return estimate_height(X[:, 3], X[:, 2], self.model_.height_lm)


def save_bundle(model, directory):
    """Write a model bundle directory."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_constants(model.constants, d / "constants.txt")
    write_height_lm(model.height_lm, d / "height_lm.txt")
    if model.bnn is not None:
        save_mlp(model.bnn, d / "bnn.mlpw")
    if model.vnn is not None:
        save_mlp(model.vnn, d / "vnn.mlpw")
    meta = {
        "format_version": BUNDLE_VERSION,
        "height_threshold": float(model.height_threshold),
        "h_rms_default": float(model.h_rms_default),
    }
    meta.update({f"lambda_{b.lower()}_cm": float(v) for b, v in model.wavelengths_cm.items()})
    write_kv(meta, d / "meta.txt")


def load_bundle(directory):
    """Read a bundle; missing text files fall back to the defaults."""
    d = Path(directory)
    if not d.is_dir():
        raise FormatError(f"model directory {d} does not exist")
    kw = {}
    if (d / "constants.txt").exists():
        kw["constants"] = read_constants(d / "constants.txt")
    if (d / "height_lm.txt").exists():
        kw["height_lm"] = read_height_lm(d / "height_lm.txt")
    for name in ("bnn", "vnn"):
        if (d / f"{name}.mlpw").exists():
            kw[name] = load_mlp(d / f"{name}.mlpw")
    if (d / "meta.txt").exists():
        meta = read_kv(d / "meta.txt")
        version = meta.get("format_version", str(BUNDLE_VERSION))
        if version != str(BUNDLE_VERSION):
            raise FormatError(f"unsupported bundle version {version}", path=d / "meta.txt")
        nums = float_fields(meta, ("height_threshold", "h_rms_default"), d / "meta.txt")
        kw.update(nums)
        waves = float_fields(meta, ("lambda_p_cm", "lambda_l_cm", "lambda_c_cm"), d / "meta.txt")
        if waves:
            bands = dict(dubois.BANDS_CM)
            bands.update({k[7].upper(): v for k, v in waves.items()})
            kw["wavelengths_cm"] = bands
    return RetrievalModel(**kw)
