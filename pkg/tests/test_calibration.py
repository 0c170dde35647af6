import numpy as np
import pytest

from sarsoil import dubois
from sarsoil.calibration import (
    HeightLinearModel,
    HeightLmCoeffs,
    dubois_design,
    dubois_mse,
    estimate_height,
    fit_dubois_constants,
    fit_height_lm,
    raw_height,
    read_constants,
    read_height_lm,
    residual_sigma_dif,
    residual_summary,
    write_constants,
    write_height_lm,
)
from sarsoil.exceptions import FitError
from sarsoil.synth import RangeSpec, SampleSet, generate

from . import oracles as o


def test_estimate_height_examples():
    assert raw_height(0, 0) == pytest.approx(3.119, rel=1e-12)
    assert estimate_height(0, 0) == 3.0
    assert estimate_height(-11, -12) == pytest.approx(o.hlm(-11, -12), rel=1e-12)
    assert estimate_height(-11, -12) == pytest.approx(0.2694, abs=1e-12)
    assert raw_height(-14, -14) == pytest.approx(-0.3656, abs=1e-12)
    assert estimate_height(-14, -14) == 0.0


def test_estimate_height_affine():
    c = HeightLmCoeffs()
    rng = np.random.default_rng(0)
    sl, sp = rng.uniform(-14, -8, 50), rng.uniform(-14, -8, 50)
    delta = 0.73
    h0, h1 = raw_height(sl, sp, c), raw_height(sl + delta, sp, c)
    inside = (h0 > 0) & (h0 < 3) & (h1 > 0) & (h1 < 3)
    np.testing.assert_allclose(
        estimate_height(sl + delta, sp)[inside] - estimate_height(sl, sp)[inside],
        c.coef_l * delta, rtol=1e-9,
    )


def test_fit_height_exact_recovery():
    rng = np.random.default_rng(1)
    sl, sp = rng.uniform(-15, -5, 40), rng.uniform(-16, -4, 40)
    fit = fit_height_lm(sl, sp, raw_height(sl, sp))
    assert fit.coeffs.intercept == pytest.approx(3.119, abs=1e-9)
    assert fit.coeffs.coef_l == pytest.approx(0.1372, abs=1e-9)
    assert fit.coeffs.coef_p == pytest.approx(0.1117, abs=1e-9)
    assert fit.rmse < 1e-12


def test_fit_height_degenerate():
    with pytest.raises(FitError):
        fit_height_lm([-10, -10, -10, -10], [-9, -9, -9, -9], [0.1, 0.2, 0.3, 0.4])
    with pytest.raises(FitError):
        fit_height_lm([-10, -9], [-9, -8], [0.1, 0.2])


def test_fit_height_residuals_orthogonal():
    rng = np.random.default_rng(2)
    sl, sp = rng.uniform(-15, -5, 100), rng.uniform(-16, -4, 100)
    h = rng.uniform(0, 3, 100)
    fit = fit_height_lm(sl, sp, h)
    A = np.column_stack([np.ones(100), sl, sp])
    assert np.max(np.abs(A.T @ fit.residuals)) < 1e-9


def test_height_estimator():
    rng = np.random.default_rng(3)
    X = rng.uniform(-15, -5, (30, 2))
    y = raw_height(X[:, 0], X[:, 1])
    est = HeightLinearModel().fit(X, y)
    np.testing.assert_allclose(est.coef_, [0.1372, 0.1117], atol=1e-9)
    assert np.all(est.predict(X) >= 0) and np.all(est.predict(X) <= 3)
    default = HeightLinearModel.from_coeffs()
    assert default.predict([[-11, -12]])[0] == pytest.approx(0.2694)


def test_residual_sigma_dif():
    scene = dubois.SceneParams(61, 2.3, o.topp(0.25), 22.8, 0.8)
    base = dubois.forward_db(61, 2.3, o.topp(0.25), 22.8, 0.8, wavelength_correction=False)
    assert residual_sigma_dif(base, scene) == pytest.approx(0.0, abs=1e-12)
    assert residual_sigma_dif(base + 3, scene) == pytest.approx(3.0, abs=1e-12)


def test_residual_trend_is_wavelength_quadratic():
    s = generate("veg", n=200, seed=4, noise_db=0)
    rows = residual_summary(s)
    lam_m = np.array([r["lambda_cm"] for r in rows]) / 100
    med = np.array([r["median"] for r in rows])
    for r in rows:
        assert r["q1"] == pytest.approx(r["q3"], abs=1e-9)  # noiseless: a single value per band
    c = np.polyfit(lam_m, med / 10, 2)
    np.testing.assert_allclose(c, [-2.4, 1.76, 0.0], atol=1e-9)


def test_dubois_mse_hand_computed():
    s = SampleSet(
        theta=[60, 62, 64], h_rms=[2.0, 2.5, 3.0], height=[0.0, 1.0, 2.0],
        sigma_p=[-5.0, 0.0, 3.0], sigma_l=[1.0, 2.0, 7.5], sigma_c=[4.0, 5.0, 6.0],
        mv=[0.1, 0.25, 0.4],
    )
    sq = []
    for i in range(3):
        for band, lam in (("P", 70.5), ("L", 22.8), ("C", 5.6)):
            model = o.sigma_linear(s.theta[i], s.h_rms[i], o.topp(s.mv[i]), lam, s.height[i])
            sq.append((10 * np.log10(model) - s.sigma(band)[i]) ** 2)
    assert dubois_mse(dubois.DuboisConstants(), s) == pytest.approx(np.mean(sq), rel=1e-12)


def test_dubois_design_matches_finite_differences():
    c0 = dubois.DuboisConstants().to_array()
    args = (np.array([60.0, 63.0]), np.array([2.0, 3.0]), np.array([10.0, 20.0]),
            np.array([70.5, 5.6]), np.array([0.2, 1.5]))
    D = dubois_design(*args)
    for k in range(8):
        up, down = c0.copy(), c0.copy()
        up[k] += 1e-6
        down[k] -= 1e-6
        fd = (dubois.forward_db(*args, constants=dubois.DuboisConstants.from_array(up))
              - dubois.forward_db(*args, constants=dubois.DuboisConstants.from_array(down))) / 2e-6
        np.testing.assert_allclose(D[:, k], fd, rtol=1e-6)


def _tuning(seed=0, n=60):
    r = RangeSpec(crop_height=(0.0, 2.5))
    return generate("veg", r, n=n, seed=seed, noise_db=0)


def test_fit_dubois_from_truth():
    s = _tuning()
    fit = fit_dubois_constants(s, dubois.DuboisConstants())
    assert fit.mse < 1e-18
    assert fit.iterations == 0


def test_fit_dubois_from_perturbed():
    s = _tuning()
    rng = np.random.default_rng(7)
    truth = dubois.DuboisConstants()
    init = dubois.DuboisConstants.from_array(truth.to_array() * rng.choice([0.9, 1.1], 8))
    fit = fit_dubois_constants(s, init)
    h = np.array(fit.mse_history)
    assert np.all(np.diff(h) <= 0)
    v = _tuning(seed=99, n=200)
    for lam in dubois.BANDS_CM.values():
        eps = o.topp(0.3)
        a = dubois.forward_db(v.theta, v.h_rms, eps, lam, v.height, fit.constants)
        b = dubois.forward_db(v.theta, v.h_rms, eps, lam, v.height, truth)
        assert np.max(np.abs(a - b)) < 0.1


def test_fit_dubois_preconditions():
    s = _tuning()
    single = SampleSet(s.theta, s.h_rms, s.height, np.full(len(s), np.nan), s.sigma_l,
                       np.full(len(s), np.nan), s.mv)
    with pytest.raises(FitError):
        fit_dubois_constants(single)
    flat = SampleSet(s.theta, s.h_rms, np.zeros(len(s)), s.sigma_p, s.sigma_l, s.sigma_c, s.mv)
    with pytest.raises(FitError):
        fit_dubois_constants(flat)


def test_fit_dubois_nonconvergence_carries_best():
    from sarsoil.lm import LMOptions

    s = _tuning()
    init = dubois.DuboisConstants(a=1.0, c=0.02)
    with pytest.raises(FitError) as exc:
        fit_dubois_constants(s, init, options=LMOptions(max_iter=1, mse_goal=0.0))
    assert exc.value.best is not None
    assert exc.value.best.mse < dubois_mse(init, s)


def test_coefficient_files(tmp_path):
    c = dubois.DuboisConstants(a=1.3, d0=1.7)
    write_constants(c, tmp_path / "constants.txt")
    assert read_constants(tmp_path / "constants.txt") == c
    h = HeightLmCoeffs(1.0, 0.2, 0.3)
    write_height_lm(h, tmp_path / "height_lm.txt", rmse=0.25)
    assert read_height_lm(tmp_path / "height_lm.txt") == h


def test_fitted_coefficients_survive_file_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    sl, sp = rng.uniform(-15, -5, 20), rng.uniform(-16, -4, 20)
    fit = fit_height_lm(sl, sp, rng.uniform(0, 3, 20))
    write_height_lm(fit.coeffs, tmp_path / "h.txt", rmse=np.float64(fit.rmse))
    assert "np." not in (tmp_path / "h.txt").read_text()
    assert read_height_lm(tmp_path / "h.txt") == fit.coeffs
