import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sarsoil.exceptions import DomainError
from sarsoil.soil import (
    MoistureSample,
    dielectric_from_moisture,
    moisture_from_dielectric,
    volumetric_from_gravimetric,
)

from .oracles import bisect_root, topp


@pytest.mark.parametrize(
    "W, rho_a, rho_w, expected",
    [(0.25, 1.2, 1.0, 0.30), (0.0, 1.3, 1.0, 0.0), (0.30, 1.0, 1.0, 0.30)],
)
def test_volumetric_from_gravimetric(W, rho_a, rho_w, expected):
    assert volumetric_from_gravimetric(W, rho_a, rho_w) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("rho_a, rho_w", [(0.0, 1.0), (1.2, 0.0), (-1.0, 1.0)])
def test_volumetric_rejects_bad_density(rho_a, rho_w):
    with pytest.raises(DomainError):
        volumetric_from_gravimetric(0.2, rho_a, rho_w)


@given(st.floats(0, 2), st.floats(0.5, 2.5))
def test_volumetric_linear_in_w(W, rho_a):
    assert volumetric_from_gravimetric(2 * W, rho_a) == pytest.approx(
        2 * volumetric_from_gravimetric(W, rho_a), rel=1e-12, abs=1e-15
    )


def test_moisture_sample():
    s = MoistureSample(0.25, 1.2)
    assert s.volumetric == pytest.approx(0.30)
    with pytest.raises(DomainError):
        MoistureSample(0.2, 1.2, water_density=0.0)


def test_dielectric_examples():
    assert dielectric_from_moisture(0.0) == 3.03
    assert dielectric_from_moisture(0.30) == pytest.approx(16.889, abs=5e-4)
    assert dielectric_from_moisture(0.45) == pytest.approx(29.791, abs=5e-4)
    for mv in (0.0, 0.1, 0.3, 0.45, 0.5):
        assert dielectric_from_moisture(mv) == pytest.approx(topp(mv), rel=1e-12)


@pytest.mark.parametrize("mv", [-0.01, 0.51, np.nan])
def test_dielectric_domain(mv):
    with pytest.raises(DomainError):
        dielectric_from_moisture(mv)


def test_dielectric_vectorised():
    mv = np.linspace(0, 0.5, 11)
    np.testing.assert_allclose(dielectric_from_moisture(mv), [topp(m) for m in mv], rtol=1e-12)


def test_dielectric_strictly_increasing():
    mv = np.linspace(0, 0.5, 2001)
    assert np.all(np.diff(dielectric_from_moisture(mv)) > 0)
    deriv = 9.3 + 292 * mv - 230.1 * mv**2
    assert np.all(deriv > 0)


def test_moisture_from_dielectric_examples():
    assert moisture_from_dielectric(3.03) == 0.0
    assert moisture_from_dielectric(dielectric_from_moisture(0.30)) == pytest.approx(0.30, abs=1e-9)
    oracle = bisect_root(lambda m: topp(m) - 16.889, 0.0, 0.5)
    assert moisture_from_dielectric(16.889) == pytest.approx(oracle, abs=1e-10)
    assert oracle == pytest.approx(0.30, abs=1e-4)


def test_moisture_from_dielectric_residual():
    for eps in (3.5, 10.0, 20.0, 30.0, 34.0):
        mv = moisture_from_dielectric(eps)
        assert abs(dielectric_from_moisture(mv) - eps) < 1e-10


@pytest.mark.parametrize("eps", [3.0, 35.0, 1.0])
def test_moisture_from_dielectric_domain(eps):
    with pytest.raises(DomainError):
        moisture_from_dielectric(eps)


@given(st.floats(0.0, 0.45))
def test_round_trip(mv):
    assert abs(moisture_from_dielectric(dielectric_from_moisture(mv)) - mv) < 1e-9
