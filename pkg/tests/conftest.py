import sys

import numpy as np
import pytest

from sarsoil.calibration import fit_height_lm
from sarsoil.mlp import AffineScaler, MLPRegressorLM, mlp_init
from sarsoil.pipeline import RetrievalModel
from sarsoil.synth import RangeSpec, generate, to_nn_dataset

# Narrow, field-like ranges make the two-band height regression well posed.
FIELD_RANGES = RangeSpec(theta=(59, 63), mv=(0.17, 0.37), h_rms=(2.21, 2.21), crop_height=(0, 2.5))


def field_height_coeffs(seed=21, n=2000):
    data = generate("veg", FIELD_RANGES, n=n, seed=seed, noise_db=0.5)
    return fit_height_lm(data.sigma_l, data.sigma_p, data.height).coeffs


def _random_net(n_inputs, seed):
    lo = np.array([60, 1.5, 0, -30, -30, -30][:n_inputs], dtype=float)
    hi = np.array([65, 3.5, 3, 10, 10, 10][:n_inputs], dtype=float)
    return mlp_init((n_inputs, 20, 20, 1), seed, AffineScaler(lo, hi), AffineScaler([0.05], [0.45]))


@pytest.fixture
def random_model():
    """Untrained networks: fine for structural checks, useless for accuracy."""
    return RetrievalModel(bnn=_random_net(6, 1), vnn=_random_net(5, 2))


@pytest.fixture(scope="session")
def small_model():
    """Networks trained briefly on noiseless data, with a refit height model."""
    nets = []
    for scenario in ("bare", "veg"):
        X, y = to_nn_dataset(generate(scenario, n=2000, seed=31, noise_db=0))
        nets.append(MLPRegressorLM(max_iter=60, random_state=0).fit(X, y).network_)
    return RetrievalModel(height_lm=field_height_coeffs(), bnn=nets[0], vnn=nets[1])


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("tests.test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(module.RESULTS):
            terminalreporter.write_line(line)
