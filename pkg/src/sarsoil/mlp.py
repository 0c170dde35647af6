"""Feed-forward regression network trained with Levenberg-Marquardt.

The network maps an input vector to one scalar. Inputs and the output pass
through per-dimension affine scalers onto [-1, 1]; hidden layers use tanh
and the output layer is linear. Training is full-batch LM on the squared
error of the *scaled* output, which needs the per-sample Jacobian of the
output with respect to every weight and bias (computed by backpropagation).

Parameter vector layout, used everywhere (Jacobian columns, LM updates,
the ``MLPW1`` file): layer by layer, neuron by neuron, the neuron's bias
followed by its incoming weights.
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConfigurationError, FormatError, InputError
from .lm import LMOptions, levenberg_marquardt

__all__ = [
    "MlpSpec",
    "AffineScaler",
    "Mlp",
    "TrainReport",
    "mlp_init",
    "lm_train",
    "save_mlp",
    "load_mlp",
    "MLPRegressorLM",
    "MLPW_MAGIC",
]

MLPW_MAGIC = "MLPW1"

_ACTIVATIONS = ("tanh", "linear")


@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes from input to output, e.g. ``(6, 20, 20, 1)``."""

    layer_sizes: tuple
    hidden_activation: str = "tanh"
    output_activation: str = "linear"

    def __post_init__(self):
        sizes = tuple(self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ConfigurationError("a network needs at least input and output layers")
        if any(int(s) != s or s < 1 for s in sizes):
            raise ConfigurationError(f"layer sizes must be positive integers: {sizes}")
        if sizes[-1] != 1:
            raise ConfigurationError("only single-output networks are supported")
        if self.hidden_activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.hidden_activation!r}")
        if self.output_activation != "linear":
            raise ConfigurationError("output activation must be linear")

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_params(self):
        s = self.layer_sizes
        return sum((s[i] + 1) * s[i + 1] for i in range(len(s) - 1))


class AffineScaler:
    """Per-dimension affine map from ``[lo, hi]`` onto ``[-1, 1]``."""

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float)).copy()
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float)).copy()
        if self.lo.shape != self.hi.shape:
            raise ConfigurationError("scaler bounds differ in shape")
        if not np.all(self.hi - self.lo > 0):
            raise ConfigurationError("scaler ranges must have positive width")

    @classmethod
    def identity(cls, n):
        return cls(-np.ones(n), np.ones(n))

    @classmethod
    def from_data(cls, X):
        """Bounds from the data; a constant column gets a unit half-width."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        lo, hi = X.min(axis=0), X.max(axis=0)
        flat = hi - lo <= 0
        lo = np.where(flat, lo - 1.0, lo)
        hi = np.where(flat, hi + 1.0, hi)
        return cls(lo, hi)

    @property
    def half_width(self):
        return (self.hi - self.lo) / 2.0

    def scale(self, x):
        return (np.asarray(x, dtype=float) - self.lo) / self.half_width - 1.0

    def descale(self, s):
        return (np.asarray(s, dtype=float) + 1.0) * self.half_width + self.lo

    def __eq__(self, other):
        return (
            isinstance(other, AffineScaler)
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    def __repr__(self):
        return f"AffineScaler(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


class Mlp:
    """A single-output multilayer perceptron with input/output scalers."""

    def __init__(self, spec, weights, biases, input_scaler=None, output_scaler=None):
        self.spec = spec
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        s = spec.layer_sizes
        if len(self.weights) != len(s) - 1 or len(self.biases) != len(s) - 1:
            raise ConfigurationError("wrong number of layers")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (s[i + 1], s[i]) or b.shape != (s[i + 1],):
                raise ConfigurationError(f"layer {i} has inconsistent shapes")
        self.input_scaler = input_scaler or AffineScaler.identity(s[0])
        self.output_scaler = output_scaler or AffineScaler.identity(1)
        if self.input_scaler.lo.shape != (s[0],):
            raise ConfigurationError("input scaler does not match the input layer")

    @property
    def n_params(self):
        return self.spec.n_params

    def get_params(self):
        return np.concatenate(
            [np.column_stack([b, w]).ravel() for w, b in zip(self.weights, self.biases)]
        )

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise InputError(f"expected {self.n_params} parameters, got {theta.shape}")
        pos = 0
        for i, w in enumerate(self.weights):
            n_out, n_in = w.shape
            block = theta[pos:pos + n_out * (n_in + 1)].reshape(n_out, n_in + 1)
            self.biases[i] = block[:, 0].copy()
            self.weights[i] = block[:, 1:].copy()
            pos += block.size

    def copy(self):
        return Mlp(self.spec, self.weights, self.biases, self.input_scaler, self.output_scaler)

    def _check_input(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.ndim != 2 or X.shape[1] != self.spec.n_inputs:
            raise InputError(
                f"expected inputs of width {self.spec.n_inputs}, got shape {np.shape(X)}"
            )
        return X, single

    def _hidden(self, z):
        return np.tanh(z) if self.spec.hidden_activation == "tanh" else z

    def _activations(self, Xs):
        acts = [Xs]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w.T + b
            acts.append(z if i == last else self._hidden(z))
        return acts

    def forward_scaled(self, Xs):
        """Network output in scaled units for already-scaled inputs, shape (n,)."""
        return self._activations(np.atleast_2d(Xs))[-1][:, 0]

    def predict(self, X):
        """Descaled output for raw inputs; a 1-D input gives a float."""
        X, single = self._check_input(X)
        y = self.output_scaler.descale(self.forward_scaled(self.input_scaler.scale(X)))
        return float(y[0]) if single else y

    def jacobian(self, X, scaled=True):
        """Per-sample derivative of the output with respect to all parameters.

        Returns an ``(n_samples, n_params)`` array. With ``scaled=True`` the
        derivative is of the scaled output (what the trainer minimises);
        otherwise of the descaled output.
        """
        X, _ = self._check_input(X)
        if X.shape[0] == 0:
            raise InputError("empty batch")
        acts = self._activations(self.input_scaler.scale(X))
        n = X.shape[0]
        blocks = []
        delta = np.ones((n, 1))
        for i in range(len(self.weights) - 1, -1, -1):
            a_prev = acts[i]
            blk = np.concatenate(
                [delta[:, :, None], delta[:, :, None] * a_prev[:, None, :]], axis=2
            )
            blocks.append(blk.reshape(n, -1))
            if i > 0:
                delta = delta @ self.weights[i]
                if self.spec.hidden_activation == "tanh":
                    delta = delta * (1.0 - a_prev**2)
        J = np.concatenate(blocks[::-1], axis=1)
        if not scaled:
            J = J * self.output_scaler.half_width[0]
        return J


def mlp_init(spec, seed=None, input_scaler=None, output_scaler=None):
    """Random network: weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    if not isinstance(spec, MlpSpec):
        spec = MlpSpec(tuple(spec))
    rng = np.random.default_rng(seed)
    s = spec.layer_sizes
    weights, biases = [], []
    for i in range(len(s) - 1):
        bound = 1.0 / np.sqrt(s[i])
        weights.append(rng.uniform(-bound, bound, size=(s[i + 1], s[i])))
        biases.append(rng.uniform(-bound, bound, size=s[i + 1]))
    return Mlp(spec, weights, biases, input_scaler, output_scaler)


@dataclass
class TrainReport:
    iterations: int
    final_mse: float
    mse_history: list = field(default_factory=list)
    converged: bool = False
    damping_final: float = 0.0
    stop_reason: str = ""

    def to_text(self):
        lines = [
            f"iterations={self.iterations}",
            f"final_mse={float(self.final_mse)!r}",
            f"converged={str(self.converged).lower()}",
            f"stop_reason={self.stop_reason}",
            f"damping_final={float(self.damping_final)!r}",
            "mse_history=" + " ".join(repr(float(m)) for m in self.mse_history),
        ]
        return "\n".join(lines) + "\n"


def lm_train(mlp, X, y, options=LMOptions()):
    """Train ``mlp`` in place on ``(X, y)`` with full-batch LM.

    The MSE is measured on the scaled target, so ``options.mse_goal`` is in
    scaled units. The network's scalers are used as they are; set them from
    the data ranges beforehand (see :class:`MLPRegressorLM`).
    """
    X, _ = mlp._check_input(X)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise InputError("X and y have different numbers of samples")
    if X.shape[0] < mlp.n_params:
        warnings.warn(
            f"{X.shape[0]} samples for {mlp.n_params} parameters; the fit is underdetermined",
            RuntimeWarning,
            stacklevel=2,
        )
    Xs = mlp.input_scaler.scale(X)
    ys = mlp.output_scaler.scale(y[:, None])[:, 0]
    work = mlp.copy()

    def residual(theta):
        work.set_params(theta)
        return work.forward_scaled(Xs) - ys

    def jacobian(theta):
        work.set_params(theta)
        return _scaled_jacobian(work, Xs)

    res = levenberg_marquardt(residual, jacobian, mlp.get_params(), options)
    mlp.set_params(res.x)
    return TrainReport(
        iterations=res.iterations,
        final_mse=res.mse,
        mse_history=list(res.mse_history),
        converged=res.converged,
        damping_final=res.damping,
        stop_reason=res.reason,
    )


def _scaled_jacobian(mlp, Xs):
    # Jacobian for pre-scaled inputs, bypassing the input scaler.
    tmp = Mlp(mlp.spec, mlp.weights, mlp.biases, None, mlp.output_scaler)
    return tmp.jacobian(Xs)


def _fmt(values):
    return " ".join(repr(float(v)) for v in np.ravel(values))


def save_mlp(mlp, path):
    """Write ``mlp`` in the line-oriented ``MLPW1`` text format."""
    if len(mlp.spec.layer_sizes) > 2 and mlp.spec.hidden_activation != "tanh":
        raise ConfigurationError("MLPW1 stores tanh hidden layers only")
    lines = [
        MLPW_MAGIC,
        " ".join(str(s) for s in mlp.spec.layer_sizes),
        _fmt(mlp.input_scaler.lo),
        _fmt(mlp.input_scaler.hi),
        _fmt(mlp.output_scaler.lo),
        _fmt(mlp.output_scaler.hi),
    ]
    for w, b in zip(mlp.weights, mlp.biases):
        for j in range(w.shape[0]):
            lines.append(_fmt(np.concatenate([[b[j]], w[j]])))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_floats(line, lineno, expected, path):
    tokens = line.split()
    if len(tokens) != expected:
        raise FormatError(f"expected {expected} values, found {len(tokens)}", lineno, path=path)
    out = []
    for col, tok in enumerate(tokens, start=1):
        try:
            out.append(float(tok))
        except ValueError:
            raise FormatError(f"not a number: {tok!r}", lineno, col, path=path) from None
    return np.array(out)


def load_mlp(path):
    """Read a network written by :func:`save_mlp`."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FormatError("empty file", 1, path=path)
    if lines[0].strip() != MLPW_MAGIC:
        raise FormatError(f"bad magic {lines[0].strip()!r}, expected {MLPW_MAGIC}", 1, path=path)
    if len(lines) < 6:
        raise FormatError("truncated header", len(lines) + 1, path=path)
    try:
        sizes = tuple(int(t) for t in lines[1].split())
        spec = MlpSpec(sizes)
    except (ValueError, ConfigurationError) as exc:
        raise FormatError(f"bad layer sizes: {exc}", 2, path=path) from None
    in_lo = _parse_floats(lines[2], 3, sizes[0], path)
    in_hi = _parse_floats(lines[3], 4, sizes[0], path)
    out_lo = _parse_floats(lines[4], 5, 1, path)
    out_hi = _parse_floats(lines[5], 6, 1, path)
    weights, biases = [], []
    lineno = 6
    for i in range(len(sizes) - 1):
        rows = []
        for _ in range(sizes[i + 1]):
            if lineno >= len(lines):
                raise FormatError("truncated weights", lineno + 1, path=path)
            rows.append(_parse_floats(lines[lineno], lineno + 1, sizes[i] + 1, path))
            lineno += 1
        block = np.array(rows)
        biases.append(block[:, 0])
        weights.append(block[:, 1:])
    if any(line.strip() for line in lines[lineno:]):
        raise FormatError("trailing data after weights", lineno + 1, path=path)
    try:
        return Mlp(spec, weights, biases, AffineScaler(in_lo, in_hi), AffineScaler(out_lo, out_hi))
    except ConfigurationError as exc:
        raise FormatError(str(exc), 3, path=path) from None


class MLPRegressorLM(RegressorMixin, BaseEstimator):
    """scikit-learn regressor wrapping :class:`Mlp` and :func:`lm_train`.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int, default=(20, 20)
    max_iter : int, default=500
    mse_goal : float, default=1e-6
        Stopping threshold on the training MSE in scaled output units.
    damping_init, damping_up, damping_down, damping_max : float
        LM damping schedule.
    input_range : (array_like, array_like) or None
        Fixed ``(lo, hi)`` bounds for the input scaler; the training data
        range is used when None.
    output_range : (float, float) or None
        Same for the target.
    random_state : int or None
        Seed for the weight initialisation.

    Attributes
    ----------
    network_ : Mlp
    report_ : TrainReport
    n_features_in_ : int
    """

    def __init__(
        self,
        hidden_layer_sizes=(20, 20),
        max_iter=500,
        mse_goal=1e-6,
        damping_init=1e-3,
        damping_up=10.0,
        damping_down=10.0,
        damping_max=1e10,
        input_range=None,
        output_range=None,
        random_state=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.max_iter = max_iter
        self.mse_goal = mse_goal
        self.damping_init = damping_init
        self.damping_up = damping_up
        self.damping_down = damping_down
        self.damping_max = damping_max
        self.input_range = input_range
        self.output_range = output_range
        self.random_state = random_state

    def _lm_options(self):
        return LMOptions(
            max_iter=self.max_iter,
            mse_goal=self.mse_goal,
            damping_init=self.damping_init,
            damping_up=self.damping_up,
            damping_down=self.damping_down,
            damping_max=self.damping_max,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        options = self._lm_options()
        self.n_features_in_ = X.shape[1]
        spec = MlpSpec((X.shape[1], *self.hidden_layer_sizes, 1))
        if self.input_range is None:
            in_scaler = AffineScaler.from_data(X)
        else:
            in_scaler = AffineScaler(*self.input_range)
        if self.output_range is None:
            out_scaler = AffineScaler.from_data(y)
        else:
            out_scaler = AffineScaler(*self.output_range)
        self.network_ = mlp_init(spec, self.random_state, in_scaler, out_scaler)
        self.report_ = lm_train(self.network_, X, y, options)
        return self

    @classmethod
    def from_network(cls, network):
        """Wrap an already trained :class:`Mlp` (e.g. from :func:`load_mlp`)."""
        est = cls(hidden_layer_sizes=tuple(network.spec.layer_sizes[1:-1]))
        est.network_ = network
        est.n_features_in_ = network.spec.n_inputs
        return est

    def predict(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise InputError(
                f"X has {X.shape[1]} features, the network expects {self.n_features_in_}"
            )
        return self.network_.predict(X)
