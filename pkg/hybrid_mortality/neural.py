"""
From-scratch trainable networks.

This module provides three architectures (MLP, LSTM and a generic
N-BEATS stack) with hand-written backpropagation, full-batch Adam
training and a finite-difference gradient check.

Every network keeps its weights in one flat float vector. The layout is
the concatenation, in order, of the row-major arrays listed by
``Architecture.layout()``:

    MLP     W1 (d, h)  b1 (h)  W2 (h, o)  b2 (o)
    LSTM    W (1 + h, 4h)  b (4h)  W_out (h, o)  b_out (o)
            gate columns ordered input, forget, cell, output
    NBEATS  per block: (W_l, b_l) for each hidden layer,
            W_back (h, d)  b_back (d)  W_fore (h, o)  b_fore (o)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace
from typing import Any, Literal, Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import DivergenceError, ShapeError, SpecError
from .records import Record
from .timeseries import SupervisedDataset

logger = logging.getLogger(__name__)

Family = Literal["MLP", "LSTM", "NBEATS"]
FAMILIES: tuple[str, ...] = ("MLP", "LSTM", "NBEATS")
ACTIVATIONS: tuple[str, ...] = ("tanh", "relu")

# Adam
BETA1 = 0.9
BETA2 = 0.999
ADAM_EPS = 1e-8

# Early stopping: best loss must improve by this much within the patience window
PLATEAU_TOL = 1e-8
PLATEAU_PATIENCE = 25
# Loss growth over the initial loss treated as divergence
DIVERGENCE_FACTOR = 1e8


@dataclass(frozen=True)
class NetworkSpec:
    """
    Hyperparameters of one network.

    Attributes:
        family: MLP, LSTM or NBEATS
        input_width: Lag order d
        output_width: 1 (recursive, direct) or H (MIMO)
        hidden_units: Units per hidden layer, in [2, 100]
        activation: tanh or relu (MLP hidden layer)
        n_hidden_layers: Fully connected layers per N-BEATS block, in [1, 4]
        blocks_per_stack: N-BEATS blocks, always 4
        stack_type: N-BEATS stack kind, always generic
        max_iterations: Adam iterations cap, in [1, 500]
        learning_rate: Adam step size, in [1e-4, 1e-1]

    Raises:
        SpecError: any field outside its range
    """

    family: Family = "MLP"
    input_width: int = 2
    output_width: int = 1
    hidden_units: int = 16
    activation: str = "tanh"
    n_hidden_layers: int = 1
    blocks_per_stack: int = 4
    stack_type: str = "generic"
    max_iterations: int = 500
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpecError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.input_width < 1:
            raise SpecError(f"input_width must be positive, got {self.input_width}")
        if self.output_width < 1:
            raise SpecError(f"output_width must be positive, got {self.output_width}")
        if not 2 <= self.hidden_units <= 100:
            raise SpecError(f"hidden_units must lie in [2, 100], got {self.hidden_units}")
        if self.activation not in ACTIVATIONS:
            raise SpecError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if not 1 <= self.n_hidden_layers <= 4:
            raise SpecError(f"n_hidden_layers must lie in [1, 4], got {self.n_hidden_layers}")
        if self.blocks_per_stack != 4:
            raise SpecError(f"blocks_per_stack is fixed at 4, got {self.blocks_per_stack}")
        if self.stack_type != "generic":
            raise SpecError(f"only generic stacks are supported, got {self.stack_type!r}")
        if not 1 <= self.max_iterations <= 500:
            raise SpecError(f"max_iterations must lie in [1, 500], got {self.max_iterations}")
        if not 1e-4 <= self.learning_rate <= 1e-1:
            raise SpecError(f"learning_rate must lie in [1e-4, 1e-1], got {self.learning_rate}")

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# ---------------------------------------------------------------------------
# Architectures
# ---------------------------------------------------------------------------

def _sigmoid(x: NDArray[np.float64]) -> NDArray[np.float64]:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Architecture:
    """
    Base class for a network family.

    Subclasses declare their parameter arrays in ``layout`` and implement
    ``forward`` (returning a cache) and ``backward`` (returning the flat
    gradient). ``fan`` gives the (fan_in, fan_out) of each weight matrix
    for initialization; arrays absent from it are biases.
    """

    input_width: int
    output_width: int

    def layout(self) -> list[tuple[str, tuple[int, ...]]]:
        raise NotImplementedError

    def fan(self) -> dict[str, tuple[int, int]]:
        return {name: (shape[0], shape[1]) for name, shape in self.layout() if len(shape) == 2}

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.layout())

    def unpack(self, theta: NDArray[np.float64]) -> dict[str, NDArray[np.float64]]:
        """Views of the flat vector, keyed by array name."""
        arrays = {}
        offset = 0
        for name, shape in self.layout():
            size = int(np.prod(shape))
            arrays[name] = theta[offset:offset + size].reshape(shape)
            offset += size
        return arrays

    def pack(self, arrays: dict[str, NDArray[np.float64]]) -> NDArray[np.float64]:
        return np.concatenate([np.asarray(arrays[name]).ravel() for name, _ in self.layout()])

    def initial_parameters(self, rng: np.random.Generator) -> NDArray[np.float64]:
        """Glorot-uniform weights, zero biases."""
        fans = self.fan()
        arrays = {}
        for name, shape in self.layout():
            if name in fans:
                fan_in, fan_out = fans[name]
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                arrays[name] = rng.uniform(-limit, limit, size=shape)
            else:
                arrays[name] = np.zeros(shape)
        return self.pack(arrays)

    def forward(self, theta: NDArray[np.float64], X: NDArray[np.float64]) -> tuple[NDArray, Any]:
        raise NotImplementedError

    def backward(self, theta: NDArray[np.float64], cache: Any, dY: NDArray[np.float64]) -> NDArray:
        raise NotImplementedError


class MLP(Architecture):
    """
    One hidden layer perceptron.

    Formula: y = act(x W1 + b1) W2 + b2
    """

    def __init__(self, input_width: int, output_width: int, hidden_units: int,
                 activation: str = "tanh"):
        self.input_width = input_width
        self.output_width = output_width
        self.hidden_units = hidden_units
        self.activation = activation

    def layout(self):
        d, h, o = self.input_width, self.hidden_units, self.output_width
        return [("W1", (d, h)), ("b1", (h,)), ("W2", (h, o)), ("b2", (o,))]

    def _act(self, a):
        return np.tanh(a) if self.activation == "tanh" else np.maximum(a, 0.0)

    def _act_grad(self, a, z):
        return 1.0 - z * z if self.activation == "tanh" else (a > 0.0).astype(np.float64)

    def forward(self, theta, X):
        p = self.unpack(theta)
        a = X @ p["W1"] + p["b1"]
        z = self._act(a)
        return z @ p["W2"] + p["b2"], (X, a, z)

    def backward(self, theta, cache, dY):
        p = self.unpack(theta)
        X, a, z = cache
        dz = dY @ p["W2"].T
        da = dz * self._act_grad(a, z)
        grads = {
            "W1": X.T @ da, "b1": da.sum(axis=0),
            "W2": z.T @ dY, "b2": dY.sum(axis=0),
        }
        return self.pack(grads)


class LSTM(Architecture):
    """
    Single-layer LSTM reading the lag vector as a scalar sequence.

    The lags are fed oldest first; the final hidden state is mapped
    affinely to the output.
    """

    def __init__(self, input_width: int, output_width: int, hidden_units: int):
        self.input_width = input_width
        self.output_width = output_width
        self.hidden_units = hidden_units

    def layout(self):
        h, o = self.hidden_units, self.output_width
        return [("W", (1 + h, 4 * h)), ("b", (4 * h,)), ("W_out", (h, o)), ("b_out", (o,))]

    def fan(self):
        h, o = self.hidden_units, self.output_width
        return {"W": (1 + h, h), "W_out": (h, o)}

    def initial_parameters(self, rng):
        theta = super().initial_parameters(rng)
        h = self.hidden_units
        # forget gate starts open
        self.unpack(theta)["b"][h:2 * h] = 1.0
        return theta

    def forward(self, theta, X):
        p = self.unpack(theta)
        W, b = p["W"], p["b"]
        n = X.shape[0]
        h = self.hidden_units
        hidden = np.zeros((n, h))
        cell = np.zeros((n, h))
        steps = []
        for t in range(self.input_width):
            inp = np.hstack((X[:, t:t + 1], hidden))
            a = inp @ W + b
            i = _sigmoid(a[:, :h])
            f = _sigmoid(a[:, h:2 * h])
            g = np.tanh(a[:, 2 * h:3 * h])
            o = _sigmoid(a[:, 3 * h:])
            cell_prev = cell
            cell = f * cell_prev + i * g
            tanh_c = np.tanh(cell)
            hidden = o * tanh_c
            steps.append((inp, i, f, g, o, cell_prev, tanh_c))
        return hidden @ p["W_out"] + p["b_out"], (steps, hidden)

    def backward(self, theta, cache, dY):
        p = self.unpack(theta)
        W = p["W"]
        steps, hidden = cache
        h = self.hidden_units
        dW = np.zeros_like(W)
        db = np.zeros(4 * h)
        dh = dY @ p["W_out"].T
        dc = np.zeros_like(dh)
        for inp, i, f, g, o, cell_prev, tanh_c in reversed(steps):
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
            da = np.hstack((
                dc * g * i * (1.0 - i),
                dc * cell_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                do * o * (1.0 - o),
            ))
            dW += inp.T @ da
            db += da.sum(axis=0)
            dh = (da @ W.T)[:, 1:]
            dc = dc * f
        grads = {"W": dW, "b": db, "W_out": hidden.T @ dY, "b_out": dY.sum(axis=0)}
        return self.pack(grads)


class NBeats(Architecture):
    """
    One generic N-BEATS stack.

    Each block runs ReLU fully connected layers and emits a backcast and a
    forecast through linear heads. The next block sees the input minus the
    backcast; the stack output is the sum of block forecasts.
    """

    def __init__(self, input_width: int, output_width: int, hidden_units: int,
                 n_layers: int = 1, n_blocks: int = 4):
        self.input_width = input_width
        self.output_width = output_width
        self.hidden_units = hidden_units
        self.n_layers = n_layers
        self.n_blocks = n_blocks

    def layout(self):
        d, h, o = self.input_width, self.hidden_units, self.output_width
        shapes = []
        for k in range(self.n_blocks):
            for layer in range(self.n_layers):
                fan_in = d if layer == 0 else h
                shapes.append((f"block{k}.W{layer}", (fan_in, h)))
                shapes.append((f"block{k}.b{layer}", (h,)))
            shapes.append((f"block{k}.W_back", (h, d)))
            shapes.append((f"block{k}.b_back", (d,)))
            shapes.append((f"block{k}.W_fore", (h, o)))
            shapes.append((f"block{k}.b_fore", (o,)))
        return shapes

    def _block_forward(self, p, k, x):
        acts = [x]
        pre = []
        z = x
        for layer in range(self.n_layers):
            a = z @ p[f"block{k}.W{layer}"] + p[f"block{k}.b{layer}"]
            z = np.maximum(a, 0.0)
            pre.append(a)
            acts.append(z)
        back = z @ p[f"block{k}.W_back"] + p[f"block{k}.b_back"]
        fore = z @ p[f"block{k}.W_fore"] + p[f"block{k}.b_fore"]
        return back, fore, (acts, pre)

    def forward(self, theta, X):
        p = self.unpack(theta)
        residual = X
        total = np.zeros((X.shape[0], self.output_width))
        caches = []
        for k in range(self.n_blocks):
            back, fore, cache = self._block_forward(p, k, residual)
            caches.append(cache)
            residual = residual - back
            total = total + fore
        return total, caches

    def backward(self, theta, cache, dY):
        p = self.unpack(theta)
        grads = {}
        # gradient with respect to the input of the following block
        d_next = np.zeros((dY.shape[0], self.input_width))
        for k in reversed(range(self.n_blocks)):
            acts, pre = cache[k]
            z = acts[-1]
            d_back = -d_next
            grads[f"block{k}.W_back"] = z.T @ d_back
            grads[f"block{k}.b_back"] = d_back.sum(axis=0)
            grads[f"block{k}.W_fore"] = z.T @ dY
            grads[f"block{k}.b_fore"] = dY.sum(axis=0)
            dz = d_back @ p[f"block{k}.W_back"].T + dY @ p[f"block{k}.W_fore"].T
            for layer in reversed(range(self.n_layers)):
                da = dz * (pre[layer] > 0.0)
                grads[f"block{k}.W{layer}"] = acts[layer].T @ da
                grads[f"block{k}.b{layer}"] = da.sum(axis=0)
                dz = da @ p[f"block{k}.W{layer}"].T
            # identity path of the residual link plus the block's own input gradient
            d_next = d_next + dz
        return self.pack(grads)


def build_architecture(spec: NetworkSpec) -> Architecture:
    """Architecture instance for a spec."""
    if spec.family == "MLP":
        return MLP(spec.input_width, spec.output_width, spec.hidden_units, spec.activation)
    if spec.family == "LSTM":
        return LSTM(spec.input_width, spec.output_width, spec.hidden_units)
    return NBeats(spec.input_width, spec.output_width, spec.hidden_units,
                  spec.n_hidden_layers, spec.blocks_per_stack)


def param_count(spec: NetworkSpec) -> int:
    """
    Closed-form parameter count.

    MLP:    d h + h + h o + o
    LSTM:   4 h (1 + h) + 4 h + h o + o
    NBEATS: blocks (d h + h + (L - 1)(h h + h) + h d + d + h o + o)
    """
    d, h, o = spec.input_width, spec.hidden_units, spec.output_width
    if spec.family == "MLP":
        return d * h + h + h * o + o
    if spec.family == "LSTM":
        return 4 * h * (1 + h) + 4 * h + h * o + o
    per_block = d * h + h + (spec.n_hidden_layers - 1) * (h * h + h) + h * d + d + h * o + o
    return spec.blocks_per_stack * per_block


# ---------------------------------------------------------------------------
# Trained networks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainedNetwork:
    """
    A network and its weights.

    Attributes:
        spec: Hyperparameters
        parameters: Flat weight vector (layout in the module docstring)
        training_loss_curve: MSE before each Adam update
        seed: Seed of the initialization
    """

    spec: NetworkSpec
    parameters: NDArray[np.float64]
    training_loss_curve: tuple[float, ...] = ()
    seed: int = 0
    architecture: Architecture = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arch = build_architecture(self.spec)
        params = np.array(self.parameters, dtype=np.float64).ravel()
        if params.size != arch.n_params:
            raise ShapeError(
                f"{self.spec.family} needs {arch.n_params} parameters, got {params.size}"
            )
        params.setflags(write=False)
        object.__setattr__(self, 'parameters', params)
        object.__setattr__(self, 'training_loss_curve', tuple(float(v) for v in self.training_loss_curve))
        object.__setattr__(self, 'architecture', arch)

    @property
    def n_params(self) -> int:
        return self.architecture.n_params

    @property
    def output_width(self) -> int:
        return self.spec.output_width

    def predict(self, X: ArrayLike) -> NDArray[np.float64]:
        """Outputs for a batch of lag vectors, shape (n, output_width)."""
        X = _check_inputs(self.spec, X)
        Y, _ = self.architecture.forward(self.parameters, X)
        return Y

    def with_parameters(self, parameters: ArrayLike) -> TrainedNetwork:
        return TrainedNetwork(self.spec, parameters, (), self.seed)

    def to_record(self) -> Record:
        record = Record("network")
        for key, value in self.spec.to_dict().items():
            record.set(key, value)
        record.set("seed", self.seed)
        record.set("parameters", self.parameters)
        record.set("loss_curve", np.asarray(self.training_loss_curve))
        return record

    @classmethod
    def from_record(cls, record: Record) -> TrainedNetwork:
        spec = NetworkSpec(
            family=record.get("family"),
            input_width=record.get_int("input_width"),
            output_width=record.get_int("output_width"),
            hidden_units=record.get_int("hidden_units"),
            activation=record.get("activation"),
            n_hidden_layers=record.get_int("n_hidden_layers"),
            blocks_per_stack=record.get_int("blocks_per_stack"),
            stack_type=record.get("stack_type"),
            max_iterations=record.get_int("max_iterations"),
            learning_rate=record.get_float("learning_rate"),
        )
        return cls(spec, record.get_floats("parameters"),
                   tuple(record.get_floats("loss_curve")), record.get_int("seed"))


def _check_inputs(spec: NetworkSpec, X: ArrayLike) -> NDArray[np.float64]:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != spec.input_width:
        raise ShapeError(f"expected lag vectors of width {spec.input_width}, got shape {X.shape}")
    return X


def init(spec: NetworkSpec, seed: int = 0) -> TrainedNetwork:
    """
    Untrained network with Glorot-uniform weights.

    Example:
        >>> init(NetworkSpec("MLP", 2, 1, hidden_units=3), seed=0).n_params
        13
    """
    arch = build_architecture(spec)
    rng = np.random.default_rng(seed)
    return TrainedNetwork(spec, arch.initial_parameters(rng), (), seed)


def forward(network: TrainedNetwork, x: ArrayLike) -> NDArray[np.float64]:
    """
    Output for one lag vector (or a batch).

    Raises:
        ShapeError: input width differs from ``spec.input_width``
    """
    single = np.ndim(x) == 1
    Y = network.predict(x)
    return Y[0] if single else Y


def _mse_and_grad(
    arch: Architecture,
    theta: NDArray[np.float64],
    X: NDArray[np.float64],
    T: NDArray[np.float64]
) -> tuple[float, NDArray[np.float64]]:
    Y, cache = arch.forward(theta, X)
    diff = Y - T
    loss = float(np.mean(diff * diff))
    dY = 2.0 * diff / diff.size
    return loss, arch.backward(theta, cache, dY)


def train(
    network: TrainedNetwork,
    dataset: Union[SupervisedDataset, tuple[ArrayLike, ArrayLike]],
    learning_rate: Optional[float] = None,
) -> TrainedNetwork:
    """
    Full-batch Adam on mean squared error.

    Stops after ``spec.max_iterations`` updates or when the best loss has
    improved by less than 1e-8 over the last 25 iterations. The returned
    weights are the best-loss iterate.

    Args:
        network: Starting point (usually from :func:`init`)
        dataset: Supervised pairs, or an (inputs, targets) tuple
        learning_rate: Override of ``spec.learning_rate`` (not range-checked)

    Returns:
        Trained network with its loss curve

    Raises:
        ShapeError: dataset widths do not match the network
        DivergenceError: loss became non-finite or exploded
    """
    spec = network.spec
    if isinstance(dataset, SupervisedDataset):
        X, T = dataset.inputs, dataset.targets
    else:
        X, T = dataset
    X = _check_inputs(spec, X)
    T = np.asarray(T, dtype=np.float64)
    if T.ndim == 1:
        T = T[:, None]
    if X.shape[0] == 0:
        raise ShapeError("cannot train on an empty dataset")
    if T.shape != (X.shape[0], spec.output_width):
        raise ShapeError(f"expected targets of shape {(X.shape[0], spec.output_width)}, got {T.shape}")

    lr = spec.learning_rate if learning_rate is None else learning_rate
    arch = network.architecture
    theta = np.array(network.parameters, dtype=np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    curve: list[float] = []
    best_curve: list[float] = []
    best_theta = theta.copy()
    best_loss = np.inf
    initial_loss = None

    with np.errstate(over="ignore", invalid="ignore"):
        for iteration in range(1, spec.max_iterations + 1):
            loss, grad = _mse_and_grad(arch, theta, X, T)
            if initial_loss is None:
                initial_loss = loss
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)) or (
                loss > DIVERGENCE_FACTOR * max(initial_loss, 1e-12)
            ):
                raise DivergenceError(
                    f"{spec.family} training diverged at iteration {iteration} (loss={loss})",
                    iteration=iteration,
                )
            curve.append(loss)
            if loss < best_loss:
                best_loss = loss
                best_theta = theta.copy()
            best_curve.append(best_loss)
            if (len(best_curve) > PLATEAU_PATIENCE
                    and best_curve[-PLATEAU_PATIENCE - 1] - best_loss < PLATEAU_TOL):
                logger.debug("%s plateau at iteration %d, loss %.3e", spec.family, iteration, best_loss)
                break

            m = BETA1 * m + (1.0 - BETA1) * grad
            v = BETA2 * v + (1.0 - BETA2) * grad * grad
            m_hat = m / (1.0 - BETA1 ** iteration)
            v_hat = v / (1.0 - BETA2 ** iteration)
            theta = theta - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    logger.debug("%s trained: %d iterations, best loss %.3e", spec.family, len(curve), best_loss)
    return TrainedNetwork(spec, best_theta, tuple(curve), network.seed)


def grad_check(
    spec: NetworkSpec,
    sample: Union[SupervisedDataset, tuple[ArrayLike, ArrayLike]],
    epsilon: float = 1e-6,
    seed: int = 0,
) -> float:
    """
    Compare the analytic MSE gradient with central finite differences.

    Parameters are drawn from N(0, 0.5^2) so every unit is exercised.

    Args:
        spec: Network hyperparameters
        sample: Small set of (inputs, targets)
        epsilon: Finite-difference step, in [1e-7, 1e-4]
        seed: Seed of the parameter draw

    Returns:
        Max over parameters of |a - n| / max(|a| + |n|, 1e-4)
    """
    if not 1e-7 <= epsilon <= 1e-4:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-4], got {epsilon}")
    if isinstance(sample, SupervisedDataset):
        X, T = sample.inputs, sample.targets
    else:
        X, T = sample
    X = _check_inputs(spec, X)
    T = np.asarray(T, dtype=np.float64).reshape(X.shape[0], spec.output_width)

    arch = build_architecture(spec)
    rng = np.random.default_rng(seed)
    theta = rng.normal(0.0, 0.5, arch.n_params)
    _, analytic = _mse_and_grad(arch, theta, X, T)

    numeric = np.empty_like(theta)
    for k in range(theta.size):
        bumped = theta.copy()
        bumped[k] += epsilon
        up, _ = _mse_and_grad(arch, bumped, X, T)
        bumped[k] -= 2.0 * epsilon
        down, _ = _mse_and_grad(arch, bumped, X, T)
        numeric[k] = (up - down) / (2.0 * epsilon)

    rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-4)
    return float(rel.max())


def with_widths(spec: NetworkSpec, input_width: int, output_width: int) -> NetworkSpec:
    """Copy of ``spec`` with new input and output widths."""
    return replace(spec, input_width=input_width, output_width=output_width)
