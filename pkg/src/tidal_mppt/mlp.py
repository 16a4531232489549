"""Small fully connected network (tanh hidden layers, linear output) trained by backprop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, DomainError

FORMAT_TAG = "tidal-mppt-mlp 1"


@dataclass(eq=False)
class MlpNetwork:
    sizes: tuple[int, ...]
    weights: list  # weights[l] has shape (sizes[l + 1], sizes[l])
    biases: list
    input_min: np.ndarray
    input_max: np.ndarray
    output_min: float
    output_max: float

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or any(s < 1 for s in self.sizes):
            raise DomainError("layer sizes must be positive")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise DomainError("need one weight matrix and bias vector per layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[l + 1], self.sizes[l]) or b.shape != (self.sizes[l + 1],):
                raise DomainError(f"layer {l} has shape {w.shape}/{b.shape}, incompatible with {self.sizes}")
        self.input_min = np.asarray(self.input_min, dtype=float)
        self.input_max = np.asarray(self.input_max, dtype=float)
        if self.input_min.shape != (self.sizes[0],) or np.any(self.input_max <= self.input_min):
            raise DomainError("input normalisation ranges must be non-degenerate")
        if not self.output_max > self.output_min:
            raise DomainError("output normalisation range must be non-degenerate")

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(
            self.sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.input_min.copy(),
            self.input_max.copy(),
            self.output_min,
            self.output_max,
        )


def init_network(
    sizes=(2, 16, 16, 1),
    input_min=(0.0, 0.0),
    input_max=(1.0, 1.0),
    output_min=0.0,
    output_max=1.0,
    seed: int = 0,
) -> MlpNetwork:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        lim = math.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform(-lim, lim, size=(n_out, n_in)))
        biases.append(np.zeros(n_out))
    return MlpNetwork(tuple(sizes), weights, biases, np.array(input_min, float), np.array(input_max, float),
                      float(output_min), float(output_max))


def normalize_inputs(net: MlpNetwork, x: np.ndarray) -> np.ndarray:
    return 2.0 * (x - net.input_min) / (net.input_max - net.input_min) - 1.0


def normalize_outputs(net: MlpNetwork, y: np.ndarray) -> np.ndarray:
    return 2.0 * (y - net.output_min) / (net.output_max - net.output_min) - 1.0


def denormalize_outputs(net: MlpNetwork, y: np.ndarray) -> np.ndarray:
    return (y + 1.0) * 0.5 * (net.output_max - net.output_min) + net.output_min


def _forward(net: MlpNetwork, xn: np.ndarray):
    """Forward pass on normalised rows; returns output and per-layer activations."""
    acts = [xn]
    a = xn
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        a = z if l == last else np.tanh(z)
        acts.append(a)
    return a, acts


def predict(net: MlpNetwork, flow_speed, omega) -> np.ndarray:
    """Vectorised power prediction in watts."""
    u = np.asarray(flow_speed, dtype=float)
    w = np.asarray(omega, dtype=float)
    u, w = np.broadcast_arrays(u, w)
    x = np.column_stack([u.ravel(), w.ravel()])
    y, _ = _forward(net, normalize_inputs(net, x))
    return denormalize_outputs(net, y[:, 0]).reshape(u.shape)


def is_extrapolation(net: MlpNetwork, flow_speed: float, omega: float) -> bool:
    x = np.array([flow_speed, omega])
    return bool(np.any(x < net.input_min) or np.any(x > net.input_max))


def mlp_forward(net: MlpNetwork, flow_speed: float, omega: float) -> float:
    if not (math.isfinite(flow_speed) and math.isfinite(omega)):
        raise DomainError("network inputs must be finite")
    return float(predict(net, flow_speed, omega))


def loss_and_gradients(net: MlpNetwork, xn: np.ndarray, yn: np.ndarray):
    """Mean-squared error on normalised data and its gradients by backpropagation."""
    out, acts = _forward(net, xn)
    n = xn.shape[0]
    err = out - yn.reshape(out.shape)
    loss = float(np.mean(err**2))
    delta = 2.0 * err / (n * out.shape[1])
    gw, gb = [None] * len(net.weights), [None] * len(net.weights)
    for l in range(len(net.weights) - 1, -1, -1):
        gw[l] = delta.T @ acts[l]
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ net.weights[l]) * (1.0 - acts[l] ** 2)
    return loss, gw, gb


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-3
    epochs: int = 2000
    batch_size: int = 64
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float = 0.998  # per-epoch multiplicative step-size decay


@dataclass
class TrainResult:
    network: MlpNetwork
    loss_history: list = field(default_factory=list)
    rmse_W: float = float("nan")


def mlp_train(net: MlpNetwork, flow_speed, omega, power, config: TrainConfig = TrainConfig(),
              fit_ranges: bool = True) -> TrainResult:
    """Minibatch gradient descent with Adam moment estimates.

    ``fit_ranges`` resets the normalisation ranges to the dataset extents.
    Raises :class:`DivergenceError` if an epoch loss exceeds ten times the
    initial loss.
    """
    x = np.column_stack([np.ravel(flow_speed), np.ravel(omega)]).astype(float)
    y = np.ravel(power).astype(float)
    if x.shape[0] == 0:
        raise DomainError("training set is empty")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DomainError("training data must be finite")
    net = net.copy()
    if fit_ranges:
        lo, hi = x.min(axis=0), x.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        net.input_min, net.input_max = lo, hi
        y_lo, y_hi = float(y.min()), float(y.max())
        net.output_min, net.output_max = y_lo, (y_hi if y_hi > y_lo else y_lo + 1.0)
    xn = normalize_inputs(net, x)
    yn = normalize_outputs(net, y)[:, None]

    rng = np.random.default_rng(config.seed)
    m_w = [np.zeros_like(w) for w in net.weights]
    v_w = [np.zeros_like(w) for w in net.weights]
    m_b = [np.zeros_like(b) for b in net.biases]
    v_b = [np.zeros_like(b) for b in net.biases]
    initial, _, _ = loss_and_gradients(net, xn, yn)
    history = []
    step = 0
    lr = config.learning_rate
    n = xn.shape[0]
    bs = max(1, min(config.batch_size, n))
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, gw, gb = loss_and_gradients(net, xn[idx], yn[idx])
            total += loss * idx.size
            step += 1
            c1 = 1.0 - config.beta1**step
            c2 = 1.0 - config.beta2**step
            for l in range(len(net.weights)):
                for p, g, m, v in ((net.weights, gw, m_w, v_w), (net.biases, gb, m_b, v_b)):
                    m[l] = config.beta1 * m[l] + (1.0 - config.beta1) * g[l]
                    v[l] = config.beta2 * v[l] + (1.0 - config.beta2) * g[l] ** 2
                    p[l] = p[l] - lr * (m[l] / c1) / (np.sqrt(v[l] / c2) + config.eps)
        epoch_loss = total / n
        history.append(epoch_loss)
        if not math.isfinite(epoch_loss) or epoch_loss > 10.0 * max(initial, 1e-300):
            raise DivergenceError(f"training diverged at epoch {epoch} (loss {epoch_loss:.3e})", epoch)
        lr *= config.lr_decay
    pred = predict(net, x[:, 0], x[:, 1])
    rmse = float(np.sqrt(np.mean((pred - y) ** 2)))
    return TrainResult(net, history, rmse)


# -- text serialisation ----------------------------------------------------------


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def dumps(net: MlpNetwork) -> str:
    lines = [
        FORMAT_TAG,
        "sizes " + " ".join(str(s) for s in net.sizes),
        "input_min " + _fmt(net.input_min),
        "input_max " + _fmt(net.input_max),
        f"output_range {net.output_min!r} {net.output_max!r}",
    ]
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        lines.append(f"layer {l}")
        for row in w:
            lines.append(_fmt(row))
        lines.append(_fmt(b))
    return "\n".join(lines) + "\n"


def loads(text: str) -> MlpNetwork:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != FORMAT_TAG:
        raise DomainError("not a serialised network (missing format tag)")

    def field_of(line, key):
        parts = line.split()
        if parts[0] != key:
            raise DomainError(f"expected '{key}', found '{parts[0]}'")
        return parts[1:]

    sizes = tuple(int(s) for s in field_of(lines[1], "sizes"))
    in_min = np.array([float(v) for v in field_of(lines[2], "input_min")])
    in_max = np.array([float(v) for v in field_of(lines[3], "input_max")])
    out_lo, out_hi = (float(v) for v in field_of(lines[4], "output_range"))
    weights, biases = [], []
    pos = 5
    for l in range(len(sizes) - 1):
        field_of(lines[pos], "layer")
        pos += 1
        rows = [[float(v) for v in lines[pos + r].split()] for r in range(sizes[l + 1])]
        pos += sizes[l + 1]
        weights.append(np.array(rows, dtype=float).reshape(sizes[l + 1], sizes[l]))
        biases.append(np.array([float(v) for v in lines[pos].split()], dtype=float))
        pos += 1
    return MlpNetwork(sizes, weights, biases, in_min, in_max, out_lo, out_hi)


def save_network(net: MlpNetwork, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(net))


def load_network(path) -> MlpNetwork:
    with open(path) as fh:
        return loads(fh.read())
