"""A 6-6-1 ReLU/sigmoid network trained with binary cross-entropy and Adam.

Parameters live in one flat float64 vector so that the optimizer, gradient
clipping and noise addition each act on a single array. Named views
(``W1``, ``b1``, ...) expose the layer tensors. Per-example gradients are
rows of a ``(batch, n_params)`` matrix with the same layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

HIDDEN = 6
TENSOR_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")
PROB_CLAMP = 1e-7


def tensor_shapes(input_dim: int) -> dict[str, tuple[int, ...]]:
    return {
        "W1": (input_dim, HIDDEN),
        "b1": (HIDDEN,),
        "W2": (HIDDEN, HIDDEN),
        "b2": (HIDDEN,),
        "W3": (HIDDEN, 1),
        "b3": (1,),
    }


@lru_cache(maxsize=None)
def _offsets(input_dim: int) -> dict[str, tuple[int, int, tuple[int, ...]]]:
    out, pos = {}, 0
    for name, shape in tensor_shapes(input_dim).items():
        size = int(np.prod(shape))
        out[name] = (pos, pos + size, shape)
        pos += size
    return out


def n_params(input_dim: int) -> int:
    return HIDDEN * input_dim + HIDDEN + HIDDEN * HIDDEN + HIDDEN + HIDDEN + 1


class NumericInputError(ValueError):
    pass


@dataclass(eq=False)
class MLPParams:
    """Network weights backed by a flat vector; also used for gradients."""

    flat: np.ndarray
    input_dim: int

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=np.float64)
        if self.flat.shape != (n_params(self.input_dim),):
            raise ValueError(
                f"flat vector has shape {self.flat.shape}, expected ({n_params(self.input_dim)},)"
            )
        for name, (lo, hi, shape) in _offsets(self.input_dim).items():
            object.__setattr__(self, name, self.flat[lo:hi].reshape(shape))

    def __reduce__(self):
        return (MLPParams, (self.flat, self.input_dim))

    @classmethod
    def from_tensors(cls, tensors: dict[str, np.ndarray]) -> "MLPParams":
        input_dim = np.shape(tensors["W1"])[0]
        shapes = tensor_shapes(input_dim)
        for name in TENSOR_NAMES:
            if np.shape(tensors[name]) != shapes[name]:
                raise ValueError(f"{name} has shape {np.shape(tensors[name])}, expected {shapes[name]}")
        flat = np.concatenate([np.ravel(tensors[n]).astype(np.float64) for n in TENSOR_NAMES])
        return cls(flat, input_dim)

    @classmethod
    def zeros(cls, input_dim: int) -> "MLPParams":
        return cls(np.zeros(n_params(input_dim)), input_dim)

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def copy(self) -> "MLPParams":
        return MLPParams(self.flat.copy(), self.input_dim)

    def global_norm(self) -> float:
        return float(np.sqrt(np.dot(self.flat, self.flat)))

    def __add__(self, other: "MLPParams") -> "MLPParams":
        return MLPParams(self.flat + other.flat, self.input_dim)

    def __mul__(self, c: float) -> "MLPParams":
        return MLPParams(self.flat * c, self.input_dim)

    __rmul__ = __mul__


Gradients = MLPParams


@dataclass(eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-7

    @classmethod
    def fresh(cls, size: int, **hyper) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0, **hyper)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t, self.lr, self.beta1, self.beta2, self.eps_hat)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    minibatch_size: int = 20
    shuffle_seed: int = 0
    weight_init_seed: int = 0
    lr: float = 0.001

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")


def init_params(input_dim: int, seed: int) -> MLPParams:
    """Glorot-uniform weights, zero biases."""
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in tensor_shapes(input_dim).items():
        if name.startswith("W"):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-limit, limit, size=shape)
        else:
            tensors[name] = np.zeros(shape)
    return MLPParams.from_tensors(tensors)


def sigmoid(z):
    return expit(np.asarray(z, dtype=np.float64))


@dataclass
class ForwardCache:
    x: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    z3: np.ndarray
    p: np.ndarray = field(repr=False)


def _forward_batch(params: MLPParams, X: np.ndarray) -> ForwardCache:
    z1 = X @ params.W1 + params.b1
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ params.W2 + params.b2
    a2 = np.maximum(z2, 0.0)
    z3 = (a2 @ params.W3)[:, 0] + params.b3[0]
    return ForwardCache(X, z1, a1, z2, a2, z3, sigmoid(z3))


def forward(params: MLPParams, x) -> tuple[float, ForwardCache]:
    """Output probability for a single feature vector, plus cached activations."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise ValueError(f"x has shape {x.shape}, expected ({params.input_dim},)")
    if not np.all(np.isfinite(x)):
        raise NumericInputError("non-finite value in network input")
    cache = _forward_batch(params, x[None, :])
    return float(cache.p[0]), cache


def bce_loss(p, y):
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = -(y * np.log(p) + (1 - y) * np.log1p(-p))
    return float(loss) if np.ndim(loss) == 0 else loss


def _output_delta(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    # d bce / d z3; zero where the clamp is active
    delta = p - y
    delta[(p < PROB_CLAMP) | (p > 1.0 - PROB_CLAMP)] = 0.0
    return delta


def per_example_gradients(params: MLPParams, X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Gradient of each example's loss, as rows of a ``(batch, n_params)`` matrix."""
    c = _forward_batch(params, X)
    b, d = X.shape
    offs = _offsets(d)
    G = np.empty((b, n_params(d)))

    def view(name):
        lo, hi, shape = offs[name]
        return G[:, lo:hi].reshape((b,) + shape)

    d3 = _output_delta(c.p, np.asarray(y, dtype=np.float64))
    np.multiply(c.a2[:, :, None], d3[:, None, None], out=view("W3"))
    view("b3")[:, 0] = d3
    d2 = d3[:, None] * params.W3[:, 0] * (c.z2 > 0)
    np.multiply(c.a1[:, :, None], d2[:, None, :], out=view("W2"))
    view("b2")[:] = d2
    d1 = (d2 @ params.W2.T) * (c.z1 > 0)
    np.multiply(X[:, :, None], d1[:, None, :], out=view("W1"))
    view("b1")[:] = d1
    return G, c


def backward_per_example(params: MLPParams, x, y) -> Gradients:
    x = np.asarray(x, dtype=np.float64)
    G, _ = per_example_gradients(params, x[None, :], np.array([y], dtype=np.float64))
    return Gradients(G[0], params.input_dim)


def _adam_update(flat: np.ndarray, state: AdamState, g: np.ndarray) -> None:
    """In-place Adam step with bias correction."""
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * g
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    flat -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)


def adam_step(state: AdamState, params: MLPParams, grad: Gradients) -> tuple[MLPParams, AdamState]:
    """Return updated copies of ``params`` and ``state``; inputs are not modified."""
    g = grad.flat if isinstance(grad, MLPParams) else np.asarray(grad, dtype=np.float64)
    if g.shape != params.flat.shape or state.m.shape != params.flat.shape:
        raise ValueError("gradient, parameters and optimizer state must have the same shape")
    new_params, new_state = params.copy(), state.copy()
    _adam_update(new_params.flat, new_state, g)
    return new_params, new_state


def epoch_seed(shuffle_seed: int, epoch: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([shuffle_seed, epoch])


def _as_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, tuple):
        X, y = data
    else:
        X, y = data.features, data.labels
    return np.asarray(X, dtype=np.float64), np.asarray(y, dtype=np.float64)


def train(
    data,
    config: TrainConfig = TrainConfig(),
    privacy=None,
    noise_seed: int | None = None,
    history: list | None = None,
) -> MLPParams:
    """Train a fresh network.

    ``data`` is a dataset split (``.features``/``.labels``) or an ``(X, y)``
    pair. With ``privacy=None`` each minibatch's per-example gradients are
    averaged; with a :class:`~dpfair.privacy.PrivacySpec` they are clipped and
    noised first. The mean minibatch loss of every epoch is appended to
    ``history`` if given.
    """
    X, y = _as_arrays(data)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    params = init_params(X.shape[1], config.weight_init_seed)
    state = AdamState.fresh(params.flat.size, lr=config.lr)
    if privacy is not None:
        from .privacy import _noisy_mean

        noise_rng = np.random.default_rng(noise_seed)
    bs = config.minibatch_size
    for epoch in range(config.epochs):
        order = np.random.default_rng(epoch_seed(config.shuffle_seed, epoch)).permutation(n)
        loss_sum, n_batches = 0.0, 0
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            G, cache = per_example_gradients(params, X[idx], y[idx])
            if privacy is None:
                g = G.sum(axis=0) / len(idx)
            else:
                g = _noisy_mean(G, privacy.clip_norm, privacy.noise_multiplier, noise_rng)
            _adam_update(params.flat, state, g)
            if history is not None:
                loss_sum += float(np.mean(bce_loss(cache.p, y[idx])))
                n_batches += 1
        if history is not None:
            history.append(loss_sum / n_batches)
    return params


def predict_proba(params: MLPParams, data) -> np.ndarray:
    X = data.features if hasattr(data, "features") else data
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    return _forward_batch(params, X).p


def save_checkpoint(params: MLPParams, path: str | Path) -> Path:
    """Write weights as text: per tensor a ``name dim...`` line, then its row-major values."""
    path = Path(path)
    lines = []
    for name, arr in params.tensors().items():
        lines.append(" ".join([name, *map(str, arr.shape)]))
        lines.append(" ".join(repr(float(v)) for v in arr.ravel()))
    path.write_text("\n".join(lines) + "\n")
    return path


def load_checkpoint(path: str | Path) -> MLPParams:
    lines = Path(path).read_text().splitlines()
    tensors = {}
    for header, values in zip(lines[0::2], lines[1::2]):
        name, *dims = header.split()
        shape = tuple(int(d) for d in dims)
        tensors[name] = np.array([float(v) for v in values.split()]).reshape(shape)
    return MLPParams.from_tensors(tensors)


def stack(grads: Sequence[Gradients]) -> np.ndarray:
    return np.stack([g.flat for g in grads])
