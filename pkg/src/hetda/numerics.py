"""Dense linear algebra, MLP plumbing, and deterministic randomness.

Conventions used across the package:

* matrices are 2-D float64 ``numpy`` arrays, samples sit in *columns*;
* MLP layers compute ``W @ a + b`` with LeakyReLU(0.01) on hidden layers
  and an identity final layer;
* all randomness flows through :class:`Rng`, a counter-based Philox
  wrapper whose streams can be split so that parallel work is seedable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ContractError, DegeneracyError, NumericError, ShapeError

_MASK64 = 0xFFFFFFFFFFFFFFFF
LEAKY_SLOPE = 0.01


# ---------------------------------------------------------------------------
# randomness


class Rng:
    """Seedable, splittable random source.

    Built on Philox so that a (seed, stream) pair fully determines the
    draw sequence; ``split(i)`` hands out independent streams, which is
    what lets grid-search cells run in parallel without changing results.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def split(self, index: int) -> "Rng":
        """Independent child stream; index i maps to stream i + 1."""
        if index < 0:
            raise ContractError("split index must be non-negative")
        return Rng(self.seed, stream=index + 1)

    def normal(self, shape) -> np.ndarray:
        return self.gen.standard_normal(shape)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self.gen.uniform(low, high, shape)

    def integers(self, n: int, size=None):
        return self.gen.integers(0, n, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def choice(self, n: int, size: int) -> np.ndarray:
        """Draw ``size`` distinct indices from range(n)."""
        if size > n:
            raise ContractError(f"cannot draw {size} distinct items from {n}")
        return self.gen.choice(n, size=size, replace=False)


# ---------------------------------------------------------------------------
# matrix helpers


def as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def ensure_finite(name: str, *arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values in {name}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def orthogonalize(w: np.ndarray) -> np.ndarray:
    """Nearest row-orthonormal matrix (polar factor via SVD).

    Requires rows <= cols; the result satisfies ``out @ out.T == I``.
    """
    w = as_matrix(w)
    rows, cols = w.shape
    if rows > cols:
        raise ShapeError(f"orthogonalize requires rows <= cols, got {w.shape}")
    u, s, vt = np.linalg.svd(w, full_matrices=False)
    if s[-1] < 1e-12:
        raise DegeneracyError(
            f"rank-deficient input to orthogonalize (smallest singular value {s[-1]:.3e})"
        )
    return u @ vt


def unit_clip_columns(w: np.ndarray) -> np.ndarray:
    """Scale any column with l2 norm > 1 down onto the unit ball.

    Columns already inside the ball are returned bit-identically, which
    makes the operation idempotent up to rounding in the rescaled ones.
    """
    w = as_matrix(w)
    norms = np.linalg.norm(w, axis=0)
    factor = np.ones_like(norms)
    over = norms > 1.0
    factor[over] = 1.0 / norms[over]
    return w * factor


def sgd_step(params: np.ndarray, grads: np.ndarray, lr: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ShapeError(f"sgd_step shape mismatch: {params.shape} vs {grads.shape}")
    if lr < 0:
        raise ContractError("learning rate must be >= 0")
    if not np.all(np.isfinite(grads)):
        raise NumericError("non-finite gradient in sgd_step")
    return params - lr * grads


# ---------------------------------------------------------------------------
# MLPs


class Activation(enum.Enum):
    LEAKY_RELU = "leaky_relu"
    IDENTITY = "identity"


class Layer(NamedTuple):
    weight: np.ndarray  # (d_out, d_in)
    bias: np.ndarray  # (d_out,)


@dataclass
class MlpParams:
    """Fully connected net; hidden layers use ``activation``, the final
    layer is always identity (raw scores / embeddings)."""

    layers: list[Layer]
    activation: Activation = Activation.LEAKY_RELU

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def validate(self) -> None:
        if not self.layers:
            raise ShapeError("MLP needs at least one layer")
        prev = None
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} malformed")
            if prev is not None and w.shape[1] != prev:
                raise ShapeError(f"layer {i}: input dim {w.shape[1]} != previous output {prev}")
            prev = w.shape[0]


class MlpCache(NamedTuple):
    inputs: list[np.ndarray]  # activations entering each layer
    preacts: list[np.ndarray]  # W @ a + b for each layer


def mlp_init(rng: Rng, dims: Sequence[int], activation: Activation = Activation.LEAKY_RELU) -> MlpParams:
    """Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases."""
    if len(dims) < 2:
        raise ShapeError("need at least input and output dims")
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (d_in + d_out))
        w = rng.uniform(-limit, limit, (d_out, d_in))
        layers.append(Layer(w, np.zeros(d_out)))
    return MlpParams(layers, activation)


def _act(z: np.ndarray, kind: Activation) -> np.ndarray:
    if kind is Activation.IDENTITY:
        return z
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def _act_deriv(z: np.ndarray, kind: Activation) -> np.ndarray:
    if kind is Activation.IDENTITY:
        return np.ones_like(z)
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, MlpCache]:
    """Forward pass over samples-as-columns input (d_in, n)."""
    x = as_matrix(x)
    if x.shape[0] != params.in_dim:
        raise ShapeError(f"input dim {x.shape[0]} != net input {params.in_dim}")
    inputs, preacts = [], []
    a = x
    last = len(params.layers) - 1
    for i, (w, b) in enumerate(params.layers):
        inputs.append(a)
        z = w @ a + b[:, None]
        preacts.append(z)
        a = z if i == last else _act(z, params.activation)
    return a, MlpCache(inputs, preacts)


def mlp_backward(
    params: MlpParams, cache: MlpCache, grad_out: np.ndarray
) -> tuple[list[Layer], np.ndarray]:
    """Backprop. Returns per-layer (dW, db) and the gradient wrt the input."""
    grad_layers: list[Layer] = [None] * len(params.layers)  # type: ignore[list-item]
    da = np.asarray(grad_out, dtype=np.float64)
    last = len(params.layers) - 1
    for i in range(last, -1, -1):
        w, _ = params.layers[i]
        z = cache.preacts[i]
        dz = da if i == last else da * _act_deriv(z, params.activation)
        grad_layers[i] = Layer(dz @ cache.inputs[i].T, dz.sum(axis=1))
        da = w.T @ dz
    return grad_layers, da


def mlp_zero_grads(params: MlpParams) -> list[Layer]:
    return [Layer(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers]


def mlp_add_grads(a: list[Layer], b: list[Layer]) -> list[Layer]:
    return [Layer(ga.weight + gb.weight, ga.bias + gb.bias) for ga, gb in zip(a, b)]


def mlp_scale_grads(g: list[Layer], c: float) -> list[Layer]:
    return [Layer(c * gw, c * gb) for gw, gb in g]


def mlp_step(params: MlpParams, grads: list[Layer], lr: float) -> MlpParams:
    layers = [
        Layer(sgd_step(w, gw, lr), sgd_step(b, gb, lr))
        for (w, b), (gw, gb) in zip(params.layers, grads)
    ]
    return MlpParams(layers, params.activation)
