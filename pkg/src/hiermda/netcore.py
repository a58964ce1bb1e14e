"""Feed-forward softmax classifier over a flat parameter vector.

Parameter layout, per affine layer ``l`` in order: the weight matrix of shape
``(widths[l+1], widths[l])`` flattened row-major, then the bias of length
``widths[l+1]``. Hidden layers apply the configured activation; the last layer is
affine followed by a max-shifted softmax.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _backend

ACTIVATIONS = {"relu": _backend.RELU, "tanh": _backend.TANH}


class DimensionError(ValueError):
    """Array shapes disagree with the network spec."""


@dataclass(frozen=True)
class NetSpec:
    """Layer widths ``[d_in, h_1, ..., h_L, K]``, hidden activation and the
    index of the first decoder layer (layers below it form the encoder)."""

    layer_widths: tuple[int, ...]
    activation: str = "relu"
    encoder_boundary: int | None = None

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"invalid layer widths {widths}")
        if widths[-1] < 2:
            raise ValueError("need at least two classes")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(ACTIVATIONS)}")
        if self.encoder_boundary is None:
            # default: the final affine layer is the decoder
            object.__setattr__(self, "encoder_boundary", self.num_layers - 1)
        if not 0 <= self.encoder_boundary <= self.num_layers:
            raise ValueError(f"encoder_boundary must lie in [0, {self.num_layers}]")

    @property
    def num_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def num_inputs(self) -> int:
        return self.layer_widths[0]

    @property
    def num_classes(self) -> int:
        return self.layer_widths[-1]

    @property
    def act_code(self) -> int:
        return ACTIVATIONS[self.activation]

    def layer_sizes(self) -> list[int]:
        w = self.layer_widths
        return [w[l] * w[l + 1] + w[l + 1] for l in range(self.num_layers)]

    @property
    def num_params(self) -> int:
        return sum(self.layer_sizes())

    @property
    def num_encoder_params(self) -> int:
        return sum(self.layer_sizes()[: self.encoder_boundary])

    @property
    def num_decoder_params(self) -> int:
        return self.num_params - self.num_encoder_params


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: int


def as_arrays(batch, spec: NetSpec | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Coerce a dataset-like object or a list of ``Sample`` into ``(X, y)``."""
    if hasattr(batch, "X") and hasattr(batch, "y"):
        X, y = batch.X, batch.y
    else:
        batch = list(batch)
        if not batch:
            raise ValueError("empty batch")
        X = np.array([np.asarray(s.x, dtype=np.float64) for s in batch])
        y = np.array([s.y for s in batch])
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionError(f"features {X.shape} do not match labels {y.shape}")
    if len(y) == 0:
        raise ValueError("empty batch")
    if spec is not None:
        if X.shape[1] != spec.num_inputs:
            raise DimensionError(f"expected {spec.num_inputs} features, got {X.shape[1]}")
        if y.min() < 0 or y.max() >= spec.num_classes:
            raise ValueError(f"labels must lie in [0, {spec.num_classes})")
    return X, y


def _check_theta(spec: NetSpec, theta) -> np.ndarray:
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    if theta.shape != (spec.num_params,):
        raise DimensionError(f"expected {spec.num_params} parameters, got shape {theta.shape}")
    return theta


def init_params(spec: NetSpec, seed: int) -> np.ndarray:
    """Weights ~ N(0, 1/fan_in), biases zero."""
    rng = np.random.default_rng(seed)
    parts = []
    w = spec.layer_widths
    for l in range(spec.num_layers):
        fan_in, fan_out = w[l], w[l + 1]
        parts.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=fan_out * fan_in))
        parts.append(np.zeros(fan_out))
    return np.concatenate(parts)


def unflatten(spec: NetSpec, theta) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-layer ``(W, b)`` copies."""
    theta = _check_theta(spec, theta)
    out, off = [], 0
    w = spec.layer_widths
    for l in range(spec.num_layers):
        n_in, n_out = w[l], w[l + 1]
        W = theta[off:off + n_in * n_out].reshape(n_out, n_in).copy()
        off += n_in * n_out
        out.append((W, theta[off:off + n_out].copy()))
        off += n_out
    return out


def flatten(layers: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([np.ravel(W), np.ravel(b)]) for W, b in layers])


def forward_batch(spec: NetSpec, theta, X) -> np.ndarray:
    theta = _check_theta(spec, theta)
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    if X.shape[1] != spec.num_inputs:
        raise DimensionError(f"expected {spec.num_inputs} features, got {X.shape[1]}")
    return _backend.kernels.forward_batch(spec.layer_widths, spec.act_code, theta, X)


def forward(spec: NetSpec, theta, x) -> np.ndarray:
    """Class probabilities for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("forward takes one feature vector; use forward_batch")
    return forward_batch(spec, theta, x[None, :])[0]


def data_loss(spec: NetSpec, theta, batch) -> float:
    """Summed cross-entropy, probabilities floored at 1e-12 inside the log."""
    X, y = as_arrays(batch, spec)
    theta = _check_theta(spec, theta)
    return _backend.kernels.batch_loss(spec.layer_widths, spec.act_code, theta, X, y)


def data_loss_and_grad(spec: NetSpec, theta, batch) -> tuple[float, np.ndarray]:
    X, y = as_arrays(batch, spec)
    theta = _check_theta(spec, theta)
    return _backend.kernels.loss_and_grad(spec.layer_widths, spec.act_code, theta, X, y)


def data_grad(spec: NetSpec, theta, batch) -> np.ndarray:
    return data_loss_and_grad(spec, theta, batch)[1]


def fd_grad(loss_fn: Callable[[np.ndarray], float], theta, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of ``loss_fn`` at ``theta``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    theta = np.array(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for n in range(theta.size):
        orig = theta[n]
        theta[n] = orig + eps
        hi = loss_fn(theta.copy())
        theta[n] = orig - eps
        lo = loss_fn(theta.copy())
        theta[n] = orig
        grad[n] = (hi - lo) / (2.0 * eps)
    return grad
