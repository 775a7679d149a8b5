"""Fully connected ReLU network with hand-written reverse mode, in float64."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import DataError, NumericError


@dataclass(eq=False)
class MlpParams:
    """Affine layers ``(W, b)`` with ``W`` shaped ``(out, in)``; ReLU between layers."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DataError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[0] != b.shape[0]:
                raise DataError(f"layer {i}: weight rows {w.shape[0]} != bias size {b.shape[0]}")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DataError(f"layer {i}: input width does not chain")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflat(self, vec: np.ndarray) -> "MlpParams":
        ws, bs, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vec[pos : pos + w.size].reshape(w.shape).copy())
            pos += w.size
            bs.append(vec[pos : pos + b.size].copy())
            pos += b.size
        return MlpParams(ws, bs)

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def axpy(self, alpha: float, other: "MlpParams") -> "MlpParams":
        """Return ``self + alpha * other``."""
        return MlpParams(
            [w + alpha * o for w, o in zip(self.weights, other.weights)],
            [b + alpha * o for b, o in zip(self.biases, other.biases)],
        )

    def scale(self, c: float) -> "MlpParams":
        return MlpParams([w * c for w in self.weights], [b * c for b in self.biases])

    def dot(self, other: "MlpParams") -> float:
        return float(sum(np.vdot(a, b) for a, b in zip(self.arrays(), other.arrays())))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def orthogonal(rows: int, cols: int, rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_mlp(
    sizes: Sequence[int], rng: np.random.Generator, zero_output: bool = False
) -> MlpParams:
    """Orthogonal init (gain sqrt 2 ahead of a ReLU), zero biases.

    ``zero_output`` zeroes the last layer so an untrained head predicts uniformly.
    """
    if len(sizes) < 2 or min(sizes) < 1:
        raise DataError(f"invalid layer sizes {list(sizes)}")
    ws, bs = [], []
    last = len(sizes) - 2
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if i == last and zero_output:
            ws.append(np.zeros((fan_out, fan_in)))
        else:
            ws.append(orthogonal(fan_out, fan_in, rng, gain=1.0 if i == last else np.sqrt(2.0)))
        bs.append(np.zeros(fan_out))
    return MlpParams(ws, bs)


def _check_input(params: MlpParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != params.weights[0].shape[1]:
        raise DataError(f"input width {x.shape[1]} != layer width {params.weights[0].shape[1]}")
    return x


def forward_cache(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass keeping each layer's input for the backward pass."""
    a = _check_input(params, x)
    inputs = []
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(a)
        z = a @ w.T + b
        a = z if i == last else np.maximum(z, 0.0)
    return a, inputs


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Logits for one row (1-d input) or a batch of rows (2-d input)."""
    out, _ = forward_cache(params, x)
    return out[0] if np.ndim(x) == 1 else out


def backward_from(
    params: MlpParams, inputs: list[np.ndarray], grad_out: np.ndarray
) -> tuple[MlpParams, np.ndarray]:
    """Chain ``grad_out`` (d loss / d output) back through the network.

    Returns the parameter gradient and the gradient with respect to the input.
    """
    g = grad_out
    gw: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * len(params.weights)  # type: ignore[list-item]
    for i in range(len(params.weights) - 1, -1, -1):
        a = inputs[i]
        gw[i] = g.T @ a
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i]
        if i > 0:
            # inputs[i] is relu(z_{i-1}); its positive entries mark the active units
            g = g * (a > 0.0)
    return MlpParams(gw, gb), g


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_weights(weights: np.ndarray | None, n: int) -> np.ndarray:
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise DataError("one weight per row required")
    if np.any(w < 0.0) or np.any(w > 1.0):
        raise DataError("loss weights must lie in [0, 1]")
    if w.sum() <= 0.0:
        raise DataError("all loss weights are zero")
    return w


def _weighted_mean(w: np.ndarray, v: np.ndarray) -> float:
    # shifted by a reference term so that equal values average to themselves exactly
    ref = v[int(np.argmax(w))]
    return float(ref + np.dot(w, v - ref) / w.sum())


def cross_entropy(
    logits: np.ndarray, labels: np.ndarray, weights: np.ndarray | None = None
) -> float:
    """Weighted mean cross-entropy: sum_i w_i CE_i / sum_i w_i."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels)
    w = _check_weights(weights, logits.shape[0])
    return _weighted_mean(w, -log_softmax(logits)[np.arange(len(labels)), labels])


def cross_entropy_grad(
    logits: np.ndarray, labels: np.ndarray, weights: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Loss and its gradient with respect to the logits."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels)
    w = _check_weights(weights, logits.shape[0])
    rows = np.arange(len(labels))
    ls = log_softmax(logits)
    loss = _weighted_mean(w, -ls[rows, labels])
    g = np.exp(ls)
    g[rows, labels] -= 1.0
    g *= (w / w.sum())[:, None]
    return loss, g


def mlp_backward(
    params: MlpParams,
    x: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray | None = None,
) -> tuple[float, MlpParams]:
    """Weighted cross-entropy loss of the network and its exact parameter gradient."""
    logits, inputs = forward_cache(params, x)
    loss, g = cross_entropy_grad(logits, labels, weights)
    grads, _ = backward_from(params, inputs, g)
    if not np.isfinite(loss) or not grads.is_finite():
        raise NumericError("non-finite loss or gradient in MLP backward pass")
    return loss, grads
