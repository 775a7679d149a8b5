"""Finite-difference helpers shared by the gradient tests."""

import numpy as np

from fewshot_retrieval.learners.mlp import MlpParams

EPS = 1e-3
# coordinates whose true gradient is this small are compared absolutely
REL_FLOOR = 1e-6


def away_from_kinks(params: MlpParams, x: np.ndarray, margin: float = 0.02) -> MlpParams:
    """Shift hidden biases so no pre-activation lies within ``margin`` of zero.

    Central differences are only meaningful where the ReLU network is smooth;
    with every hidden pre-activation at least ``margin`` away from zero, an
    ``EPS`` perturbation cannot flip a unit.
    """
    ws, bs = [w.copy() for w in params.weights], [b.copy() for b in params.biases]
    a = np.asarray(x, dtype=np.float64)
    for i in range(len(ws) - 1):
        z = a @ ws[i].T + bs[i]
        for j in range(z.shape[1]):
            col = z[:, j]
            shifts = np.concatenate([[0.0], margin * np.repeat(np.arange(1, 200), 2) * np.tile([1, -1], 199)])
            for s in shifts:
                if np.min(np.abs(col + s)) >= margin:
                    bs[i][j] += s
                    break
            else:
                raise AssertionError("no kink-free bias shift found")
        a = np.maximum(a @ ws[i].T + bs[i], 0.0)
    return MlpParams(ws, bs)


def fd_gradient(loss_of_flat, flat: np.ndarray, eps: float = EPS) -> np.ndarray:
    out = np.empty_like(flat)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = eps
        out[i] = (loss_of_flat(flat + e) - loss_of_flat(flat - e)) / (2.0 * eps)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_FLOOR)
    return np.abs(analytic - numeric) / scale
