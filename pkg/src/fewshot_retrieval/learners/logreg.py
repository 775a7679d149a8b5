"""Per-episode multinomial logistic regression (no meta-learning)."""

from __future__ import annotations

import numpy as np

from ..augment import FeatureMatrix
from ..errors import DataError, NumericError
from .mlp import softmax

L2_PENALTY = 1.0
MAX_ITERS = 500
TOL = 1e-6


def lr_fit(
    x: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    l2: float = L2_PENALTY,
    max_iters: int = MAX_ITERS,
    tol: float = TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Minimize ``sum_i CE_i + l2/2 * ||W||^2`` by full-batch gradient descent.

    The bias is unpenalized. The step size is ``1/L`` with ``L`` the smoothness
    bound ``||[X 1]||_2^2 / 2 + l2``; iteration stops once the largest gradient
    entry drops below ``tol``.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise DataError("logistic regression needs at least two classes in the support set")
    n, d = x.shape
    xb = np.concatenate([x, np.ones((n, 1))], axis=1)
    step = 1.0 / (0.5 * np.linalg.norm(xb, 2) ** 2 + l2)
    onehot = np.eye(n_classes)[labels]
    theta = np.zeros((d + 1, n_classes))
    reg = np.full((d + 1, 1), l2)
    reg[-1] = 0.0
    for _ in range(max_iters):
        p = softmax(xb @ theta)
        grad = xb.T @ (p - onehot) + reg * theta
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite gradient in logistic regression")
        if np.max(np.abs(grad)) < tol:
            break
        theta -= step * grad
    return theta[:-1], theta[-1]


def lr_fit_predict(support_x: FeatureMatrix, query_x: FeatureMatrix) -> np.ndarray:
    """Fit on every support-matrix row (retrieved rows at weight 1) and predict queries."""
    n_classes = int(max(support_x.labels.max(), query_x.labels.max())) + 1
    w, b = lr_fit(support_x.x, support_x.labels, n_classes)
    return np.argmax(query_x.x @ w + b, axis=1)
