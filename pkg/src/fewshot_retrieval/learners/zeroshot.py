"""Zero-shot classification against class-name text embeddings."""

from __future__ import annotations

import numpy as np

from ..errors import DataError


def zero_shot_predict(query_vectors: np.ndarray, class_text: np.ndarray) -> np.ndarray:
    """Argmax cosine similarity per query; ties go to the lowest class index."""
    q = np.atleast_2d(np.asarray(query_vectors, dtype=np.float64))
    t = np.atleast_2d(np.asarray(class_text, dtype=np.float64))
    if q.shape[1] != t.shape[1]:
        raise DataError(f"query width {q.shape[1]} != text width {t.shape[1]}")
    qn = np.linalg.norm(q, axis=1)
    if np.any(qn == 0.0):
        raise DataError("zero query vector")
    sims = (q / qn[:, None]) @ (t / np.linalg.norm(t, axis=1, keepdims=True)).T
    return np.argmax(sims, axis=1)
