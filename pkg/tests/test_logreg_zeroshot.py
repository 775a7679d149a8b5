import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fewshot_retrieval import DataError, EpisodeConfig
from fewshot_retrieval.augment import QUERY, SUPPORT, FeatureMatrix
from fewshot_retrieval.learners.logreg import lr_fit, lr_fit_predict
from fewshot_retrieval.learners.training import TrainSettings, evaluate, train_model
from fewshot_retrieval.learners.zeroshot import zero_shot_predict

# LR with A=0 on the fixed synthetic spec, seed 0, 200 test episodes: the sweep baseline
LR_BASELINE = 0.7668


def fm(x, labels, origin):
    x = np.asarray(x, dtype=np.float64)
    return FeatureMatrix(x, np.asarray(labels), np.ones(len(labels)), np.array([origin] * len(labels)))


def test_separable_two_class_problem():
    centers = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    preds = lr_fit_predict(fm(centers, [0, 1], SUPPORT), fm(centers, [0, 1], QUERY))
    assert preds.tolist() == [0, 1]


def test_one_shot_memorization(rng):
    x = rng.standard_normal((10, 16))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    preds = lr_fit_predict(fm(x, np.arange(10), SUPPORT), fm(x, np.arange(10), QUERY))
    assert preds.tolist() == list(range(10))


def test_fit_reaches_stationary_point(rng):
    x = rng.standard_normal((12, 3))
    y = np.repeat(np.arange(3), 4)
    w, b = lr_fit(x, y, 3, max_iters=20_000, tol=1e-9)
    logits = x @ w + b
    p = np.exp(logits - logits.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    resid = p - np.eye(3)[y]
    np.testing.assert_allclose(x.T @ resid + w, 0.0, atol=1e-8)
    np.testing.assert_allclose(resid.sum(0), 0.0, atol=1e-8)


def test_single_class_is_degenerate():
    with pytest.raises(DataError):
        lr_fit(np.ones((3, 2)), np.zeros(3, dtype=int), 2)


def test_pinned_lr_baseline(fixed_dataset):
    cfg = EpisodeConfig(seed=0)
    settings_ = TrainSettings(test_episodes=200)
    acc = evaluate(train_model("lr", fixed_dataset, cfg, settings_), fixed_dataset, cfg, settings_)
    assert acc.mean() == pytest.approx(LR_BASELINE, abs=1e-3)


def test_zero_shot_trivia():
    text = np.eye(3)
    assert zero_shot_predict(text, text).tolist() == [0, 1, 2]
    # orthogonal to every class: all scores tie at zero, lowest index wins
    orth = np.array([[0.0, 0.0, 0.0, 1.0]])
    assert zero_shot_predict(orth, np.eye(4)[:3]).tolist() == [0]
    with pytest.raises(DataError):
        zero_shot_predict(np.zeros((1, 3)), text)
    with pytest.raises(DataError):
        zero_shot_predict(np.ones((1, 4)), text)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.floats(1e-3, 1e3))
def test_zero_shot_scale_invariance(seed, scale):
    r = np.random.default_rng(seed)
    q, t = r.standard_normal((5, 8)), r.standard_normal((4, 8))
    assert zero_shot_predict(q, t).tolist() == zero_shot_predict(scale * q, t).tolist()


def test_zero_noise_zero_shot_is_perfect(zero_noise_dataset):
    cfg = EpisodeConfig(n_way=5)
    s = TrainSettings(test_episodes=50)
    acc = evaluate(train_model("zs", zero_noise_dataset, cfg, s), zero_noise_dataset, cfg, s)
    assert acc.min() == 1.0
