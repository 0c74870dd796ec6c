import math

import numpy as np
import pytest

from mstrenet.arch import build_model
from mstrenet.graph import linear_graph, phone_bigram_graph
from mstrenet.trainer import (MmiObjective, TrainConfig, cross_entropy_loss,
                              finite_difference_check, frame_accuracy, make_chunks,
                              mmi_objective_and_grad, state_priors, train)
from conftest import tiny_chunks


def test_chunking_examples():
    feats = np.zeros((900, 4))
    chunks = make_chunks(feats, np.zeros(300, dtype=int), chunk_frames=140)
    assert [c.num_valid for c in chunks] == [140, 140, 20]
    assert all(c.features.shape == (420, 4) for c in chunks)
    assert np.all(chunks[-1].labels[20:] == -1)
    one = make_chunks(np.zeros((420, 4)), np.zeros(140, dtype=int))
    assert len(one) == 1 and one[0].mask.all()
    with pytest.raises(ValueError):
        make_chunks(np.zeros((0, 4)), [])
    with pytest.raises(ValueError, match="expected 10 labels"):
        make_chunks(np.zeros((30, 4)), np.zeros(9, dtype=int))


def test_cross_entropy_examples():
    labels = np.array([0, 2, 1])
    loss, grad = cross_entropy_loss(np.eye(3)[labels], labels)
    assert loss == 0.0 and np.allclose(grad, 0)
    loss, _ = cross_entropy_loss(np.full((4, 5), 0.2), [0, 1, 2, 3])
    assert loss == pytest.approx(math.log(5))
    with pytest.raises(ValueError, match="out of range"):
        cross_entropy_loss(np.full((1, 2), 0.5), [2])


def test_mmi_identities():
    rng = np.random.default_rng(0)
    ll = rng.normal(size=(6, 4))
    g = linear_graph([0, 2, 1])
    f, grad = mmi_objective_and_grad(ll, g, g)
    assert f == 0.0 and np.all(grad == 0)
    den = phone_bigram_graph([[0, 1, 2, 3], [3, 2, 1]])
    _, grad = mmi_objective_and_grad(ll, g, den, kappa=0.0)
    assert np.all(grad == 0)
    f, grad = mmi_objective_and_grad(ll, g, den)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-9)


def test_lr_schedule():
    cfg = TrainConfig()
    rates = [cfg.learning_rate(i) for i in range(6)]
    assert rates[0] == pytest.approx(1e-4) and rates[5] == pytest.approx(1e-5)
    for i, r in enumerate(rates):
        assert r == pytest.approx(1e-4 * 0.1 ** (i / 5))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr_start=1e-5, lr_end=1e-4)
    with pytest.raises(ValueError):
        TrainConfig(objective="ctc")
    with pytest.raises(ValueError, match="empty dataset"):
        train(build_model("tiny"), [], TrainConfig())


def test_priors():
    p = state_priors([np.array([0, 0, 1, -1])], 3)
    assert p.sum() == pytest.approx(1.0) and p[0] > p[1] > p[2] > 0


def test_gradient_checks():
    chunk = tiny_chunks(1, seed=1, chunk_frames=20)[0]
    model = build_model("tiny", seed=0)
    assert finite_difference_check(model, chunk, "cross_entropy") < 1e-4
    den = phone_bigram_graph([chunk.labels[:chunk.num_valid], [0, 1, 2, 3, 4, 5, 6, 7]])
    obj = MmiObjective(den, np.log(state_priors([chunk.labels], 8)))
    assert finite_difference_check(model, chunk, obj) < 1e-4
    with pytest.raises(ValueError):
        finite_difference_check(model, chunk, epsilon=0.0)


def _short_cfg(**kw):
    return TrainConfig(epochs=3, minibatch_size=2, lr_start=0.3, lr_end=0.1, seed=4, **kw)


def test_training_deterministic_and_thread_invariant(monkeypatch):
    chunks = tiny_chunks(4, seed=2)
    model = build_model("tiny", seed=1)
    a = train(model, chunks, _short_cfg())
    b = train(model, chunks, _short_cfg())
    monkeypatch.setenv("MSTRE_THREADS", "3")
    c = train(model, chunks, _short_cfg())
    for k in model.params:
        np.testing.assert_array_equal(a.model.params[k], b.model.params[k])
        np.testing.assert_array_equal(a.model.params[k], c.model.params[k])
    assert a.losses == c.losses and len(a.losses) == 3
    assert a.learning_rates[0] == 0.3


def test_training_reduces_loss():
    chunks = tiny_chunks(4, seed=3)
    result = train(build_model("tiny", seed=0), chunks, _short_cfg())
    assert result.losses[-1] < result.losses[0]
    assert frame_accuracy(result.model, chunks) > 1 / 8


def test_mmi_training_runs():
    chunks = tiny_chunks(3, seed=5, chunk_frames=20)
    den = phone_bigram_graph([c.labels[c.mask] for c in chunks])
    obj = MmiObjective(den, np.log(state_priors([c.labels for c in chunks], 8)))
    result = train(build_model("tiny"), chunks, _short_cfg(objective="mmi"), objective=obj)
    assert all(math.isfinite(x) for x in result.losses)
    with pytest.raises(ValueError, match="MmiObjective"):
        train(build_model("tiny"), chunks, _short_cfg(objective="mmi"))


def test_acoustic_scale_reaches_mmi():
    chunks = tiny_chunks(2, seed=6, chunk_frames=20)
    den = phone_bigram_graph([c.labels[c.mask] for c in chunks])
    obj = MmiObjective(den, np.log(state_priors([c.labels for c in chunks], 8)))
    model = build_model("tiny")
    a = train(model, chunks, _short_cfg(objective="mmi"), objective=obj)
    b = train(model, chunks, _short_cfg(objective="mmi", acoustic_scale=0.5), objective=obj)
    assert a.losses != b.losses
