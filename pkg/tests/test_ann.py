import numpy as np
import pytest

from coingrade import ann, features
from coingrade.ann import TrainConfig
from coingrade.errors import ShapeMismatch


def small_net(rng, dims=(5, 4, 3), labels=(60, 62, 64)):
    return ann.init_model(list(dims), list(labels), rng)


def negate_one(entry_layer=-1):
    """Backward pass with the largest-magnitude gradient of one weight flipped."""
    def grad_fn(model, X, y):
        loss, grads = ann.loss_and_grads(model, X, y)
        dW = grads[entry_layer][0].copy()
        i = np.unravel_index(np.argmax(np.abs(dW)), dW.shape)
        dW[i] = -dW[i]
        grads = list(grads)
        grads[entry_layer] = (dW, grads[entry_layer][1])
        return loss, grads
    return grad_fn


def test_zero_weights_give_uniform(rng):
    m = small_net(rng)
    for w in m.weights:
        w[:] = 0
    p = ann.forward(m, rng.normal(size=(7, 5)))
    assert np.allclose(p, 1 / 3, atol=1e-15)


def test_probabilities_sum_to_one(rng):
    m = small_net(rng, dims=(10, 8, 6), labels=range(6))
    p = ann.forward(m, rng.normal(scale=20, size=(1000, 10)))
    assert np.all(np.abs(p.sum(axis=1) - 1) < 1e-9) and np.all(p >= 0)


def test_hand_computed_2_2_2():
    m = ann.MlpModel([2, 2, 2], [np.array([[1.0, -1.0], [0.5, 2.0]]), np.array([[1.0, 0.0], [-1.0, 1.0]])],
                     [np.array([0.0, 0.5]), np.array([0.1, -0.1])], [63, 64])
    x = np.array([1.0, 2.0])
    # hidden: [1 + 1, -1 + 4 + 0.5] = [2, 3.5]; logits: [2 - 3.5 + 0.1, 3.5 - 0.1] = [-1.4, 3.4]
    e = np.exp([-1.4, 3.4])
    assert np.allclose(ann.logits(m, x), [-1.4, 3.4], atol=1e-15)
    assert np.allclose(ann.forward(m, x), e / e.sum(), atol=1e-15)
    x2 = np.array([-3.0, 0.0])  # hidden pre-activation [-3, 3.5]: first unit clipped by ReLU
    assert np.allclose(ann.logits(m, x2), [-3.5 + 0.1, 3.5 - 0.1], atol=1e-15)


def test_shape_mismatch(rng):
    m = small_net(rng)
    with pytest.raises(ShapeMismatch):
        ann.forward(m, np.zeros(6))


def test_separable_two_class(rng):
    a = rng.normal(size=(100, 2)) + [2.5, 2.5]
    b = rng.normal(size=(100, 2)) - [2.5, 2.5]
    X = np.vstack([a, b])
    y = np.array([60] * 100 + [64] * 100)
    cfg = TrainConfig(hidden=(8,), seed=1)
    m, hist = ann.train(X, y, cfg)
    assert len(hist.loss) == 97
    assert np.mean(ann.predict_grades(m, X) == y) >= 0.99
    assert hist.loss[-1] < hist.loss[0]


def test_loss_decreases_on_noisy_data(rng):
    X = rng.normal(size=(120, 6))
    y = np.where(X[:, 0] + 0.5 * rng.normal(size=120) > 0, 63, 65)
    _, hist = ann.train(X, y, TrainConfig(hidden=(16, 8), seed=4))
    assert hist.loss[-1] < hist.loss[0]
    assert len(hist.val_loss) == 97


def test_training_deterministic(rng):
    X = rng.normal(size=(80, 5))
    y = rng.choice([61, 62, 63], size=80)
    cfg = TrainConfig(hidden=(6,), seed=9, epochs=5)
    m1, h1 = ann.train(X, y, cfg)
    m2, h2 = ann.train(X, y, cfg)
    assert all(np.array_equal(a, b) for a, b in zip(m1.weights + m1.biases, m2.weights + m2.biases))
    assert h1 == h2


def test_gradient_check_random_networks(rng):
    for trial in range(10):
        dims = [int(rng.integers(2, 6)), int(rng.integers(2, 6)), int(rng.integers(2, 5))]
        m = ann.init_model(dims, list(range(dims[-1])), rng)
        for b in m.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        X = rng.normal(size=(6, dims[0]))
        y = rng.integers(0, dims[-1], size=6)
        assert ann.gradient_check(m, X, y) < 1e-4
        assert ann.gradient_check(m, X, y, grad_fn=negate_one()) > 1e-1


def test_zero_loss_batch_tiny_gradient():
    m = ann.MlpModel([2, 2], [np.array([[40.0, -40.0], [0.0, 0.0]])], [np.zeros(2)], [1, 2])
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    loss, grads = ann.loss_and_grads(m, X, np.array([0, 1]))
    assert loss < 1e-30
    assert max(np.abs(g).max() for pair in grads for g in pair) < 1e-30


def test_predict_tie_and_argmax(rng):
    m = small_net(rng, labels=(62, 64, 66))
    for w in m.weights:
        w[:] = 0
    assert ann.predict(m, np.zeros(5))[0] == 62
    m.biases[-1][:] = [0.0, 3.0, 1.0]
    assert ann.predict(m, np.zeros(5))[0] == 64


def test_softmax_shift_invariance(rng):
    z = rng.normal(size=(50, 7))
    for c in (-1e3, 3.5, 1e3):
        assert np.array_equal(np.argmax(ann.softmax(z + c), axis=1), np.argmax(ann.softmax(z), axis=1))
        assert np.allclose(ann.softmax(z + c), ann.softmax(z), atol=1e-12)


def test_label_map_round_trip(rng):
    m = small_net(rng, labels=(50, 58, 64))
    for i, g in enumerate(m.label_map):
        assert m.class_index(g) == i


def test_save_load_bit_exact(tmp_path, rng):
    X = rng.normal(size=(40, 5)) * 3 + 1
    stats = features.fit_standardization(X)
    y = rng.choice([63, 64], size=40)
    m, hist = ann.train(stats.apply(X), y, TrainConfig(hidden=(4,), epochs=3), stats=stats)
    path = tmp_path / "m.json"
    ann.save(m, path, hist, config={"seed": 0})
    back = ann.load(path)
    assert all(np.array_equal(a, b) for a, b in zip(m.weights + m.biases, back.weights + back.biases))
    assert np.array_equal(back.stats.mean, stats.mean) and np.array_equal(back.stats.std, stats.std)
    assert np.array_equal(ann.predict_proba(back, X), ann.predict_proba(m, X))
    first = path.read_bytes()
    ann.save(back, path, hist, config={"seed": 0})
    assert path.read_bytes() == first
