import numpy as np
import pytest

from crashprint.errors import InvalidStateError, TrainingDivergedError
from crashprint.numerics import (SGD, Adam, Dense, Network, Rng, activate, gradient_check,
                                 make_optimizer)
from oracles import dense_forward


def small_net(rng, dims=(6, 4, 3), acts=("relu", "sigmoid"), dtype=np.float64):
    layers = [Dense.xavier(a, b, act, rng, dtype) for a, b, act in zip(dims[:-1], dims[1:], acts)]
    return Network(layers)


def test_rng_is_reproducible_and_spawn_independent():
    a, b = Rng(5), Rng(5)
    np.testing.assert_array_equal(a.normal(4), b.normal(4))
    s1, s2 = Rng(5).spawn(1), Rng(5).spawn(2)
    assert not np.array_equal(s1.normal(4), s2.normal(4))
    np.testing.assert_array_equal(Rng(5).spawn(1).normal(4), Rng(5).spawn(1).normal(4))
    assert isinstance(Rng(0).uniform(0, 1), float)


def test_forward_matches_bruteforce():
    net = small_net(Rng(0))
    x = Rng(1).uniform(0, 1, 6)
    out, _ = net.forward(x)
    plain = [(layer.weights.tolist(), layer.bias.tolist(), layer.activation) for layer in net.layers]
    np.testing.assert_allclose(out, dense_forward(plain, x.tolist()), rtol=1e-12)


def test_batch_forward_matches_rowwise():
    net = small_net(Rng(0))
    x = Rng(1).uniform(0, 1, (5, 6))
    out, _ = net.forward(x)
    for i in range(5):
        np.testing.assert_allclose(out[i], net.forward(x[i])[0], rtol=1e-12)


def test_activations():
    a = np.array([-800.0, -1.0, 0.0, 2.0, 800.0])
    np.testing.assert_array_equal(activate("relu", a), [0, 0, 0, 2, 800])
    s = activate("sigmoid", a)
    assert np.all(np.isfinite(s)) and s[0] == pytest.approx(0) and s[-1] == pytest.approx(1)
    np.testing.assert_allclose(activate("sigmoid", np.array([0.0])), [0.5])
    np.testing.assert_array_equal(activate("linear", a), a)


@pytest.mark.parametrize("acts", [("relu", "sigmoid"), ("linear", "relu"), ("sigmoid", "linear")])
def test_network_gradient_check(acts):
    net = small_net(Rng(3), acts=acts)
    x = Rng(4).uniform(0.1, 1, (3, 6))
    target = Rng(5).uniform(0, 1, (3, 3))

    def lg():
        out, tape = net.forward(x)
        diff = out - target
        grads, _ = net.backward(tape, 2 * diff / diff.size)
        return float(np.mean(diff ** 2)), grads

    report = gradient_check(lg, net.params())
    assert report.passed, report


def test_input_gradient():
    net = small_net(Rng(3))
    x = Rng(4).uniform(0.1, 1, (2, 6))
    out, tape = net.forward(x)
    _, dx = net.backward(tape, np.ones_like(out))
    eps = 1e-6
    xp = x.copy()
    xp[1, 2] += eps
    xm = x.copy()
    xm[1, 2] -= eps
    numeric = (net.forward(xp)[0].sum() - net.forward(xm)[0].sum()) / (2 * eps)
    assert dx[1, 2] == pytest.approx(numeric, rel=1e-5)


def test_stale_tape_rejected():
    net = small_net(Rng(0))
    out, tape = net.forward(np.ones(6))
    net.touch()
    with pytest.raises(InvalidStateError):
        net.backward(tape, np.ones_like(out))


def test_adam_minimises_quadratic():
    w = np.array([3.0, -2.0])
    opt = Adam(lr=0.1)
    for _ in range(500):
        opt.step([w], [2 * w])
    assert np.abs(w).max() < 1e-2


def test_sgd_momentum_step():
    w = np.array([1.0])
    opt = SGD(lr=0.1, momentum=0.9)
    opt.step([w], [np.array([1.0])])
    assert w[0] == pytest.approx(0.9)
    opt.step([w], [np.array([1.0])])
    assert w[0] == pytest.approx(0.9 - 0.1 * 1.9)
    assert isinstance(make_optimizer("sgd", 0.1), SGD)


def test_nonfinite_gradient_raises_diverged():
    with pytest.raises(TrainingDivergedError):
        Adam().step([np.zeros(2)], [np.array([np.nan, 0.0])], epoch=7)


def test_gradient_check_detects_wrong_gradient():
    w = np.array([1.0, 2.0])
    report = gradient_check(lambda: (float((w ** 2).sum()), [3 * w]), [w])
    assert not report.passed


def test_identity_layer_and_relu():
    layer = Dense(np.eye(3), np.zeros(3), "linear")
    x = np.array([0.2, -1.0, 4.0])
    np.testing.assert_array_equal(Network([layer])(x), x)
    np.testing.assert_array_equal(activate("relu", np.array([-1.0, 2.0])), [0.0, 2.0])


def test_linear_layer_weight_gradient_is_outer_product():
    rng = np.random.default_rng(0)
    net = Network([Dense(rng.normal(size=(2, 3)), np.zeros(2), "linear")])
    x, g = rng.normal(size=3), rng.normal(size=2)
    _, tape = net.forward(x)
    (dw, db), dx = net.backward(tape, g)
    np.testing.assert_allclose(dw, np.outer(g, x))
    np.testing.assert_allclose(db, g)
    np.testing.assert_allclose(dx, net.layers[0].weights.T @ g)


def test_zero_upstream_gradient():
    net = small_net(Rng(0))
    out, tape = net.forward(Rng(1).uniform(0, 1, (2, 6)))
    grads, dx = net.backward(tape, np.zeros_like(out))
    assert all(not g.any() for g in grads) and not dx.any()


def test_adam_zero_gradient_and_single_step():
    w = np.array([1.0])
    Adam(lr=0.1).step([w], [np.zeros(1)])
    assert w[0] == 1.0
    Adam(lr=0.1).step([w], [2 * w])
    assert abs(w[0]) < 1.0


def test_seeded_training_steps_are_bitwise_identical():
    def run():
        net = small_net(Rng(7), dtype=np.float32)
        opt = Adam(lr=1e-2)
        x = Rng(8).uniform(0, 1, (4, 6)).astype(np.float32)
        for _ in range(5):
            out, tape = net.forward(x)
            grads, _ = net.backward(tape, out - 0.5)
            opt.step(net.params(), grads)
            net.touch()
        return net.params()

    for a, b in zip(run(), run()):
        np.testing.assert_array_equal(a, b)
