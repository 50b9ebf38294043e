"""Engine tests: forward/backward correctness, Adam, losses, serialization."""

import numpy as np
import pytest

from hullgan import nn


def single_layer(weight, bias, activation):
    return nn.Network([nn.Layer(
        np.asarray(weight, dtype=np.float64),
        np.asarray(bias, dtype=np.float64),
        activation,
    )])


def test_forward_identity_linear():
    net = single_layer([[1.0]], [0.0], "linear")
    acts = nn.forward(net, [[3.0]])
    assert acts[-1] == pytest.approx([[3.0]])


def test_forward_relu_sign_split():
    net = single_layer([[1.0], [-1.0]], [0.0, 0.0], "relu")
    out = nn.forward(net, [[2.0]])[-1]
    np.testing.assert_allclose(out, [[2.0, 0.0]])


def test_forward_softmax_symmetry():
    net = single_layer(np.zeros((4, 2)), np.zeros(4), "softmax")
    out = nn.forward(net, [[1.0, -1.0]])[-1]
    np.testing.assert_allclose(out, [[0.25, 0.25, 0.25, 0.25]])


def test_forward_shape_error_names_layer():
    net = single_layer([[1.0, 0.0]], [0.0], "linear")
    with pytest.raises(ValueError, match="layer 0"):
        nn.forward(net, [[1.0, 2.0, 3.0]])


def test_softmax_rows_sum_to_one_and_positive():
    rng = np.random.default_rng(0)
    net = nn.network([3, 6, 5], ["relu", "softmax"], rng)
    out = nn.forward(net, rng.normal(size=(40, 3)))[-1]
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(out > 0.0)


def test_backward_product_rule():
    # y = w * x with w = 5, x = 2; loss = y so dL/dw = x, dL/dx = w.
    net = single_layer([[5.0]], [0.0], "linear")
    acts = nn.forward(net, [[2.0]])
    grads, input_grad = nn.backward(net, acts, np.ones((1, 1)))
    assert grads[0][0] == pytest.approx([[2.0]])
    assert input_grad == pytest.approx([[5.0]])


def test_backward_dead_relu_blocks_gradient():
    net = single_layer([[1.0]], [0.0], "relu")
    acts = nn.forward(net, [[-3.0]])
    grads, input_grad = nn.backward(net, acts, np.ones((1, 1)))
    assert grads[0][0] == pytest.approx([[0.0]])
    assert input_grad == pytest.approx([[0.0]])


def test_backward_mismatched_activations_rejected():
    rng = np.random.default_rng(1)
    net = nn.network([3, 4, 2], ["relu", "linear"], rng)
    acts = nn.forward(net, rng.normal(size=(2, 3)))
    with pytest.raises(ValueError, match="does not match"):
        nn.backward(net, acts[:-1], np.ones((2, 2)))


def test_backward_matches_finite_differences_random_net():
    rng = np.random.default_rng(7)
    net = nn.network([4, 6, 3], ["tanh", "linear"], rng)
    err = nn.grad_check(net, rng.normal(size=(4, 4)), "mean_square")
    assert err < 1e-4


def test_grad_check_suite_all_combos():
    results = nn.run_grad_check_suite(n_seeds=5)
    worst = max(err for _, _, err in results)
    assert worst < 1e-4


def test_grad_check_zero_parameter_net():
    assert nn.grad_check(nn.Network([]), np.zeros((1, 2)), "mean_square") == 0.0


def test_adam_first_step_hand_trace():
    # w=1, g=1, lr=2e-4, b1=0.6, b2=0.999: m=0.4, v=0.001, mhat=vhat=1,
    # w' = 1 - lr / (1 + eps).
    net = single_layer([[1.0]], [0.0], "linear")
    state = nn.adam_init(net, lr=2e-4, beta1=0.6, beta2=0.999, epsilon=1e-8)
    grads = [(np.array([[1.0]]), np.array([0.0]))]
    nn.adam_step(net, grads, state, "descend")
    assert state.step_count == 1
    assert state.first_moment[0][0] == pytest.approx([[0.4]])
    assert state.second_moment[0][0] == pytest.approx([[0.001]])
    assert net.layers[0].weight[0, 0] == pytest.approx(0.9998, abs=1e-9)


def test_adam_zero_gradient_is_identity():
    rng = np.random.default_rng(2)
    net = nn.network([3, 5, 2], ["relu", "linear"], rng)
    before = [l.weight.copy() for l in net.layers]
    state = nn.adam_init(net)
    zero = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in net.layers]
    for _ in range(5):
        nn.adam_step(net, zero, state, "descend")
    for b, l in zip(before, net.layers):
        np.testing.assert_array_equal(b, l.weight)


def test_adam_ascend_equals_descend_on_negated_gradient():
    rng = np.random.default_rng(3)
    net_a = nn.network([2, 3, 1], ["tanh", "linear"], rng)
    net_b = net_a.copy()
    sa, sb = nn.adam_init(net_a), nn.adam_init(net_b)
    grads = [(rng.normal(size=l.weight.shape), rng.normal(size=l.bias.shape))
             for l in net_a.layers]
    neg = [(-gw, -gb) for gw, gb in grads]
    nn.adam_step(net_a, grads, sa, "ascend")
    nn.adam_step(net_b, neg, sb, "descend")
    for la, lb in zip(net_a.layers, net_b.layers):
        np.testing.assert_array_equal(la.weight, lb.weight)
        np.testing.assert_array_equal(la.bias, lb.bias)


def test_adam_rejects_non_finite_gradient():
    net = single_layer([[1.0]], [0.0], "linear")
    state = nn.adam_init(net)
    bad = [(np.array([[np.nan]]), np.array([0.0]))]
    with pytest.raises(nn.NonFiniteGradient, match="layer 0"):
        nn.adam_step(net, bad, state, "descend")


def test_adam_rejects_shape_mismatch():
    net = single_layer([[1.0]], [0.0], "linear")
    state = nn.adam_init(net)
    with pytest.raises(ValueError, match="shape"):
        nn.adam_step(net, [(np.zeros((2, 2)), np.zeros(1))], state, "descend")


def test_cross_entropy_confident_correct_is_zero():
    loss, grad, clamped = nn.cross_entropy(np.array([[1.0, 0.0]]), [0])
    assert loss == pytest.approx(0.0)
    assert not clamped


def test_cross_entropy_uniform_is_log_m():
    probs = np.full((3, 4), 0.25)
    loss, _, _ = nn.cross_entropy(probs, [0, 1, 2])
    assert loss == pytest.approx(np.log(4.0))


def test_cross_entropy_class_weighted_hand_value():
    loss, _, _ = nn.cross_entropy(np.array([[0.8, 0.2]]), [0], class_weights=[0.3, 1.0])
    assert loss == pytest.approx(0.3 * -np.log(0.8))  # 0.06694...


def test_cross_entropy_clamps_zero_probability():
    loss, grad, clamped = nn.cross_entropy(np.array([[0.0, 1.0]]), [0])
    assert clamped
    assert np.isfinite(loss)
    assert loss == pytest.approx(-np.log(1e-12))


def test_cross_entropy_validates_rows():
    with pytest.raises(ValueError, match="sum to 1"):
        nn.cross_entropy(np.array([[0.7, 0.7]]), [0])
    with pytest.raises(ValueError, match="labels"):
        nn.cross_entropy(np.array([[0.5, 0.5]]), [3])


def test_softmax_only_final_layer():
    rng = np.random.default_rng(4)
    with pytest.raises(ValueError, match="softmax"):
        nn.network([2, 3, 2], ["softmax", "linear"], rng)


def test_training_determinism_bitwise():
    def run():
        rng = np.random.default_rng(11)
        net = nn.network([3, 8, 2], ["relu", "softmax"], rng)
        state = nn.adam_init(net)
        batch = rng.normal(size=(6, 3))
        labels = np.arange(6) % 2
        for _ in range(25):
            acts = nn.forward(net, batch)
            _, grad, _ = nn.cross_entropy(acts[-1], labels)
            grads, _ = nn.backward(net, acts, grad)
            nn.adam_step(net, grads, state, "descend")
        return net

    a, b = run(), run()
    for la, lb in zip(a.layers, b.layers):
        np.testing.assert_array_equal(la.weight, lb.weight)
        np.testing.assert_array_equal(la.bias, lb.bias)


def test_snapshot_roundtrip():
    rng = np.random.default_rng(5)
    net = nn.network([4, 7, 3], ["sigmoid", "softmax"], rng)
    blob = nn.save_network(net)
    assert blob[:4] == b"PGNN"
    back = nn.load_network(blob)
    for la, lb in zip(net.layers, back.layers):
        np.testing.assert_array_equal(la.weight, lb.weight)
        np.testing.assert_array_equal(la.bias, lb.bias)
        assert la.activation == lb.activation


def test_snapshot_rejects_bad_magic():
    with pytest.raises(ValueError, match="magic"):
        nn.load_network(b"XXXX" + bytes(20))


def test_outputs_finite_on_random_nets():
    rng = np.random.default_rng(6)
    for _ in range(10):
        net = nn.network([5, 9, 4], ["relu", "softmax"], rng)
        out = nn.forward(net, rng.normal(size=(8, 5)))[-1]
        assert np.all(np.isfinite(out))
