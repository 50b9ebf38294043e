"""Minimal deterministic dense-network engine.

All arrays are float64 and C-contiguous. A network is an explicit stack of
dense layers; gradients are exact reverse-mode over that stack (no general
autodiff graph). Softmax is only legal as the final activation.

``forward`` returns the input batch followed by every layer's post-activation
output, and ``backward`` consumes exactly that list, so post-activation values
are all the state the engine ever caches.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .backend import K

ACTIVATIONS = {"linear": 0, "relu": 1, "tanh": 2, "sigmoid": 3, "softmax": 4}
_ACT_NAMES = {v: k for k, v in ACTIVATIONS.items()}

_MAGIC = b"PGNN"
_FORMAT_VERSION = 1

LOG_FLOOR = 1e-12


class NonFiniteGradient(ValueError):
    """Raised when an optimizer step receives NaN/Inf gradients."""


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class Network:
    layers: list[Layer] = field(default_factory=list)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim if self.layers else -1

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim if self.layers else -1

    def copy(self) -> "Network":
        return Network(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )


def validate_network(net: Network) -> None:
    for i, layer in enumerate(net.layers):
        if layer.activation not in ACTIVATIONS:
            raise ValueError(f"layer {i}: unknown activation {layer.activation!r}")
        if layer.weight.shape[0] != layer.bias.shape[0]:
            raise ValueError(f"layer {i}: weight/bias size mismatch")
        if layer.activation == "softmax" and i != len(net.layers) - 1:
            raise ValueError(f"layer {i}: softmax is only permitted on the final layer")
        if i > 0 and net.layers[i - 1].out_dim != layer.in_dim:
            raise ValueError(
                f"layer {i}: input width {layer.in_dim} does not chain with "
                f"previous output width {net.layers[i - 1].out_dim}"
            )


def network(sizes: list[int], activations: list[str], rng: np.random.Generator) -> Network:
    """Build a dense stack with Xavier-uniform weights and zero biases.

    ``sizes`` lists the input width followed by each layer's output width, so
    ``len(activations) == len(sizes) - 1``.
    """
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for i, act in enumerate(activations):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        layers.append(Layer(np.ascontiguousarray(w), np.zeros(fan_out), act))
    net = Network(layers)
    validate_network(net)
    return net


def forward(net: Network, batch: np.ndarray) -> list[np.ndarray]:
    """Run the stack; returns [batch, layer1_out, ..., network_output]."""
    batch = np.ascontiguousarray(batch, dtype=np.float64)
    if batch.ndim != 2:
        raise ValueError(f"batch must be 2-D, got shape {batch.shape}")
    if net.layers and batch.shape[1] != net.layers[0].in_dim:
        raise ValueError(
            f"layer 0 expects input width {net.layers[0].in_dim}, got {batch.shape[1]}"
        )
    acts = [batch]
    a = batch
    for layer in net.layers:
        z = K.affine(a, layer.weight, layer.bias)
        a = K.act_eval(z, ACTIVATIONS[layer.activation])
        acts.append(a)
    return acts


def _check_activations(net: Network, activations: list[np.ndarray]) -> None:
    if len(activations) != len(net.layers) + 1:
        raise ValueError(
            f"activation list length {len(activations)} does not match "
            f"network depth {len(net.layers)}"
        )
    for i, layer in enumerate(net.layers):
        if activations[i + 1].shape[1] != layer.out_dim:
            raise ValueError(f"layer {i}: cached activation width mismatch")


def backward(
    net: Network, activations: list[np.ndarray], output_grad: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Exact reverse-mode gradients through the stack.

    ``output_grad`` is dLoss/d(final post-activation). Returns per-layer
    (weight_grad, bias_grad) pairs plus the gradient at the input batch.
    """
    _check_activations(net, activations)
    g = np.ascontiguousarray(output_grad, dtype=np.float64)
    param_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        y = activations[i + 1]
        code = ACTIVATIONS[layer.activation]
        if code == ACTIVATIONS["softmax"]:
            delta = K.softmax_output_grad(y, g)
        else:
            delta = K.act_grad_from_post(y, g, code)
        gw, gb = K.dense_param_grads(activations[i], delta)
        param_grads[i] = (gw, gb)
        g = K.input_grad(delta, layer.weight)
    return param_grads, g


def input_gradient_trace(
    net: Network, activations: list[np.ndarray]
) -> tuple[np.ndarray, list[np.ndarray], list[np.ndarray]]:
    """Per-sample input gradient of a scalar-output net, with the backward trace.

    Requires a single linear output unit (critic-style head). Returns
    (input_grad, deltas, gs) where deltas[l-1] and gs[l-1] hold the
    pre-activation gradient of layer l and the gradient at a_{l-1}; both are
    consumed by ``norm_penalty_param_grads``.
    """
    _check_activations(net, activations)
    last = net.layers[-1]
    if last.out_dim != 1 or last.activation != "linear":
        raise ValueError("input-gradient trace requires a single linear output unit")
    n = activations[0].shape[0]
    g = np.ones((n, 1))
    deltas: list[np.ndarray] = [None] * len(net.layers)
    gs: list[np.ndarray] = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        delta = K.act_grad_from_post(activations[i + 1], g, ACTIVATIONS[layer.activation])
        deltas[i] = delta
        g = K.input_grad(delta, layer.weight)
        gs[i] = g
    return g, deltas, gs


def norm_penalty_param_grads(
    net: Network,
    activations: list[np.ndarray],
    deltas: list[np.ndarray],
    gs: list[np.ndarray],
    input_grad_adjoint: np.ndarray,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Double backward: parameter gradients of a function of the input gradient.

    Given the trace of ``input_gradient_trace`` and the adjoint of the
    penalty w.r.t. the input gradient, backpropagates through the backward
    pass itself (the sigma'' path covers tanh/sigmoid hiddens; it vanishes
    for relu/linear).
    """
    n_layers = len(net.layers)
    wbar = [np.zeros_like(l.weight) for l in net.layers]
    bbar = [np.zeros_like(l.bias) for l in net.layers]
    zbar = [None] * n_layers

    gbar = np.ascontiguousarray(input_grad_adjoint, dtype=np.float64)
    for i in range(n_layers):
        layer = net.layers[i]
        y = activations[i + 1]
        code = ACTIVATIONS[layer.activation]
        # gs[i] = deltas[i] @ W_i
        delta_bar = K.input_grad(gbar, np.ascontiguousarray(layer.weight.T))
        gw, _ = K.dense_param_grads(gbar, deltas[i])
        wbar[i] += gw
        # deltas[i] = g_upstream * sigma'(z_i)
        upstream = gs[i + 1] if i + 1 < n_layers else np.ones_like(deltas[i])
        zbar[i] = delta_bar * upstream * K.act_curv_from_post(y, code)
        gbar = K.act_grad_from_post(y, delta_bar, code)

    # Propagate the sigma''-path adjoints through the forward graph.
    abar = None
    for i in range(n_layers - 1, -1, -1):
        zb = zbar[i]
        if abar is not None:
            zb = zb + K.act_grad_from_post(
                activations[i + 1], abar, ACTIVATIONS[net.layers[i].activation]
            )
        if not np.any(zb):
            abar = None if i == 0 else np.zeros_like(activations[i])
            continue
        gw, gb = K.dense_param_grads(activations[i], np.ascontiguousarray(zb))
        wbar[i] += gw
        bbar[i] += gb
        abar = K.input_grad(np.ascontiguousarray(zb), net.layers[i].weight)
    return list(zip(wbar, bbar))


@dataclass
class AdamState:
    first_moment: list[tuple[np.ndarray, np.ndarray]]
    second_moment: list[tuple[np.ndarray, np.ndarray]]
    step_count: int
    lr: float
    beta1: float
    beta2: float
    epsilon: float


def adam_init(
    net: Network,
    lr: float = 2e-4,
    beta1: float = 0.6,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    m = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in net.layers]
    v = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in net.layers]
    return AdamState(m, v, 0, lr, beta1, beta2, epsilon)


def adam_step(
    net: Network,
    grads: list[tuple[np.ndarray, np.ndarray]],
    state: AdamState,
    direction: str = "descend",
) -> tuple[Network, AdamState]:
    """Bias-corrected Adam update, in place on the network's parameters.

    ``ascend`` negates the gradients, which is how the adversarial
    maximization steps are driven.
    """
    if direction not in ("descend", "ascend"):
        raise ValueError(f"direction must be descend or ascend, got {direction!r}")
    if len(grads) != len(net.layers):
        raise ValueError("gradient list does not mirror the network layers")
    sign = -1.0 if direction == "ascend" else 1.0
    state.step_count += 1
    t = state.step_count
    for i, layer in enumerate(net.layers):
        gw, gb = grads[i]
        if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
            raise ValueError(f"layer {i}: gradient shape mismatch")
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NonFiniteGradient(f"layer {i}: non-finite gradient")
        mw, mb = state.first_moment[i]
        vw, vb = state.second_moment[i]
        K.adam_update(
            layer.weight.ravel(), sign * gw.ravel(), mw.ravel(), vw.ravel(),
            t, state.lr, state.beta1, state.beta2, state.epsilon,
        )
        K.adam_update(
            layer.bias, sign * gb, mb, vb,
            t, state.lr, state.beta1, state.beta2, state.epsilon,
        )
    return net, state


def mean_square(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    diff = pred - target
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def cross_entropy(
    probs: np.ndarray,
    labels: np.ndarray,
    class_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray, bool]:
    """Mean negative log-likelihood and its gradient w.r.t. the probabilities.

    Rows must already be probability vectors (softmax output). Zero
    probability at a true label is clamped at 1e-12; the returned flag says
    whether clamping fired.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, m = probs.shape
    if labels.shape != (n,):
        raise ValueError("labels must be one integer per row")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= m:
        raise ValueError(f"labels must lie in [0, {m})")
    if np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-6:
        raise ValueError("probability rows must sum to 1 within 1e-6")
    w = np.ones(m) if class_weights is None else np.asarray(class_weights, dtype=np.float64)
    p_true = probs[np.arange(n), labels]
    clamped = bool(np.any(p_true < LOG_FLOOR))
    p_safe = np.maximum(p_true, LOG_FLOOR)
    wy = w[labels]
    loss = float(np.mean(wy * -np.log(p_safe)))
    grad = np.zeros_like(probs)
    grad[np.arange(n), labels] = -wy / (n * p_safe)
    return loss, grad, clamped


def _loss_on_output(out: np.ndarray, loss_kind: str, labels: np.ndarray):
    if loss_kind == "mean_square":
        return mean_square(out, np.zeros_like(out))
    if loss_kind == "cross_entropy":
        loss, grad, _ = cross_entropy(out, labels)
        return loss, grad
    raise ValueError(f"unknown loss kind {loss_kind!r}")


def grad_check(net: Network, batch: np.ndarray, loss_kind: str) -> float:
    """Max relative error of ``backward`` against central finite differences.

    Relative error uses a 1e-3 denominator floor so the finite-difference
    noise floor on near-zero gradients is not misread as a failure.
    Cross-entropy requires a softmax output layer; the labels are the fixed
    pattern row_index mod out_dim.
    """
    if not net.layers:
        return 0.0
    if loss_kind == "cross_entropy" and net.layers[-1].activation != "softmax":
        raise ValueError("cross_entropy grad check needs a softmax output layer")
    batch = np.ascontiguousarray(batch, dtype=np.float64)
    labels = np.arange(batch.shape[0], dtype=np.int64) % net.layers[-1].out_dim

    acts = forward(net, batch)
    loss, out_grad = _loss_on_output(acts[-1], loss_kind, labels)
    analytic, _ = backward(net, acts, out_grad)

    eps = 1e-5
    worst = 0.0
    for i, layer in enumerate(net.layers):
        for arr, garr in ((layer.weight, analytic[i][0]), (layer.bias, analytic[i][1])):
            flat = arr.ravel()
            gflat = garr.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                lp, _ = _loss_on_output(forward(net, batch)[-1], loss_kind, labels)
                flat[j] = orig - eps
                lm, _ = _loss_on_output(forward(net, batch)[-1], loss_kind, labels)
                flat[j] = orig
                fd = (lp - lm) / (2.0 * eps)
                err = abs(gflat[j] - fd) / max(abs(gflat[j]), abs(fd), 1e-3)
                if err > worst:
                    worst = err
    return worst


GRAD_CHECK_COMBOS = [
    ("linear+mean_square", ["linear", "linear"], "mean_square"),
    ("relu+mean_square", ["relu", "linear"], "mean_square"),
    ("tanh+mean_square", ["tanh", "linear"], "mean_square"),
    ("sigmoid+mean_square", ["sigmoid", "sigmoid"], "mean_square"),
    ("relu+softmax+cross_entropy", ["relu", "softmax"], "cross_entropy"),
    ("tanh+softmax+cross_entropy", ["tanh", "softmax"], "cross_entropy"),
]


def _min_abs_preactivation(net: Network, batch: np.ndarray) -> float:
    a = batch
    worst = np.inf
    for layer in net.layers:
        z = K.affine(a, layer.weight, layer.bias)
        worst = min(worst, float(np.min(np.abs(z))))
        a = K.act_eval(z, ACTIVATIONS[layer.activation])
    return worst


def run_grad_check_suite(n_seeds: int = 20) -> list[tuple[str, int, float]]:
    """Gradient fidelity gate over every shipped layer/loss combination.

    Finite differences are meaningless within epsilon of a relu kink, so
    batches that put any pre-activation inside 1e-4 of zero are redrawn
    (deterministically) before checking.
    """
    results = []
    for combo_idx, (name, acts, loss_kind) in enumerate(GRAD_CHECK_COMBOS):
        for seed in range(n_seeds):
            rng = np.random.default_rng(np.random.SeedSequence([seed, combo_idx]))
            out_dim = 4 if loss_kind == "cross_entropy" else 3
            net = network([5, 8, out_dim], acts, rng)
            batch = rng.normal(size=(4, 5))
            attempts = 0
            while _min_abs_preactivation(net, batch) < 1e-4 and attempts < 50:
                batch = rng.normal(size=(4, 5))
                attempts += 1
            results.append((name, seed, grad_check(net, batch, loss_kind)))
    return results


def save_network(net: Network) -> bytes:
    """Versioned binary snapshot: magic, u16 version, then per-layer blocks."""
    out = [_MAGIC, struct.pack("<H", _FORMAT_VERSION), struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        out.append(
            struct.pack(
                "<IIB", layer.out_dim, layer.in_dim, ACTIVATIONS[layer.activation]
            )
        )
        out.append(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(out)


def load_network(blob: bytes) -> Network:
    if blob[:4] != _MAGIC:
        raise ValueError("bad magic: not a network snapshot")
    (version,) = struct.unpack_from("<H", blob, 4)
    if version != _FORMAT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    (n_layers,) = struct.unpack_from("<I", blob, 6)
    offset = 10
    layers = []
    for _ in range(n_layers):
        out_dim, in_dim, code = struct.unpack_from("<IIB", blob, offset)
        offset += 9
        w = np.frombuffer(blob, dtype="<f8", count=out_dim * in_dim, offset=offset)
        offset += 8 * out_dim * in_dim
        b = np.frombuffer(blob, dtype="<f8", count=out_dim, offset=offset)
        offset += 8 * out_dim
        layers.append(
            Layer(
                np.ascontiguousarray(w.reshape(out_dim, in_dim)),
                np.ascontiguousarray(b),
                _ACT_NAMES[code],
            )
        )
    net = Network(layers)
    validate_network(net)
    return net
