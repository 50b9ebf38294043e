"""Pure-numpy reference implementations of the hot kernels.

Activation codes: 0=linear, 1=relu, 2=tanh, 3=sigmoid, 4=softmax.
The numba twin in ``_kernels_numba`` must stay call-compatible with
everything here; ``backend`` picks one of the two at import time.
"""

import numpy as np


def affine(x, w, b):
    # x: (n, d_in), w: (d_out, d_in), b: (d_out,)
    return x @ w.T + b


def act_eval(z, code):
    if code == 0:
        return z.copy()
    if code == 1:
        return np.maximum(z, 0.0)
    if code == 2:
        return np.tanh(z)
    if code == 3:
        return 1.0 / (1.0 + np.exp(-z))
    if code == 4:
        shifted = z - z.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    raise ValueError(f"unknown activation code {code}")


def act_grad_from_post(y, g, code):
    # g * sigma'(z), with sigma' expressed through the post-activation y.
    if code == 0:
        return g.copy()
    if code == 1:
        return g * (y > 0.0)
    if code == 2:
        return g * (1.0 - y * y)
    if code == 3:
        return g * (y * (1.0 - y))
    raise ValueError(f"activation code {code} has no elementwise gradient")


def act_curv_from_post(y, code):
    # sigma''(z) expressed through the post-activation y.
    if code == 0 or code == 1:
        return np.zeros_like(y)
    if code == 2:
        return -2.0 * y * (1.0 - y * y)
    if code == 3:
        return y * (1.0 - y) * (1.0 - 2.0 * y)
    raise ValueError(f"activation code {code} has no elementwise curvature")


def softmax_output_grad(y, g):
    # Jacobian-vector product of row-wise softmax at post-activation y.
    dot = (g * y).sum(axis=1, keepdims=True)
    return y * (g - dot)


def dense_param_grads(a_prev, delta):
    # delta: (n, d_out) gradient at the pre-activation.
    return delta.T @ a_prev, delta.sum(axis=0)


def input_grad(delta, w):
    return delta @ w


def adam_update(w, g, m, v, t, lr, b1, b2, eps):
    # In-place bias-corrected Adam step on flat views; t is the post-step count.
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * g * g
    mhat = m / (1.0 - b1 ** t)
    vhat = v / (1.0 - b2 ** t)
    w -= lr * mhat / (np.sqrt(vhat) + eps)


def poly_violation(points, nx, ny, off):
    # Max signed halfplane value over the hull edges; <= 0 means inside.
    # nx, ny are unit outward normals, off their offsets (n . p_edge).
    s = points[:, 0:1] * nx[None, :] + points[:, 1:2] * ny[None, :] - off[None, :]
    return s.max(axis=1)


def cdf_integral(pos, delta):
    # Integral of |CDF_p - CDF_q| over sorted support positions; delta holds
    # the p-minus-q point masses aligned with pos.
    c = np.cumsum(delta[:-1])
    return float(np.abs(c) @ np.diff(pos))
