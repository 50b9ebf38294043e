"""Numba-jitted twins of the kernels in ``_kernels_numpy``.

Same signatures, same activation codes. fastmath stays off so results are
IEEE-reproducible run to run.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def affine(x, w, b):
    out = np.dot(x, w.T)
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            out[i, j] += b[j]
    return out


@njit(cache=True)
def act_eval(z, code):
    n, d = z.shape
    out = np.empty_like(z)
    if code == 0:
        for i in range(n):
            for j in range(d):
                out[i, j] = z[i, j]
    elif code == 1:
        for i in range(n):
            for j in range(d):
                out[i, j] = z[i, j] if z[i, j] > 0.0 else 0.0
    elif code == 2:
        for i in range(n):
            for j in range(d):
                out[i, j] = np.tanh(z[i, j])
    elif code == 3:
        for i in range(n):
            for j in range(d):
                out[i, j] = 1.0 / (1.0 + np.exp(-z[i, j]))
    elif code == 4:
        for i in range(n):
            hi = z[i, 0]
            for j in range(1, d):
                if z[i, j] > hi:
                    hi = z[i, j]
            s = 0.0
            for j in range(d):
                e = np.exp(z[i, j] - hi)
                out[i, j] = e
                s += e
            for j in range(d):
                out[i, j] /= s
    else:
        raise ValueError("unknown activation code")
    return out


@njit(cache=True)
def act_grad_from_post(y, g, code):
    n, d = y.shape
    out = np.empty_like(y)
    if code == 0:
        for i in range(n):
            for j in range(d):
                out[i, j] = g[i, j]
    elif code == 1:
        for i in range(n):
            for j in range(d):
                out[i, j] = g[i, j] if y[i, j] > 0.0 else 0.0
    elif code == 2:
        for i in range(n):
            for j in range(d):
                out[i, j] = g[i, j] * (1.0 - y[i, j] * y[i, j])
    elif code == 3:
        for i in range(n):
            for j in range(d):
                out[i, j] = g[i, j] * y[i, j] * (1.0 - y[i, j])
    else:
        raise ValueError("activation code has no elementwise gradient")
    return out


@njit(cache=True)
def act_curv_from_post(y, code):
    n, d = y.shape
    out = np.zeros_like(y)
    if code == 0 or code == 1:
        return out
    if code == 2:
        for i in range(n):
            for j in range(d):
                out[i, j] = -2.0 * y[i, j] * (1.0 - y[i, j] * y[i, j])
        return out
    if code == 3:
        for i in range(n):
            for j in range(d):
                out[i, j] = y[i, j] * (1.0 - y[i, j]) * (1.0 - 2.0 * y[i, j])
        return out
    raise ValueError("activation code has no elementwise curvature")


@njit(cache=True)
def softmax_output_grad(y, g):
    n, d = y.shape
    out = np.empty_like(y)
    for i in range(n):
        dot = 0.0
        for j in range(d):
            dot += g[i, j] * y[i, j]
        for j in range(d):
            out[i, j] = y[i, j] * (g[i, j] - dot)
    return out


@njit(cache=True)
def dense_param_grads(a_prev, delta):
    gw = np.dot(delta.T.copy(), a_prev)
    gb = np.empty(delta.shape[1])
    for j in range(delta.shape[1]):
        s = 0.0
        for i in range(delta.shape[0]):
            s += delta[i, j]
        gb[j] = s
    return gw, gb


@njit(cache=True)
def input_grad(delta, w):
    return np.dot(delta, w)


@njit(cache=True)
def adam_update(w, g, m, v, t, lr, b1, b2, eps):
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for i in range(w.shape[0]):
        m[i] = b1 * m[i] + (1.0 - b1) * g[i]
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i]
        w[i] -= lr * (m[i] / bc1) / (np.sqrt(v[i] / bc2) + eps)


@njit(cache=True)
def poly_violation(points, nx, ny, off):
    n = points.shape[0]
    e = nx.shape[0]
    out = np.empty(n)
    for i in range(n):
        best = -np.inf
        x = points[i, 0]
        y = points[i, 1]
        for k in range(e):
            s = x * nx[k] + y * ny[k] - off[k]
            if s > best:
                best = s
        out[i] = best
    return out


@njit(cache=True)
def cdf_integral(pos, delta):
    total = 0.0
    c = 0.0
    for i in range(pos.shape[0] - 1):
        c += delta[i]
        total += abs(c) * (pos[i + 1] - pos[i])
    return total
