"""Pure numpy implementations of the numerical kernels.

Used when the compiled ``_kernels`` extension is unavailable or when
``HIERMDA_BACKEND=python`` is set. Signatures match the extension exactly.
"""

import numpy as np

PROB_FLOOR = 1e-12

RELU = 0
TANH = 1


def _layers(widths, theta):
    off = 0
    for l in range(len(widths) - 1):
        n_in, n_out = widths[l], widths[l + 1]
        W = theta[off:off + n_out * n_in].reshape(n_out, n_in)
        off += n_out * n_in
        b = theta[off:off + n_out]
        off += n_out
        yield W, b


def _activate(z, act):
    if act == RELU:
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_trace(widths, act, theta, X):
    layers = list(_layers(widths, theta))
    acts = [X]
    a = X
    for l, (W, b) in enumerate(layers):
        z = a @ W.T + b
        if l < len(layers) - 1:
            a = _activate(z, act)
            acts.append(a)
        else:
            a = z
    return layers, acts, _softmax(a)


def forward_batch(widths, act, theta, X):
    """Class probabilities, one row per input row."""
    return _forward_trace(widths, act, theta, X)[2]


def batch_loss(widths, act, theta, X, y):
    probs = forward_batch(widths, act, theta, X)
    picked = probs[np.arange(len(y)), y]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).sum())


def loss_and_grad(widths, act, theta, X, y):
    """Summed cross-entropy over the batch and its gradient wrt ``theta``."""
    layers, acts, probs = _forward_trace(widths, act, theta, X)
    n = len(y)
    rows = np.arange(n)
    loss = float(-np.log(np.maximum(probs[rows, y], PROB_FLOOR)).sum())

    delta = probs.copy()
    delta[rows, y] -= 1.0
    grads = []
    for l in range(len(layers) - 1, -1, -1):
        W, _ = layers[l]
        a = acts[l]
        grads.append((delta.T @ a, delta.sum(axis=0)))
        if l > 0:
            back = delta @ W
            if act == RELU:
                delta = back * (a > 0.0)
            else:
                delta = back * (1.0 - a * a)
    grads.reverse()
    flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])
    return loss, flat


def adam_update(theta, m, v, grad, lr, beta1, beta2, eps, step):
    """In-place bias-corrected adaptive-moment update at step ``step`` (>= 1)."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    denom = np.sqrt(v) / np.sqrt(bc2) + eps
    theta -= (lr / bc1) * (m / denom)
