# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-sample loops for the classifier and the adaptive optimizer.

Mirrors ``_pykernels`` call for call; see that module for the semantics.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, tanh, sqrt, pow

cnp.import_array()

cdef double PROB_FLOOR = 1e-12
cdef int RELU = 0


cdef class _Layout:
    cdef Py_ssize_t nl, kout, maxw, total_act
    cdef Py_ssize_t[::1] w, poff, aoff

    def __init__(self, widths):
        cdef Py_ssize_t l
        ws = np.asarray(widths, dtype=np.intp)
        self.w = ws
        self.nl = ws.shape[0] - 1
        self.kout = ws[ws.shape[0] - 1]
        self.maxw = int(ws.max())
        poff = np.zeros(self.nl + 1, dtype=np.intp)
        aoff = np.zeros(self.nl + 1, dtype=np.intp)
        for l in range(self.nl):
            poff[l + 1] = poff[l] + ws[l + 1] * ws[l] + ws[l + 1]
            aoff[l + 1] = aoff[l] + ws[l]
        self.poff = poff
        self.aoff = aoff
        self.total_act = aoff[self.nl]


cdef dict _layouts = {}


cdef _Layout _layout(widths):
    key = tuple(widths)
    L = _layouts.get(key)
    if L is None:
        L = _Layout(key)
        _layouts[key] = L
    return L


cdef void _forward_one(_Layout L, int act, const double[::1] theta,
                       const double[:, ::1] X, Py_ssize_t row,
                       double[::1] acts, double[::1] out) noexcept nogil:
    # acts holds inputs of every affine layer; out receives probabilities
    cdef Py_ssize_t l, i, o, n_in, n_out, woff, boff, src
    cdef double s, zmax, tot
    n_in = L.w[0]
    for i in range(n_in):
        acts[i] = X[row, i]
    for l in range(L.nl):
        n_in = L.w[l]
        n_out = L.w[l + 1]
        woff = L.poff[l]
        boff = woff + n_out * n_in
        src = L.aoff[l]
        for o in range(n_out):
            s = theta[boff + o]
            for i in range(n_in):
                s += theta[woff + o * n_in + i] * acts[src + i]
            if l < L.nl - 1:
                if act == RELU:
                    acts[L.aoff[l + 1] + o] = s if s > 0.0 else 0.0
                else:
                    acts[L.aoff[l + 1] + o] = tanh(s)
            else:
                out[o] = s
    zmax = out[0]
    for o in range(1, L.kout):
        if out[o] > zmax:
            zmax = out[o]
    tot = 0.0
    for o in range(L.kout):
        out[o] = exp(out[o] - zmax)
        tot += out[o]
    for o in range(L.kout):
        out[o] = out[o] / tot


def forward_batch(widths, int act, const double[::1] theta, const double[:, ::1] X):
    cdef _Layout L = _layout(widths)
    cdef Py_ssize_t n = X.shape[0], r, k
    probs = np.empty((n, L.kout), dtype=np.float64)
    cdef double[:, ::1] P = probs
    cdef double[::1] acts = np.empty(L.total_act, dtype=np.float64)
    cdef double[::1] out = np.empty(L.kout, dtype=np.float64)
    with nogil:
        for r in range(n):
            _forward_one(L, act, theta, X, r, acts, out)
            for k in range(L.kout):
                P[r, k] = out[k]
    return probs


def batch_loss(widths, int act, const double[::1] theta, const double[:, ::1] X,
               const cnp.int64_t[::1] y):
    cdef _Layout L = _layout(widths)
    cdef Py_ssize_t n = X.shape[0], r
    cdef double[::1] acts = np.empty(L.total_act, dtype=np.float64)
    cdef double[::1] out = np.empty(L.kout, dtype=np.float64)
    cdef double loss = 0.0, p
    with nogil:
        for r in range(n):
            _forward_one(L, act, theta, X, r, acts, out)
            p = out[y[r]]
            loss -= log(p if p > PROB_FLOOR else PROB_FLOOR)
    return loss


def loss_and_grad(widths, int act, const double[::1] theta, const double[:, ::1] X,
                  const cnp.int64_t[::1] y):
    cdef _Layout L = _layout(widths)
    cdef Py_ssize_t n = X.shape[0], r, l, i, o, n_in, n_out, woff, boff, src
    cdef double[::1] acts = np.empty(L.total_act, dtype=np.float64)
    cdef double[::1] out = np.empty(L.kout, dtype=np.float64)
    cdef double[::1] delta = np.empty(L.maxw, dtype=np.float64)
    cdef double[::1] back = np.empty(L.maxw, dtype=np.float64)
    grad_arr = np.zeros(theta.shape[0], dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef double loss = 0.0, p, a, d
    with nogil:
        for r in range(n):
            _forward_one(L, act, theta, X, r, acts, out)
            p = out[y[r]]
            loss -= log(p if p > PROB_FLOOR else PROB_FLOOR)
            for o in range(L.kout):
                delta[o] = out[o]
            delta[y[r]] -= 1.0
            for l in range(L.nl - 1, -1, -1):
                n_in = L.w[l]
                n_out = L.w[l + 1]
                woff = L.poff[l]
                boff = woff + n_out * n_in
                src = L.aoff[l]
                for o in range(n_out):
                    d = delta[o]
                    grad[boff + o] += d
                    for i in range(n_in):
                        grad[woff + o * n_in + i] += d * acts[src + i]
                if l > 0:
                    for i in range(n_in):
                        back[i] = 0.0
                    for o in range(n_out):
                        d = delta[o]
                        for i in range(n_in):
                            back[i] += theta[woff + o * n_in + i] * d
                    for i in range(n_in):
                        a = acts[src + i]
                        if act == RELU:
                            delta[i] = back[i] if a > 0.0 else 0.0
                        else:
                            delta[i] = back[i] * (1.0 - a * a)
    return loss, grad_arr


def adam_update(double[::1] theta, double[::1] m, double[::1] v, const double[::1] grad,
                double lr, double beta1, double beta2, double eps, long step):
    cdef Py_ssize_t i, n = theta.shape[0]
    cdef double bc1 = 1.0 - pow(beta1, <double>step)
    cdef double bc2s = sqrt(1.0 - pow(beta2, <double>step))
    cdef double g, step_size = lr / bc1
    with nogil:
        for i in range(n):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            theta[i] -= step_size * (m[i] / (sqrt(v[i]) / bc2s + eps))
