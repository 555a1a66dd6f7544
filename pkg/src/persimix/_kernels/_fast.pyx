# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel: fused dataset loss and gradient for the gated expert.

Same contract and parameter layout as ``_ref.mixture_loss_grad``; the hot
loop runs per pattern without temporaries, accumulating sequentially so
results are deterministic.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

cdef double SIGMOID_CLAMP = 500.0
cdef double PROB_FLOOR = 1e-12


cdef inline double _sig(double x) nogil:
    if x > SIGMOID_CLAMP:
        x = SIGMOID_CLAMP
    elif x < -SIGMOID_CLAMP:
        x = -SIGMOID_CLAMP
    return 1.0 / (1.0 + exp(-x))


def mixture_loss_grad(
    const cnp.float64_t[:, ::1] z1,
    const cnp.int64_t[::1] cur,
    const cnp.int64_t[::1] tgt,
    const cnp.float64_t[::1] s,
    Py_ssize_t hidden_units,
    Py_ssize_t num_classes,
    const cnp.float64_t[::1] class_weights,
    double lam,
    bint has_gate,
):
    cdef Py_ssize_t n = z1.shape[0]
    cdef Py_ssize_t i1 = z1.shape[1]
    cdef Py_ssize_t m = hidden_units
    cdef Py_ssize_t q_count = num_classes
    cdef Py_ssize_t gate_len = i1 if has_gate else 0
    cdef Py_ssize_t w_off = gate_len
    cdef Py_ssize_t beta_off = w_off + m * i1
    cdef Py_ssize_t b1_off = beta_off + m
    cdef Py_ssize_t pad_off = b1_off + 1
    cdef Py_ssize_t n_params = pad_off + (q_count - 2)

    if s.shape[0] != n_params:
        raise ValueError(f"expected {n_params} parameters, got {s.shape[0]}")

    grad_arr = np.zeros(n_params, dtype=np.float64)
    th_arr = np.empty(q_count - 1, dtype=np.float64)
    basis_arr = np.empty(m, dtype=np.float64)
    cdef cnp.float64_t[::1] grad = grad_arr
    cdef cnp.float64_t[::1] th = th_arr
    cdef cnp.float64_t[::1] basis = basis_arr

    cdef double loss = 0.0
    cdef double b_acc, pad, f, h, alpha, ind, p_net, p_mix, factor, resid
    cdef double k_hi, k_lo, s_hi, s_lo, gap, lat, coef, val, acc, reg
    cdef Py_ssize_t i, j, p, q, j1

    b_acc = s[b1_off]
    for p in range(q_count - 1):
        if p > 0:
            pad = s[pad_off + p - 1]
            b_acc += pad * pad
        th[p] = b_acc

    with nogil:
        for p in range(n):
            q = tgt[p]
            # hidden layer and latent value
            f = 0.0
            for j in range(m):
                acc = 0.0
                for i in range(i1):
                    acc += s[w_off + j * i1 + i] * z1[p, i]
                basis[j] = _sig(acc)
                f += s[beta_off + j] * basis[j]
            # cumulative logistics flanking the target class
            if q <= q_count - 2:
                k_hi = _sig(th[q] - f)
                s_hi = k_hi * (1.0 - k_hi)
            else:
                k_hi = 1.0
                s_hi = 0.0
            if q >= 1:
                k_lo = _sig(th[q - 1] - f)
                s_lo = k_lo * (1.0 - k_lo)
            else:
                k_lo = 0.0
                s_lo = 0.0
            p_net = k_hi - k_lo

            if has_gate:
                h = 0.0
                for i in range(i1):
                    h += s[i] * z1[p, i]
                alpha = _sig(h)
                ind = 1.0 if cur[p] == q else 0.0
                p_mix = alpha * ind + (1.0 - alpha) * p_net
            else:
                alpha = 0.0
                ind = 0.0
                p_mix = p_net

            if p_mix < PROB_FLOOR:
                factor = class_weights[q] / PROB_FLOOR
                loss -= class_weights[q] * log(PROB_FLOOR)
            else:
                factor = class_weights[q] / p_mix
                loss -= class_weights[q] * log(p_mix)

            if has_gate:
                coef = factor * alpha * (1.0 - alpha) * (ind - p_net)
                for i in range(i1):
                    grad[i] -= coef * z1[p, i]
                resid = factor * (1.0 - alpha)
            else:
                resid = factor

            gap = s_hi - s_lo
            lat = resid * gap
            for j in range(m):
                grad[beta_off + j] += lat * basis[j]
                coef = lat * s[beta_off + j] * basis[j] * (1.0 - basis[j])
                for i in range(i1):
                    grad[w_off + j * i1 + i] += coef * z1[p, i]
            grad[b1_off] -= lat
            for j in range(q_count - 2):
                j1 = j + 2  # 1-based threshold index of a_j
                if q >= j1:
                    val = gap
                elif q == j1 - 1:
                    val = s_hi
                else:
                    val = 0.0
                grad[pad_off + j] -= 2.0 * s[pad_off + j] * resid * val

        reg = 0.0
        for i in range(n_params):
            grad[i] /= n
            grad[i] += 2.0 * lam * s[i]
            reg += s[i] * s[i]
        loss = loss / n + lam * reg

    return loss, grad_arr
