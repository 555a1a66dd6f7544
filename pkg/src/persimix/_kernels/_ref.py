"""Pure numpy kernel: fused dataset loss and gradient for the gated expert.

This mirrors the compiled extension exactly (same math, same clamping); it
is the fallback selected at import time when the extension is unavailable.

Parameter vector layout (``has_gate`` controls the leading block):

    [nu (I+1)] [W row-major (M, I+1)] [beta (M)] [b_1] [a_2..a_{Q-1}]

``cur`` and ``tgt`` hold 0-based class indices.  ``z1`` is the pattern
matrix with a leading ones column.
"""
from __future__ import annotations

import numpy as np

SIGMOID_CLAMP = 500.0
PROB_FLOOR = 1e-12


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -SIGMOID_CLAMP, SIGMOID_CLAMP)))


def mixture_loss_grad(
    z1: np.ndarray,
    cur: np.ndarray,
    tgt: np.ndarray,
    s: np.ndarray,
    hidden_units: int,
    num_classes: int,
    class_weights: np.ndarray,
    lam: float,
    has_gate: bool,
) -> tuple[float, np.ndarray]:
    """Weighted cross-entropy with L2 term, plus its analytic gradient.

    Loss: -(1/N) sum_n o[q_n] log(max(p_n, floor)) + lam * sum_i s_i**2,
    where p_n is the predicted probability of the observed target; with a
    gate, p_n = alpha [[cur == tgt]] + (1 - alpha) p_net.  The 1/p factor
    in the gradient uses the floored probability; dp/ds is exact.
    """
    n, i1 = z1.shape
    m, q_count = hidden_units, num_classes
    gate_len = i1 if has_gate else 0
    w_mat = s[gate_len : gate_len + m * i1].reshape(m, i1)
    beta = s[gate_len + m * i1 : gate_len + m * i1 + m]
    b1 = s[gate_len + m * i1 + m]
    pads = s[gate_len + m * i1 + m + 1 :]
    th = b1 + np.concatenate(([0.0], np.cumsum(pads**2)))  # (Q-1,)

    pre = z1 @ w_mat.T  # (N, M)
    basis = _sigmoid(pre)
    f = basis @ beta  # (N,)
    cum = _sigmoid(th[None, :] - f[:, None])  # (N, Q-1)

    rows = np.arange(n)
    has_hi = tgt <= q_count - 2  # target below the top rank
    has_lo = tgt >= 1
    k_hi = np.where(has_hi, cum[rows, np.minimum(tgt, q_count - 2)], 1.0)
    k_lo = np.where(has_lo, cum[rows, np.maximum(tgt - 1, 0)], 0.0)
    p_net = k_hi - k_lo
    s_hi = k_hi * (1.0 - k_hi)  # zero at the sentinel 1.0
    s_lo = k_lo * (1.0 - k_lo)

    if has_gate:
        h = z1 @ s[:gate_len]
        alpha = _sigmoid(h)
        ind = (cur == tgt).astype(np.float64)
        p_mix = alpha * ind + (1.0 - alpha) * p_net
    else:
        p_mix = p_net

    p_floor = np.maximum(p_mix, PROB_FLOOR)
    o_t = class_weights[tgt]
    loss = -np.sum(o_t * np.log(p_floor)) / n + lam * float(s @ s)

    factor = o_t / p_floor
    grad = np.empty_like(s)
    if has_gate:
        coef_nu = factor * alpha * (1.0 - alpha) * (ind - p_net)
        grad[:gate_len] = -(z1.T @ coef_nu) / n
        resid = factor * (1.0 - alpha)
    else:
        resid = factor

    gap = s_hi - s_lo  # d p_net / d b at the two active thresholds
    lat = resid * gap
    basis_prime = basis * (1.0 - basis)
    g_w = ((lat[:, None] * basis_prime * beta[None, :]).T @ z1) / n
    g_beta = (basis.T @ lat) / n
    g_b1 = -np.sum(lat) / n
    g_pads = np.empty(q_count - 2)
    for j_idx in range(q_count - 2):
        j = j_idx + 2  # 1-based threshold index of a_j
        val = np.where(tgt >= j, gap, np.where(tgt == j - 1, s_hi, 0.0))
        g_pads[j_idx] = -2.0 * pads[j_idx] * np.sum(resid * val) / n

    k_off = gate_len
    grad[k_off : k_off + m * i1] = g_w.ravel()
    grad[k_off + m * i1 : k_off + m * i1 + m] = g_beta
    grad[k_off + m * i1 + m] = g_b1
    grad[k_off + m * i1 + m + 1 :] = g_pads
    grad += 2.0 * lam * s
    return float(loss), grad
