"""Fused numeric kernels with numba and pure-numpy implementations.

Both variants of every kernel are always importable (``*_numpy`` and
``*_jit``); the unsuffixed names dispatch to whichever backend
``pemm._accel`` selected at import time.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

PROB_FLOOR = 1e-30


# ---------------------------------------------------------------------------
# Potential-energy regularizer over the centers plus the origin.


def pe_center_numpy(C, u, v, xi, beta):
    """Value and gradient of the pairwise PE loss over ``[0; C]``."""
    K, m = C.shape
    P = np.vstack([np.zeros((1, m)), C])
    iu, ju = np.triu_indices(K + 1, k=1)
    diff = P[iu] - P[ju]
    d = np.sqrt(np.sum(diff * diff, axis=1))
    r = d + beta
    value = np.sum(r ** -u - xi * r ** -v)
    dEdr = -u * r ** (-u - 1.0) + xi * v * r ** (-v - 1.0)
    safe = np.where(d > 0.0, d, 1.0)
    coef = np.where(d > 0.0, dEdr / safe, 0.0)
    contrib = coef[:, None] * diff
    grad = np.zeros_like(P)
    np.add.at(grad, iu, contrib)
    np.add.at(grad, ju, -contrib)
    return float(value), grad[1:]


def _pe_center_loop(C, u, v, xi, beta):
    K, m = C.shape
    grad = np.zeros((K + 1, m))
    value = 0.0
    for i in range(K + 1):
        for j in range(i + 1, K + 1):
            d2 = 0.0
            for t in range(m):
                a = C[i - 1, t] if i > 0 else 0.0
                b = C[j - 1, t]
                d2 += (a - b) * (a - b)
            d = np.sqrt(d2)
            r = d + beta
            value += r ** -u - xi * r ** -v
            if d > 0.0:
                coef = (-u * r ** (-u - 1.0) + xi * v * r ** (-v - 1.0)) / d
                for t in range(m):
                    a = C[i - 1, t] if i > 0 else 0.0
                    g = coef * (a - C[j - 1, t])
                    grad[i, t] += g
                    grad[j, t] -= g
    return value, grad[1:].copy()


pe_center_jit = njit(_pe_center_loop)


# ---------------------------------------------------------------------------
# Distance head + classifier loss, fused.
#
# Per-sample loss is  w_ce * CE + w_rce * RCE + w_gce * GCE  on the posterior
# p = softmax(-||z - c_k||^2 / sigma^2); the batch mean is returned together
# with its gradients wrt z and C.


def head_loss_numpy(z, C, y, inv_s2, w_ce, w_rce, A, w_gce, gce_q):
    B = z.shape[0]
    K = C.shape[0]
    diff = z[:, None, :] - C[None, :, :]
    logits = -np.sum(diff * diff, axis=2) * inv_s2
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    p = e / e.sum(axis=1, keepdims=True)
    rows = np.arange(B)
    py = p[rows, y]
    ce = -np.log(np.maximum(py, PROB_FLOOR))
    rce = -A * (1.0 - py)
    pyq = py ** gce_q
    gce = (1.0 - pyq) / gce_q
    onehot = np.zeros((B, K))
    onehot[rows, y] = 1.0
    resid = onehot - p
    g = w_ce * (p - onehot) + (w_rce * A * py - w_gce * pyq)[:, None] * resid
    g /= B
    # d logit_k / d z = -2 inv_s2 (z - c_k);  d logit_k / d c_k = +2 inv_s2 (z - c_k)
    gd = g[:, :, None] * diff * (2.0 * inv_s2)
    dz = -gd.sum(axis=1)
    dC = gd.sum(axis=0)
    return ce.mean(), rce.mean(), gce.mean(), dz, dC, p


def _head_loss_loop(z, C, y, inv_s2, w_ce, w_rce, A, w_gce, gce_q):
    B, m = z.shape
    K = C.shape[0]
    p = np.empty((B, K))
    dz = np.zeros((B, m))
    dC = np.zeros((K, m))
    logit = np.empty(K)
    g = np.empty(K)
    ce_sum = 0.0
    rce_sum = 0.0
    gce_sum = 0.0
    for n in range(B):
        mx = -np.inf
        for k in range(K):
            s = 0.0
            for t in range(m):
                dd = z[n, t] - C[k, t]
                s += dd * dd
            logit[k] = -s * inv_s2
            if logit[k] > mx:
                mx = logit[k]
        tot = 0.0
        for k in range(K):
            logit[k] = np.exp(logit[k] - mx)
            tot += logit[k]
        for k in range(K):
            p[n, k] = logit[k] / tot
        yn = y[n]
        py = p[n, yn]
        ce_sum += -np.log(max(py, PROB_FLOOR))
        rce_sum += -A * (1.0 - py)
        pyq = py ** gce_q
        gce_sum += (1.0 - pyq) / gce_q
        mix = w_rce * A * py - w_gce * pyq
        for k in range(K):
            hot = 1.0 if k == yn else 0.0
            g[k] = (w_ce * (p[n, k] - hot) + mix * (hot - p[n, k])) / B
        for k in range(K):
            c = g[k] * 2.0 * inv_s2
            for t in range(m):
                gd = c * (z[n, t] - C[k, t])
                dz[n, t] -= gd
                dC[k, t] += gd
    return ce_sum / B, rce_sum / B, gce_sum / B, dz, dC, p


head_loss_jit = njit(_head_loss_loop)


def _head_loss_jit_entry(z, C, y, inv_s2, w_ce, w_rce, A, w_gce, gce_q):
    return head_loss_jit(
        np.ascontiguousarray(z, dtype=np.float64),
        np.ascontiguousarray(C, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.int64),
        float(inv_s2), float(w_ce), float(w_rce), float(A), float(w_gce), float(gce_q),
    )


def _pe_center_jit_entry(C, u, v, xi, beta):
    value, grad = pe_center_jit(
        np.ascontiguousarray(C, dtype=np.float64), float(u), float(v), float(xi), float(beta)
    )
    return float(value), grad


if USE_NUMBA:
    head_loss = _head_loss_jit_entry
    pe_center = _pe_center_jit_entry
else:
    head_loss = head_loss_numpy
    pe_center = pe_center_numpy
