"""Hot numeric loops, each in a numba and a pure-numpy flavour.

The public names (``gru_forward``, ``gru_backward``, ``assign_nearest``,
``cosine_similarity``) are bound at import time to the jitted variant when
numba is usable and ``CORONET_DISABLE_JIT`` is unset. Both flavours stay
importable under ``*_jit`` / ``*_numpy`` so tests and the benchmark can
compare them directly.

GRU gate layout along the last axis is ``[update | reset | candidate]``:

    z = sigmoid(gx_z + h U_z)
    r = sigmoid(gx_r + h U_r)
    n = tanh(gx_n + r * (h U_n))
    h' = (1 - z) * n + z * h

``gx`` is the input projection ``x Wx + b``, computed outside the kernel.
"""
import numpy as np

from ._accel import USE_JIT, njit


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# --------------------------------------------------------------------------
# GRU recurrence
# --------------------------------------------------------------------------

def gru_forward_numpy(gx, uh):
    steps, three_h = gx.shape
    hid = three_h // 3
    hs = np.zeros((steps + 1, hid))
    z = np.empty((steps, hid))
    r = np.empty((steps, hid))
    n = np.empty((steps, hid))
    ghn = np.empty((steps, hid))
    for t in range(steps):
        h = hs[t]
        gh = h @ uh
        z[t] = _sigmoid(gx[t, :hid] + gh[:hid])
        r[t] = _sigmoid(gx[t, hid:2 * hid] + gh[hid:2 * hid])
        ghn[t] = gh[2 * hid:]
        n[t] = np.tanh(gx[t, 2 * hid:] + r[t] * ghn[t])
        hs[t + 1] = (1.0 - z[t]) * n[t] + z[t] * h
    return hs, z, r, n, ghn


def _gru_forward_loops(gx, uh):
    steps, three_h = gx.shape
    hid = three_h // 3
    hs = np.zeros((steps + 1, hid))
    z = np.empty((steps, hid))
    r = np.empty((steps, hid))
    n = np.empty((steps, hid))
    ghn = np.empty((steps, hid))
    gh = np.empty(three_h)
    for t in range(steps):
        for j in range(three_h):
            acc = 0.0
            for i in range(hid):
                acc += hs[t, i] * uh[i, j]
            gh[j] = acc
        for j in range(hid):
            zj = 1.0 / (1.0 + np.exp(-(gx[t, j] + gh[j])))
            rj = 1.0 / (1.0 + np.exp(-(gx[t, hid + j] + gh[hid + j])))
            nj = np.tanh(gx[t, 2 * hid + j] + rj * gh[2 * hid + j])
            z[t, j] = zj
            r[t, j] = rj
            n[t, j] = nj
            ghn[t, j] = gh[2 * hid + j]
            hs[t + 1, j] = (1.0 - zj) * nj + zj * hs[t, j]
    return hs, z, r, n, ghn


gru_forward_jit = njit(_gru_forward_loops)


def gru_backward_numpy(dh_out, hs, z, r, n, ghn, uh):
    """Backprop through time.

    ``dh_out`` is dL/dh_t for t = 1..T (shape T x H). Returns the gradient
    with respect to ``gx`` (T x 3H) and ``uh`` (H x 3H).
    """
    steps, hid = dh_out.shape
    dgx = np.empty((steps, 3 * hid))
    duh = np.zeros_like(uh)
    dh_next = np.zeros(hid)
    for t in range(steps - 1, -1, -1):
        dh = dh_out[t] + dh_next
        h_prev = hs[t]
        dz = dh * (h_prev - n[t])
        dn = dh * (1.0 - z[t])
        dn_pre = dn * (1.0 - n[t] * n[t])
        dr = dn_pre * ghn[t]
        dz_pre = dz * z[t] * (1.0 - z[t])
        dr_pre = dr * r[t] * (1.0 - r[t])
        dgh = np.concatenate((dz_pre, dr_pre, dn_pre * r[t]))
        dgx[t, :hid] = dz_pre
        dgx[t, hid:2 * hid] = dr_pre
        dgx[t, 2 * hid:] = dn_pre
        duh += np.outer(h_prev, dgh)
        dh_next = dh * z[t] + uh @ dgh
    return dgx, duh


def _gru_backward_loops(dh_out, hs, z, r, n, ghn, uh):
    steps, hid = dh_out.shape
    three_h = 3 * hid
    dgx = np.empty((steps, three_h))
    duh = np.zeros_like(uh)
    dh_next = np.zeros(hid)
    dh = np.empty(hid)
    dgh = np.empty(three_h)
    for t in range(steps - 1, -1, -1):
        for j in range(hid):
            dh[j] = dh_out[t, j] + dh_next[j]
        for j in range(hid):
            zj = z[t, j]
            nj = n[t, j]
            rj = r[t, j]
            dz_pre = dh[j] * (hs[t, j] - nj) * zj * (1.0 - zj)
            dn_pre = dh[j] * (1.0 - zj) * (1.0 - nj * nj)
            dr_pre = dn_pre * ghn[t, j] * rj * (1.0 - rj)
            dgx[t, j] = dz_pre
            dgx[t, hid + j] = dr_pre
            dgx[t, 2 * hid + j] = dn_pre
            dgh[j] = dz_pre
            dgh[hid + j] = dr_pre
            dgh[2 * hid + j] = dn_pre * rj
        for i in range(hid):
            hi = hs[t, i]
            acc = dh[i] * z[t, i]
            for j in range(three_h):
                duh[i, j] += hi * dgh[j]
                acc += uh[i, j] * dgh[j]
            dh_next[i] = acc
    return dgx, duh


gru_backward_jit = njit(_gru_backward_loops)


# --------------------------------------------------------------------------
# k-means assignment
# --------------------------------------------------------------------------

def assign_nearest_numpy(points, centers):
    """Return (labels, squared distance to the assigned center)."""
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    return labels.astype(np.int64), d2[np.arange(points.shape[0]), labels]


def _assign_nearest_loops(points, centers):
    n_pts, dim = points.shape
    n_ctr = centers.shape[0]
    labels = np.zeros(n_pts, dtype=np.int64)
    best = np.empty(n_pts)
    for i in range(n_pts):
        best_d = np.inf
        best_c = 0
        for c in range(n_ctr):
            acc = 0.0
            for j in range(dim):
                diff = points[i, j] - centers[c, j]
                acc += diff * diff
            if acc < best_d:
                best_d = acc
                best_c = c
        labels[i] = best_c
        best[i] = best_d
    return labels, best


assign_nearest_jit = njit(_assign_nearest_loops)


# --------------------------------------------------------------------------
# frame-wise cosine similarity
# --------------------------------------------------------------------------

def cosine_similarity_numpy(x):
    norms = np.sqrt((x * x).sum(axis=1))
    unit = x / norms[:, None]
    return unit @ unit.T


def _cosine_similarity_loops(x):
    n_rows, dim = x.shape
    unit = np.empty((n_rows, dim))
    for i in range(n_rows):
        acc = 0.0
        for j in range(dim):
            acc += x[i, j] * x[i, j]
        inv = 1.0 / np.sqrt(acc)
        for j in range(dim):
            unit[i, j] = x[i, j] * inv
    out = np.empty((n_rows, n_rows))
    for i in range(n_rows):
        for k in range(i, n_rows):
            acc = 0.0
            for j in range(dim):
                acc += unit[i, j] * unit[k, j]
            out[i, k] = acc
            out[k, i] = acc
    return out


cosine_similarity_jit = njit(_cosine_similarity_loops)


if USE_JIT:
    gru_forward = gru_forward_jit
    gru_backward = gru_backward_jit
    assign_nearest = assign_nearest_jit
    cosine_similarity = cosine_similarity_jit
else:
    gru_forward = gru_forward_numpy
    gru_backward = gru_backward_numpy
    assign_nearest = assign_nearest_numpy
    cosine_similarity = cosine_similarity_numpy
