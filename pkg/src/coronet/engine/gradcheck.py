"""Central finite-difference verification of tape gradients."""
import numpy as np

from .tensor import backward, recording


def _as_list(params):
    return list(params.values()) if hasattr(params, "values") else list(params)


def analytic_grads(f, params):
    plist = _as_list(params)
    for p in plist:
        p.grad = None
    with recording() as tape:
        loss = f()
    backward(tape, loss, plist)
    grads = [p.grad.copy() for p in plist]
    for p in plist:
        p.grad = None
    return grads


def numeric_grads(f, params, h=1e-5):
    out = []
    for p in _as_list(params):
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f().item()
            flat[i] = orig - h
            down = f().item()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        out.append(g)
    return out


def grad_check(f, params, h=1e-5, floor=1e-12):
    """Worst relative error between tape and central-difference gradients.

    ``f`` takes no arguments and returns a scalar Tensor computed from
    ``params``; it must be deterministic. The relative error per coordinate
    is ``|a - n| / (|a| + |n| + floor)``. Central differences carry an
    absolute noise of roughly ``eps * |f| / h`` (~1e-11 at h=1e-5), so
    coordinates with near-zero true gradient need a larger ``floor`` to be
    judged on absolute rather than relative error.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    worst = 0.0
    for a, n in zip(analytic_grads(f, params), numeric_grads(f, params, h)):
        rel = np.abs(a - n) / (np.abs(a) + np.abs(n) + floor)
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst
