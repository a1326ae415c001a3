"""Shared test oracles: finite differences and small utilities.

The finite-difference gradient here is the independent check against the
autodiff engine; it only ever calls forward passes.
"""

import numpy as np

from textspot.tensor import Tensor, backward


def finite_difference_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f at x, elementwise."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def point_in_poly(x, y, poly):
    """Even-odd rule point-in-polygon test, independent of library code."""
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xcross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xcross:
                inside = not inside
    return inside


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def check_grads(build_loss, leaves: dict[str, Tensor], h: float = 1e-5,
                floor: float = 1e-6) -> float:
    """Compare autodiff grads on ``leaves`` against central differences.

    ``build_loss`` must run a fresh forward pass using the leaf tensors
    and return the scalar loss Tensor. Returns the max relative error.
    """
    loss = build_loss()
    for t in leaves.values():
        t.grad = None
    backward(loss)
    worst = 0.0
    for name, t in leaves.items():
        auto = t.grad if t.grad is not None else np.zeros_like(t.data)
        fd = finite_difference_grad(lambda: build_loss().item(), t.data, h=h)
        worst = max(worst, max_relative_error(auto, fd, floor))
    return worst
