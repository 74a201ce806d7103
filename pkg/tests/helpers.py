"""Shared test oracles: finite differences and error metrics."""

from __future__ import annotations

import numpy as np


def fd_gradient(f, arrays, step=1e-4):
    """Central-difference gradient of a scalar function of several arrays.

    f receives the full list of arrays and returns a float. Brute force,
    2 * n evaluations; intended as an independent oracle for hand-derived
    backward rules.
    """
    grads = []
    for pi, base in enumerate(arrays):
        g = np.zeros_like(base, dtype=np.float64)
        for idx in np.ndindex(base.shape):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[pi][idx] += step
            minus[pi][idx] -= step
            g[idx] = (f(plus) - f(minus)) / (2.0 * step)
        grads.append(g)
    return grads


def max_rel_err(a, b, floor=1e-10):
    """Worst per-coordinate relative error; coordinates where both sides sit
    below the floor count as exact."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    err = np.abs(a - b) / scale
    err[np.maximum(np.abs(a), np.abs(b)) < floor] = 0.0
    return float(err.max()) if err.size else 0.0


def flatten_layers(layered) -> np.ndarray:
    """Concatenate a ParamSet/Mask/Gradients-style container into one vector."""
    return np.concatenate([np.concatenate([w.ravel(), b.ravel()])
                           for w, b in layered.layers])
