"""Central finite differences for checking analytic gradients."""

from __future__ import annotations

import numpy as np


def numerical_grad(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the scalar function ``f`` at ``x``."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f(x)
        flat[i] = orig - step
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return g


def max_relative_error(analytic, numeric, floor: float = 1e-8) -> float:
    """Largest ``|a - b| / max(|a|, |b|)``, skipping entries where both are below ``floor``."""
    a = np.asarray(analytic, dtype=float).ravel()
    b = np.asarray(numeric, dtype=float).ravel()
    scale = np.maximum(np.abs(a), np.abs(b))
    keep = scale >= floor
    if not np.any(keep):
        return 0.0
    return float(np.max(np.abs(a[keep] - b[keep]) / scale[keep]))
