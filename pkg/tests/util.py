"""Shared test oracles: central finite differences and relative error."""

import numpy as np

FD_STEP = 1e-5
FD_RTOL = 1e-5


def central_diff(fn, x, step=FD_STEP):
    """Central finite-difference gradient of scalar fn at flat vector x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * step)
    return g


def assert_grad_close(analytic, numeric, rtol=FD_RTOL, atol=1e-8, label=""):
    # atol covers identically-zero gradients against finite-difference noise
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    b = np.asarray(numeric, dtype=np.float64).reshape(-1)
    gap = np.linalg.norm(a - b)
    bound = rtol * max(np.linalg.norm(a), np.linalg.norm(b)) + atol
    assert gap <= bound, f"{label} gradient mismatch: |a-b|={gap:.3e} > {bound:.3e}"
