"""Forward-evaluation kernels for packed leaky-ReLU networks.

Two interchangeable back ends are provided. The compiled one loops over points
and layers with numba; the fallback is plain numpy and vectorises over points
one layer at a time. Set ``LEAKYNET_NO_NUMBA=1`` to force the numpy path (the
numpy path is also used automatically when numba cannot be imported).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLED = os.environ.get("LEAKYNET_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:  # pragma: no cover - exercised implicitly depending on the environment
    if _DISABLED:
        raise ImportError("numba disabled by LEAKYNET_NO_NUMBA")
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def backend_name() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


def pack_layers(weights, biases, alphas):
    """Flatten per-layer arrays into contiguous buffers plus offset tables."""
    n = len(weights)
    dims = np.empty(n + 1, dtype=np.int64)
    dims[0] = weights[0].shape[1]
    w_off = np.zeros(n + 1, dtype=np.int64)
    b_off = np.zeros(n + 1, dtype=np.int64)
    for i, w in enumerate(weights):
        dims[i + 1] = w.shape[0]
        w_off[i + 1] = w_off[i] + w.size
        b_off[i + 1] = b_off[i] + w.shape[0]
    w_flat = np.concatenate([np.ascontiguousarray(w, dtype=np.float64).ravel() for w in weights])
    b_flat = np.concatenate([np.asarray(b, dtype=np.float64) for b in biases])
    a_flat = np.concatenate([np.asarray(a, dtype=np.float64) for a in alphas])
    return w_flat, b_flat, a_flat, dims, w_off, b_off


def forward_numpy(weights, biases, alphas, x):
    """Evaluate layer by layer; ``x`` has shape (n_points, d_in)."""
    h = x
    for w, b, a in zip(weights, biases, alphas):
        z = h @ w.T + b
        h = np.where(z < 0.0, a * z, z)
    return h


def _forward_loop(w_flat, b_flat, a_flat, dims, w_off, b_off, x):
    n_pts = x.shape[0]
    n_layers = dims.shape[0] - 1
    width = 0
    for i in range(n_layers + 1):
        if dims[i] > width:
            width = dims[i]
    out = np.empty((n_pts, dims[n_layers]))
    cur = np.empty(width)
    nxt = np.empty(width)
    for p in range(n_pts):
        for j in range(dims[0]):
            cur[j] = x[p, j]
        for layer in range(n_layers):
            d_in = dims[layer]
            d_out = dims[layer + 1]
            wo = w_off[layer]
            bo = b_off[layer]
            for r in range(d_out):
                acc = 0.0
                for c in range(d_in):
                    acc += w_flat[wo + r * d_in + c] * cur[c]
                acc += b_flat[bo + r]
                if acc < 0.0:
                    acc = a_flat[bo + r] * acc
                nxt[r] = acc
            for r in range(d_out):
                cur[r] = nxt[r]
        for j in range(dims[n_layers]):
            out[p, j] = cur[j]
    return out


if HAVE_NUMBA:
    _forward_compiled = numba.njit(cache=True, nogil=True)(_forward_loop)
else:  # pragma: no cover
    _forward_compiled = None


def forward_packed(packed, x):
    """Evaluate a packed network with the compiled loop (numba required)."""
    if _forward_compiled is None:
        raise RuntimeError("numba back end unavailable")
    return _forward_compiled(*packed, np.ascontiguousarray(x, dtype=np.float64))


def forward_loop_python(packed, x):
    """The compiled loop run by the interpreter; only useful as a slow oracle."""
    return _forward_loop(*packed, np.ascontiguousarray(x, dtype=np.float64))
