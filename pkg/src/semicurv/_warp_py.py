"""Pure numpy fallback for the compiled sampling kernels in ``_warp_ext``.

Same signatures: results are written into caller-provided output arrays.
"""

import numpy as np


def mirror_int(idx, n):
    """Reflect integer indices into ``[0, n-1]`` without repeating the edge."""
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.mod(idx, period)
    return np.where(idx >= n, period - idx, idx)


def _neighbours(coords, H, W):
    x = coords[..., 0]
    y = coords[..., 1]
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    ix0, ix1 = mirror_int(x0, W), mirror_int(x0 + 1, W)
    iy0, iy1 = mirror_int(y0, H), mirror_int(y0 + 1, H)
    corners = (
        (iy0, ix0, (1.0 - fx) * (1.0 - fy)),
        (iy0, ix1, fx * (1.0 - fy)),
        (iy1, ix0, (1.0 - fx) * fy),
        (iy1, ix1, fx * fy),
    )
    return corners


def sample_forward(src, coords, out):
    N, C, H, W = src.shape
    acc = np.zeros(out.shape, dtype=np.float64)
    for n in range(N):
        for iy, ix, w in _neighbours(coords[n], H, W):
            acc[n] += w[None] * src[n][:, iy, ix]
    out[...] = acc


def sample_backward(grad_out, coords, grad_src):
    N, C, H, W = grad_src.shape
    acc = np.zeros(grad_src.shape, dtype=np.float64)
    for n in range(N):
        flat = acc[n].reshape(C, H * W)
        g = grad_out[n].reshape(C, -1).astype(np.float64)
        for iy, ix, w in _neighbours(coords[n], H, W):
            lin = (iy * W + ix).ravel()
            contrib = g * w.ravel()[None]
            for c in range(C):
                np.add.at(flat[c], lin, contrib[c])
    grad_src += acc.astype(grad_src.dtype)
