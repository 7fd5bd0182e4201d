# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled mirror-extrapolated bilinear sampling kernels.

Both kernels take raw (unclipped) source coordinates of shape (N, Ho, Wo, 2),
last axis ordered (x, y) = (column, row).
"""

from libc.math cimport floor

ctypedef fused floating:
    float
    double


cdef inline Py_ssize_t _mirror(Py_ssize_t i, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t period
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = i % period
    if i < 0:
        i += period
    if i >= n:
        i = period - i
    return i


def sample_forward(floating[:, :, :, ::1] src, double[:, :, :, ::1] coords,
                   floating[:, :, :, ::1] out):
    cdef Py_ssize_t N = src.shape[0], C = src.shape[1]
    cdef Py_ssize_t H = src.shape[2], W = src.shape[3]
    cdef Py_ssize_t Ho = coords.shape[1], Wo = coords.shape[2]
    cdef Py_ssize_t n, c, i, j, x0, y0, ix0, ix1, iy0, iy1
    cdef double x, y, fx, fy, w00, w01, w10, w11
    with nogil:
        for n in range(N):
            for i in range(Ho):
                for j in range(Wo):
                    x = coords[n, i, j, 0]
                    y = coords[n, i, j, 1]
                    x0 = <Py_ssize_t>floor(x)
                    y0 = <Py_ssize_t>floor(y)
                    fx = x - x0
                    fy = y - y0
                    ix0 = _mirror(x0, W)
                    ix1 = _mirror(x0 + 1, W)
                    iy0 = _mirror(y0, H)
                    iy1 = _mirror(y0 + 1, H)
                    w00 = (1.0 - fx) * (1.0 - fy)
                    w01 = fx * (1.0 - fy)
                    w10 = (1.0 - fx) * fy
                    w11 = fx * fy
                    for c in range(C):
                        out[n, c, i, j] = <floating>(
                            w00 * src[n, c, iy0, ix0] + w01 * src[n, c, iy0, ix1]
                            + w10 * src[n, c, iy1, ix0] + w11 * src[n, c, iy1, ix1])


def sample_backward(floating[:, :, :, ::1] grad_out, double[:, :, :, ::1] coords,
                    floating[:, :, :, ::1] grad_src):
    """Adjoint of ``sample_forward``; accumulates into ``grad_src`` (must be zeroed)."""
    cdef Py_ssize_t N = grad_src.shape[0], C = grad_src.shape[1]
    cdef Py_ssize_t H = grad_src.shape[2], W = grad_src.shape[3]
    cdef Py_ssize_t Ho = coords.shape[1], Wo = coords.shape[2]
    cdef Py_ssize_t n, c, i, j, x0, y0, ix0, ix1, iy0, iy1
    cdef double x, y, fx, fy, w00, w01, w10, w11, g
    with nogil:
        for n in range(N):
            for i in range(Ho):
                for j in range(Wo):
                    x = coords[n, i, j, 0]
                    y = coords[n, i, j, 1]
                    x0 = <Py_ssize_t>floor(x)
                    y0 = <Py_ssize_t>floor(y)
                    fx = x - x0
                    fy = y - y0
                    ix0 = _mirror(x0, W)
                    ix1 = _mirror(x0 + 1, W)
                    iy0 = _mirror(y0, H)
                    iy1 = _mirror(y0 + 1, H)
                    w00 = (1.0 - fx) * (1.0 - fy)
                    w01 = fx * (1.0 - fy)
                    w10 = (1.0 - fx) * fy
                    w11 = fx * fy
                    for c in range(C):
                        g = grad_out[n, c, i, j]
                        grad_src[n, c, iy0, ix0] += <floating>(w00 * g)
                        grad_src[n, c, iy0, ix1] += <floating>(w01 * g)
                        grad_src[n, c, iy1, ix0] += <floating>(w10 * g)
                        grad_src[n, c, iy1, ix1] += <floating>(w11 * g)
