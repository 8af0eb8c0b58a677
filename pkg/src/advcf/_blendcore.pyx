# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled compositing kernels.

Bit-identical to advcf._blendpure: identical float64 expressions, floor(v+0.5)
rounding, staged rounding between blend and brightness. Compiled with
-ffp-contract=off so no FMA contraction perturbs the ties.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport floor

BACKEND = "compiled"


cdef inline unsigned char _round_clamp(double v) nogil:
    cdef double r = floor(v + 0.5)
    if r < 0.0:
        return 0
    if r > 255.0:
        return 255
    return <unsigned char> r


def blend_uniform(cnp.uint8_t[:, :, ::1] img, color, double intensity):
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef double keep = 1.0 - intensity
    cdef double t0 = intensity * <double> color[0]
    cdef double t1 = intensity * <double> color[1]
    cdef double t2 = intensity * <double> color[2]
    out_arr = np.empty((h, w, 3), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(h):
            for j in range(w):
                out[i, j, 0] = _round_clamp(keep * <double> img[i, j, 0] + t0)
                out[i, j, 1] = _round_clamp(keep * <double> img[i, j, 1] + t1)
                out[i, j, 2] = _round_clamp(keep * <double> img[i, j, 2] + t2)
    return out_arr


def shift_blend_scale(cnp.uint8_t[:, :, ::1] img, color, double intensity,
                      Py_ssize_t dx, Py_ssize_t dy, double brightness):
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    cdef double keep = 1.0 - intensity
    cdef double t0 = intensity * <double> color[0]
    cdef double t1 = intensity * <double> color[1]
    cdef double t2 = intensity * <double> color[2]
    out_arr = np.empty((h, w, 3), dtype=np.uint8)
    cdef cnp.uint8_t[:, :, ::1] out = out_arr
    cdef Py_ssize_t i, j, si, sj
    cdef double blended
    with nogil:
        for i in range(h):
            si = i - dy
            if si < 0:
                si = 0
            elif si > h - 1:
                si = h - 1
            for j in range(w):
                sj = j - dx
                if sj < 0:
                    sj = 0
                elif sj > w - 1:
                    sj = w - 1
                blended = <double> _round_clamp(keep * <double> img[si, sj, 0] + t0)
                out[i, j, 0] = _round_clamp(blended * brightness)
                blended = <double> _round_clamp(keep * <double> img[si, sj, 1] + t1)
                out[i, j, 1] = _round_clamp(blended * brightness)
                blended = <double> _round_clamp(keep * <double> img[si, sj, 2] + t2)
                out[i, j, 2] = _round_clamp(blended * brightness)
    return out_arr
