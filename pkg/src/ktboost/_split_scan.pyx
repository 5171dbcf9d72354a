"""Compiled scan for the gain-maximizing boundary split on one feature.

Semantics must stay bit-identical to ``_split_scan_py.best_split``: both
accumulate prefix sums left to right over the sorted column and evaluate
the gain with the same expression, so the two backends pick identical
splits even on near-ties.
"""

from libc.math cimport INFINITY, NAN, nextafter


def best_split(const double[::1] xs, const double[::1] g, const double[::1] h,
               Py_ssize_t min_leaf):
    """Best split of a column sorted ascending, as (pos, gain, threshold).

    ``pos`` is the left-side row count; thresholds sit at midpoints between
    consecutive distinct values and ties keep the smallest threshold.
    Returns (-1, -inf, nan) when no admissible boundary exists.
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i, best_pos = -1
    cdef double gt = 0.0, ht = 0.0, gl = 0.0, hl = 0.0
    cdef double gr, hr, gain, base, thr
    cdef double best_gain = -INFINITY, best_thr = NAN

    if n < 2:
        return -1, -INFINITY, NAN
    for i in range(n):
        gt += g[i]
        ht += h[i]
    if ht <= 0.0:
        return -1, -INFINITY, NAN
    base = gt * gt / ht

    for i in range(n - 1):
        gl += g[i]
        hl += h[i]
        if xs[i + 1] == xs[i]:
            continue
        if i + 1 < min_leaf or n - i - 1 < min_leaf:
            continue
        hr = ht - hl
        if hl <= 0.0 or hr <= 0.0:
            continue
        gr = gt - gl
        gain = gl * gl / hl + gr * gr / hr - base
        if gain > best_gain:
            best_gain = gain
            best_pos = i + 1
            thr = (xs[i] + xs[i + 1]) / 2.0
            if thr >= xs[i + 1]:
                # Adjacent floats can round the midpoint up onto the right
                # value; pull it back so "x <= threshold" matches pos.
                thr = nextafter(xs[i + 1], xs[i])
            best_thr = thr

    if best_pos < 0:
        return -1, -INFINITY, NAN
    return best_pos, best_gain, best_thr
