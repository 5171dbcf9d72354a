"""Pure-numpy fallback for the split scan; see _split_scan.pyx.

Prefix sums are np.cumsum (strictly left-to-right accumulation) and the
gain expression mirrors the compiled loop, keeping both backends
bit-identical on the same input.
"""

import numpy as np


def best_split(xs, g, h, min_leaf):
    """Best split of a column sorted ascending, as (pos, gain, threshold)."""
    n = xs.shape[0]
    if n < 2:
        return -1, -np.inf, np.nan
    gl = np.cumsum(g)
    hl = np.cumsum(h)
    gt = gl[-1]
    ht = hl[-1]
    if ht <= 0.0:
        return -1, -np.inf, np.nan

    pos = np.arange(1, n)
    ok = xs[1:] != xs[:-1]
    ok &= (pos >= min_leaf) & (n - pos >= min_leaf)
    gl = gl[:-1]
    hl = hl[:-1]
    hr = ht - hl
    ok &= (hl > 0.0) & (hr > 0.0)
    if not ok.any():
        return -1, -np.inf, np.nan

    gr = gt - gl
    base = gt * gt / ht
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = gl * gl / hl + gr * gr / hr - base
    gain[~ok] = -np.inf
    i = int(np.argmax(gain))
    thr = (xs[i] + xs[i + 1]) / 2.0
    if thr >= xs[i + 1]:
        thr = np.nextafter(xs[i + 1], xs[i])
    return i + 1, float(gain[i]), float(thr)
