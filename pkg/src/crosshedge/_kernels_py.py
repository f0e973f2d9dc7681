"""Pure-Python/numpy versions of the compiled kernels.

Bit-compatible with ``_kernels.pyx``: same counter hash, same uniform
mapping, same Thomas sweep order.
"""

import numpy as np
from scipy.special import ndtri

_U64 = np.uint64
GOLDEN = _U64(0x9E3779B97F4A7C15)
CHANNEL_MULT = _U64(0xD1B54A32D192ED03)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)
TWO_M53 = 2.0 ** -53


def _mix64(z):
    z = (z ^ (z >> _U64(30))) * _M1
    z = (z ^ (z >> _U64(27))) * _M2
    return z ^ (z >> _U64(31))


def gaussian(seed, channel, streams, step):
    """Standard normals for (seed, channel, stream, step), one per stream."""
    streams = np.asarray(streams, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = _mix64(np.array([seed], dtype=np.uint64) + GOLDEN)
        h = _mix64(h ^ (_U64(channel + 1) * CHANNEL_MULT))
        key = _mix64(h + (streams + _U64(1)) * GOLDEN)
        u = _mix64(key + _U64(step + 1) * GOLDEN)
    return ndtri(((u >> _U64(11)).astype(np.float64) + 0.5) * TWO_M53)


def tridiag_solve(lower, diag, upper, rhs):
    """Thomas algorithm; lower[0] and upper[n-1] are ignored."""
    a = lower.tolist()
    b = diag.tolist()
    cu = upper.tolist()
    d = rhs.tolist()
    n = len(b)
    c = [0.0] * n
    x = [0.0] * n
    c[0] = cu[0] / b[0]
    x[0] = d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i] * c[i - 1]
        c[i] = cu[i] / m
        x[i] = (d[i] - a[i] * x[i - 1]) / m
    for i in range(n - 2, -1, -1):
        x[i] = x[i] - c[i] * x[i + 1]
    return np.array(x)
