"""Compensated summation with a fixed reduction order.

All series in the package go through :func:`csum`.  The reduction is a
blocked pairwise tree whose leaves are Neumaier (improved Kahan) sums, so
the result depends only on the order of the input, never on the machine.
"""

from __future__ import annotations

import numpy as np

_BLOCK = 128


def _neumaier_rows(x: np.ndarray) -> np.ndarray:
    # Compensated sum along axis 0, vectorised over the remaining axes.
    s = np.zeros(x.shape[1:], dtype=x.dtype)
    c = np.zeros_like(s)
    for v in x:
        t = s + v
        big = np.abs(s) >= np.abs(v)
        c += np.where(big, (s - t) + v, (v - t) + s)
        s = t
    return s + c


def _neumaier_complex(x: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(x):
        return _neumaier_rows(x.real) + 1j * _neumaier_rows(x.imag)
    return _neumaier_rows(x)


def csum(values, axis: int = 0):
    """Compensated sum of ``values`` along ``axis``.

    Works for real or complex input.  Long axes are reduced in blocks of 128
    terms with compensation inside each block, then the block sums are
    combined by the same procedure (a pairwise tree of compensated leaves).
    """
    x = np.asarray(values)
    if x.dtype.kind not in "fc":
        x = x.astype(float)
    x = np.moveaxis(x, axis, 0)
    if x.shape[0] == 0:
        return np.zeros(x.shape[1:], dtype=x.dtype)[()]
    while x.shape[0] > _BLOCK:
        n = x.shape[0]
        nb = -(-n // _BLOCK)
        pad = nb * _BLOCK - n
        if pad:
            x = np.concatenate([x, np.zeros((pad,) + x.shape[1:], dtype=x.dtype)])
        x = x.reshape((nb, _BLOCK) + x.shape[1:])
        x = _neumaier_complex(np.moveaxis(x, 1, 0))
    return _neumaier_complex(x)[()]


def cumulative_csum(values) -> np.ndarray:
    """Running compensated partial sums of a 1-d sequence."""
    x = np.asarray(values)
    if np.iscomplexobj(x):
        return cumulative_csum(x.real) + 1j * cumulative_csum(x.imag)
    x = x.astype(float)
    out = np.empty_like(x)
    s = x.dtype.type(0)
    c = x.dtype.type(0)
    for i, v in enumerate(x):
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        out[i] = s + c
    return out
