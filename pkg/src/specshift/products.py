"""Weierstrass canonical products evaluated in logarithmic form.

The model-space computations involve products over lacunary zero sets such
as ``{3**n}``; their values overflow double precision long before the
interesting structure appears.  Everything here therefore works with complex
logarithms (``log|f| + i arg f``) and only exponentiates ratios.

Points may carry an exact small offset from a base value (``t + 1/2`` with
``t = 2**200`` is not representable as a float); differences between such
points are formed as ``(base_i - base_j) + (off_i - off_j)`` so a shift of
one half survives at any magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral_core import TailRule
from .summation import csum

_CHUNK = 1 << 20


@dataclass(frozen=True, eq=False)
class Points:
    """Complex points ``base + off`` with the offset kept separately."""

    base: np.ndarray
    off: np.ndarray

    @staticmethod
    def of(x, off=None) -> "Points":
        if isinstance(x, Points):
            return x
        base = np.atleast_1d(np.asarray(x, dtype=complex))
        if off is None:
            off = np.zeros_like(base)
        else:
            off = np.broadcast_to(np.asarray(off, dtype=complex), base.shape).copy()
        return Points(base, off)

    def __len__(self) -> int:
        return len(self.base)

    def __getitem__(self, idx) -> "Points":
        return Points(np.atleast_1d(self.base[idx]), np.atleast_1d(self.off[idx]))

    @property
    def value(self) -> np.ndarray:
        return self.base + self.off

    def minus(self, other: "Points") -> np.ndarray:
        """Outer differences ``self[i] - other[j]``."""
        other = Points.of(other)
        return (self.base[:, None] - other.base[None, :]) + (self.off[:, None] - other.off[None, :])

    def concat(self, other: "Points") -> "Points":
        other = Points.of(other)
        return Points(np.concatenate([self.base, other.base]), np.concatenate([self.off, other.off]))

    def index_of(self, p: "Points", rtol: float = 1e-13) -> np.ndarray:
        """Index of each point of ``p`` in ``self`` (-1 when absent)."""
        p = Points.of(p)
        out = np.full(len(p), -1)
        if not len(self):
            return out
        d = np.abs(p.minus(self))
        k = np.argmin(d, axis=1)
        rows = np.arange(len(p))
        # bases agree to rtol and offsets agree to rtol of their own size, so
        # that t + 1/2 stays distinct from t at any magnitude
        db = np.abs(p.base[:, None] - self.base[None, :])[rows, k]
        do = np.abs(p.off[:, None] - self.off[None, :])[rows, k]
        osz = np.maximum(np.abs(p.off), np.abs(self.off[k]))
        hit = (db <= rtol * np.maximum(np.abs(p.base), 1.0)) & (do <= rtol * osz)
        out[hit] = k[hit]
        return out


def _weierstrass_poly(u: np.ndarray, genus: int) -> np.ndarray:
    out = np.zeros_like(u)
    p = np.ones_like(u)
    for j in range(1, genus + 1):
        p = p * u
        out = out + p / j
    return out


def _log_factors(z: Points, r: Points, genus: int) -> np.ndarray:
    """``log E_g(z_j / r_n)`` as an array indexed ``[n, j]``."""
    u = z.value[None, :] / r.value[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log1p(-u)
        far = np.abs(u) >= 0.5
        if far.any():
            d = r.minus(z)  # r_n - z_j, exact in the offsets
            rr = np.broadcast_to(r.value[:, None], d.shape)
            out[far] = np.log(d[far]) - np.log(rr[far])
    if genus:
        out = out + _weierstrass_poly(u, genus)
    return out


def log_sum(logs, axis: int = 0):
    """Complex log of ``sum(exp(logs))`` without overflow."""
    logs = np.asarray(logs, dtype=complex)
    m = np.max(logs.real, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(under="ignore"):
        s = csum(np.exp(logs - m), axis=axis)
    with np.errstate(divide="ignore"):
        return np.log(s) + np.squeeze(m, axis=axis)


def log_add(l1, l2):
    """Complex log of ``exp(l1) + exp(l2)``."""
    l1 = np.asarray(l1, dtype=complex)
    l2 = np.asarray(l2, dtype=complex)
    m = np.maximum(l1.real, l2.real)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore", under="ignore"):
        return m + np.log(np.exp(l1 - m) + np.exp(l2 - m))


class ProductFunction:
    """``f(z) = prod_n E_g(z / r_n)`` over a finite list of zeros.

    An optional :class:`TailRule` for the zeros adds the exact logarithm of
    the omitted factors as a power series in ``z`` (tail acceleration); the
    size of the first neglected term is reported as the tail bound.
    """

    def __init__(self, zeros, genus: int = 0, tail: TailRule | None = None,
                 tail_terms: int = 24):
        self.points = Points.of(zeros)
        if np.any(self.points.value == 0):
            raise ValueError("zeros must be nonzero")
        self.genus = int(genus)
        self.tail = tail if tail is not None and not tail.is_finite else None
        self._tail_coef = []
        if self.tail is not None and len(self.points):
            last = float(np.abs(self.points.value).max())
            n = len(self.points)
            for p in range(self.genus + 1, self.genus + 1 + tail_terms):
                self._tail_coef.append((p, -self.tail.point_power_sum(p, last, n) / p))

    @property
    def zeros(self) -> np.ndarray:
        return self.points.value

    def __len__(self) -> int:
        return len(self.points)

    # -- values ---------------------------------------------------------

    def _tail_log(self, z: np.ndarray):
        if not self._tail_coef:
            return np.zeros_like(z), np.zeros(z.shape)
        acc = np.zeros_like(z)
        zp = np.ones_like(z)
        for p, c in self._tail_coef:
            if not np.isfinite(c):
                return acc, np.full(z.shape, np.inf)
            zp = z**p
            acc = acc + c * zp
        _, c = self._tail_coef[-1]
        return acc, np.abs(c * zp) * 2

    def _log_sum_over(self, zp: Points, mask=None) -> np.ndarray:
        r = self.points if mask is None else self.points[mask]
        out = np.empty(len(zp), dtype=complex)
        if len(r) == 0:
            out[:] = 0
            return out
        step = max(1, _CHUNK // len(r))
        for i in range(0, len(zp), step):
            terms = _log_factors(zp[i:i + step], r, self.genus)
            hit = np.isneginf(terms.real)
            terms[hit] = 0
            s = csum(terms, axis=0)
            out[i:i + step] = np.where(hit.any(axis=0), -np.inf + 0j, s)
        return out

    def log_value(self, z, with_bound: bool = False):
        """Complex log of ``f(z)``; ``-inf`` at a zero."""
        if isinstance(z, Points):
            zp, shape = z, (len(z),)
        else:
            z = np.asarray(z, dtype=complex)
            shape = z.shape
            zp = Points.of(z.ravel())
        out = self._log_sum_over(zp)
        tl, bound = self._tail_log(zp.value)
        out = (out + tl).reshape(shape)
        if with_bound:
            return out, bound.reshape(shape)
        return out

    def __call__(self, z):
        return np.exp(self.log_value(z))

    def value_with_bound(self, z):
        lv, bound = self.log_value(z, with_bound=True)
        return np.exp(lv), bound

    def log_value_without(self, z, k: int):
        """Complex log of ``f(z) / E_g(z / r_k)``."""
        if isinstance(z, Points):
            zp, shape = z, (len(z),)
        else:
            z = np.asarray(z, dtype=complex)
            shape = z.shape
            zp = Points.of(z.ravel())
        mask = np.ones(len(self.points), dtype=bool)
        mask[k] = False
        out = self._log_sum_over(zp, mask) + self._tail_log(zp.value)[0]
        return out.reshape(shape)

    def log_factor_exp(self, z, k: int):
        """Log of the exponential part of the ``k``-th Weierstrass factor."""
        z = Points.of(z).value
        return _weierstrass_poly(z / self.points.value[k], self.genus)

    def log_derivative_at_zero(self, k=None) -> np.ndarray:
        """Complex log of ``f'(r_k)`` for the zero(s) ``k`` (all by default)."""
        idx = np.arange(len(self.points)) if k is None else np.atleast_1d(k)
        out = np.empty(len(idx), dtype=complex)
        hg = sum(1.0 / j for j in range(1, self.genus + 1))
        for j, i in enumerate(idx):
            r = self.points.value[i]
            s = self.log_value_without(self.points[i], int(i))[0]
            out[j] = np.log(-1.0 / r) + hg + s
        return out if k is None or np.ndim(k) else out[0]

    def log_derivative(self, z) -> np.ndarray:
        """``f'(z)/f(z)`` (logarithmic derivative) away from the zeros."""
        zp = Points.of(z) if isinstance(z, Points) else Points.of(np.asarray(z, dtype=complex).ravel())
        shape = (len(zp),) if isinstance(z, Points) else np.shape(z)
        d = -self.points.minus(zp)  # z_j - r_n
        terms = 1.0 / d
        if self.genus:
            r = self.points.value[:, None]
            u = np.ones_like(terms)
            for j in range(1, self.genus + 1):
                terms = terms + u / r
                u = u * zp.value[None, :] / r
        s = csum(terms, axis=0)
        if self._tail_coef:
            for p, c in self._tail_coef:
                s = s + p * c * zp.value ** (p - 1)
        return s.reshape(shape)

    def derivative_at_zero(self, k=None):
        return np.exp(self.log_derivative_at_zero(k))


def log_poly(coeffs, z) -> np.ndarray:
    """Complex log of a polynomial ``sum_j coeffs[j] z**j`` evaluated without
    overflow for large ``|z|``."""
    c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "b")
    z = np.asarray(Points.of(z).value if isinstance(z, Points) else z, dtype=complex)
    if len(c) == 0:
        return np.full(z.shape, -np.inf + 0j)
    d = len(c) - 1
    big = np.abs(z) > 1
    out = np.empty(z.shape, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = z[~big]
        v = np.zeros_like(zs)
        for cj in c[::-1]:
            v = v * zs + cj
        out[~big] = np.log(v)
        # large |z|: z^d * sum c_j z^(j-d)
        zb = z[big]
        w = 1.0 / zb
        v = np.zeros_like(zb)
        for cj in c:
            v = v * w + cj
        out[big] = d * np.log(zb) + np.log(v)
    return out


def log_abs_sum_exp(logs) -> float:
    """``log(sum(exp(logs)))`` for real ``logs``."""
    logs = np.asarray(logs, dtype=float)
    m = np.max(logs) if len(logs) else -math.inf
    if not np.isfinite(m):
        return m
    return float(m + math.log(csum(np.exp(logs - m))))
