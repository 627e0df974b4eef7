"""Perturbation determinant, canonical product and the model function G.

Eigenvalues of ``L = A + a (x) b`` off the spectrum of ``A`` are the zeros of

    beta(eta) = 1 + sum_n a_n conj(b_n) nu_n / (s_n - eta).

They are located by the argument principle on rectangles (recursive
bisection until each cell isolates one zero and no pole) followed by Newton
iteration with the analytically differentiated series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .products import Points, ProductFunction
from .spectral_core import SpectralData, nearest_distances, require_valid, sequence_report
from .summation import csum

REFINE_TOL = 1e-12
MIN_SEGMENTS = 64
MAX_SEGMENTS = 1 << 20


class Bounded(NamedTuple):
    value: complex
    tail_bound: float


class ContourTooCloseError(ArithmeticError):
    """A zero or pole lies too close to the contour for reliable counting."""


class IsolationError(ArithmeticError):
    """Recursive bisection could not isolate a zero."""

    def __init__(self, msg, cell=None):
        super().__init__(msg)
        self.cell = cell


# --------------------------------------------------------------------------
# beta


def _beta_weights(data: SpectralData) -> np.ndarray:
    return data.a * np.conj(data.b) * data.nu


def _beta_tail(data: SpectralData, z) -> np.ndarray:
    rule = data.tail_rule
    if rule.is_finite:
        return np.zeros(np.shape(z))
    w = np.abs(_beta_weights(data))
    with np.errstate(divide="ignore"):
        logs = np.log(w)
    sigma = rule.exponent("a") + rule.exponent("b") + rule.exponent("nu")
    tail, div = rule.term_tail(data, logs, sigma)
    if div:
        return np.full(np.shape(z), np.inf)
    # tail points s_n satisfy |s_n| <= |s_last|
    gap = np.abs(z) - np.abs(data.s[-1])
    with np.errstate(divide="ignore"):
        return np.where(gap > 0, tail / np.where(gap > 0, gap, 1.0), np.inf)


def beta_eval(data: SpectralData, z) -> Bounded:
    """``beta(z)`` with a bound on the contribution of the omitted tail."""
    data = require_valid(data)
    z = np.asarray(z, dtype=complex)
    s = data.s
    if np.any(np.isin(z, s)):
        raise ZeroDivisionError("beta evaluated at a pole s_n")
    w = _beta_weights(data)
    terms = w[:, None] / (s[:, None] - z.ravel()[None, :])
    val = 1.0 + csum(terms, axis=0)
    tail = _beta_tail(data, z.ravel())
    if z.ndim == 0:
        return Bounded(complex(val[0]), float(tail[0]))
    return Bounded(val.reshape(z.shape), tail.reshape(z.shape))


def beta_prime(data: SpectralData, z):
    """``beta'(z) = sum a_n conj(b_n) nu_n / (s_n - z)**2``."""
    data = require_valid(data)
    z = np.asarray(z, dtype=complex)
    w = _beta_weights(data)
    terms = w[:, None] / (data.s[:, None] - z.ravel()[None, :]) ** 2
    out = csum(terms, axis=0)
    return complex(out[0]) if z.ndim == 0 else out.reshape(z.shape)


def char_function(data: SpectralData) -> Callable:
    """The entire function ``beta(eta) prod_n (s_n - eta)``.

    Equal to ``det(M - eta I)`` for the finite section; useful for zero
    counting on contours that pass close to a pole of ``beta``.
    """
    data = require_valid(data)
    s = data.s
    w = _beta_weights(data)

    def f(eta):
        eta = np.asarray(eta, dtype=complex)
        e = eta.ravel()
        diff = s[:, None] - e[None, :]
        prod = np.prod(diff, axis=0)
        acc = prod.copy()
        for n in range(len(s)):
            others = np.prod(np.delete(diff, n, axis=0), axis=0)
            acc = acc + w[n] * others
        return acc.reshape(eta.shape)

    return f


# --------------------------------------------------------------------------
# canonical product A and model function G


def default_genus(data_or_t) -> int:
    """Genus ``ceil(convergence exponent)`` with 0 for summable ``1/|t|``."""
    if isinstance(data_or_t, SpectralData):
        data = data_or_t
    else:
        t = np.asarray(data_or_t, dtype=complex)
        data = SpectralData(t=t, nu=np.ones(len(t)), a=np.zeros(len(t)), b=np.zeros(len(t)))
    if len(data) < 8:
        return 0
    rep = sequence_report(data)
    est = rep.convergence_exponent_estimate or 0.0
    if est < 1.0 - 0.05:
        return 0
    return int(math.ceil(est - 0.05))


def make_A(T, genus: int | None = None, tail=None) -> ProductFunction:
    T = np.asarray(T, dtype=complex)
    if genus is None:
        genus = default_genus(T)
    return ProductFunction(T, genus=genus, tail=tail)


def A_eval(T, z, genus: int | None = None, tail=None) -> Bounded:
    """Truncated canonical product ``prod E_g(z/t_n)`` with ``A(0) = 1``.

    ``tail`` (a :class:`TailRule` for the points) enables tail acceleration;
    ``tail_bound`` is the estimated size of the neglected part of
    ``log A(z)``.  When no tail rule is given the reported bound is the
    first-order size of the omitted factors, which is unknown and therefore
    reported as ``nan``.
    """
    if isinstance(T, SpectralData):
        tail = T.tail if tail is None else tail
        T = T.t
    A = make_A(T, genus, tail)
    v, bound = A.value_with_bound(np.asarray(z, dtype=complex))
    if tail is None or tail.is_finite:
        bound = np.full(np.shape(v), np.nan) if tail is None else np.zeros(np.shape(v))
    if np.ndim(v) == 0:
        return Bounded(complex(v), float(bound))
    return Bounded(v, bound)


@dataclass(frozen=True)
class GDescriptor:
    """Symbolic description of the model function ``G`` (``G(0) = 1``).

    * ``perturbation``: ``G(z) = A(z) beta(1/z)`` for spectral ``data``.
    * ``quotient``: ``G = A~/P`` with ``A~`` the product over ``zeros`` and
      ``P`` the product over ``p_zeros`` (a sub-list of ``zeros``).  Zeros
      may carry exact offsets (``zero_offsets``, ``p_offsets``) so that
      shifted points like ``2**200 + 1/2`` stay distinct from ``2**200``.
    * ``constant_one``: ``G = 1``.
    """

    kind: str
    data: SpectralData | None = None
    zeros: tuple = ()
    p_zeros: tuple = ()
    genus: int | None = None
    zero_offsets: tuple = ()
    p_offsets: tuple = ()

    @staticmethod
    def perturbation(data: SpectralData, genus: int | None = None) -> "GDescriptor":
        return GDescriptor("perturbation", data=require_valid(data), genus=genus)

    @staticmethod
    def quotient(zeros, p_zeros=(), zero_offsets=None, p_offsets=None) -> "GDescriptor":
        zeros = tuple(complex(z) for z in np.atleast_1d(zeros))
        p_zeros = tuple(complex(z) for z in np.atleast_1d(p_zeros)) if len(p_zeros) else ()
        zo = tuple(complex(z) for z in zero_offsets) if zero_offsets is not None else (0j,) * len(zeros)
        po = tuple(complex(z) for z in p_offsets) if p_offsets is not None else (0j,) * len(p_zeros)
        g = GDescriptor("quotient", zeros=zeros, p_zeros=p_zeros, genus=0, zero_offsets=zo,
                        p_offsets=po)
        g.remaining_points()  # validates P-zeros against the A~-zeros
        return g

    @staticmethod
    def constant_one() -> "GDescriptor":
        return GDescriptor("constant_one")

    def zero_points(self) -> Points:
        return Points.of(np.array(self.zeros, dtype=complex), np.array(self.zero_offsets or
                                                                       [0j] * len(self.zeros)))

    def p_points(self) -> Points:
        return Points.of(np.array(self.p_zeros, dtype=complex), np.array(self.p_offsets or
                                                                         [0j] * len(self.p_zeros)))

    def remaining_points(self) -> Points:
        """Zeros of ``G`` after exact cancellation of ``P``."""
        zeros = self.zero_points()
        pz = self.p_points()
        keep = np.ones(len(zeros), dtype=bool)
        for j in range(len(pz)):
            d = np.abs(zeros.minus(pz[j])[:, 0])
            d[~keep] = np.inf
            k = int(np.argmin(d)) if len(d) else -1
            if k < 0 or not d[k] <= 1e-13 * max(1.0, abs(pz.value[j])):
                raise ValueError("P-zeros must be a sub-list of the A~-zeros")
            keep[k] = False
        return zeros[keep]

    def remaining_zeros(self) -> np.ndarray:
        return self.remaining_points().value

    def product(self, radius: float | None = None) -> ProductFunction:
        if self.kind != "quotient":
            raise TypeError("only quotient descriptors are pure products")
        pts = self.remaining_points()
        if radius is not None:
            pts = pts[np.abs(pts.value) <= radius]
        return ProductFunction(pts, genus=self.genus or 0)


def _nearest_index(t: np.ndarray, z: np.ndarray):
    d = np.abs(z[None, :] - t[:, None])
    k = np.argmin(d, axis=0)
    return k, d[k, np.arange(len(z))]


def G_eval(g: GDescriptor, z):
    """Evaluate the model function described by ``g``."""
    z = np.asarray(z, dtype=complex)
    zf = z.ravel()
    if g.kind == "constant_one":
        out = np.ones_like(zf)
    elif g.kind == "quotient":
        out = g.product()(zf)
    elif g.kind == "perturbation":
        out = _G_perturbation(g, zf)
    else:
        raise ValueError(f"unknown G kind {g.kind!r}")
    return complex(out[0]) if z.ndim == 0 else out.reshape(z.shape)


def _G_perturbation(g: GDescriptor, z: np.ndarray) -> np.ndarray:
    data = g.data
    t = data.t
    A = make_A(t, g.genus)
    w = data.a * np.conj(data.b) * data.t * data.nu
    out = np.empty_like(z)
    if len(t) > 1:
        gap = nearest_distances(t)
    else:
        gap = np.array([abs(t[0])])
    k, dist = _nearest_index(t, z)
    for i, zi in enumerate(z):
        if zi == 0:
            out[i] = 1.0
            continue
        kk = k[i]
        if dist[i] < 0.1 * gap[kk]:
            # fold the n = k term into the k-th factor of the product
            mask = np.ones(len(t), dtype=bool)
            mask[kk] = False
            rest = csum(w[mask] / (zi - t[mask]))
            logA_wo = A.log_value_without(np.array([zi]), kk)[0]
            fac = np.exp(A.log_value(np.array([zi]))[0])
            u = zi / t[kk]
            out[i] = fac * (1.0 + zi * rest) + np.exp(logA_wo) * _genus_factor(u, A.genus) * (-zi * w[kk] / t[kk])
        else:
            out[i] = np.exp(A.log_value(np.array([zi]))[0]) * (1.0 + zi * csum(w / (zi - t)))
    return out


def _genus_factor(u, genus: int):
    # exponential part of the Weierstrass factor E_g
    return np.exp(sum(u**j / j for j in range(1, genus + 1))) if genus else 1.0


# --------------------------------------------------------------------------
# contours and zero counting


@dataclass(frozen=True)
class ContourSpec:
    """Rectangle ``[x0, x1] x [y0, y1]`` or circle ``|z - center| = radius``."""

    rect: tuple | None = None
    center: complex = 0j
    radius: float | None = None
    pole_clearance: float = 0.0

    @staticmethod
    def rectangle(x0, x1, y0, y1, pole_clearance=0.0) -> "ContourSpec":
        if not (x1 > x0 and y1 > y0):
            raise ValueError("degenerate rectangle")
        return ContourSpec(rect=(float(x0), float(x1), float(y0), float(y1)),
                           pole_clearance=pole_clearance)

    @staticmethod
    def circle(center, radius, pole_clearance=0.0) -> "ContourSpec":
        if radius <= 0:
            raise ValueError("radius must be positive")
        return ContourSpec(center=complex(center), radius=float(radius),
                           pole_clearance=pole_clearance)

    @property
    def is_circle(self) -> bool:
        return self.radius is not None

    def point(self, u: np.ndarray) -> np.ndarray:
        """Counter-clockwise parametrisation by ``u`` in ``[0, 1]``."""
        u = np.asarray(u, dtype=float)
        if self.is_circle:
            return self.center + self.radius * np.exp(2j * np.pi * u)
        x0, x1, y0, y1 = self.rect
        w, h = x1 - x0, y1 - y0
        per = 2 * (w + h)
        d = (u % 1.0) * per
        out = np.empty(d.shape, dtype=complex)
        e1 = d < w
        e2 = (d >= w) & (d < w + h)
        e3 = (d >= w + h) & (d < 2 * w + h)
        e4 = d >= 2 * w + h
        out[e1] = x0 + d[e1] + 1j * y0
        out[e2] = x1 + 1j * (y0 + d[e2] - w)
        out[e3] = (x1 - (d[e3] - w - h)) + 1j * y1
        out[e4] = x0 + 1j * (y1 - (d[e4] - 2 * w - h))
        return out

    def corners(self) -> np.ndarray:
        if self.is_circle:
            return np.array([], dtype=float)
        x0, x1, y0, y1 = self.rect
        w, h = x1 - x0, y1 - y0
        per = 2 * (w + h)
        return np.array([0.0, w / per, (w + h) / per, (2 * w + h) / per])

    def contains(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=complex)
        if self.is_circle:
            return np.abs(p - self.center) < self.radius
        x0, x1, y0, y1 = self.rect
        return (p.real > x0) & (p.real < x1) & (p.imag > y0) & (p.imag < y1)

    def boundary_distance(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=complex)
        if self.is_circle:
            return np.abs(np.abs(p - self.center) - self.radius)
        x0, x1, y0, y1 = self.rect
        dx = np.maximum(np.maximum(x0 - p.real, p.real - x1), 0)
        dy = np.maximum(np.maximum(y0 - p.imag, p.imag - y1), 0)
        outside = np.hypot(dx, dy)
        inside = np.minimum.reduce([p.real - x0, x1 - p.real, p.imag - y0, y1 - p.imag])
        return np.where(self.contains(p), inside, np.where(outside > 0, outside, 0.0))

    @property
    def size(self) -> float:
        if self.is_circle:
            return 2 * self.radius
        x0, x1, y0, y1 = self.rect
        return max(x1 - x0, y1 - y0)


def winding_number(f: Callable, contour: ContourSpec, floor: float = 1e-300) -> int:
    """Winding number of ``f`` along ``contour`` by adaptive phase tracking.

    The contour starts with 64 segments; any segment whose phase increment
    is not below pi/2 is halved, down to 2**-20 of the contour.
    """
    u = np.linspace(0.0, 1.0, MIN_SEGMENTS + 1)
    u = np.union1d(u, contour.corners())
    vals = np.asarray(f(contour.point(u)), dtype=complex)
    min_du = 1.0 / MAX_SEGMENTS
    while True:
        if not np.all(np.isfinite(vals)) or np.any(np.abs(vals) <= floor):
            raise ContourTooCloseError("contour too close to a zero or pole")
        dphi = np.angle(vals[1:] / vals[:-1])
        bad = np.abs(dphi) >= np.pi / 2
        if not bad.any():
            break
        du = np.diff(u)
        if np.any(du[bad] <= min_du):
            raise ContourTooCloseError("contour too close to a zero or pole")
        mids = 0.5 * (u[:-1][bad] + u[1:][bad])
        mvals = np.asarray(f(contour.point(mids)), dtype=complex)
        u_new = np.concatenate([u, mids])
        v_new = np.concatenate([vals, mvals])
        order = np.argsort(u_new, kind="stable")
        u, vals = u_new[order], v_new[order]
    total = float(np.sum(dphi))
    w = total / (2 * np.pi)
    n = int(round(w))
    if abs(w - n) > 0.05:
        raise ContourTooCloseError(f"non-integer winding {w:.3f}")
    return n


def count_zeros(f: Callable, contour: ContourSpec, poles: Sequence[complex] = ()) -> int:
    """Number of zeros of ``f`` inside ``contour``.

    ``f`` must be vectorised.  When ``f`` is meromorphic, pass its poles: the
    count is the winding number plus the number of enclosed poles.  Poles
    closer to the contour than ``contour.pole_clearance`` are rejected.
    """
    poles = np.asarray(poles, dtype=complex)
    if len(poles):
        d = contour.boundary_distance(poles)
        if np.any(d <= contour.pole_clearance) or np.any(d == 0):
            raise ContourTooCloseError("contour violates pole clearance")
    w = winding_number(f, contour)
    return w + int(np.count_nonzero(contour.contains(poles))) if len(poles) else w


# --------------------------------------------------------------------------
# eigenvalues


@dataclass(frozen=True, order=True)
class Eigenvalue:
    sort_key: tuple
    value: complex
    multiplicity: int
    residual_abs_beta: float
    newton_iters: int


def _make_eig(v, mult, res, iters) -> Eigenvalue:
    return Eigenvalue((abs(v), float(np.angle(v))), complex(v), int(mult), float(res), int(iters))


def default_region(data: SpectralData) -> ContourSpec:
    """A square enclosing every eigenvalue of the finite section."""
    data = require_valid(data)
    u = data.a * np.sqrt(data.nu)
    v = data.b * np.sqrt(data.nu)
    R = float(np.abs(data.s).max() + np.linalg.norm(u) * np.linalg.norm(v))
    R = 1.1 * R + 1e-3
    return ContourSpec.rectangle(-R, R * 1.013, -R * 0.991, R, pole_clearance=0.0)


class _Beta:
    def __init__(self, data: SpectralData):
        self.s = data.s
        self.w = _beta_weights(data)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        zf = z.ravel()
        out = np.empty_like(zf)
        step = 4096
        for i in range(0, len(zf), step):
            zz = zf[i:i + step]
            out[i:i + step] = 1.0 + csum(self.w[:, None] / (self.s[:, None] - zz[None, :]), axis=0)
        return out.reshape(z.shape)

    def value_prime_scale(self, z: complex):
        d = self.s - z
        q = self.w / d
        return 1.0 + csum(q), csum(q / d), 1.0 + float(np.sum(np.abs(q)))


def _newton(beta: _Beta, z0: complex, tol: float, max_iter: int = 100):
    z = z0
    for it in range(1, max_iter + 1):
        f, fp, scale = beta.value_prime_scale(z)
        if abs(f) <= tol * scale:
            # a couple of polishing steps while the residual keeps falling
            for _ in range(2):
                if fp == 0 or not np.isfinite(fp):
                    break
                z2 = z - f / fp
                f2, fp2, _s = beta.value_prime_scale(z2)
                if not abs(f2) < abs(f):
                    break
                z, f, fp = z2, f2, fp2
            return z, abs(f), it - 1, True
        if fp == 0 or not np.isfinite(fp):
            return z, abs(f), it, False
        with np.errstate(over="ignore", invalid="ignore"):
            z = z - f / fp
        if not np.isfinite(z):
            return z0, math.inf, it, False
    f, _, scale = beta.value_prime_scale(z)
    return z, abs(f), max_iter, abs(f) <= tol * scale


def _split_candidates(lo: float, hi: float):
    mid = 0.5 * (lo + hi)
    L = hi - lo
    yield mid
    for k in range(1, 12):
        for sgn in (1, -1):
            yield mid + sgn * k * 0.037 * L


def eigenvalues(data: SpectralData, region: ContourSpec | None = None,
                refine_tol: float = REFINE_TOL, max_depth: int = 400,
                min_cell: float = 1e-300) -> list:
    """All zeros of ``beta`` inside ``region`` (eigenvalues of ``L`` off the
    spectrum of ``A``), sorted by modulus then argument.

    Each returned :class:`Eigenvalue` carries its multiplicity (the winding
    number of the isolating cell), the final ``|beta|`` and the Newton
    iteration count.
    """
    data = require_valid(data)
    if region is None:
        region = default_region(data)
    beta = _Beta(data)
    poles = data.s
    if np.all(beta.w == 0):
        return []
    d = region.boundary_distance(poles)
    if np.any(d <= max(region.pole_clearance, 0.0)) and np.any(d == 0):
        raise ContourTooCloseError("region boundary passes through a pole")
    if np.any(d <= region.pole_clearance):
        raise ContourTooCloseError("region violates pole clearance")

    if region.is_circle:
        total = count_zeros(beta, region, poles)
        c, r = region.center, region.radius
        box = (c.real - r * 1.0031, c.real + r * 1.0017, c.imag - r * 1.0023, c.imag + r * 1.0011)
    else:
        total = None
        box = region.rect
    if total == 0:
        return []

    found = []
    stack = [(box, 0)]
    while stack:
        (x0, x1, y0, y1), depth = stack.pop()
        cell = ContourSpec.rectangle(x0, x1, y0, y1)
        inside = cell.contains(poles)
        P = int(np.count_nonzero(inside))
        Z = _cell_count(beta, cell, poles)
        if Z is None:
            raise IsolationError("cell boundary too close to a zero", cell=(x0, x1, y0, y1))
        if Z == 0:
            continue
        size = max(x1 - x0, y1 - y0)
        if P == 0 and Z == 1:
            z0 = complex(0.5 * (x0 + x1), 0.5 * (y0 + y1))
            z, res, it, ok = _newton(beta, z0, refine_tol)
            pad = 0.01 * size
            if ok and (x0 - pad <= z.real <= x1 + pad) and (y0 - pad <= z.imag <= y1 + pad):
                found.append(_make_eig(z, 1, res, it))
                continue
        if depth >= max_depth or size <= max(min_cell, 1e-15 * max(abs(x0), abs(x1), abs(y0), abs(y1))):
            if P == 0:
                z0 = complex(0.5 * (x0 + x1), 0.5 * (y0 + y1))
                z, res, it, ok = _newton(beta, z0, refine_tol)
                found.append(_make_eig(z, Z, res, it))
                continue
            raise IsolationError("could not isolate zeros from poles", cell=(x0, x1, y0, y1))
        children = _bisect(beta, poles, (x0, x1, y0, y1))
        if children is None:
            raise IsolationError("no admissible split line", cell=(x0, x1, y0, y1))
        for ch in children:
            stack.append((ch, depth + 1))

    if region.is_circle:
        found = [e for e in found if region.contains(e.value)]
    return sorted(found)


def _cell_count(beta, cell: ContourSpec, poles) -> int | None:
    try:
        return count_zeros(beta, cell, poles)
    except ContourTooCloseError:
        return None


def _bisect(beta, poles, rect):
    x0, x1, y0, y1 = rect
    horizontal = (x1 - x0) >= (y1 - y0)
    lo, hi = (x0, x1) if horizontal else (y0, y1)
    L = hi - lo
    coord = poles.real if horizontal else poles.imag
    other = poles.imag if horizontal else poles.real
    olo, ohi = (y0, y1) if horizontal else (x0, x1)
    relevant = (other > olo - 0.05 * L) & (other < ohi + 0.05 * L)
    for c in _split_candidates(lo, hi):
        if np.any(np.abs(coord[relevant] - c) < 0.01 * L):
            continue
        if horizontal:
            kids = [(x0, c, y0, y1), (c, x1, y0, y1)]
        else:
            kids = [(x0, x1, y0, c), (x0, x1, c, y1)]
        ok = True
        for k in kids:
            if _cell_count(beta, ContourSpec.rectangle(*k), poles) is None:
                ok = False
                break
        if ok:
            return kids
    return None
