"""Cauchy-de Branges spaces H(T, A, mu).

Elements are ``f(z) = A(z) sum_n c_n mu_n^{1/2} / (z - t_n)`` with ``(c_n)`` in
``l^2`` and ``||f|| = ||c||``; the functions ``g_n = A mu_n^{1/2}/(z - t_n)``
form an orthonormal basis.  A stored prefix of ``T`` defines an exact finite
dimensional space of this kind, so every identity below is exact up to
rounding at each truncation level.

Magnitudes span hundreds of orders for lacunary ``T``; ``A'(t_n)``, ``mu_n``
and the model function ``G`` are carried as complex logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .determinant import GDescriptor, G_eval, default_genus
from .products import Points, ProductFunction, log_add, log_poly, log_sum
from .spectral_core import (
    SpectralData,
    TailRule,
    divergence_witness,
    model_measure,
    restrict,
    nearest_distances,
    require_valid,
)
from .summation import csum, cumulative_csum

NEAR_POLE = 0.1
DEFAULT_THRESHOLD = 1e-8
STABLE_RATIO = 1e-4


# --------------------------------------------------------------------------
# the space


@dataclass(eq=False)
class ModelSpace:
    """``H(T, A, mu)`` on a finite list of points.

    ``log_mu`` holds ``log mu_n`` so that weights such as ``|t_n|^{-6}`` with
    ``t_n = 3^200`` remain representable.  ``tail`` optionally describes the
    continuation of ``T`` (with ``mu ~ |t|**mu_exp`` in its params) and is
    used only to certify divergence or convergence of weighted series.
    """

    t: np.ndarray
    log_mu: np.ndarray
    genus: int = 0
    tail: TailRule | None = None
    name: str = ""
    A: ProductFunction = field(init=False, repr=False)
    log_Aprime: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.t = np.atleast_1d(np.asarray(self.t, dtype=complex))
        self.log_mu = np.atleast_1d(np.asarray(self.log_mu, dtype=float))
        if len(self.t) != len(self.log_mu):
            raise ValueError("t and mu must have the same length")
        if len(self.t) == 0:
            raise ValueError("empty space")
        if np.any(self.t == 0):
            raise ValueError("points must be nonzero")
        if len(np.unique(self.t)) != len(self.t):
            raise ValueError("points must be distinct")
        if not np.all(np.isfinite(self.log_mu)):
            raise ValueError("mu must be positive and finite")
        order = sorted(range(len(self.t)), key=lambda i: (abs(self.t[i]), float(np.angle(self.t[i])), i))
        order = np.array(order)
        self.t = self.t[order]
        self.log_mu = self.log_mu[order]
        self.A = ProductFunction(self.t, genus=self.genus)
        self.log_Aprime = self.A.log_derivative_at_zero()
        self.gap = nearest_distances(self.t) if len(self.t) > 1 else np.array([abs(self.t[0])])

    # -- constructors ---------------------------------------------------

    @classmethod
    def from_mu(cls, t, mu, genus: int | None = None, **kw) -> "ModelSpace":
        t = np.asarray(t, dtype=complex)
        if genus is None:
            genus = default_genus(t)
        mu = np.asarray(mu, dtype=float)
        if np.any(~(mu > 0)):
            raise ValueError("mu must be positive")
        return cls(t, np.log(mu), genus=genus, **kw)

    @classmethod
    def from_data(cls, data: SpectralData, genus: int | None = None) -> "ModelSpace":
        """The space of the functional model of ``L`` (requires ``b_n != 0``)."""
        data = require_valid(data)
        mu = model_measure(data)
        tail = None
        if data.tail is not None and not data.tail.is_finite:
            params = dict(data.tail.params)
            params["mu_exp"] = 2 + 2 * data.tail.exponent("b") + data.tail.exponent("nu")
            tail = TailRule(data.tail.family, params)
        return cls.from_mu(data.t, mu, genus=genus, tail=tail, name=data.name)

    # -- basic quantities -----------------------------------------------

    def __len__(self) -> int:
        return len(self.t)

    @property
    def mu(self) -> np.ndarray:
        return np.exp(self.log_mu)

    @property
    def log_sqrt_mu(self) -> np.ndarray:
        return 0.5 * self.log_mu

    @property
    def Aprime(self) -> np.ndarray:
        return np.exp(self.log_Aprime)

    def truncate(self, K: int) -> "ModelSpace":
        """The space on the first ``K`` points (canonical order)."""
        if not 1 <= K <= len(self):
            raise ValueError(f"truncation {K} out of range 1..{len(self)}")
        if K == len(self):
            return self
        return ModelSpace(self.t[:K], self.log_mu[:K], genus=self.genus, tail=self.tail,
                          name=self.name)

    def radius(self, K: int | None = None) -> float:
        """Radius separating the first ``K`` points from the rest."""
        K = len(self) if K is None else K
        r = np.abs(self.t)
        if K < len(r):
            return 0.5 * (r[K - 1] + r[K])
        if K >= 2:
            return r[K - 1] + 0.5 * (r[K - 1] - r[K - 2])
        return 2 * r[0]

    def audit_Aprime(self, rel_h: float = 1e-3) -> float:
        """Largest relative deviation of the cached ``A'(t_n)`` from a
        four-point central difference of ``A``."""
        worst = 0.0
        for k in range(len(self)):
            h = rel_h * self.gap[k]
            tk = self.t[k]
            pts = tk + h * np.array([2, 1, -1, -2])
            lv = self.A.log_value(pts) - self.log_Aprime[k]
            v = np.exp(lv)
            d = (-v[0] + 8 * v[1] - 8 * v[2] + v[3]) / (12 * h)
            worst = max(worst, float(abs(d - 1)))
        return worst

    def index_of(self, z) -> np.ndarray:
        """Index of each point of ``z`` in ``T`` (-1 when absent)."""
        return Points.of(self.t).index_of(Points.of(z))


@dataclass
class SpaceElement:
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))

    def __len__(self) -> int:
        return len(self.coeffs)


def basis_element(space: ModelSpace, k: int) -> SpaceElement:
    c = np.zeros(len(space), dtype=complex)
    c[k] = 1
    return SpaceElement(c)


def _check(space: ModelSpace, f: SpaceElement):
    if len(f) != len(space):
        raise ValueError(f"element has {len(f)} coefficients, space has {len(space)} points")


# --------------------------------------------------------------------------
# evaluation


def log_cauchy_eval(space: ModelSpace, log_w: np.ndarray, z) -> np.ndarray:
    """Complex log of ``A(z) sum_n w_n / (z - t_n)`` for ``w_n = exp(log_w_n)``.

    At ``z = t_k`` the value is ``A'(t_k) w_k``; within ``0.1`` of the local
    gap of ``t_k`` the ``k``-th term is multiplied into the ``k``-th factor
    of ``A`` before summation.
    """
    zp = Points.of(z) if isinstance(z, Points) else Points.of(np.asarray(z, dtype=complex).ravel())
    log_w = np.asarray(log_w, dtype=complex)
    out = np.empty(len(zp), dtype=complex)
    diff = zp.minus(space.t)  # z_j - t_n
    dist = np.abs(diff)
    k_near = np.argmin(dist, axis=1)
    active = np.isfinite(log_w.real)
    for j in range(len(zp)):
        k = int(k_near[j])
        dk = dist[j, k]
        if dk == 0:
            out[j] = space.log_Aprime[k] + log_w[k]
            continue
        mask = active.copy()
        near = dk < NEAR_POLE * space.gap[k]
        if near:
            mask[k] = False
        with np.errstate(divide="ignore"):
            s = log_sum(log_w[mask] - np.log(diff[j, mask])) if mask.any() else -np.inf + 0j
        val = space.A.log_value(zp[j])[0] + s
        if near and active[k]:
            # A(z) w_k/(z - t_k) = A_without_k(z) e^{p(z/t_k)} (-w_k / t_k)
            lk = (space.A.log_value_without(zp[j], k)[0] + space.A.log_factor_exp(zp[j], k)[0]
                  + log_w[k] + np.log(-1.0 / space.t[k]))
            val = log_add(val, lk)
        out[j] = val
    if isinstance(z, Points):
        return out
    return out.reshape(np.shape(z))


def _log_coeffs(f: SpaceElement) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(f.coeffs.astype(complex))


def element_log_eval(space: ModelSpace, f: SpaceElement, z) -> np.ndarray:
    _check(space, f)
    return log_cauchy_eval(space, _log_coeffs(f) + space.log_sqrt_mu, z)


def element_eval(space: ModelSpace, f: SpaceElement, z):
    """``f(z)``; at ``z = t_n`` this is ``A'(t_n) c_n mu_n^{1/2}``."""
    v = np.exp(element_log_eval(space, f, z))
    return complex(v) if np.ndim(v) == 0 else v


def inner_product(space: ModelSpace, f: SpaceElement, g: SpaceElement) -> complex:
    """``<f, g> = sum_n c_n conj(d_n)``."""
    _check(space, f)
    _check(space, g)
    return complex(csum(f.coeffs * np.conj(g.coeffs)))


def norm(space: ModelSpace, f: SpaceElement) -> float:
    _check(space, f)
    return float(np.sqrt(csum(np.abs(f.coeffs) ** 2)))


def sample_inner_product(space: ModelSpace, f: SpaceElement, g: SpaceElement) -> complex:
    """``sum_n f(t_n) conj(g(t_n)) / (|A'(t_n)|^2 mu_n)`` from point values."""
    lf = element_log_eval(space, f, space.t)
    lg = element_log_eval(space, g, space.t)
    return _weighted_sample_sum(space, lf, lg)


def _weighted_sample_sum(space: ModelSpace, lf, lg) -> complex:
    logs = lf + np.conj(lg) - 2 * space.log_Aprime.real - space.log_mu
    keep = np.isfinite(logs.real)
    if not keep.any():
        return 0j
    return complex(np.exp(log_sum(logs[keep])))


def sample_norm(space: ModelSpace, f: SpaceElement) -> float:
    return math.sqrt(max(sample_inner_product(space, f, f).real, 0.0))


# --------------------------------------------------------------------------
# reproducing kernels


def kernel_log_coeffs(space: ModelSpace, lam) -> np.ndarray:
    """Complex logs of the coefficients ``conj(g_n(lambda))`` of ``k_lambda``."""
    lam_p = Points.of(lam)
    k = space.index_of(lam_p)[0]
    if k >= 0:
        out = np.full(len(space), -np.inf + 0j)
        out[k] = np.conj(space.log_Aprime[k] + space.log_sqrt_mu[k])
        return out
    d = lam_p.minus(space.t)[0]  # lambda - t_n
    logs = space.A.log_value(lam_p)[0] + space.log_sqrt_mu - np.log(d)
    return np.conj(logs)


def kernel_coeffs(space: ModelSpace, lam) -> SpaceElement:
    return SpaceElement(np.exp(kernel_log_coeffs(space, lam)))


def kernel_log_eval(space: ModelSpace, lam, z) -> np.ndarray:
    """Complex log of ``k_lambda(z) = A(z) conj(A(lambda)) sum_n mu_n /
    ((z - t_n)(conj(lambda) - conj(t_n)))``.

    At ``lambda = t_m`` this reduces to ``conj(A'(t_m)) mu_m A(z)/(z - t_m)``.
    """
    lam_p = Points.of(lam)
    m = space.index_of(lam_p)[0]
    if m >= 0:
        log_w = np.full(len(space), -np.inf + 0j)
        log_w[m] = np.conj(space.log_Aprime[m]) + space.log_mu[m]
        return log_cauchy_eval(space, log_w, z)
    d = lam_p.minus(space.t)[0]
    log_w = space.log_mu - np.conj(np.log(d)) + np.conj(space.A.log_value(lam_p)[0])
    return log_cauchy_eval(space, log_w, z)


def kernel_eval(space: ModelSpace, lam, z):
    v = np.exp(kernel_log_eval(space, lam, z))
    return complex(v) if np.ndim(v) == 0 else v


# --------------------------------------------------------------------------
# the model function G and biorthogonal systems


class ModelFunction:
    """Log-domain evaluator for a :class:`GDescriptor`, truncated at a radius
    consistently with the space."""

    def __init__(self, g: GDescriptor, radius: float | None = None):
        self.descriptor = g
        self.kind = g.kind
        if g.kind == "quotient":
            self.product = g.product(radius)
            self.zeros = self.product.points
        elif g.kind == "constant_one":
            self.product = ProductFunction(np.array([], dtype=complex))
            self.zeros = Points.of(np.array([], dtype=complex))
        elif g.kind == "perturbation":
            data = g.data
            if radius is not None:
                data = _restrict_radius(data, radius)
            self.descriptor = GDescriptor.perturbation(data, g.genus)
            self.product = None
            self.zeros = None
        else:
            raise ValueError(f"unknown G kind {g.kind!r}")

    def log(self, z) -> np.ndarray:
        if self.product is not None:
            return self.product.log_value(Points.of(z))
        zz = Points.of(z).value
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(G_eval(self.descriptor, zz), dtype=complex))

    def log_prime_at_zero(self, lam) -> complex:
        """Complex log of ``G'(lambda)`` at a zero ``lambda``.

        Product forms use the analytic formula; the perturbation form uses a
        four-point central difference (Richardson-extrapolated) of ``G``.
        """
        lam_p = Points.of(lam)
        if self.product is not None:
            k = self.zeros.index_of(lam_p)[0]
            if k < 0:
                raise ValueError(f"{lam_p.value[0]} is not a zero of G")
            return complex(self.product.log_derivative_at_zero(int(k)))
        lam_v = complex(lam_p.value[0])
        data = self.descriptor.data
        h = 1e-3 * min(1.0, float(np.min(np.abs(data.t - lam_v))))
        pts = lam_v + h * np.array([2, 1, -1, -2])
        v = np.asarray(G_eval(self.descriptor, pts))
        d = (-v[0] + 8 * v[1] - 8 * v[2] + v[3]) / (12 * h)
        if abs(d) <= 1e-12 * np.max(np.abs(v)) / h:
            raise ArithmeticError("multiple zero of G detected")
        return complex(np.log(d))


def _restrict_radius(data: SpectralData, radius: float) -> SpectralData:
    keep = np.flatnonzero(np.abs(data.t) <= radius)
    return restrict(data, keep)


def _as_model(G, radius=None) -> ModelFunction:
    if isinstance(G, ModelFunction):
        return G
    return ModelFunction(G, radius)


def biorthogonal_log_coeffs(space: ModelSpace, G, lam) -> np.ndarray:
    """Complex logs of the coefficients of ``G/(G'(lambda)(z - lambda))``."""
    Gm = _as_model(G)
    lam_p = Points.of(lam)
    lgp = Gm.log_prime_at_zero(lam_p)
    lG = Gm.log(Points.of(space.t))
    with np.errstate(divide="ignore"):
        d = np.log(Points.of(space.t).minus(lam_p)[:, 0])  # t_n - lambda
    out = lG - lgp - d - space.log_Aprime - space.log_sqrt_mu
    m = space.index_of(lam_p)[0]
    if m >= 0:
        out[m] = -space.log_Aprime[m] - space.log_sqrt_mu[m]
    return out


def biorthogonal_eval(space: ModelSpace, G, lam, z):
    """``G(z) / (G'(lambda)(z - lambda))``, equal to 1 at ``z = lambda``."""
    Gm = _as_model(G)
    lam_p = Points.of(lam)
    zp = Points.of(z) if isinstance(z, Points) else Points.of(np.asarray(z, dtype=complex).ravel())
    lgp = Gm.log_prime_at_zero(lam_p)
    d = zp.minus(lam_p)[:, 0]
    out = np.empty(len(zp), dtype=complex)
    at = d == 0
    out[at] = 1.0
    if (~at).any():
        with np.errstate(divide="ignore"):
            out[~at] = np.exp(Gm.log(zp[~at]) - lgp - np.log(d[~at]))
    if isinstance(z, Points) or np.ndim(z):
        return out
    return complex(out[0])


# --------------------------------------------------------------------------
# S-space parametrization


@dataclass
class SummabilityGate:
    partial_sums: np.ndarray
    growth_ratio: float
    grows: bool
    certified: bool | None  # True: converges, False: diverges, None: no tail rule
    exponent: float | None

    @property
    def converges(self) -> bool:
        if self.certified is not None:
            return self.certified
        return not self.grows


@dataclass
class SResidual:
    residual: float
    per_lambda: np.ndarray
    gate: SummabilityGate


def _log_S(S, z: Points) -> np.ndarray:
    if callable(S):
        return np.asarray(S(z), dtype=complex)
    return log_poly(S, z.value)


def _poly_degree(S):
    if callable(S):
        return getattr(S, "degree", None)
    c = np.trim_zeros(np.asarray(S, dtype=complex), "b")
    return len(c) - 1 if len(c) else -1


def summability_gate(space: ModelSpace, S) -> SummabilityGate:
    """Partial sums of ``sum |S(t_n)|^2 mu_n`` with a divergence witness and,
    when the space has a tail rule and ``S`` is a polynomial, a certificate."""
    lS = _log_S(S, Points.of(space.t))
    logs = 2 * lS.real + space.log_mu
    m = np.max(logs[np.isfinite(logs)]) if np.isfinite(logs).any() else 0.0
    terms = np.exp(np.clip(logs - m, -745, 0))
    terms[~np.isfinite(logs)] = 0
    partial = cumulative_csum(terms) * math.exp(m) if m < 700 else cumulative_csum(terms)
    grows, ratio = divergence_witness(terms)
    certified = None
    expo = None
    deg = _poly_degree(S)
    if space.tail is not None and deg is not None and deg >= 0:
        mu_exp = float(space.tail.params.get("mu_exp", 0.0))
        expo = 2 * deg + mu_exp
        _, div = space.tail.modulus_power_sum(expo, float(abs(space.t[-1])), len(space))
        certified = not div
    elif deg is not None and deg < 0:
        certified = True
    return SummabilityGate(partial, ratio, grows, certified, expo)


def s_space_residual(space: ModelSpace, G, S, sample) -> SResidual:
    """How far ``S`` is from the class parametrizing the complement of
    ``{G/(z - lambda)}``.

    Forms ``c_n = conj(S(t_n)) mu_n^{1/2}`` and returns, over the sample,
    ``max |<G/(G'(lambda)(z - lambda)), f>| / ||G/(G'(lambda)(z - lambda))||``.
    The normalisation removes ``G'(lambda)``; the residual is linear in ``S``.
    """
    Gm = _as_model(G)
    tp = Points.of(space.t)
    lG = Gm.log(tp)
    lS = _log_S(S, tp)
    gate = summability_gate(space, S)
    res = []
    for lam in _iter_points(sample):
        with np.errstate(divide="ignore"):
            d = np.log(tp.minus(lam)[:, 0])
        num_logs = lG + lS - space.log_Aprime - d
        den_logs = 2 * (lG - space.log_Aprime - d).real - space.log_mu
        fin = np.isfinite(num_logs.real)
        num = np.exp(log_sum(num_logs[fin])) if fin.any() else 0j
        fin_d = np.isfinite(den_logs)
        den = math.sqrt(float(np.exp(log_sum(den_logs[fin_d]).real))) if fin_d.any() else 0.0
        # exponentiate the ratio in log form to avoid overflow
        if num == 0 or den == 0:
            res.append(0.0)
        else:
            lnum = log_sum(num_logs[fin]).real
            lden = 0.5 * log_sum(den_logs[fin_d]).real
            res.append(float(np.exp(lnum - lden)))
    per = np.array(res)
    return SResidual(float(per.max()) if len(per) else 0.0, per, gate)


def _iter_points(sample):
    p = Points.of(sample)
    for j in range(len(p)):
        yield p[j]


# --------------------------------------------------------------------------
# mixed systems


@dataclass
class MixedSystemSpec:
    """Mixed system ``{k_lambda}_{Lambda_1} U {G/(z - lambda)}_{Lambda_2}``.

    ``side[j]`` is 1 or 2 for the ``j``-th point of ``Lambda``.  ``Lambda``
    may carry exact offsets (``Lambda_off``) for shifted lacunary points.
    """

    G: GDescriptor
    Lambda: np.ndarray
    side: np.ndarray
    Lambda_off: np.ndarray | None = None

    def __post_init__(self):
        self.Lambda = np.atleast_1d(np.asarray(self.Lambda, dtype=complex))
        self.side = np.atleast_1d(np.asarray(self.side, dtype=int))
        if len(self.side) != len(self.Lambda):
            raise ValueError("partition must assign a side to every point of Lambda")
        if not np.all(np.isin(self.side, (1, 2))):
            raise ValueError("sides must be 1 or 2")
        pts = self.points
        if len(pts) > 1:
            d = np.abs(pts.minus(pts))
            np.fill_diagonal(d, np.inf)
            if np.any(d == 0):
                raise ValueError("Lambda points must be distinct")

    @property
    def points(self) -> Points:
        return Points.of(self.Lambda, self.Lambda_off)

    def with_side(self, side) -> "MixedSystemSpec":
        side = np.broadcast_to(np.asarray(side, dtype=int), self.Lambda.shape).copy()
        return MixedSystemSpec(self.G, self.Lambda, side, self.Lambda_off)

    def model(self, radius=None) -> ModelFunction:
        return ModelFunction(self.G, radius)


@dataclass
class MixedDefect:
    dimension: int
    raw_nullity: int
    singular_values: np.ndarray
    tail_ratios: np.ndarray
    trunc: int
    threshold: float
    rows: int


def mixed_log_matrix(space: ModelSpace, spec: MixedSystemSpec, trunc: int):
    """Complex-log constraint matrix of the mixed system at truncation ``trunc``.

    Row for ``lambda`` on side 1 (``f(lambda) = 0``):
    ``mu_n^{1/2}/(lambda - t_n)``, or the unit row ``c_m = 0`` when
    ``lambda = t_m``.  Row for side 2 (orthogonality to ``G/(z - lambda)``),
    conjugated so that it is linear in ``c``:
    ``conj(G(t_n) / (A'(t_n) mu_n^{1/2} (t_n - lambda)))``, with the
    ``n = m`` entry ``conj(G'(t_m)/(A'(t_m) mu_m^{1/2}))`` when
    ``lambda = t_m``.
    """
    sp = space.truncate(trunc)
    radius = space.radius(trunc)
    Gm = spec.model(radius)
    lam = spec.points
    keep = np.abs(lam.value) <= radius
    lam = lam[keep]
    side = spec.side[keep]
    tp = Points.of(sp.t)
    lG = Gm.log(tp)
    rows = []
    idx_T = sp.index_of(lam)
    for j in range(len(lam)):
        m = int(idx_T[j])
        lj = lam[j]
        if side[j] == 1:
            if m >= 0:
                row = np.full(len(sp), -np.inf + 0j)
                row[m] = 0
            else:
                row = sp.log_sqrt_mu - np.log(lj.minus(tp)[0])
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                d = np.log(tp.minus(lj)[:, 0])
                row = lG - sp.log_Aprime - sp.log_sqrt_mu - d
            if m >= 0:
                row[m] = Gm.log_prime_at_zero(lj) - sp.log_Aprime[m] - sp.log_sqrt_mu[m]
            row = np.conj(row)
        rows.append(row)
    L = np.array(rows, dtype=complex).reshape(len(rows), len(sp))
    return L, sp


def _equilibrate(R: np.ndarray, sweeps: int = 6):
    r = np.zeros(R.shape[0])
    s = np.zeros(R.shape[1])
    for _ in range(sweeps):
        with np.errstate(invalid="ignore"):
            rm = np.max(R + s[None, :], axis=1)
        r = -np.where(np.isfinite(rm), rm, 0.0)
        with np.errstate(invalid="ignore"):
            cm = np.max(R + r[:, None], axis=0)
        s = -np.where(np.isfinite(cm), cm, 0.0)
    return r, s


def _tail_ratios(X: np.ndarray) -> np.ndarray:
    K = X.shape[0]
    U, sx, _ = np.linalg.svd(X, full_matrices=False)
    Q = U[:, sx > 1e-300]
    head = (K + 1) // 2
    ratios = np.linalg.svd(Q[head:], compute_uv=False) if head < K else np.zeros(Q.shape[1])
    ratios = np.concatenate([ratios, np.zeros(max(0, Q.shape[1] - len(ratios)))])
    return np.sort(ratios)


def _kernel_null_basis(space: ModelSpace, spec: MixedSystemSpec, trunc: int) -> np.ndarray:
    """Null basis of a kernel-only system in coefficient coordinates.

    ``f`` vanishes on ``Lambda`` exactly when ``f = P B`` with
    ``B = prod (1 - z/lambda)`` and ``deg P < trunc - |Lambda|``, so
    ``c_n = P(t_n) B(t_n) / (A'(t_n) mu_n^{1/2})``.  Monomials ``P = z^k``
    span the space; each column is scaled to unit max-modulus.
    """
    sp = space.truncate(trunc)
    lam = spec.points
    lam = lam[np.abs(lam.value) <= space.radius(trunc)]
    nu = len(sp) - len(lam)
    if nu <= 0:
        return np.zeros((len(sp), 0), dtype=complex)
    tp = Points.of(sp.t)
    base = ProductFunction(lam).log_value(tp) - sp.log_Aprime - sp.log_sqrt_mu
    X = np.zeros((len(sp), nu), dtype=complex)
    logt = np.log(sp.t)
    for k in range(nu):
        col = base + k * logt
        fin = np.isfinite(col.real)
        with np.errstate(under="ignore"):
            X[fin, k] = np.exp(col[fin] - col.real[fin].max())
    return X


def mixed_defect(space: ModelSpace, spec: MixedSystemSpec, trunc: int | None = None,
                 threshold: float = DEFAULT_THRESHOLD, stable_ratio: float = STABLE_RATIO) -> MixedDefect:
    """Dimension of the orthogonal complement of the mixed system.

    The constraint matrix is equilibrated in the log domain, its numerical
    null space found by SVD (singular values below ``threshold * sigma_max``),
    and the null space is mapped back to coefficient coordinates.  A finite
    section always has a null space of dimension ``trunc - rows``; only
    directions whose coefficients decay (tail-to-head norm ratio at most
    ``stable_ratio``, head = first half of the indices) approximate
    ``l^2`` solutions and are counted in ``dimension``.

    Kernel-only systems use the closed-form null space instead: over
    lacunary points the constraint matrix is Cauchy-like with a condition
    number far beyond any working precision, and mapping an SVD null basis
    back to coefficients loses the small entries that decide decay.
    """
    trunc = len(space) if trunc is None else trunc
    L, sp = mixed_log_matrix(space, spec, trunc)
    K = len(sp)
    if L.shape[0] == 0:
        sv = np.array([])
        null = np.eye(K, dtype=complex)
        s = np.zeros(K)
    else:
        r, s = _equilibrate(L.real)
        with np.errstate(under="ignore"):
            M = np.exp(L + r[:, None] + s[None, :])
        M[~np.isfinite(L.real)] = 0
        _, sv, Vh = np.linalg.svd(M)
        rank = int(np.count_nonzero(sv > threshold * sv[0])) if len(sv) else 0
        null = Vh[rank:].conj().T
        sv = np.concatenate([sv, np.zeros(max(0, K - len(sv)))])
    nullity = null.shape[1]
    ratios = np.array([])
    dim = 0
    if nullity:
        keep = np.abs(spec.points.value) <= space.radius(trunc)
        if L.shape[0] and np.all(spec.side[keep] == 1):
            X = _kernel_null_basis(space, spec, trunc)
        else:
            # c = diag(exp(s)) c_hat, rescaled by a common factor
            w = np.exp(np.clip(s - s.max(), -745, 0))
            X = w[:, None] * null
        if X.shape[1]:
            ratios = _tail_ratios(X)
            cut = stable_ratio / math.sqrt(1 + stable_ratio**2)
            dim = int(np.count_nonzero(ratios <= cut))
    return MixedDefect(dim, nullity, sv, ratios, trunc, threshold, L.shape[0])


def defect_stability(space: ModelSpace, spec: MixedSystemSpec, truncs=(50, 100, 200),
                     threshold: float = DEFAULT_THRESHOLD):
    """Defect estimates at several truncations; ``(dims, stable)``."""
    dims = [mixed_defect(space, spec, K, threshold).dimension for K in truncs]
    return dims, len(set(dims)) == 1


def gram_matrix(space: ModelSpace, elements) -> np.ndarray:
    C = np.array([f.coeffs for f in elements])
    return C @ C.conj().T
