"""Krein-class membership and removability of spectra.

An entire function ``F`` with simple zeros ``t_n != 0`` is in ``K_1`` when

    1/F(z) = 1/F(0) + sum_n (1/F'(t_n)) (1/(z - t_n) + 1/t_n)

and ``sum 1/(|t_n|^2 |F'(t_n)|)`` converges.  The zero set of such an ``F`` is
exactly a spectrum that some rank-one perturbation turns into a Volterra
operator.  Zeros are kept in groups (``+-`` pairs, or the ``2k`` rotations
of one modulus) and the expansion is summed group by group, which turns
the ``O(1/n)`` terms of a symmetric family into ``O(1/n^2)`` or better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import zeta

from .products import ProductFunction
from .spectral_core import TailRule, divergence_witness, generator_points, nearest_distances
from .summation import csum

SAMPLE_GAP = 0.1
SAMPLE_RADIUS = 2.0
MEMBERSHIP_FACTOR = 10.0
ROUNDING_FLOOR = 1e-12
# side-series exponents within this margin of 1 count as divergent: a
# finite prefix cannot tell sum n^(-1-eps) from the harmonic series
SIDE_MARGIN = 0.05
FAMILIES = ("cos_pi_z", "cos_pi_sqrt_z", "cos_pi_z_pow_k", "custom_product")


class SampleTooCloseError(ValueError):
    def __init__(self, z, distance, gap):
        super().__init__(f"sample {z} lies {distance:.3g} from a zero (local gap {gap:.3g})")
        self.z = z
        self.distance = distance
        self.gap = gap


class SingularSystemError(ArithmeticError):
    def __init__(self, condition):
        super().__init__(f"singular node system (condition {condition:.3g})")
        self.condition = condition


@dataclass(frozen=True, eq=False)
class KreinCandidate:
    """An entire function with its zeros, ``F'`` at the zeros and ``F(0)``.

    ``group[n]`` labels the symmetric group of ``zeros[n]``; groups are
    summed together and truncation counts whole groups.  ``tail`` continues
    the zero set beyond the stored prefix.
    """

    family: str
    zeros: np.ndarray
    group: np.ndarray
    F: Callable[[np.ndarray], np.ndarray]
    Fprime: np.ndarray
    F0: complex
    tail: TailRule
    params: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.zeros)

    @property
    def n_groups(self) -> int:
        return len(np.unique(self.group))

    def prefix(self, trunc: int | None = None) -> np.ndarray:
        """Indices of the zeros in the first ``trunc`` groups."""
        ids = np.unique(self.group)
        if trunc is None or trunc >= len(ids):
            return np.arange(len(self.zeros))
        if trunc < 1:
            raise ValueError("trunc must be at least 1")
        return np.flatnonzero(np.isin(self.group, ids[:trunc]))

    def side_terms(self) -> np.ndarray:
        return 1.0 / (np.abs(self.zeros) ** 2 * np.abs(self.Fprime))


def _grouped(t, tail, F, Fprime, F0, family, params, group=None):
    t = np.asarray(t, dtype=complex)
    g = np.arange(len(t)) if group is None else np.asarray(group)
    order = np.lexsort((np.angle(t), np.abs(t), g))
    return KreinCandidate(family, t[order], g[order], F, np.asarray(Fprime, dtype=complex)[order],
                          complex(F0), tail, dict(params))


def cos_pi_z(pairs: int = 10_000) -> KreinCandidate:
    """``F = cos(pi z)``, zeros ``+-(n + 1/2)``; ``F'(+-(n+1/2)) = -+pi (-1)^n``."""
    t, tail = generator_points("cos_zeros", {"count": pairs})
    n = np.repeat(np.arange(pairs), 2)
    sign = np.where(t.real > 0, 1.0, -1.0)
    Fp = -np.pi * sign * (-1.0) ** n
    return _grouped(t, TailRule(tail["family"], tail["params"]),
                    lambda z: np.cos(np.pi * np.asarray(z, dtype=complex)),
                    Fp, 1.0, "cos_pi_z", {"pairs": pairs}, group=n)


def cos_pi_sqrt_z(count: int = 10_000) -> KreinCandidate:
    """``F = cos(pi sqrt z)``, zeros ``(n + 1/2)^2``."""
    t, tail = generator_points("cos_sqrt_zeros", {"count": count})
    n = np.arange(count)
    Fp = -np.pi * (-1.0) ** n / (2 * (n + 0.5))
    return _grouped(t, TailRule(tail["family"], tail["params"]),
                    lambda z: np.cos(np.pi * np.sqrt(np.asarray(z, dtype=complex))),
                    Fp, 1.0, "cos_pi_sqrt_z", {"count": count})


def cos_pi_z_pow_k(k: int = 2, count: int = 10_000) -> KreinCandidate:
    """``F = cos(pi z^k)``, zeros ``|n + 1/2|^(1/k) e^(i pi j/k)``, ``0 <= j < 2k``."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    t, tail = generator_points("cos_power_zeros", {"count": count, "k": k})
    n = np.repeat(np.arange(count), 2 * k)
    j = np.tile(np.arange(2 * k), count)
    # t^k = (-1)^j (n + 1/2), sin(pi t^k) = (-1)^j (-1)^n
    Fp = -np.pi * k * t ** (k - 1) * (-1.0) ** (j + n)
    return _grouped(t, TailRule(tail["family"], tail["params"]),
                    lambda z: np.cos(np.pi * np.asarray(z, dtype=complex) ** k),
                    Fp, 1.0, "cos_pi_z_pow_k", {"k": k, "count": count}, group=n)


def custom_product(zeros, genus: int = 0, tail: TailRule | None = None) -> KreinCandidate:
    """Canonical product over ``zeros`` (``F(0) = 1``)."""
    P = ProductFunction(zeros, genus=genus, tail=tail)
    Fp = P.derivative_at_zero()
    return _grouped(P.zeros, tail or TailRule(), P, Fp, 1.0, "custom_product",
                    {"genus": genus})


def delete_zero(cand: KreinCandidate, index: int = 0) -> KreinCandidate:
    """``F(z)/(z - t_index)``: the same family with one zero removed."""
    tj = cand.zeros[index]
    keep = np.arange(len(cand)) != index
    base = cand.F

    def F(z):
        z = np.asarray(z, dtype=complex)
        return base(z) / (z - tj)

    Fp = cand.Fprime[keep] / (cand.zeros[keep] - tj)
    params = dict(cand.params, deleted=complex(tj))
    return KreinCandidate(cand.family + "_deleted", cand.zeros[keep], cand.group[keep], F, Fp,
                          cand.F0 / (-tj), cand.tail, params)


def times_polynomial(cand: KreinCandidate, extra_zeros) -> KreinCandidate:
    """``F(z) prod (1 - z/e)`` with the zeros ``e`` adjoined (each its own group)."""
    e = np.atleast_1d(np.asarray(extra_zeros, dtype=complex))
    if np.any(e == 0) or len(np.unique(e)) != len(e):
        raise ValueError("extra zeros must be distinct and nonzero")
    if np.any(np.min(np.abs(cand.zeros[:, None] - e[None, :]), axis=0) == 0):
        raise ValueError("extra zeros must not repeat existing zeros")
    base = cand.F

    def poly(z):
        z = np.asarray(z, dtype=complex)
        out = np.ones_like(z)
        for ej in e:
            out = out * (1 - z / ej)
        return out

    def F(z):
        return base(z) * poly(z)

    Fp_old = cand.Fprime * poly(cand.zeros)
    Fp_new = np.array([base(np.array([ej]))[0] * (-1 / ej) *
                       np.prod([1 - ej / el for el in e if el != ej]) for ej in e])
    zeros = np.concatenate([e, cand.zeros])
    group = np.concatenate([np.arange(-len(e), 0), cand.group])
    params = dict(cand.params, extra=[complex(v) for v in e])
    return KreinCandidate(cand.family + "_poly", zeros, group, F,
                          np.concatenate([Fp_new, Fp_old]), cand.F0, cand.tail, params)


def family(name: str, trunc: int = 10_000, k: int = 2, zeros=None, tail=None,
           delete: int | None = None) -> KreinCandidate:
    name = name.replace("-", "_")
    if name == "cos_pi_z":
        c = cos_pi_z(trunc)
    elif name == "cos_pi_sqrt_z":
        c = cos_pi_sqrt_z(trunc)
    elif name == "cos_pi_z_pow_k":
        c = cos_pi_z_pow_k(k, trunc)
    elif name == "custom_product":
        if zeros is None:
            raise ValueError("custom_product needs zeros")
        c = custom_product(zeros, tail=tail)
    else:
        raise ValueError(f"unknown Krein family {name!r}")
    return c if delete is None else delete_zero(c, delete)


# --------------------------------------------------------------------------
# the expansion


def default_samples(cand: KreinCandidate, count: int = 25, seed: int = 0,
                    radius: float = SAMPLE_RADIUS) -> np.ndarray:
    """Random points in a disc around the origin, kept away from the zeros.

    The disc is small because ``|F|`` grows off the zero set (``cos(pi z)``
    like ``cosh(pi Im z)``) and multiplies every reconstruction error.
    """
    rng = np.random.default_rng(seed)
    r = np.abs(cand.zeros)
    R = min(float(np.sort(r)[min(len(r) - 1, 8)]), radius) if len(r) else radius
    gaps = nearest_distances(cand.zeros) if len(r) > 1 else np.array([R])
    out = []
    while len(out) < count:
        z = R * math.sqrt(rng.uniform()) * np.exp(2j * math.pi * rng.uniform())
        k = int(np.argmin(np.abs(cand.zeros - z)))
        if abs(cand.zeros[k] - z) >= 2.5 * SAMPLE_GAP * gaps[k]:
            out.append(z)
    return np.array(out)


def _check_samples(cand: KreinCandidate, z: np.ndarray, idx: np.ndarray):
    t = cand.zeros[idx]
    gaps = nearest_distances(t) if len(t) > 1 else np.abs(t)
    for zj in z:
        d = np.abs(t - zj)
        k = int(np.argmin(d))
        if d[k] < SAMPLE_GAP * gaps[k]:
            raise SampleTooCloseError(complex(zj), float(d[k]), float(gaps[k]))


def _group_terms(cand: KreinCandidate, z: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Group sums of ``(1/F'(t))(1/(z-t) + 1/t)``, shape ``(groups, samples)``."""
    t = cand.zeros[idx][:, None]
    w = 1.0 / cand.Fprime[idx][:, None]
    terms = w * (z[None, :] / (t * (z[None, :] - t)))
    g = cand.group[idx]
    starts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
    return np.add.reduceat(terms, starts, axis=0)


def _power_tail(mags: np.ndarray) -> tuple[float, float]:
    """Tail estimate ``sum_{n > N} C n^(-p)`` fitted on the last doubling.

    Returns ``(bound, p)``; the bound is ``inf`` when ``p <= 1``.
    """
    N = len(mags)
    if N < 8:
        return math.inf, 0.0
    lo = N // 2
    n = np.arange(lo, N) + 1.0
    m = np.maximum(mags[lo:], 1e-300)
    # envelope: fit the upper hull of alternating or oscillating terms
    p = -np.polyfit(np.log(n), np.log(m), 1)[0]
    C = float(np.max(m * n**p))
    if p <= 1.0 + SIDE_MARGIN:
        return math.inf, float(p)
    return float(C * zeta(p, N + 1)), float(p)


@dataclass(frozen=True)
class KreinResidual:
    residual: float
    tail_bound: float
    excess: float
    per_sample: np.ndarray
    exponent: float
    trunc: int


def krein_rhs(cand: KreinCandidate, z, trunc: int | None = None, pairing: bool = True) -> np.ndarray:
    """Truncated right-hand side of the ``K_1`` expansion at ``z``."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    idx = cand.prefix(trunc)
    if pairing:
        G = _group_terms(cand, z, idx)
    else:
        order = idx[np.argsort(np.abs(cand.zeros[idx]), kind="stable")]
        t = cand.zeros[order][:, None]
        G = (1.0 / cand.Fprime[order])[:, None] * (z[None, :] / (t * (z[None, :] - t)))
    return 1.0 / cand.F0 + csum(G, axis=0)


def krein_residual(cand: KreinCandidate, samples=None, trunc: int | None = None,
                   pairing: bool = True) -> KreinResidual:
    """``max |1/F(z) - RHS_trunc(z)|`` over the samples, with a tail bound.

    ``excess`` is the residual minus the tail bound (clipped at 0); the
    bound comes from a power-law envelope of the group terms on the last
    doubling of the prefix.
    """
    z = default_samples(cand) if samples is None else np.atleast_1d(np.asarray(samples, dtype=complex))
    idx = cand.prefix(trunc)
    _check_samples(cand, z, idx)
    G = _group_terms(cand, z, idx)
    rhs = 1.0 / cand.F0 + csum(G, axis=0)
    if not pairing:
        rhs = krein_rhs(cand, z, trunc, pairing=False)
    lhs = 1.0 / cand.F(z)
    err = np.abs(lhs - rhs)
    if cand.tail.is_finite and len(idx) == len(cand):
        bound, p = 0.0, math.nan
    else:
        bound, p = _power_tail(np.max(np.abs(G), axis=1))
    res = float(err.max())
    return KreinResidual(res, bound, max(0.0, res - bound), err, p,
                         cand.n_groups if trunc is None else min(trunc, cand.n_groups))


# --------------------------------------------------------------------------
# side condition and verdict


@dataclass(frozen=True)
class SideSeries:
    partial_sum: float
    tail: float
    exponent: float
    diverges: bool
    growth_ratio: float


def side_series(cand: KreinCandidate, trunc: int | None = None) -> SideSeries:
    """``sum 1/(|t|^2 |F'(t)|)`` over the prefix plus its TailRule tail.

    ``|F'(t)| ~ C |t|^kappa`` is fitted on the last doubling of the prefix;
    the tail is then ``C^-1 sum |t|^(-2-kappa)`` over the tail points.
    """
    idx = cand.prefix(trunc)
    idx = idx[np.argsort(np.abs(cand.zeros[idx]), kind="stable")]
    s = cand.side_terms()[idx]
    S = float(csum(s))
    grows, ratio = divergence_witness(s)
    r = np.abs(cand.zeros[idx])
    lo = len(r) // 2
    if cand.tail.is_finite:
        return SideSeries(S, 0.0, math.nan, False, ratio)
    if len(r) - lo < 4 or np.ptp(np.log(r[lo:])) == 0:
        return SideSeries(S, math.inf, math.nan, True, ratio)
    kappa = np.polyfit(np.log(r[lo:]), np.log(np.abs(cand.Fprime[idx][lo:])), 1)[0]
    sigma = -2.0 - kappa
    alpha = float(cand.tail.params.get("alpha", 1.0)) if cand.tail.family == "power" else 0.0
    e = -alpha * sigma
    if cand.tail.family == "power" and e <= 1.0 + SIDE_MARGIN:
        return SideSeries(S, math.inf, float(e), True, ratio)
    C = float(np.mean(s[lo:] * r[lo:] ** (2 + kappa)))
    n_groups = cand.n_groups if trunc is None else min(trunc, cand.n_groups)
    tail_sum, div = cand.tail.modulus_power_sum(sigma, float(r[-1]), len(r))
    if cand.tail.family == "power":
        # the tail rule counts from its own n_start; align with the prefix
        tail_params = dict(cand.tail.params, n_start=n_groups)
        tail_sum, div = TailRule("power", tail_params).modulus_power_sum(sigma, float(r[-1]), len(r))
    return SideSeries(S, C * tail_sum if not div else math.inf, float(e), bool(div or grows), ratio)


@dataclass(frozen=True)
class KreinVerdict:
    removable: bool
    conclusion: str  # "removable" or "not_removable_by_this_F"
    residual: float
    tail_bound: float
    side: SideSeries
    reason: str


def removability_verdict(cand: KreinCandidate, samples=None, trunc: int | None = None,
                         residual: KreinResidual | None = None) -> KreinVerdict:
    """Removable when the expansion holds to ``10x`` its tail bound (plus a
    rounding floor) and the side series converges."""
    res = residual or krein_residual(cand, samples, trunc)
    side = side_series(cand, trunc)
    scale = 1.0 + float(np.max(np.abs(1.0 / cand.F(default_samples(cand, 5) if samples is None
                                                    else np.asarray(samples, dtype=complex)))))
    tol = MEMBERSHIP_FACTOR * res.tail_bound + ROUNDING_FLOOR * scale
    expansion_ok = res.residual <= tol
    if not expansion_ok:
        reason = f"expansion residual {res.residual:.3g} exceeds {tol:.3g}"
    elif side.diverges:
        reason = (f"side series diverges (tail exponent {side.exponent:.3g}, "
                  f"partial sum {side.partial_sum:.4g})")
    else:
        reason = f"expansion residual {res.residual:.3g}, side series {side.partial_sum:.4g} + {side.tail:.3g}"
    ok = expansion_ok and not side.diverges
    return KreinVerdict(ok, "removable" if ok else "not_removable_by_this_F", res.residual,
                        res.tail_bound, side, reason)


# --------------------------------------------------------------------------
# the Volterra model


@dataclass(frozen=True)
class VolterraCheck:
    residual: float
    reconstruction: float
    coefficient_step: float
    coefficients_summable: bool
    condition: float
    trunc: int


def volterra_model_check(cand: KreinCandidate, trunc: int | None = None, samples=None) -> VolterraCheck:
    """Check that the constant 1 is reproduced in ``H(T, F, mu)``.

    With ``mu_n = 1/|F'(t_n)|`` and ``g = k_0/k_0(0)`` (so ``g(0) = 1``), the
    display ``1 = F(z)(sum c_n mu_n^{1/2}/(z - t_n) + z sum d_n mu_n^{1/2}/(z - t_n))``
    evaluated at the nodes ``t_m`` is the diagonal system
    ``F'(t_m) mu_m^{1/2} (c_m + t_m d_m) = 1``.  It is solved for ``d`` and the
    reconstruction is evaluated at the samples.

    Membership also needs ``d`` in ``l^2``.  When the side series is
    certified divergent the truncated solutions do not converge, and the
    reported residual is the larger of the reconstruction error and the
    ``l^2`` distance between the solutions at ``trunc/2`` and ``trunc``
    groups (the coefficient mass added over the last doubling).
    """
    idx = cand.prefix(trunc)
    idx = idx[np.lexsort((np.abs(cand.zeros[idx]), cand.group[idx]))]
    t = cand.zeros[idx]
    Fp = cand.Fprime[idx]
    mu_half = 1.0 / np.sqrt(np.abs(Fp))
    # g = k_0 / k_0(0): c_n = conj(F(0) mu^{1/2} / (0 - t_n)) / (|F(0)|^2 sum mu/|t|^2)
    k0 = np.conj(cand.F0 * mu_half / (-t))
    c = k0 / (abs(cand.F0) ** 2 * csum(mu_half**2 / np.abs(t) ** 2))
    diag = Fp * mu_half * t
    condition = float(np.max(np.abs(diag)) / np.min(np.abs(diag)))
    if not np.isfinite(condition) or condition > 1e15:
        raise SingularSystemError(condition)
    d = (1.0 / (Fp * mu_half) - c) / t
    z = default_samples(cand) if samples is None else np.atleast_1d(np.asarray(samples, dtype=complex))
    _check_samples(cand, z, idx)
    w = mu_half[:, None] / (z[None, :] - t[:, None])
    recon = cand.F(z) * (csum(c[:, None] * w, axis=0) + z * csum(d[:, None] * w, axis=0))
    rec_err = float(np.max(np.abs(1.0 - recon)))
    # l^2 mass of d gained over the last doubling of the prefix (in groups)
    g = cand.group[idx]
    ids = np.unique(g)
    half = ids[: max(1, len(ids) // 2)]
    late = ~np.isin(g, half)
    step = float(math.sqrt(csum(np.abs(d[late]) ** 2))) if late.any() else 0.0
    side = side_series(cand, trunc)
    residual = max(rec_err, step) if side.diverges else rec_err
    return VolterraCheck(residual, rec_err, step, not side.diverges, condition,
                         len(ids))
