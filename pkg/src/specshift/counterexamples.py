"""Lacunary model spaces with prescribed defects.

Three constructions on ``T = {q^n}``:

* finite defect: ``mu_n = |t_n|^{-2N}``, ``G = A~/P`` with ``A~`` vanishing at
  ``t_n + 1/2`` and ``P`` removing ``N`` of those zeros.  Kernels at the
  zeros of ``G`` are complete; the biorthogonal system has defect ``N``.
* infinite defect: ``G = A~/U`` with ``U`` the part of ``A~`` over a sparse
  subsequence ``T_0``; the complement of the biorthogonal system contains
  the independent elements built from ``S/P_j``.
* synthesis failure: the finite-defect data placed on a sparse ``T_2`` and
  ``mu = 1`` on ``T_1 = T \\ T_2``; the mixed system of kernels on ``T_1``
  and biorthogonal functions on the zeros of ``G_2`` has defect ``N``.

Shifted points keep their offsets exactly (see :class:`Points`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cdb_space import (
    MixedSystemSpec,
    ModelSpace,
    SpaceElement,
    mixed_defect,
    s_space_residual,
    summability_gate,
)
from .determinant import GDescriptor
from .products import Points, ProductFunction
from .spectral_core import TailRule

SHIFT = 0.5
DEFAULT_TRUNCS = (50, 100, 200)


def square_indices(count: int) -> np.ndarray:
    """0-based indices ``n^2 - 1`` of the square-indexed subsequence."""
    n = np.arange(1, int(math.isqrt(count)) + 1)
    return n * n - 1


@dataclass
class Construction:
    kind: str
    q: float
    count: int
    space: ModelSpace
    G: GDescriptor
    Lambda: Points
    N: int | None = None
    side: np.ndarray | None = None  # the construction's own partition of Lambda
    subsets: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)
    certificate: dict = field(default_factory=dict)

    def spec(self, side=None) -> MixedSystemSpec:
        """Mixed system over ``Lambda``; ``side`` may be 1, 2 or an array."""
        if side is None:
            side = self.side if self.side is not None else 2
        side = np.broadcast_to(np.asarray(side, dtype=int), (len(self.Lambda),)).copy()
        return MixedSystemSpec(self.G, self.Lambda.base, side, self.Lambda.off)

    def recipe(self) -> dict:
        out = {"kind": self.kind, "q": self.q, "count": self.count}
        if self.N is not None:
            out["N"] = self.N
        return out


def _lacunary(q: float, count: int) -> np.ndarray:
    if not q > 1:
        raise ValueError("q must exceed 1")
    return q ** np.arange(1, count + 1, dtype=float)


def build_finite_defect(N: int, q: float = 2.0, count: int = 200) -> Construction:
    if N < 0:
        raise ValueError("N must be nonnegative")
    if count < 20:
        raise ValueError("count must be at least 20")
    if count <= N:
        raise ValueError("count must exceed N")
    t = _lacunary(q, count)
    log_mu = -2 * N * np.log(t)
    tail = TailRule("geometric", {"q": q, "mu_exp": -2.0 * N})
    space = ModelSpace(t, log_mu, genus=0, tail=tail, name=f"finite_defect_N{N}")
    off = np.full(count, SHIFT)
    G = GDescriptor.quotient(t, t[:N], zero_offsets=off, p_offsets=off[:N])
    Lam = Points.of(t[N:], off[N:])
    return Construction("finite_defect", q, count, space, G, Lam, N=N,
                        side=np.full(len(Lam), 2))


def build_infinite_defect(q: float = 2.0, count: int = 60, split=None) -> Construction:
    """``split`` gives the 0-based indices of ``T_0`` (square-indexed by default)."""
    t = _lacunary(q, count)
    T0 = square_indices(count) if split is None else np.unique(np.asarray(split, dtype=int))
    if len(T0) < 4:
        raise ValueError("split too thin for the prefix")
    in0 = np.zeros(count, dtype=bool)
    in0[T0] = True
    off = np.full(count, SHIFT)
    U = ProductFunction(Points.of(t[T0], off[T0]))
    logU = U.log_value(Points.of(t))
    log_mu = np.where(in0, 0.0, -2 * logU.real)
    space = ModelSpace(t, log_mu, genus=0, name="infinite_defect")
    G = GDescriptor.quotient(t, t[T0], zero_offsets=off, p_offsets=off[T0])
    Lam = Points.of(t[~in0], off[~in0])
    # S = prod over T_0 of (1 - z/(t_n + eps_n)), eps_n = t_n^(-n) (1-based n)
    with np.errstate(under="ignore"):
        eps = np.exp(-(T0 + 1) * np.log(t[T0]))
    S_zeros = Points.of(t[T0], eps)
    c = Construction("infinite_defect", q, count, space, G, Lam, side=np.full(len(Lam), 2),
                     subsets={"T0": T0})
    c.extras["S_zeros"] = S_zeros
    return c


class QuotientS:
    """Log evaluator for ``S / P_j``: the product over the zeros of ``S``
    with the first ``j`` removed (``P_j`` normalised by ``P_j(0) = 1``)."""

    def __init__(self, zeros: Points, j: int):
        self.j = j
        self.product = ProductFunction(zeros[np.arange(j, len(zeros))])
        self.degree = None

    def __call__(self, z):
        return self.product.log_value(Points.of(z))


def build_synthesis_failure(N: int, q: float = 2.0, count: int = 200, split=None) -> Construction:
    """``split`` gives the 0-based indices of ``T_2`` (square-indexed by default)."""
    if N < 1:
        raise ValueError("N must be at least 1")
    t = _lacunary(q, count)
    T2 = square_indices(count) if split is None else np.unique(np.asarray(split, dtype=int))
    if len(T2) <= N + 2:
        raise ValueError("split too thin for the prefix")
    in2 = np.zeros(count, dtype=bool)
    in2[T2] = True
    T1 = np.flatnonzero(~in2)
    log_mu = np.where(in2, -2 * N * np.log(t), 0.0)
    space = ModelSpace(t, log_mu, genus=0, name=f"synthesis_failure_N{N}")
    # G = A_1 G_2, G_2 = A~_2 / P
    zeros = np.concatenate([t[T1], t[T2]])
    zoff = np.concatenate([np.zeros(len(T1)), np.full(len(T2), SHIFT)])
    pz = t[T2[:N]]
    G = GDescriptor.quotient(zeros, pz, zero_offsets=zoff, p_offsets=np.full(N, SHIFT))
    lam2 = Points.of(t[T2[N:]], np.full(len(T2) - N, SHIFT))
    Lam = Points.of(t[T1]).concat(lam2)
    side = np.concatenate([np.ones(len(T1), dtype=int), np.full(len(lam2), 2)])
    order = np.argsort(np.abs(Lam.value), kind="stable")
    Lam = Lam[order]
    side = side[order]
    return Construction("synthesis_failure", q, count, space, G, Lam, N=N, side=side,
                        subsets={"T1": T1, "T2": T2})


def build(kind: str, N: int | None = None, q: float = 2.0, count: int | None = None) -> Construction:
    kind = kind.replace("-", "_")
    if kind == "finite_defect":
        return build_finite_defect(1 if N is None else N, q, count or 200)
    if kind == "infinite_defect":
        return build_infinite_defect(q, count or 60)
    if kind == "synthesis_failure":
        return build_synthesis_failure(1 if N is None else N, q, count or 200)
    raise ValueError(f"unknown construction {kind!r}")


# --------------------------------------------------------------------------
# certificates


def _truncs(c: Construction, truncs):
    out = tuple(K for K in truncs if K <= c.count)
    if c.count not in out and c.count < max(truncs):
        out = out + (c.count,)
    return out


def defect_table(c: Construction, side=None, truncs=DEFAULT_TRUNCS, threshold=1e-8):
    spec = c.spec(side)
    return {K: mixed_defect(c.space, spec, K, threshold) for K in _truncs(c, truncs)}


def certify_finite_defect(c: Construction, truncs=DEFAULT_TRUNCS, samples: int = 10) -> dict:
    K = max(_truncs(c, truncs))
    sp = c.space.truncate(K)
    from .cdb_space import ModelFunction

    Gm = ModelFunction(c.G, c.space.radius(K))
    sample = c.Lambda[np.arange(min(samples, len(c.Lambda)))]
    mono = {}
    for j in range(c.N):
        S = np.zeros(j + 1)
        S[j] = 1
        mono[j] = s_space_residual(sp, Gm, S, sample).residual
    top = np.zeros(c.N + 1)
    top[c.N] = 1
    gate = summability_gate(sp, top)
    bio = defect_table(c, 2, truncs)
    ker = defect_table(c, 1, truncs)
    cert = {
        "monomial_residuals": mono,
        "degree_N_gate": gate,
        "biorthogonal_defect": {k: v.dimension for k, v in bio.items()},
        "kernel_defect": {k: v.dimension for k, v in ker.items()},
    }
    dims = set(cert["biorthogonal_defect"].values())
    cert["dimension"] = dims.pop() if len(dims) == 1 else None
    cert["stable"] = cert["dimension"] is not None
    c.certificate = cert
    return cert


def complement_elements(c: Construction, J: int = 3, K: int | None = None):
    """Elements ``c_n = conj(S_j(t_n)) mu_n^{1/2}`` for ``S_j = S/P_j``."""
    K = c.count if K is None else K
    sp = c.space.truncate(K)
    zeros = c.extras["S_zeros"]
    zeros = zeros[np.abs(zeros.value) <= c.space.radius(K)]
    out = []
    funcs = []
    for j in range(1, J + 1):
        Sj = QuotientS(zeros, j)
        lv = Sj(Points.of(sp.t))
        logs = np.conj(lv) + sp.log_sqrt_mu
        m = np.max(logs.real[np.isfinite(logs.real)])
        with np.errstate(under="ignore"):
            coeffs = np.exp(logs - m)
        coeffs[~np.isfinite(logs.real)] = 0
        out.append(SpaceElement(coeffs))
        funcs.append(Sj)
    return out, funcs


def certify_infinite_defect(c: Construction, J: int = 3, samples: int = 10,
                            truncs=DEFAULT_TRUNCS) -> dict:
    from .cdb_space import ModelFunction

    K = c.count
    sp = c.space
    Gm = ModelFunction(c.G, c.space.radius(K))
    sample = c.Lambda[np.arange(min(samples, len(c.Lambda)))]
    elems, funcs = complement_elements(c, J)
    res = [s_space_residual(sp, Gm, f, sample).residual for f in funcs]
    C = np.array([e.coeffs / np.linalg.norm(e.coeffs) for e in elems])
    sv = np.linalg.svd(C @ C.conj().T, compute_uv=False)
    ker = defect_table(c, 1, truncs)
    cert = {
        "residuals": res,
        "gram_singular_values": sv,
        "independent": bool(sv[-1] > 1e-6 * sv[0]),
        "kernel_defect": {k: v.dimension for k, v in ker.items()},
    }
    c.certificate = cert
    return cert


def certify_synthesis_failure(c: Construction, truncs=DEFAULT_TRUNCS) -> dict:
    mixed = defect_table(c, None, truncs)
    ker = defect_table(c, 1, truncs)
    bio = defect_table(c, 2, truncs)
    cert = {
        "mixed_defect": {k: v.dimension for k, v in mixed.items()},
        "all_kernels_defect": {k: v.dimension for k, v in ker.items()},
        "all_biorthogonal_defect": {k: v.dimension for k, v in bio.items()},
    }
    dims = set(cert["mixed_defect"].values())
    cert["dimension"] = dims.pop() if len(dims) == 1 else None
    cert["stable"] = cert["dimension"] is not None
    c.certificate = cert
    return cert


def certify(c: Construction, truncs=DEFAULT_TRUNCS) -> dict:
    if c.kind == "finite_defect":
        return certify_finite_defect(c, truncs)
    if c.kind == "infinite_defect":
        return certify_infinite_defect(c, truncs=truncs)
    return certify_synthesis_failure(c, truncs)


def perturbation_vectors(c: Construction, K: int | None = None):
    """Spectral data ``(t, nu, a, b)`` whose functional model is the
    construction: ``nu = 1``, ``b = mu^{1/2}/|t|`` and ``a = w/(conj(b) t)``
    with ``w_n = G(t_n)/(t_n A'(t_n))``.  Entries that under- or overflow
    double precision make the explicit form unavailable (``None``)."""
    from .cdb_space import ModelFunction

    K = c.count if K is None else K
    sp = c.space.truncate(K)
    Gm = ModelFunction(c.G, c.space.radius(K))
    lG = Gm.log(Points.of(sp.t))
    log_b = sp.log_sqrt_mu - np.log(np.abs(sp.t))
    log_w = lG - np.log(sp.t) - sp.log_Aprime
    log_a = log_w - log_b - np.log(sp.t)
    mags = np.concatenate([log_a.real, log_b])
    if np.any(np.abs(mags[np.isfinite(mags)]) > 700):
        return None
    return sp.t, np.ones(K), np.exp(log_a), np.exp(log_b).astype(complex)
