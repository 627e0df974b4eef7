"""Dense finite sections of ``L`` used as an independent oracle.

In the orthonormal basis ``e_n = delta_{s_n} / sqrt(nu_n)`` of ``L^2(nu)`` the
operator ``L x = A x + (x, b) a`` has matrix

    M = diag(s) + (a sqrt(nu)) (b sqrt(nu))^*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from .spectral_core import SpectralData, require_valid

RESIDUAL_TOL = 1e-10
RANK_THRESHOLD = 1e-8
HUNGARIAN_MAX = 200


class EigensolverError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class TruncatedOperator:
    N: int
    M: np.ndarray
    data: SpectralData
    keep: np.ndarray

    @property
    def s(self) -> np.ndarray:
        return self.data.s[self.keep]

    def rank_one_part(self) -> np.ndarray:
        return self.M - np.diag(self.s)

    def rank_one_ratio(self) -> float:
        """``sigma_2 / sigma_1`` of ``M - diag(s)``; zero to rounding."""
        sv = np.linalg.svd(self.rank_one_part(), compute_uv=False)
        if len(sv) < 2 or sv[0] == 0:
            return 0.0
        return float(sv[1] / sv[0])


def truncate(data: SpectralData, N: int | None = None) -> TruncatedOperator:
    """Finite section on the first ``N`` points of the canonical order."""
    data = require_valid(data)
    if N is None:
        N = len(data)
    if not 1 <= N <= len(data):
        raise ValueError(f"N={N} out of range 1..{len(data)}")
    keep = np.arange(N)
    root = np.sqrt(data.nu[keep])
    u = data.a[keep] * root
    v = data.b[keep] * root
    M = np.diag(data.s[keep]).astype(complex) + np.outer(u, np.conj(v))
    return TruncatedOperator(N=N, M=M, data=data, keep=keep)


@dataclass(frozen=True, eq=False)
class DenseEigs:
    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    residuals: np.ndarray


def dense_eigs(op: TruncatedOperator) -> DenseEigs:
    """Full spectrum with unit-norm right and left eigenvectors (LAPACK)."""
    M = op.M
    w, vl, vr = scipy.linalg.eig(M, left=True, right=True)
    if not np.all(np.isfinite(w)):
        bad = np.flatnonzero(~np.isfinite(w))
        raise EigensolverError(f"eigensolver failed at index {int(bad[0])}")
    vr = vr / np.linalg.norm(vr, axis=0)
    vl = vl / np.linalg.norm(vl, axis=0)
    res = np.linalg.norm(M @ vr - vr * w, axis=0)
    scale = np.linalg.norm(M, 2) if op.N > 0 else 1.0
    if np.any(res > RESIDUAL_TOL * max(scale, 1e-300)):
        raise EigensolverError(f"residual {res.max():.3e} exceeds tolerance")
    order = np.lexsort((np.angle(w), np.abs(w)))
    return DenseEigs(w[order], vr[:, order], vl[:, order], res[order])


def char_det(op: TruncatedOperator, eta) -> complex:
    """``det(M - eta I)`` by LU with partial pivoting."""
    sign, logdet = np.linalg.slogdet(op.M - eta * np.eye(op.N))
    return complex(sign * np.exp(logdet))


def char_logdet(op: TruncatedOperator, eta) -> complex:
    """Complex log of ``det(M - eta I)``, safe when the value under/overflows."""
    sign, logdet = np.linalg.slogdet(op.M - eta * np.eye(op.N))
    if sign == 0:
        return complex(-np.inf)
    return complex(logdet + np.log(sign))


@dataclass(frozen=True)
class Matching:
    pairing: np.ndarray  # pairing[i] = index into v matched to u[i]
    max_distance: float


def match_spectra(u, v) -> Matching:
    """Minimal-cost perfect matching of two equal-size point lists.

    Optimal assignment up to 200 points; greedy nearest neighbour with
    pairwise swap repair above that.
    """
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if len(u) != len(v):
        raise ValueError(f"size mismatch: {len(u)} vs {len(v)}")
    if len(u) == 0:
        return Matching(np.array([], dtype=int), 0.0)
    cost = np.abs(u[:, None] - v[None, :])
    if len(u) <= HUNGARIAN_MAX:
        rows, cols = linear_sum_assignment(cost)
        pairing = np.empty(len(u), dtype=int)
        pairing[rows] = cols
    else:
        pairing = _greedy_swap(cost)
    return Matching(pairing, float(cost[np.arange(len(u)), pairing].max()))


def _greedy_swap(cost: np.ndarray) -> np.ndarray:
    n = len(cost)
    order = np.argsort(cost, axis=None, kind="stable")
    pairing = np.full(n, -1)
    used = np.zeros(n, dtype=bool)
    for flat in order:
        i, j = divmod(int(flat), n)
        if pairing[i] < 0 and not used[j]:
            pairing[i] = j
            used[j] = True
    improved = True
    while improved:
        improved = False
        worst = np.argsort(-cost[np.arange(n), pairing])[:50]
        for i in worst:
            for k in range(n):
                if k == i:
                    continue
                a, b = pairing[i], pairing[k]
                if max(cost[i, b], cost[k, a]) < max(cost[i, a], cost[k, b]):
                    pairing[i], pairing[k] = b, a
                    improved = True
    return pairing


def completeness_rank(op: TruncatedOperator, which: str = "L",
                      threshold: float = RANK_THRESHOLD) -> int:
    """Numerical rank of the eigenvector matrix of ``M`` or of ``M^*``."""
    if which == "L":
        V = dense_eigs(op).right_vectors
    elif which in ("L_adjoint", "Lstar"):
        V = dense_eigs(op).left_vectors
    else:
        raise ValueError("which must be 'L' or 'L_adjoint'")
    sv = np.linalg.svd(V, compute_uv=False)
    return int(np.count_nonzero(sv > threshold * sv[0]))
