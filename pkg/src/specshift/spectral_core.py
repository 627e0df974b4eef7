"""Spectral data, moment functionals and sequence diagnostics.

A rank-one perturbation ``L = A + a (x) b`` of a compact normal operator is
described by the points ``s_n`` of the spectrum of ``A`` together with point
masses ``nu_n`` and the coordinates ``a_n``, ``b_n``.  We store the inverse
points ``t_n = 1/s_n`` because every growth condition is naturally phrased
in terms of them.

Only a finite prefix of each sequence is ever stored.  An optional
:class:`TailRule` describes how the sequences continue, which lets every
"the series converges" hypothesis carry an explicit error bar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import zeta

from .summation import csum, cumulative_csum

MOMENT_TOL = 1e-10
SEPARATION_FLOOR = 1e-6
MAX_SEPARATION_EXPONENT = 12
LACUNARY_MIN_RATIO = 1.2
MIN_FIT_POINTS = 8


class DivergenceError(ArithmeticError):
    """The tail rule implies that a required series diverges."""


# --------------------------------------------------------------------------
# tail rules


def _as_complex_list(values) -> np.ndarray:
    out = []
    for v in values:
        if isinstance(v, (list, tuple)):
            out.append(complex(v[0], v[1]))
        else:
            out.append(complex(v))
    return np.array(out, dtype=complex)


@dataclass(frozen=True)
class TailRule:
    """How the stored sequences continue beyond the prefix.

    ``family`` is one of

    * ``"finite"``: there is no tail.
    * ``"geometric"``: tail points have moduli ``|t_last| q^j`` (j >= 1),
      repeated in each direction listed in ``roots``.
    * ``"power"``: tail points are ``w * scale * (n + shift)**alpha`` for
      ``n >= n_start`` and every ``w`` in ``roots``.

    In the infinite families the other sequences follow powers of ``|t|``:
    ``nu ~ |t|**nu_exp``, ``|a| ~ |t|**a_exp``, ``|b| ~ |t|**b_exp``.  The
    constants are calibrated on the last stored points.
    """

    family: str = "finite"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in ("finite", "geometric", "power"):
            raise ValueError(f"unknown tail family {self.family!r}")

    @property
    def is_finite(self) -> bool:
        return self.family == "finite"

    @property
    def roots(self) -> np.ndarray:
        return _as_complex_list(self.params.get("roots", [1.0]))

    def exponent(self, name: str) -> float:
        return float(self.params.get(name + "_exp", 0.0))

    def _n_start(self, n_stored: int) -> int:
        m = len(self.roots)
        return int(self.params.get("n_start", n_stored // m))

    def modulus_power_sum(self, sigma: float, last_abs_t: float, n_stored: int):
        """Sum of ``|t|**sigma`` over the tail points.

        Returns ``(value, diverges)``; ``value`` is ``inf`` when divergent.
        """
        m = len(self.roots)
        if self.is_finite:
            return 0.0, False
        if self.family == "geometric":
            q = float(self.params["q"])
            if sigma >= 0:
                return math.inf, True
            r = q**sigma
            return m * last_abs_t**sigma * r / (1.0 - r), False
        scale = float(self.params.get("scale", 1.0))
        shift = float(self.params.get("shift", 0.0))
        alpha = float(self.params.get("alpha", 1.0))
        e = -alpha * sigma
        if e <= 1.0:
            return math.inf, True
        n0 = self._n_start(n_stored)
        return m * scale**sigma * float(zeta(e, n0 + shift)), False

    def point_power_sum(self, p: int, last_abs_t: float, n_stored: int) -> complex:
        """Exact sum of ``t**(-p)`` over the tail points (``p >= 1``)."""
        if self.is_finite:
            return 0j
        w = complex(np.sum(self.roots ** (-p)))
        if w == 0:
            return 0j
        if self.family == "geometric":
            q = float(self.params["q"])
            r = q ** (-p)
            return w * last_abs_t ** (-p) * r / (1.0 - r)
        scale = float(self.params.get("scale", 1.0))
        shift = float(self.params.get("shift", 0.0))
        alpha = float(self.params.get("alpha", 1.0))
        e = alpha * p
        if e <= 1.0:
            return complex(math.inf)
        n0 = self._n_start(n_stored)
        return w * scale ** (-p) * float(zeta(e, n0 + shift))

    def term_tail(self, data: "SpectralData", log_terms: np.ndarray, sigma: float):
        """Bound the tail of a nonnegative series whose terms behave like
        ``C |t|**sigma``; ``log_terms`` are the logs of the stored terms.

        Returns ``(bound, diverges)``.
        """
        if self.is_finite or len(log_terms) == 0:
            return 0.0, False
        finite = np.isfinite(log_terms)
        if not finite.any():
            return 0.0, False
        m = len(self.roots)
        logt = np.log(np.abs(data.t))
        last = slice(max(0, len(log_terms) - m), None)
        calib = log_terms[last] - sigma * logt[last]
        calib = calib[np.isfinite(calib)]
        if len(calib) == 0:
            return 0.0, False
        s, div = self.modulus_power_sum(sigma, float(np.abs(data.t[-1])), len(data))
        if div:
            return math.inf, True
        if s == 0:
            return 0.0, False
        return float(np.exp(np.max(calib) + math.log(s))), False


# --------------------------------------------------------------------------
# spectral data


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Finite prefix of ``(t_n, nu_n, a_n, b_n)`` with an optional tail rule."""

    t: np.ndarray
    nu: np.ndarray
    a: np.ndarray
    b: np.ndarray
    tail: TailRule | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "t", np.atleast_1d(np.asarray(self.t, dtype=complex)))
        object.__setattr__(self, "nu", np.atleast_1d(np.asarray(self.nu, dtype=float)))
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=complex)))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=complex)))

    def __len__(self) -> int:
        return len(self.t)

    @property
    def s(self) -> np.ndarray:
        return 1.0 / self.t

    @property
    def tail_rule(self) -> TailRule:
        return self.tail if self.tail is not None else TailRule()

    def canonical_permutation(self) -> np.ndarray:
        """0-based permutation sorting by ``|t|``, then argument, then index."""
        idx = np.arange(len(self.t))
        return np.array(
            sorted(idx, key=lambda i: (abs(self.t[i]), float(np.angle(self.t[i])), i)),
            dtype=int,
        )

    def canonical(self) -> "SpectralData":
        perm = self.canonical_permutation()
        if np.array_equal(perm, np.arange(len(perm))):
            return self
        return replace(self, t=self.t[perm], nu=self.nu[perm], a=self.a[perm], b=self.b[perm])

    def with_vectors(self, a=None, b=None) -> "SpectralData":
        return replace(self, a=self.a if a is None else a, b=self.b if b is None else b)


@dataclass
class ValidationReport:
    valid: bool
    issues: list
    permutation: tuple  # 1-based canonical order

    def __str__(self) -> str:
        if self.valid:
            return "valid"
        return "; ".join(self.issues)


def validate(data: SpectralData) -> ValidationReport:
    """Report structural problems without raising."""
    issues = []
    lens = {len(data.t), len(data.nu), len(data.a), len(data.b)}
    if len(lens) != 1:
        issues.append(
            f"length mismatch: t={len(data.t)}, nu={len(data.nu)}, a={len(data.a)}, b={len(data.b)}"
        )
    if len(data.t) == 0:
        issues.append("empty data")
    zero = np.flatnonzero(data.t == 0)
    if len(zero):
        issues.append(f"zero t at index {', '.join(str(i + 1) for i in zero)}")
    seen = {}
    for i, v in enumerate(data.t):
        if v in seen:
            issues.append(f"duplicate t={v} at index {seen[v] + 1} and {i + 1}")
        else:
            seen[v] = i
    bad_nu = np.flatnonzero(~(data.nu > 0))
    if len(bad_nu):
        issues.append(f"nonpositive nu at index {', '.join(str(i + 1) for i in bad_nu)}")
    if len(lens) == 1:
        perm = tuple(int(i) + 1 for i in data.canonical_permutation())
    else:
        perm = ()
    return ValidationReport(valid=not issues, issues=issues, permutation=perm)


def require_valid(data: SpectralData) -> SpectralData:
    rep = validate(data)
    if not rep.valid:
        raise ValueError("invalid spectral data: " + str(rep))
    return data.canonical()


# --------------------------------------------------------------------------
# moments


@dataclass
class MomentValue:
    value: complex
    absolute: float
    tail_bound: float


def _log_abs(x) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(x))


def _moment_terms(data: SpectralData, k: int):
    w = data.a * np.conj(data.b) * data.nu
    with np.errstate(over="ignore", invalid="ignore"):
        terms = w * data.t**k
    logs = _log_abs(data.a) + _log_abs(data.b) + k * _log_abs(data.t) + np.log(data.nu)
    return terms, logs


def _moment(data: SpectralData, k: int) -> tuple[MomentValue, bool]:
    terms, logs = _moment_terms(data, k)
    rule = data.tail_rule
    sigma = rule.exponent("a") + rule.exponent("b") + k + rule.exponent("nu")
    if np.all(data.a * np.conj(data.b) == 0):
        tail, div = 0.0, False
    else:
        tail, div = rule.term_tail(data, logs, sigma)
    value = complex(csum(terms))
    absolute = float(csum(np.abs(terms)))
    return MomentValue(value, absolute, tail), div


def moment(data: SpectralData, k: int) -> MomentValue:
    """``sum_n a_n conj(b_n) t_n**k nu_n`` with a bound on the omitted tail."""
    if k < 1:
        raise ValueError("k must be a positive integer")
    data = require_valid(data)
    mv, div = _moment(data, k)
    if div:
        raise DivergenceError(f"sum |a b| |t|^{k} nu diverges under the tail rule")
    return mv


@dataclass
class MomentTable:
    values: np.ndarray  # values[k-1] is moment k
    absolute: np.ndarray
    tail_bound: np.ndarray
    diverges: np.ndarray
    tol: float = MOMENT_TOL

    @property
    def K(self) -> int:
        return len(self.values)

    def value(self, k: int) -> complex:
        return complex(self.values[k - 1])

    def slack(self, k: int) -> float:
        return self.tol + float(self.tail_bound[k - 1])

    def mom0_margin(self) -> float:
        """Distance of moment 1 from -1, less tolerance and tail."""
        if self.diverges[0]:
            return -math.inf
        return abs(self.values[0] + 1) - self.slack(1)

    @property
    def case(self) -> str:
        if self.diverges[0]:
            return "divergent"
        return "mom0" if self.mom0_margin() > 0 else "mom1"

    def pattern(self):
        """``(N, margin)`` for the first nonvanishing pattern, or ``None``.

        The pattern is: moment 1 equals -1, moments 2..N vanish and moment
        N+1 does not, each judged with tolerance plus tail bound.  ``margin``
        is the smallest distance-to-degeneracy among the conditions.
        """
        if self.case != "mom1":
            return None
        margins = [self.slack(1) - abs(self.values[0] + 1)]
        for k in range(2, self.K + 1):
            if self.diverges[k - 1]:
                return None
            m = abs(self.values[k - 1])
            if m > self.slack(k):
                margins.append(m - self.slack(k))
                return k - 1, float(min(margins))
            margins.append(self.slack(k) - m)
        return None


def moment_profile(data: SpectralData, K: int) -> MomentTable:
    """Moments ``1..K``; divergent orders are flagged rather than raised."""
    data = require_valid(data)
    vals, absv, tails, div = [], [], [], []
    for k in range(1, K + 1):
        mv, d = _moment(data, k)
        vals.append(mv.value)
        absv.append(mv.absolute)
        tails.append(mv.tail_bound)
        div.append(d)
    return MomentTable(
        values=np.array(vals, dtype=complex),
        absolute=np.array(absv),
        tail_bound=np.array(tails),
        diverges=np.array(div, dtype=bool),
    )


# --------------------------------------------------------------------------
# sequence diagnostics


@dataclass
class SequenceReport:
    convergence_exponent_estimate: float | None
    lacunarity_ratio: float
    separation_exponent: int | None
    separation_constant: float | None
    schatten_witness: float | None
    schatten_certified: bool
    fitted_slope: float | None
    lacunary: bool


def nearest_distances(t: np.ndarray) -> np.ndarray:
    pts = np.column_stack([t.real, t.imag])
    dist, _ = cKDTree(pts).query(pts, k=2)
    return dist[:, 1]


def sequence_report(data: SpectralData) -> SequenceReport:
    """Lacunarity, convergence exponent, power separation and a Schatten witness."""
    data = require_valid(data)
    r = np.abs(data.t)
    n = len(r)
    if n >= 2:
        ratios = r[1:] / r[:-1]
        lac = float(ratios.min())
    else:
        ratios = np.array([])
        lac = math.inf
    slope = None
    estimate = None
    lacunary = False
    if n >= MIN_FIT_POINTS:
        x = np.log(r)
        y = np.log(np.arange(1, n + 1))
        if np.ptp(x) > 0:
            slope = float(np.polyfit(x, y, 1)[0])
            half = len(ratios) // 2
            lacunary = bool(
                lac >= LACUNARY_MIN_RATIO and ratios[half:].min() >= 0.9 * ratios[:half].min()
            )
            estimate = 0.0 if lacunary else max(slope, 0.0)

    sep_m = sep_c = None
    if n >= 2:
        dist = nearest_distances(data.t)
        for M in range(MAX_SEPARATION_EXPONENT + 1):
            c = float(np.min(dist * r**M))
            if c >= SEPARATION_FLOOR:
                sep_m, sep_c = M, c
                break

    witness, certified = None, False
    if estimate is not None:
        rule = data.tail_rule
        for j in range(1, 41):
            p = 0.5 * j
            if p <= estimate:
                continue
            if rule.is_finite:
                if p >= estimate + 0.25:
                    witness = p
                    certified = data.tail is not None
                    break
                continue
            _, div = rule.modulus_power_sum(-p, float(r[-1]), n)
            if not div:
                witness, certified = p, True
                break
    return SequenceReport(
        convergence_exponent_estimate=estimate,
        lacunarity_ratio=lac,
        separation_exponent=sep_m,
        separation_constant=sep_c,
        schatten_witness=witness,
        schatten_certified=certified,
        fitted_slope=slope,
        lacunary=lacunary,
    )


@dataclass
class DominationResult:
    N: int
    dom: bool
    dom22: bool
    partial_sums: np.ndarray
    tail_bound: float
    dom22_constant: float


def domination_check(data: SpectralData, N: int) -> DominationResult:
    """Check ``sum |b|^2/(|a|^2 |t|^2N) < inf`` and ``|a|^2 nu >~ |t|^(-2N-2)``."""
    data = require_valid(data)
    rule = data.tail_rule
    active = data.b != 0
    if np.any(active & (data.a == 0)):
        dom = False
        partial = np.full(len(data), math.inf)
        tail = math.inf
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(
                active,
                2 * _log_abs(data.b) - 2 * _log_abs(data.a) - 2 * N * _log_abs(data.t),
                -np.inf,
            )
        terms = np.exp(logs)
        partial = cumulative_csum(terms)
        sigma = 2 * rule.exponent("b") - 2 * rule.exponent("a") - 2 * N
        tail, div = rule.term_tail(data, logs, sigma)
        dom = not div and bool(np.isfinite(partial[-1]))
    with np.errstate(divide="ignore"):
        lower = 2 * _log_abs(data.a) + np.log(data.nu) + (2 * N + 2) * _log_abs(data.t)
    const = float(np.exp(lower.min()))
    dom22 = const > 0
    if dom22 and not rule.is_finite:
        dom22 = 2 * rule.exponent("a") + rule.exponent("nu") + 2 * N + 2 >= 0
    return DominationResult(N=N, dom=dom, dom22=dom22, partial_sums=partial, tail_bound=tail,
                            dom22_constant=const)


def restrict(data: SpectralData, keep, tail: TailRule | None = None) -> SpectralData:
    """Sub-data on the index set ``keep`` (indices into the canonical order).

    The tail rule of the original data does not in general describe an
    arbitrary subsequence, so it is dropped unless ``keep`` is everything or
    a replacement ``tail`` is supplied.
    """
    data = require_valid(data)
    keep = np.asarray(keep)
    if keep.dtype == bool:
        idx = np.flatnonzero(keep)
    else:
        idx = np.unique(keep.astype(int))
    if len(idx) == 0:
        raise ValueError("empty selection")
    if idx.min() < 0 or idx.max() >= len(data):
        raise IndexError("selection out of range")
    if len(idx) == len(data):
        return data if tail is None else replace(data, tail=tail)
    return replace(data, t=data.t[idx], nu=data.nu[idx], a=data.a[idx], b=data.b[idx], tail=tail)


def model_measure(data: SpectralData) -> np.ndarray:
    """``mu_n = |t_n|^2 |b_n|^2 nu_n``; all ``b_n`` must be nonzero."""
    data = require_valid(data)
    if np.any(data.b == 0):
        raise ValueError("model measure needs b_n != 0 for all n; restrict first")
    mu = np.abs(data.t) ** 2 * np.abs(data.b) ** 2 * data.nu
    rule = data.tail_rule
    logs = np.log(mu) - np.log(np.abs(data.t) ** 2 + 1)
    _, div = rule.term_tail(data, logs, 2 * rule.exponent("b") + rule.exponent("nu"))
    if div:
        raise DivergenceError("sum mu_n/(|t_n|^2+1) diverges under the tail rule")
    return mu


def divergence_witness(terms: Sequence[float], factor: float = 10.0) -> tuple[bool, float]:
    """Partial-sum growth over the last doubling of the prefix.

    Returns ``(grows, ratio)`` where ``ratio = S_n / S_{n/2}``.
    """
    terms = np.asarray(terms, dtype=float)
    n = len(terms)
    if n < 2:
        return False, 1.0
    partial = cumulative_csum(terms)
    half = partial[n // 2 - 1]
    if half <= 0:
        return bool(partial[-1] > 0), math.inf if partial[-1] > 0 else 1.0
    ratio = float(partial[-1] / half)
    return ratio >= factor, ratio


# --------------------------------------------------------------------------
# generators


GENERATOR_FAMILIES = ("lacunary", "arithmetic", "cos_zeros", "cos_sqrt_zeros", "cos_power_zeros")


def generator_points(family: str, params: dict):
    """Points and tail rule (without the vector exponents) for a named family."""
    count = int(params.get("count", 50))
    if family == "lacunary":
        q = float(params.get("q", 2.0))
        start = int(params.get("start", 1))
        t = q ** np.arange(start, start + count, dtype=float)
        return t.astype(complex), {"family": "geometric", "params": {"q": q}}
    if family == "arithmetic":
        t = np.arange(1, count + 1, dtype=float)
        return t.astype(complex), {
            "family": "power",
            "params": {"scale": 1.0, "shift": 1.0, "alpha": 1.0, "n_start": count},
        }
    if family == "cos_zeros":
        scale = float(params.get("scale", 1.0))
        h = scale * (np.arange(count) + 0.5)
        t = np.empty(2 * count, dtype=complex)
        t[0::2] = h
        t[1::2] = -h
        return t, {
            "family": "power",
            "params": {"scale": scale, "shift": 0.5, "alpha": 1.0, "roots": [1.0, -1.0],
                       "n_start": count},
        }
    if family == "cos_sqrt_zeros":
        scale = float(params.get("scale", 1.0))
        t = scale * (np.arange(count) + 0.5) ** 2
        return t.astype(complex), {
            "family": "power",
            "params": {"scale": scale, "shift": 0.5, "alpha": 2.0, "n_start": count},
        }
    if family == "cos_power_zeros":
        k = int(params.get("k", 2))
        roots = np.exp(1j * np.pi * np.arange(2 * k) / k)
        r = (np.arange(count) + 0.5) ** (1.0 / k)
        t = (r[:, None] * roots[None, :]).ravel()
        return t, {
            "family": "power",
            "params": {"scale": 1.0, "shift": 0.5, "alpha": 1.0 / k,
                       "roots": [[w.real, w.imag] for w in roots], "n_start": count},
        }
    raise ValueError(f"unknown generator family {family!r}")


def generate(family: str, params: dict | None = None, name: str = "") -> SpectralData:
    """Expand a generator description into explicit spectral data.

    Besides the point-family parameters, ``params`` may hold ``nu_exp``,
    ``a_exp``, ``b_exp`` and complex scale factors ``a_scale``, ``b_scale``
    (``[re, im]`` or real); then ``nu_n = |t_n|**nu_exp``,
    ``a_n = a_scale |t_n|**a_exp`` and likewise for ``b``.
    """
    params = dict(params or {})
    t, tail = generator_points(family, params)
    r = np.abs(t)
    nu_exp = float(params.get("nu_exp", 0.0))
    a_exp = float(params.get("a_exp", 0.0))
    b_exp = float(params.get("b_exp", 0.0))
    a_scale = _as_complex_list([params.get("a_scale", 1.0)])[0]
    b_scale = _as_complex_list([params.get("b_scale", 1.0)])[0]
    tail["params"].update({"nu_exp": nu_exp, "a_exp": a_exp, "b_exp": b_exp})
    data = SpectralData(
        t=t,
        nu=r**nu_exp,
        a=a_scale * r**a_exp,
        b=b_scale * r**b_exp,
        tail=TailRule(tail["family"], tail["params"]),
        name=name or family,
    )
    return data.canonical()
