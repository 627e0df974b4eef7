"""Completeness and spectral-synthesis verdicts for rank-one perturbations.

Each classifier evaluates the hypotheses of one family of sufficient
conditions on a :class:`SpectralData` instance and reports which conclusion
they support.  Every hypothesis carries a signed margin: it is satisfied
exactly when the margin is positive, and the margin is already net of the
moment tolerance and the tail bound, so a caller can re-threshold by adding
those back.  Nothing here proves completeness; a verdict only says which
hypotheses were verified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral_core import (
    MAX_SEPARATION_EXPONENT,
    MOMENT_TOL,
    SpectralData,
    divergence_witness,
    domination_check,
    moment_profile,
    require_valid,
    sequence_report,
)

DEFAULT_K = 12
N_MAX = 12
GROWTH_FACTOR = 10.0
# equalities of moments cannot be certified when the tail is this uncertain
EQUALITY_TAIL_LIMIT = 1e-8

THEOREMS = ("bio1.1", "bio1.2", "bio1.3", "bio2", "syn1", "syn2", "syn3")
CONCLUSIONS = (
    "both_complete",
    "defect_L_le_N",
    "defect_Lstar_le_N",
    "L_complete",
    "Lstar_complete",
    "synthesis",
    "synthesis_defect_le_(N+1)^2",
    "synthesis_defect_le_(M+N+1)^2",
    "inconclusive",
)


@dataclass
class Hypothesis:
    name: str
    satisfied: bool
    margin: float  # net of tolerance and tail bound; > 0 iff satisfied
    tail_bound: float = 0.0
    tolerance: float = 0.0
    value: complex | float | None = None
    note: str = ""


@dataclass
class Verdict:
    theorem: str
    hypotheses: list
    conclusion: str
    parameters: dict = field(default_factory=dict)
    also: list = field(default_factory=list)  # further conclusions of the same theorem
    checked: list = field(default_factory=list)  # evaluated but not used
    tolerance: float = MOMENT_TOL

    def __post_init__(self):
        if self.theorem not in THEOREMS:
            raise ValueError(f"unknown theorem id {self.theorem!r}")
        if self.conclusion not in CONCLUSIONS:
            raise ValueError(f"unknown conclusion {self.conclusion!r}")

    @property
    def conclusive(self) -> bool:
        return self.conclusion != "inconclusive"

    @property
    def defect_bound(self) -> int | None:
        """Bound on the defect named by the conclusion (``None`` if inconclusive)."""
        N = self.parameters.get("N", 0)
        M = self.parameters.get("M", 0)
        c = self.conclusion
        if c in ("both_complete", "L_complete", "Lstar_complete", "synthesis"):
            return 0
        if c in ("defect_L_le_N", "defect_Lstar_le_N"):
            return N
        if c == "synthesis_defect_le_(N+1)^2":
            return (N + 1) ** 2
        if c == "synthesis_defect_le_(M+N+1)^2":
            return (M + N + 1) ** 2
        return None

    @property
    def L_defect_bound(self) -> int | None:
        """Bound on the defect of ``L`` itself implied by this verdict."""
        for c in [self.conclusion] + list(self.also):
            if c in ("both_complete", "L_complete"):
                return 0
            if c == "defect_L_le_N":
                return self.parameters.get("N", 0)
        return None

    def lines(self) -> list:
        """``key: value`` lines for reports and golden files."""
        out = [f"theorem: {self.theorem}", f"conclusion: {self.conclusion}"]
        if self.also:
            out.append("also: " + ", ".join(self.also))
        for k in sorted(self.parameters):
            out.append(f"{k}: {self.parameters[k]}")
        b = self.defect_bound
        out.append(f"defect_bound: {'none' if b is None else b}")
        for h in self.hypotheses:
            out.append(
                f"hypothesis.{h.name}: satisfied={h.satisfied} margin={h.margin:.6g} "
                f"tail_bound={h.tail_bound:.6g} tolerance={h.tolerance:.3g}"
            )
        return out


# --------------------------------------------------------------------------
# individual hypotheses


def _unperturbed(data: SpectralData) -> bool:
    return bool(np.all(data.a * np.conj(data.b) == 0))


def _schatten(data: SpectralData, rep=None) -> Hypothesis:
    rep = rep if rep is not None else sequence_report(data)
    if data.tail_rule.is_finite:
        return Hypothesis("schatten", True, math.inf, note="finite spectrum")
    ok = rep.schatten_witness is not None and rep.schatten_certified
    return Hypothesis("schatten", ok, math.inf if ok else -math.inf,
                      value=rep.schatten_witness)


def _converges(name: str, table, k: int) -> Hypothesis:
    """``sum |a b| |t|^k nu < inf``."""
    div = bool(table.diverges[k - 1])
    tail = float(table.tail_bound[k - 1])
    return Hypothesis(name, not div, -math.inf if div else math.inf, tail_bound=tail,
                      value=float(table.absolute[k - 1]))


def _mom0(table) -> Hypothesis:
    tail = float(table.tail_bound[0])
    v = table.value(1)
    if table.diverges[0]:
        return Hypothesis("mom0", False, -math.inf, math.inf, table.tol, v)
    margin = abs(v + 1) - table.tol - tail
    return Hypothesis("mom0", margin > 0, margin, tail, table.tol, v)


def _equal(name: str, x: complex, target: complex, tol: float, tail: float) -> Hypothesis:
    margin = tol + tail - abs(x - target)
    note = ""
    if tail > EQUALITY_TAIL_LIMIT:
        margin = min(margin, EQUALITY_TAIL_LIMIT - tail)
        note = "tail bound too large to certify an equality"
    return Hypothesis(name, margin > 0, margin, tail, tol, x, note)


def _nonzero(name: str, x: complex, tol: float, tail: float) -> Hypothesis:
    margin = abs(x) - tol - tail
    return Hypothesis(name, margin > 0, margin, tail, tol, x)


def _mom1(table, N: int) -> list:
    """Hypotheses of the moment pattern at ``N`` (``N = 0`` means mom0)."""
    hyps = [_converges(f"sum_abt^{N + 1}_converges", table, N + 1)]
    if N == 0:
        return hyps + [_mom0(table)]
    if any(table.diverges[:N + 1]):
        hyps.append(Hypothesis("moments_defined", False, -math.inf))
        return hyps
    hyps.append(_equal("moment1_eq_-1", table.value(1), -1, table.tol, table.tail_bound[0]))
    for k in range(2, N + 1):
        hyps.append(_equal(f"moment{k}_eq_0", table.value(k), 0, table.tol, table.tail_bound[k - 1]))
    hyps.append(_nonzero(f"moment{N + 1}_ne_0", table.value(N + 1), table.tol, table.tail_bound[N]))
    return hyps


def _pattern_N(table) -> int | None:
    """Smallest ``N >= 0`` at which the moment pattern could hold."""
    if table.diverges[0]:
        return None
    if abs(table.value(1) + 1) > table.slack(1):
        return 0
    for k in range(2, table.K + 1):
        if table.diverges[k - 1]:
            return None
        if abs(table.value(k)) > table.slack(k):
            return k - 1
    return None


def _all_nonzero(name: str, vec: np.ndarray) -> Hypothesis:
    """``vec_n != 0`` for all n: checked on the prefix; the tail families
    declare nonvanishing vectors of modulus ``~ |t|**exp``."""
    zeros = int(np.count_nonzero(vec == 0))
    if zeros:
        return Hypothesis(name, False, -math.inf, note=f"{zeros} zero entries")
    floor = float(np.min(np.abs(vec))) if len(vec) else 0.0
    return Hypothesis(name, True, math.inf, value=floor)


def _in_zL2(name: str, data: SpectralData, vec: np.ndarray, which: str,
            mask: np.ndarray | None = None) -> Hypothesis:
    """``sum |vec|^2 |t|^2 nu < inf`` (over ``mask`` when given)."""
    rule = data.tail_rule
    keep = np.ones(len(data), bool) if mask is None else mask
    with np.errstate(divide="ignore"):
        logs = 2 * np.log(np.abs(vec)) + 2 * np.log(np.abs(data.t)) + np.log(data.nu)
    logs = np.where(keep, logs, -np.inf)
    sigma = 2 * rule.exponent(which) + 2 + rule.exponent("nu")
    tail, div = rule.term_tail(data, logs, sigma)
    total = float(np.sum(np.exp(logs)))
    return Hypothesis(name, not div, -math.inf if div else math.inf, tail_bound=tail, value=total)


def _not_in_zL2(name: str, data: SpectralData, vec: np.ndarray, which: str,
                partner: np.ndarray | None = None) -> Hypothesis:
    """Divergence witness for ``sum |vec|^2 |t|^2 nu`` (restricted to the
    indices where ``partner`` is nonzero when given).

    Needs partial-sum growth by ``GROWTH_FACTOR`` over the last doubling of
    the prefix and a divergence certificate from the tail rule.
    """
    rule = data.tail_rule
    n = len(data)
    keep = np.ones(n, bool) if partner is None else partner != 0
    with np.errstate(divide="ignore", over="ignore"):
        logs = 2 * np.log(np.abs(vec)) + 2 * np.log(np.abs(data.t)) + np.log(data.nu)
    logs = np.where(keep, logs, -np.inf)
    m = np.max(logs[np.isfinite(logs)]) if np.isfinite(logs).any() else 0.0
    grows, ratio = divergence_witness(np.exp(logs - m), GROWTH_FACTOR)
    margin = ratio - GROWTH_FACTOR
    if rule.is_finite:
        return Hypothesis(name, False, -math.inf, value=ratio, note="finite data: the sum converges")
    if partner is not None and np.any(partner[n // 2:] == 0):
        return Hypothesis(name, False, -math.inf, value=ratio,
                          note="tail rule does not say which partner entries vanish")
    sigma = 2 * rule.exponent(which) + 2 + rule.exponent("nu")
    _, div = rule.modulus_power_sum(sigma, float(np.abs(data.t[-1])), n)
    if not div:
        return Hypothesis(name, False, -math.inf, value=ratio, note="tail rule says the sum converges")
    return Hypothesis(name, grows, margin, value=ratio)


def _ok(hyps) -> bool:
    return all(h.satisfied and h.margin > 0 for h in hyps)


# --------------------------------------------------------------------------
# classifiers


def classify_completeness(data: SpectralData, K: int = DEFAULT_K) -> Verdict:
    """Completeness of ``L`` and ``L*`` from the moments of ``a conj(b) nu``."""
    data = require_valid(data)
    rep = sequence_report(data)
    sp = _schatten(data, rep)
    params = {"p": rep.schatten_witness}
    if _unperturbed(data):
        hyps = [sp, Hypothesis("unperturbed", True, math.inf), Hypothesis("mom0", True, 1.0, value=0j)]
        if not sp.satisfied:
            return Verdict("bio1.1", hyps, "inconclusive", params)
        return Verdict("bio1.1", hyps, "both_complete", params)

    table = moment_profile(data, K)
    case1 = [sp, _converges("sum_abt_converges", table, 1), _mom0(table)]
    if _ok(case1):
        return Verdict("bio1.1", case1, "both_complete", params)

    N = _pattern_N(table)
    if N is None or N == 0:
        return Verdict("bio1.1", case1, "inconclusive", params)
    case2 = [sp] + _mom1(table, N)
    params["N"] = N
    if not _ok(case2):
        return Verdict("bio1.2", case2, "inconclusive", params)

    b_out = _not_in_zL2("b_notin'_zL2", data, data.b, "b", partner=data.a)
    a_out = _not_in_zL2("a_notin'_zL2", data, data.a, "a", partner=data.b)
    if b_out.satisfied and a_out.satisfied:
        return Verdict("bio1.3", case2 + [b_out, a_out], "both_complete", params)
    if b_out.satisfied:
        return Verdict("bio1.3", case2 + [b_out], "L_complete", params,
                       also=["defect_Lstar_le_N"], checked=[a_out])
    if a_out.satisfied:
        return Verdict("bio1.3", case2 + [a_out], "Lstar_complete", params,
                       also=["defect_L_le_N"], checked=[b_out])
    return Verdict("bio1.2", case2, "defect_L_le_N", params, also=["defect_Lstar_le_N"],
                   checked=[b_out, a_out])


def _L_complete_hypothesis(data: SpectralData, L_complete: bool | None) -> Hypothesis:
    if L_complete is not None:
        return Hypothesis("L_complete", bool(L_complete), math.inf if L_complete else -math.inf,
                          note="asserted")
    v = classify_completeness(data)
    ok = v.L_defect_bound == 0
    return Hypothesis("L_complete", ok, math.inf if ok else -math.inf, note=f"from {v.theorem}")


def _dom_N(data: SpectralData, N: int | None, need_dom22: bool = False):
    """Smallest ``N`` (or the given one) at which the domination holds."""
    candidates = range(N_MAX + 1) if N is None else [N]
    last = None
    for n in candidates:
        d = domination_check(data, n)
        last = d
        if d.dom and (d.dom22 or not need_dom22):
            return d
    return last


def _dom_hyps(d, with_dom22: bool) -> list:
    hyps = [Hypothesis("dom", d.dom, math.inf if d.dom else -math.inf, tail_bound=d.tail_bound,
                       value=float(d.partial_sums[-1]))]
    if with_dom22:
        hyps.append(Hypothesis("dom22", d.dom22, d.dom22_constant if d.dom22 else -math.inf,
                               value=d.dom22_constant))
    return hyps


def classify_adjoint(data: SpectralData, L_complete: bool | None = None,
                     N: int | None = None) -> Verdict:
    """Completeness of ``L*`` given completeness of ``L`` and domination of
    ``b`` by ``a``.  ``N`` fixes the domination order; by default the
    smallest one in ``0..N_MAX`` is used."""
    data = require_valid(data)
    lc = _L_complete_hypothesis(data, L_complete)
    d = _dom_N(data, N)
    hyps = [lc] + _dom_hyps(d, False)
    params = {"N": d.N}
    if not _ok(hyps):
        return Verdict("bio2", hyps, "inconclusive", params)
    a_out = _not_in_zL2("a_notin_zL2", data, data.a, "a")
    if a_out.satisfied:
        return Verdict("bio2", hyps + [a_out], "Lstar_complete", params)
    if d.N == 0:
        return Verdict("bio2", hyps, "Lstar_complete", params, checked=[a_out])
    return Verdict("bio2", hyps, "defect_Lstar_le_N", params, checked=[a_out])


def classify_synthesis(data: SpectralData, L_complete: bool | None = None,
                       K: int = DEFAULT_K, theorem: str | None = None) -> Verdict:
    """Bound on ``dim(M - E(M, L))`` over ``L``-invariant subspaces ``M``.

    The sharpest branch that fires is returned: synthesis, then the moment
    pattern bound ``(N+1)^2``, then the domination bound ``(M+N+1)^2``.
    ``theorem`` restricts the search to one of ``syn1``, ``syn2``, ``syn3``.
    """
    if theorem not in (None, "syn1", "syn2", "syn3"):
        raise ValueError(f"unknown synthesis theorem {theorem!r}")
    use = {"syn1", "syn2", "syn3"} if theorem is None else {theorem}
    data = require_valid(data)
    rep = sequence_report(data)
    sp = _schatten(data, rep)
    if _unperturbed(data):
        hyps = [Hypothesis("unperturbed", True, math.inf, note="normal operator")]
        return Verdict("syn1", hyps, "synthesis", {})

    table = moment_profile(data, K)
    params = {"p": rep.schatten_witness}
    tried = []

    a_nz = _all_nonzero("a_nonzero", data.a)
    b_nz = _all_nonzero("b_nonzero", data.b)
    # syn1
    mom0 = _mom0(table)
    for nz, vec, which in ((a_nz, data.a, "a"), (b_nz, data.b, "b")) if "syn1" in use else ():
        hyps = [sp, nz, _in_zL2(f"{which}_in_zL2", data, vec, which), mom0]
        if _ok(hyps):
            return Verdict("syn1", hyps, "synthesis", params)
        tried.extend(hyps)

    # syn2
    N = _pattern_N(table) if "syn2" in use else None
    if N is not None:
        nz = a_nz if a_nz.satisfied else b_nz
        hyps = [sp, nz] + _mom1(table, N)
        if _ok(hyps):
            return Verdict("syn2", hyps, "synthesis_defect_le_(N+1)^2", dict(params, N=N),
                           checked=tried)
        tried.extend(hyps)

    if "syn3" not in use:
        return Verdict(theorem, tried, "inconclusive", params)

    # syn3
    lc = _L_complete_hypothesis(data, L_complete)
    M = rep.separation_exponent
    sep = Hypothesis("power_separated", M is not None,
                     rep.separation_constant if M is not None else -math.inf,
                     value=rep.separation_constant,
                     note=f"exponents 0..{MAX_SEPARATION_EXPONENT} on the prefix")
    d = _dom_N(data, None, need_dom22=True)
    hyps = [lc, sep] + _dom_hyps(d, True)
    if _ok(hyps):
        return Verdict("syn3", hyps, "synthesis_defect_le_(M+N+1)^2",
                       dict(params, N=d.N, M=M), checked=tried)
    return Verdict("syn3", tried + hyps, "inconclusive", params)


def classify_all(data: SpectralData, L_complete: bool | None = None) -> dict:
    comp = classify_completeness(data)
    if L_complete is None and comp.L_defect_bound == 0:
        L_complete = True
    return {
        "completeness": comp,
        "adjoint": classify_adjoint(data, L_complete=L_complete),
        "synthesis": classify_synthesis(data, L_complete=L_complete),
    }


def format_report(verdicts: dict, name: str = "") -> str:
    """Human-readable summary followed by ``key: value`` blocks."""
    out = []
    if name:
        out.append(f"dataset: {name}")
    for key, v in verdicts.items():
        out.append("")
        out.append(f"[{key}]")
        out.extend(v.lines())
    return "\n".join(out) + "\n"
