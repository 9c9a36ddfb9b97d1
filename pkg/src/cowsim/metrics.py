"""Expected gain, QBER and visibilities of the attacked link.

Every metric is a ratio of per-block expectations.  A block is a run of ``k``
conclusive outcomes (the conclusive-block) plus the terminating round, which
Eve resends as vacuum.  Two evaluators are provided:

* the closed forms (``expected_gain``, ``expected_qber``,
  ``expected_visibilities``), vectorised over ``k = 0..m_max``;
* ``recursion_reference``, which iterates the conditional recursions
  ``N(k | first outcome)`` directly and shares no algebra with the closed
  forms beyond the primitive probabilities.

Notation used in comments: ``t[j, i] = p(E_j | A_i)``, ``pc`` the conclusive
probability, ``R = P(E_2 | conclusive)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import SEQUENCES, TWO_SIGNAL_SEQUENCES, EveParams, ProtocolParams, check, split_sequence
from .usd import ConclusiveStats, UsdStatistics, conclusive_stats, usd_statistics

__all__ = [
    "BlockDistribution",
    "MetricsReport",
    "NumericError",
    "block_distribution",
    "expected_gain",
    "expected_qber",
    "expected_visibilities",
    "recursion_reference",
    "evaluate",
    "report_from_counts",
]

R_SINGULAR_TOL = 1e-12


class NumericError(ArithmeticError):
    """A computation produced a non-finite intermediate value."""


@dataclass(frozen=True)
class BlockDistribution:
    """``p_cb[k]``: probability that a block holds ``k`` conclusive outcomes."""

    p_cb: np.ndarray

    @property
    def m_max(self) -> int:
        return len(self.p_cb) - 1

    def mean_signals(self) -> float:
        return float(np.dot(self.p_cb, np.arange(len(self.p_cb)) + 1))


def block_distribution(p_conc: float, m_max: int) -> BlockDistribution:
    """Geometric block-length law truncated at ``m_max``."""
    if not 0 <= p_conc <= 1:
        raise ValueError(f"p_conc out of [0,1]: {p_conc}")
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    k = np.arange(m_max + 1)
    p = p_conc ** k * (1 - p_conc)
    p[m_max] = p_conc ** m_max
    return BlockDistribution(p)


@dataclass(frozen=True)
class MetricsReport:
    """Metrics plus the per-block expected counts they are built from.

    Undefined ratios (zero denominator) are ``None``.
    """

    gain: float
    qber: Optional[float]
    vis: dict
    vis_ave: Optional[float]
    n_sig: float
    n_clk: float
    n_key: float
    n_err: float
    n_m1: dict
    n_m2: dict
    p_conc: Optional[float] = None
    r: Optional[float] = None
    method: str = "closed-form"

    def aggregates(self) -> dict:
        out = dict(n_sig=self.n_sig, n_clk=self.n_clk, n_key=self.n_key, n_err=self.n_err)
        for s in SEQUENCES:
            out[f"n_m1_{s}"] = self.n_m1[s]
            out[f"n_m2_{s}"] = self.n_m2[s]
        return out

    def metric(self, name: str) -> Optional[float]:
        """Look up ``gain``, ``qber``, ``v_ave`` or ``v<seq>`` (e.g. ``v01``)."""
        if name == "gain":
            return self.gain
        if name == "qber":
            return self.qber
        if name in ("v_ave", "vis_ave"):
            return self.vis_ave
        if name.startswith("v") and name[1:] in self.vis:
            return self.vis[name[1:]]
        raise KeyError(name)


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den != 0 else None


def _visibility(n1: float, n2: float) -> Optional[float]:
    return _ratio(n1 - n2, n1 + n2)


def report_from_counts(n_sig, n_clk, n_key, n_err, n_m1, n_m2, **extra) -> MetricsReport:
    """Assemble a report from per-block (or per-round) expected counts."""
    vis = {s: _visibility(n_m1[s], n_m2[s]) for s in SEQUENCES}
    s1 = sum(n_m1.values())
    s2 = sum(n_m2.values())
    return MetricsReport(
        gain=n_clk / n_sig,
        qber=_ratio(n_err, n_key),
        vis=vis,
        vis_ave=_visibility(s1, s2),
        n_sig=n_sig,
        n_clk=n_clk,
        n_key=n_key,
        n_err=n_err,
        n_m1=dict(n_m1),
        n_m2=dict(n_m2),
        **extra,
    )


@dataclass
class _Ctx:
    """Shared primitive probabilities for one (table, priors, m_max) triple."""

    t: np.ndarray
    pri: np.ndarray
    pc: float
    R: float
    pc_e: np.ndarray  # P(E_j | conc)
    pa_c: np.ndarray  # P(A_i | conc)
    pa_3: np.ndarray  # P(A_i | inconclusive)
    pa_e: np.ndarray  # P(A_i | E_j), shape (3, 4)
    m_max: int
    pcb: np.ndarray
    k: np.ndarray = field(init=False)

    def __post_init__(self):
        self.k = np.arange(self.m_max + 1, dtype=float)

    @property
    def term_prior(self) -> np.ndarray:
        """Alice's posterior for the terminal round, per block length."""
        out = np.tile(self.pa_3, (self.m_max + 1, 1))
        out[self.m_max] = self.pri
        return out


def _context(c: ConclusiveStats, m_max: int) -> _Ctx:
    pri = np.array(c.priors)
    t = c.table.p
    if c.p_conc > 0:
        pc_e, pa_c, R = c.p_e_given_conc, c.p_a_given_conc, c.r
    else:
        # Only k = 0 blocks occur, so these never receive weight.
        pc_e = np.zeros(3)
        pa_c = np.zeros(3)
        R = 0.0
    pa_3 = c.p_a_given_inconc if c.p_a_given_inconc is not None else np.zeros(3)
    return _Ctx(
        t=t, pri=pri, pc=c.p_conc, R=R, pc_e=pc_e, pa_c=pa_c, pa_3=pa_3,
        pa_e=c.p_a_given_e, m_max=m_max, pcb=block_distribution(c.p_conc, m_max).p_cb,
    )


def _is_singular(c: ConclusiveStats) -> bool:
    return c.p_conc > 0 and abs(1 - c.r) < R_SINGULAR_TOL


def _n_sig(ctx: _Ctx) -> float:
    pc, m = ctx.pc, ctx.m_max
    if pc < 1:
        return (1 - pc ** (m + 1)) / (1 - pc)
    return float(m + 1)


def _inner(ctx: _Ctx, per_k: np.ndarray) -> np.ndarray:
    """Zero the conclusive-block terms when Eve is never conclusive."""
    if ctx.pc == 0:
        return np.zeros_like(per_k)
    return per_k


def _geo(ctx: _Ctx, shift: int = 0) -> np.ndarray:
    """``(1 - R**(k - shift)) / (1 - R)`` for every block length ``k``."""
    n = np.clip(ctx.k - shift, 0, None)
    return (1 - ctx.R ** n) / (1 - ctx.R)


def _pow(ctx: _Ctx, shift: int) -> np.ndarray:
    """``R**(k - shift)``, with exponents clipped at zero (those terms carry k - shift <= 0)."""
    return ctx.R ** np.clip(ctx.k - shift, 0, None)


def _weighted(ctx: _Ctx, per_k: np.ndarray) -> float:
    value = float(np.dot(ctx.pcb, per_k))
    if not np.isfinite(value):
        raise NumericError("non-finite block expectation")
    return value


def _dark_pair(pd: float) -> float:
    """``1 - (1 - pd)**2`` without cancellation."""
    return pd * (2 - pd)


# The closed forms below are grouped as (dark-free part) + pd * (...): the
# dark-free parts are built from the non-negative differences k - geo and
# k R**(k-1) - geo, which vanish exactly at k = 1, so tiny dark-count
# contributions are not lost to cancellation.


def _clicks(ctx: _Ctx, pd: float) -> float:
    k, R = ctx.k, ctx.R
    geo = _geo(ctx)
    p_clk_vac = _dark_pair(pd)
    q = 1 - p_clk_vac
    inner = k * p_clk_vac + q * ((k - geo) + R * (k * _pow(ctx, 1) - geo))
    return _weighted(ctx, _inner(ctx, inner) + p_clk_vac)


def _key_err(ctx: _Ctx, pd: float) -> tuple[float, float]:
    t, k = ctx.t, ctx.k
    p0 = ctx.pri[0]
    p_clk_vac = _dark_pair(pd)
    q = 1 - p_clk_vac
    p_err_vac = p_clk_vac / 2
    inc = t[3, 0] + t[3, 1]
    dec = t[2, 0] + t[2, 1]
    good = t[0, 0] + t[1, 1]
    bad = t[0, 1] + t[1, 0]
    geo = _geo(ctx)
    rk1 = k * _pow(ctx, 1)
    pc = ctx.pc if ctx.pc > 0 else 1.0
    short, short_r = k - geo, rk1 - geo
    n_key = p0 / pc * (k * (2 - inc) * p_clk_vac + q * ((2 - inc) * short + dec * short_r))
    # Error counts as a polynomial in pd.
    e0 = (2 * bad + dec) * short + dec * short_r
    e1 = k * (good - bad) - 2 * rk1 * dec + geo * (good + 3 * bad + 4 * dec)
    e2 = rk1 * dec - geo * (good + bad + 2 * dec)
    n_err = p0 / (2 * pc) * (e0 + pd * (e1 + pd * e2))
    key_term = ctx.term_prior[:, :2].sum(axis=1)
    key = _weighted(ctx, _inner(ctx, n_key) + key_term * p_clk_vac)
    err = _weighted(ctx, _inner(ctx, n_err) + key_term * p_err_vac)
    return key, err


def _decoy_counts(ctx: _Ctx, pd1: float, pd2: float) -> tuple[float, float]:
    t, k = ctx.t, ctx.k
    p2 = ctx.pri[2]
    pc = ctx.pc if ctx.pc > 0 else 1.0
    geo = _geo(ctx)
    rk1 = k * _pow(ctx, 1)
    conc = 1 - t[3, 2]
    # Conclusive decoys resent with both pulses STRONG (whole) or with exactly
    # one STRONG (half).  ``dark1``/``dark2`` count the conclusive decoys
    # where M1/M2 can click only in the dark.
    t22 = t[2, 2]
    whole = p2 / pc * t22 * ((k - geo) + (rk1 - geo))
    half = p2 / pc * (conc - t22) * (k - geo)
    dark1 = p2 / pc * (conc * geo + t22 * (geo - rk1))
    dark2 = p2 / pc * (conc * geo + t22 * (k - geo))
    n1 = whole + half + pd1 * dark1
    n2 = half + pd2 * dark2
    term = ctx.term_prior[:, 2]
    m1 = _weighted(ctx, _inner(ctx, n1) + term * pd1)
    m2 = _weighted(ctx, _inner(ctx, n2) + term * pd2)
    return m1, m2


def _pair_counts(ctx: _Ctx, s: str, pd1: float, pd2: float) -> tuple[float, float]:
    t, k = ctx.t, ctx.k
    s1, s2 = split_sequence(s)
    pc = ctx.pc if ctx.pc > 0 else 1.0
    pre = ctx.pri[s1] * ctx.pri[s2] / pc ** 2

    def v(a, b):
        return t[a, s1] * t[b, s2]

    km1 = np.clip(k - 1, 0, None)
    geo1 = _geo(ctx, shift=1)
    conc1 = 1 - t[3, s1]
    conc2 = 1 - t[3, s2]
    short1 = km1 - geo1
    rk2 = km1 * _pow(ctx, 2)
    lit = (km1 * (v(0, 0) + v(1, 0) + v(1, 1))
           + short1 * (v(0, 2) + v(1, 2) + v(2, 0) + v(2, 1))
           + (short1 + (rk2 - geo1)) * v(2, 2))
    dark = km1 * v(0, 1) - rk2 * v(2, 2) + geo1 * (conc1 * t[2, s2] + t[2, s1] * conc2)
    n1 = pre * (lit + pd1 * dark)
    other = v(0, 1) + v(1, 0) + v(1, 2) + v(2, 0) + v(2, 2)
    n2 = pre * (km1 * (v(0, 0) + v(1, 1)) + short1 * (v(0, 2) + v(2, 1))
                + pd2 * (km1 * other + geo1 * (v(0, 2) + v(2, 1))))

    term = ctx.term_prior
    # Last conclusive signal against the terminal round, then the terminal
    # round against the first round of the next block.  Both slots are dark.
    last = np.where(k > 0, ctx.pa_c[s1] * term[:, s2], 0.0)
    edge = term[:, s1] * ctx.pri[s2]
    m1 = _weighted(ctx, _inner(ctx, n1) + (last + edge) * pd1)
    m2 = _weighted(ctx, _inner(ctx, n2) + (last + edge) * pd2)
    return m1, m2


def expected_gain(c: ConclusiveStats, p: ProtocolParams, e: EveParams) -> tuple[float, float, float]:
    """Return ``(gain, n_sig, n_clk)``."""
    if _is_singular(c):
        rep = recursion_reference(c, p, e)
        return rep.gain, rep.n_sig, rep.n_clk
    ctx = _context(c, e.m_max)
    n_sig = _n_sig(ctx)
    n_clk = _clicks(ctx, p.pd_data)
    return n_clk / n_sig, n_sig, n_clk


def expected_qber(c: ConclusiveStats, p: ProtocolParams, e: EveParams, u: UsdStatistics = None):
    """Return ``(qber, n_key, n_err)``; ``qber`` is ``None`` without key clicks."""
    if _is_singular(c):
        rep = recursion_reference(c, p, e)
        return rep.qber, rep.n_key, rep.n_err
    ctx = _context(c, e.m_max)
    n_key, n_err = _key_err(ctx, p.pd_data)
    return _ratio(n_err, n_key), n_key, n_err


def expected_visibilities(c: ConclusiveStats, p: ProtocolParams, e: EveParams, u: UsdStatistics = None):
    """Return ``(vis, vis_ave, n_m1, n_m2)`` keyed by sequence label."""
    if _is_singular(c):
        rep = recursion_reference(c, p, e)
        return rep.vis, rep.vis_ave, rep.n_m1, rep.n_m2
    ctx = _context(c, e.m_max)
    n_m1, n_m2 = {}, {}
    n_m1["2"], n_m2["2"] = _decoy_counts(ctx, p.pd_m1, p.pd_m2)
    for s in TWO_SIGNAL_SEQUENCES:
        n_m1[s], n_m2[s] = _pair_counts(ctx, s, p.pd_m1, p.pd_m2)
    vis = {s: _visibility(n_m1[s], n_m2[s]) for s in SEQUENCES}
    vis_ave = _visibility(sum(n_m1.values()), sum(n_m2.values()))
    return vis, vis_ave, n_m1, n_m2


def evaluate(p: ProtocolParams, e: EveParams, *, method: str = "closed-form") -> MetricsReport:
    """Full attacked-system report for protocol ``p`` and receiver ``e``."""
    check(p, e)
    u = usd_statistics(e, p.mu)
    c = conclusive_stats(u, p.f)
    if method == "recursion":
        return recursion_reference(c, p, e, u)
    if method != "closed-form":
        raise ValueError(f"unknown method {method!r}")
    if _is_singular(c):
        return recursion_reference(c, p, e, u)
    gain, n_sig, n_clk = expected_gain(c, p, e)
    _, n_key, n_err = expected_qber(c, p, e, u)
    _, _, n_m1, n_m2 = expected_visibilities(c, p, e, u)
    return report_from_counts(n_sig, n_clk, n_key, n_err, n_m1, n_m2, p_conc=c.p_conc, r=c.r)


# --------------------------------------------------------------------------
# Recursion evaluator


def _iterate(m_max, start, step, n_of_2, k0=1):
    """Run ``N(k|i)`` for ``i in {0, 1}`` and the mixed ``N(k)``.

    ``start`` gives ``(N(k0|0), N(k0|1), N(k0|2))``; ``step(k, prev0, prev1)``
    gives ``(N(k|0), N(k|1))``; ``n_of_2(k, n_prev)`` gives ``N(k|2)`` from
    ``N(k-1)``.  Returns ``N(k)`` for ``k = 0..m_max`` (zero below ``k0``).
    """
    pce = start[3]
    total = np.zeros(m_max + 1)
    if m_max < k0:
        return total
    a, b, c2 = start[:3]
    total[k0] = pce[0] * a + pce[1] * b + pce[2] * c2
    for k in range(k0 + 1, m_max + 1):
        a, b = step(k, a, b)
        c2 = n_of_2(k, total[k - 1])
        total[k] = pce[0] * a + pce[1] * b + pce[2] * c2
    return total


def recursion_reference(c: ConclusiveStats, p: ProtocolParams, e: EveParams, u: UsdStatistics = None) -> MetricsReport:
    """Same report as the closed forms, from the conditional recursions."""
    m = e.m_max
    pri = np.array(c.priors)
    pcb = block_distribution(c.p_conc, m).p_cb
    n_sig = float(np.dot(pcb, np.arange(m + 1) + 1))
    term = np.tile(c.p_a_given_inconc if c.p_a_given_inconc is not None else np.zeros(3), (m + 1, 1))
    term[m] = pri

    pd, pd1, pd2 = p.pd_data, p.pd_m1, p.pd_m2
    pv = _dark_pair(pd)
    pev = pv / 2

    if c.p_conc > 0:
        P = c.p_e_given_conc
        Ac = c.p_a_given_conc
        AE = c.p_a_given_e
        with np.errstate(invalid="ignore", divide="ignore"):
            conc_col = 1 - c.table.p[3]
            EA = np.where(conc_col > 0, c.table.p[:3] / conc_col, 0.0)  # P(E_j | A_i, conc)
        inner = _recursions(m, P, Ac, AE, EA, pd, pd1, pd2, pv, pev)
    else:
        zeros = np.zeros(m + 1)
        inner = dict(clk=zeros, key=zeros, err=zeros,
                     m1={s: zeros for s in SEQUENCES}, m2={s: zeros for s in SEQUENCES})
        Ac = np.zeros(3)

    def total(per_k):
        value = float(np.dot(pcb, per_k))
        if not np.isfinite(value):
            raise NumericError("non-finite block expectation")
        return value

    key_term = term[:, :2].sum(axis=1)
    n_clk = total(inner["clk"] + pv)
    n_key = total(inner["key"] + key_term * pv)
    n_err = total(inner["err"] + key_term * pev)
    n_m1, n_m2 = {}, {}
    n_m1["2"] = total(inner["m1"]["2"] + term[:, 2] * pd1)
    n_m2["2"] = total(inner["m2"]["2"] + term[:, 2] * pd2)
    ks = np.arange(m + 1)
    for s in TWO_SIGNAL_SEQUENCES:
        s1, s2 = split_sequence(s)
        boundary = np.where(ks > 0, Ac[s1] * term[:, s2], 0.0) + term[:, s1] * pri[s2]
        n_m1[s] = total(inner["m1"][s] + boundary * pd1)
        n_m2[s] = total(inner["m2"][s] + boundary * pd2)
    return report_from_counts(n_sig, n_clk, n_key, n_err, n_m1, n_m2,
                              p_conc=c.p_conc, r=c.r, method="recursion")


def _recursions(m, P, Ac, AE, EA, pd, pd1, pd2, pv, pev):
    """Conclusive-block expectations ``N(k)``, ``k = 0..m``, for every count."""
    out = {}

    # Data-line clicks.
    out["clk"] = _iterate(
        m,
        (pv, pv, pv, P),
        lambda k, a, b: (
            P[0] * (k - 1 + pv) + P[1] * (k - 2 + 2 * pv) + P[2] * (a + pv),
            P[0] * k + P[1] * (k - 1 + pv) + P[2] * (b + pv),
        ),
        lambda k, prev: prev + pv,
    )

    # Sifted and erroneous bits.
    D = AE[0] + AE[1]  # P(A_key | E_j)
    key_c = Ac[0] + Ac[1]
    out["key"] = _iterate(
        m,
        (D[0] * pv, D[1] * pv, D[2] * pv, P),
        lambda k, a, b: (
            P[0] * (D[0] * (1 + pv) + key_c * (k - 2))
            + P[1] * ((D[0] + D[1]) * pv + key_c * (k - 2))
            + P[2] * (a + D[2] * pv),
            P[0] * (D[0] + D[1] + key_c * (k - 2))
            + P[1] * (D[1] * (1 + pv) + key_c * (k - 2))
            + P[2] * (b + D[2] * pv),
        ),
        lambda k, prev: prev + D[2] * pv,
    )
    e0 = AE[0, 0] * pd / 2 + AE[1, 0] * (1 - pd / 2)
    e1 = AE[0, 1] * (1 - pd / 2) + AE[1, 1] * pd / 2
    e2 = (AE[0, 2] + AE[1, 2]) / 2
    err_c = P[0] * e0 + P[1] * e1 + P[2] * e2
    out["err"] = _iterate(
        m,
        (D[0] * pev, D[1] * pev, D[2] * pev, P),
        lambda k, a, b: (
            P[0] * (D[0] * pev + e0 + err_c * (k - 2))
            + P[1] * ((D[0] + D[1]) * pev + err_c * (k - 2))
            + P[2] * (a + D[2] * pev),
            P[0] * (e0 + e1 + err_c * (k - 2))
            + P[1] * (e1 + D[1] * pev + err_c * (k - 2))
            + P[2] * (b + D[2] * pev),
        ),
        lambda k, prev: prev + D[2] * pev,
    )

    # Decoy visibility.
    A2 = AE[2]
    out["m1"], out["m2"] = {}, {}
    for X, pdx in ((1, pd1), (2, pd2)):
        # Middle decoys: M1 always clicks; M2 clicks for misidentified decoys
        # and through dark counts for correctly identified ones.
        mid = Ac[2] if X == 1 else Ac[2] * ((1 - EA[2, 2]) + EA[2, 2] * pdx)
        out[f"m{X}"]["2"] = _iterate(
            m,
            (A2[0] * pdx, A2[1] * pdx, A2[2] * pdx, P),
            lambda k, a, b, pdx=pdx, mid=mid: (
                P[0] * (A2[0] * (1 + pdx) + mid * (k - 2))
                + P[1] * ((A2[0] + A2[1]) * pdx + mid * (k - 2))
                + P[2] * (a + A2[2] * pdx),
                P[0] * (A2[0] + A2[1] + mid * (k - 2))
                + P[1] * (A2[1] * (1 + pdx) + mid * (k - 2))
                + P[2] * (b + A2[2] * pdx),
            ),
            lambda k, prev, pdx=pdx: prev + A2[2] * pdx,
        )

    # Two-signal visibilities; recursions start at k = 2.
    for s in TWO_SIGNAL_SEQUENCES:
        s1, s2 = split_sequence(s)
        a1, a2 = AE[s1], AE[s2]
        c1, c2 = Ac[s1], Ac[s2]
        x0 = EA[0, s1]  # first of the pair seen as E0 -> its slot2 is vacuum
        y1 = EA[1, s2]  # second of the pair seen as E1 -> its slot1 is vacuum
        coh1 = c1 * c2 * ((1 - x0 * y1) + x0 * y1 * pd1)
        coh2 = c1 * c2 * (pd2 + (x0 + y1 - 2 * x0 * y1) * (1 - pd2))

        start1 = (
            a1[0] * (P[0] * a2[0] + P[1] * a2[1] * pd1 + P[2] * a2[2] * pd1),
            a1[1] * (P[0] * a2[0] + P[1] * a2[1] + P[2] * a2[2] * pd1),
            c1 * 0 + a1[2] * c2 * pd1,
            P,
        )
        start2 = (
            a1[0] * (P[0] * a2[0] + P[1] * a2[1] * pd2 + P[2] * a2[2] * pd2),
            a1[1] * (P[0] * a2[0] * pd2 + P[1] * a2[1] + P[2] * a2[2] * pd2),
            a1[2] * c2 * pd2,
            P,
        )

        def step1(k, a, b, a1=a1, a2=a2, c1=c1, c2=c2, x0=x0, y1=y1, coh=coh1):
            head0 = a1[0] * c2 * ((1 - y1) + y1 * pd1)
            n0 = (
                P[0] * (head0 + c1 * a2[0] + coh * (k - 3))
                + P[1] * (head0 + c1 * a2[1] * ((1 - x0) + x0 * pd1) + coh * (k - 3))
                + P[2] * (a + c1 * a2[2] * pd1)
            )
            n1 = (
                P[0] * (a1[1] * c2 + c1 * a2[0] + coh * (k - 3))
                + P[1] * (a1[1] * c2 + c1 * a2[1] * ((1 - x0) + x0 * pd1) + coh * (k - 3))
                + P[2] * (b + c1 * a2[2] * pd1)
            )
            return n0, n1

        def step2(k, a, b, a1=a1, a2=a2, c1=c1, c2=c2, x0=x0, y1=y1, coh=coh2):
            head0 = a1[0] * c2 * ((1 - y1) + y1 * pd2)
            head1 = a1[1] * c2 * (pd2 + y1 * (1 - pd2))
            tail0 = c1 * a2[0] * (pd2 + x0 * (1 - pd2))
            tail1 = c1 * a2[1] * ((1 - x0) + x0 * pd2)
            n0 = (
                P[0] * (head0 + tail0 + coh * (k - 3))
                + P[1] * (head0 + tail1 + coh * (k - 3))
                + P[2] * (a + c1 * a2[2] * pd2)
            )
            n1 = (
                P[0] * (head1 + tail0 + coh * (k - 3))
                + P[1] * (head1 + tail1 + coh * (k - 3))
                + P[2] * (b + c1 * a2[2] * pd2)
            )
            return n0, n1

        out["m1"][s] = _iterate(m, start1, step1, lambda k, prev, a1=a1, c2=c2: prev + a1[2] * c2 * pd1, k0=2)
        out["m2"][s] = _iterate(m, start2, step2, lambda k, prev, a1=a1, c2=c2: prev + a1[2] * c2 * pd2, k0=2)
    return out
