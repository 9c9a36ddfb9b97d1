"""Measurement statistics of Eve's two unambiguous-discrimination receivers.

Both receivers act on each pulse of a signal separately.  A signal is stored
as ``(slot1, slot2)`` with slot1 the earlier pulse, so the data signal 0 is
``(alpha, 0)``, signal 1 is ``(0, alpha)`` and the decoy is ``(alpha, alpha)``.

USD1 displaces every pulse by ``-alpha`` and watches one detector: a single
click in slot2 (slot1) identifies signal 0 (signal 1).  USD2 displaces by
``-alpha/2`` and interferes the result with ``alpha/2`` on a 50:50 splitter,
so coherent pulses go to ``D+`` and vacuum pulses go to ``D-``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import EveParams, Scheme

__all__ = [
    "ConditionalIntensities",
    "UsdStatistics",
    "ConclusiveStats",
    "usd1_conditional_intensities",
    "usd2_conditional_intensities",
    "no_click_probability",
    "click_probability",
    "usd_statistics",
    "conclusive_stats",
]


@dataclass(frozen=True)
class ConditionalIntensities:
    """Mean photon number reaching Eve's detector(s) per input pulse.

    USD1 fills ``i_vac``/``i_coh``; USD2 fills the four ``*_plus``/``*_minus``
    fields for the detectors ``D+`` and ``D-``.
    """

    i_vac: Optional[float] = None
    i_coh: Optional[float] = None
    i_vac_plus: Optional[float] = None
    i_vac_minus: Optional[float] = None
    i_coh_plus: Optional[float] = None
    i_coh_minus: Optional[float] = None


def usd1_conditional_intensities(e: EveParams, mu: float) -> ConditionalIntensities:
    """Intensity at USD1's detector for a vacuum and for a coherent input."""
    t, d = e.bs_t, e.delta
    i_vac = t * mu * (1 + d)
    i_coh = t * mu * (2 + d - 2 * math.sqrt(e.t1 * e.t2 * (1 + d)) * math.cos(e.phi))
    # Rounding can push a perfectly cancelled intensity a hair below zero.
    return ConditionalIntensities(i_vac=max(i_vac, 0.0), i_coh=max(i_coh, 0.0))


def usd2_conditional_intensities(e: EveParams, mu: float) -> ConditionalIntensities:
    """Intensities at USD2's ``D+`` and ``D-`` for vacuum and coherent inputs.

    Light that missed the mode match at the displacement splitter is assumed
    not to interfere at the 50:50 splitter.
    """
    t, d = e.bs_t, e.delta
    t2, t3, t4 = e.t2, e.t3_eff, e.t4_eff
    g = math.sqrt(t2 * t3 * t4)
    a = math.sqrt(e.t1 * (1 + d))
    c = math.cos(e.phi)
    out = {}
    for sign, tag in ((+1, "plus"), (-1, "minus")):
        vac = t / 4 * mu * (1 + d) * (1 - sign * g)
        coh = t / 4 * mu * (2 + (1 + d) * (1 - sign * g) - 2 * a * (math.sqrt(t2) - sign * math.sqrt(t3 * t4)) * c)
        out[f"i_vac_{tag}"] = max(vac, 0.0)
        out[f"i_coh_{tag}"] = max(coh, 0.0)
    return ConditionalIntensities(**out)


def no_click_probability(i: float, eta_e: float, pd_e: float) -> float:
    """Probability that a threshold detector stays silent for intensity ``i``."""
    return (1.0 - pd_e) * math.exp(-eta_e * i)


def click_probability(i: float, eta_e: float, pd_e: float) -> float:
    """``1 - no_click_probability``, accurate for faint light and rare darks."""
    return pd_e - (1.0 - pd_e) * math.expm1(-eta_e * i)


@dataclass(frozen=True)
class UsdStatistics:
    """Conditional outcome table ``p[j, i] = p(E_j | A_i)``.

    Rows are Eve's outcomes E0, E1, E2 and E3 (inconclusive); columns are
    Alice's signals 0, 1 and 2.
    """

    p: np.ndarray

    def __post_init__(self):
        arr = np.array(self.p, dtype=float)
        if arr.shape != (4, 3):
            raise ValueError(f"outcome table must be 4x3, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "p", arr)

    def __getitem__(self, idx):
        return self.p[idx]

    def column(self, i: int) -> np.ndarray:
        return self.p[:, i]


def _table(rows) -> UsdStatistics:
    p = np.zeros((4, 3))
    p[:3] = rows
    p[3] = 1.0 - p[:3].sum(axis=0)
    return UsdStatistics(p)


def usd_statistics(e: EveParams, mu: float) -> UsdStatistics:
    """Fill the outcome table for Eve's receiver at intensity ``mu``."""
    nc = lambda i: no_click_probability(i, e.eta_e, e.pd_e)
    cl = lambda i: click_probability(i, e.eta_e, e.pd_e)
    if e.scheme is Scheme.USD1:
        ci = usd1_conditional_intensities(e, mu)
        v, c = nc(ci.i_vac), nc(ci.i_coh)
        right = c * cl(ci.i_vac)
        wrong = v * cl(ci.i_coh)
        decoy = c * cl(ci.i_coh)
        return _table([
            [right, wrong, decoy],
            [wrong, right, decoy],
            [0.0, 0.0, 0.0],
        ])
    ci = usd2_conditional_intensities(e, mu)
    vp, vm = nc(ci.i_vac_plus), nc(ci.i_vac_minus)
    cp, cm = nc(ci.i_coh_plus), nc(ci.i_coh_minus)
    # E0: slot1 D- silent, slot2 D+ silent and D- clicks (slot1 D+ irrelevant).
    # E1 mirrors E0; E2: both D+ click and both D- silent.
    kp, km = cl(ci.i_coh_plus), cl(ci.i_coh_minus)
    right = cm * vp * cl(ci.i_vac_minus)
    wrong = vm * cp * km
    decoy = cm * cp * km
    data_as_decoy = cm * vm * kp * cl(ci.i_vac_plus)
    decoy_as_decoy = cm ** 2 * kp ** 2
    return _table([
        [right, wrong, decoy],
        [wrong, right, decoy],
        [data_as_decoy, data_as_decoy, decoy_as_decoy],
    ])


@dataclass(frozen=True)
class ConclusiveStats:
    """Quantities derived from the outcome table and Alice's priors.

    ``p_e_given_conc[j]`` is ``P(E_j | conclusive)``; ``p_a_given_conc[i]`` and
    ``p_a_given_inconc[i]`` are Alice's posteriors after a conclusive and an
    inconclusive outcome; ``p_a_given_e[i, j]`` is ``P(A_i | E_j)``.
    Conditionals that would divide by zero are ``None`` (or zero columns in
    ``p_a_given_e``).  ``r`` is the recursion factor ``P(E_2 | conclusive)``.
    """

    table: UsdStatistics
    priors: tuple
    p_conc: float
    p_e_given_conc: Optional[np.ndarray]
    p_a_given_conc: Optional[np.ndarray]
    p_a_given_inconc: Optional[np.ndarray]
    p_a_given_e: np.ndarray
    r: Optional[float]

    @property
    def defined(self) -> bool:
        return self.p_e_given_conc is not None


def conclusive_stats(u: UsdStatistics, f: float) -> ConclusiveStats:
    """Bayes bookkeeping for Eve's outcomes given the decoy probability ``f``."""
    pri = np.array([(1 - f) / 2, (1 - f) / 2, f])
    joint = u.p * pri  # joint[j, i] = p_i p(E_j | A_i)
    per_outcome = joint.sum(axis=1)
    p_conc = float(per_outcome[:3].sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        p_a_given_e = np.where(per_outcome[:, None] > 0, joint / per_outcome[:, None], 0.0).T
    if p_conc > 0:
        p_e_c = per_outcome[:3] / p_conc
        p_a_c = pri * (1 - u.p[3]) / p_conc
        r = float(p_e_c[2])
    else:
        p_e_c = p_a_c = None
        r = None
    p_a_3 = pri * u.p[3] / (1 - p_conc) if p_conc < 1 else None
    return ConclusiveStats(
        table=u,
        priors=tuple(pri),
        p_conc=p_conc,
        p_e_given_conc=p_e_c,
        p_a_given_conc=p_a_c,
        p_a_given_inconc=p_a_3,
        p_a_given_e=p_a_given_e,
        r=r,
    )
