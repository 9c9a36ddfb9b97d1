"""When does the attack go unnoticed, and how much key does it leak?

``mu_max`` scans Alice's intensity for the smallest value at which the
attacked link passes every active check; ``max_attack_fraction`` finds the
largest share of rounds Eve can attack when the rest of the link behaves
legitimately.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .metrics import MetricsReport, evaluate, report_from_counts
from .model import (
    SEQUENCES,
    EveParams,
    ProtocolParams,
    Thresholds,
    check,
    gain_no_attack,
    no_attack_key_probs,
    no_attack_monitor_probs,
)

__all__ = [
    "NoAttackBaseline",
    "FeasibilityResult",
    "PartialAttackResult",
    "no_attack_baseline",
    "constraint_status",
    "is_undetectable",
    "mu_grid",
    "mu_max",
    "key_rate_bound",
    "mixed_metrics",
    "max_attack_fraction",
    "extracted_key_ratio",
    "partial_attack",
    "PARTIAL_CONSTRAINTS",
]

PARTIAL_CONSTRAINTS = frozenset({"qber", "v_ave"})


@dataclass(frozen=True)
class NoAttackBaseline:
    """Per-round probabilities of the legitimate link.

    ``m1[s]`` and ``m2[s]`` are joint probabilities that sequence ``s`` is
    sent and the monitoring detector clicks at its slot.
    """

    gain: float
    p_key: float
    p_err: float
    m1: dict
    m2: dict
    eta_ch: float


def no_attack_baseline(p: ProtocolParams, eta_ch: float) -> NoAttackBaseline:
    p_key, p_err = no_attack_key_probs(p, eta_ch)
    m1, m2 = {}, {}
    for s in SEQUENCES:
        m1[s], m2[s] = no_attack_monitor_probs(p, eta_ch, s)
    return NoAttackBaseline(gain_no_attack(p, eta_ch), p_key, p_err, m1, m2, eta_ch)


def constraint_status(m: MetricsReport, th: Thresholds, g_ref: Optional[float] = None) -> dict:
    """Per active constraint: ``True``/``False``, or ``None`` when undefined."""
    out = {}
    for name in sorted(th.constraint_set):
        if name == "qber":
            out[name] = None if m.qber is None else m.qber < th.qber_th
        elif name == "v_ave":
            out[name] = None if m.vis_ave is None else m.vis_ave > th.vis_th
        elif name == "v_s":
            vals = list(m.vis.values())
            out[name] = None if any(v is None for v in vals) else all(v > th.vis_th for v in vals)
        elif name == "gain":
            out[name] = None if g_ref is None else m.gain >= g_ref
    return out


def is_undetectable(m: MetricsReport, th: Thresholds, g_ref: Optional[float] = None) -> bool:
    """All active constraints pass; an undefined quantity counts as a failure."""
    return all(v is True for v in constraint_status(m, th, g_ref).values())


@dataclass(frozen=True)
class FeasibilityResult:
    """Outcome of a ``mu_max`` scan.

    ``undetectable[i]`` is the verdict at ``grid[i]``.  ``mu_max`` and
    ``k_max`` are ``inf`` when no scanned intensity is undetectable.
    """

    mu_max: float
    k_max: float
    eta_ch: float
    grid: tuple
    undetectable: tuple

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.mu_max)


def mu_grid(lo: float = 1e-4, hi: float = 10.0, points: int = 400) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), points)


def _verdict(p: ProtocolParams, e: EveParams, eta_ch: float, th: Thresholds, mu: float) -> bool:
    q = replace(p, mu=float(mu))
    g_ref = gain_no_attack(q, eta_ch) if "gain" in th.constraint_set else None
    return is_undetectable(evaluate(q, e), th, g_ref)


def mu_max(p: ProtocolParams, e: EveParams, eta_ch: float, th: Thresholds = Thresholds(),
           *, grid: Optional[np.ndarray] = None, rtol: float = 1e-3) -> FeasibilityResult:
    """Smallest intensity at which the attack passes every check.

    The whole grid is evaluated first (the verdict need not be monotone in
    ``mu``), then the first crossing is refined by bisection.
    """
    check(p, e, th)
    grid = mu_grid() if grid is None else np.asarray(grid, dtype=float)
    verdicts = tuple(_verdict(p, e, eta_ch, th, mu) for mu in grid)
    hits = [i for i, v in enumerate(verdicts) if v]
    if not hits:
        value = math.inf
    elif hits[0] == 0:
        value = float(grid[0])
    else:
        lo, hi = float(grid[hits[0] - 1]), float(grid[hits[0]])
        while hi - lo > rtol * hi:
            mid = math.sqrt(lo * hi)
            if _verdict(p, e, eta_ch, th, mid):
                hi = mid
            else:
                lo = mid
        value = hi
    k = key_rate_bound(value, p.f, p.eta_b, eta_ch)
    return FeasibilityResult(value, k, eta_ch, tuple(float(g) for g in grid), verdicts)


def key_rate_bound(mu_max: float, f: float, eta_b: float, eta_ch: float) -> float:
    """Upper bound ``(1 - f) eta_ch eta_b mu_max`` on the secret-key rate."""
    if math.isinf(mu_max):
        return math.inf
    return (1 - f) * eta_ch * eta_b * mu_max


def mixed_metrics(tau_a: float, attacked: MetricsReport, baseline: NoAttackBaseline) -> MetricsReport:
    """Metrics when a ``tau_a`` share of rounds is attacked in long runs.

    Unattacked contributions are per-round probabilities scaled to one
    attacked block (``n_sig`` rounds).
    """
    if not 0 <= tau_a <= 1:
        raise ValueError("tau_a must lie in [0, 1]")
    a, b, n = tau_a, 1 - tau_a, attacked.n_sig
    return report_from_counts(
        n_sig=n,
        n_clk=a * attacked.n_clk + b * n * baseline.gain,
        n_key=a * attacked.n_key + b * n * baseline.p_key,
        n_err=a * attacked.n_err + b * n * baseline.p_err,
        n_m1={s: a * attacked.n_m1[s] + b * n * baseline.m1[s] for s in SEQUENCES},
        n_m2={s: a * attacked.n_m2[s] + b * n * baseline.m2[s] for s in SEQUENCES},
        method="mixed",
    )


def extracted_key_ratio(tau_a: float, attacked: MetricsReport, baseline: NoAttackBaseline) -> Optional[float]:
    """Share of the sifted key that came from attacked rounds."""
    num = tau_a * attacked.n_key
    den = num + (1 - tau_a) * attacked.n_sig * baseline.p_key
    return num / den if den > 0 else None


def max_attack_fraction(attacked: MetricsReport, baseline: NoAttackBaseline,
                        th: Optional[Thresholds] = None, *, atol: float = 1e-6) -> float:
    """Largest ``tau_a`` for which the mixed link passes every active check.

    Each checked quantity is a ratio of functions affine in ``tau_a`` and so
    monotone; the feasible set is an interval starting at zero.
    """
    th = Thresholds(constraint_set=PARTIAL_CONSTRAINTS) if th is None else th
    g_ref = baseline.gain

    def ok(tau):
        return is_undetectable(mixed_metrics(tau, attacked, baseline), th, g_ref)

    if ok(1.0):
        return 1.0
    if not ok(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > atol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class PartialAttackResult:
    tau_a: float
    ext_k: Optional[float]
    mixed: MetricsReport


def partial_attack(attacked: MetricsReport, baseline: NoAttackBaseline,
                   th: Optional[Thresholds] = None) -> PartialAttackResult:
    tau = max_attack_fraction(attacked, baseline, th)
    return PartialAttackResult(tau, extracted_key_ratio(tau, attacked, baseline),
                               mixed_metrics(tau, attacked, baseline))
