"""Round-level Monte Carlo of the attacked (and partially attacked) link.

The simulation is independent of the closed forms: it samples Alice's
signals and Eve's outcomes, groups them into blocks, trims each block to the
interval between its first and last vacuum pulse, and clicks Bob's detectors
slot by slot.

Reproducibility
---------------
Rounds are simulated in fixed-size chunks.  Chunk ``j`` of stream ``s`` owns
the counter-based generator keyed by ``(seed, s, j)`` and always starts a
fresh block, so every chunk is a pure function of its key.  Results are
reduced from exact integer moments and do not depend on the worker count.
A chunk runs until the first block that ends at or after its nominal size.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .metrics import MetricsReport
from .model import (
    SEQUENCES,
    TWO_SIGNAL_SEQUENCES,
    ChannelParams,
    EveParams,
    ProtocolParams,
    check,
    split_sequence,
)
from .usd import UsdStatistics

__all__ = [
    "Pulse",
    "PulseTrain",
    "Estimate",
    "McReport",
    "process_block",
    "simulate_attacked",
    "simulate_partial",
    "deviations",
    "DEFAULT_CHUNK",
]

DEFAULT_CHUNK = 1 << 18

STREAM_ATTACKED = 0
STREAM_UNATTACKED = 1


class Pulse(IntEnum):
    VAC = 0
    STRONG = 1


# Pulse pattern (slot1, slot2) of the signal Eve identified.
_IDENTIFIED = {0: (True, False), 1: (False, True), 2: (True, True)}


@dataclass(frozen=True)
class PulseTrain:
    """Pulses Eve resends for one block, two per round."""

    pulses: tuple

    def __post_init__(self):
        if len(self.pulses) % 2:
            raise ValueError("a pulse train holds whole rounds")

    def __len__(self):
        return len(self.pulses)

    def rounds(self):
        return [self.pulses[i:i + 2] for i in range(0, len(self.pulses), 2)]


def process_block(outcomes: Sequence[int], terminal: str = "inconclusive") -> PulseTrain:
    """Resend train of a block of conclusive ``outcomes`` (E-labels 0, 1, 2).

    Pulses outside the span from the first to the last vacuum become vacuum,
    coherent pulses inside it become STRONG, and the terminal round is a
    vacuum signal.  ``terminal`` (``"inconclusive"`` or ``"ignored"``) does not
    change the train; it is accepted for bookkeeping symmetry.
    """
    if terminal not in ("inconclusive", "ignored"):
        raise ValueError(f"unknown terminal {terminal!r}")
    flat = [c for e in outcomes for c in _IDENTIFIED[int(e)]]
    vac = [i for i, coh in enumerate(flat) if not coh]
    out = [Pulse.VAC] * len(flat)
    if vac:
        lo, hi = vac[0], vac[-1]
        for i in range(lo + 1, hi):
            if flat[i]:
                out[i] = Pulse.STRONG
    return PulseTrain(tuple(out) + (Pulse.VAC, Pulse.VAC))


# --------------------------------------------------------------------------
# Estimates


@dataclass(frozen=True)
class Estimate:
    """Ratio estimate ``numerator / denominator`` with a delta-method SE.

    Units are blocks for attacked rounds and single rounds otherwise.
    ``kind`` is ``"proportion"`` for ratios in [0, 1] and ``"contrast"`` for
    visibilities in [-1, 1].
    """

    value: Optional[float]
    se: Optional[float]
    numerator: int
    denominator: int
    kind: str = "proportion"

    def se_null(self, expected: float) -> float:
        """Binomial standard error of the estimate if ``expected`` were true."""
        if self.denominator == 0:
            return math.inf
        if self.kind == "contrast":
            var = 1 - expected * expected
        else:
            var = expected * (1 - expected)
        return math.sqrt(max(var, 0.0) / self.denominator)

    def z(self, expected: Optional[float]) -> Optional[float]:
        """Deviation from ``expected`` in standard errors.

        The scale is the larger of the delta-method SE and the binomial SE at
        ``expected``; with a handful of events the former collapses to zero.
        """
        if self.value is None or expected is None:
            return None
        scale = max(self.se or 0.0, self.se_null(expected))
        if scale == 0:
            return 0.0 if self.value == expected else math.copysign(math.inf, self.value - expected)
        return (self.value - expected) / scale


@dataclass(frozen=True)
class McReport:
    gain: Estimate
    qber: Estimate
    vis: dict
    vis_ave: Estimate
    counts: dict
    rounds: int
    units: int
    seed: int
    chunks: int
    tau_a: Optional[float] = None

    def estimates(self) -> dict:
        out = {"gain": self.gain, "qber": self.qber}
        out.update({f"v{s}": self.vis[s] for s in SEQUENCES})
        out["v_ave"] = self.vis_ave
        return out

    def to_dict(self) -> dict:
        est = {k: dict(value=v.value, se=v.se, numerator=v.numerator, denominator=v.denominator)
               for k, v in self.estimates().items()}
        return dict(estimates=est, counts=dict(self.counts), rounds=self.rounds, units=self.units,
                    seed=self.seed, chunks=self.chunks, tau_a=self.tau_a)


def deviations(mc: McReport, expected: MetricsReport) -> dict:
    """``(mc - expected) / se`` per metric; ``None`` when either side is undefined."""
    return {name: est.z(expected.metric(name)) for name, est in mc.estimates().items()}


# Ratio metrics and the per-unit count columns they are built from.
_COLUMNS = ["rounds", "clk", "key", "err"] + [f"m{x}_{s}" for s in SEQUENCES for x in (1, 2)]


def _ratio_pairs():
    pairs = {"gain": ("clk", "rounds"), "qber": ("err", "key")}
    for s in SEQUENCES:
        pairs[f"v{s}"] = (f"d_{s}", f"t_{s}")
    pairs["v_ave"] = ("d_ave", "t_ave")
    return pairs


_RATIOS = _ratio_pairs()


def _derived_columns(cols: dict) -> dict:
    out = dict(cols)
    for s in SEQUENCES:
        out[f"d_{s}"] = cols[f"m1_{s}"] - cols[f"m2_{s}"]
        out[f"t_{s}"] = cols[f"m1_{s}"] + cols[f"m2_{s}"]
    out["d_ave"] = sum(out[f"d_{s}"] for s in SEQUENCES)
    out["t_ave"] = sum(out[f"t_{s}"] for s in SEQUENCES)
    return out


def _moments(cols: dict) -> dict:
    """Exact integer moments ``(Sy, Sx, Syy, Sxx, Sxy, n)`` per ratio metric."""
    cols = _derived_columns(cols)
    n = len(cols["rounds"])
    out = {}
    for name, (yk, xk) in _RATIOS.items():
        y = cols[yk].astype(np.int64)
        x = cols[xk].astype(np.int64)
        out[name] = np.array([y.sum(), x.sum(), (y * y).sum(), (x * x).sum(), (x * y).sum(), n], dtype=np.int64)
    out["totals"] = np.array([int(cols[c].sum()) for c in _COLUMNS], dtype=np.int64)
    return out


def _merge(parts) -> dict:
    total = None
    for part in parts:
        if total is None:
            total = {k: v.copy() for k, v in part.items()}
        else:
            for k, v in part.items():
                total[k] += v
    return total


def _estimate(m, kind) -> Estimate:
    sy, sx, syy, sxx, sxy, n = (int(v) for v in m)
    if sx == 0:
        return Estimate(None, None, sy, sx, kind)
    r = sy / sx
    if n < 2:
        return Estimate(r, None, sy, sx, kind)
    # Residual sum of squares computed in exact integer arithmetic first.
    ss = (syy * sx * sx - 2 * sxy * sy * sx + sxx * sy * sy) / (sx * sx)
    var = max(ss, 0.0) / (sx * sx) * n / (n - 1)
    return Estimate(r, math.sqrt(var), sy, sx, kind)


def _report(total: dict, seed: int, chunks: int, tau_a=None) -> McReport:
    est = {name: _estimate(total[name], "proportion" if name in ("gain", "qber") else "contrast")
           for name in _RATIOS}
    counts = {c: int(v) for c, v in zip(_COLUMNS, total["totals"])}
    return McReport(
        gain=est["gain"],
        qber=est["qber"],
        vis={s: est[f"v{s}"] for s in SEQUENCES},
        vis_ave=est["v_ave"],
        counts=counts,
        rounds=counts["rounds"],
        units=int(total["gain"][5]),
        seed=seed,
        chunks=chunks,
        tau_a=tau_a,
    )


# --------------------------------------------------------------------------
# Sampling helpers


def _rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(stream, chunk))
    return np.random.Generator(np.random.Philox(ss))


def _alice(u: np.ndarray, priors) -> np.ndarray:
    p0, p1, _ = priors
    return (u >= p0).astype(np.int8) + (u >= p0 + p1)


def _monitor(xa, xb, u1, u2, pd1, pd2):
    """M1 / M2 clicks at a monitoring slot fed by resent pulses ``xa``, ``xb``."""
    strong = xa.astype(np.int8) + xb
    m1 = np.where(strong > 0, True, u1 < pd1)
    m2 = np.where(strong == 1, True, u2 < pd2)
    return m1, m2


def _sift(c1, c2, u_bit, alice):
    click = c1 | c2
    bit = np.where(c1 & c2, u_bit < 0.5, c2)
    key = click & (alice < 2)
    err = key & (bit != (alice == 1))
    return click, key, err


def _first_alice(seed, stream, chunk, priors):
    """Alice's first signal of a chunk, without simulating the chunk."""
    return _alice(np.array([_rng(seed, stream, chunk).random()]), priors)[0]


_N_UNIFORMS_ATTACK = 9
_N_UNIFORMS_PLAIN = 8


def _attacked_segment(p: ProtocolParams, table: np.ndarray, m_max: int, rng, target: int, next_alice):
    """Simulate blocks until the first terminal at or after ``target - 1``.

    ``next_alice`` is the first signal of the following segment (a fresh
    block, so its first pulse is vacuum) or ``None`` to drop that pair.
    Returns per-block count columns.
    """
    n = target + m_max + 1
    u = rng.random((_N_UNIFORMS_ATTACK, n))
    alice = _alice(u[0], p.priors)
    cum = np.cumsum(table, axis=0)[:3]  # cum[j, i]
    eve = (u[1][None, :] >= cum[:, alice]).sum(axis=0)
    conc = eve < 3

    # Block segmentation: inside a run of conclusive rounds every
    # (m_max + 1)-th round is the ignored terminal of a capped block.
    idx = np.arange(n)
    last_stop = np.maximum.accumulate(np.where(conc, -1, idx))
    pos = idx - last_stop - 1
    terminal = ~conc | (pos % (m_max + 1) == m_max)
    cut = target - 1 + int(np.flatnonzero(terminal[target - 1:])[0])
    n = cut + 1
    alice, eve, terminal, u = alice[:n], eve[:n], terminal[:n], u[:, :n]

    ends = np.flatnonzero(terminal)
    starts = np.r_[0, ends[:-1] + 1]
    bid = np.cumsum(terminal) - terminal

    # Trim to the span between the first and last vacuum of each block.
    body = ~terminal
    coh = np.stack([body & (eve != 1), body & (eve != 0)], axis=1).ravel()
    vac = np.repeat(body, 2) & ~coh
    cv = np.r_[0, np.cumsum(vac)]
    before_block = cv[2 * starts]
    end_block = cv[2 * ends + 2]
    pb = np.repeat(bid, 2)
    i = np.arange(2 * n)
    strong = coh & (cv[i] - before_block[pb] > 0) & (end_block[pb] - cv[i + 1] > 0)
    x1, x2 = strong[0::2], strong[1::2]

    c1 = x1 | (u[2] < p.pd_data)
    c2 = x2 | (u[3] < p.pd_data)
    click, key, err = _sift(c1, c2, u[4], alice)

    cols = {"rounds": np.ones(n, dtype=np.int64), "clk": click, "key": key, "err": err}
    m1, m2 = _monitor(x1, x2, u[5], u[6], p.pd_m1, p.pd_m2)
    decoy = alice == 2
    cols["m1_2"], cols["m2_2"] = m1 & decoy, m2 & decoy

    # Slot between round r and round r + 1 (the next segment for the last round).
    xb = np.r_[x1[1:], False]
    nxt = np.r_[alice[1:], -1 if next_alice is None else next_alice]
    m1, m2 = _monitor(x2, xb, u[7], u[8], p.pd_m1, p.pd_m2)
    for s in TWO_SIGNAL_SEQUENCES:
        s1, s2 = split_sequence(s)
        hit = (alice == s1) & (nxt == s2)
        cols[f"m1_{s}"], cols[f"m2_{s}"] = m1 & hit, m2 & hit

    return {k: np.add.reduceat(v.astype(np.int64), starts) for k, v in cols.items()}


def _unattacked_segment(p: ProtocolParams, eta_ch: float, rng, n: int):
    """Legitimate-channel rounds; every round is its own unit."""
    u = rng.random((_N_UNIFORMS_PLAIN, n))
    alice = _alice(u[0], p.priors)
    x = p.eta_b * eta_ch * p.t_b * p.mu
    p_coh = 1 - (1 - p.pd_data) * math.exp(-x)
    pr1 = np.where(alice != 1, p_coh, p.pd_data)
    pr2 = np.where(alice != 0, p_coh, p.pd_data)
    c1 = u[1] < pr1
    c2 = u[2] < pr2
    click, key, err = _sift(c1, c2, u[3], alice)
    cols = {"rounds": np.ones(n, dtype=np.int64), "clk": click, "key": key, "err": err}

    # Only monitored sequences are sampled.
    pm1 = 1 - (1 - p.pd_m1) * math.exp(-2 * p.eta_b * eta_ch * (1 - p.t_b) * p.mu)
    decoy = alice == 2
    cols["m1_2"] = decoy & (u[4] < pm1)
    cols["m2_2"] = decoy & (u[5] < p.pd_m2)
    nxt = np.r_[alice[1:], -1]
    m1 = u[6] < pm1
    m2 = u[7] < p.pd_m2
    for s in TWO_SIGNAL_SEQUENCES:
        s1, s2 = split_sequence(s)
        hit = (alice == s1) & (nxt == s2)
        cols[f"m1_{s}"], cols[f"m2_{s}"] = m1 & hit, m2 & hit
    return {k: v.astype(np.int64) for k, v in cols.items()}


# --------------------------------------------------------------------------
# Drivers


@dataclass(frozen=True)
class _Job:
    p: ProtocolParams
    table: np.ndarray
    m_max: int
    seed: int
    chunk_size: int
    n_chunks: int
    tau_a: float = 1.0
    eta_ch: Optional[float] = None
    attacked_len: int = field(init=False, default=0)

    def __post_init__(self):
        object.__setattr__(self, "attacked_len", int(round(self.tau_a * self.chunk_size)))


def _run_chunk(job: _Job, j: int) -> dict:
    parts = []
    plain = job.chunk_size - job.attacked_len
    if job.attacked_len > 0:
        next_alice = None
        # Pairs cross a chunk border only when the next round is attacked too.
        if plain == 0 and j + 1 < job.n_chunks:
            next_alice = _first_alice(job.seed, STREAM_ATTACKED, j + 1, job.p.priors)
        rng = _rng(job.seed, STREAM_ATTACKED, j)
        parts.append(_moments(_attacked_segment(job.p, job.table, job.m_max, rng, job.attacked_len, next_alice)))
    if plain > 0:
        rng = _rng(job.seed, STREAM_UNATTACKED, j)
        parts.append(_moments(_unattacked_segment(job.p, job.eta_ch, rng, plain)))
    return _merge(parts)


def _run(job: _Job, shards: int) -> dict:
    chunks = range(job.n_chunks)
    if shards <= 1 or job.n_chunks == 1:
        results = [_run_chunk(job, j) for j in chunks]
    else:
        with ProcessPoolExecutor(max_workers=shards) as pool:
            results = list(pool.map(_run_chunk, [job] * job.n_chunks, chunks))
    return _merge(results)


def _layout(n_rounds: int, chunk_size: int) -> tuple[int, int]:
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    size = min(chunk_size, n_rounds)
    return size, -(-n_rounds // size)


def _check_seed(seed) -> int:
    if seed is None or isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError("an explicit non-negative integer seed is required")
    return int(seed)


def simulate_attacked(p: ProtocolParams, u: UsdStatistics, e: EveParams, n_rounds: int, seed: int,
                      *, chunk_size: int = DEFAULT_CHUNK, shards: int = 1) -> McReport:
    """Simulate at least ``n_rounds`` fully attacked rounds."""
    check(p, e)
    seed = _check_seed(seed)
    size, n_chunks = _layout(n_rounds, chunk_size)
    job = _Job(p=p, table=np.asarray(u.p), m_max=e.m_max, seed=seed, chunk_size=size, n_chunks=n_chunks)
    return _report(_run(job, shards), seed, n_chunks)


def simulate_partial(p: ProtocolParams, ch: ChannelParams, u: UsdStatistics, e: EveParams, tau_a: float,
                     n_rounds: int, seed: int, *, chunk_size: int = DEFAULT_CHUNK, shards: int = 1) -> McReport:
    """Attack the leading ``tau_a`` share of every chunk, leave the rest alone.

    Segments are long and contiguous; no monitoring slot spans two segments.
    """
    check(p, e, ch)
    if not 0 <= tau_a <= 1:
        raise ValueError("tau_a must lie in [0, 1]")
    seed = _check_seed(seed)
    size, n_chunks = _layout(n_rounds, chunk_size)
    job = _Job(p=p, table=np.asarray(u.p), m_max=e.m_max, seed=seed, chunk_size=size,
               n_chunks=n_chunks, tau_a=tau_a, eta_ch=ch.transmittance)
    return _report(_run(job, shards), seed, n_chunks, tau_a=tau_a)
