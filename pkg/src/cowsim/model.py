"""Parameter records, validation and the no-attack (legitimate channel) model.

All records are frozen dataclasses.  Angles are radians, intensities are mean
photon numbers and every probability is a plain float in [0, 1].
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Optional, Union

__all__ = [
    "Scheme",
    "ProtocolParams",
    "ChannelParams",
    "EveParams",
    "Thresholds",
    "ValidationError",
    "SEQUENCES",
    "TWO_SIGNAL_SEQUENCES",
    "CONSTRAINTS",
    "validate",
    "check",
    "channel_transmittance",
    "gain_no_attack",
    "no_attack_key_probs",
    "no_attack_monitor_probs",
    "sequence_probability",
    "split_sequence",
]

# Monitored sequences.  A two-signal label "s2s1" means Alice sent s1 first,
# then s2; the interfering pulses are the last of s1 and the first of s2.
SEQUENCES = ("2", "01", "02", "21", "22")
TWO_SIGNAL_SEQUENCES = SEQUENCES[1:]

CONSTRAINTS = frozenset({"qber", "v_ave", "v_s", "gain"})


class ValidationError(ValueError):
    """Raised with every violation found in one or more parameter records."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class Scheme(str, enum.Enum):
    USD1 = "usd1"
    USD2 = "usd2"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValidationError([f"unknown scheme {value!r} (expected usd1 or usd2)"]) from None


@dataclass(frozen=True)
class ProtocolParams:
    """Alice's source and Bob's receiver.

    ``mu`` is the mean photon number of a coherent pulse, ``f`` the decoy
    probability, ``t_b`` the data/monitoring splitter transmittance and
    ``eta_b`` Bob's detector efficiency.  Dark-count probabilities are per
    time slot.
    """

    mu: float = 0.1
    f: float = 0.155
    t_b: float = 0.9
    eta_b: float = 0.6
    pd_data: float = 1e-7
    pd_m1: float = 1e-7
    pd_m2: float = 1e-7

    @property
    def priors(self) -> tuple[float, float, float]:
        """Preparation probabilities of the signals 0, 1 and 2 (decoy)."""
        q = (1.0 - self.f) / 2.0
        return (q, q, self.f)


@dataclass(frozen=True)
class ChannelParams:
    """Channel loss, given directly or as attenuation times distance."""

    eta_ch: Optional[float] = None
    alpha_ch: Optional[float] = None
    d: Optional[float] = None

    @property
    def transmittance(self) -> float:
        if self.eta_ch is not None:
            return self.eta_ch
        return channel_transmittance(self.alpha_ch, self.d)

    @classmethod
    def fiber(cls, d: float, alpha_ch: float = 0.2) -> "ChannelParams":
        return cls(alpha_ch=alpha_ch, d=d)


@dataclass(frozen=True)
class EveParams:
    """Eve's receiver and its imperfections.

    ``bs_t`` is the transmittance of the beamsplitter that approximates the
    displacement, ``phi`` the phase offset (radians), ``delta`` the relative
    intensity error of the local pulses, ``t1``..``t4`` the mode-overlap
    fractions.  ``t3`` and ``t4`` belong to the 50:50 beamsplitter of USD2 and
    are ``None`` for USD1.
    """

    scheme: Scheme = Scheme.USD1
    m_max: int = 10
    bs_t: float = 0.99
    phi: float = math.radians(1.0)
    delta: float = 0.05
    eta_e: float = 0.6
    pd_e: float = 1e-7
    t1: float = 1.0
    t2: float = 1.0
    t3: Optional[float] = None
    t4: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))

    @classmethod
    def with_epsilon(cls, epsilon: float, scheme=Scheme.USD1, **kwargs) -> "EveParams":
        """Uniform mode mismatch: every overlap fraction set to ``1 - epsilon``."""
        scheme = Scheme.parse(scheme)
        t = 1.0 - epsilon
        extra = dict(t3=t, t4=t) if scheme is Scheme.USD2 else {}
        return cls(scheme=scheme, t1=t, t2=t, **extra, **kwargs)

    @property
    def epsilon(self) -> Optional[float]:
        """``1 - t`` when all relevant overlaps are equal, otherwise ``None``."""
        ts = [self.t1, self.t2]
        if self.scheme is Scheme.USD2:
            ts += [self.t3_eff, self.t4_eff]
        if all(t == ts[0] for t in ts):
            # Undo the rounding of 1 - (1 - epsilon).
            return float(f"{1.0 - ts[0]:.12g}")
        return None

    @property
    def t3_eff(self) -> float:
        return 1.0 if self.t3 is None else self.t3

    @property
    def t4_eff(self) -> float:
        return 1.0 if self.t4 is None else self.t4


@dataclass(frozen=True)
class Thresholds:
    """Acceptance thresholds and the set of active constraints.

    Constraint names: ``qber``, ``v_ave``, ``v_s`` (every per-sequence
    visibility) and ``gain`` (attacked gain must reach the legitimate gain).
    """

    qber_th: float = 0.05
    vis_th: float = 0.95
    constraint_set: frozenset = field(default_factory=lambda: frozenset({"qber", "v_ave", "gain"}))

    def __post_init__(self):
        object.__setattr__(self, "constraint_set", frozenset(self.constraint_set))

    def with_constraints(self, *names: str) -> "Thresholds":
        return Thresholds(self.qber_th, self.vis_th, frozenset(names))


Record = Union[ProtocolParams, ChannelParams, EveParams, Thresholds]


def _prob(name, value, out, *, closed_high=True, open_low=False):
    if value is None or not isinstance(value, (int, float)) or math.isnan(value):
        out.append(f"{name} must be a number")
        return
    lo_ok = value > 0 if open_low else value >= 0
    hi_ok = value <= 1 if closed_high else value < 1
    if not (lo_ok and hi_ok):
        lo = "(0" if open_low else "[0"
        hi = "1]" if closed_high else "1)"
        out.append(f"{name} out of {lo},{hi}")


def validate(record: Record) -> list[str]:
    """Return every range violation of ``record`` (empty list when valid)."""
    out: list[str] = []
    if isinstance(record, ProtocolParams):
        if not (isinstance(record.mu, (int, float)) and math.isfinite(record.mu) and record.mu >= 0):
            out.append("mu must be finite and >= 0")
        if not (isinstance(record.f, (int, float)) and 0 <= record.f < 1):
            out.append("f out of (0,1)")
        _prob("t_b", record.t_b, out, open_low=True)
        _prob("eta_b", record.eta_b, out, open_low=True)
        for name in ("pd_data", "pd_m1", "pd_m2"):
            _prob(name, getattr(record, name), out, closed_high=False)
    elif isinstance(record, ChannelParams):
        given_eta = record.eta_ch is not None
        given_loss = record.alpha_ch is not None or record.d is not None
        if given_eta and given_loss:
            out.append("channel is ambiguous: give either eta_ch or (alpha_ch, d), not both")
        elif given_eta:
            _prob("eta_ch", record.eta_ch, out, open_low=True)
        elif given_loss:
            if record.alpha_ch is None or record.d is None:
                out.append("channel needs both alpha_ch and d")
            else:
                if not record.alpha_ch >= 0:
                    out.append("alpha_ch must be >= 0")
                if not record.d >= 0:
                    out.append("d must be >= 0")
        else:
            out.append("channel needs eta_ch or (alpha_ch, d)")
    elif isinstance(record, EveParams):
        if not (isinstance(record.m_max, int) and not isinstance(record.m_max, bool) and record.m_max >= 1):
            out.append("m_max must be an integer >= 1")
        _prob("bs_t", record.bs_t, out, open_low=True)
        if not (isinstance(record.phi, (int, float)) and math.isfinite(record.phi)):
            out.append("phi must be finite")
        if not (isinstance(record.delta, (int, float)) and math.isfinite(record.delta)):
            out.append("delta must be finite")
        elif record.delta < -1:
            out.append("delta below -1")
        _prob("eta_e", record.eta_e, out, open_low=True)
        _prob("pd_e", record.pd_e, out, closed_high=False)
        _prob("t1", record.t1, out)
        _prob("t2", record.t2, out)
        if record.scheme is Scheme.USD1:
            for name in ("t3", "t4"):
                v = getattr(record, name)
                if v is not None and v != 1:
                    out.append(f"{name} is not used by usd1 and must be unset or 1")
        else:
            _prob("t3", record.t3_eff, out)
            _prob("t4", record.t4_eff, out)
    elif isinstance(record, Thresholds):
        _prob("qber_th", record.qber_th, out, open_low=True, closed_high=False)
        _prob("vis_th", record.vis_th, out, open_low=True, closed_high=False)
        if not record.constraint_set:
            out.append("constraint_set must not be empty")
        unknown = set(record.constraint_set) - CONSTRAINTS
        if unknown:
            out.append(f"unknown constraints {sorted(unknown)}")
    else:
        out.append(f"cannot validate {type(record).__name__}")
    return out


def check(*records: Record) -> None:
    """Raise :class:`ValidationError` listing all violations of ``records``."""
    problems = [v for r in records for v in validate(r)]
    if problems:
        raise ValidationError(problems)


def channel_transmittance(alpha_ch: float, d: float) -> float:
    """Fiber transmittance ``10**(-alpha_ch * d / 10)`` (dB/km times km)."""
    if alpha_ch is None or d is None or alpha_ch < 0 or d < 0:
        raise ValidationError([f"alpha_ch and d must be >= 0 (got {alpha_ch}, {d})"])
    return 10.0 ** (-alpha_ch * d / 10.0)


def _data_exponent(p: ProtocolParams, eta_ch: float) -> float:
    return p.eta_b * eta_ch * p.t_b * p.mu


def gain_no_attack(p: ProtocolParams, eta_ch: float) -> float:
    """Probability of at least one data-line click per round without Eve."""
    x = _data_exponent(p, eta_ch)
    # 1 - light * dark, split so that neither factor is formed as 1 - (~1).
    light = (1 - p.f) * math.exp(-x) + p.f * math.exp(-2 * x)
    lit = -((1 - p.f) * math.expm1(-x) + p.f * math.expm1(-2 * x))
    return lit + light * p.pd_data * (2 - p.pd_data)


def no_attack_key_probs(p: ProtocolParams, eta_ch: float) -> tuple[float, float]:
    """Per-round probabilities of a sifted bit and of an erroneous sifted bit."""
    x = _data_exponent(p, eta_ch)
    pd = p.pd_data
    p_key = (1 - p.f) * (-math.expm1(-x) + math.exp(-x) * pd * (2 - pd))
    p_err = (1 - p.f) * (1 + (1 - pd) * math.exp(-x)) * pd / 2
    return p_key, p_err


def split_sequence(s: str) -> tuple[int, int]:
    """``"s2s1"`` -> ``(s1, s2)``: the earlier signal first."""
    return int(s[1]), int(s[0])


def sequence_probability(p: ProtocolParams, s: str) -> float:
    """Probability that Alice prepares the monitored sequence ``s``."""
    pri = p.priors
    if s == "2":
        return pri[2]
    if s not in TWO_SIGNAL_SEQUENCES:
        raise ValueError(f"unknown sequence label {s!r}")
    s1, s2 = split_sequence(s)
    return pri[s1] * pri[s2]


def no_attack_monitor_probs(p: ProtocolParams, eta_ch: float, s: str) -> tuple[float, float]:
    """Joint probabilities that ``s`` is sent and M1 / M2 clicks at its slot."""
    if s not in SEQUENCES:
        raise ValueError(f"unknown sequence label {s!r}")
    w = sequence_probability(p, s)
    y = 2 * p.eta_b * eta_ch * (1 - p.t_b) * p.mu
    m1 = -math.expm1(-y) + math.exp(-y) * p.pd_m1
    return w * m1, w * p.pd_m2


def _field_names(cls) -> list[str]:
    return [f.name for f in fields(cls)]
