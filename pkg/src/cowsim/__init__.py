"""Zero-error unambiguous-discrimination attack on coherent-one-way QKD.

Closed-form expected metrics of the attacked link (``metrics``), a
round-level Monte Carlo oracle (``mc``) and the feasibility analysis built
on them (``feasibility``).
"""
__version__ = "0.1.0"

from .model import (  # noqa: E402
    ChannelParams,
    EveParams,
    ProtocolParams,
    Scheme,
    Thresholds,
    ValidationError,
)
from .usd import conclusive_stats, usd_statistics  # noqa: E402
from .metrics import MetricsReport, evaluate  # noqa: E402

__all__ = [
    "ChannelParams",
    "EveParams",
    "ProtocolParams",
    "Scheme",
    "Thresholds",
    "ValidationError",
    "MetricsReport",
    "conclusive_stats",
    "evaluate",
    "usd_statistics",
]
