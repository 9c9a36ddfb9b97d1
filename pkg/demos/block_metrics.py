"""Closed forms versus the recursion evaluator, and the block cap m_max.

Both evaluators return the same per-block counts; the cap on conclusive
outcomes per block costs gain at high intensity and matters little beyond
m_max = 10.
"""
from dataclasses import replace

from cowsim import EveParams, ProtocolParams, evaluate

p = ProtocolParams()
for scheme in ("usd1", "usd2"):
    e = EveParams.with_epsilon(0.002, scheme)
    a, b = evaluate(p, e), evaluate(p, e, method="recursion")
    worst = max(abs(a.aggregates()[k] - v) / abs(v) for k, v in b.aggregates().items() if v)
    print(f"{scheme}: closed form vs recursion, worst relative gap {worst:.1e}")

q = replace(p, mu=1.0)
print(f"\n{'m_max':>7} {'gain usd1':>11} {'gain usd2':>11}")
for m in (1, 2, 5, 10, 10 ** 6):
    g = [evaluate(q, replace(EveParams.with_epsilon(0.002, s), m_max=m)).gain for s in ("usd1", "usd2")]
    print(f"{m:7d} {g[0]:11.5f} {g[1]:11.5f}")
