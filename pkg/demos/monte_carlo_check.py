"""Round-level simulation of the attacked link against the closed forms."""
from cowsim import EveParams, ProtocolParams, evaluate, usd_statistics
from cowsim.mc import deviations, simulate_attacked

p = ProtocolParams()
e = EveParams.with_epsilon(0.002, "usd2")
mc = simulate_attacked(p, usd_statistics(e, p.mu), e, 10_000_000, seed=1)
cf = evaluate(p, e)
z = deviations(mc, cf)
print(f"{mc.rounds} rounds in {mc.units} blocks")
print(f"{'metric':>7} {'monte carlo':>13} {'closed form':>13} {'z':>7}")
for name, est in mc.estimates().items():
    if est.value is not None:
        print(f"{name:>7} {est.value:13.6g} {cf.metric(name):13.6g} {z[name]:7.2f}")
