"""An ideal unambiguous measurement leaves no trace on Bob's side.

Eve identifies data pulses with probability 1 - exp(-mu) and never errs, so
the blocks she resends reproduce Alice's bits exactly.  Adding a small state
overlap (epsilon) opens a few errors and a visibility drop.
"""
from cowsim import EveParams, ProtocolParams, evaluate, usd_statistics

p = ProtocolParams(pd_data=0.0, pd_m1=0.0, pd_m2=0.0)
ideal = EveParams.with_epsilon(0.0, "usd1", bs_t=1.0, phi=0.0, delta=0.0, eta_e=1.0, pd_e=0.0)

u = usd_statistics(ideal, p.mu)
print("p(E_j | A_i), rows E0..E3, columns signal 0, 1, decoy")
print(u.p.round(6))

print(f"\n{'epsilon':>8} {'gain':>10} {'qber':>10} {'V01':>8} {'V_ave':>8}")
for eps in (0.0, 0.002, 0.01):
    e = EveParams.with_epsilon(eps, "usd1", bs_t=1.0, phi=0.0, delta=0.0, eta_e=1.0, pd_e=0.0)
    m = evaluate(p, e)
    print(f"{eps:8.3f} {m.gain:10.3e} {m.qber:10.3e} {m.vis['01']:8.4f} {m.vis_ave:8.4f}")
