"""Attack only part of the rounds and keep the checks within thresholds."""
from cowsim import EveParams, ProtocolParams, evaluate
from cowsim.feasibility import no_attack_baseline, partial_attack
from cowsim.model import channel_transmittance

p = ProtocolParams()
print(f"{'epsilon':>8} {'d km':>5} {'tau_a':>8} {'EXT_K':>8} {'qber':>8} {'V_ave':>8}")
for eps in (1e-4, 0.002, 0.004, 0.008):
    attacked = evaluate(p, EveParams.with_epsilon(eps, "usd1"))
    for d in (0, 50, 100):
        r = partial_attack(attacked, no_attack_baseline(p, channel_transmittance(0.2, d)))
        print(f"{eps:8.4f} {d:5d} {r.tau_a:8.4f} {r.ext_k:8.4f} {r.mixed.qber:8.4f} {r.mixed.vis_ave:8.4f}")
