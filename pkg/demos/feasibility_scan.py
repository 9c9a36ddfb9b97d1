"""Smallest undetectable intensity and the resulting key-rate bound.

For an ideal receiver the bound falls quadratically with channel
transmittance; with reference devices mu_max stops depending on it at high loss.
"""
import numpy as np

from cowsim import EveParams, ProtocolParams
from cowsim.feasibility import mu_max

scenarios = {
    "ideal": (ProtocolParams(eta_b=1.0, pd_data=0.0, pd_m1=0.0, pd_m2=0.0),
              EveParams.with_epsilon(0.002, "usd1", bs_t=1.0, phi=0.0, delta=0.0, eta_e=1.0, pd_e=0.0)),
    "reference": (ProtocolParams(), EveParams.with_epsilon(0.002, "usd1")),
}
print(f"{'eta_ch':>9} " + " ".join(f"{n + ' mu_max':>15} {n + ' K_max':>15}" for n in scenarios))
for eta in np.logspace(-4, -1, 7):
    cells = []
    for p, e in scenarios.values():
        r = mu_max(p, e, eta)
        cells += [f"{r.mu_max:15.4g}", f"{r.k_max:15.4g}"]
    print(f"{eta:9.2e} " + " ".join(cells))
