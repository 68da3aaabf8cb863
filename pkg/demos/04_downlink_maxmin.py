"""Downlink max-min power control with per-AP budgets.

The optimum comes from bisection over cone feasibility problems; fixing
each AP's total power turns the problem into a single cone program.
"""
import numpy as np

from cfiot.channel import generate_pilots
from cfiot.dl_power import maxmin_bisection, maxmin_fixed_p, uniform_power
from cfiot.dl_sinr import dl_sinr_iot, dl_sinr_orth
from cfiot.estimator import projection_vectors
from cfiot.netgen import NetworkConfig, generate_network

cfg = NetworkConfig(M=32, K=8, tau=8, area_side_m=122.47, seed=21)
net = generate_network(cfg)
psi = generate_pilots(cfg.K, cfg.tau, seed=22)
a, gamma = projection_vectors(psi, net.beta, cfg.rho_p)

res = maxmin_bisection(gamma, net.beta, cfg.rho_d)
print(f"optimal max-min SINR {res.t_star:.3g} after {res.bisection_steps} bisection steps")
print("per-AP power used:", np.round(res.p_opt, 3))
print(f"APs at full budget: {int(np.sum(res.p_opt > 0.999))} of {cfg.M}")

_, t_fixed = maxmin_fixed_p(res.p_opt, gamma, net.beta, cfg.rho_d)
print(f"re-solving with those AP powers fixed gives {t_fixed:.3g}")

for label, alloc in (("uniform, full power", uniform_power(np.ones(cfg.M), gamma)),
                     ("uniform, optimal AP powers", uniform_power(res.p_opt, gamma)),
                     ("max-min optimum", res.eta)):
    orth = dl_sinr_orth(alloc.eta, gamma, net.beta, cfg.rho_d)
    iot = dl_sinr_iot(alloc.eta, gamma, net.beta, a, psi, cfg.rho_d, cfg.rho_p)
    print(f"{label:28s} min rate {np.log2(1 + orth.min()):.3f} (orth. form), "
          f"{np.log2(1 + iot.min()):.3f} (random pilots)")
