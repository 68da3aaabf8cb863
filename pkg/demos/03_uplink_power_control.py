"""Uplink power control: max-min fairness and target-rate energy saving."""
import numpy as np

from cfiot.channel import draw_channel, generate_pilots, receive_pilots
from cfiot.errors import InfeasibleError
from cfiot.estimator import estimate_channels
from cfiot.netgen import NetworkConfig, generate_network
from cfiot.ul_power import maxmin_exact, maxmin_rm, target_exact, target_rm, ul_energy_efficiency
from cfiot.ul_sinr import exact_sinr_mmse

cfg = NetworkConfig(M=64, K=16, tau=16, area_side_m=632.5, seed=11)
net = generate_network(cfg)
psi = generate_pilots(cfg.K, cfg.tau, seed=12)
g = draw_channel(net.beta, seed=13).g
est = estimate_channels(receive_pilots(psi, g, cfg.rho_p, seed=14), psi, net.beta, cfg.rho_p)

full = exact_sinr_mmse(est.g_hat, est.gamma, net.beta, np.ones(cfg.K), cfg.rho_u)
print(f"full power: worst SINR {full.min():.3g}, best {full.max():.3g}")

for name, res in (("exact MMSE", maxmin_exact(est.g_hat, est.gamma, net.beta, rho_u=cfg.rho_u)),
                  ("RM approx.", maxmin_rm(est.gamma, net.beta, rho_u=cfg.rho_u))):
    print(f"max-min ({name}): common SINR {res.achieved.min():.3g} after {res.iterations} "
          f"iterations, powers in [{res.eta.min():.3f}, {res.eta.max():.3f}]")

ee_full = ul_energy_efficiency(np.log2(1 + full), np.ones(cfg.K), cfg.P_u_mw)
for R in (0.1, 0.01):
    S_t = 2 ** R - 1
    for name, fn in (("exact", lambda: target_exact(est.g_hat, est.gamma, net.beta, S_t=S_t, rho_u=cfg.rho_u)),
                     ("RM", lambda: target_rm(est.gamma, net.beta, S_t=S_t, rho_u=cfg.rho_u))):
        try:
            res = fn()
        except InfeasibleError as exc:
            print(f"target {R} bit/s/Hz ({name}): infeasible for devices {exc.devices}")
            continue
        ee = ul_energy_efficiency(np.log2(1 + res.achieved), res.eta, cfg.P_u_mw)
        print(f"target {R} bit/s/Hz ({name}): total power {res.eta.sum():.4f} of {cfg.K}, "
              f"EE {ee / ee_full:.1f}x full power, dropped {res.dropped.tolist()}")
