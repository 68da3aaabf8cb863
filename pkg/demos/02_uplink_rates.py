"""Compare Monte-Carlo uplink rates with the large-scale (RM) approximations.

The RM engines need only large-scale statistics, so they are cheap enough
to drive power control; this demo shows how close they land.
"""
import time

import numpy as np

from cfiot.channel import generate_pilots
from cfiot.estimator import projection_vectors
from cfiot.netgen import NetworkConfig, generate_network
from cfiot.ul_sinr import achievable_rate_mc, rm_ap1, rm_ap2

cfg = NetworkConfig(M=128, K=16, tau=16, area_side_m=354.0, seed=7)
net = generate_network(cfg)
psi = generate_pilots(cfg.K, cfg.tau, seed=8)
_, gamma = projection_vectors(psi, net.beta, cfg.rho_p)
eta = np.ones(cfg.K)

t0 = time.perf_counter()
mmse, _ = achievable_rate_mc(net.beta, psi, eta, cfg.rho_u, cfg.rho_p, n_draws=100, seed=9)
mr, _ = achievable_rate_mc(net.beta, psi, eta, cfg.rho_u, cfg.rho_p, n_draws=100, seed=9, receiver="mr")
t_mc = time.perf_counter() - t0
t0 = time.perf_counter()
ap1 = np.log2(1 + rm_ap1(gamma, net.beta, eta, cfg.rho_u)[0])
ap2 = np.log2(1 + rm_ap2(gamma, net.beta, eta, cfg.rho_u)[0])
t_rm = time.perf_counter() - t0

print("device  MMSE(MC)   MR(MC)   RM-AP1   RM-AP2   [bit/s/Hz]")
for k in range(cfg.K):
    print(f"{k:6d}  {mmse[k]:8.3f} {mr[k]:8.3f} {ap1[k]:8.3f} {ap2[k]:8.3f}")
print(f"median AP1/MC {np.median(ap1 / mmse):.3f}, AP2/MC {np.median(ap2 / mmse):.3f}, "
      f"MMSE/MR {np.median(mmse / mr):.2f}")
print(f"Monte Carlo took {t_mc:.2f} s, both RM evaluations {t_rm * 1e3:.1f} ms")
