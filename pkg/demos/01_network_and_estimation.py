"""Drop a network, send pilots, and look at how good the channel estimates are.

Run: python3 demos/01_network_and_estimation.py
"""
import numpy as np

from cfiot.channel import draw_channel, generate_pilots, receive_pilots
from cfiot.estimator import estimate_channels, estimate_covariance_probe
from cfiot.netgen import NetworkConfig, generate_network

cfg = NetworkConfig(M=64, K=16, tau=16, area_side_m=500.0, seed=1)
net = generate_network(cfg)
print(f"{cfg.M} APs and {cfg.K} devices on a {cfg.area_side_m:.0f} m square (wrap-around on)")
print(f"large-scale gains span {10 * np.log10(net.beta.min()):.1f} to {10 * np.log10(net.beta.max()):.1f} dB")

# Random unit-norm pilots: with tau = K they are not orthogonal, so estimates are contaminated.
psi = generate_pilots(cfg.K, cfg.tau, seed=2)
g = draw_channel(net.beta, seed=3).g
y = receive_pilots(psi, g, cfg.rho_p, seed=4)
est = estimate_channels(y, psi, net.beta, cfg.rho_p)

quality = est.gamma / net.beta
print(f"estimate quality gamma/beta: median {np.median(quality):.3f}, worst {quality.min():.2e}")
nmse = np.mean(np.abs(g - est.g_hat) ** 2) / np.mean(np.abs(g) ** 2)
print(f"normalized estimation error on this draw: {nmse:.3f}")

# Longer pilots decorrelate the estimates of different devices at the same AP.
stats = estimate_covariance_probe(net.beta[0], cfg.rho_p, [16, 64, 256], n_trials=300, seed=5)
for tau, v in stats.items():
    print(f"  tau={tau:4d}: mean normalized cross-covariance {v:.4f}")
