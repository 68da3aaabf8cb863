"""Learn per-AP powers with a tiny MLP and use them at a larger scale.

Each AP predicts its own power from its four strongest large-scale gains,
so the computation per AP does not grow with the network.
"""
import numpy as np

from cfiot.channel import generate_pilots
from cfiot.dl_power import maxmin_bisection, maxmin_fixed_p, uniform_power
from cfiot.dl_sinr import dl_sinr_orth
from cfiot.estimator import projection_vectors
from cfiot.mlp import build_dataset, predict_powers, train_lm
from cfiot.netgen import NetworkConfig, generate_network

train_cfg = NetworkConfig(M=32, K=8, tau=8, area_side_m=float(np.sqrt(0.015e6)))
print("solving 60 training realizations ...")
ds = build_dataset(train_cfg, 60, khat=4, seed=31)
model = train_lm(ds, init_seed=0, max_epochs=200)
print(f"{len(ds)} samples, validation RMSE {model.meta['val_rmse']:.3f}, stop: {model.meta['stop']}")

for M in (32, 128):
    cfg = NetworkConfig(M=M, K=M // 4, tau=M // 4, area_side_m=float(np.sqrt(0.03e6 * M / 64)),
                        wrap_around=False, seed=M)
    net = generate_network(cfg)
    _, gamma = projection_vectors(generate_pilots(cfg.K, cfg.tau, seed=M + 1), net.beta, cfg.rho_p)
    p_nn = predict_powers(model, net.beta)
    opt = maxmin_bisection(gamma, net.beta, cfg.rho_d)
    _, t_nn = maxmin_fixed_p(p_nn, gamma, net.beta, cfg.rho_d)

    def ee(p):
        s = dl_sinr_orth(uniform_power(p, gamma).eta, gamma, net.beta, cfg.rho_d)
        return np.log2(1 + s).sum() / p.sum()
    print(f"M={M:4d}: NN-powered max-min reaches {np.log2(1 + t_nn) / np.log2(1 + opt.t_star):.1%} "
          f"of the optimal min rate; uniform EE with NN powers is {ee(p_nn) / ee(np.ones(M)):.1f}x full power")
