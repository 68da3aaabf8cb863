import numpy as np
import pytest

from cfiot.channel import draw_channel, generate_pilots, receive_pilots
from cfiot.estimator import estimate_channels
from cfiot.netgen import NetworkConfig, generate_network


def make_instance(M=16, K=4, tau=4, D=300.0, seed=0, sigma=8.0):
    """Small uplink instance: large-scale fading, pilots and one estimate."""
    cfg = NetworkConfig(M=M, K=K, tau=tau, area_side_m=D, sigma_sh_db=sigma, seed=seed)
    net = generate_network(cfg)
    psi = generate_pilots(K, tau, seed + 1)
    g = draw_channel(net.beta, seed=seed + 2).g
    y = receive_pilots(psi, g, cfg.rho_p, seed=seed + 3)
    est = estimate_channels(y, psi, net.beta, cfg.rho_p)
    return {"cfg": cfg, "beta": net.beta, "psi": psi, "g": g, "y": y, "g_hat": est.g_hat,
            "gamma": est.gamma, "a": est.a, "rho_u": cfg.rho_u, "rho_p": cfg.rho_p,
            "rho_d": cfg.rho_d}


@pytest.fixture
def inst():
    return make_instance()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
