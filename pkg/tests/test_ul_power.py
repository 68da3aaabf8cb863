import numpy as np
import pytest
from scipy.optimize import brentq

from cfiot.errors import ConfigError, InfeasibleError
from cfiot.ul_power import (ControlWeights, build_weights, exact_interference,
                            interference_function_probe, local_optimality_probe, maxmin_exact,
                            maxmin_rm, rm_interference, select_dropped, target_exact, target_rm,
                            ul_energy_efficiency)
from cfiot.ul_sinr import achievable_rate_mc, exact_sinr_mmse, rm_ap1

from conftest import make_instance


def _spread(x):
    return (x.max() - x.min()) / x.max()


def test_build_weights_examples():
    assert np.allclose(build_weights(5).u, 1 / np.sqrt(5))
    assert np.allclose(build_weights(2, K_p=1, u_p=0.0, poor=[0]).u, [0, 1])
    w = build_weights(40, K_p=4, u_p=1e-8)
    assert w.u[-1] == pytest.approx(np.sqrt(1 / 36), abs=1e-12)
    assert np.linalg.norm(w.u) == pytest.approx(1, abs=1e-12)
    with pytest.raises(ConfigError):
        build_weights(3, K_p=3)
    with pytest.raises(ConfigError):
        build_weights(4, K_p=1, u_p=0.6)
    with pytest.raises(ConfigError):
        ControlWeights(np.ones(3), np.ones(3))


def test_select_dropped():
    assert select_dropped(np.array([0.2, 0.9, 0.5, 1.0]), 2).tolist() == [1, 3]


def test_energy_efficiency_examples():
    assert ul_energy_efficiency(np.full(4, 2.0), np.ones(4), 20.0) == pytest.approx(2.0 / 20)
    eta = np.array([0.2, 0.6, 1.0])
    r = np.array([1.0, 2.0, 3.0])
    assert ul_energy_efficiency(r, eta / 2, 20) == pytest.approx(2 * ul_energy_efficiency(r, eta, 20))
    with pytest.raises(ConfigError):
        ul_energy_efficiency(r, np.zeros(3), 20)
    with pytest.raises(ConfigError):
        ul_energy_efficiency(-r, eta, 20)


def test_single_device_full_power():
    x = make_instance(M=8, K=1, tau=1)
    assert maxmin_exact(x["g_hat"], x["gamma"], x["beta"], rho_u=x["rho_u"]).eta.tolist() == [1.0]
    assert maxmin_rm(x["gamma"], x["beta"], rho_u=x["rho_u"]).eta.tolist() == [1.0]


@pytest.mark.parametrize("seed", range(4))
def test_maxmin_exact_equalizes(seed):
    x = make_instance(M=24, K=5, tau=4, D=600, seed=seed)
    res = maxmin_exact(x["g_hat"], x["gamma"], x["beta"], rho_u=x["rho_u"])
    assert res.converged and res.eta.max() == pytest.approx(1, abs=1e-6)
    assert np.all((res.eta >= 0) & (res.eta <= 1))
    sinr = exact_sinr_mmse(x["g_hat"], x["gamma"], x["beta"], res.eta, x["rho_u"])
    assert _spread(sinr) <= 1e-4

    def metric(e):
        return exact_sinr_mmse(x["g_hat"], x["gamma"], x["beta"], e, x["rho_u"])
    assert local_optimality_probe(res.eta, metric, seed=seed) <= 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_maxmin_rm_equalizes(seed):
    x = make_instance(M=24, K=5, tau=4, D=600, seed=seed)
    res = maxmin_rm(x["gamma"], x["beta"], rho_u=x["rho_u"])
    assert res.iterations <= 200
    assert res.eta.max() == pytest.approx(1, abs=1e-6)
    assert _spread(rm_ap1(x["gamma"], x["beta"], res.eta, x["rho_u"])[0]) <= 1e-4

    def metric(e):
        return rm_ap1(x["gamma"], x["beta"], e, x["rho_u"])[0]
    assert local_optimality_probe(res.eta, metric, seed=seed) <= 1e-9


def test_weighted_maxmin_drops_device():
    x = make_instance(M=24, K=5, tau=4, D=600, seed=1)
    base = maxmin_exact(x["g_hat"], x["gamma"], x["beta"], rho_u=x["rho_u"])
    poor = select_dropped(base.eta, 1)
    w = build_weights(5, u_p=1e-8, poor=poor)
    res = maxmin_exact(x["g_hat"], x["gamma"], x["beta"], w, rho_u=x["rho_u"])
    assert res.eta[poor[0]] <= 1e-6
    good = np.setdiff1d(np.arange(5), poor)
    assert _spread(res.achieved[good]) <= 1e-4
    assert res.achieved[good].min() >= base.achieved.min()


def test_maxmin_symmetric_devices():
    # swapping both APs and devices maps the instance onto itself
    a, b = 1e-4 * (0.8 + 0.3j), 1e-4 * (0.2 - 0.5j)
    g_hat = np.array([[a, b], [b, a]])
    beta = np.array([[3e-8, 1e-8], [1e-8, 3e-8]])
    gamma = 0.6 * beta
    res = maxmin_exact(g_hat, gamma, beta, rho_u=1e10)
    assert res.eta[0] == pytest.approx(res.eta[1], abs=1e-6)
    res = maxmin_rm(gamma, beta, rho_u=1e10)
    assert res.eta[0] == pytest.approx(res.eta[1], abs=1e-6)


def test_desk_scale_maxmin_rm_lifts_low_quantile():
    x = make_instance(M=160, K=40, tau=40, D=1000, seed=2)
    res = maxmin_rm(x["gamma"], x["beta"], rho_u=x["rho_u"])
    kw = dict(rho_u=x["rho_u"], rho_p=x["rho_p"], n_draws=40, seed=5)
    pc, _ = achievable_rate_mc(x["beta"], x["psi"], res.eta, **kw)
    full, _ = achievable_rate_mc(x["beta"], x["psi"], np.ones(40), **kw)
    assert np.quantile(pc, 0.05) >= np.quantile(full, 0.05)


def test_target_exact_single_pass():
    x = make_instance(M=32, K=4, tau=4, D=500, seed=3)
    full = exact_sinr_mmse(x["g_hat"], x["gamma"], x["beta"], np.ones(4), x["rho_u"])
    S_t = 0.5 * full.min()
    res = target_exact(x["g_hat"], x["gamma"], x["beta"], S_t=S_t, rho_u=x["rho_u"])
    assert res.passes == 1
    assert np.allclose(res.achieved, S_t, rtol=1e-2)


def test_target_at_maxmin_level_reproduces_maxmin():
    # this instance contracts slowly (about 560 steps), hence the larger budget
    x = make_instance(M=32, K=4, tau=4, D=500, seed=3)
    mm = maxmin_exact(x["g_hat"], x["gamma"], x["beta"], rho_u=x["rho_u"], max_iter=5000)
    S = mm.achieved.min() * (1 - 1e-9)
    res = target_exact(x["g_hat"], x["gamma"], x["beta"], S_t=S, rho_u=x["rho_u"], max_iter=5000)
    assert np.allclose(res.eta, mm.eta, atol=1e-3)


def test_target_exact_drops_poor_device():
    x = make_instance(M=32, K=4, tau=4, D=700, seed=5)
    full = np.sort(exact_sinr_mmse(x["g_hat"], x["gamma"], x["beta"], np.ones(4), x["rho_u"]))
    S_t = np.sqrt(full[0] * full[1])  # only the weakest device misses the target at full power
    res = target_exact(x["g_hat"], x["gamma"], x["beta"], S_t=S_t, rho_u=x["rho_u"], u_p=1e-8)
    assert res.passes == 2 and res.dropped.size == 1
    assert res.eta[res.dropped[0]] <= 1e-6
    keep = np.setdiff1d(np.arange(4), res.dropped)
    assert np.allclose(res.achieved[keep], S_t, rtol=1e-2)
    assert np.all((res.eta >= 0) & (res.eta <= 1))


def test_target_rm_feasible_and_scalar_oracle():
    x = make_instance(M=32, K=4, tau=4, D=500, seed=3)
    full = rm_ap1(x["gamma"], x["beta"], np.ones(4), x["rho_u"])[0]
    S_t = 0.3 * full.min()
    res = target_rm(x["gamma"], x["beta"], S_t=S_t, rho_u=x["rho_u"])
    assert res.iterations <= 200
    assert np.allclose(rm_ap1(x["gamma"], x["beta"], res.eta, x["rho_u"])[0], S_t, rtol=1e-2)

    one = make_instance(M=16, K=1, tau=1, seed=2)
    top = rm_ap1(one["gamma"], one["beta"], [1.0], one["rho_u"])[0][0]
    S_t = 0.2 * top
    eta = target_rm(one["gamma"], one["beta"], S_t=S_t, rho_u=one["rho_u"]).eta[0]
    oracle = brentq(lambda e: rm_ap1(one["gamma"], one["beta"], [e], one["rho_u"])[0][0] - S_t,
                    1e-12, 1.0, xtol=1e-14)
    assert eta == pytest.approx(oracle, rel=1e-6)


def test_target_rm_infeasible_single_device():
    one = make_instance(M=16, K=1, tau=1, seed=2)
    top = rm_ap1(one["gamma"], one["beta"], [1.0], one["rho_u"])[0][0]
    with pytest.raises(InfeasibleError):
        target_rm(one["gamma"], one["beta"], S_t=2 * top, rho_u=one["rho_u"])
    with pytest.raises(InfeasibleError):
        target_exact(one["g_hat"], one["gamma"], one["beta"], S_t=1e9, rho_u=one["rho_u"])
    with pytest.raises(ConfigError):
        target_rm(one["gamma"], one["beta"], S_t=0.0, rho_u=one["rho_u"])


@pytest.mark.parametrize("engine", ["exact", "rm"])
def test_interference_properties(engine):
    x = make_instance(M=16, K=4, tau=4, seed=7)
    rep = interference_function_probe(engine, x, trials=100, seed=1)
    assert rep.ok, rep.witness


def test_interference_function_boundary_cases():
    x = make_instance(M=16, K=4, tau=4, seed=7)
    d = 10 ** np.random.default_rng(0).uniform(-2, 2, 4)
    f = exact_interference(d, x["g_hat"], x["gamma"], x["beta"], x["rho_u"], 0.5, u=np.full(4, 0.5))
    assert np.array_equal(1.0 * f, exact_interference(1.0 * d, x["g_hat"], x["gamma"], x["beta"],
                                                      x["rho_u"], 0.5, u=np.full(4, 0.5)))
    assert np.all(f > exact_interference(d / 2, x["g_hat"], x["gamma"], x["beta"], x["rho_u"], 0.5,
                                         u=np.full(4, 0.5)))
    l = np.full(16, 3.0)
    u = np.full(4, 0.5)
    q = rm_interference(l, x["gamma"], x["beta"], x["rho_u"], 1e-6, u, 0.1 * u)
    assert np.all(q > rm_interference(l / 2, x["gamma"], x["beta"], x["rho_u"], 1e-6, u, 0.1 * u))
    with pytest.raises(ConfigError):
        interference_function_probe("bogus", x)
