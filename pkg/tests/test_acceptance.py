"""End-to-end acceptance criteria at desk scale.

Each test records one PASS/FAIL line, echoed in the terminal summary.
"""

import time
import tracemalloc

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from cfiot.channel import draw_channel, generate_pilots, orthonormal_pilots, receive_pilots
from cfiot.dl_power import REL_TOL, maxmin_bisection, maxmin_fixed_p, uniform_power
from cfiot.dl_sinr import dl_sinr_iot, dl_sinr_orth
from cfiot.estimator import estimate_channels, estimate_covariance_probe, projection_vectors
from cfiot.harness import ExperimentSpec, run_experiment
from cfiot.mlp import build_dataset, forward, predict_powers, realization_sample, save_model, top_khat, train_lm
from cfiot.netgen import NetworkConfig, generate_network
from cfiot.seeds import realization_seeds, substream
from cfiot.ul_power import (interference_function_probe, local_optimality_probe, maxmin_exact,
                            maxmin_rm, target_exact, target_rm)
from cfiot.ul_sinr import achievable_rate_mc, exact_sinr_mmse, rm_ap1

pytestmark = pytest.mark.slow


@pytest.fixture
def record(request):
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def _record(n, title, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]"
        lines.append(line)
        print(line)
        assert ok, line
    return _record


def _uplink(cfg, rs):
    """Network, pilots and one LMMSE estimate derived from a realization seed."""
    net = generate_network(cfg, seed=substream(rs, 0))
    psi = generate_pilots(cfg.K, cfg.tau, substream(rs, 1))
    rng = np.random.default_rng(substream(rs, 3))
    g = draw_channel(net.beta, seed=rng).g
    y = receive_pilots(psi, g, cfg.rho_p, seed=rng)
    est = estimate_channels(y, psi, net.beta, cfg.rho_p)
    return net, psi, est


def test_c01_rm_accuracy(record):
    # 128 APs on a 354 m square (about 1000 APs per km^2)
    cfg = NetworkConfig(M=128, K=16, tau=16, area_side_m=354.0, seed=101)
    med = {}
    for eng in ("mmse-mc", "rm-ap1", "rm-ap2"):
        b = run_experiment(ExperimentSpec("ul-rate-cdf", cfg, n_realizations=50, n_draws=200, ul_engine=eng))
        assert len(b.rows) == 800
        med[eng] = float(np.median(b.rates))
    e1 = abs(med["rm-ap1"] / med["mmse-mc"] - 1)
    e2 = abs(med["rm-ap2"] / med["mmse-mc"] - 1)
    e12 = abs(med["rm-ap1"] / med["rm-ap2"] - 1)
    record(1, "RM accuracy", e1 <= 0.10 and e2 <= 0.10 and e12 <= 0.05,
           f"AP1 {e1:.3%}, AP2 {e2:.3%} from MC; AP1 vs AP2 {e12:.3%}")


def test_c02_maxmin_equalization(record):
    cfg = NetworkConfig(M=40, K=8, tau=8, area_side_m=1000.0, seed=202)
    worst = {"spread": 0.0, "eta": 0.0, "probe": -np.inf, "iters": 0}
    for rs in realization_seeds(cfg.seed, 20):
        net, _, est = _uplink(cfg, rs)
        runs = (
            (maxmin_exact(est.g_hat, est.gamma, net.beta, rho_u=cfg.rho_u),
             lambda e: exact_sinr_mmse(est.g_hat, est.gamma, net.beta, e, cfg.rho_u)),
            (maxmin_rm(est.gamma, net.beta, rho_u=cfg.rho_u),
             lambda e: rm_ap1(est.gamma, net.beta, e, cfg.rho_u)[0]),
        )
        for res, metric in runs:
            s = metric(res.eta)
            worst["spread"] = max(worst["spread"], (s.max() - s.min()) / s.max())
            worst["eta"] = max(worst["eta"], abs(res.eta.max() - 1))
            worst["iters"] = max(worst["iters"], res.iterations)
            worst["probe"] = max(worst["probe"], local_optimality_probe(res.eta, metric, seed=rs % 2 ** 32))
    ok = (worst["spread"] <= 1e-4 and worst["eta"] <= 1e-6 and worst["probe"] <= 0
          and worst["iters"] <= 500)
    record(2, "max-min equalization", ok,
           f"spread {worst['spread']:.2e}, |max eta-1| {worst['eta']:.1e}, "
           f"best probe gain {worst['probe']:.2e}, iters {worst['iters']}")


def test_c03_target_exactness(record):
    cfg = NetworkConfig(M=64, K=16, tau=16, area_side_m=632.5, seed=303)
    S_t = 2 ** 0.1 - 1
    worst, n_ok, n_inf = 0.0, 0, 0
    for rs in realization_seeds(cfg.seed, 10):
        net, _, est = _uplink(cfg, rs)
        for fn in (lambda: target_exact(est.g_hat, est.gamma, net.beta, S_t=S_t, rho_u=cfg.rho_u),
                   lambda: target_rm(est.gamma, net.beta, S_t=S_t, rho_u=cfg.rho_u)):
            try:
                res = fn()
            except Exception as exc:  # infeasible instances are excluded by the criterion
                if type(exc).__name__ != "InfeasibleError":
                    raise
                n_inf += 1
                continue
            keep = np.setdiff1d(np.arange(cfg.K), res.dropped)
            worst = max(worst, float(np.max(np.abs(res.achieved[keep] / S_t - 1))))
            n_ok += 1
    record(3, "target-rate exactness", n_ok > 0 and worst <= 0.01,
           f"{n_ok} feasible runs, {n_inf} infeasible, worst relative SINR error {worst:.2e}")


def test_c04_ul_ee_gain(record):
    cfg = NetworkConfig(M=64, K=16, tau=16, area_side_m=632.5, seed=404)
    ee = {}
    for pc in ("target-rm", "target-exact"):
        for R in (0.01, 0.1):
            b = run_experiment(ExperimentSpec("ul-target-ee", cfg, n_realizations=10, ul_pc=pc, target_rate=R))
            ee[pc, R] = b.ee
    ratio = ee["target-rm", 0.01]["ratio"]
    lower = ee["target-rm", 0.01]["controlled"] > ee["target-rm", 0.1]["controlled"]
    alg4 = ee["target-rm", 0.01]["controlled"] >= ee["target-exact", 0.01]["controlled"]
    record(4, "UL EE gain", ratio >= 5 and lower and alg4,
           f"RM-target/full {ratio:.1f}x, EE(0.01)>EE(0.1) {lower}, "
           f"RM-target/exact-target {ee['target-rm', 0.01]['controlled'] / ee['target-exact', 0.01]['controlled']:.2f}")


def test_c05_mmse_dominance(record):
    cfg = NetworkConfig(M=64, K=16, tau=24, area_side_m=1000.0, seed=505)
    mm, mr = [], []
    for rs in realization_seeds(cfg.seed, 63):
        net = generate_network(cfg, seed=substream(rs, 0))
        psi = generate_pilots(cfg.K, cfg.tau, substream(rs, 1))
        eta = np.ones(cfg.K)
        for out, rx in ((mm, "mmse"), (mr, "mr")):
            r, _ = achievable_rate_mc(net.beta, psi, eta, cfg.rho_u, cfg.rho_p, 50,
                                      seed=substream(rs, 2), receiver=rx)
            out.append(r)
    mm, mr = np.concatenate(mm), np.concatenate(mr)
    ratio = float(np.median(mm / mr))
    record(5, "MMSE dominance", mm.size >= 1000 and np.all(mm >= mr) and ratio > 1.5,
           f"{mm.size} pairs, min MMSE-MR {np.min(mm - mr):.2e}, median ratio {ratio:.2f}")


def test_c06_theorem1_probe(record):
    cfg = NetworkConfig(M=16, K=8, tau=8, seed=606)
    net = generate_network(cfg)
    stats = estimate_covariance_probe(net.beta[0], cfg.rho_p, [32, 256], 10_000, seed=606)
    r = stats[256] / stats[32]
    record(6, "estimate cross-covariance decay", r <= 0.5,
           f"tau=32 {stats[32]:.4f}, tau=256 {stats[256]:.4f}, ratio {r:.3f}")


def test_c07_interference_properties(record):
    cfg = NetworkConfig(M=40, K=8, tau=8, area_side_m=1000.0, seed=707)
    bad = []
    for rs in realization_seeds(cfg.seed, 5):
        net, _, est = _uplink(cfg, rs)
        inst = {"gamma": est.gamma, "beta": net.beta, "rho_u": cfg.rho_u, "g_hat": est.g_hat}
        for engine in ("exact", "rm"):
            rep = interference_function_probe(engine, inst, trials=100, seed=substream(rs, 5))
            if not rep.ok:
                bad.append((engine, rep.witness))
    record(7, "interference-function properties", not bad,
           f"5 instances x 2 engines x 100 points, violations {len(bad)}")


def test_c08_dl_consistency(record):
    rng = np.random.default_rng(808)
    rho_d, rho_p = 10 ** 11.5, 10 ** 10.5
    worst = 0.0
    for _ in range(40):
        M, K = int(rng.integers(1, 33)), int(rng.integers(1, 9))
        beta = 10 ** rng.uniform(-11, -8, (M, K))
        psi = orthonormal_pilots(K, K, rng)
        a, gamma = projection_vectors(psi, beta, rho_p)
        eta = rng.uniform(0, 1, (M, K)) / gamma / K
        iot = dl_sinr_iot(eta, gamma, beta, a, psi, rho_d, rho_p)
        worst = max(worst, float(np.max(np.abs(iot / dl_sinr_orth(eta, gamma, beta, rho_d) - 1))))
    med = []
    M, K = 16, 4
    for mult in (1, 4, 16):
        gaps = []
        for seed in range(30):
            r = np.random.default_rng([808, seed])
            beta = 10 ** r.uniform(-10, -8, (M, K))
            psi = generate_pilots(K, mult * K, r)
            a, gamma = projection_vectors(psi, beta, rho_p)
            eta = np.repeat((1 / gamma.sum(axis=1))[:, None], K, axis=1)
            orth = dl_sinr_orth(eta, gamma, beta, rho_d)
            gaps.append(np.abs(dl_sinr_iot(eta, gamma, beta, a, psi, rho_d, rho_p) - orth) / orth)
        med.append(float(np.median(np.concatenate(gaps))))
    ok = worst <= 1e-9 and med[0] > med[1] > med[2]
    record(8, "DL SINR consistency", ok,
           f"orthonormal max rel gap {worst:.1e}; random-pilot median gaps {', '.join(f'{g:.3g}' for g in med)}")


def _k1_opt(gamma, beta, rho):
    a, b = np.sqrt(rho * gamma[:, 0]), rho * beta[:, 0]

    def t_of(logc):
        x = np.minimum(1.0, np.exp(logc) * a / b)
        return (a @ x) ** 2 / (1 + b @ x ** 2)
    grid = np.linspace(-60, 60, 12001)
    i = int(np.argmax([t_of(g) for g in grid]))
    res = minimize_scalar(lambda g: -t_of(g), bounds=(grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]),
                          method="bounded", options={"xatol": 1e-12})
    return max(t_of(grid[i]), -res.fun)


def test_c09_dl_optimizer(record):
    k1_err, fp_err, mono = 0.0, 0.0, True
    for s in range(5):
        cfg = NetworkConfig(M=32, K=1, tau=1, area_side_m=122.47, seed=900 + s)
        net = generate_network(cfg)
        _, gamma = projection_vectors(generate_pilots(1, 1, s), net.beta, cfg.rho_p)
        t = maxmin_bisection(gamma, net.beta, cfg.rho_d).t_star
        k1_err = max(k1_err, abs(t / _k1_opt(gamma, net.beta, cfg.rho_d) - 1))
    for s in range(5):
        cfg = NetworkConfig(M=32, K=8, tau=8, area_side_m=122.47, seed=950 + s)
        net = generate_network(cfg)
        _, gamma = projection_vectors(generate_pilots(8, 8, s), net.beta, cfg.rho_p)
        res = maxmin_bisection(gamma, net.beta, cfg.rho_d)
        _, t_fp = maxmin_fixed_p(res.p_opt, gamma, net.beta, cfg.rho_d)
        fp_err = max(fp_err, abs(t_fp / res.t_star - 1))
        feas = [t for t, ok in res.trace if ok]
        infeas = [t for t, ok in res.trace if not ok]
        mono &= feas == sorted(feas) and infeas == sorted(infeas, reverse=True)
        mono &= not feas or not infeas or max(feas) < min(infeas)
    ok = k1_err <= REL_TOL and fp_err <= 2 * REL_TOL and mono
    record(9, "DL optimizer", ok, f"K=1 rel err {k1_err:.1e}, fixed-p rel err {fp_err:.1e}, monotone traces {mono}")


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    # 64 APs per 0.03 km^2: 32 APs on a wrapped 122.47 m square, 313 x 32 = 10016 samples
    cfg = NetworkConfig(M=32, K=8, tau=8, area_side_m=float(np.sqrt(0.015e6)))
    ds = build_dataset(cfg, 313, khat=4, seed=7)
    model = train_lm(ds, init_seed=0, max_epochs=300)
    path = tmp_path_factory.mktemp("nn") / "model.json"
    save_model(model, path)
    return cfg, model, str(path)


def test_c10_nn_pipeline(record, trained):
    cfg, model, path = trained
    rmse = model.meta["val_rmse"]
    ratios = []
    for s in range(10):
        _, _, beta = realization_sample(cfg, 10 ** 6 + s, 4)
        psi = generate_pilots(cfg.K, cfg.tau, substream(10 ** 6 + s, 1))
        _, gamma = projection_vectors(psi, beta, cfg.rho_p)
        opt = maxmin_bisection(gamma, beta, cfg.rho_d).t_star
        _, t_nn = maxmin_fixed_p(predict_powers(model, beta), gamma, beta, cfg.rho_d)
        ratios.append(np.log2(1 + t_nn) / np.log2(1 + opt))
    dense = NetworkConfig(M=64, K=16, tau=16, area_side_m=float(np.sqrt(0.03e6)), seed=1010)
    b = run_experiment(ExperimentSpec("dl-scalable", dense, n_realizations=5, nn_model=path))
    ee = b.ee["uniform-nn"] / b.ee["uniform-full"]
    ok = rmse <= 0.1 and min(ratios) >= 0.9 and ee >= 2
    record(10, "NN pipeline", ok,
           f"{model.meta['n_train'] + model.meta['n_val']} samples, val RMSE {rmse:.4f}, "
           f"worst min-rate ratio {min(ratios):.3f}, EE uniform-NN/full {ee:.2f}x")


def _per_ap_time(model, M, reps=7):
    K = M // 4
    cfg = NetworkConfig(M=M, K=K, tau=K, area_side_m=float(np.sqrt(0.03e6 * M / 64)), wrap_around=False)
    net = generate_network(cfg, seed=M)
    _, gamma = projection_vectors(generate_pilots(K, K, M), net.beta, cfg.rho_p)
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        for m in range(M):  # each AP uses only its own row
            p = forward(model, top_khat(net.beta[m], model.khat))
            uniform_power(np.array([p]), gamma[m:m + 1])
        best = min(best, (time.perf_counter() - t0) / M)
    return best


def test_c11_scalability(record, trained):
    _, model, _ = trained
    ratio = _per_ap_time(model, 256) / _per_ap_time(model, 64)
    # structural: an M x M float matrix at M=1024 is 8 MiB; K=8 keeps (M, K) arrays tiny
    M, K = 1024, 8
    rng = np.random.default_rng(11)
    beta = 10 ** rng.uniform(-12, -9, (M, K))
    gamma = 0.8 * beta
    tracemalloc.start()
    maxmin_rm(gamma, beta, rho_u=1e10)
    target_rm(gamma, beta, S_t=1e-3, rho_u=1e10)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    ok = ratio <= 1.3 and peak < M * M * 8 / 4
    record(11, "per-AP scalability", ok,
           f"per-AP time ratio M=256/M=64 {ratio:.2f}, RM loop peak alloc {peak / 2 ** 20:.2f} MiB "
           f"(M x M would be {M * M * 8 / 2 ** 20:.0f} MiB)")
