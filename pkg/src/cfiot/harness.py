"""Experiment recipes, seeded Monte Carlo loops and result files.

Every experiment turns an :class:`ExperimentSpec` into a :class:`ReportBundle`
and, when an output directory is given, writes ``rates.csv``, ``cdf.csv``,
``ee.json`` and ``trace.json``.  Results depend only on the spec and its
master seed: realization ``i`` draws from seed ``realization_seeds(seed)[i]``
and rows are sorted by (realization, device) before writing.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import draw_channel, generate_pilots, receive_pilots
from .dl_power import FEAS_TOL, REL_TOL, maxmin_bisection, maxmin_fixed_p, uniform_power
from .dl_sinr import dl_sinr_iot
from .errors import ConfigError, InfeasibleError
from .estimator import estimate_channels, estimate_covariance_probe, projection_vectors
from .mlp import load_model, predict_powers
from .netgen import NetworkConfig, generate_network
from .seeds import realization_seeds, substream
from .ul_power import (DROP_WEIGHT, build_weights, interference_function_probe, maxmin_exact,
                       maxmin_rm, select_dropped, target_exact, target_rm, ul_energy_efficiency)
from .ul_sinr import achievable_rate_mc, exact_sinr_mmse, rm_ap1, rm_ap2, throughput

EXPERIMENTS = ("ul-rate-cdf", "ul-maxmin", "ul-target-ee", "dl-maxmin", "dl-nn", "dl-scalable",
               "theorem1-probe", "if-properties")
UL_ENGINES = ("mmse-mc", "mr-mc", "rm-ap1", "rm-ap2")
UL_PC = ("full-power", "maxmin-exact", "maxmin-rm", "target-exact", "target-rm")
DL_PC = ("maxmin-opt", "fixed-p-nn", "uniform-nn", "uniform-full")
_NEEDS_MODEL = ("dl-nn", "dl-scalable")


@dataclass
class ExperimentSpec:
    experiment: str
    config: NetworkConfig = field(default_factory=NetworkConfig)
    n_realizations: int = 10
    n_draws: int = 200
    out_dir: str | None = None
    seed: int | None = None  # master seed; config.seed when None
    ul_engine: str = "mmse-mc"
    ul_pc: str | None = None
    target_rate: float = 0.1
    drop: int = 0  # devices given the small rate weight in max-min runs
    up: float = DROP_WEIGHT
    dl_pc: str | None = None
    rel_tol: float = REL_TOL
    feas_tol: float = FEAS_TOL
    nn_model: str | None = None
    khat: int = 4
    tau_list: tuple = (32, 256)
    n_trials: int = 1000
    workers: int = 1
    dump_channels: bool = False

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.ul_engine not in UL_ENGINES:
            raise ConfigError(f"unknown UL engine {self.ul_engine!r}")
        if self.ul_pc is not None and self.ul_pc not in UL_PC:
            raise ConfigError(f"unknown UL power control {self.ul_pc!r}")
        if self.dl_pc is not None and self.dl_pc not in DL_PC:
            raise ConfigError(f"unknown DL power control {self.dl_pc!r}")
        if self.n_realizations < 1 or self.n_draws < 1:
            raise ConfigError("n_realizations and n_draws must be positive")
        needs_model = self.experiment in _NEEDS_MODEL or self.dl_pc in ("fixed-p-nn", "uniform-nn")
        if needs_model:
            if self.nn_model is None or not os.path.isfile(self.nn_model):
                raise ConfigError(f"experiment {self.experiment!r} needs an existing --nn-model file")
        return self

    @property
    def master_seed(self):
        return self.config.seed if self.seed is None else self.seed

    def echo(self):
        d = asdict(self)
        d["config"] = self.config.to_dict()
        d["tau_list"] = list(self.tau_list)
        return d


@dataclass
class ReportBundle:
    rows: list  # (device, realization, rate, throughput)
    cdf: list  # (value, fraction)
    ee: dict
    trace: dict
    metadata: dict
    status: int = 0  # 0 ok, 1 infeasible realizations reported

    @property
    def rates(self):
        return np.array([r[2] for r in self.rows])


def emit_cdf(samples):
    """Empirical CDF as ``(value, i/N)`` pairs over the stably sorted samples."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ConfigError("cannot build a CDF from no samples")
    xs = np.sort(x, kind="stable")
    n = xs.size
    return [(float(v), (i + 1) / n) for i, v in enumerate(xs)]


def _version():
    from . import __version__
    return f"cfiot {__version__}"


# -- per-realization recipes ------------------------------------------------

def _setup(cfg, rs):
    net = generate_network(cfg, seed=substream(rs, 0))
    psi = generate_pilots(cfg.K, cfg.tau, substream(rs, 1))
    a, gamma = projection_vectors(psi, net.beta, cfg.rho_p)
    return net, psi, a, gamma


def _estimate_once(cfg, net, psi, a, gamma, rs):
    rng = np.random.default_rng(substream(rs, 3))
    g = draw_channel(net.beta, seed=rng).g
    y = receive_pilots(psi, g, cfg.rho_p, seed=rng)
    return estimate_channels(y, psi, net.beta, cfg.rho_p, a=a, gamma=gamma).g_hat


def _ul_rates(spec, cfg, net, psi, gamma, eta, rs):
    eng = spec.ul_engine
    if eng in ("mmse-mc", "mr-mc"):
        rate, _ = achievable_rate_mc(net.beta, psi, eta, cfg.rho_u, cfg.rho_p, spec.n_draws,
                                     seed=substream(rs, 2), receiver=eng.split("-")[0])
        return rate
    fn = rm_ap1 if eng == "rm-ap1" else rm_ap2
    return np.log2(1.0 + fn(gamma, net.beta, eta, cfg.rho_u)[0])


def _run_ul_rate_cdf(spec, cfg, rs):
    net, psi, _, gamma = _setup(cfg, rs)
    eta = np.ones(cfg.K)
    rate = _ul_rates(spec, cfg, net, psi, gamma, eta, rs)
    return {"rate": rate, "ee": {"full_power": ul_energy_efficiency(rate, eta, cfg.P_u_mw)}}


def _run_ul_maxmin(spec, cfg, rs):
    net, psi, a, gamma = _setup(cfg, rs)
    pc = spec.ul_pc or "maxmin-rm"
    if pc == "maxmin-exact":
        g_hat = _estimate_once(cfg, net, psi, a, gamma, rs)

        def solve(w):
            return maxmin_exact(g_hat, gamma, net.beta, w, rho_u=cfg.rho_u)
    elif pc == "maxmin-rm":
        def solve(w):
            return maxmin_rm(gamma, net.beta, w, rho_u=cfg.rho_u)
    elif pc == "full-power":
        solve = None
    else:
        raise ConfigError(f"ul-maxmin supports full-power/maxmin-exact/maxmin-rm, not {pc!r}")
    res = None
    if solve is not None:
        res = solve(None)
        if spec.drop:
            # the devices that needed the most power in the uniform run get weight u_p
            poor = select_dropped(res.eta, spec.drop)
            res = solve(build_weights(cfg.K, u_p=spec.up, poor=poor))
            res.dropped = poor
    eta = np.ones(cfg.K) if res is None else res.eta
    rate = _ul_rates(spec, cfg, net, psi, gamma, eta, rs)
    trace = {} if res is None else {"iterations": res.iterations, "alpha": res.alpha_final,
                                    "eta": res.eta.tolist(), "dropped": res.dropped.tolist()}
    return {"rate": rate, "ee": {"controlled": ul_energy_efficiency(rate, eta, cfg.P_u_mw)},
            "trace": trace}


def _run_ul_target_ee(spec, cfg, rs):
    """Target-rate control; each scheme's rate is read from its own SINR engine,
    and the full-power reference from the exact MMSE SINR on the same estimate."""
    net, psi, a, gamma = _setup(cfg, rs)
    pc = spec.ul_pc or "target-rm"
    S_t = 2.0 ** spec.target_rate - 1.0
    g_hat = _estimate_once(cfg, net, psi, a, gamma, rs)
    full = np.log2(1.0 + exact_sinr_mmse(g_hat, gamma, net.beta, np.ones(cfg.K), cfg.rho_u))
    ee_full = ul_energy_efficiency(full, np.ones(cfg.K), cfg.P_u_mw)
    try:
        if pc == "target-exact":
            res = target_exact(g_hat, gamma, net.beta, S_t=S_t, rho_u=cfg.rho_u, u_p=spec.up)
        elif pc == "target-rm":
            res = target_rm(gamma, net.beta, S_t=S_t, rho_u=cfg.rho_u, u_p=spec.up)
        else:
            raise ConfigError(f"ul-target-ee supports target-exact/target-rm, not {pc!r}")
    except InfeasibleError as exc:
        return {"rate": full, "ee": {"full_power": ee_full},
                "trace": {"infeasible": str(exc), "devices": [int(d) for d in exc.devices]}, "infeasible": True}
    rate = np.log2(1.0 + res.achieved)
    return {"rate": rate,
            "ee": {"full_power": ee_full,
                   "controlled": ul_energy_efficiency(rate, res.eta, cfg.P_u_mw)},
            "trace": {"iterations": res.iterations, "passes": res.passes,
                      "dropped": res.dropped.tolist(), "eta": res.eta.tolist()}}


def _dl_eval(cfg, net, psi, a, gamma, eta):
    sinr = dl_sinr_iot(eta, gamma, net.beta, a, psi, cfg.rho_d, cfg.rho_p)
    return np.log2(1.0 + sinr)


def _dl_ee(rate, p, P_d_mw):
    total = float(np.sum(p)) * P_d_mw
    return float(np.sum(rate) / total) if total > 0 else float("nan")


def _dl_scheme(spec, cfg, net, gamma, scheme, model):
    if scheme == "maxmin-opt":
        res = maxmin_bisection(gamma, net.beta, cfg.rho_d, spec.rel_tol, spec.feas_tol)
        return res.eta, {"t_star": res.t_star, "steps": res.bisection_steps,
                         "bisection": [[t, ok] for t, ok in res.trace]}
    if scheme == "uniform-full":
        return uniform_power(np.ones(cfg.M), gamma), {}
    p = predict_powers(model, net.beta)
    if scheme == "uniform-nn":
        return uniform_power(p, gamma), {"p_nn": p.tolist()}
    alloc, t = maxmin_fixed_p(p, gamma, net.beta, cfg.rho_d)
    return alloc, {"p_nn": p.tolist(), "min_sinr_orth": t}


def _run_dl(spec, cfg, rs, scheme, reference):
    net, psi, a, gamma = _setup(cfg, rs)
    model = load_model(spec.nn_model) if spec.nn_model else None
    alloc, tr = _dl_scheme(spec, cfg, net, gamma, scheme, model)
    rate = _dl_eval(cfg, net, psi, a, gamma, alloc.eta)
    ee = {scheme: _dl_ee(rate, alloc.p, cfg.P_d_mw), f"min_rate:{scheme}": float(rate.min())}
    trace = {scheme: tr}
    if reference:
        ref, rtr = _dl_scheme(spec, cfg, net, gamma, reference, model)
        r_rate = _dl_eval(cfg, net, psi, a, gamma, ref.eta)
        ee[reference] = _dl_ee(r_rate, ref.p, cfg.P_d_mw)
        ee[f"min_rate:{reference}"] = float(r_rate.min())
        trace[reference] = rtr
        if ee[reference] > 0:
            ee["ee_ratio"] = ee[scheme] / ee[reference]
        if r_rate.min() > 0:
            ee["min_rate_ratio"] = float(rate.min() / r_rate.min())
    return {"rate": rate, "ee": ee, "trace": trace}


def _run_dl_maxmin(spec, cfg, rs):
    return _run_dl(spec, cfg, rs, spec.dl_pc or "maxmin-opt", None)


def _run_dl_nn(spec, cfg, rs):
    return _run_dl(spec, cfg, rs, spec.dl_pc or "fixed-p-nn", "maxmin-opt")


def _run_dl_scalable(spec, cfg, rs):
    return _run_dl(spec, cfg.replace(wrap_around=False), rs, spec.dl_pc or "uniform-nn",
                   "uniform-full")


def _run_theorem1(spec, cfg, rs):
    net = generate_network(cfg, seed=substream(rs, 0))
    stats = estimate_covariance_probe(net.beta[0], cfg.rho_p, list(spec.tau_list), spec.n_trials,
                                      seed=substream(rs, 4))
    return {"rate": np.zeros(0), "ee": {}, "trace": {"cov_stat": {str(k): v for k, v in stats.items()}}}


def _run_if_properties(spec, cfg, rs):
    net, psi, a, gamma = _setup(cfg, rs)
    g_hat = _estimate_once(cfg, net, psi, a, gamma, rs)
    inst = {"gamma": gamma, "beta": net.beta, "rho_u": cfg.rho_u, "g_hat": g_hat}
    out = {}
    for engine in ("exact", "rm"):
        rep = interference_function_probe(engine, inst, trials=100, seed=substream(rs, 5))
        out[engine] = {"positivity": rep.positivity, "monotonicity": rep.monotonicity,
                       "scalability": rep.scalability, "witness": rep.witness}
    ok = all(v["positivity"] and v["monotonicity"] and v["scalability"] for v in out.values())
    return {"rate": np.zeros(0), "ee": {}, "trace": out, "infeasible": not ok}


_RECIPES = {
    "ul-rate-cdf": _run_ul_rate_cdf,
    "ul-maxmin": _run_ul_maxmin,
    "ul-target-ee": _run_ul_target_ee,
    "dl-maxmin": _run_dl_maxmin,
    "dl-nn": _run_dl_nn,
    "dl-scalable": _run_dl_scalable,
    "theorem1-probe": _run_theorem1,
    "if-properties": _run_if_properties,
}


def _one(args):
    spec, rs = args
    return _RECIPES[spec.experiment](spec, spec.config, rs)


def _mean_dicts(dicts):
    keys = sorted({k for d in dicts for k in d})
    out = {}
    for k in keys:
        vals = [d[k] for d in dicts if k in d and np.isfinite(d[k])]
        if vals:
            out[k] = float(np.mean(vals))
    return out


def run_experiment(spec: ExperimentSpec) -> ReportBundle:
    """Run every realization of ``spec`` and write the result files when
    ``spec.out_dir`` is set."""
    spec.validate()
    seeds = realization_seeds(spec.master_seed, spec.n_realizations)
    jobs = [(spec, rs) for rs in seeds]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            results = list(pool.map(_one, jobs))
    else:
        results = [_one(j) for j in jobs]

    rows = []
    for r_idx, res in enumerate(results):
        tput = throughput(res["rate"], spec.config.bandwidth_hz, spec.config.tau, spec.config.tau_c)
        rows.extend((k, r_idx, float(res["rate"][k]), float(tput[k])) for k in range(res["rate"].size))
    rows.sort(key=lambda r: (r[1], r[0]))

    ee = _mean_dicts([r["ee"] for r in results])
    if "controlled" in ee and "full_power" in ee:
        ee["ratio"] = ee["controlled"] / ee["full_power"]
    if spec.experiment == "ul-target-ee":
        ee["target_rate"] = spec.target_rate
    infeasible = [i for i, r in enumerate(results) if r.get("infeasible")]
    trace = {"realizations": [r.get("trace", {}) for r in results], "flagged": infeasible}
    meta = {"version": _version(), "spec": spec.echo(), "master_seed": spec.master_seed,
            "realization_seeds": seeds}
    cdf = emit_cdf([r[2] for r in rows]) if rows else []
    bundle = ReportBundle(rows=rows, cdf=cdf, ee=ee, trace=trace, metadata=meta,
                          status=1 if infeasible else 0)
    if spec.out_dir:
        write_bundle(bundle, spec.out_dir)
        if spec.dump_channels:
            dump_channels(spec, seeds, spec.out_dir)
    return bundle


def dump_channels(spec, seeds, out_dir):
    """Write the composite channel of each realization's estimation draw as
    CSV, real and imaginary parts interleaved per AP row."""
    cfg = spec.config
    for r_idx, rs in enumerate(seeds):
        net = generate_network(cfg, seed=substream(rs, 0))
        g = draw_channel(net.beta, seed=np.random.default_rng(substream(rs, 3))).g
        inter = np.empty((cfg.M, 2 * cfg.K))
        inter[:, 0::2], inter[:, 1::2] = g.real, g.imag
        with open(os.path.join(out_dir, f"channels_{r_idx}.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"{part}{k}" for k in range(cfg.K) for part in ("re", "im")])
            w.writerows([[repr(float(v)) for v in row] for row in inter])


def write_bundle(bundle, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "rates.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["device", "realization", "rate", "throughput"])
        w.writerows([d, r, repr(rate), repr(tp)] for d, r, rate, tp in bundle.rows)
    with open(os.path.join(out_dir, "cdf.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["value", "fraction"])
        w.writerows([repr(v), repr(f)] for v, f in bundle.cdf)
    with open(os.path.join(out_dir, "ee.json"), "w") as fh:
        json.dump(bundle.ee, fh, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "trace.json"), "w") as fh:
        json.dump({"trace": bundle.trace, "metadata": bundle.metadata}, fh, indent=1, sort_keys=True)
