"""Uplink power control.

Four fixed-point algorithms built on standard interference functions:

* :func:`maxmin_exact` / :func:`target_exact` iterate on the per-device
  quantities ``d_k = rho'_k g_k^H F^{-1} g_k`` (full M x M solves).
* :func:`maxmin_rm` / :func:`target_rm` iterate on the diagonal of the
  deterministic-equivalent matrix ``T`` (O(MK) per step).

Rate weights ``u`` (unit norm) let the target-rate variants virtually drop
devices whose full-power rate misses the target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, ConvergenceError, InfeasibleError
from .ul_sinr import exact_sinr_mmse, rm_ap1

EPS = 1e-9
MAX_ITER = 500
DROP_WEIGHT = 1e-8


@dataclass
class ControlWeights:
    u: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.nu = np.asarray(self.nu, dtype=float)
        if abs(np.linalg.norm(self.u) - 1) > 1e-12 or np.any(self.u < 0):
            raise ConfigError("rate weights must be non-negative with unit norm")
        if np.any(self.nu <= 0):
            raise ConfigError("power weights must be positive")

    @classmethod
    def uniform(cls, K):
        return cls(np.full(K, 1 / np.sqrt(K)), np.ones(K))


@dataclass
class PcResult:
    eta: np.ndarray
    iterations: int
    converged: bool
    achieved: np.ndarray  # SINR under the algorithm's own engine
    alpha_final: float
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    passes: int = 1
    trace: list = field(default_factory=list, repr=False)


def build_weights(K, K_p=0, u_p=DROP_WEIGHT, poor=None, nu=None):
    """Rate weights with ``K_p`` devices at ``u_p`` and the rest at ``u_g``,
    where ``u_p^2 K_p + u_g^2 (K - K_p) = 1``.

    ``poor`` lists the down-weighted devices (defaults to the first ``K_p``).
    """
    if poor is not None:
        poor = np.unique(np.asarray(poor, dtype=int))
        K_p = poor.size
    if not 0 <= K_p < K:
        raise ConfigError(f"need 0 <= K_p < K, got K_p={K_p}, K={K}")
    if K_p and not 0 <= u_p < 1 / np.sqrt(K):
        raise ConfigError("u_p must lie in [0, 1/sqrt(K))")
    u_g = np.sqrt((1 - u_p ** 2 * K_p) / (K - K_p))
    u = np.full(K, u_g)
    u[np.arange(K_p) if poor is None else poor] = u_p
    return ControlWeights(u, np.ones(K) if nu is None else nu)


def select_dropped(eta, K_p):
    """Indices of the ``K_p`` devices with the largest power coefficients."""
    return np.sort(np.argsort(-np.asarray(eta), kind="stable")[:K_p])


def ul_energy_efficiency(rates, eta, P_u_mw):
    """``sum(R) / (P_u sum(eta))`` in bit/s/Hz per mW."""
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0):
        raise ConfigError("rates must be non-negative")
    total = float(np.sum(eta))
    if total <= 0:
        raise ConfigError("energy efficiency undefined when no power is transmitted")
    return float(rates.sum() / (P_u_mw * total))


# -- exact-SINR machinery ----------------------------------------------------

def _d_update(g_hat, err, rho_eff):
    """``d_k = rho'_k g_k^H (sum_j rho_eff_j J_j + I)^{-1} g_k``, with
    ``rho_eff_j`` the per-device load (rho' eta in the plain form)."""
    G = g_hat * np.sqrt(rho_eff)
    F = G @ G.conj().T
    F[np.diag_indices_from(F)] += err @ rho_eff + 1.0
    X = cho_solve(cho_factor(F, lower=True), g_hat)
    return np.einsum("mk,mk->k", g_hat.conj(), X).real


def exact_interference(d, g_hat, gamma, beta, rho_u, alpha, u=None, nu=None):
    """Interference map ``f(d)`` whose fixed point the exact algorithms find.

    ``u=None`` gives the target-rate form where the ``rho' u`` products are
    replaced by ``rho'``.
    """
    K = g_hat.shape[1]
    nu = np.ones(K) if nu is None else nu
    rho_p = rho_u * nu
    w = rho_p if u is None else rho_p * u
    return rho_p * _d_update(g_hat, beta - gamma, alpha * w / d)


def _exact_iterate(g_hat, err, rho_p, w, alpha_fn, eps, max_iter, trace):
    d = rho_p * _d_update(g_hat, err, rho_p)
    for n in range(1, max_iter + 1):
        alpha = alpha_fn(d)
        d_new = rho_p * _d_update(g_hat, err, alpha * w / d)
        step = float(np.max(np.abs(d_new - d)))
        trace.append(step)
        d = d_new
        if step <= eps:
            return d, n, True
    return d, max_iter, False


def _ratio_min(x, u):
    with np.errstate(divide="ignore"):
        return float(np.min(np.where(u > 0, x / np.where(u > 0, u, 1), np.inf)))


def maxmin_exact(g_hat, gamma, beta, weights=None, rho_u=1.0, eps=EPS, max_iter=MAX_ITER):
    """Weighted max-min power control under the exact MMSE SINR.

    Raises
    ------
    ConvergenceError
        If the ``d`` iteration does not settle within ``max_iter`` steps
        (usually an infeasible weighting).
    """
    g_hat = np.asarray(g_hat)
    K = g_hat.shape[1]
    weights = ControlWeights.uniform(K) if weights is None else weights
    u, nu = weights.u, weights.nu
    rho_p = rho_u * nu
    err = np.asarray(beta) - np.asarray(gamma)
    trace = []
    d, n, ok = _exact_iterate(g_hat, err, rho_p, rho_p * u, lambda d: _ratio_min(d, u),
                              eps, max_iter, trace)
    if not ok:
        raise ConvergenceError("max-min (exact) did not converge", trace[-1], n)
    alpha = _ratio_min(d, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(u > 0, alpha / (d / np.where(u > 0, u, 1)), 0.0)
    return PcResult(eta=eta, iterations=n, converged=True,
                    achieved=exact_sinr_mmse(g_hat, gamma, beta, eta, rho_u),
                    alpha_final=alpha, trace=trace)


def _full_power_poor(sinr_full, S_t):
    return np.flatnonzero(sinr_full < S_t)


def _check_emitted(eta, dropped):
    bad = np.flatnonzero((eta > 1) | (eta < 0))
    if bad.size:
        raise InfeasibleError(f"power coefficients outside [0, 1] for devices {bad.tolist()}", bad)


def target_exact(g_hat, gamma, beta, nu=None, S_t=1.0, rho_u=1.0, eps=EPS, max_iter=MAX_ITER,
                 u_p=DROP_WEIGHT):
    """Target-SINR power control under the exact MMSE SINR.

    A first pass aims every device at ``S_t``.  If that needs a coefficient
    above one, devices whose full-power SINR is below ``S_t`` get rate weight
    ``u_p`` and the problem is re-solved with the remaining devices at
    ``u_g``.

    Raises
    ------
    InfeasibleError
        When every device is poor or the second pass still violates the
        power budget.
    """
    if not S_t > 0:
        raise ConfigError("target SINR must be positive")
    g_hat = np.asarray(g_hat)
    K = g_hat.shape[1]
    nu = np.ones(K) if nu is None else np.asarray(nu, dtype=float)
    rho_p = rho_u * nu
    err = np.asarray(beta) - np.asarray(gamma)
    alpha = S_t / (1 + S_t)
    trace = []
    d, n1, ok = _exact_iterate(g_hat, err, rho_p, rho_p, lambda d: alpha, eps, max_iter, trace)
    eta = alpha / d
    if ok and np.all(eta <= 1):
        return PcResult(eta=eta, iterations=n1, converged=True,
                        achieved=exact_sinr_mmse(g_hat, gamma, beta, eta, rho_u),
                        alpha_final=alpha, trace=trace)

    poor = _full_power_poor(exact_sinr_mmse(g_hat, gamma, beta, np.ones(K), rho_u), S_t)
    if poor.size == K:
        raise InfeasibleError("no device reaches the target even at full power", poor)
    w8 = build_weights(K, u_p=u_p, poor=poor, nu=nu)
    u_g = float(np.max(w8.u))
    alpha = alpha / u_g
    d, n2, ok = _exact_iterate(g_hat, err, rho_p, rho_p * w8.u, lambda d: alpha, eps, max_iter, trace)
    eta = alpha * w8.u / d
    if not ok:
        raise InfeasibleError("second pass did not converge; target likely infeasible",
                              np.flatnonzero(eta > 1))
    _check_emitted(eta, poor)
    return PcResult(eta=eta, iterations=n1 + n2, converged=True,
                    achieved=exact_sinr_mmse(g_hat, gamma, beta, eta, rho_u),
                    alpha_final=alpha, dropped=poor, passes=2, trace=trace)


# -- RM (diagonal) machinery -------------------------------------------------

def _ap1_fixed_point(gamma, d, load, tol=EPS, max_iter=MAX_ITER):
    """Fixed point of the RM recursion with per-device load ``rho' eta`` and
    returns diag(T)."""
    M = gamma.shape[0]
    w = load / M
    e = np.full(gamma.shape[1], float(M))
    for _ in range(max_iter):
        t_diag = 1.0 / (gamma @ (w / (1.0 + e)) + d / M)
        e_new = w * (t_diag @ gamma)
        step = np.max(np.abs(e_new - e))
        e = e_new
        if step <= tol:
            break
    else:
        raise ConvergenceError("initial RM fixed point did not converge", float(step), max_iter)
    return 1.0 / (gamma @ (w / (1.0 + e)) + d / M)


def _rm_init(gamma, beta, rho_p):
    d0 = (beta - gamma) @ rho_p + 1.0
    return _ap1_fixed_point(gamma, d0, rho_p)


def rm_interference(l, gamma, beta, rho_u, alpha, u, xi):
    """Map ``q(l)``: the diagonal T-update as a function of ``l = diag(T)``.

    ``u`` holds the per-device weights multiplying ``rho_u`` (all ones for
    the target-rate first pass); ``xi`` the per-device SINR levels.
    """
    M = gamma.shape[0]
    tr = l @ gamma  # tr(Gamma_k diag(l))
    coef = alpha * rho_u * u / tr
    inner = beta - gamma * (xi / (1.0 + xi))
    return M / (inner @ coef + 1.0)


def _rm_iterate(t_diag, gamma, beta, rho_u, u, alpha_fn, xi_fn, eps, max_iter, trace):
    for n in range(1, max_iter + 1):
        alpha = alpha_fn(t_diag)
        t_new = rm_interference(t_diag, gamma, beta, rho_u, alpha, u, xi_fn(alpha))
        step = float(np.max(np.abs(t_new - t_diag)))
        trace.append(step)
        t_diag = t_new
        if step <= eps:
            return t_diag, n, True
    return t_diag, max_iter, False


def maxmin_rm(gamma, beta, weights=None, rho_u=1.0, eps=EPS, max_iter=MAX_ITER):
    """Weighted max-min power control under RM Approximation 1.

    Only large-scale quantities enter and every matrix is kept as a length-M
    diagonal.
    """
    gamma = np.asarray(gamma, dtype=float)
    beta = np.asarray(beta, dtype=float)
    M, K = gamma.shape
    weights = ControlWeights.uniform(K) if weights is None else weights
    u, nu = weights.u, weights.nu
    t_diag = _rm_init(gamma, beta, rho_u * nu)

    def alpha_fn(t):
        return _ratio_min(nu * (t @ gamma), u)

    trace = []
    t_diag, n, ok = _rm_iterate(t_diag, gamma, beta, rho_u, u, alpha_fn,
                                lambda a: rho_u * a * u / M, eps, max_iter, trace)
    if not ok:
        raise ConvergenceError("max-min (RM) did not converge", trace[-1], n)
    score = nu * (t_diag @ gamma)
    alpha = _ratio_min(score, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(u > 0, alpha / (score / np.where(u > 0, u, 1)), 0.0)
    return PcResult(eta=eta, iterations=n, converged=True,
                    achieved=rm_ap1(gamma, beta, eta, rho_u)[0],
                    alpha_final=alpha, trace=trace)


def target_rm(gamma, beta, nu=None, S_t=1.0, rho_u=1.0, eps=EPS, max_iter=MAX_ITER,
              u_p=DROP_WEIGHT):
    """Target-SINR power control under RM Approximation 1.

    Poor devices are those whose RM full-power SINR falls below ``S_t``.

    Raises
    ------
    InfeasibleError
        As for :func:`target_exact`.
    """
    if not S_t > 0:
        raise ConfigError("target SINR must be positive")
    gamma = np.asarray(gamma, dtype=float)
    beta = np.asarray(beta, dtype=float)
    M, K = gamma.shape
    nu = np.ones(K) if nu is None else np.asarray(nu, dtype=float)
    t0 = _rm_init(gamma, beta, rho_u * nu)
    alpha = S_t * M / rho_u
    trace = []
    t_diag, n1, ok = _rm_iterate(t0, gamma, beta, rho_u, np.ones(K), lambda t: alpha,
                                 lambda a: np.full(K, S_t), eps, max_iter, trace)
    eta = alpha / (nu * (t_diag @ gamma))
    if ok and np.all(eta <= 1):
        return PcResult(eta=eta, iterations=n1, converged=True,
                        achieved=rm_ap1(gamma, beta, eta, rho_u)[0],
                        alpha_final=alpha, trace=trace)

    poor = _full_power_poor(rm_ap1(gamma, beta, np.ones(K), rho_u)[0], S_t)
    if poor.size == K:
        raise InfeasibleError("no device reaches the target even at full power", poor)
    w8 = build_weights(K, u_p=u_p, poor=poor, nu=nu)
    u_g = float(np.max(w8.u))
    alpha = alpha / u_g
    xi = S_t * w8.u / u_g
    t_diag, n2, ok = _rm_iterate(t0, gamma, beta, rho_u, w8.u, lambda t: alpha,
                                 lambda a: xi, eps, max_iter, trace)
    eta = alpha * w8.u / (nu * (t_diag @ gamma))
    if not ok:
        raise InfeasibleError("second pass did not converge; target likely infeasible",
                              np.flatnonzero(eta > 1))
    _check_emitted(eta, poor)
    return PcResult(eta=eta, iterations=n1 + n2, converged=True,
                    achieved=rm_ap1(gamma, beta, eta, rho_u)[0],
                    alpha_final=alpha, dropped=poor, passes=2, trace=trace)


# -- verification helpers ----------------------------------------------------

@dataclass
class PropertyReport:
    engine: str
    trials: int
    positivity: bool
    monotonicity: bool
    scalability: bool
    witness: dict | None = None

    @property
    def ok(self):
        return self.positivity and self.monotonicity and self.scalability


def interference_function_probe(engine, instance, trials=100, alpha=None, seed=None):
    """Check positivity, monotonicity and scalability of the interference map
    at random points (strict, componentwise).

    ``instance`` is a mapping with ``gamma``, ``beta``, ``rho_u`` and, for the
    exact engine, ``g_hat``; optional ``u``.
    """
    rng = np.random.default_rng(seed)
    gamma = np.asarray(instance["gamma"], dtype=float)
    beta = np.asarray(instance["beta"], dtype=float)
    rho_u = instance["rho_u"]
    M, K = gamma.shape
    u = np.asarray(instance.get("u", np.full(K, 1 / np.sqrt(K))))
    if engine == "exact":
        g_hat = instance["g_hat"]
        alpha = 0.5 if alpha is None else alpha
        n = K

        def f(x):
            return exact_interference(x, g_hat, gamma, beta, rho_u, alpha, u=u)
    elif engine == "rm":
        alpha = M / rho_u if alpha is None else alpha
        xi = rho_u * alpha * u / M
        n = M

        def f(x):
            return rm_interference(x, gamma, beta, rho_u, alpha, u, xi)
    else:
        raise ConfigError(f"unknown engine {engine!r}")
    if not alpha > 0:
        raise ConfigError("alpha must be positive")

    flags = {"positivity": True, "monotonicity": True, "scalability": True}
    witness = None
    for _ in range(trials):
        x = 10 ** rng.uniform(-3, 3, size=n)
        x_lo = x * rng.uniform(0.05, 0.95, size=n)
        zeta = rng.uniform(1.01, 4.0)
        fx = f(x)
        checks = {
            "positivity": np.all(fx > 0),
            "monotonicity": np.all(fx > f(x_lo)),
            "scalability": np.all(zeta * fx > f(zeta * x)),
        }
        for name, passed in checks.items():
            if not passed and flags[name]:
                flags[name] = False
                witness = witness or {"property": name, "point": x.tolist(), "zeta": zeta}
    return PropertyReport(engine=engine, trials=trials, witness=witness, **flags)


def local_optimality_probe(eta, metric, u=None, n_perturb=20, frac=0.01, seed=None):
    """Largest relative gain in ``min(metric(eta) / u)`` over random 1% power
    transfers between device pairs.  A max-min point gives a value <= 0."""
    rng = np.random.default_rng(seed)
    eta = np.asarray(eta, dtype=float)
    K = eta.size
    u = np.full(K, 1 / np.sqrt(K)) if u is None else np.asarray(u)
    served = u > 0
    base = float(np.min(metric(eta)[served] / u[served]))
    best = -np.inf
    for _ in range(n_perturb):
        i, j = rng.choice(K, size=2, replace=False)
        trial = eta.copy()
        delta = frac * trial[i]
        trial[i] -= delta
        trial[j] = min(1.0, trial[j] + delta)
        val = float(np.min(metric(trial)[served] / u[served]))
        best = max(best, (val - base) / base)
    return best
