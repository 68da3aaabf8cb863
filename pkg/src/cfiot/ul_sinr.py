"""Uplink SINR: exact MMSE receiver, maximum-ratio baseline and the two
random-matrix (deterministic equivalent) approximations.

Notation: ``g_hat``, ``gamma``, ``beta`` are (M, K); ``eta`` is (K,) with
entries in [0, 1]; ``rho_u`` is the normalized uplink SNR.  The RM engines
keep every M x M matrix as its diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import crandn, draw_channel, receive_pilots
from .errors import ConditioningError, ConfigError, ConvergenceError
from .estimator import estimate_channels, projection_vectors

RM_TOL = 1e-9
RM_MAX_ITER = 500


@dataclass
class RmState:
    e: np.ndarray  # (K,) or (K, K) for the per-device variant
    t_diag: np.ndarray  # (M,) or (K, M)
    iterations: int
    residual: float


def _check_eta(eta, K):
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (K,):
        raise ConfigError(f"eta must have shape ({K},)")
    if np.any(eta < 0) or np.any(eta > 1):
        raise ConfigError("uplink power coefficients must lie in [0, 1]")
    return eta


def d_diag(beta, gamma, eta, rho_u):
    """Diagonal of ``D = rho_u sum_k eta_k (B_k - Gamma_k) + I``."""
    return rho_u * (np.asarray(beta) - np.asarray(gamma)) @ np.asarray(eta, dtype=float) + 1.0


def omega_matrix(g_hat, eta, d, rho_u):
    """``Omega = rho_u sum_k eta_k g_k g_k^H + D``."""
    G = g_hat * np.sqrt(rho_u * np.asarray(eta, dtype=float))
    return G @ G.conj().T + np.diag(d)


def mmse_receiver(g_hat, eta, d, rho_u, k):
    """MMSE combining vector ``sqrt(rho_u eta_k) Omega^{-1} g_hat_k``."""
    eta = np.asarray(eta, dtype=float)
    fac = cho_factor(omega_matrix(g_hat, eta, d, rho_u), lower=True)
    return np.sqrt(rho_u * eta[k]) * cho_solve(fac, g_hat[:, k])


def sinr_quotient(v, g_hat, eta, d, rho_u, k):
    """Post-combining SINR of device ``k`` for an arbitrary combiner ``v``."""
    eta = np.asarray(eta, dtype=float)
    num = rho_u * eta[k] * abs(np.vdot(v, g_hat[:, k])) ** 2
    others = np.delete(np.arange(g_hat.shape[1]), k)
    proj = g_hat[:, others].conj().T @ v
    den = rho_u * np.sum(eta[others] * np.abs(proj) ** 2) + np.sum(d * np.abs(v) ** 2)
    return float(num / den)


def exact_sinr_mmse(g_hat, gamma, beta, eta, rho_u):
    """Per-device SINR under the MMSE receiver, ``q / (1 - q)`` with
    ``q_k = rho_u eta_k g_k^H Omega^{-1} g_k``."""
    g_hat = np.asarray(g_hat)
    eta = _check_eta(eta, g_hat.shape[1])
    d = d_diag(beta, gamma, eta, rho_u)
    fac = cho_factor(omega_matrix(g_hat, eta, d, rho_u), lower=True)
    X = cho_solve(fac, g_hat)
    q = rho_u * eta * np.einsum("mk,mk->k", g_hat.conj(), X).real
    if np.any(q >= 1):
        raise ConditioningError(f"MMSE quadratic form reached 1 (max q = {q.max():.17g})")
    return q / (1 - q)


def mr_sinr(g_hat, gamma, beta, eta, rho_u):
    """Per-device SINR with maximum-ratio combining ``v_k = g_hat_k``."""
    g_hat = np.asarray(g_hat)
    eta = _check_eta(eta, g_hat.shape[1])
    d = d_diag(beta, gamma, eta, rho_u)
    C = g_hat.conj().T @ g_hat  # C[j, k] = g_j^H g_k
    P = np.abs(C) ** 2
    sig = rho_u * eta * np.diag(P)
    interf = rho_u * (eta @ P) - sig
    noise = np.einsum("m,mk->k", d, np.abs(g_hat) ** 2)
    den = interf + noise
    out = np.zeros_like(sig)
    np.divide(sig, den, out=out, where=den > 0)
    return out


def rm_ap1(gamma, beta, eta, rho_u, tol=RM_TOL, max_iter=RM_MAX_ITER):
    """RM Approximation 1 with a single shared fixed-point matrix ``T``.

    Returns
    -------
    sinr : ndarray, shape (K,)
    state : RmState
    """
    gamma = np.asarray(gamma, dtype=float)
    M, K = gamma.shape
    eta = _check_eta(eta, K)
    d = d_diag(beta, gamma, eta, rho_u)
    w = rho_u * eta / M  # per-device scale of the trace terms
    e = np.full(K, float(M))
    residual = np.inf
    for it in range(1, max_iter + 1):
        t_diag = 1.0 / (gamma @ (w / (1.0 + e)) + d / M)
        e_new = w * (t_diag @ gamma)
        residual = float(np.max(np.abs(e_new - e)))
        e = e_new
        if residual <= tol:
            break
    else:
        raise ConvergenceError("RM approximation 1 fixed point did not converge", residual, max_iter)
    t_diag = 1.0 / (gamma @ (w / (1.0 + e)) + d / M)
    sinr = w * (t_diag @ gamma)
    return sinr, RmState(e=e, t_diag=t_diag, iterations=it, residual=residual)


def rm_ap2(gamma, beta, eta, rho_u, tol=RM_TOL, max_iter=RM_MAX_ITER):
    """RM Approximation 2: one fixed point per device with its own term removed.

    Returns
    -------
    sinr : ndarray, shape (K,)
    state : RmState
        ``e[k, j]`` is the fixed-point value of device ``j`` in the system
        seen by device ``k`` (diagonal unused); ``t_diag[k]`` is ``diag(T_k)``.
    """
    gamma = np.asarray(gamma, dtype=float)
    M, K = gamma.shape
    eta = _check_eta(eta, K)
    d = d_diag(beta, gamma, eta, rho_u)
    w = rho_u * eta / M
    keep = 1.0 - np.eye(K)
    e = np.full((K, K), float(M))
    residual = 0.0
    it = 0
    if K > 1:
        for it in range(1, max_iter + 1):
            t_diag = 1.0 / ((w * keep / (1.0 + e)) @ gamma.T + d / M)
            e_new = (t_diag @ gamma) * w
            residual = float(np.max(np.abs((e_new - e) * keep)))
            e = e_new
            if residual <= tol:
                break
        else:
            raise ConvergenceError("RM approximation 2 fixed point did not converge", residual, max_iter)
    t_diag = 1.0 / ((w * keep / (1.0 + e)) @ gamma.T + d / M)
    sinr = w * np.einsum("km,mk->k", t_diag, gamma)
    return sinr, RmState(e=e, t_diag=t_diag, iterations=it, residual=residual)


def subopt_estimate(y, psi, beta, rho_p):
    """Single-projection MMSE estimate, used only as a comparison baseline.

    ``g_hat_mk = sqrt(tau rho_p) beta_mk psi_k^H y_m / (tau rho_p sum_j beta_mj |psi_j^H psi_k|^2 + 1)``.

    Returns
    -------
    g_hat, gamma : ndarray, shape (M, K)
    """
    tau = psi.shape[0]
    s = tau * rho_p
    overlap = np.abs(psi.conj().T @ psi) ** 2  # (K, K)
    denom = s * beta @ overlap + 1.0  # (M, K)
    proj = (psi.conj().T @ y).T  # (M, K): psi_k^H y_m
    g_hat = np.sqrt(s) * beta * proj / denom
    gamma = s * beta ** 2 / denom
    return g_hat, gamma


def throughput(rate, bandwidth_hz, tau, tau_c):
    """Uplink throughput (bit/s): ``BW (tau_c - tau) / (2 tau_c) R``."""
    return bandwidth_hz * (tau_c - tau) / (2.0 * tau_c) * np.asarray(rate)


_ENGINES = {"mmse": exact_sinr_mmse, "mr": mr_sinr}


def achievable_rate_mc(beta, psi, eta, rho_u, rho_p, n_draws, seed=None, receiver="mmse",
                       estimator="lmmse", bandwidth_hz=20e6, tau_c=200):
    """Ergodic rate ``E[log2(1 + SINR_k)]`` over small-scale fading and noise.

    Every draw uses fresh ``h`` and pilot noise from a child of ``seed``;
    pilots and large-scale fading stay fixed.

    Returns
    -------
    rate : ndarray, shape (K,)
        bit/s/Hz.
    tput : ndarray, shape (K,)
        bit/s.
    """
    if n_draws < 1:
        raise ConfigError("n_draws must be >= 1")
    beta = np.asarray(beta, dtype=float)
    M, K = beta.shape
    tau = psi.shape[0]
    eta = _check_eta(eta, K)
    sinr_fn = _ENGINES[receiver]
    if estimator == "lmmse":
        a, gamma = projection_vectors(psi, beta, rho_p)
    elif estimator != "subopt":
        raise ConfigError(f"unknown estimator {estimator!r}")
    samples = np.empty((n_draws, K))
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(n_draws)):
        rng = np.random.default_rng(child)
        g = draw_channel(beta, h=crandn(rng, (M, K))).g
        y = receive_pilots(psi, g, rho_p, noise=crandn(rng, (tau, M)))
        if estimator == "lmmse":
            g_hat = estimate_channels(y, psi, beta, rho_p, a=a, gamma=gamma).g_hat
            gam = gamma
        else:
            g_hat, gam = subopt_estimate(y, psi, beta, rho_p)
        samples[i] = np.log2(1.0 + sinr_fn(g_hat, gam, beta, eta, rho_u))
    rate = samples.mean(axis=0)
    return rate, throughput(rate, bandwidth_hz, tau, tau_c)
