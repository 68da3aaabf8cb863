"""Per-AP LMMSE channel estimation from non-orthogonal pilots.

At AP ``m`` the pilot observation covariance is
``Z_m = tau rho_p Psi B_m Psi^H + I`` and the estimate of ``g_mk`` is
``a_mk^H y_m`` with ``a_mk = sqrt(tau rho_p) beta_mk Z_m^{-1} psi_k``.
``Z_m`` is Hermitian positive definite, so every solve goes through a
Cholesky factorization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channel import generate_pilots, orthonormal_pilots
from .errors import ConditioningError, ConfigError


@dataclass
class EstimationResult:
    g_hat: np.ndarray  # (M, K) complex
    gamma: np.ndarray  # (M, K) estimate variances
    a: np.ndarray  # (M, tau, K) projection vectors
    err_var: np.ndarray  # (M, K) beta - gamma


def _projection_row(psi, beta_m, rho_p):
    tau = psi.shape[0]
    s = tau * rho_p
    Z = (psi * (s * beta_m)) @ psi.conj().T + np.eye(tau)
    a_m = cho_solve(cho_factor(Z, lower=True), psi) * (np.sqrt(s) * beta_m)
    return a_m


def _gamma_from_a(psi, a_m, beta_m, rho_p):
    tau = psi.shape[0]
    inner = np.einsum("tk,tk->k", psi.conj(), a_m)
    if np.any(np.abs(inner.imag) > 1e-8 * np.maximum(np.abs(inner.real), 1e-300)):
        raise ConditioningError("psi^H a is not real; Z_m solve lost Hermitian symmetry")
    return np.sqrt(tau * rho_p) * beta_m * inner.real


def lmmse_estimate(y_m, psi, beta_m, rho_p, tau=None):
    """LMMSE estimates of the K channels seen by one AP.

    Parameters
    ----------
    y_m : ndarray, shape (tau,)
        Pilot observation at the AP.
    psi : ndarray, shape (tau, K)
    beta_m : ndarray, shape (K,)
    rho_p : float
        Normalized pilot SNR.

    Returns
    -------
    g_hat_m : ndarray, shape (K,)
    a_m : ndarray, shape (tau, K)
        Column ``k`` is the projection vector ``a_mk``.
    """
    psi = np.asarray(psi)
    if tau is not None and tau != psi.shape[0]:
        raise ConfigError("tau does not match the pilot length")
    a_m = _projection_row(psi, np.asarray(beta_m, dtype=float), rho_p)
    return a_m.conj().T @ np.asarray(y_m), a_m


def gamma_variance(psi, beta_m, rho_p, tau=None):
    """Variances ``gamma_mk = E|g_hat_mk|^2`` for one AP; ``0 <= gamma <= beta``."""
    psi = np.asarray(psi)
    beta_m = np.asarray(beta_m, dtype=float)
    if tau is not None and tau != psi.shape[0]:
        raise ConfigError("tau does not match the pilot length")
    return _gamma_from_a(psi, _projection_row(psi, beta_m, rho_p), beta_m, rho_p)


def projection_vectors(psi, beta, rho_p):
    """Projection vectors and variances for every AP.

    Returns
    -------
    a : ndarray, shape (M, tau, K)
    gamma : ndarray, shape (M, K)
    """
    psi = np.asarray(psi)
    beta = np.asarray(beta, dtype=float)
    M, K = beta.shape
    a = np.empty((M, psi.shape[0], K), dtype=complex)
    gamma = np.empty((M, K))
    for m in range(M):
        a[m] = _projection_row(psi, beta[m], rho_p)
        gamma[m] = _gamma_from_a(psi, a[m], beta[m], rho_p)
    return a, gamma


def estimate_channels(y, psi, beta, rho_p, a=None, gamma=None):
    """Estimate all ``g_mk`` from the (tau, M) pilot observation ``y``.

    ``a`` and ``gamma`` depend only on pilots and large-scale fading; pass
    them in to reuse the factorization across coherence blocks.
    """
    if a is None or gamma is None:
        a, gamma = projection_vectors(psi, beta, rho_p)
    g_hat = np.einsum("mtk,tm->mk", a.conj(), y)
    return EstimationResult(g_hat=g_hat, gamma=gamma, a=a, err_var=np.asarray(beta) - gamma)


def pilot_covariance_stat(psi, beta_m, rho_p):
    """Mean normalized |Cov[g_hat_mk, g_hat_ml]| over pairs k != l, given the pilots.

    The conditional covariance is ``a_mk^H Z_m a_ml``; it is normalized by
    ``sqrt(gamma_mk gamma_ml)``.
    """
    K = psi.shape[1]
    if K < 2:
        return float("nan")
    tau = psi.shape[0]
    beta_m = np.asarray(beta_m, dtype=float)
    Z = (psi * (tau * rho_p * beta_m)) @ psi.conj().T + np.eye(tau)
    a_m = _projection_row(psi, beta_m, rho_p)
    C = a_m.conj().T @ Z @ a_m
    gamma = _gamma_from_a(psi, a_m, beta_m, rho_p)
    Cn = np.abs(C) / np.sqrt(np.outer(gamma, gamma))
    off = ~np.eye(K, dtype=bool)
    return float(Cn[off].mean())


def estimate_covariance_probe(beta_m, rho_p, tau_list, n_trials, seed=None, orthonormal=False):
    """Decay of the cross-covariance between estimates as the pilot length grows.

    For each ``tau`` draws ``n_trials`` fresh pilot sets for a fixed AP row
    ``beta_m`` and averages :func:`pilot_covariance_stat`.

    Returns
    -------
    dict
        ``{tau: statistic}``; empty when there is a single device.
    """
    if n_trials < 100:
        raise ConfigError("n_trials must be >= 100 for a meaningful statistic")
    beta_m = np.asarray(beta_m, dtype=float)
    K = beta_m.size
    if K < 2:
        return {}
    ss = np.random.SeedSequence(seed)
    out = {}
    for tau, child in zip(tau_list, ss.spawn(len(tau_list))):
        rng = np.random.default_rng(child)
        make = orthonormal_pilots if orthonormal else generate_pilots
        stats = [pilot_covariance_stat(make(K, tau, rng), beta_m, rho_p) for _ in range(n_trials)]
        out[int(tau)] = float(np.mean(stats))
    return out
