"""Downlink SINR under conjugate beamforming with LMMSE estimates.

Power coefficients ``eta`` are (M, K); the per-AP budget is
``p_m = sum_k eta_mk gamma_mk <= 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import projection_vectors


@dataclass
class DlPowerMatrix:
    eta: np.ndarray  # (M, K)
    p: np.ndarray  # (M,)

    def violations(self, tol=1e-9):
        """APs whose normalized power exceeds the budget."""
        return np.flatnonzero(self.p > 1 + tol)


def per_ap_power(eta, gamma):
    """``p_m = sum_k eta_mk gamma_mk``."""
    return np.einsum("mk,mk->m", np.asarray(eta, dtype=float), np.asarray(gamma, dtype=float))


def coherent_gain(eta, gamma):
    """``sum_m sqrt(eta_mk) gamma_mk`` per device."""
    return np.einsum("mk,mk->k", np.sqrt(eta), gamma)


def dl_sinr_orth(eta, gamma, beta, rho_d):
    """Closed-form SINR for orthonormal pilots::

        rho_d (sum_m sqrt(eta_mk) gamma_mk)^2 / (1 + rho_d sum_m p_m beta_mk)
    """
    eta = np.asarray(eta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    num = rho_d * coherent_gain(eta, gamma) ** 2
    den = 1.0 + rho_d * per_ap_power(eta, gamma) @ np.asarray(beta, dtype=float)
    return num / den


def dl_sinr_iot(eta, gamma, beta, a, psi, rho_d, rho_p, tau=None):
    """Closed-form SINR with random (non-orthogonal) pilots.

    Parameters
    ----------
    eta, gamma, beta : ndarray, shape (M, K)
    a : ndarray, shape (M, tau, K) or None
        LMMSE projection vectors; recomputed from ``psi`` and ``beta`` when None.
    psi : ndarray, shape (tau, K)
    """
    eta = np.asarray(eta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    tau = psi.shape[0] if tau is None else tau
    if a is None:
        a, _ = projection_vectors(psi, beta, rho_p)
    K = eta.shape[1]
    sq = np.sqrt(eta)
    num = rho_d * coherent_gain(eta, gamma) ** 2

    a_norm2 = np.einsum("mtk,mtk->mk", a.conj(), a).real  # ||a_mk'||^2
    P = np.einsum("tj,mtk->mjk", psi.conj(), a)  # psi_j^H a_mk'
    Q = np.einsum("mj,mjk->mk", beta, np.abs(P) ** 2)  # sum_j beta_mj |psi_j^H a_mk'|^2

    # rows: device k whose SINR is evaluated; columns: interferer k'
    t_norm = beta.T @ (eta * a_norm2)
    coh = np.einsum("mk,ml,mkl->kl", beta, sq, P)  # sum_m sqrt(eta_mk') beta_mk psi_k^H a_mk'
    t_spread = beta.T @ (eta * Q)
    inter = t_norm + tau * rho_p * (np.abs(coh) ** 2 + t_spread)
    inter *= 1.0 - np.eye(K)

    own = np.einsum("mk,mk,mk->k", eta, gamma, beta)
    den = 1.0 + rho_d * own + rho_d * inter.sum(axis=1)
    return num / den
