"""Random pilots, Rayleigh small-scale fading and the received pilot signal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


def crandn(rng, shape):
    """Standard circularly-symmetric complex Gaussian samples, CN(0, 1)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


@dataclass
class ChannelDraw:
    h: np.ndarray  # (M, K) small-scale
    g: np.ndarray  # (M, K) composite sqrt(beta) * h


def generate_pilots(K, tau, seed=None):
    """Unit-norm random pilots, uniform on the complex unit sphere.

    Returns a ``(tau, K)`` complex matrix whose columns are the pilots.
    """
    if K < 1 or tau < 1:
        raise ConfigError("need K >= 1 and tau >= 1")
    rng = np.random.default_rng(seed)
    psi = crandn(rng, (tau, K))
    return psi / np.linalg.norm(psi, axis=0, keepdims=True)


def orthonormal_pilots(K, tau, seed=None):
    """Orthonormal pilot columns (requires ``tau >= K``); used as a reference case."""
    if tau < K:
        raise ConfigError("orthonormal pilots need tau >= K")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(crandn(rng, (tau, K)))
    return q


def draw_channel(beta, seed=None, h=None):
    """Composite channel ``g = sqrt(beta) * h`` with fresh i.i.d. CN(0,1) ``h``.

    ``h`` may be injected (tests only).
    """
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= 0):
        raise ConfigError("large-scale coefficients must be positive")
    if h is None:
        h = crandn(np.random.default_rng(seed), beta.shape)
    elif h.shape != beta.shape:
        raise ConfigError(f"h has shape {h.shape}, expected {beta.shape}")
    return ChannelDraw(h=h, g=np.sqrt(beta) * h)


def receive_pilots(psi, g, rho_p, tau=None, seed=None, noise=None):
    """Pilot observations ``Y = sqrt(tau rho_p) Psi G^T + W`` of shape (tau, M).

    ``noise`` overrides the fresh ``W`` draw; pass zeros for a noiseless
    signal part.
    """
    psi = np.asarray(psi)
    g = np.asarray(g)
    tau_psi, K = psi.shape
    tau = tau_psi if tau is None else tau
    if tau != tau_psi:
        raise ConfigError(f"pilot length {tau_psi} does not match tau={tau}")
    if g.ndim != 2 or g.shape[1] != K:
        raise ConfigError(f"channel shape {g.shape} incompatible with {K} pilots")
    M = g.shape[0]
    if noise is None:
        noise = crandn(np.random.default_rng(seed), (tau, M))
    elif noise.shape != (tau, M):
        raise ConfigError(f"noise has shape {noise.shape}, expected {(tau, M)}")
    return np.sqrt(tau * rho_p) * psi @ g.T + noise
