"""Network geometry and large-scale fading.

APs and devices are dropped uniformly on a ``D x D`` square.  Large-scale
coefficients are the product of a three-slope path loss (COST-231 Hata
intercept) and log-normal shadowing, which is either i.i.d. per link or
built from two spatially correlated Gaussian fields (one over APs, one over
devices).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky

from .errors import ConfigError, GenerationError

# Three-slope breakpoints (m) and antenna heights (m)
D0_M = 10.0
D1_M = 50.0
AP_HEIGHT_M = 15.0
DEVICE_HEIGHT_M = 1.65

THERMAL_NOISE_DBM_HZ = -174.0


def hata_intercept_db(carrier_hz=1.9e9, ap_height_m=AP_HEIGHT_M, dev_height_m=DEVICE_HEIGHT_M):
    """COST-231 Hata constant ``L`` (dB) for distances expressed in km."""
    f_mhz = carrier_hz / 1e6
    lf = math.log10(f_mhz)
    return (46.3 + 33.9 * lf - 13.82 * math.log10(ap_height_m)
            - (1.1 * lf - 0.7) * dev_height_m + (1.56 * lf - 0.8))


@dataclass(frozen=True)
class NetworkConfig:
    """Simulation parameters.  Defaults follow the usual cell-free IoT setup
    (1.9 GHz, 20 MHz, 9 dB NF, 20 mW devices, 200 mW APs)."""

    M: int = 64
    K: int = 16
    K_bar: int | None = None
    area_side_m: float = 1000.0
    tau: int = 16
    tau_c: int = 200
    carrier_hz: float = 1.9e9
    bandwidth_hz: float = 20e6
    noise_figure_db: float = 9.0
    P_u_mw: float = 20.0
    P_p_mw: float = 20.0
    P_d_mw: float = 200.0
    sigma_sh_db: float = 8.0
    shadow_model: str = "iid"
    shadow_delta: float = 0.5
    decorr_dist_m: float = 100.0
    wrap_around: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.K_bar is None:
            object.__setattr__(self, "K_bar", self.K)
        self.validate()

    def validate(self):
        if not (isinstance(self.M, (int, np.integer)) and isinstance(self.K, (int, np.integer))):
            raise ConfigError("M and K must be integers")
        if self.K < 1 or self.M < self.K:
            raise ConfigError(f"need M >= K >= 1, got M={self.M}, K={self.K}")
        if self.K_bar < self.K:
            raise ConfigError("K_bar must be >= K")
        if self.tau < 1 or self.tau_c <= self.tau:
            raise ConfigError(f"need tau >= 1 and tau_c > tau, got tau={self.tau}, tau_c={self.tau_c}")
        if not self.area_side_m > 0:
            raise ConfigError("area_side_m must be > 0")
        for name in ("P_u_mw", "P_p_mw", "P_d_mw", "bandwidth_hz", "carrier_hz"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.sigma_sh_db < 0:
            raise ConfigError("sigma_sh_db must be >= 0")
        if self.shadow_model not in ("iid", "correlated"):
            raise ConfigError(f"unknown shadow_model {self.shadow_model!r}")
        if not 0.0 <= self.shadow_delta <= 1.0:
            raise ConfigError("shadow_delta must lie in [0, 1]")
        if not self.decorr_dist_m > 0:
            raise ConfigError("decorr_dist_m must be > 0")

    @property
    def noise_dbm(self):
        return THERMAL_NOISE_DBM_HZ + 10 * math.log10(self.bandwidth_hz) + self.noise_figure_db

    def _normalized(self, p_mw):
        return 10 ** ((10 * math.log10(p_mw) - self.noise_dbm) / 10)

    @property
    def rho_u(self):
        return self._normalized(self.P_u_mw)

    @property
    def rho_p(self):
        return self._normalized(self.P_p_mw)

    @property
    def rho_d(self):
        return self._normalized(self.P_d_mw)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        shadow = data.get("shadow_model")
        # accept {"correlated": {"delta": .., "decorr_dist_m": ..}}
        if isinstance(shadow, dict):
            (kind, params), = shadow.items()
            data["shadow_model"] = kind
            if "delta" in params:
                data["shadow_delta"] = params["delta"]
            if "decorr_dist_m" in params:
                data["decorr_dist_m"] = params["decorr_dist_m"]
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class NetworkRealization:
    ap_positions: np.ndarray  # (M, 2) metres
    dev_positions: np.ndarray  # (K, 2) metres
    beta: np.ndarray  # (M, K) linear
    path_loss: np.ndarray = field(repr=False, default=None)
    distances: np.ndarray = field(repr=False, default=None)

    @property
    def M(self):
        return self.beta.shape[0]

    @property
    def K(self):
        return self.beta.shape[1]


def path_loss(d_m, carrier_hz=1.9e9, d0=D0_M, d1=D1_M):
    """Three-slope path loss as a linear gain.

    Slopes are 0, 20 and 35 dB/decade with breakpoints ``d0`` and ``d1``; the
    curve is continuous at both breakpoints and flat below ``d0``.
    """
    d = np.asarray(d_m, dtype=float)
    if np.any(d < 0):
        raise ConfigError("distance must be non-negative")
    L = hata_intercept_db(carrier_hz)
    d_km = d / 1000.0
    with np.errstate(divide="ignore"):
        outer = -L - 35 * np.log10(np.maximum(d_km, 1e-300))
        middle = -L - 15 * math.log10(d1 / 1000) - 20 * np.log10(np.maximum(d_km, 1e-300))
    plateau = -L - 15 * math.log10(d1 / 1000) - 20 * math.log10(d0 / 1000)
    pl_db = np.where(d > d1, outer, np.where(d > d0, middle, plateau))
    out = 10 ** (pl_db / 10)
    return out if out.ndim else float(out)


def wrap_distance(p, q, D):
    """Euclidean distance on the torus of side ``D``.  Broadcasts over leading axes."""
    delta = np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))
    delta = np.minimum(delta, D - delta)
    out = np.sqrt(np.sum(delta ** 2, axis=-1))
    return out if out.ndim else float(out)


def pairwise_distance(a, b, D=None):
    """(len(a), len(b)) distance matrix, toroidal when ``D`` is given."""
    a = np.asarray(a, dtype=float)[:, None, :]
    b = np.asarray(b, dtype=float)[None, :, :]
    if D is not None:
        return wrap_distance(a, b, D)
    return np.sqrt(np.sum((a - b) ** 2, axis=-1))


def _gaussian_field(points, decorr_dist_m, rng, side=None, jitter=1e-10, tries=5):
    # identical points must receive identical values, so factor on unique rows
    uniq, inverse = np.unique(np.asarray(points, dtype=float), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    C = 2.0 ** (-pairwise_distance(uniq, uniq, side) / decorr_dist_m)
    n = len(uniq)
    for _ in range(tries):
        try:
            L = cholesky(C + jitter * np.eye(n), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10
    else:
        raise GenerationError("shadowing covariance not positive definite after jitter escalation")
    return (L @ rng.standard_normal(n))[inverse]


def correlated_shadowing(ap_positions, dev_positions, sigma_sh_db, delta, decorr_dist_m,
                         seed=None, side=None):
    """Per-link shadow gains from an AP field and a device field.

    ``z_mk = sqrt(delta) a_m + sqrt(1 - delta) b_k`` with each field having
    covariance ``2 ** (-dist / decorr_dist_m)``; the returned gains are
    ``10 ** (sigma_sh_db * z / 10)``.  Distances wrap around when ``side`` is
    given.

    Returns
    -------
    sf : ndarray, shape (M, K)
    z : ndarray, shape (M, K)
    """
    if not 0.0 <= delta <= 1.0:
        raise ConfigError("delta must lie in [0, 1]")
    if not decorr_dist_m > 0:
        raise ConfigError("decorr_dist_m must be > 0")
    rng = np.random.default_rng(seed)
    a = _gaussian_field(ap_positions, decorr_dist_m, rng, side)
    b = _gaussian_field(dev_positions, decorr_dist_m, rng, side)
    z = math.sqrt(delta) * a[:, None] + math.sqrt(1 - delta) * b[None, :]
    return 10 ** (sigma_sh_db * z / 10), z


def generate_network(config: NetworkConfig, seed=None) -> NetworkRealization:
    """Drop APs and devices and compute the large-scale fading matrix.

    Deterministic in ``seed`` (``config.seed`` when omitted).
    """
    config.validate()
    rng = np.random.default_rng(config.seed if seed is None else seed)
    D = config.area_side_m
    aps = rng.uniform(0, D, size=(config.M, 2))
    devs = rng.uniform(0, D, size=(config.K, 2))
    side = D if config.wrap_around else None
    dist = pairwise_distance(aps, devs, side)
    pl = path_loss(dist, config.carrier_hz)
    if config.sigma_sh_db == 0:
        sf = np.ones_like(pl)
    elif config.shadow_model == "iid":
        sf = 10 ** (config.sigma_sh_db * rng.standard_normal(pl.shape) / 10)
    else:
        sf, _ = correlated_shadowing(aps, devs, config.sigma_sh_db, config.shadow_delta,
                                     config.decorr_dist_m, seed=rng, side=side)
    return NetworkRealization(aps, devs, pl * sf, path_loss=pl, distances=dist)
