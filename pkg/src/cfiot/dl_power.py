"""Downlink max-min power control for conjugate beamforming.

The optimal allocation maximizes the orthonormal-pilot SINR by bisection
over a second-order-cone feasibility problem.  Internally the variables
are ``x_mk = sqrt(eta_mk gamma_mk)`` so that the per-AP cone reads
``||x_m|| <= theta_m <= 1`` and device ``k`` meets target ``t`` iff::

    sum_m sqrt(rho_d gamma_mk / t) x_mk >= ||(1, sqrt(rho_d beta_1k) theta_1, ...)||

Each instance's cone problem is compiled once with the target as its only
parameter (cvxpy DPP) and re-solved along the bisection with Clarabel.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .dl_sinr import DlPowerMatrix, dl_sinr_orth, per_ap_power
from .errors import ConfigError, SolverError

log = logging.getLogger(__name__)

REL_TOL = 1e-3
FEAS_TOL = 1e-6
SOLVER = cp.CLARABEL

_OK = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)


@dataclass
class BisectionResult:
    eta: DlPowerMatrix
    t_star: float
    p_opt: np.ndarray
    bisection_steps: int
    feasibility_tol: float
    trace: list = field(default_factory=list)  # (t, feasible) per step


# Clarabel occasionally stops with "insufficient progress" at a point that
# is already converged; retry with looser settings before giving up.
_RETRY_SETTINGS = ({}, {"tol_gap_abs": 1e-7, "tol_gap_rel": 1e-7, "tol_feas": 1e-7,
                        "static_regularization_constant": 1e-7},
                   {"tol_gap_abs": 1e-6, "tol_gap_rel": 1e-6, "tol_feas": 1e-6})


def _run(problem):
    err = None
    for opts in _RETRY_SETTINGS:
        try:
            with warnings.catch_warnings():
                # inaccurate solutions are reported through the status
                warnings.simplefilter("ignore", UserWarning)
                problem.solve(solver=SOLVER, **opts)
            return problem.status
        except cp.SolverError as exc:
            err = exc
    raise SolverError(f"cone solver failed: {err}") from err


class _ConeSystem:
    """Cone system for one instance; only ``r = sqrt(t)`` changes between solves.

    Device cones are scaled by ``sqrt(t)``:
    ``sum_m sqrt(rho_d gamma_mk) x_mk >= r ||(1, sqrt(rho_d beta_mk) theta_m)||``.
    Keeping the instance data constant keeps the compiled problem linear in
    size; a parameter matrix per device would not be.
    """

    def __init__(self, gamma, beta, rho_d, objective):
        M, K = gamma.shape
        self.x = cp.Variable((M, K), nonneg=True)
        self.theta = cp.Variable(M, nonneg=True)
        self.r = cp.Parameter(nonneg=True)
        self.slack = cp.Variable()
        lhs = cp.sum(cp.multiply(np.sqrt(rho_d * gamma), self.x), axis=0)
        spread = cp.multiply(np.sqrt(rho_d * beta), cp.reshape(self.theta, (M, 1), order="F") @ np.ones((1, K)))
        rhs = cp.norm(cp.vstack([np.ones((1, K)), spread]), 2, axis=0)
        cons = [cp.norm(self.x, 2, axis=1) <= self.theta, self.theta <= 1]
        if objective == "margin":
            # always feasible; the optimal slack / r is decreasing in t
            cons += [self.r * rhs + self.slack <= lhs, self.slack <= self.r]
            obj = cp.Maximize(self.slack)
        elif objective == "min_power":
            cons.append(self.r * rhs <= lhs)
            obj = cp.Minimize(cp.sum_squares(self.x))
        else:
            raise ValueError(objective)
        self.problem = cp.Problem(obj, cons)

    def solve(self, t):
        self.r.value = float(np.sqrt(t))
        return _run(self.problem)


def _max_coherent(w, r):
    """max s  s.t. sum_m w_mk x_mk >= s for all k and ||x_m|| <= r_m."""
    x = cp.Variable(w.shape, nonneg=True)
    s = cp.Variable()
    cons = [cp.norm(x, 2, axis=1) <= r, cp.sum(cp.multiply(w, x), axis=0) >= s]
    problem = cp.Problem(cp.Maximize(s), cons)
    return _run(problem), x


def _validate(gamma, beta):
    gamma = np.asarray(gamma, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if gamma.shape != beta.shape or gamma.ndim != 2:
        raise ConfigError("gamma and beta must be (M, K) arrays of equal shape")
    if np.any(gamma <= 0) or np.any(beta <= 0):
        raise ConfigError("gamma and beta must be positive")
    return gamma, beta


def t_upper_bound(gamma, rho_d):
    """``min_k rho_d (sum_m sqrt(gamma_mk))^2``, an upper bound on the max-min SINR."""
    return float(np.min(rho_d * np.sqrt(gamma).sum(axis=0) ** 2))


def cone_residuals(x, theta, t, gamma, beta, rho_d):
    """Largest violation of the per-AP and per-device cones at ``(x, theta)``."""
    ap = max(float(np.max(np.linalg.norm(x, axis=1) - theta)), float(np.max(theta - 1.0)),
             float(np.max(-x)), float(np.max(-theta)))
    lhs = np.einsum("mk,mk->k", np.sqrt(rho_d * gamma / t), x)
    rhs = np.sqrt(1.0 + rho_d * (beta * theta[:, None] ** 2).sum(axis=0))
    return max(ap, float(np.max(rhs - lhs)))


def _solution(sys_):
    return np.maximum(sys_.x.value, 0.0), np.clip(sys_.theta.value, 0.0, None)


def _feasible(sys_, t, gamma, beta, rho_d, feas_tol):
    status = sys_.solve(t)
    if status not in _OK:
        raise SolverError(f"cone solver returned status {status!r} at t={t:.6g}")
    # slack in the units of the unscaled device cones
    if float(sys_.slack.value) / np.sqrt(t) < -feas_tol:
        return False, None
    x, theta = _solution(sys_)
    # pull the point back onto the AP cones before replaying the residuals
    x = x / np.maximum(np.linalg.norm(x, axis=1), 1.0)[:, None]
    theta = np.minimum(np.maximum(theta, np.linalg.norm(x, axis=1)), 1.0)
    res = cone_residuals(x, theta, t, gamma, beta, rho_d)
    if res > feas_tol:
        raise SolverError(f"positive margin but replayed residual {res:.3g} at t={t:.6g}")
    return True, x / np.sqrt(gamma)


def socp_feasible(t, gamma, beta, rho_d, feas_tol=FEAS_TOL):
    """Decide whether every device can reach SINR ``t``.

    The cone system is solved with a common slack on the device cones that
    is maximized; the verdict is feasible iff that slack is ``>= -feas_tol``.
    Unlike a pure feasibility solve this never stalls near the boundary.

    Returns
    -------
    feasible : bool
    sigma : ndarray (M, K) or None
        ``sqrt(eta)`` of a point meeting every cone within ``feas_tol``.
    """
    if not t > 0:
        raise ConfigError("target SINR must be positive")
    gamma, beta = _validate(gamma, beta)
    return _feasible(_ConeSystem(gamma, beta, rho_d, "margin"), t, gamma, beta, rho_d, feas_tol)


def maxmin_bisection(gamma, beta, rho_d, rel_tol=REL_TOL, feas_tol=FEAS_TOL):
    """Optimal max-min SINR allocation under per-AP budgets.

    Bisects the common target over ``[0, t_upper_bound]``.  The returned
    allocation is the minimum-total-power point at the last feasible target,
    which pins down ``p_opt`` when the max-min optimum leaves slack.
    """
    gamma, beta = _validate(gamma, beta)
    system = _ConeSystem(gamma, beta, rho_d, "margin")
    lo, hi = 0.0, t_upper_bound(gamma, rho_d)
    trace = []
    sigma = None
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        ok, s = _feasible(system, mid, gamma, beta, rho_d, feas_tol)
        trace.append((mid, ok))
        if ok:
            lo, sigma = mid, s
        else:
            hi = mid
    if sigma is None:
        raise SolverError("no feasible target found above zero")
    refine = _ConeSystem(gamma, beta, rho_d, "min_power")
    try:
        status = refine.solve(lo)
    except SolverError as exc:
        log.info("min-power refinement failed (%s); keeping feasibility point", exc)
        status = None
    if status in _OK:
        x, _ = _solution(refine)
        if cone_residuals(x, np.linalg.norm(x, axis=1), lo, gamma, beta, rho_d) <= feas_tol:
            sigma = x / np.sqrt(gamma)
        else:
            log.info("min-power refinement missed tolerance; keeping feasibility point")
    eta = sigma ** 2
    p = per_ap_power(eta, gamma)
    over = p > 1.0
    if np.any(over):  # residual-level overshoot only
        eta[over] /= p[over, None]
        p = per_ap_power(eta, gamma)
    t_star = float(dl_sinr_orth(eta, gamma, beta, rho_d).min())
    return BisectionResult(eta=DlPowerMatrix(eta=eta, p=p), t_star=t_star, p_opt=p,
                           bisection_steps=len(trace), feasibility_tol=feas_tol, trace=trace)


def maxmin_fixed_p(p, gamma, beta, rho_d):
    """Max-min allocation with each AP's power fixed to ``p_m``.

    With ``p`` fixed every SINR denominator is a constant, so the problem is
    the concave program ``max min_k (sum_m sqrt(rho_d gamma_mk) x_mk) / c_k``
    over ``||x_m|| <= sqrt(p_m)``, solved in one cone program.  Each AP's
    row is then rescaled to spend exactly ``p_m``.

    Returns
    -------
    DlPowerMatrix, float
        Allocation and its minimum SINR.
    """
    gamma, beta = _validate(gamma, beta)
    p = np.asarray(p, dtype=float)
    M, K = gamma.shape
    if p.shape != (M,) or np.any(p < 0) or np.any(p > 1 + 1e-12):
        raise ConfigError("p must be an M-vector in [0, 1]")
    p = np.minimum(p, 1.0)
    if not np.any(p > 0):
        eta = np.zeros((M, K))
        return DlPowerMatrix(eta=eta, p=np.zeros(M)), 0.0
    den = np.sqrt(1.0 + rho_d * p @ beta)
    status, xv = _max_coherent(np.sqrt(rho_d * gamma) / den, np.sqrt(p))
    if status not in _OK:
        raise SolverError(f"fixed-power solve returned status {status!r}")
    x = np.maximum(xv.value, 0.0)
    norms = np.linalg.norm(x, axis=1)
    live = norms > 0
    x[live] *= (np.sqrt(p[live]) / norms[live])[:, None]
    idle = (~live) & (p > 0)
    x[idle] = np.sqrt(p[idle] / K)[:, None]
    eta = x ** 2 / gamma
    out = DlPowerMatrix(eta=eta, p=per_ap_power(eta, gamma))
    return out, float(dl_sinr_orth(eta, gamma, beta, rho_d).min())


def uniform_power(p, gamma):
    """Equal coefficients per AP: ``eta_mk = p_m / sum_k gamma_mk``."""
    p = np.asarray(p, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(p < 0) or np.any(p > 1 + 1e-12):
        raise ConfigError("p must lie in [0, 1]")
    eta = np.repeat((p / gamma.sum(axis=1))[:, None], gamma.shape[1], axis=1)
    return DlPowerMatrix(eta=eta, p=p.copy())
