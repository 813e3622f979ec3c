"""Minimum-distance estimation and brute-force re-estimation."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import numdiff
from .sensitivity import MomentBundle

__all__ = [
    "OptimizerSettings",
    "EstimationProblem",
    "EstimateResult",
    "EstimationError",
    "BruteForceResult",
    "criterion",
    "estimate",
    "build_bundle",
    "brute_force_sensitivity",
    "perturbed_gamma",
]

log = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    """The optimizer did not converge; ``best`` holds the best point found."""

    def __init__(self, message, best):
        self.best = best
        super().__init__(message)


@dataclass(frozen=True)
class OptimizerSettings:
    fatol: float = 1e-10
    xatol: float = 1e-8
    restarts: int = 3
    initial_step: float = 0.05
    maxfev: int = 4000


@dataclass
class EstimationProblem:
    """``argmin_theta g(theta, gamma)' W g(theta, gamma)`` over a box.

    ``moment_fn(theta, gamma)`` must be deterministic: repeated calls with the
    same arguments return identical arrays (simulated moments reuse their
    random draws). ``theta_bounds`` holds one ``(lo, hi)`` pair per
    coordinate, with ``None`` entries for unbounded sides, or is ``None``.
    """

    moment_fn: object
    W: np.ndarray
    theta_init: np.ndarray
    theta_bounds: tuple = None
    settings: OptimizerSettings = field(default_factory=OptimizerSettings)
    theta_names: tuple = None
    gamma_names: tuple = None
    moment_names: tuple = None

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.theta_init = np.atleast_1d(np.asarray(self.theta_init, dtype=float))
        K = self.theta_init.size
        if self.theta_bounds is None:
            self.theta_bounds = ((None, None),) * K
        self.theta_bounds = tuple(tuple(b) for b in self.theta_bounds)
        if len(self.theta_bounds) != K:
            raise ValueError("one (lo, hi) pair per parameter is required")
        if not self.within_bounds(self.theta_init):
            raise ValueError("theta_init lies outside theta_bounds")

    def within_bounds(self, theta):
        for x, (lo, hi) in zip(theta, self.theta_bounds):
            if (lo is not None and not x > lo) or (hi is not None and not x < hi):
                return False
        return True

    # logistic map between the open box and R^K (identity on unbounded axes)
    def to_free(self, theta):
        z = np.empty(len(theta))
        for i, (x, (lo, hi)) in enumerate(zip(theta, self.theta_bounds)):
            if lo is not None and hi is not None:
                z[i] = np.log((x - lo) / (hi - x))
            elif lo is not None:
                z[i] = np.log(x - lo)
            elif hi is not None:
                z[i] = -np.log(hi - x)
            else:
                z[i] = x
        return z

    def from_free(self, z):
        theta = np.empty(len(z))
        for i, (zi, (lo, hi)) in enumerate(zip(z, self.theta_bounds)):
            if lo is not None and hi is not None:
                x = lo + (hi - lo) / (1.0 + np.exp(-zi))
            elif lo is not None:
                x = lo + np.exp(zi)
            elif hi is not None:
                x = hi - np.exp(-zi)
            else:
                x = zi
            # far out in z the map rounds onto the bound; keep the box open
            if lo is not None and x <= lo:
                x = np.nextafter(lo, np.inf)
            if hi is not None and x >= hi:
                x = np.nextafter(hi, -np.inf)
            theta[i] = x
        return theta


@dataclass(frozen=True)
class EstimateResult:
    theta_hat: np.ndarray
    criterion_value: float
    converged: bool
    n_evals: int


def criterion(problem, theta, gamma):
    """Quadratic form ``g' W g`` at ``(theta, gamma)``."""
    theta = np.asarray(theta, dtype=float)
    if not problem.within_bounds(theta):
        raise ValueError(f"theta {theta} outside bounds {problem.theta_bounds}")
    g = np.asarray(problem.moment_fn(theta, np.asarray(gamma, dtype=float)), dtype=float)
    return float(g @ problem.W @ g)


def _simplex(z0, step):
    K = z0.size
    sim = np.tile(z0, (K + 1, 1))
    for k in range(K):
        sim[k + 1, k] += step * max(abs(z0[k]), 1.0)
    return sim


def estimate(problem, gamma, theta_init=None):
    """Nelder-Mead in logistic coordinates, restarted from the best point.

    Restarts stop early once a restart improves the criterion by less than
    ``settings.fatol`` and moves the point by at most ``settings.xatol``.
    Raises ``EstimationError`` when the final run did not meet the
    tolerances.
    """
    s = problem.settings
    gamma = np.asarray(gamma, dtype=float)
    start = problem.theta_init if theta_init is None else np.asarray(theta_init, dtype=float)
    n_evals = 0

    def obj(z):
        try:
            g = np.asarray(problem.moment_fn(problem.from_free(z), gamma), dtype=float)
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            log.debug("moment evaluation failed at z=%s: %s", z, exc)
            return np.inf
        val = float(g @ problem.W @ g)
        return val if np.isfinite(val) else np.inf

    z = problem.to_free(start)
    best_f = obj(z)
    n_evals += 1
    converged = False
    for attempt in range(s.restarts + 1):
        # failed points enter the simplex as inf; inf - inf in the stop test is expected
        with np.errstate(invalid="ignore"):
            res = minimize(
                obj,
                z,
                method="Nelder-Mead",
                options={
                    "xatol": s.xatol,
                    "fatol": s.fatol,
                    "maxfev": s.maxfev,
                    "initial_simplex": _simplex(z, s.initial_step),
                },
            )
            improvement = best_f - res.fun if np.isfinite(best_f) else np.inf
        n_evals += res.nfev
        moved = 0.0
        if res.fun <= best_f:
            moved = float(np.max(np.abs(res.x - z)))
            z, best_f = res.x, float(res.fun)
        converged = bool(res.success)
        log.debug("restart %d: f=%.6e improvement=%.3e moved=%.3e", attempt, res.fun, improvement, moved)
        # a restart that neither improves nor moves confirms the optimum
        if converged and improvement < s.fatol and moved <= s.xatol:
            break
    theta_hat = problem.from_free(z)
    result = EstimateResult(theta_hat, best_f, converged, n_evals)
    if not np.isfinite(best_f):
        raise EstimationError("the moment function failed at every point tried", result)
    if not converged:
        raise EstimationError(f"no convergence after {s.restarts} restarts", result)
    return result


def build_bundle(problem, theta_hat, gamma_hat, with_second_order=False, policy=numdiff.DEFAULT_POLICY):
    """Moments and finite-difference derivatives at the estimate."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    fn = problem.moment_fn
    g = np.asarray(fn(theta_hat, gamma_hat), dtype=float)
    G = numdiff.jacobian(lambda t: fn(t, gamma_hat), theta_hat, policy, f0=g)
    D = numdiff.jacobian(lambda c: fn(theta_hat, c), gamma_hat, policy, f0=g)
    C_theta = C_gamma = None
    if with_second_order:
        C_theta, C_gamma = numdiff.stacked_second_derivatives(fn, theta_hat, gamma_hat, policy)
    return MomentBundle(
        g=g,
        G=G,
        D=D,
        W=problem.W,
        theta_hat=theta_hat,
        gamma_hat=gamma_hat,
        C_theta=C_theta,
        C_gamma=C_gamma,
        theta_names=problem.theta_names,
        gamma_names=problem.gamma_names,
        moment_names=problem.moment_names,
    )


def perturbed_gamma(gamma_hat, index, eps_percent):
    """``gamma_hat`` with coordinate ``index`` scaled by ``1 + eps_percent/100``."""
    out = np.array(gamma_hat, dtype=float)
    out[index] *= 1.0 + eps_percent / 100.0
    return out


@dataclass(frozen=True)
class BruteForceResult:
    """Percent changes from re-estimation at ``gamma_hat`` scaled by ``1 + eps/100``.

    ``percent`` is K x L and ``qoi_percent`` F x L (or ``None``); columns whose
    re-estimation failed are masked. ``theta_tilde`` is K x L.
    """

    eps_percent: float
    percent: np.ma.MaskedArray
    theta_tilde: np.ndarray
    qoi_percent: np.ma.MaskedArray = None
    failed: tuple = ()

    @property
    def elasticity(self):
        return self.percent / self.eps_percent


def brute_force_sensitivity(problem, theta_hat, gamma_hat, eps_percent, coordinates=None, qoi_fn=None):
    """Re-estimate after a percent change in each selected calibrated parameter.

    Each re-estimation is warm-started at ``theta_hat`` and uses the same
    (deterministic) moment function, so simulation draws are common across
    the baseline and every perturbation. Failed coordinates are masked and
    listed in ``failed``; the others proceed.
    """
    if eps_percent == 0:
        raise ValueError("eps_percent must be nonzero")
    theta_hat = np.asarray(theta_hat, dtype=float)
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    K, L = theta_hat.size, gamma_hat.size
    coordinates = range(L) if coordinates is None else list(coordinates)
    pct = np.zeros((K, L))
    tilde = np.full((K, L), np.nan)
    mask = np.ones((K, L), dtype=bool)
    h_hat = None
    if qoi_fn is not None:
        h_hat = np.atleast_1d(np.asarray(qoi_fn(theta_hat, gamma_hat), dtype=float))
        qpct = np.zeros((h_hat.size, L))
        qmask = np.ones((h_hat.size, L), dtype=bool)
    failed = []
    for l in coordinates:
        gamma_l = perturbed_gamma(gamma_hat, l, eps_percent)
        try:
            res = estimate(problem, gamma_l, theta_init=theta_hat)
        except EstimationError as exc:
            log.warning("re-estimation failed for coordinate %d: %s", l, exc)
            failed.append(l)
            continue
        tilde[:, l] = res.theta_hat
        with np.errstate(divide="ignore", invalid="ignore"):
            pct[:, l] = (res.theta_hat - theta_hat) / theta_hat * 100.0
        mask[:, l] = theta_hat == 0
        if qoi_fn is not None:
            h_l = np.atleast_1d(np.asarray(qoi_fn(res.theta_hat, gamma_l), dtype=float))
            with np.errstate(divide="ignore", invalid="ignore"):
                qpct[:, l] = (h_l - h_hat) / h_hat * 100.0
            qmask[:, l] = h_hat == 0
    percent = np.ma.MaskedArray(np.where(mask, 0.0, pct), mask=mask)
    qoi = None
    if qoi_fn is not None:
        qoi = np.ma.MaskedArray(np.where(qmask, 0.0, qpct), mask=qmask)
    return BruteForceResult(eps_percent, percent, tilde, qoi, tuple(failed))
