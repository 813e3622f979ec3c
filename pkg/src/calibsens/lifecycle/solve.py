"""Endogenous grid method for the normalised working-life problem."""

from dataclasses import dataclass

import numpy as np

from .. import kernels

__all__ = ["Policy", "SolverError", "solve_egm", "shock_nodes", "wealth_grid", "euler_residuals"]


class SolverError(RuntimeError):
    """Non-finite marginal utility while inverting the Euler equation."""


@dataclass(frozen=True)
class Policy:
    """Consumption functions for ages ``age_start..T``.

    Row ``t`` of ``m`` / ``c`` is the endogenous grid of age ``age_start + t``
    with the kink point ``(a_floor[t], 0)`` prepended; consumption is the
    linear interpolant of these points.
    """

    ages: np.ndarray
    m: np.ndarray
    c: np.ndarray
    a_floor: np.ndarray
    gamma0: float
    gamma1: float
    rho: float

    def consumption(self, age, m):
        t = int(age) - int(self.ages[0])
        x = np.atleast_1d(np.asarray(m, dtype=float))
        return kernels.interp_linear(self.m[t], self.c[t], x)


def wealth_grid(n, lo, hi):
    """``n`` double-exponentially spaced points on ``[lo, hi]``."""
    span = hi - lo
    x = np.linspace(0.0, np.log(np.log(span + 1.0) + 1.0), n)
    return lo + np.exp(np.exp(x) - 1.0) - 1.0


def gauss_hermite_lognormal(sigma, n):
    """Nodes and weights for ``exp(sigma * Z)``, ``Z`` standard normal."""
    x, w = np.polynomial.hermite.hermgauss(n)
    return np.exp(sigma * np.sqrt(2.0) * x), w / np.sqrt(np.pi)


def shock_nodes(calib):
    """Joint quadrature over permanent and transitory income shocks.

    Returns ``(perm, trans, weight)`` flattened over node pairs. The
    zero-income event enters as its own branch with probability ``p``; the
    other transitory draws are scaled by ``1/(1-p)`` as in the simulator.
    """
    n_nodes, n_w = gauss_hermite_lognormal(calib.sigma_n, calib.n_quad)
    u_nodes, u_w = gauss_hermite_lognormal(calib.sigma_u, calib.n_quad)
    p = calib.p
    perm = np.repeat(n_nodes, u_nodes.size)
    trans = np.tile(u_nodes / (1.0 - p), n_nodes.size)
    weight = (1.0 - p) * np.outer(n_w, u_w).ravel()
    if p > 0:
        perm = np.concatenate([perm, n_nodes])
        trans = np.concatenate([trans, np.zeros(n_nodes.size)])
        weight = np.concatenate([weight, p * n_w])
    return perm, trans, weight


def _growth(calib, rho, t):
    """``(G_{t+1}, f_{t+1})`` for the transition out of age index ``t``."""
    if t + 1 < calib.n_ages:
        return calib.G[t], (calib.v[t + 1] / calib.v[t]) ** (1.0 / rho)
    return calib.G_retire, 1.0


def solve_egm(pref, calib):
    """Backward induction from the linear retirement rule.

    The end-of-period wealth grid of each age starts just above the lowest
    wealth that keeps next-period consumption positive for every shock node
    (or at the borrowing limit, whichever is tighter).
    """
    beta, rho, R = pref.beta, pref.rho, calib.R
    perm, trans, weight = shock_nodes(calib)
    n_ages = calib.n_ages
    base = wealth_grid(calib.n_a, calib.a_min, calib.a_max)

    m_all = np.empty((n_ages, calib.n_a + 1))
    c_all = np.empty((n_ages, calib.n_a + 1))
    a_floor = np.empty(n_ages)

    # retirement rule c = gamma0 + gamma1 m as a two-point interpolant
    m_next = np.array([0.0, 1.0])
    c_next = np.array([calib.gamma0, calib.gamma0 + calib.gamma1])
    m_zero_next = -calib.gamma0 / calib.gamma1

    for t in range(n_ages - 1, -1, -1):
        G, f = _growth(calib, rho, t)
        psi = G * perm * f
        floor = max(-calib.borrowing_limit, float(np.max((m_zero_next - trans) * psi / R)))
        a_grid = floor + base
        c_star, bad_i, bad_q = kernels.egm_consumption(a_grid, m_next, c_next, R, beta, rho, psi, trans, weight)
        if bad_i >= 0 or not np.all(np.isfinite(c_star)):
            raise SolverError(
                f"non-finite marginal utility at age {calib.age_start + t}, "
                f"grid point {bad_i}, shock node {bad_q}"
            )
        m_all[t, 0] = floor
        c_all[t, 0] = 0.0
        m_all[t, 1:] = a_grid + c_star
        c_all[t, 1:] = c_star
        a_floor[t] = floor
        m_next, c_next, m_zero_next = m_all[t], c_all[t], floor

    return Policy(calib.ages, m_all, c_all, a_floor, calib.gamma0, calib.gamma1, rho)


def euler_residuals(policy, pref, calib, age, m):
    """Relative Euler-equation residuals at resources ``m`` for ``age < T``.

    ``|c^-rho - beta R E[(G N f)^-rho c'^-rho]| / c^-rho`` with the solver's
    quadrature. Only meaningful where the credit constraint is slack.
    """
    t = int(age) - calib.age_start
    if not 0 <= t < calib.n_ages:
        raise ValueError(f"age {age} outside working life")
    m = np.atleast_1d(np.asarray(m, dtype=float))
    c = kernels.interp_linear(policy.m[t], policy.c[t], m)
    a = m - c
    perm, trans, weight = shock_nodes(calib)
    G, f = _growth(calib, pref.rho, t)
    psi = G * perm * f
    m1 = calib.R * a[None, :] / psi[:, None] + trans[:, None]
    if t + 1 < calib.n_ages:
        c1 = kernels.interp_linear(policy.m[t + 1], policy.c[t + 1], m1.ravel()).reshape(m1.shape)
    else:
        c1 = policy.gamma0 + policy.gamma1 * m1
    rhs = pref.beta * calib.R * np.sum(weight[:, None] * (psi[:, None] * c1) ** (-pref.rho), axis=0)
    lhs = c ** (-pref.rho)
    return np.abs(lhs - rhs) / lhs
