"""Hot loops of the life-cycle fixture.

Every kernel exists twice: a loop version compiled with numba and a
vectorised numpy version. ``USE_NUMBA`` (see ``_accel``) picks the exported
name; both are importable under their private names for testing and
benchmarking.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = ["interp_linear", "egm_consumption", "simulate_paths", "USE_NUMBA"]


# ---------------------------------------------------------------------------
# linear interpolation with linear extrapolation at both ends


def _interp_numpy(xp, fp, x):
    n = xp.shape[0]
    idx = np.searchsorted(xp, x, side="right") - 1
    np.clip(idx, 0, n - 2, out=idx)
    x0 = xp[idx]
    f0 = fp[idx]
    slope = (fp[idx + 1] - f0) / (xp[idx + 1] - x0)
    return f0 + slope * (x - x0)


@njit
def _interp_point(xp, fp, xi):
    n = xp.shape[0]
    lo = 0
    hi = n - 1
    # largest lo with xp[lo] <= xi, clamped to a valid segment
    if xi <= xp[0]:
        lo = 0
    elif xi >= xp[n - 1]:
        lo = n - 2
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if xp[mid] <= xi:
                lo = mid
            else:
                hi = mid
    x0 = xp[lo]
    f0 = fp[lo]
    slope = (fp[lo + 1] - f0) / (xp[lo + 1] - x0)
    return f0 + slope * (xi - x0)


@njit
def _interp_loops(xp, fp, x):
    out = np.empty(x.shape[0])
    for i in range(x.shape[0]):
        out[i] = _interp_point(xp, fp, x[i])
    return out


# ---------------------------------------------------------------------------
# inverted Euler equation on the end-of-period wealth grid


def _egm_numpy(a_grid, m_next, c_next, R, beta, rho, psi, u, w):
    m1 = R * a_grid[None, :] / psi[:, None] + u[:, None]
    c1 = _interp_numpy(m_next, c_next, m1.ravel()).reshape(m1.shape)
    bad = ~(c1 > 0.0)
    if bad.any():
        q, i = np.argwhere(bad)[0]
        return np.full(a_grid.shape[0], np.nan), i, q
    mu = (psi[:, None] * c1) ** (-rho)
    acc = np.zeros(a_grid.shape[0])
    for q in range(psi.shape[0]):
        acc += w[q] * mu[q]
    return (beta * R * acc) ** (-1.0 / rho), -1, -1


@njit
def _egm_loops(a_grid, m_next, c_next, R, beta, rho, psi, u, w):
    na = a_grid.shape[0]
    nq = psi.shape[0]
    out = np.empty(na)
    for i in range(na):
        acc = 0.0
        for q in range(nq):
            m1 = R * a_grid[i] / psi[q] + u[q]
            c1 = _interp_point(m_next, c_next, m1)
            if not c1 > 0.0:
                out[:] = np.nan
                return out, i, q
            acc += w[q] * (psi[q] * c1) ** (-rho)
        out[i] = (beta * R * acc) ** (-1.0 / rho)
    return out, -1, -1


# ---------------------------------------------------------------------------
# forward simulation of normalised resources and consumption; arrays are
# age-major: psi[t], u[t] hold the shocks of the transition from age t to t+1


def _simulate_numpy(m_grids, c_grids, m0, psi, u, R):
    n_ages, n = m_grids.shape[0], m0.shape[0]
    m = np.empty((n_ages, n))
    c = np.empty((n_ages, n))
    m[0] = m0
    for t in range(n_ages):
        c[t] = _interp_numpy(m_grids[t], c_grids[t], m[t])
        if t + 1 < n_ages:
            m[t + 1] = R * (m[t] - c[t]) / psi[t] + u[t]
    return m, c


@njit
def _simulate_loops(m_grids, c_grids, m0, psi, u, R):
    n_ages = m_grids.shape[0]
    n = m0.shape[0]
    m = np.empty((n_ages, n))
    c = np.empty((n_ages, n))
    m[0, :] = m0
    for t in range(n_ages):
        xp = m_grids[t]
        fp = c_grids[t]
        for j in range(n):
            cj = _interp_point(xp, fp, m[t, j])
            c[t, j] = cj
            if t + 1 < n_ages:
                m[t + 1, j] = R * (m[t, j] - cj) / psi[t, j] + u[t, j]
    return m, c


if USE_NUMBA:
    interp_linear = _interp_loops
    egm_consumption = _egm_loops
    simulate_paths = _simulate_loops
else:
    interp_linear = _interp_numpy
    egm_consumption = _egm_numpy
    simulate_paths = _simulate_numpy
