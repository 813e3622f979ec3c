"""Closed-form fixtures shared by the test modules."""

import numpy as np

from calibsens.gmm import EstimationProblem, OptimizerSettings

TIGHT = OptimizerSettings(fatol=1e-14, xatol=1e-10, restarts=3, initial_step=0.1, maxfev=20000)


def ols_data(n=50, seed=12345):
    """Fixed regression dataset: Y = 1.5 X1 - 0.8 X2 + noise, X1 and X2 correlated."""
    rng = np.random.default_rng(seed)
    x1 = rng.normal(1.0, 1.0, n)
    x2 = 0.6 * x1 + rng.normal(0.0, 1.0, n)
    y = 1.5 * x1 - 0.8 * x2 + rng.normal(0.0, 0.5, n)
    return y, x1, x2


def ols_full_fit(y, x1, x2):
    X = np.column_stack([x1, x2])
    return np.linalg.lstsq(X, y, rcond=None)[0]


def ols_problem(y, x1, x2, settings=TIGHT):
    """theta = beta1, gamma = beta2; single moment mean((y - b1 x1 - b2 x2) x1)."""
    n = y.size

    def moment_fn(theta, gamma):
        resid = y - theta[0] * x1 - gamma[0] * x2
        return np.array([resid @ x1 / n])

    return EstimationProblem(
        moment_fn=moment_fn,
        W=np.eye(1),
        theta_init=np.array([0.0]),
        settings=settings,
        theta_names=("beta1",),
        gamma_names=("beta2",),
    )


def ols_beta1(y, x1, x2, beta2):
    """Closed-form minimiser of the OLS moment for fixed beta2."""
    return (y - beta2 * x2) @ x1 / (x1 @ x1)


def affine_problem(M, N, c, W=None, theta_init=None, settings=TIGHT):
    """Over-identified affine moments g(theta, gamma) = M theta + N gamma - c."""
    M = np.asarray(M, dtype=float)
    N = np.asarray(N, dtype=float)
    c = np.asarray(c, dtype=float)
    J, K = M.shape
    W = np.eye(J) if W is None else W

    def moment_fn(theta, gamma):
        return M @ theta + N @ gamma - c

    return EstimationProblem(
        moment_fn=moment_fn,
        W=W,
        theta_init=np.zeros(K) if theta_init is None else theta_init,
        settings=settings,
    )


def affine_argmin(M, N, c, W, gamma):
    """Weighted least-squares solution of the affine problem."""
    MtW = M.T @ W
    return np.linalg.solve(MtW @ M, MtW @ (c - N @ gamma))


def sign_changes(x):
    """Number of sign changes in a sequence, ignoring exact zeros."""
    s = np.sign(np.asarray(x))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))
