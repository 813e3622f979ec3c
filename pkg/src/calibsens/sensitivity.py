"""Sensitivity of GMM estimates to calibrated parameters.

Given the moment function ``g``, its Jacobians ``G`` (estimated parameters)
and ``D`` (calibrated parameters) and the weight ``W`` at the estimate, the
derivative of the estimator with respect to the calibration follows from the
implicit function theorem applied to the first-order condition
``G' W g = 0``.
"""

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "MomentBundle",
    "SensitivityResult",
    "QoIJacobians",
    "GeneralizationResult",
    "SingularityError",
    "lambda_matrix",
    "sensitivity_approx",
    "sensitivity_robust",
    "elasticities",
    "qoi_sensitivity",
    "aggregate_delta",
    "extrapolate_percent",
    "generalization_sensitivity",
    "COND_LIMIT",
]

COND_LIMIT = 1e12


class SingularityError(np.linalg.LinAlgError):
    """The matrix to invert is numerically singular.

    For ``G'WG`` this signals local non-identification of the estimated
    parameters.
    """

    def __init__(self, what, cond):
        self.cond = cond
        super().__init__(f"{what} is numerically singular (condition number {cond:.3e})")


def _names(names, n, prefix):
    if names is None:
        return tuple(f"{prefix}{i}" for i in range(n))
    names = tuple(str(x) for x in names)
    if len(names) != n:
        raise ValueError(f"expected {n} {prefix} names, got {len(names)}")
    if len(set(names)) != n:
        raise ValueError(f"{prefix} names are not unique")
    return names


@dataclass(frozen=True)
class MomentBundle:
    """Moments and derivatives at ``(theta_hat, gamma_hat)``.

    ``C_theta`` (JK x K) and ``C_gamma`` (JK x L) are optional but come as a
    pair; their rows follow ``vec(G')`` (see ``numdiff.stacked_second_derivatives``).
    """

    g: np.ndarray
    G: np.ndarray
    D: np.ndarray
    W: np.ndarray
    theta_hat: np.ndarray
    gamma_hat: np.ndarray
    C_theta: np.ndarray = None
    C_gamma: np.ndarray = None
    theta_names: tuple = None
    gamma_names: tuple = None
    moment_names: tuple = None

    def __post_init__(self):
        def arr(name, ndim):
            v = np.array(getattr(self, name), dtype=float)
            if v.ndim != ndim:
                raise ValueError(f"{name} must be {ndim}-dimensional, got shape {v.shape}")
            object.__setattr__(self, name, v)
            return v

        g = arr("g", 1)
        G = arr("G", 2)
        D = arr("D", 2)
        W = arr("W", 2)
        th = arr("theta_hat", 1)
        ga = arr("gamma_hat", 1)
        J = g.size
        K = th.size
        L = ga.size
        if G.shape != (J, K):
            raise ValueError(f"G has shape {G.shape}, expected {(J, K)}")
        if D.shape != (J, L):
            raise ValueError(f"D has shape {D.shape}, expected {(J, L)}")
        if W.shape != (J, J):
            raise ValueError(f"W has shape {W.shape}, expected {(J, J)}")
        if not np.allclose(W, W.T, rtol=0.0, atol=1e-10):
            raise ValueError("W is not symmetric within 1e-10")
        if (self.C_theta is None) != (self.C_gamma is None):
            raise ValueError("C_theta and C_gamma must be given together")
        if self.C_theta is not None:
            Ct = arr("C_theta", 2)
            Cg = arr("C_gamma", 2)
            if Ct.shape != (J * K, K):
                raise ValueError(f"C_theta has shape {Ct.shape}, expected {(J * K, K)}")
            if Cg.shape != (J * K, L):
                raise ValueError(f"C_gamma has shape {Cg.shape}, expected {(J * K, L)}")
        object.__setattr__(self, "theta_names", _names(self.theta_names, K, "theta"))
        object.__setattr__(self, "gamma_names", _names(self.gamma_names, L, "gamma"))
        object.__setattr__(self, "moment_names", _names(self.moment_names, J, "g"))

    @property
    def shape(self):
        """``(J, K, L)``."""
        return self.g.size, self.theta_hat.size, self.gamma_hat.size

    @property
    def has_second_order(self):
        return self.C_theta is not None

    def with_weight(self, W):
        return replace(self, W=W)


@dataclass(frozen=True)
class SensitivityResult:
    S: np.ndarray
    E: np.ma.MaskedArray
    method: str
    condition_number: float
    theta_names: tuple = ()
    gamma_names: tuple = ()


@dataclass(frozen=True)
class GeneralizationResult(SensitivityResult):
    one_step: np.ndarray = field(default=None)


@dataclass(frozen=True)
class QoIJacobians:
    """Jacobians of statistics ``h(theta, gamma)``: ``A = dh/dgamma'``, ``B = dh/dtheta'``."""

    A: np.ndarray
    B: np.ndarray
    h_hat: np.ndarray
    h_names: tuple = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        h = np.atleast_1d(np.asarray(self.h_hat, dtype=float))
        if A.shape[0] != h.size or B.shape[0] != h.size:
            raise ValueError(f"A {A.shape} and B {B.shape} must have {h.size} rows")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "h_hat", h)
        object.__setattr__(self, "h_names", _names(self.h_names, h.size, "h"))


def _solve_checked(M, rhs, what, cond_limit):
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularityError(what, cond)
    return np.linalg.solve(M, rhs), cond


def lambda_matrix(G, W, cond_limit=COND_LIMIT):
    """``-(G'WG)^{-1} G'W`` (K x J), the sensitivity of estimates to moments."""
    G = np.asarray(G, dtype=float)
    W = np.asarray(W, dtype=float)
    GtW = G.T @ W
    lam, _ = _solve_checked(GtW @ G, -GtW, "G'WG", cond_limit)
    return lam


def elasticities(S, theta_hat, gamma_hat):
    """``S[k, l] * gamma_hat[l] / theta_hat[k]``, masked where either is zero."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    th = np.asarray(theta_hat, dtype=float).reshape(-1, 1)
    ga = np.asarray(gamma_hat, dtype=float).reshape(1, -1)
    undefined = (th == 0) | (ga == 0)
    undefined = np.broadcast_to(undefined, S.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        E = np.where(undefined, 0.0, S * ga / np.where(th == 0, 1.0, th))
    return np.ma.MaskedArray(E, mask=undefined.copy())


def _result(S, bundle, method, cond, cls=SensitivityResult, **extra):
    return cls(
        S=S,
        E=elasticities(S, bundle.theta_hat, bundle.gamma_hat),
        method=method,
        condition_number=cond,
        theta_names=bundle.theta_names,
        gamma_names=bundle.gamma_names,
        **extra,
    )


def sensitivity_approx(bundle, cond_limit=COND_LIMIT):
    """``S = Lambda D``; exact when the second-order terms vanish."""
    GtW = bundle.G.T @ bundle.W
    S, cond = _solve_checked(GtW @ bundle.G, -GtW @ bundle.D, "G'WG", cond_limit)
    return _result(S, bundle, "approx", cond)


def kron_gw_times(gW, C, K):
    """``(gW ⊗ I_K) @ C`` without forming the Kronecker product.

    ``gW`` has length J and ``C`` has ``J*K`` rows.
    """
    J = gW.size
    m = C.shape[1]
    return (gW @ C.reshape(J, K * m)).reshape(K, m)


def sensitivity_robust(bundle, cond_limit=COND_LIMIT):
    """Full implicit-function derivative including second-order terms."""
    if not bundle.has_second_order:
        raise ValueError("robust sensitivity needs C_theta and C_gamma in the bundle")
    _, K, _ = bundle.shape
    gW = bundle.g @ bundle.W
    GtW = bundle.G.T @ bundle.W
    lhs = kron_gw_times(gW, bundle.C_theta, K) + GtW @ bundle.G
    rhs = kron_gw_times(gW, bundle.C_gamma, K) + GtW @ bundle.D
    S, cond = _solve_checked(lhs, -rhs, "robust bracket matrix", cond_limit)
    return _result(S, bundle, "robust", cond)


def qoi_sensitivity(A, B, S):
    """Total derivative ``H = A + B S`` of statistics with respect to the calibration."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if B.shape[1] != S.shape[0] or A.shape != (B.shape[0], S.shape[1]):
        raise ValueError(f"dimension mismatch: A {A.shape}, B {B.shape}, S {S.shape}")
    return A + B @ S


def aggregate_delta(S, delta_gamma):
    """First-order change in the estimates from a joint change ``delta_gamma``."""
    return np.atleast_2d(np.asarray(S, dtype=float)) @ np.asarray(delta_gamma, dtype=float)


def extrapolate_percent(E_column, percents):
    """Linear extrapolation of elasticities to finite percent changes.

    Returns a masked array of shape ``(len(E_column), len(percents))``;
    masked elasticities give masked cells.
    """
    e = np.ma.asarray(E_column, dtype=float).ravel()
    p = np.asarray(list(percents), dtype=float)
    out = np.ma.outer(e, p) if p.size else np.ma.zeros((e.size, 0))
    return np.ma.MaskedArray(out.filled(0.0), mask=np.ma.getmaskarray(out))


def generalization_sensitivity(bundle, delta_gamma2=None, cond_limit=COND_LIMIT):
    """Sensitivity to parameters that are zero in the estimated (restricted) model.

    ``bundle.D`` must hold ``dg/dgamma2`` evaluated at ``gamma2 = 0``. The
    arithmetic is that of ``sensitivity_approx``; ``one_step`` is the
    one-step update ``theta_hat + S delta_gamma2`` of the general model.
    """
    base = sensitivity_approx(bundle, cond_limit)
    one_step = None
    if delta_gamma2 is not None:
        one_step = bundle.theta_hat + aggregate_delta(base.S, delta_gamma2)
    return GeneralizationResult(
        S=base.S,
        E=base.E,
        method="generalization",
        condition_number=base.condition_number,
        theta_names=base.theta_names,
        gamma_names=base.gamma_names,
        one_step=one_step,
    )
