"""Central finite-difference Jacobians and stacked second derivatives."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StepPolicy",
    "DifferentiationError",
    "DegenerateWeightError",
    "jacobian",
    "stacked_second_derivatives",
    "moment_variance_weight",
]


class DifferentiationError(RuntimeError):
    """A perturbed function evaluation failed or returned non-finite values."""

    def __init__(self, coordinate, message):
        self.coordinate = coordinate
        super().__init__(f"differentiation failed at coordinate {coordinate}: {message}")


class DegenerateWeightError(ValueError):
    """A moment has zero variance, so its inverse-variance weight is undefined."""


@dataclass(frozen=True)
class StepPolicy:
    """Relative step sizes for central differences.

    The step for coordinate ``x_i`` is ``max(|x_i|, 1) * rel_step``, never
    below ``floor``.
    """

    rel_step_first: float = 1e-4
    rel_step_second: float = 1e-3
    floor: float = 1e-8
    scheme: str = "central"

    def __post_init__(self):
        if min(self.rel_step_first, self.rel_step_second, self.floor) <= 0:
            raise ValueError("step sizes must be strictly positive")
        if self.scheme != "central":
            raise ValueError(f"unsupported scheme {self.scheme!r}")

    def steps(self, x, second=False):
        rel = self.rel_step_second if second else self.rel_step_first
        x = np.asarray(x, dtype=float)
        return np.maximum(np.maximum(np.abs(x), 1.0) * rel, self.floor)


DEFAULT_POLICY = StepPolicy()


def _evaluate(f, x):
    try:
        y = np.atleast_1d(np.asarray(f(x), dtype=float))
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        return None, str(exc)
    if not np.all(np.isfinite(y)):
        return None, "non-finite output"
    return y, None


def jacobian(f, x, policy=DEFAULT_POLICY, *, f0=None, info=None, second=False):
    """Central-difference Jacobian of ``f`` at ``x``.

    Column ``i`` is ``(f(x + h_i e_i) - f(x - h_i e_i)) / (2 h_i)``. When one
    side of the stencil fails the one-sided difference against ``f(x)`` is
    used instead and the coordinate is appended to ``info["one_sided"]``
    (if ``info`` is a dict). Evaluation order is fixed: coordinate by
    coordinate, plus side first.

    Args:
        f: callable mapping a 1d array of length m to a 1d array of length J.
        x: evaluation point.
        policy: step policy.
        f0: optional precomputed ``f(x)``, only used by the one-sided fallback.
        info: optional dict receiving fallback metadata.
        second: use ``policy.rel_step_second`` instead of the first-order step.

    Returns:
        J x m array.
    """
    x = np.asarray(x, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    h = policy.steps(x, second=second)
    cols = []
    one_sided = []
    for i in range(x.size):
        xp = x.copy()
        xp[i] += h[i]
        xm = x.copy()
        xm[i] -= h[i]
        yp, err_p = _evaluate(f, xp)
        ym, err_m = _evaluate(f, xm)
        if yp is not None and ym is not None:
            cols.append((yp - ym) / (2.0 * h[i]))
            continue
        if yp is None and ym is None:
            raise DifferentiationError(i, err_p)
        if f0 is None:
            f0, err0 = _evaluate(f, x)
            if f0 is None:
                raise DifferentiationError(i, f"base point failed: {err0}")
        f0 = np.atleast_1d(np.asarray(f0, dtype=float))
        cols.append((yp - f0) / h[i] if yp is not None else (f0 - ym) / h[i])
        one_sided.append(i)
    if info is not None:
        info.setdefault("one_sided", []).extend(one_sided)
    return np.column_stack(cols) if cols else np.empty((0, 0))


def stacked_second_derivatives(g, theta, gamma, policy=DEFAULT_POLICY):
    """Second-derivative blocks of a moment function ``g(theta, gamma)``.

    Returns ``(C_theta, C_gamma)`` with shapes ``(J*K, K)`` and ``(J*K, L)``.
    Rows follow ``vec(G')`` where ``G = dg/dtheta'`` is J x K: row ``j*K + k``
    holds derivatives of ``G[j, k]``. Column ``k`` of ``C_theta`` reshaped to
    ``(J, K)`` is therefore ``dG/dtheta_k``.

    Second derivatives are central differences (``rel_step_second``) of
    first-difference Jacobians (``rel_step_first``); error is O(h^2).
    """
    theta = np.asarray(theta, dtype=float)
    gamma = np.asarray(gamma, dtype=float)

    def G_at(th, ga):
        return jacobian(lambda t: g(t, ga), th, policy)

    def vec_Gt_theta(th):
        return G_at(th, gamma).ravel()

    def vec_Gt_gamma(ga):
        return G_at(theta, ga).ravel()

    C_theta = jacobian(vec_Gt_theta, theta, policy, second=True)
    C_gamma = jacobian(vec_Gt_gamma, gamma, policy, second=True)
    return C_theta, C_gamma


def moment_variance_weight(per_unit_moments, normalize=True):
    """Diagonal weight matrix with inverse moment variances on the diagonal.

    ``Var(moment_j)`` is the cross-sectional sample variance of the per-unit
    contributions in column ``j``, divided by ``n`` when ``normalize`` is set
    (the variance of a sample mean).
    """
    x = np.asarray(per_unit_moments, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need an n x J array with n >= 2")
    var = x.var(axis=0, ddof=1)
    if normalize:
        var = var / x.shape[0]
    zero = np.flatnonzero(~(var > 0))
    if zero.size:
        raise DegenerateWeightError(f"moment column(s) {zero.tolist()} have zero variance")
    return np.diag(1.0 / var)
