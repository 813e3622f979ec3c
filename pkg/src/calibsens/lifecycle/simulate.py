"""Panel simulation and consumption moments."""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from .solve import _growth

__all__ = [
    "ShockDraws",
    "Panel",
    "simulate",
    "consumption_moments",
    "moment_contributions",
    "write_panel_csv",
]


@dataclass(frozen=True)
class ShockDraws:
    """Standard normals, uniforms and initial-wealth normals for one seed.

    Reusing one ``ShockDraws`` across parameter values gives common random
    numbers. Arrays are age-major: row ``t`` belongs to age ``age_start + t``.
    """

    n_tilde: np.ndarray
    u_tilde: np.ndarray
    e: np.ndarray
    w_tilde: np.ndarray
    seed: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def draw(cls, n_sim, n_ages, seed):
        if n_sim < 1:
            raise ValueError("n_sim must be at least 1")
        rng = np.random.default_rng(seed)
        return cls(
            n_tilde=rng.standard_normal((n_ages, n_sim)),
            u_tilde=rng.standard_normal((n_ages, n_sim)),
            e=rng.random((n_ages, n_sim)),
            w_tilde=rng.standard_normal(n_sim),
            seed=seed,
        )

    @property
    def n_sim(self):
        return self.w_tilde.size

    @property
    def n_ages(self):
        return self.e.shape[0]

    def income_shocks(self, sigma_n, sigma_u, p, p_draw=None):
        """``(n, u, weight)`` for the given shock parameters (last call cached).

        ``weight`` is ``None`` when every path has weight one.
        """
        key = (sigma_n, sigma_u, p, p_draw)
        hit = self._cache.get("shocks")
        if hit is not None and hit[0] == key:
            return hit[1]
        zero, weight = _zero_income(p, self.e, p_draw)
        n = np.exp(sigma_n * self.n_tilde)
        u = np.exp(sigma_u * self.u_tilde)
        if p > 0:
            u = np.where(zero, 0.0, u / (1.0 - p))
        value = (n, u, weight)
        self._cache["shocks"] = (key, value)
        return value


def _zero_income(p, e, p_draw):
    if p == 0:
        return None, None
    p_ref = p if p_draw is None else p_draw
    if not 0 < p_ref < 1:
        raise ValueError("the reference zero-income probability must lie in (0, 1)")
    zero = e <= p_ref
    if p_ref == p:
        return zero, None
    # likelihood ratio of each path's zero-income history, model p vs p_ref
    log_lr = np.where(zero, np.log(p / p_ref), np.log((1.0 - p) / (1.0 - p_ref)))
    return zero, np.exp(np.cumsum(log_lr, axis=0))


@dataclass(frozen=True)
class Panel:
    """Simulated households; arrays are age-major (``n_ages x n_sim``).

    ``weight`` is ``None`` (all ones) unless zero-income events were drawn at
    a reference probability different from the model's ``p`` (see
    ``simulate``). ``A_init`` is end-of-period wealth before the first age
    in the same units as ``A``.
    """

    ages: np.ndarray
    P: np.ndarray
    Y: np.ndarray
    m: np.ndarray
    c: np.ndarray
    C: np.ndarray
    A: np.ndarray
    A_init: np.ndarray
    weight: np.ndarray
    draws: ShockDraws

    @property
    def seed(self):
        return self.draws.seed

    @property
    def n_sim(self):
        return self.P.shape[1]

    def mean(self, x):
        """Cross-sectional (weighted) mean per age."""
        if self.weight is None:
            return x.mean(axis=1)
        return np.sum(self.weight * x, axis=1) / np.sum(self.weight, axis=1)

    def savings(self):
        """``A_t - A_{t-1}`` with ``A_init`` before the first age."""
        prev = np.vstack([self.A_init[None, :], self.A[:-1]])
        return self.A - prev


def simulate(policy, calib, n_sim=None, seed=None, draws=None, p_draw=None):
    """Simulate a panel from a solved policy.

    Either ``draws`` or ``(n_sim, seed)`` must be given. With ``p_draw``
    set, zero-income events are drawn as ``e <= p_draw`` and every path is
    weighted by its likelihood ratio under ``calib.p``. This keeps simulated
    statistics smooth in ``p`` across calls that share draws; with the
    default (``p_draw = calib.p``) all weights are one.
    """
    if draws is None:
        if n_sim is None or seed is None:
            raise ValueError("pass draws or both n_sim and seed")
        draws = ShockDraws.draw(n_sim, calib.n_ages, seed)
    if draws.n_ages != calib.n_ages:
        raise ValueError("draws do not match the age span")

    n_shock, u, weight = draws.income_shocks(calib.sigma_n, calib.sigma_u, calib.p, p_draw)

    n_ages = calib.n_ages
    G = np.empty(n_ages - 1)
    f = np.empty(n_ages - 1)
    for t in range(n_ages - 1):
        G[t], f[t] = _growth(calib, policy.rho, t)
    perm_growth = G[:, None] * n_shock[1:]

    init_wealth = calib.omega26 * np.exp(calib.sigma_omega26 * draws.w_tilde)
    m0 = init_wealth + u[0]
    m, c = kernels.simulate_paths(policy.m, policy.c, m0, perm_growth * f[:, None], u[1:], calib.R)

    share_above = np.mean(m > policy.m[:, -1:])
    if share_above > 1e-3:
        warnings.warn(
            f"{share_above:.2%} of simulated resources exceed the top of the wealth grid",
            RuntimeWarning,
            stacklevel=2,
        )

    P = np.empty_like(m)
    P[0] = calib.P26
    P[1:] = calib.P26 * np.cumprod(perm_growth, axis=0)
    return Panel(
        ages=calib.ages,
        P=P,
        Y=P * u,
        m=m,
        c=c,
        C=c * P,
        A=(m - c) * P,
        A_init=init_wealth * calib.P26 / calib.R,
        weight=weight,
        draws=draws,
    )


def consumption_moments(panel):
    """Log of average consumption at each age."""
    mean_c = panel.mean(panel.C)
    if np.any(mean_c <= 0):
        raise ValueError("nonpositive average consumption")
    return np.log(mean_c)


def moment_contributions(panel):
    """Per-household influence terms of the log-mean consumption moments.

    Returns ``n_sim x n_ages`` with entries ``C_jt / mean_t(C)``: the sample
    variance of column ``t`` over ``n`` is the delta-method variance of
    moment ``t``.
    """
    return (panel.C / panel.mean(panel.C)[:, None]).T


def write_panel_csv(panel, path):
    """Long-format CSV with columns agent, age, P, Y, m, c, C, A."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["agent", "age", "P", "Y", "m", "c", "C", "A"])
        for j in range(panel.n_sim):
            for t, age in enumerate(panel.ages):
                writer.writerow(
                    [j, int(age)]
                    + [repr(float(x[t, j])) for x in (panel.P, panel.Y, panel.m, panel.c, panel.C, panel.A)]
                )
