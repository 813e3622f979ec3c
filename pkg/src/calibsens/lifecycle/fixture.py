"""Synthetic self-estimation fixture built on the buffer-stock model.

"Empirical" moments come from simulating the model at known preferences
with one seed; the model side of the moment function uses another seed.
Both sides reuse their draws for every parameter value.
"""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .. import numdiff
from ..gmm import EstimationProblem, OptimizerSettings, perturbed_gamma
from ..sensitivity import QoIJacobians
from .calibration import GAMMA_NAMES, THETA_NAMES, Calibration, Preferences, RunSettings
from .decomposition import savings_decomposition
from .simulate import ShockDraws, consumption_moments, moment_contributions, simulate
from .solve import solve_egm

__all__ = ["LifecycleFixture", "build_fixture", "qoi_jacobians", "fixed_theta_percent", "THETA_BOUNDS"]

THETA_BOUNDS = ((0.8, 1.0), (0.2, 10.0))
H_NAMES = ("h30", "h60")


class _Memo:
    """Small LRU cache keyed on the exact bytes of ``(theta, gamma)``."""

    def __init__(self, size=64):
        self.size = size
        self.store = OrderedDict()

    def get(self, key, compute):
        if key in self.store:
            self.store.move_to_end(key)
            return self.store[key]
        value = compute()
        self.store[key] = value
        if len(self.store) > self.size:
            self.store.popitem(last=False)
        return value


def _key(theta, gamma):
    return np.asarray(theta, dtype=float).tobytes() + np.asarray(gamma, dtype=float).tobytes()


@dataclass
class LifecycleFixture:
    calib: Calibration
    run: RunSettings
    draws: ShockDraws
    data_moments: np.ndarray
    W: np.ndarray
    data_panel_size: int

    def __post_init__(self):
        self._memo = _Memo()
        self._p_ref = self.calib.p

    @property
    def theta_true(self):
        return np.array([self.run.beta_true, self.run.rho_true])

    @property
    def gamma_hat(self):
        return self.calib.gamma_vector()

    @property
    def moment_names(self):
        return tuple(f"logC{age}" for age in self.calib.ages)

    def _panel(self, theta, gamma):
        pref = Preferences.from_vector(theta)
        calib = self.calib.with_gamma(gamma)
        policy = solve_egm(pref, calib)
        p_draw = self._p_ref if calib.p > 0 and self._p_ref > 0 else None
        return pref, calib, simulate(policy, calib, draws=self.draws, p_draw=p_draw)

    def model_moments(self, theta, gamma=None):
        gamma = self.gamma_hat if gamma is None else gamma

        def compute():
            _, _, panel = self._panel(theta, gamma)
            return consumption_moments(panel)

        return self._memo.get(("mom",) + (_key(theta, gamma),), compute)

    def moment_fn(self, theta, gamma):
        """Model minus data log-mean consumption, one entry per age."""
        return self.model_moments(theta, gamma) - self.data_moments

    def h(self, theta, gamma=None):
        """``(h30, h60)``: buffer minus life-cycle saving at ages 30 and 60."""
        gamma = self.gamma_hat if gamma is None else gamma

        def compute():
            pref, calib, panel = self._panel(theta, gamma)
            dec = savings_decomposition(pref, calib, panel)
            return np.array([dec.h30, dec.h60])

        return self._memo.get(("h",) + (_key(theta, gamma),), compute)

    def decomposition(self, theta, gamma=None):
        gamma = self.gamma_hat if gamma is None else gamma
        pref, calib, panel = self._panel(theta, gamma)
        return savings_decomposition(pref, calib, panel)

    def problem(self, settings=None):
        return EstimationProblem(
            moment_fn=self.moment_fn,
            W=self.W,
            theta_init=self.theta_true,
            theta_bounds=THETA_BOUNDS,
            settings=OptimizerSettings() if settings is None else settings,
            theta_names=THETA_NAMES,
            gamma_names=GAMMA_NAMES,
            moment_names=self.moment_names,
        )


def build_fixture(calib=None, run=None):
    """Simulate the data panel at the true preferences and set up the fixture.

    The weight matrix is diagonal with inverse delta-method variances of the
    data moments.
    """
    calib = Calibration() if calib is None else calib
    run = RunSettings() if run is None else run
    truth = Preferences(run.beta_true, run.rho_true)
    data_policy = solve_egm(truth, calib)
    data_panel = simulate(data_policy, calib, n_sim=run.n_data, seed=run.data_seed)
    data_moments = consumption_moments(data_panel)
    W = numdiff.moment_variance_weight(moment_contributions(data_panel))
    draws = ShockDraws.draw(run.n_sim, calib.n_ages, run.seed)
    return LifecycleFixture(calib, run, draws, data_moments, W, run.n_data)


def qoi_jacobians(fixture, theta_hat, gamma_hat=None, policy=numdiff.DEFAULT_POLICY):
    """Finite-difference ``A = dh/dgamma'`` (theta fixed) and ``B = dh/dtheta'``."""
    theta_hat = np.asarray(theta_hat, dtype=float)
    gamma_hat = fixture.gamma_hat if gamma_hat is None else np.asarray(gamma_hat, dtype=float)
    h_hat = fixture.h(theta_hat, gamma_hat)
    A = numdiff.jacobian(lambda g: fixture.h(theta_hat, g), gamma_hat, policy, f0=h_hat)
    B = numdiff.jacobian(lambda t: fixture.h(t, gamma_hat), theta_hat, policy, f0=h_hat)
    return QoIJacobians(A=A, B=B, h_hat=h_hat, h_names=H_NAMES)


def fixed_theta_percent(h_fn, theta_hat, gamma_hat, coordinate, percents):
    """Percent change in ``h`` from raising one calibrated parameter by each
    of ``percents`` while the estimates stay at ``theta_hat``.

    Returns an ``F x len(percents)`` array.
    """
    h_hat = np.asarray(h_fn(theta_hat, gamma_hat), dtype=float)
    cols = []
    for pct in percents:
        h_new = np.asarray(h_fn(theta_hat, perturbed_gamma(gamma_hat, coordinate, pct)), dtype=float)
        cols.append((h_new - h_hat) / h_hat * 100.0)
    return np.column_stack(cols) if cols else np.empty((h_hat.size, 0))
