"""Shared, lazily computed life-cycle fixture for the end-to-end tests.

Everything is computed at most once per session; each piece records its
wall-clock time in ``GPCase.seconds`` so runtime budgets can be checked.
"""

import time
from functools import cached_property

import pytest

from calibsens import gmm
from calibsens import sensitivity as sens
from calibsens.lifecycle import GAMMA_NAMES, build_fixture, fixed_theta_percent, qoi_jacobians

PERCENTS = (1.0, 2.0, 3.0, 4.0, 5.0)


def _timed(fn):
    name = fn.__name__

    def wrapper(self):
        start = time.perf_counter()
        value = fn(self)
        self.seconds[name] = time.perf_counter() - start
        return value

    wrapper.__name__ = name
    return cached_property(wrapper)


class GPCase:
    """Self-estimation fixture at the shipped defaults (n_sim = 50,000)."""

    def __init__(self):
        self.seconds = {}

    @_timed
    def fixture(self):
        return build_fixture()

    @property
    def problem(self):
        return self.fixture.problem()

    @property
    def gamma_hat(self):
        return self.fixture.gamma_hat

    @_timed
    def estimate(self):
        return gmm.estimate(self.problem, self.gamma_hat)

    @property
    def theta_hat(self):
        return self.estimate.theta_hat

    @_timed
    def bundle(self):
        return gmm.build_bundle(self.problem, self.theta_hat, self.gamma_hat, with_second_order=True)

    @cached_property
    def approx(self):
        return sens.sensitivity_approx(self.bundle)

    @cached_property
    def robust(self):
        return sens.sensitivity_robust(self.bundle)

    @_timed
    def qoi(self):
        return qoi_jacobians(self.fixture, self.theta_hat)

    def qoi_elasticities(self, S):
        H = sens.qoi_sensitivity(self.qoi.A, self.qoi.B, S)
        return sens.elasticities(H, self.qoi.h_hat, self.gamma_hat)

    @_timed
    def brute_1(self):
        return gmm.brute_force_sensitivity(self.problem, self.theta_hat, self.gamma_hat, 1.0, qoi_fn=self.fixture.h)

    @_timed
    def brute_01(self):
        return gmm.brute_force_sensitivity(self.problem, self.theta_hat, self.gamma_hat, 0.1)

    @_timed
    def fixed_theta_r(self):
        l = GAMMA_NAMES.index("r")
        return fixed_theta_percent(self.fixture.h, self.theta_hat, self.gamma_hat, l, PERCENTS)

    @_timed
    def decomposition(self):
        return self.fixture.decomposition(self.theta_hat)


@pytest.fixture(scope="session")
def gp():
    return GPCase()
