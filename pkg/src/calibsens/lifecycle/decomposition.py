"""Split of saving into life-cycle and buffer-stock motives."""

from dataclasses import dataclass

import numpy as np

from .simulate import simulate
from .solve import solve_egm

__all__ = ["certainty_slope", "certainty_calibration", "Decomposition", "savings_decomposition"]

CERTAINTY_BORROWING = 5.0


def certainty_slope(beta, rho, r, death_age=88, T=65):
    """Retirement marginal propensity to consume under full certainty.

    ``(1 - k) / (1 - k**(death_age - T))`` with ``k = beta**(1/rho) * (1+r)**(1/rho - 1)``.
    """
    k = beta ** (1.0 / rho) * (1.0 + r) ** (1.0 / rho - 1.0)
    return (1.0 - k) / (1.0 - k ** (death_age - T))


def certainty_calibration(calib, pref):
    """The riskless counterpart: no income risk, borrowing up to 5x income,
    and the certainty retirement slope."""
    return calib.replace(
        sigma_n=0.0,
        sigma_u=0.0,
        p=0.0,
        borrowing_limit=CERTAINTY_BORROWING,
        gamma1=certainty_slope(pref.beta, pref.rho, calib.r, calib.death_age, calib.T),
    )


@dataclass(frozen=True)
class Decomposition:
    """Average saving by age split into motives; ``h[age] = s_B - s_LC``."""

    ages: np.ndarray
    s: np.ndarray
    s_LC: np.ndarray
    s_B: np.ndarray

    @property
    def h(self):
        return self.s_B - self.s_LC

    def at(self, age):
        return float(self.h[int(age) - int(self.ages[0])])

    @property
    def h30(self):
        return self.at(30)

    @property
    def h60(self):
        return self.at(60)


def savings_decomposition(pref, calib, panel):
    """Life-cycle saving from the riskless model, buffer saving as the rest.

    The riskless model is solved and simulated from the baseline panel's
    draws, so initial wealth is identical household by household. Averages
    use the baseline panel's weights.
    """
    lc_calib = certainty_calibration(calib, pref)
    lc_policy = solve_egm(pref, lc_calib)
    lc_panel = simulate(lc_policy, lc_calib, draws=panel.draws)
    s = panel.mean(panel.savings())
    s_lc = panel.mean(lc_panel.savings())
    return Decomposition(ages=panel.ages, s=s, s_LC=s_lc, s_B=s - s_lc)
