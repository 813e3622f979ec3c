"""Synthetic matrix fixture for the external-model workflow.

A housing and migration model with 19 estimated parameters, 8 calibrated
parameters and 38 moments whose solver is not part of this package. Only
its reported elasticities are known, so the matrices here are constructed
to reproduce them: ``G``, ``W`` and ``g`` are random, and ``D`` and ``A``
are then solved for so that the approximate elasticities of the estimates
and of the statistic ``delta`` equal the reference tables below.
"""

from pathlib import Path

import numpy as np

from .matrixio import emit_manifest
from .sensitivity import MomentBundle, QoIJacobians

__all__ = [
    "MIGRATION_THETA",
    "MIGRATION_GAMMA",
    "MIGRATION_E",
    "MIGRATION_DELTA",
    "MIGRATION_DELTA_E",
    "migration_bundle",
    "migration_manifest",
]

MIGRATION_THETA = (
    ("xi1", -0.009), ("xi2", 0.003), ("eta", 0.217), ("omega", 4.364),
    ("alpha0", 3.165), ("alpha1", 0.017), ("alpha2", 0.0013), ("alpha3", 0.217),
    ("alpha4", 0.147), ("pi_tau", 0.697), ("A_NwE", 0.044), ("A_MdA", 0.112),
    ("A_StA", 0.168), ("A_WNC", 0.090), ("A_WSC", 0.122), ("A_ENC", 0.137),
    ("A_ESC", 0.063), ("A_Pcf", 0.198), ("A_Mnt", 0.124),
)  # fmt: skip

MIGRATION_GAMMA = (
    ("crra", 1.43), ("beta", 0.96), ("rho", 0.96), ("sigma", 0.118),
    ("phi", 0.06), ("chi", 0.20), ("r", 0.04), ("r_m", 0.055),
)  # fmt: skip

# elasticities of the estimates (rows) to the calibration (columns)
MIGRATION_E = np.array([
    [114.817, -86.300, -189.804, -3.443, 1.378, -1.868, -0.179, -0.190],
    [-1050.357, 209.728, 2772.968, -2.366, -5.134, 37.807, 1.255, 1.537],
    [-36.763, 10.532, 232.386, -2.831, -5.039, -1.397, -0.023, 0.069],
    [0.165, 0.162, -0.047, -0.003, -0.023, -0.006, -0.001, 0.000],
    [-1.174, -0.019, 2.211, 0.010, 0.013, 0.023, 0.001, -0.000],
    [-85.165, -32.862, 547.621, -1.296, -7.673, 0.002, -0.122, -0.028],
    [1554.699, 201.729, -3620.681, -21.701, 18.066, -10.432, -0.093, -2.910],
    [-0.936, 3.430, 20.203, 0.129, 0.015, 0.016, 0.008, 0.005],
    [37.091, -3.228, -17.754, -0.277, -0.088, -0.977, -0.058, 0.033],
    [0.057, -0.003, -0.057, -0.000, -0.003, -0.002, -0.000, 0.000],
    [62.353, -0.490, -75.947, 0.373, 2.561, -1.728, 0.008, -0.134],
    [-127.703, 11.875, 437.474, -1.113, -5.718, 2.360, 0.088, 0.019],
    [-29.806, 3.227, -9.579, 0.042, -0.107, 0.731, 0.024, -0.032],
    [-237.423, 6.282, -21.925, 3.446, 2.524, 8.880, 0.379, -2.884],
    [56.868, 0.880, -54.668, 0.416, 0.827, -0.892, -0.024, 0.050],
    [-4.929, 0.411, 12.863, -0.049, -0.035, 0.074, -0.004, 0.002],
    [214.474, 18.102, -1198.287, -2.251, 12.797, -4.375, 0.642, 0.463],
    [-2.024, 0.576, 20.273, 0.215, 0.228, 0.203, -0.008, 0.019],
    [281.108, 131.541, -2120.151, 37.155, -1.200, 12.639, 0.665, -0.504],
])  # fmt: skip

# elasticity of the option value of migration (percent), level 19.2
MIGRATION_DELTA = 19.2
MIGRATION_DELTA_E = np.array([1.349, -0.127, -0.524, -0.026, 0.005, -0.053, -0.002, 0.002])

N_MOMENTS = 38


def _project_out(G, W, X):
    """Part of ``X`` with ``G' W X = 0``."""
    GtW = G.T @ W
    return X - G @ np.linalg.solve(GtW @ G, GtW @ X)


def migration_bundle(seed=0):
    """``(bundle, qoi)`` reproducing the reference elasticities."""
    rng = np.random.default_rng(seed)
    theta_names, theta = zip(*MIGRATION_THETA)
    gamma_names, gamma = zip(*MIGRATION_GAMMA)
    theta = np.array(theta)
    gamma = np.array(gamma)
    K, L, J = theta.size, gamma.size, N_MOMENTS

    G = rng.standard_normal((J, K))
    W = np.diag(1.0 / rng.uniform(0.5, 2.0, J))
    S = MIGRATION_E * theta[:, None] / gamma[None, :]
    D = -G @ S + _project_out(G, W, rng.standard_normal((J, L)))
    # residual moments at an optimum satisfy G' W g = 0
    g = 0.01 * _project_out(G, W, rng.standard_normal((J, 1)))[:, 0]
    bundle = MomentBundle(
        g=g,
        G=G,
        D=D,
        W=W,
        theta_hat=theta,
        gamma_hat=gamma,
        theta_names=theta_names,
        gamma_names=gamma_names,
        moment_names=[f"m{j + 1:02d}" for j in range(J)],
    )

    B = rng.standard_normal((1, K))
    H = MIGRATION_DELTA_E * MIGRATION_DELTA / gamma
    A = H[None, :] - B @ S
    qoi = QoIJacobians(A=A, B=B, h_hat=[MIGRATION_DELTA], h_names=["delta"])
    return bundle, qoi


def migration_manifest(directory, seed=0):
    """Write the fixture as a manifest plus CSV files; returns the manifest path."""
    bundle, qoi = migration_bundle(seed)
    return emit_manifest(bundle, Path(directory), qoi=qoi, name="migration.toml")
