"""Acceptance suite: one test per criterion.

Criteria 3 to 7 share the session-scoped life-cycle fixture in conftest.py
(n_sim = 50,000); the first of them to run pays for estimation.
"""

import time
from dataclasses import replace

import numpy as np
import pytest
from helpers import TIGHT, affine_argmin, affine_problem, ols_beta1, ols_data, ols_full_fit, ols_problem, sign_changes

from calibsens import gmm, numdiff
from calibsens.demo import MIGRATION_DELTA_E, MIGRATION_E, MIGRATION_GAMMA, MIGRATION_THETA, migration_manifest
from calibsens.lifecycle import (
    GAMMA_NAMES,
    Calibration,
    Preferences,
    certainty_slope,
    euler_residuals,
    simulate,
    solve_egm,
)
from calibsens.matrixio import ElasticityPanel, emit_elasticity_table, emit_extrapolation_table, emit_manifest, load_manifest
from calibsens.sensitivity import (
    elasticities,
    extrapolate_percent,
    qoi_sensitivity,
    sensitivity_approx,
    sensitivity_robust,
)

R_INDEX = GAMMA_NAMES.index("r")


def failures_message(failures):
    return "; ".join(failures)


# --- 1 -----------------------------------------------------------------------------


def test_criterion_01_ols_oracle():
    start = time.perf_counter()
    y, x1, x2 = ols_data(n=50)
    b1_long, b2_long = ols_full_fit(y, x1, x2)
    problem = ols_problem(y, x1, x2)
    bundle = gmm.build_bundle(problem, [b1_long], [b2_long])
    S = sensitivity_approx(bundle).S[0, 0]

    closed_form = -(x1 @ x2) / (x1 @ x1)
    assert abs(S - closed_form) < 1e-10
    # finite-difference derivative of the closed-form estimator in beta2
    fd = numdiff.jacobian(lambda b2: np.array([ols_beta1(y, x1, x2, b2[0])]), np.array([b2_long]))[0, 0]
    assert abs(S - fd) < 1e-8
    # -S beta2 is the omitted-variable bias of the short regression of y on x1
    b1_short = (x1 @ y) / (x1 @ x1)
    assert abs(-S * b2_long - (b1_short - b1_long)) < 1e-8
    assert time.perf_counter() - start < 1.0


# --- 2 -----------------------------------------------------------------------------


def test_criterion_02_linear_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2)

    # over-identified linear moments: second derivatives vanish, so approx = robust = exact
    M, N, c = rng.normal(size=(6, 2)), rng.normal(size=(6, 3)), rng.normal(size=6)
    W = np.diag(rng.uniform(0.5, 2.0, 6))
    gamma = np.array([0.8, -1.5, 1.2])
    theta = affine_argmin(M, N, c, W, gamma)
    problem = affine_problem(M, N, c, W=W, theta_init=theta + 0.3)
    bundle = gmm.build_bundle(problem, theta, gamma, with_second_order=True)
    exact = -np.linalg.solve(M.T @ W @ M, M.T @ W @ N)
    S_a = sensitivity_approx(bundle).S
    S_r = sensitivity_robust(bundle).S
    np.testing.assert_allclose(S_a, exact, rtol=1e-6)
    np.testing.assert_allclose(S_r, exact, rtol=1e-6)
    # the model is exactly linear, so any step recovers the derivative
    E = elasticities(exact, theta, gamma)
    brute = gmm.brute_force_sensitivity(problem, theta, gamma, 25.0)
    np.testing.assert_allclose(brute.elasticity, E, rtol=1e-6)

    # just-identified nonlinear moments: g = 0 at the optimum, robust = approx
    def just(theta_, gamma_):
        return np.array([theta_[0] ** 3 + gamma_[0] * theta_[1] - 2.0, np.exp(theta_[1]) - gamma_[1] * theta_[0]])

    jp = gmm.EstimationProblem(moment_fn=just, W=np.eye(2), theta_init=[1.0, 0.5], settings=TIGHT)
    g0 = np.array([0.5, 2.0])
    jt = gmm.estimate(jp, g0).theta_hat
    jb = gmm.build_bundle(jp, jt, g0, with_second_order=True)
    np.testing.assert_allclose(sensitivity_robust(jb).S, sensitivity_approx(jb).S, rtol=1e-6)

    # the robust - approx gap is proportional to the residual moments g
    def curved(t, g):
        return np.array([t[0] ** 2 * g[0], t[0] * t[1] + g[1], np.sin(t[1]) * g[0], t[0] - g[1] ** 2])

    cp = gmm.EstimationProblem(moment_fn=curved, W=np.eye(4), theta_init=[0.7, 0.4])
    base = gmm.build_bundle(cp, [0.7, 0.4], [1.3, 0.6], with_second_order=True)
    gaps = []
    for scale in (1e-1, 1e-2, 1e-3):
        b = replace(base, g=scale * base.g)
        gaps.append(np.linalg.norm(sensitivity_robust(b).S - sensitivity_approx(b).S))
    np.testing.assert_allclose(gaps[0] / gaps[1], 10.0, rtol=0.05)
    np.testing.assert_allclose(gaps[1] / gaps[2], 10.0, rtol=0.01)
    assert time.perf_counter() - start < 5.0


# --- 3 -----------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_03_brute_force_converges(gp):
    E = np.ma.getdata(gp.robust.E)
    far = np.ma.getdata(gp.brute_1.elasticity)
    near = np.ma.getdata(gp.brute_01.elasticity)
    checked = np.abs(E) > 0.1
    assert checked.any()
    err_far = np.abs(far - E)[checked]
    err_near = np.abs(near - E)[checked]
    assert np.all(err_near < err_far), f"eps=1: {err_far}, eps=0.1: {err_near}"
    spent = sum(gp.seconds[k] for k in ("fixture", "estimate", "bundle", "brute_1", "brute_01"))
    assert spent < 15 * 60


# --- 4 -----------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_04_elasticity_signs_and_ordering(gp):
    E = np.ma.getdata(gp.approx.E)
    e_beta, e_rho = E[0], E[1]
    failures = []
    if not np.all(np.abs(e_beta) < 0.1):
        failures.append(f"(i) |E(beta, .)| = {np.abs(e_beta)}")
    largest = int(np.argmax(np.abs(e_rho)))
    if not (largest == R_INDEX and e_rho[R_INDEX] < 0):
        failures.append(f"(ii) largest |E(rho, .)| is {GAMMA_NAMES[largest]} ({e_rho[largest]:.3f}); r gives {e_rho[R_INDEX]:.3f}")
    reference = np.array([-0.023, -0.069, -0.359, -1.365, 0.435, 0.670])
    checked = np.abs(reference) >= 0.05
    wrong = checked & (np.sign(e_rho) != np.sign(reference))
    if wrong.any():
        failures.append(f"(iii) sign mismatch for {[GAMMA_NAMES[i] for i in np.flatnonzero(wrong)]}")
    assert not failures, failures_message(failures)


# --- 5 -----------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_05_qoi_linearity(gp):
    He = np.ma.getdata(gp.qoi_elasticities(gp.approx.S))
    predicted = He * 1.0  # percent change from a 1% change
    brute = np.ma.getdata(gp.brute_1.qoi_percent)
    assert not np.ma.getmaskarray(gp.brute_1.qoi_percent).any()
    big = np.abs(He) > 0.05
    rel = np.abs(brute - predicted) / np.abs(predicted)
    assert np.all(rel[big] <= 0.5), f"relative gaps {rel[big]}"
    assert np.all(np.sign(brute) == np.sign(predicted)), f"brute {brute}, predicted {predicted}"


# --- 6 -----------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_06_fixed_theta_overstates(gp):
    He_r = np.ma.getdata(gp.qoi_elasticities(gp.approx.S))[:, R_INDEX]
    fixed = gp.fixed_theta_r
    linear = He_r[:, None] * np.array([1.0, 2.0, 3.0, 4.0, 5.0])[None, :]
    assert np.all(np.abs(fixed) > np.abs(linear)), f"fixed theta {fixed}, sensitivity {linear}"


# --- 7 -----------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_07_lifecycle_solver(gp):
    failures = []
    calib = Calibration()
    pref = Preferences.from_vector(gp.theta_hat)
    policy = solve_egm(pref, calib)
    if not np.all(np.diff(policy.c, axis=1) >= 0):
        failures.append("policy not monotone")

    worst = 0.0
    for age in calib.ages:
        t = age - calib.age_start
        m = np.linspace(1e-4, policy.m[t, -1], 4000)
        # interior: end-of-period wealth at least 10% of permanent income
        m = m[m - policy.consumption(age, m) >= 0.1]
        worst = max(worst, euler_residuals(policy, pref, calib, age, m).max())
    if worst >= 1e-3:
        failures.append(f"Euler residual {worst:.2e}")

    # riskless income, R beta = 1: consumption is flat and matches the closed form
    r = 0.03
    n = calib.n_ages
    flat = calib.replace(
        sigma_n=0.0, sigma_u=0.0, p=0.0, G=np.ones(n - 1), v=np.ones(n), r=r, omega26=3.0, sigma_omega26=0.0
    )
    smooth = simulate(solve_egm(Preferences(1.0 / (1.0 + r), 2.5), flat), flat, n_sim=3, seed=0)
    R = 1.0 + r
    income = sum(R**k for k in range(n))
    annuity = sum(R**k for k in range(1, n + 1))
    c = (flat.gamma0 + flat.gamma1 * (R**n * (flat.omega26 + 1.0) + income)) / (1.0 + flat.gamma1 * annuity)
    gap = np.max(np.abs(smooth.c / c - 1.0))
    if gap >= 1e-6:
        failures.append(f"perfect smoothing off by {gap:.2e} relative")

    slope = certainty_slope(0.944, 1.860, 0.0344, 88, 65)
    if round(slope, 4) != 0.0615:
        failures.append(f"certainty retirement slope {slope:.5f}, reference 0.0615")

    dec = gp.decomposition
    gap = np.max(np.abs(dec.s_LC + dec.s_B - dec.s))
    if gap > 1e-12:
        failures.append(f"decomposition identity off by {gap:.1e}")
    window = dec.h[(dec.ages >= 30) & (dec.ages <= 60)]
    if not (window[0] > 0 and window[-1] < 0 and sign_changes(window) == 1):
        failures.append(f"buffer/life-cycle crossing: h(30..60) has {sign_changes(window)} sign changes")
    assert not failures, failures_message(failures)


# --- 8 -----------------------------------------------------------------------------


REFERENCE_ROWS = np.array(
    [
        [-0.001, -0.002, -0.003, -0.004, -0.005],
        [-1.365, -2.731, -4.096, -5.462, -6.827],
    ]
)


def test_criterion_08_linear_extrapolation_rows():
    table = extrapolate_percent([-0.001, -1.365], [1, 2, 3, 4, 5])
    np.testing.assert_array_equal(np.round(table, 3), REFERENCE_ROWS)


def test_extrapolation_rows_from_unrounded_elasticity():
    # rows 2..5 of the reference need E in [-1.36550, -1.36538]; -1.36545 rounds to -1.365
    table = extrapolate_percent([-0.001, -1.36545], [1, 2, 3, 4, 5])
    np.testing.assert_array_equal(np.round(table, 3), REFERENCE_ROWS)
    csv = emit_extrapolation_table(("beta", "rho"), [1, 2, 3, 4, 5], approx=[-0.001, -1.36545])
    assert csv.splitlines()[2] == "Approximate,rho,-1.365,-2.731,-4.096,-5.462,-6.827"


# --- 9 -----------------------------------------------------------------------------


def test_criterion_09_external_manifest(tmp_path):
    manifest = migration_manifest(tmp_path / "in")
    bundle, qoi = load_manifest(manifest)
    assert bundle.shape == (38, 19, 8)

    res = sensitivity_approx(bundle)
    table = emit_elasticity_table(res).splitlines()
    gamma_order = [name for name, _ in MIGRATION_GAMMA]
    assert table[0].split(",") == ["parameter"] + gamma_order
    assert [line.split(",")[0] for line in table[1:]] == [name for name, _ in MIGRATION_THETA]
    np.testing.assert_allclose(np.array([line.split(",")[1:] for line in table[1:]], dtype=float), MIGRATION_E)

    He = elasticities(qoi_sensitivity(qoi.A, qoi.B, res.S), qoi.h_hat, bundle.gamma_hat)
    delta = emit_elasticity_table(ElasticityPanel(He, qoi.h_names, bundle.gamma_names), corner="statistic")
    lines = delta.splitlines()
    assert len(lines) == 2 and lines[0].split(",")[1:] == gamma_order
    np.testing.assert_array_equal(np.array(lines[1].split(",")[1:], dtype=float), MIGRATION_DELTA_E)

    again, qoi2 = load_manifest(emit_manifest(bundle, tmp_path / "out", qoi=qoi))
    for key in ("g", "G", "D", "W", "theta_hat", "gamma_hat"):
        assert np.max(np.abs(getattr(again, key) - getattr(bundle, key))) <= 1e-15
    assert np.max(np.abs(qoi2.A - qoi.A)) <= 1e-15 and np.max(np.abs(qoi2.B - qoi.B)) <= 1e-15


# --- 10 ----------------------------------------------------------------------------


def _run_all_commands(out, manifest):
    from calibsens.cli import main

    small = ["--n-sim", "300", "--seed", "5"]
    given = small + ["--theta", "0.944,1.86"]
    runs = [
        ["solve", *given],
        ["decompose", *given],
        ["sens", *given, "--method", "robust", "--qoi"],
        ["extrapolate", *given, "--method", "all", "--qoi", "--percents", "2"],
        ["brute", *given, "--eps", "5"],
        ["estimate", *small],
        ["external", "--manifest", str(manifest), "--method", "all", "--param", "r"],
    ]
    for i, argv in enumerate(runs):
        assert main(argv + ["--out", str(out / f"{i}_{argv[0]}")]) == 0, argv


@pytest.mark.slow
def test_criterion_10_determinism(tmp_path):
    manifest = migration_manifest(tmp_path / "manifest")
    _run_all_commands(tmp_path / "a", manifest)
    _run_all_commands(tmp_path / "b", manifest)
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b and len(files_a) > 20
    for rel in files_a:
        if rel.name == "timings.json":
            continue
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel
