"""Command-line front end.

Every subcommand writes its tables under ``--out`` with fixed file names,
plus ``run_log.json`` (inputs, seeds, estimates, condition numbers) and
``timings.json`` (wall-clock seconds per phase). All files except
``timings.json`` are byte-identical across runs with the same inputs.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, gmm, matrixio, numdiff
from . import sensitivity as sens
from .lifecycle import (
    GAMMA_NAMES,
    THETA_NAMES,
    Calibration,
    Preferences,
    RunSettings,
    build_fixture,
    consumption_moments,
    fixed_theta_percent,
    load_config,
    qoi_jacobians,
    simulate,
    solve_egm,
)

__all__ = ["main", "build_parser"]

METHOD_LABELS = {"approx": "Approximation", "robust": "Robust", "brute": "Brute"}


# ---------------------------------------------------------------------------
# argument types


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _float_list(text, nonzero=False):
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if nonzero and any(v == 0 for v in values):
        raise argparse.ArgumentTypeError("percent changes must be nonzero")
    return values


def _eps_list(text):
    values = _float_list(text, nonzero=True)
    if not values:
        raise argparse.ArgumentTypeError("at least one epsilon is required")
    return values


def _theta(text):
    values = _float_list(text)
    if len(values) != len(THETA_NAMES):
        raise argparse.ArgumentTypeError(f"expected {len(THETA_NAMES)} values ({','.join(THETA_NAMES)})")
    return values


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="calibsens",
        description="Sensitivity of estimated parameters to calibrated parameters.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    def fixture_parser(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, help="INI file with [calibration], [profiles], [estimation] sections")
        p.add_argument("--seed", type=_positive_int, help="seed of the model simulation (overrides the config)")
        p.add_argument("--n-sim", type=_positive_int, help="households in both simulated panels (overrides the config)")
        p.add_argument(
            "--out", type=Path, default=Path("calibsens-out"), help="output directory (default: %(default)s)"
        )
        p.add_argument(
            "--theta",
            type=_theta,
            help="use these estimates (beta,rho) instead of re-estimating",
        )
        return p

    fixture_parser("solve", "Solve the life-cycle model and write policy and fit data.")
    fixture_parser("estimate", "Estimate (beta, rho) on the synthetic fixture.")

    p = fixture_parser("sens", "Elasticities of the estimates to the calibration.")
    p.add_argument(
        "--method",
        choices=["approx", "robust", "brute", "all"],
        default="approx",
        help="sensitivity measure (default: %(default)s)",
    )
    p.add_argument(
        "--eps", type=_eps_list, default=[1.0], help="percent change for the brute-force method (first value used)"
    )
    p.add_argument(
        "--qoi", action="store_true", help="also report elasticities of the savings-motive statistics h30, h60"
    )

    p = fixture_parser("brute", "Brute-force re-estimation after percent changes in each calibrated parameter.")
    p.add_argument("--eps", type=_eps_list, default=[1.0], help="comma-separated percent changes (default: 1)")
    p.add_argument("--qoi", action="store_true", help="also report percent changes of h30, h60")

    p = fixture_parser(
        "extrapolate", "Percent changes in the estimates from larger changes in one calibrated parameter."
    )
    p.add_argument(
        "--param", choices=GAMMA_NAMES, default="r", help="calibrated parameter to change (default: %(default)s)"
    )
    p.add_argument(
        "--percents",
        type=_float_list,
        default=[1.0, 2.0, 3.0, 4.0, 5.0],
        help="comma-separated percent changes (default: 1,2,3,4,5)",
    )
    p.add_argument(
        "--method",
        choices=["approx", "robust", "brute", "all"],
        default="all",
        help="panels to include (default: %(default)s)",
    )
    p.add_argument("--qoi", action="store_true", help="also tabulate h30, h60 including the fixed-theta panel")

    fixture_parser("decompose", "Split average saving into life-cycle and buffer-stock motives.")

    p = sub.add_parser(
        "external",
        help="Sensitivity from externally supplied matrices.",
        description="Sensitivity from externally supplied matrices.",
    )
    p.add_argument(
        "--manifest", type=Path, required=True, help="TOML manifest listing names, point values and matrix files"
    )
    p.add_argument(
        "--method",
        choices=["approx", "robust", "all"],
        default="approx",
        help="sensitivity measure (default: %(default)s)",
    )
    p.add_argument("--param", help="calibrated parameter for an extrapolation table")
    p.add_argument(
        "--percents",
        type=_float_list,
        default=[1.0, 2.0, 3.0, 4.0, 5.0],
        help="percent changes for --param (default: 1,2,3,4,5)",
    )
    p.add_argument(
        "--out", type=Path, default=Path("calibsens-out"), help="output directory (default: %(default)s)"
    )
    return parser


# ---------------------------------------------------------------------------
# helpers


class _Run:
    """Collects the run log and per-phase timings."""

    def __init__(self, args):
        self.args = args
        self.out = args.out
        self.log = {"command": args.command, "options": _options(args)}
        self.timings = {}
        self.cache = {}

    def phase(self, name):
        run = self

        class _Timer:
            def __enter__(self):
                self.start = time.perf_counter()

            def __exit__(self, *exc):
                run.timings[name] = round(time.perf_counter() - self.start, 3)

        return _Timer()

    def write(self, name, text):
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text)

    def tables(self, stem, render):
        for fmt, ext in (("csv", "csv"), ("markdown", "md")):
            self.write(f"{stem}.{ext}", render(fmt))

    def finish(self):
        self.write("run_log.json", json.dumps(self.log, indent=2, sort_keys=True) + "\n")
        self.write("timings.json", json.dumps(self.timings, indent=2, sort_keys=True) + "\n")


def _options(args):
    out = {}
    for key, value in sorted(vars(args).items()):
        # the output directory is where the log lives; leaving it out keeps reruns comparable
        if key == "out":
            continue
        out[key] = str(value) if isinstance(value, Path) else value
    return out


def _floats(x):
    return [float(v) for v in np.ravel(x)]


def _settings(args):
    calib, run = (Calibration(), RunSettings()) if args.config is None else load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.n_sim is not None:
        changes["n_sim"] = args.n_sim
        changes["n_data"] = args.n_sim
    if changes:
        run = RunSettings(**{**run.__dict__, **changes})
    return calib, run


def _fixture(state):
    calib, run = _settings(state.args)
    state.log["seeds"] = {"model": run.seed, "data": run.data_seed}
    state.log["n_sim"] = run.n_sim
    state.log["n_data"] = run.n_data
    with state.phase("build_fixture"):
        fx = build_fixture(calib, run)
    return fx


def _theta_hat(state, fx, need_optimum=False):
    """``--theta`` if given, else the estimate.

    Brute-force changes are measured from the minimiser itself, so with
    ``need_optimum`` a given ``--theta`` only serves as the starting point.
    """
    given = state.args.theta
    if given is not None and not need_optimum:
        theta = np.array(given)
        state.log["theta_hat"] = {"source": "given", "value": _floats(theta)}
        return theta
    with state.phase("estimate"):
        res = gmm.estimate(fx.problem(), fx.gamma_hat, theta_init=given)
    state.log["theta_hat"] = {
        "source": "estimated" if given is None else "estimated from given start",
        "value": _floats(res.theta_hat),
        "criterion": float(res.criterion_value),
        "n_evals": int(res.n_evals),
    }
    return res.theta_hat


def _bundle(state, fx, theta_hat, second_order):
    name = "bundle_second_order" if second_order else "bundle"
    with state.phase(name):
        return gmm.build_bundle(fx.problem(), theta_hat, fx.gamma_hat, with_second_order=second_order)


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(state):
    fx = _fixture(state)
    theta = np.array(state.args.theta) if state.args.theta is not None else fx.theta_true
    state.log["theta"] = _floats(theta)
    pref = Preferences.from_vector(theta)
    with state.phase("solve"):
        policy = solve_egm(pref, fx.calib)
    with state.phase("simulate"):
        panel = simulate(policy, fx.calib, draws=fx.draws)
    rows = ["age,m,c"]
    for t, age in enumerate(policy.ages):
        for m, c in zip(policy.m[t], policy.c[t]):
            rows.append(f"{age},{matrixio.format_number(m)},{matrixio.format_number(c)}")
    state.write("policy.csv", "\n".join(rows) + "\n")
    model = consumption_moments(panel)
    mean_y = panel.mean(panel.Y)
    rows = ["age,log_mean_C_data,log_mean_C_model,mean_Y_model"]
    for t, age in enumerate(panel.ages):
        values = (fx.data_moments[t], model[t], mean_y[t])
        rows.append(f"{age}," + ",".join(matrixio.format_number(v) for v in values))
    state.write("fit.csv", "\n".join(rows) + "\n")


def cmd_estimate(state):
    fx = _fixture(state)
    theta = _theta_hat(state, fx)
    rows = ["parameter,value"] + [f"{n},{matrixio.format_number(v)}" for n, v in zip(THETA_NAMES, theta)]
    state.write("estimate.csv", "\n".join(rows) + "\n")


def _qoi_panel(state, fx, theta_hat, S, label):
    if "qoi" not in state.cache:
        with state.phase("qoi_jacobians"):
            state.cache["qoi"] = qoi_jacobians(fx, theta_hat)
    q = state.cache["qoi"]
    H = sens.qoi_sensitivity(q.A, q.B, S)
    return matrixio.ElasticityPanel(sens.elasticities(H, q.h_hat, fx.gamma_hat), q.h_names, GAMMA_NAMES, label)


def cmd_sens(state):
    args = state.args
    fx = _fixture(state)
    methods = ["approx", "robust", "brute"] if args.method == "all" else [args.method]
    theta_hat = _theta_hat(state, fx, need_optimum="brute" in methods)
    bundle = _bundle(state, fx, theta_hat, "robust" in methods) if set(methods) & {"approx", "robust"} else None
    panels, qoi_panels, conds = [], [], {}
    for method in methods:
        label = METHOD_LABELS[method]
        if method == "brute":
            eps = args.eps[0]
            with state.phase("brute"):
                res = gmm.brute_force_sensitivity(
                    fx.problem(), theta_hat, fx.gamma_hat, eps, qoi_fn=fx.h if args.qoi else None
                )
            state.log["brute_failed"] = [GAMMA_NAMES[i] for i in res.failed]
            state.log["eps"] = eps
            panels.append(matrixio.ElasticityPanel(res.elasticity, THETA_NAMES, GAMMA_NAMES, label))
            if args.qoi:
                qoi_panels.append(
                    matrixio.ElasticityPanel(res.qoi_percent / eps, ("h30", "h60"), GAMMA_NAMES, label)
                )
            continue
        with state.phase(method):
            result = sens.sensitivity_approx(bundle) if method == "approx" else sens.sensitivity_robust(bundle)
        conds[method] = result.condition_number
        panels.append(matrixio.ElasticityPanel.from_result(result, label))
        if args.qoi:
            qoi_panels.append(_qoi_panel(state, fx, theta_hat, result.S, label))
    state.log["condition_numbers"] = conds
    state.tables("elasticities", lambda fmt: matrixio.emit_elasticity_table(panels, fmt))
    if args.qoi:
        state.tables(
            "qoi_elasticities", lambda fmt: matrixio.emit_elasticity_table(qoi_panels, fmt, corner="statistic")
        )


def cmd_brute(state):
    args = state.args
    fx = _fixture(state)
    theta_hat = _theta_hat(state, fx, need_optimum=True)
    failed = {}
    for eps in args.eps:
        tag = f"{eps:g}"
        with state.phase(f"brute_eps_{tag}"):
            res = gmm.brute_force_sensitivity(
                fx.problem(), theta_hat, fx.gamma_hat, eps, qoi_fn=fx.h if args.qoi else None
            )
        failed[tag] = [GAMMA_NAMES[i] for i in res.failed]
        panel = matrixio.ElasticityPanel(res.elasticity, THETA_NAMES, GAMMA_NAMES, f"eps={tag}")
        state.tables(f"brute_eps_{tag}", lambda fmt, p=panel: matrixio.emit_elasticity_table(p, fmt))
        if args.qoi:
            qp = matrixio.ElasticityPanel(res.qoi_percent / eps, ("h30", "h60"), GAMMA_NAMES, f"eps={tag}")
            state.tables(
                f"brute_qoi_eps_{tag}",
                lambda fmt, p=qp: matrixio.emit_elasticity_table(p, fmt, corner="statistic"),
            )
    state.log["brute_failed"] = failed


def _rerun_percent(state, fx, theta_hat, l, percents, with_qoi):
    """Brute-force percent changes of theta (and h) for each percent."""
    problem = fx.problem()
    theta_cols, h_cols = [], []
    h_hat = fx.h(theta_hat) if with_qoi else None
    for pct in percents:
        gamma = gmm.perturbed_gamma(fx.gamma_hat, l, pct)
        try:
            res = gmm.estimate(problem, gamma, theta_init=theta_hat)
        except gmm.EstimationError as exc:
            state.log.setdefault("brute_failed", []).append(f"{pct:g}: {exc}")
            theta_cols.append(np.ma.masked_all(theta_hat.size))
            h_cols.append(np.ma.masked_all(2))
            continue
        theta_cols.append((res.theta_hat - theta_hat) / theta_hat * 100.0)
        if with_qoi:
            h_cols.append((fx.h(res.theta_hat, gamma) - h_hat) / h_hat * 100.0)
    theta_tab = np.ma.column_stack(theta_cols)
    h_tab = np.ma.column_stack(h_cols) if with_qoi else None
    return theta_tab, h_tab


def cmd_extrapolate(state):
    args = state.args
    fx = _fixture(state)
    methods = {"approx", "robust", "brute"} if args.method == "all" else {args.method}
    theta_hat = _theta_hat(state, fx, need_optimum="brute" in methods)
    l = GAMMA_NAMES.index(args.param)
    percents = args.percents
    cols, qcols, conds = {}, {}, {}
    if methods & {"approx", "robust"}:
        bundle = _bundle(state, fx, theta_hat, "robust" in methods)
        for method in ("approx", "robust"):
            if method not in methods:
                continue
            with state.phase(method):
                result = sens.sensitivity_approx(bundle) if method == "approx" else sens.sensitivity_robust(bundle)
            conds[method] = result.condition_number
            cols[method] = result.E[:, l]
            if args.qoi:
                qcols[method] = _qoi_panel(state, fx, theta_hat, result.S, method).E[:, l]
    brute = brute_h = None
    if "brute" in methods and percents:
        with state.phase("brute"):
            brute, brute_h = _rerun_percent(state, fx, theta_hat, l, percents, args.qoi)
    state.log["condition_numbers"] = conds
    state.tables(
        f"extrapolate_{args.param}",
        lambda fmt: matrixio.emit_extrapolation_table(
            THETA_NAMES, percents, approx=cols.get("approx"), robust=cols.get("robust"), brute=brute, fmt=fmt
        ),
    )
    if args.qoi:
        with state.phase("fixed_theta"):
            fixed = fixed_theta_percent(fx.h, theta_hat, fx.gamma_hat, l, percents)
        state.tables(
            f"extrapolate_{args.param}_qoi",
            lambda fmt: matrixio.emit_extrapolation_table(
                ("h30", "h60"),
                percents,
                approx=qcols.get("approx"),
                robust=qcols.get("robust"),
                brute=brute_h,
                fixed_theta=fixed,
                fmt=fmt,
            ),
        )


def cmd_decompose(state):
    fx = _fixture(state)
    theta = np.array(state.args.theta) if state.args.theta is not None else fx.theta_true
    state.log["theta"] = _floats(theta)
    with state.phase("decompose"):
        dec = fx.decomposition(theta)
    rows = ["age,s,s_LC,s_B,h"]
    f = matrixio.format_number
    for t, age in enumerate(dec.ages):
        rows.append(f"{age},{f(dec.s[t])},{f(dec.s_LC[t])},{f(dec.s_B[t])},{f(dec.h[t])}")
    state.write("decomposition.csv", "\n".join(rows) + "\n")
    state.log["h30"] = dec.h30
    state.log["h60"] = dec.h60


def cmd_external(state):
    args = state.args
    with state.phase("load"):
        bundle, qoi = matrixio.load_manifest(args.manifest)
    J, K, L = bundle.shape
    state.log["shape"] = {"J": J, "K": K, "L": L}
    if args.method == "all":
        # robust only when the manifest supplies second derivatives
        methods = ["approx", "robust"] if bundle.has_second_order else ["approx"]
    else:
        methods = [args.method]
    panels, qoi_panels, cols, conds = [], [], {}, {}
    for method in methods:
        with state.phase(method):
            result = sens.sensitivity_approx(bundle) if method == "approx" else sens.sensitivity_robust(bundle)
        conds[method] = result.condition_number
        label = METHOD_LABELS[method]
        panels.append(matrixio.ElasticityPanel.from_result(result, label))
        if qoi is not None:
            H = sens.qoi_sensitivity(qoi.A, qoi.B, result.S)
            HE = sens.elasticities(H, qoi.h_hat, bundle.gamma_hat)
            qoi_panels.append(matrixio.ElasticityPanel(HE, qoi.h_names, bundle.gamma_names, label))
        cols[method] = result
    state.log["condition_numbers"] = conds
    state.tables("elasticities", lambda fmt: matrixio.emit_elasticity_table(panels, fmt))
    if qoi is not None:
        state.tables(
            "qoi_elasticities", lambda fmt: matrixio.emit_elasticity_table(qoi_panels, fmt, corner="statistic")
        )
    if args.param is not None:
        if args.param not in bundle.gamma_names:
            choices = ", ".join(bundle.gamma_names)
            raise ValueError(f"unknown calibrated parameter {args.param!r}; choose from {choices}")
        l = bundle.gamma_names.index(args.param)
        state.tables(
            f"extrapolate_{args.param}",
            lambda fmt: matrixio.emit_extrapolation_table(
                bundle.theta_names,
                args.percents,
                approx=cols["approx"].E[:, l] if "approx" in cols else None,
                robust=cols["robust"].E[:, l] if "robust" in cols else None,
                fmt=fmt,
            ),
        )


COMMANDS = {
    "solve": cmd_solve,
    "estimate": cmd_estimate,
    "sens": cmd_sens,
    "brute": cmd_brute,
    "extrapolate": cmd_extrapolate,
    "decompose": cmd_decompose,
    "external": cmd_external,
}

MODULE_ERRORS = (
    ValueError,
    RuntimeError,
    OSError,
    np.linalg.LinAlgError,
    numdiff.DifferentiationError,
)


def main(argv=None):
    """Entry point; returns the exit code (2 usage error, 1 module error)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    state = _Run(args)
    try:
        COMMANDS[args.command](state)
        state.finish()
    except MODULE_ERRORS as exc:
        print(f"calibsens {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
