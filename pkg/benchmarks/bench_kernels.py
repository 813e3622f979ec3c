"""Compare the numba kernels with their numpy fallbacks.

Run as ``python benchmarks/bench_kernels.py [--n-sim N] [--repeat R]``.
Both versions are imported directly, so the result does not depend on
``CALIBSENS_DISABLE_NUMBA``. Outputs are checked for agreement first.
"""

import argparse
import time

import numpy as np

from calibsens import kernels
from calibsens._accel import HAVE_NUMBA
from calibsens.lifecycle import Calibration, Preferences, ShockDraws, shock_nodes, solve_egm
from calibsens.lifecycle.solve import _growth


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def cases(n_sim, seed=0):
    calib = Calibration()
    pref = Preferences(0.944, 1.86)
    policy = solve_egm(pref, calib)
    draws = ShockDraws.draw(n_sim, calib.n_ages, seed)
    n, u, _ = draws.income_shocks(calib.sigma_n, calib.sigma_u, calib.p)
    G = np.array([_growth(calib, pref.rho, t)[0] * _growth(calib, pref.rho, t)[1] for t in range(calib.n_ages - 1)])
    psi = np.ascontiguousarray(G[:, None] * n[1:])
    m0 = calib.omega26 * np.exp(calib.sigma_omega26 * draws.w_tilde) + u[0]
    sim_args = (policy.m, policy.c, m0, psi, np.ascontiguousarray(u[1:]), calib.R)

    perm, trans, weight = shock_nodes(calib)
    t = 10
    a_grid = policy.m[t, 1:] - policy.c[t, 1:]
    egm_args = (a_grid, policy.m[t + 1], policy.c[t + 1], calib.R, pref.beta, pref.rho, perm, trans, weight)

    x = np.random.default_rng(seed).uniform(0.0, 25.0, n_sim)
    interp_args = (policy.m[t], policy.c[t], x)
    return {
        "simulate_paths": (kernels._simulate_numpy, kernels._simulate_loops, sim_args),
        "egm_consumption": (kernels._egm_numpy, kernels._egm_loops, egm_args),
        "interp_linear": (kernels._interp_numpy, kernels._interp_loops, interp_args),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-sim", type=int, default=50_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    print(f"numba available: {HAVE_NUMBA}; n_sim = {args.n_sim}")
    print(f"{'kernel':<18}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}{'max diff':>12}")
    for name, (np_fn, nb_fn, fn_args) in cases(args.n_sim).items():
        ref = np_fn(*fn_args)
        nb_fn(*fn_args)  # compile outside the timing
        got = nb_fn(*fn_args)
        ref_arrays = ref if isinstance(ref, tuple) else (ref,)
        got_arrays = got if isinstance(got, tuple) else (got,)
        diff = max(
            float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))
            for a, b in zip(ref_arrays, got_arrays)
        )
        t_np = best_of(lambda: np_fn(*fn_args), args.repeat)
        t_nb = best_of(lambda: nb_fn(*fn_args), args.repeat)
        print(f"{name:<18}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
