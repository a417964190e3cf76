"""Command-line front end.

Subcommands: ``solve``, ``diophantine``, ``cohomology-selftest``, ``verify``
and ``sweep``.  Errors go to standard error as one line of JSON.

Exit codes: 0 success, 1 run finished but did not converge or a check
failed, 2 invalid configuration or arguments, 3 pipeline error.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import cohomology, iteration, verify
from .config import config_from_dict, parse_config
from .diophantine import certify, worst_resonance
from .errors import ConfigError, KAMError
from .fourier_taylor import AnalyticityDomain
from .iteration import ComposedMap, IterationSchedule, quadratic_fit
from .kolmogorov_step import KolmogorovForm, TwistData

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3

THRESHOLDS = {
    "freq_err": 1e-8,
    "angle_dep_err": 1e-8,
    "flow_dist": 1e-6,
    "flow_freq_rel_err": 1e-6,
    "sympl_defect": 1e-8,
    "jacobian_deviation": 0.5,
}

CSV_HEADER = ["n", "delta_n", "eps_n", "eps_hat_n", "gamma_n", "eta_n", "ms"]


def _fmt(x):
    return repr(float(x))


def build_problem(cfg):
    """Certified frequency, initial form, twist data and schedule for ``cfg``."""
    omega = certify(cfg.omega, cfg.tau, cfg.kmax)
    f0, f1 = cfg.series()
    domain = AnalyticityDomain(cfg.rho, cfg.delta)
    try:
        form = KolmogorovForm.from_hamiltonian(f0, f1, cfg.epsilon, omega, domain)
    except ValueError as exc:
        raise ConfigError("hamiltonian", str(exc)) from None
    twist = TwistData.from_form(form)
    s = cfg.schedule
    schedule = IterationSchedule.for_form(form, twist, s.step_constant, s.deviation_constant,
                                          s.eta0, s.max_steps, s.stop_tol)
    return form, twist, schedule


def verification(form, cmap, cfg):
    """All pointwise oracles for a finished run."""
    d = form.dim
    theta0 = np.zeros(d) if cfg.verify.theta0 is None else np.asarray(cfg.verify.theta0)
    conj = verify.conjugacy_residual(form, cmap, form.omega.array)
    flow = verify.flow_invariance(form, cmap, theta0, cfg.verify.T, cfg.verify.dt)
    sympl = verify.symplectic_check(cmap, d, cfg.verify.samples, seed=cfg.verify.seed)
    out = {"freq_err": conj.freq_err, "angle_dep_err": conj.angle_dep_err,
           "flow_dist": flow.max_distance, "flow_freq_rel_err": flow.frequency_rel_err,
           "sympl_defect": sympl, "jacobian_deviation": cmap.jacobian_deviation()}
    checks = {k: bool(out[k] < THRESHOLDS[k]) for k in THRESHOLDS}
    return out, checks, flow


def iterations_csv(records, timing=False):
    """CSV text of the per-step records; ``ms`` is left empty unless ``timing``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for rec in records:
        ms = f"{1000 * rec.wall_time:.3f}" if timing else ""
        w.writerow([rec.n, _fmt(rec.delta_n), _fmt(rec.epsilon_n), _fmt(rec.epsilon_hat_n),
                    _fmt(rec.gamma_n), _fmt(rec.eta_n), ms])
    return buf.getvalue()


GNUPLOT = """set terminal pngcairo size 900,600
set output 'convergence.png'
set datafile separator ','
set logscale y
set xlabel 'n'
set ylabel 'eps_n'
plot 'eps.csv' using 1:2 skip 1 with linespoints title 'eps_n', \\
     'eps.csv' using 1:3 skip 1 with linespoints title 'eps_hat_n'
set output 'flow.png'
set xlabel 't'
set ylabel 'distance to torus'
plot 'flow.csv' using 1:2 skip 1 with lines title 'flow distance'
"""


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return _json_safe(x.item())
    return x


def run_pipeline(cfg, out_dir=None, timing=False, verify_run=True):
    """Certify, iterate, verify and write the run artifacts.

    Returns
    -------
    (int, dict)
        Exit status and the report.
    """
    out_dir = cfg.output if out_dir is None else out_dir
    form, twist, schedule = build_problem(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = iteration.run(form, twist, schedule)
    notes = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    eps0 = form.epsilon
    slope, intercept = quadratic_fit(result.epsilons())
    dev_sum = float(sum(result.map.deviations))
    ratios = [r.step_ratio for r in result.records[1:] if math.isfinite(r.step_ratio)]
    report = {
        "version": __version__,
        "converged": result.converged,
        "status": result.status,
        "error": None if result.error is None else result.error.to_dict(),
        "steps": result.steps,
        "epsilon_user": cfg.epsilon,
        "epsilon_0": eps0,
        "epsilons": [r.epsilon_n for r in result.records],
        "final_epsilon": result.final.epsilon,
        "quadratic_fit": {"slope": slope, "intercept": intercept},
        "kappa": result.kappa,
        "above_kappa": bool(eps0 >= result.kappa),
        "h2_threshold_0": schedule.delta(1) ** schedule.nu / schedule.step_constant,
        "max_step_ratio": max(ratios) if ratios else None,
        "eps_bounds_log10": [schedule.log10_eps_bound(eps0, r.n) for r in result.records],
        "eps_hat_bounds_log10": [schedule.log10_eps_hat_bound(eps0, r.n) for r in result.records],
        "final_deviation": result.map.deviation(),
        "deviation_sum": dev_sum,
        "deviation_bound": schedule.deviation_constant * eps0,
        "schedule": {"delta": schedule.delta_base, "nu": schedule.nu,
                     "step_constant": schedule.step_constant,
                     "deviation_constant": schedule.deviation_constant,
                     "eta0": schedule.eta0, "gamma0": schedule.gamma0,
                     "beta": twist.beta, "stop_tol": schedule.stop_tol,
                     "max_steps": schedule.max_steps},
        "warnings": notes,
        "config": cfg.to_dict(),
        "map_file": "map.json",
        "thresholds": dict(THRESHOLDS),
    }
    checks = {"deviation_sum": bool(dev_sum <= schedule.deviation_constant * eps0 or eps0 == 0)}
    flow = None
    if verify_run and result.converged:
        values, vchecks, flow = verification(form, result.map, cfg)
        report["verification"] = values
        checks.update(vchecks)
    report["checks"] = checks
    report["passed"] = bool(result.converged and all(checks.values())
                            and (not verify_run or "verification" in report))
    os.makedirs(out_dir, exist_ok=True)
    _write(os.path.join(out_dir, "iterations.csv"), iterations_csv(result.records, timing))
    _write(os.path.join(out_dir, "map.json"), json.dumps(result.map.to_json()))
    rows = ["n,eps_n,eps_hat_n,log10_eps_bound"]
    for r, b in zip(result.records, report["eps_bounds_log10"]):
        rows.append(f"{r.n},{_fmt(r.epsilon_n)},{_fmt(r.epsilon_hat_n)},{_fmt(b)}")
    _write(os.path.join(out_dir, "eps.csv"), "\n".join(rows) + "\n")
    if flow is not None:
        stride = max(1, len(flow.times) // 1000)
        rows = ["t,distance"] + [f"{_fmt(t)},{_fmt(x)}" for t, x in
                                 zip(flow.times[::stride], flow.distances[::stride])]
        _write(os.path.join(out_dir, "flow.csv"), "\n".join(rows) + "\n")
    _write(os.path.join(out_dir, "plot.gp"), GNUPLOT)
    _write(os.path.join(out_dir, "report.json"), json.dumps(_json_safe(report), indent=2) + "\n")
    return (EXIT_OK if report["passed"] else EXIT_FAILED), report


# -- subcommands -------------------------------------------------------
def _load_config(args):
    cfg = parse_config(args.config)
    overrides = {}
    if getattr(args, "max_steps", None) is not None:
        overrides["max_steps"] = args.max_steps
    if getattr(args, "tol", None) is not None:
        overrides["stop_tol"] = args.tol
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return cfg.with_overrides(**overrides) if overrides else cfg


def cmd_solve(args):
    cfg = _load_config(args)
    status, report = run_pipeline(cfg, args.out, args.timing)
    summary = {k: report[k] for k in ("converged", "status", "steps", "final_epsilon", "passed")}
    print(json.dumps(_json_safe(summary)))
    if report["error"] is not None:
        sys.stderr.write(json.dumps(_json_safe(report["error"])) + "\n")
        return EXIT_ERROR
    return status


def cmd_diophantine(args):
    res = worst_resonance(args.omega, args.tau, args.kmax)
    print(json.dumps({"c_hat": res.c_hat, "k_star": list(res.k_star)}))
    return EXIT_OK


def cmd_selftest(args):
    out = cohomology.selftest(seed=args.seed or 0, count=args.count)
    print(json.dumps(_json_safe(out)))
    return EXIT_OK if out["passed"] else EXIT_FAILED


def cmd_verify(args):
    try:
        with open(args.run) as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("--run", f"cannot read report: {exc}") from None
    base = os.path.dirname(os.path.abspath(args.run))
    cfg = config_from_dict(report["config"], base)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    form, _, _ = build_problem(cfg)
    with open(os.path.join(base, report.get("map_file", "map.json"))) as fh:
        cmap = ComposedMap.from_json(json.load(fh))
    values, checks, _ = verification(form, cmap, cfg)
    out = {"freq_err": values["freq_err"], "angle_dep_err": values["angle_dep_err"],
           "flow_dist": values["flow_dist"], "sympl_defect": values["sympl_defect"],
           "flow_freq_rel_err": values["flow_freq_rel_err"], "passed": all(checks.values())}
    print(json.dumps(_json_safe(out)))
    return EXIT_OK if out["passed"] else EXIT_FAILED


def _sweep_one(cfg_dict, eps):
    cfg = config_from_dict(dict(cfg_dict, epsilon=eps))
    try:
        form, twist, schedule = build_problem(cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = iteration.run(form, twist, schedule)
    except KAMError as exc:
        return {"epsilon": eps, "converged": False, "status": exc.code, "steps": 0,
                "final_epsilon": None, "kappa": None}
    return {"epsilon": eps, "epsilon_0": form.epsilon, "converged": res.converged,
            "status": res.status, "steps": res.steps, "final_epsilon": res.final.epsilon,
            "kappa": res.kappa}


def sweep(cfg, epsilons, jobs=1):
    """Run the iteration for each ``eps`` and locate the empirical convergence boundary.

    The boundary is the largest ``eps`` such that every smaller swept value
    converged.
    """
    epsilons = sorted(float(e) for e in epsilons)
    cfg_dict = cfg.to_dict()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, [cfg_dict] * len(epsilons), epsilons))
    else:
        rows = [_sweep_one(cfg_dict, e) for e in epsilons]
    boundary = None
    for row in rows:
        if not row["converged"]:
            break
        boundary = row["epsilon"]
    kappa = next((r["kappa"] for r in rows if r.get("kappa") is not None), None)
    return {"runs": rows, "empirical_boundary": boundary, "kappa": kappa}


def cmd_sweep(args):
    cfg = _load_config(args)
    if args.eps:
        eps = args.eps
    else:
        eps = list(np.logspace(math.log10(args.eps_min), math.log10(args.eps_max), args.num))
    out = sweep(cfg, eps, args.jobs)
    text = json.dumps(_json_safe(out), indent=2)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "sweep.json"), text + "\n")
    print(json.dumps(_json_safe(out)))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="kolmogorov-kam",
                                description="Kolmogorov normal-form iteration for near-integrable "
                                            "Hamiltonians.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp):
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--max-steps", type=int, help="iteration cap")
        sp.add_argument("--tol", type=float, help="stop once eps_n drops below this")
        sp.add_argument("--seed", type=int, help="seed for random sample points")

    sp = sub.add_parser("solve", help="full pipeline: iterate, verify, write reports")
    run_flags(sp)
    sp.add_argument("--timing", action="store_true",
                    help="fill the ms column of iterations.csv (breaks byte-identical output)")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("diophantine", help="worst small divisor of a frequency vector")
    sp.add_argument("--omega", type=float, nargs="+", required=True)
    sp.add_argument("--tau", type=float, default=None, help="exponent (default d)")
    sp.add_argument("--kmax", type=int, default=200)
    sp.set_defaults(func=cmd_diophantine)

    sp = sub.add_parser("cohomology-selftest", help="exactness and norm-loss checks")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--count", type=int, default=100)
    sp.set_defaults(func=cmd_selftest)

    sp = sub.add_parser("verify", help="re-run the oracles on a saved run")
    sp.add_argument("--run", required=True, help="report.json of a finished solve")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sweep", help="convergence over a grid of eps values")
    run_flags(sp)
    sp.add_argument("--eps", type=float, nargs="+", help="explicit eps values")
    sp.add_argument("--eps-min", type=float, default=1e-6)
    sp.add_argument("--eps-max", type=float, default=1e-1)
    sp.add_argument("--num", type=int, default=6)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)
    return p


def _error(exc, code):
    payload = exc.to_dict() if isinstance(exc, KAMError) else {"error": type(exc).__name__,
                                                               "message": str(exc)}
    sys.stderr.write(json.dumps(_json_safe(payload)) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _error(exc, EXIT_CONFIG)
    except KAMError as exc:
        return _error(exc, EXIT_ERROR)
    except (ValueError, OSError) as exc:
        return _error(exc, EXIT_ERROR)


if __name__ == "__main__":
    sys.exit(main())
