"""Command-line front end: solve, sweep, baseline, validate, mc.

Exit codes: 0 ok, 1 usage, 2 infeasible, 3 KKT-unverified, 4 validation failure.
"""

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .channel import (
    DiscreteAmplitudeDistribution,
    awgn_capacity,
    entropy_terms,
    log_kernel,
    marginal_entropy_density,
    mutual_information,
)
from .constraints import (
    EvenPolynomial,
    InfeasibleProblemError,
    OopProblem,
    RdpProblem,
    feasible_pd_max,
    max_coverage,
)
from .mc_oracle import RNG_NAME, estimate_coverage, estimate_mi
from .solver import SolverConfig, certify, solve
from .specfun import log_bessel_i0, marcum_q1
from .theory import TailIndexTooSmall, rdp_of_cscg, time_sharing_plan

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_UNVERIFIED, EXIT_VALIDATION = 0, 1, 2, 3, 4
DEFAULT_G = "0.01,0.01,0.01"
CSV_COLUMNS = (
    "swept_value",
    "mi_nats",
    "mi_bits",
    "m",
    "mu1_or_lambda1",
    "mu2_or_lambda2",
    "kkt_passed",
    "max_grid_violation",
    "runtime_s",
    "status",
)

log = logging.getLogger("swiptcap")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x):
    """12 significant digits, locale-free."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse number list {text!r}") from exc


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse integer list {text!r}") from exc


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError("missing required flag(s): " + ", ".join(missing))


def _g(args):
    try:
        return EvenPolynomial(tuple(_float_list(args.g)))
    except ValueError as exc:
        raise UsageError(f"--g: {exc}") from exc


def _problem(kind, args, swept=None):
    try:
        if kind == "rdp":
            _require(args, "pa", "rp")
            pd = swept if swept is not None else (args.pd if args.pd is not None else 0.0)
            return RdpProblem(args.pa, pd, args.rp, _g(args))
        _require(args, "pa", "rp", "al", "au")
        eps = swept if swept is not None else (args.eps if args.eps is not None else 0.0)
        return OopProblem(args.pa, args.rp, args.al, args.au, eps)
    except UsageError:
        raise
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _config(args, seed=None):
    kw = {"seed": args.seed if seed is None else seed}
    if args.m_max is not None:
        kw["m_max"] = args.m_max
    if args.restarts is not None:
        kw["restarts_per_m"] = args.restarts
    if args.tol_kkt is not None:
        kw["tol_eq"] = kw["tol_ineq"] = args.tol_kkt
    try:
        return SolverConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# -- solution documents -------------------------------------------------------


def problem_to_dict(problem):
    if problem.kind == "rdp":
        return {
            "kind": "rdp",
            "P_a": problem.P_a,
            "P_d": problem.P_d,
            "r_p": problem.r_p,
            "g": list(problem.g.alphas),
        }
    return {
        "kind": "oop",
        "P_a": problem.P_a,
        "r_p": problem.r_p,
        "A_l": problem.A_l,
        "A_u": problem.A_u,
        "eps": problem.eps,
    }


def problem_from_dict(d):
    if d["kind"] == "rdp":
        return RdpProblem(d["P_a"], d["P_d"], d["r_p"], EvenPolynomial(tuple(d["g"])))
    if d["kind"] == "oop":
        return OopProblem(d["P_a"], d["r_p"], d["A_l"], d["A_u"], d["eps"])
    raise ValueError(f"unknown problem kind {d['kind']!r}")


def _multiplier_names(kind):
    return ("mu1", "mu2") if kind == "rdp" else ("lambda1", "lambda2")


def solution_to_dict(sol):
    problem = sol.problem
    names = _multiplier_names(problem.kind)
    extra_name = "delivered_power" if problem.kind == "rdp" else "coverage"
    # wall-clock times would break byte-stable output
    trace = [{k: v for k, v in e.items() if k != "seconds"} for e in sol.trace]
    return {
        "version": __version__,
        "problem": problem_to_dict(problem),
        "points": list(sol.distribution.points),
        "probs": list(sol.distribution.probs),
        "mi_nats": sol.mi_nats,
        "mi_bits": sol.mi_bits,
        "m_used": sol.m_used,
        "multipliers": dict(zip(names, sol.kkt.multipliers)),
        "K_const": sol.kkt.K_const,
        "kkt": {
            "residual": sol.kkt.max_support_residual,
            "violation": sol.kkt.max_grid_violation,
            "passed": sol.kkt.passed,
            "underdetermined": sol.kkt.underdetermined,
        },
        "constraint_values": {
            "average_power": sol.constraint_values[0],
            extra_name: sol.constraint_values[1],
        },
        "config": dataclasses.asdict(sol.config),
        "trace": trace,
    }


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _dump_json(doc, path):
    text = json.dumps(doc, indent=2, allow_nan=True, default=_json_default) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read solution file {path}: {exc}") from exc


def _summary(sol):
    names = _multiplier_names(sol.problem.kind)
    lines = [
        f"MI = {fmt(sol.mi_nats)} nats = {fmt(sol.mi_bits)} bits  (m = {sol.distribution.size})",
        "  r        p",
    ]
    lines += [f"  {fmt(r)}  {fmt(p)}" for r, p in zip(sol.distribution.points, sol.distribution.probs)]
    mult = ", ".join(f"{n} = {fmt(v)}" for n, v in zip(names, sol.kkt.multipliers))
    lines.append(f"multipliers: {mult}")
    status = "passed" if sol.kkt.passed else "NOT verified"
    lines.append(
        f"KKT {status}: support residual {fmt(sol.kkt.max_support_residual)}, "
        f"grid violation {fmt(sol.kkt.max_grid_violation)}"
    )
    return "\n".join(lines)


# -- verbs --------------------------------------------------------------------


def cmd_solve(args):
    problem = _problem(args.kind, args)
    try:
        sol = solve(problem, _config(args))
    except InfeasibleProblemError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(_summary(sol))
    if args.out:
        _dump_json(solution_to_dict(sol), args.out)
    if not sol.kkt.passed:
        print("warning: KKT certificate not verified; best candidate reported", file=sys.stderr)
        return EXIT_UNVERIFIED
    return EXIT_OK


def _sweep_values(args):
    _require(args, "sweep_from", "sweep_to", "steps")
    if args.steps < 1 or args.sweep_from > args.sweep_to:
        raise UsageError("sweep needs --from <= --to and --steps >= 1")
    if args.steps == 1:
        return [args.sweep_from]
    return [float(v) for v in np.linspace(args.sweep_from, args.sweep_to, args.steps)]


def _sweep_point(kind, args, value, warm, record_runtime):
    t0 = time.perf_counter()
    problem = _problem(kind, args, swept=value)
    try:
        sol = solve(problem, _config(args), warm_start=warm)
    except InfeasibleProblemError:
        row = [value, math.nan, math.nan, 0, math.nan, math.nan, False, math.nan]
        status, sol = "infeasible", None
    else:
        row = [
            value,
            sol.mi_nats,
            sol.mi_bits,
            sol.distribution.size,
            sol.kkt.multipliers[0],
            sol.kkt.multipliers[1],
            sol.kkt.passed,
            sol.kkt.max_grid_violation,
        ]
        status = "ok" if sol.kkt.passed else "unverified"
    runtime = time.perf_counter() - t0 if record_runtime else ""
    return row + [runtime, status], sol


def _parallel_point(payload):
    kind, args, value, record_runtime = payload
    row, _ = _sweep_point(kind, args, value, None, record_runtime)
    return row


def run_sweep(kind, args):
    """Rows of the sweep CSV (lists of raw values), in swept order."""
    values = _sweep_values(args)
    if args.parallel:
        payloads = [(kind, args, v, args.record_runtime) for v in values]
        with ProcessPoolExecutor() as pool:
            return list(pool.map(_parallel_point, payloads))
    rows, warm = [], None
    for v in values:
        row, sol = _sweep_point(kind, args, v, warm, args.record_runtime)
        rows.append(row)
        if sol is not None:
            warm = sol.distribution
    return rows


def format_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def cmd_sweep(args):
    kind = args.kind
    _problem(kind, args, swept=0.0)  # validate the template early
    rows = run_sweep(kind, args)
    text = format_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    code = EXIT_OK
    for row in rows:
        if row[-1] != "ok":
            print(f"sweep point {fmt(row[0])}: kkt_passed=false ({row[-1]})", file=sys.stderr)
        if row[-1] == "unverified":
            code = EXIT_UNVERIFIED
        elif row[-1] == "infeasible" and code == EXIT_OK:
            code = EXIT_INFEASIBLE
    return code


def cmd_baseline(args):
    _require(args, "pa")
    if not args.pa > 0:
        raise UsageError("--pa must be positive")
    lines = [f"C = {fmt(awgn_capacity(args.pa))} nats (ln(1 + P_a/2))"]
    g = _g(args)
    lines.append(f"P_R = {fmt(rdp_of_cscg(args.pa, g))}")
    if args.rp is not None:
        lines.append(f"Pd_max = {fmt(feasible_pd_max(args.pa, args.rp, g))} (r_p = {fmt(args.rp)})")
        if args.al is not None and args.au is not None:
            cov, _ = max_coverage(args.pa, args.rp, args.al, args.au)
            lines.append(f"coverage_max = {fmt(cov)}")
    print("\n".join(lines))
    if args.pd is None:
        return EXIT_OK
    ls = _int_list(args.ts_l) if args.ts_l else [2, 8, 32, 128]
    rows = []
    for l in ls:
        try:
            plan = time_sharing_plan(args.pa, args.pd, g, l)
        except TailIndexTooSmall as exc:
            print(f"l = {l}: {exc}", file=sys.stderr)
            continue
        rows.append((l, plan.tau, plan.mi_nats, plan.gap_nats, plan.delivered_power))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("l", "tau", "mi_nats", "gap_nats", "delivered_power"))
    for row in rows:
        w.writerow([fmt(v) for v in row])
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# -- validation suite -----------------------------------------------------------


def _check_kernel_normalization():
    from .quadrature import integrate

    worst = 0.0
    for r in np.linspace(0.0, 20.0, 41):
        val, _ = integrate(lambda R: np.exp(log_kernel(np.maximum(R, 1e-300), r)), 0.0, r + 12.0, tol=1e-12)
        worst = max(worst, abs(val - 1.0))
    return worst <= 1e-10, f"max |int K - 1| = {worst:.2e}"


def _check_gradients(seed):
    from .solver import entropy_gradient

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(3):
        r = np.sort(rng.uniform(0.2, 5.0, 3))
        p = rng.dirichlet(np.ones(3))
        F = DiscreteAmplitudeDistribution(tuple(r), tuple(p))
        dp, dr = entropy_gradient(F)
        h = 1e-5
        for i in range(3):
            for arr, grad in ((p, dp), (r, dr)):
                up, dn = arr.copy(), arr.copy()
                up[i] += h
                dn[i] -= h
                args_up = (r, up) if arr is p else (up, p)
                args_dn = (r, dn) if arr is p else (dn, p)
                fd = (entropy_terms(*args_up, tol=1e-12)[0] - entropy_terms(*args_dn, tol=1e-12)[0]) / (2 * h)
                worst = max(worst, abs(fd - grad[i]) / max(abs(fd), 1e-3))
    return worst < 1e-5, f"max relative gradient error = {worst:.2e}"


def _check_marcum():
    a = np.array([0.1, 0.5, 1.0, 2.0, 4.0, 8.0])
    e1 = np.max(np.abs(marcum_q1(a, 0.0) - 1.0))
    e2 = np.max(np.abs(marcum_q1(0.0, a) - np.exp(-0.5 * a * a)))
    ident = 0.5 * (1.0 + np.exp(-a * a + log_bessel_i0(a * a)))
    e3 = np.max(np.abs(marcum_q1(a, a) - ident))
    worst = float(max(e1, e2, e3))
    return worst <= 1e-8, f"max identity error = {worst:.2e}"


def _check_h_lower_bound(seed):
    rng = np.random.default_rng(seed)
    r = np.linspace(0.0, 10.0, 50)
    worst = math.inf
    for _ in range(20):
        m = int(rng.integers(1, 6))
        pts = np.sort(rng.uniform(0.0, 8.0, m))
        pts = pts[np.r_[True, np.diff(pts) > 1e-6]]
        F = DiscreteAmplitudeDistribution.from_arrays(pts, rng.dirichlet(np.ones(pts.size)))
        worst = min(worst, float(marginal_entropy_density(r, F).min()))
    return worst > -2.0, f"min h(r;F) = {worst:.4f}"


def _check_solution(doc):
    problem = problem_from_dict(doc["problem"])
    F = DiscreteAmplitudeDistribution.from_arrays(doc["points"], doc["probs"], normalize=False)
    cfg_fields = {f.name for f in dataclasses.fields(SolverConfig)}
    config = SolverConfig(**{k: v for k, v in doc.get("config", {}).items() if k in cfg_fields})
    report = certify(F, problem, config)
    mi = mutual_information(F)
    ok_mi = abs(mi - doc["mi_nats"]) <= 1e-6
    return report, mi, ok_mi, F, problem


def cmd_validate(args):
    checks = []

    def record(name, ok, detail):
        checks.append((name, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")

    record("kernel_normalization", *_check_kernel_normalization())
    record("gradient", *_check_gradients(args.seed))
    record("marcum_identities", *_check_marcum())
    record("h_lower_bound", *_check_h_lower_bound(args.seed))

    if args.solution:
        try:
            report, mi, ok_mi, F, problem = _check_solution(_load_json(args.solution))
        except (KeyError, TypeError, ValueError) as exc:
            record("solution_document", False, str(exc))
            return EXIT_VALIDATION
        record(
            "kkt",
            report.passed,
            f"residual {report.max_support_residual:.2e}, violation {report.max_grid_violation:.2e}",
        )
        record("mi_consistency", ok_mi, f"quadrature MI {mi:.10f}")
        from .solver import _violation

        viol = _violation(problem, F.r, F.p)
        record("constraints", viol <= 1e-6, f"max constraint violation {viol:.2e}")
    else:
        F = DiscreteAmplitudeDistribution((0.9, 2.3, 4.0), (0.3, 0.45, 0.25))
        problem = None
        mi = mutual_information(F)

    n = args.mc_samples or 100_000
    est = estimate_mi(F, n, args.seed)
    tol = max(3 * est.std_error, 5e-3)
    record("mc_vs_quadrature_mi", abs(est.mean - mi) <= tol, f"MC {est.mean:.6f} +- {est.std_error:.1e}, quad {mi:.6f}")
    if problem is not None and problem.kind == "oop":
        from .constraints import oop_coverage

        cov = estimate_coverage(F, problem.A_l, problem.A_u, n, args.seed)
        exact = oop_coverage(F, problem.A_l, problem.A_u)
        record(
            "mc_vs_quadrature_coverage",
            abs(cov.mean - exact) <= max(3 * cov.std_error, 1e-12),
            f"MC {cov.mean:.6f} +- {cov.std_error:.1e}, exact {exact:.6f}",
        )
    failed = [name for name, ok, _ in checks if not ok]
    if failed:
        print("validation failed: " + ", ".join(failed), file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_mc(args):
    if args.solution:
        doc = _load_json(args.solution)
        try:
            F = DiscreteAmplitudeDistribution.from_arrays(doc["points"], doc["probs"], normalize=False)
        except (KeyError, ValueError) as exc:
            raise UsageError(f"bad solution file: {exc}") from exc
    else:
        if not (args.points and args.probs):
            raise UsageError("mc needs --solution or both --points and --probs")
        try:
            F = DiscreteAmplitudeDistribution.from_arrays(_float_list(args.points), _float_list(args.probs))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    n = args.mc_samples or 1_000_000
    try:
        est = estimate_mi(F, n, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    quad = mutual_information(F)
    doc = {
        "version": __version__,
        "rng": RNG_NAME,
        "seed": args.seed,
        "n_samples": n,
        "points": list(F.points),
        "probs": list(F.probs),
        "mi_nats": {"mc_mean": est.mean, "mc_std_error": est.std_error, "quadrature": quad},
    }
    if args.al is not None and args.au is not None:
        from .constraints import oop_coverage

        cov = estimate_coverage(F, args.al, args.au, n, args.seed)
        doc["coverage"] = {
            "A_l": args.al,
            "A_u": args.au,
            "mc_mean": cov.mean,
            "mc_std_error": cov.std_error,
            "exact": oop_coverage(F, args.al, args.au),
        }
    _dump_json(doc, args.out)
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _common(p):
    p.add_argument("--pa", type=float, help="average power P_a")
    p.add_argument("--pd", type=float, help="delivered power floor P_d")
    p.add_argument("--rp", type=float, help="peak amplitude r_p")
    p.add_argument("--g", default=DEFAULT_G, help="harvester coefficients alpha_0,alpha_1,... (default %(default)s)")
    p.add_argument("--al", type=float, help="outage window lower edge A_l")
    p.add_argument("--au", type=float, help="outage window upper edge A_u")
    p.add_argument("--eps", type=float, help="coverage floor epsilon")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", help="output file (JSON or CSV)")
    p.add_argument("--m-max", dest="m_max", type=int)
    p.add_argument("--restarts", type=int, help="random starts per support size")
    p.add_argument("--tol-kkt", dest="tol_kkt", type=float, help="KKT equality and grid tolerance (nats)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="swiptcap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one problem")
    p.add_argument("kind", choices=("rdp", "oop"))
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="sweep P_d (rdp) or eps (oop) and write CSV")
    p.add_argument("kind", choices=("rdp", "oop"))
    _common(p)
    p.add_argument("--from", dest="sweep_from", type=float)
    p.add_argument("--to", dest="sweep_to", type=float)
    p.add_argument("--steps", type=int, help="number of swept values")
    p.add_argument("--parallel", action="store_true", help="independent points, no warm start")
    p.add_argument("--record-runtime", action="store_true", help="fill runtime_s (not byte-stable)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("baseline", help="closed-form capacity, P_R, Pd_max, time-sharing table")
    _common(p)
    p.add_argument("--ts-l", dest="ts_l", help="tail indices, e.g. 2,8,32")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("validate", help="run the invariant suite")
    _common(p)
    p.add_argument("--solution", help="solution JSON to re-certify")
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("mc", help="Monte-Carlo MI (and coverage) of a law")
    _common(p)
    p.add_argument("--solution", help="solution JSON")
    p.add_argument("--points", help="comma-separated amplitudes")
    p.add_argument("--probs", help="comma-separated probabilities")
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.set_defaults(func=cmd_mc)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
