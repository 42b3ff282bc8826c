"""Command-line driver: ``nlhodge {solve,verify,refine,catalog}``.

Configuration is one JSON file.  Every key is optional; defaults:

==========================  ==============================================
key                         default
==========================  ==============================================
domain.n                    3
domain.half_width           1.0 (cube centered at the origin)
domain.extents              overrides half_width, list of [a, b] pairs
domain.resolution           16 (int or list of ints)
density.kind / gamma        "constant" / 1.4
problem.field               "uniform" (see ``nlhodge catalog``)
problem.params              {} (passed to the catalog builder)
problem.snapshot            none; a form snapshot to verify instead
solver.tol / max_iter       1e-10 / 200
solver.damping / q_margin   1.0 / 0.98
solver.cg_rtol              1e-6
verify.checks               [] (monotonicity, liouville, identity,
                            inequality, cutoff, gauge)
verify.center               origin
verify.radii                [0.3, 0.45, 0.6, 0.75, 0.9]
verify.monotonicity_tol     0.02
verify.liouville_k          0.0
verify.eta                  {"tau": 0.4, "delta": 0.3}
verify.identity_tol         0.01
verify.inequality_tol       0.01 (relative to int e(Q) eta)
verify.cutoff               {"profile": "ramp", "sigmas": [0.2, 0.1, 0.05]}
                            or {"profile": "log", "nus": [0..4],
                            "eps0": 0.3, "ratio": 0.5};
                            "lower"/"upper" give a singular box
verify.gauge_c              1.0 (allowed excess in units of h)
refine.check                "dd" (dd, bianchi, identity)
refine.base_resolution      8
refine.levels               3
refine.max_cells            4_000_000
refine.min_order            1.0
seed                        0
==========================  ==============================================

Exit codes:

== =========================================================
0  success, every requested check passed
1  a requested check failed beyond its tolerance
2  invalid configuration or usage
3  solver or transport did not converge
4  dimension hypothesis n > 2q violated
5  geometry error (ball, annulus or cutoff leaves the domain)
6  I/O error (snapshot or output files)
7  subsonic margin cannot be maintained
8  refinement would exceed the configured cell cap
== =========================================================
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import math
import os
import sys

import numpy as np

from nlhodge import catalog, monotonicity as mono
from nlhodge.density import DensityModel
from nlhodge.errors import (
    ConvergenceError,
    DimensionError,
    GeometryError,
    NLHodgeError,
    SnapshotError,
    SubsonicViolationError,
    TransportError,
)
from nlhodge.forms import CubicalComplex, FormField, exterior_derivative, norm
from nlhodge.snapshot import load_form, save_form, save_gauge
from nlhodge.solver import BoundaryProblem, el_residual, solve_stationary, write_convergence_csv

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_HYPOTHESIS = 4
EXIT_GEOMETRY = 5
EXIT_IO = 6
EXIT_SUBSONIC = 7
EXIT_RESOURCE = 8


class ConfigError(NLHodgeError, ValueError):
    pass


class ResourceError(NLHodgeError, RuntimeError):
    pass


def exit_code_for(exc: BaseException) -> int:
    # order matters: several classes share builtin bases
    table = [
        (DimensionError, EXIT_HYPOTHESIS),
        (GeometryError, EXIT_GEOMETRY),
        (SubsonicViolationError, EXIT_SUBSONIC),
        (ConvergenceError, EXIT_CONVERGENCE),
        (TransportError, EXIT_CONVERGENCE),
        (ResourceError, EXIT_RESOURCE),
        (SnapshotError, EXIT_IO),
        (OSError, EXIT_IO),
        (ValueError, EXIT_CONFIG),
        (KeyError, EXIT_CONFIG),
        (TypeError, EXIT_CONFIG),
    ]
    for cls, code in table:
        if isinstance(exc, cls):
            return code
    raise exc


# -- config ----------------------------------------------------------------------------

DEFAULT_RADII = [0.3, 0.45, 0.6, 0.75, 0.9]


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def build_complex(cfg: dict) -> CubicalComplex:
    dom = cfg.get("domain", {})
    n = int(dom.get("n", 3))
    if "extents" in dom:
        extents = [tuple(map(float, e)) for e in dom["extents"]]
        if len(extents) != n:
            raise ConfigError(f"domain.extents has {len(extents)} entries for n = {n}")
    else:
        hw = float(dom.get("half_width", 1.0))
        extents = [(-hw, hw)] * n
    res = dom.get("resolution", 16)
    res = [int(res)] * n if np.isscalar(res) else [int(r) for r in res]
    return CubicalComplex(extents, res)


def build_model(cfg: dict) -> DensityModel:
    return DensityModel.from_config(cfg.get("density", {}))


def build_field(cfg: dict, K: CubicalComplex | None = None) -> FormField:
    prob = cfg.get("problem", {})
    if prob.get("snapshot"):
        return load_form(prob["snapshot"])
    K = build_complex(cfg) if K is None else K
    params = dict(prob.get("params", {}))
    name = prob.get("field", "uniform")
    if name == "uniform" and "q" in prob:
        params.setdefault("q", int(prob["q"]))
    return catalog.build(name, K, **params)


def _center(cfg, K):
    c = cfg.get("verify", {}).get("center")
    if c is None:
        return tuple(0.5 * (a + b) for a, b in K.extents)
    return tuple(float(x) for x in c)


# -- output helpers -----------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write_json(path, payload: dict) -> None:
    body = dict(payload, schema_version=SCHEMA_VERSION)
    with open(path, "w") as fh:
        json.dump(_clean(body), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# -- checks ---------------------------------------------------------------------------------


def _require_form(f, what):
    if f.fiber is not None:
        raise ConfigError(f"{what} needs a real-valued form, got an so(3) connection")


def check_monotonicity(f, model, cfg, out, results):
    v = cfg.get("verify", {})
    _require_form(f, "monotonicity")
    mono.require_dimension(f.complex.n, f.degree)
    radii = [float(r) for r in v.get("radii", DEFAULT_RADII)]
    prof = mono.radial_profile(f, model, _center(cfg, f.complex), radii)
    tol = float(v.get("monotonicity_tol", 0.02))
    rep = mono.monotonicity_check(prof, tol)
    write_csv(os.path.join(out, "monotonicity.csv"), ["r", "energy", "conformal_energy", "pass_flag"],
              [(r, e, c, int(p)) for r, e, c, p in zip(prof.radii, prof.energies, rep.conformal, rep.flags)])
    results["monotonicity"] = {
        "passed": rep.passed, "tol": tol, "max_violation": rep.max_violation,
        "violation_pair": rep.violation_pair, "required_slack": rep.required_slack,
    }
    return prof


def check_liouville(f, model, cfg, out, results, prof=None):
    v = cfg.get("verify", {})
    _require_form(f, "liouville")
    mono.require_dimension(f.complex.n, f.degree)
    if prof is None:
        radii = [float(r) for r in v.get("radii", DEFAULT_RADII)]
        prof = mono.radial_profile(f, model, _center(cfg, f.complex), radii)
    verdict = mono.liouville_check(prof, float(v.get("liouville_k", 0.0)))
    results["liouville"] = {
        "passed": not (verdict.forced and verdict.consistent is False),
        "fitted_exponent": verdict.fitted_exponent, "k": verdict.k,
        "exponent_gap": verdict.exponent_gap, "verdict": verdict.verdict,
        "consistent": verdict.consistent, "max_Q": verdict.max_Q,
    }


def _eta(cfg):
    e = cfg.get("verify", {}).get("eta", {})
    return mono.VariationSpec(float(e.get("tau", 0.4)), float(e.get("delta", 0.3)))


def check_identity(f, model, cfg, out, results, inequality=False):
    v = cfg.get("verify", {})
    _require_form(f, "identity")
    spec = _eta(cfg)
    c = _center(cfg, f.complex)
    t = mono.inner_variation_terms(f, model, spec, c)
    diff = abs(t["lhs"] - t["rhs"])
    resid = 0.0 if diff == 0.0 else diff / max(abs(t["lhs"]), 1e-300)
    q = f.degree
    gap = t["rhs_radial"] - (t["lhs"] - 2 * q * t["int_e_eta"])
    scale = max(abs(t["int_e_eta"]), 1e-300)
    write_csv(os.path.join(out, "identity.csv"),
              ["tau", "delta", "lhs", "rhs_Q", "rhs_radial", "relative_residual", "inequality_gap"],
              [(spec.tau, spec.delta, t["lhs"], t["rhs_Q"], t["rhs_radial"], resid, gap)])
    tol = float(v.get("identity_tol", 0.01))
    results["identity"] = {"passed": resid <= tol, "relative_residual": resid, "tol": tol, **t}
    if inequality:
        itol = float(v.get("inequality_tol", 0.01))
        results["inequality"] = {"passed": gap >= -itol * scale, "gap": gap,
                                 "relative_gap": gap / scale, "tol": itol}


def check_cutoff(f, model, cfg, out, results):
    v = cfg.get("verify", {})
    _require_form(f, "cutoff")
    cc = v.get("cutoff", {})
    K = f.complex
    c = _center(cfg, K)
    lower = tuple(cc.get("lower", c))
    upper = tuple(cc["upper"]) if "upper" in cc else None
    eta = _eta(cfg)
    profile = cc.get("profile", "ramp")
    quadrature = cc.get("quadrature", "center")
    rows, params, specs = [], [], []
    if profile == "ramp":
        for s in cc.get("sigmas", [0.2, 0.1, 0.05]):
            specs.append(mono.CutoffSpec(lower, upper, "ramp", sigma=float(s)))
            params.append(float(s))
    elif profile == "log":
        for nu in cc.get("nus", [0, 1, 2, 3, 4]):
            specs.append(mono.CutoffSpec(lower, upper, "log", nu=int(nu), eps0=float(cc.get("eps0", 0.3)),
                                         ratio=float(cc.get("ratio", 0.5))))
            params.append(int(nu))
    else:
        raise ConfigError(f"unknown cutoff profile {profile!r}")
    terms = [mono.cutoff_terms(f, model, s, eta, c, quadrature) for s in specs]
    for p, t in zip(params, terms):
        rows.append((p, t.grad_norm_Lm, t.annulus_e, t.annulus_radial))
    write_csv(os.path.join(out, "cutoff.csv"), ["sigma_or_nu", "grad_norm", "annulus_e", "annulus_radial"], rows)
    grad = [t.grad_norm_Lm for t in terms]
    res = {"profile": profile, "grad_norm": grad, "q_norm_dual": terms[0].q_norm_dual if terms else 0.0}
    if profile == "ramp":
        ae = [t.annulus_e for t in terms]
        ar = [t.annulus_radial for t in terms]
        slope_ok = all(abs(t.max_slope * s.sigma - 1.0) <= 1e-12 for t, s in zip(terms, specs))
        ordered = sorted(zip(params, ae, ar))
        dec = all(b[1] >= a[1] and b[2] >= a[2] for a, b in zip(ordered, ordered[1:]))
        positive = all(x > 0 for x in ae + ar)
        rate_e = mono.fit_rate(params, ae) if positive and len(params) > 1 else None
        rate_r = mono.fit_rate(params, ar) if positive and len(params) > 1 else None
        zero = not any(x > 0 for x in ae + ar)
        res.update({"annulus_e": ae, "annulus_radial": ar, "rate_annulus_e": rate_e,
                    "rate_annulus_radial": rate_r, "slope_bound": slope_ok, "decreasing": dec})
        res["passed"] = slope_ok and (zero or (dec and rate_e is not None and rate_e > 0 and rate_r > 0))
    else:
        dec = all(b < a for a, b in zip(grad, grad[1:]))
        res.update({"decreasing": dec, "passed": dec})
    results["cutoff"] = res


def check_gauge(A, model, cfg, out, results):
    from nlhodge import gauge

    if A.fiber != 3 or A.degree != 1:
        raise ConfigError("gauge check needs an so(3) connection 1-form")
    v = cfg.get("verify", {})
    K = A.complex
    F = gauge.curvature(A)
    c = _center(cfg, K)
    g, At = gauge.exponential_gauge(A, c)
    rep = gauge.radial_gauge_report(At, F, c)
    h = max(K.spacing)
    cgauge = float(v.get("gauge_c", 1.0))
    save_gauge(os.path.join(out, "gauge.bin"), g)
    results["gauge"] = {
        "passed": rep["max_excess"] <= cgauge * h,
        "bianchi_residual": gauge.bianchi_residual(A, F),
        "el_residual": gauge.nonabelian_el_residual(A, F, model),
        "energy": gauge.gauge_energy(F, model),
        "exponential_gauge": rep, "allowed_excess": cgauge * h,
    }


CHECKS = ("monotonicity", "liouville", "identity", "inequality", "cutoff", "gauge")


def _validate_checks(cfg, degree, n):
    checks = cfg.get("verify", {}).get("checks", [])
    unknown = [c for c in checks if c not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown checks {unknown}; choose from {list(CHECKS)}")
    if any(c in ("monotonicity", "liouville") for c in checks):
        mono.require_dimension(n, degree)
    return checks


def run_checks(f, model, cfg, out) -> dict:
    checks = _validate_checks(cfg, f.degree, f.complex.n)
    results: dict = {}
    prof = None
    if "monotonicity" in checks:
        prof = check_monotonicity(f, model, cfg, out, results)
    if "liouville" in checks:
        check_liouville(f, model, cfg, out, results, prof)
    if "identity" in checks or "inequality" in checks:
        check_identity(f, model, cfg, out, results, inequality="inequality" in checks)
        if "identity" not in checks:
            results.pop("identity")
    if "cutoff" in checks:
        check_cutoff(f, model, cfg, out, results)
    if "gauge" in checks:
        check_gauge(f, model, cfg, out, results)
    return results


# -- subcommands ------------------------------------------------------------------------------


def run_solve(cfg: dict, out: str) -> int:
    K = build_complex(cfg)
    model = build_model(cfg)
    omega0 = build_field(cfg, K)
    _require_form(omega0, "solve")
    _validate_checks(cfg, omega0.degree, omega0.complex.n)
    s = cfg.get("solver", {})
    problem = BoundaryProblem(
        omega0, model, tol=float(s.get("tol", 1e-10)), max_iter=int(s.get("max_iter", 200)),
        damping=float(s.get("damping", 1.0)), q_margin=float(s.get("q_margin", 0.98)),
        cg_rtol=float(s.get("cg_rtol", 1e-6)),
    )
    history: list = []
    try:
        omega = solve_stationary(problem, history)
    finally:
        write_convergence_csv(os.path.join(out, "convergence.csv"), history)
    save_form(os.path.join(out, "field.bin"), omega)
    last = history[-1]
    summary = {
        "subcommand": "solve", "model": model.name, "field": cfg.get("problem", {}).get("field", "uniform"),
        "resolution": list(omega.complex.resolution), "degree": omega.degree,
        "iterations": last.iter, "energy": last.energy, "max_Q": last.max_Q,
        "el_residual": el_residual(omega, model),
        "el_residual_relative": el_residual(omega, model, relative=True),
        "closedness": norm(exterior_derivative(omega)) if omega.degree < omega.complex.n else 0.0,
    }
    summary["checks"] = run_checks(omega, model, cfg, out)
    summary["passed"] = all(c["passed"] for c in summary["checks"].values())
    write_json(os.path.join(out, "summary.json"), summary)
    return EXIT_OK if summary["passed"] else EXIT_CHECK_FAILED


def run_verify(cfg: dict, out: str) -> int:
    model = build_model(cfg)
    f = build_field(cfg)
    if not cfg.get("verify", {}).get("checks"):
        raise ConfigError("verify needs a non-empty verify.checks list")
    results = run_checks(f, model, cfg, out)
    summary = {"subcommand": "verify", "model": model.name, "degree": f.degree,
               "resolution": list(f.complex.resolution), "checks": results,
               "passed": all(c["passed"] for c in results.values())}
    write_json(os.path.join(out, "summary.json"), summary)
    return EXIT_OK if summary["passed"] else EXIT_CHECK_FAILED


def _refine_value(check, cfg, K, rng):
    from nlhodge import gauge

    if check == "dd":
        q = int(cfg.get("problem", {}).get("q", 1))
        if q + 2 > K.n:
            raise ConfigError(f"dd check needs q + 2 <= n, got q = {q}")
        f = catalog.random_cochain(K, q, rng)
        D1, D2 = K.d_matrix(q), K.d_matrix(q + 1)
        scale = float(np.max(abs(D2) @ (abs(D1) @ np.abs(f.coeffs))))
        return float(np.max(np.abs(D2 @ (D1 @ f.coeffs)))) / scale
    if check == "bianchi":
        prob = cfg.get("problem", {})
        name = prob.get("field", "nonabelian-sample")
        A = catalog.build(name, K, **prob.get("params", {}))
        return gauge.bianchi_residual(A, gauge.curvature(A))
    if check == "identity":
        f = build_field(cfg, K)
        _require_form(f, "identity")
        return mono.inner_variation_residual(f, build_model(cfg), _eta(cfg), _center(cfg, K))
    raise ConfigError(f"unknown refine check {check!r}; choose dd, bianchi or identity")


def run_refine(cfg: dict, out: str, seed: int) -> int:
    r = cfg.get("refine", {})
    check = r.get("check", "dd")
    base = int(r.get("base_resolution", 8))
    levels = int(r.get("levels", 3))
    cap = int(r.get("max_cells", 4_000_000))
    if levels < 1 or base < 1:
        raise ConfigError("refine needs base_resolution >= 1 and levels >= 1")
    if check == "bianchi" and "field" not in cfg.get("problem", {}):
        cfg = dict(cfg, problem=dict(cfg.get("problem", {}), field="nonabelian-sample"))
    n = int(cfg.get("domain", {}).get("n", 3))
    resolutions = [base * 2**k for k in range(levels)]
    if resolutions[-1] ** n > cap:
        raise ResourceError(f"{resolutions[-1]}^{n} cells exceed the cap of {cap}")
    rng = np.random.default_rng(seed)
    rows = []
    for N in resolutions:
        K = build_complex(dict(cfg, domain=dict(cfg.get("domain", {}), resolution=N)))
        rows.append((N, max(K.spacing), _refine_value(check, cfg, K, rng)))
    write_csv(os.path.join(out, "refine.csv"), ["resolution", "h", "value"], rows)
    hs = [row[1] for row in rows]
    vals = [row[2] for row in rows]
    summary = {"subcommand": "refine", "check": check, "resolutions": resolutions, "values": vals}
    if check == "dd":
        summary["passed"] = all(v <= 1e-14 for v in vals)
    else:
        positive = all(v > 0 for v in vals)
        pair = [math.log(a / b) / math.log(ha / hb) for a, b, ha, hb in zip(vals, vals[1:], hs, hs[1:])] \
            if positive else []
        order = mono.fit_rate(hs, vals) if positive and len(vals) > 1 else None
        min_order = float(r.get("min_order", 1.0))
        summary.update({"pairwise_orders": pair, "fitted_order": order, "min_order": min_order,
                        "passed": order is not None and order >= min_order})
    write_json(os.path.join(out, "summary.json"), summary)
    return EXIT_OK if summary["passed"] else EXIT_CHECK_FAILED


def run_catalog(out: str | None) -> int:
    entries = [{"name": e.name, "kind": e.kind, "description": e.description}
               for e in catalog.CATALOG.values()]
    for e in entries:
        print(f"{e['name']:20s} {e['kind']:11s} {e['description']}")
    if out is not None:
        write_json(os.path.join(out, "catalog.json"), {"subcommand": "catalog", "fields": entries})
    return EXIT_OK


# -- entry point -------------------------------------------------------------------------------


def _parser():
    p = argparse.ArgumentParser(prog="nlhodge", description="Nonlinear Hodge experiments on cubical grids.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in [("solve", "solve a boundary value problem"),
                       ("verify", "run checks on a snapshot or catalog field"),
                       ("refine", "repeat a check under 2x refinement"),
                       ("catalog", "list the analytic fields")]:
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", help="JSON configuration file")
        s.add_argument("--out", help="output directory")
        s.add_argument("--threads", type=int, help="limit BLAS threads")
        s.add_argument("--seed", type=int, help="random seed (overrides the config)")
    return p


def _thread_limit(n):
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise ConfigError("--threads must be positive")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        out = args.out
        if out is not None:
            os.makedirs(out, exist_ok=True)
        elif args.command != "catalog":
            out = "."
        with _thread_limit(args.threads):
            if args.command == "catalog":
                return run_catalog(out)
            if args.command == "solve":
                return run_solve(cfg, out)
            if args.command == "verify":
                return run_verify(cfg, out)
            return run_refine(cfg, out, seed)
    except Exception as exc:  # mapped to the documented exit codes
        code = exit_code_for(exc)
        print(f"nlhodge: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
