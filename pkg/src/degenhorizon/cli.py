"""Command-line pipeline: degenerate metric, path, collar, oracle, glue and verification.

Every command writes a JSON report (sorted keys, no timestamps) into the
output directory and exits 0 only when every asserted check passes. See
``EXIT_CODES`` for the mapping of library errors to exit statuses.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import errors
from .collar import (
    CollarData,
    CollarMetric,
    OracleBoxes,
    default_slices,
    parameter_search,
    sqrt_reparametrize,
)
from .config import PipelineConfig
from .conformal import ConformalMetric, area, first_eigenpair, hawking_mass
from .degenerate import find_degenerate, parse_w_spec
from .glue import adm_numeric, assemble, glue_with_retry, verify_theorem
from .path import (
    MetricPath,
    area_form_drift,
    eigen_curve,
    integrate_flow,
    total_area_drift,
)
from .profiles import ZetaProfile
from .sphere import GridSpec, ScalarField, get_grid, transfer

OUTPUT_ENV = "DEGENHORIZON_OUTPUT_DIR"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3

# most specific first
EXIT_CODES = (
    (errors.NoSignChange, 10),
    (errors.SearchExhausted, 11),
    (errors.BridgeInfeasible, 12),
    (errors.VerificationFailure, 13),
    (errors.NotRotationallySymmetric, 14),
    (errors.EigensolverFailure, 15),
    (errors.StepSizeUnderflow, 16),
    (errors.LostPositivity, 16),
    (errors.SingularMetric, 17),
    (errors.MissingDerivatives, 17),
    (errors.NoPositivePoint, 18),
    (errors.MaxDepthExceeded, 18),
    (errors.NegativeInteriorEigenvalue, 19),
    (errors.DegenHorizonError, 29),
)

ORACLE_SLICES = (1e-3, 1e-2, 0.1, 0.3, 0.75)


class MissingInput(Exception):
    pass


def exit_code_for(exc):
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    raise exc


# --- helpers ----------------------------------------------------------------------


def _check(value, ok):
    return {"value": value, "pass": bool(ok)}


def _write_json(out, name, payload):
    payload = dict(payload)
    payload["passed"] = all(c["pass"] for c in payload.get("checks", {}).values())
    text = json.dumps(_plain(payload), sort_keys=True, indent=2) + "\n"
    (out / name).write_text(text)
    return payload


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _plot(out, name, x, y, enabled):
    if not enabled:
        return
    d = out / "plot"
    d.mkdir(exist_ok=True)
    np.savetxt(d / name, np.column_stack([x, y]), fmt="%.17g")


def _load_w0(args, out, cfg):
    src = Path(args.metric) if getattr(args, "metric", None) else out / "w0.bin"
    if not src.exists():
        raise MissingInput(f"{src} not found; run find-degenerate first")
    w0 = ScalarField.from_binary(src)
    return transfer(w0, get_grid(GridSpec(band=cfg.collar_band)))


def _build_path(cfg, w):
    return MetricPath.build(w, ZetaProfile(cfg.tilt), n_times=cfg.n_times, tol=cfg.tol_a,
                            eigen=False)


def _decreasing_as_t_drops(rows, key, t_max=0.25):
    """Max over consecutive slices with t <= t_max of the relative increase toward smaller t."""
    sel = [r for r in rows if r["t"] <= t_max + 1e-12]
    vals = [r[key] for r in sorted(sel, key=lambda r: r["t"])]
    return all(a < b for a, b in zip(vals, vals[1:]))


# --- commands ---------------------------------------------------------------------


def cmd_find_degenerate(cfg, args, out):
    grid = get_grid(GridSpec(band=cfg.band))
    w = parse_w_spec(getattr(args, "w_spec", None) or cfg.w_spec, grid)
    res = find_degenerate(w, tol=cfg.tol_root)
    w0 = res.w0
    w0.to_binary(out / "w0.bin")
    w0.to_csv(out / "w0.csv")
    pair0 = first_eigenpair(res.ray.metric(0.0))
    u0 = pair0.u.values
    checks = {
        "t0_in_unit_interval": _check(res.t0, 0.0 < res.t0 < 1.0),
        "lambda1_at_t0": _check(res.lambda1, abs(res.lambda1) <= cfg.tol_root),
        "lambda1_at_0_is_one": _check(res.lambda1_t0, abs(res.lambda1_t0 - 1.0) <= 1e-8),
        "u_at_0_constant": _check(float(np.ptp(u0)), np.ptp(u0) <= 1e-8),
        "rayleigh_at_1_negative": _check(res.rayleigh_t1, res.rayleigh_t1 < 0.0),
    }
    area0 = area(ConformalMetric(w0))
    rep = dict(command="find-degenerate", checks=checks, result=res.to_dict(),
               area=area0, hawking_mass=hawking_mass(area0))
    ts = [p.t for p in res.curve]
    lam = [p.lambda1 if np.isfinite(p.lambda1) else np.nan for p in res.curve]
    _plot(out, "eigen_curve.dat", ts, lam, args.plot_data)
    return _write_json(out, "degenerate.json", rep)


def cmd_path(cfg, args, out):
    w0 = _load_w0(args, out, cfg)
    path = _build_path(cfg, w0)
    path.compute_eigen()
    curve = eigen_curve(path, tol=cfg.tol_root)
    flow = integrate_flow(path)
    (out / "flow.bin").write_bytes(flow.to_bytes())
    path.to_csv(out / "path.csv")
    drift_total = total_area_drift(path)
    drift_point = area_form_drift(path, flow)
    frozen = [path.factor(t).values for t in path.times if t >= 0.5]
    frozen_exact = all(np.array_equal(frozen[0], f) for f in frozen)
    lam = curve.lambda1
    t = path.times
    checks = {
        "total_area_drift": _check(drift_total, drift_total <= cfg.tol_area),
        "pointwise_area_drift": _check(drift_point, drift_point <= cfg.tol_pointwise),
        "frozen_on_half_to_one": _check(frozen_exact, frozen_exact),
        "alpha_positive": _check(curve.alpha, curve.alpha > 0.0),
        "lambda_above_alpha_t": _check(float(np.min(lam - curve.alpha * t)),
                                       np.all(lam >= curve.alpha * t - cfg.tol_root)),
        "a_quadrature_error": _check(path.a_error, path.a_error <= cfg.tol_a),
    }
    rep = dict(command="path", checks=checks, alpha=curve.alpha,
               leading_coefficient=curve.leading_coefficient, inf_u_range=curve.inf_u_range,
               lipschitz=curve.lipschitz, n_times=int(t.size))
    _plot(out, "path_lambda.dat", t, lam, args.plot_data)
    return _write_json(out, "path.json", rep)


def cmd_collar(cfg, args, out):
    w0 = _load_w0(args, out, cfg)
    path = _build_path(cfg, w0)
    data = CollarData.build(path, slices=default_slices(cfg.t_min))
    data.save(out / "collar_jets.npz")
    found = parameter_search(data, cfg.eps_values, cfg.A_values)
    c = CollarMetric(data, found.eps, found.A)
    rep = c.report(t_min=cfg.t_min)
    rows = rep.pop("slices")
    sg = sqrt_reparametrize(path, found.eps, found.A)
    H0 = float(np.max(np.abs(sg.mean_curvature()[0])))
    bd = sg.boundary_derivatives(3)
    rho_ratio = rep["max_rho_at_tmin"] / rep["rho_scale_at_tmin"]
    checks = {
        "min_R_positive": _check(rep["min_R"], rep["min_R"] > 0.0),
        "min_H_positive": _check(rep["min_H"], rep["min_H"] > 0.0),
        "H_matches_prediction": _check(rep["max_H_error"], rep["max_H_error"] <= cfg.tol_H),
        "rho_decreasing_as_t_drops": _check(None, _decreasing_as_t_drops(rows, "max_rho")),
        "sup_R_decreasing_as_t_drops": _check(None, _decreasing_as_t_drops(rows, "max_abs_R")),
        "s_gauge_boundary_H": _check(H0, H0 <= cfg.tol_boundary),
        "s_gauge_derivatives_finite": _check(bd, bool(np.all(np.isfinite(bd)))),
    }
    c.slice_csv(0, out / "collar_slice_tmin.csv")
    report = dict(command="collar", checks=checks, report=rep, slices=rows,
                  search=found.table, chosen={"epsilon": found.eps, "A": found.A},
                  rho_ratio_to_scale=rho_ratio)
    ts = [r["t"] for r in rows]
    _plot(out, "collar_min_R.dat", ts, [r["min_R"] for r in rows], args.plot_data)
    _plot(out, "collar_max_rho.dat", ts, [r["max_rho"] for r in rows], args.plot_data)
    return _write_json(out, "collar.json", report)


def _chosen(out):
    src = out / "collar.json"
    if not src.exists():
        raise MissingInput(f"{src} not found; run collar first")
    ch = json.loads(src.read_text())["chosen"]
    return ch["epsilon"], ch["A"]


def cmd_oracle(cfg, args, out):
    if args.target == "round":
        grid = get_grid(GridSpec(band=cfg.collar_band))
        w = grid.zeros()
        pairs = [(1e-2, 10.0), (1e-3, 30.0)]
    else:
        w = _load_w0(args, out, cfg)
        try:
            pairs = [_chosen(out)]
        except MissingInput:
            pairs = [(1e-3, 30.0)]
    path = _build_path(cfg, w)
    slices = [max(cfg.t_min, ORACLE_SLICES[0])] + list(ORACLE_SLICES[1:])
    boxes = OracleBoxes.build(path, slices, spacing=cfg.oracle_spacing)
    table, worst = [], 0.0
    for eps, A in pairs:
        for k, t in enumerate(slices):
            _, _, rel = boxes.compare(eps, A, k)
            table.append({"epsilon": eps, "A": A, "t": t, "relative": rel})
            worst = max(worst, rel)
    checks = {"formula_matches_oracle": _check(worst, worst <= cfg.tol_oracle)}
    rep = dict(command="oracle", target=args.target, checks=checks, table=table)
    return _write_json(out, f"oracle_{args.target}.json", rep)


def _collar_from_disk(out, eps, A):
    src = out / "collar_jets.npz"
    if not src.exists():
        raise MissingInput(f"{src} not found; run collar first")
    return CollarMetric(CollarData.load(src), eps, A)


def cmd_glue(cfg, args, out):
    if args.schwarzschild_only:
        if args.m is None:
            raise MissingInput("--schwarzschild-only needs --m")
        gm = assemble(None, args.m)
        hm = None
    else:
        eps, A = _chosen(out)
        c = _collar_from_disk(out, eps, A)
        hm = hawking_mass(area(c.data.path.h(0.0)))
        m = args.m if args.m is not None else cfg.mass_factor * hm
        gm = glue_with_retry(c.data, A, eps, m, shrink=cfg.eps_shrink, eps_min=cfg.eps_min)
    gm.profile.to_csv(out / "profile.csv")
    man = gm.manifest()
    man["hawking_mass"] = hm
    rel = abs(man["adm_numeric"]["extrapolated"] - gm.m) / gm.m
    checks = {
        "T_beyond_horizon": _check(gm.T, gm.T >= 2.0 * gm.m if gm.collar is None else gm.T > 2.0 * gm.m),
        "radial_R_nonnegative": _check(float(gm.profile.R.min()), gm.profile.R.min() >= -cfg.tol_R),
        "adm_numeric": _check(rel, rel <= 1e-3),
    }
    man["command"] = "glue"
    man["checks"] = checks
    _plot(out, "profile_rho.dat", gm.profile.s, gm.profile.rho, args.plot_data)
    return _write_json(out, "manifest.json", man)


def cmd_verify(cfg, args, out):
    src = Path(args.manifest) if args.manifest else out / "manifest.json"
    if not src.exists():
        raise MissingInput(f"{src} not found; run glue first")
    man = json.loads(src.read_text())
    if man.get("epsilon") is None:
        gm = assemble(None, man["m"])
    else:
        gm = assemble(_collar_from_disk(out, man["epsilon"], man["A"]), man["m"])
    rep = verify_theorem(gm, tol_R=cfg.tol_R, tol_boundary=cfg.tol_boundary, tol_ode=cfg.tol_ode)
    adm = adm_numeric(gm)
    rel = abs(adm["extrapolated"] - gm.m) / gm.m
    checks = {
        "i_nonnegative_R": _check(rep["i"]["min_R"], rep["i"]["min_R"] >= -cfg.tol_R),
        "iii_mean_convex": _check(rep["iii"]["min_H"], rep["iii"]["min_H"] > 0.0),
        "iv_schwarzschild_residual": _check(rep["iv"]["residual"], rep["iv"]["residual"] <= cfg.tol_ode),
        "adm_numeric": _check(rel, rel <= 1e-3),
    }
    out_rep = dict(command="verify", checks=checks, theorem=rep, adm=adm, m=gm.m)
    return _write_json(out, "verify.json", out_rep)


def cmd_config(cfg, args, out):
    sys.stdout.write(cfg.to_string())
    return {"passed": True}


def cmd_run(cfg, args, out):
    steps = [cmd_find_degenerate, cmd_path, cmd_collar]
    args.target = "degenerate"
    args.metric = None
    args.m = None
    args.schwarzschild_only = False
    args.manifest = None
    steps += [cmd_oracle, cmd_glue, cmd_verify]
    summary = {}
    for step in steps:
        rep = step(cfg, args, out)
        summary[rep["command"]] = rep["passed"]
        if not rep["passed"]:
            break
    return _write_json(out, "run.json", dict(command="run", checks={
        k: _check(v, v) for k, v in summary.items()}))


COMMANDS = {
    "find-degenerate": cmd_find_degenerate,
    "path": cmd_path,
    "collar": cmd_collar,
    "oracle": cmd_oracle,
    "glue": cmd_glue,
    "verify": cmd_verify,
    "run": cmd_run,
    "config": cmd_config,
}


def build_parser():
    p = argparse.ArgumentParser(prog="degenhorizon", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--out", help=f"output directory (overrides ${OUTPUT_ENV} and the config)")
    p.add_argument("--plot-data", action="store_true", help="also write (x, y) series under plot/")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("find-degenerate", help="locate t0 with lambda_1 = 0 on the conformal ray")
    s.add_argument("--w-spec", help="'default', 'Y:l,m[:scale]+...' or 'file:<path>'")
    s = sub.add_parser("path", help="area-fixing path and flow checks")
    s.add_argument("--metric", help="conformal factor dump (default: <out>/w0.bin)")
    s = sub.add_parser("collar", help="collar curvature, mean curvature and (eps, A) search")
    s.add_argument("--metric")
    s = sub.add_parser("oracle", help="warped formula against the brute-force 3D curvature")
    s.add_argument("target", choices=("round", "degenerate"))
    s.add_argument("--metric")
    s = sub.add_parser("glue", help="bridge and Schwarzschild exterior")
    s.add_argument("--m", type=float, help="mass (default: mass_factor * Hawking mass)")
    s.add_argument("--schwarzschild-only", action="store_true")
    s = sub.add_parser("verify", help="check the assembled metric")
    s.add_argument("--manifest")
    s = sub.add_parser("run", help="full chain with the configuration")
    s.add_argument("--w-spec")
    sub.add_parser("config", help="print the effective configuration")
    return p


def resolve_output(cfg, args):
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUTPUT_ENV)
    return Path(env) if env else Path(cfg.output_dir)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    except (OSError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = resolve_output(cfg, args)
    if args.command != "config":
        out.mkdir(parents=True, exist_ok=True)
    try:
        rep = COMMANDS[args.command](cfg, args, out)
    except MissingInput as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except ValueError as exc:
        # malformed user input such as an unparsable --w-spec
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except errors.DegenHorizonError as exc:
        code = exit_code_for(exc)
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        (out / "error.json").write_text(json.dumps(
            {"command": args.command, "error": type(exc).__name__, "message": str(exc),
             "exit_code": code}, sort_keys=True, indent=2) + "\n")
        return code
    return EXIT_OK if rep["passed"] else EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
