"""transportctl: every experiment as a subcommand with a JSON config.

Usage:
    transportctl <command> --config file.json [--out dir] [--workers N]

Configs are strict: unknown keys are rejected and all defaults are echoed
back into the outputs. CSV artifacts start with '#' header lines carrying
the resolved config; JSON artifacts embed it under a "config" key. Exit
codes: 0 success, 2 config/validation error, 3 numerical failure. Errors
are reported as a single JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import dynamics, floquet, limitperiodic, xychain
from ._parallel import resolve_workers
from .blockjacobi import BlockSpec, WavePacket, build_operator
from .errors import ConfigInvalid, GridTooCoarse, NumericsError, SpecError

REQUIRED = object()


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------


def _resolve(raw, schema, command):
    if not isinstance(raw, dict):
        raise ConfigInvalid("config must be a JSON object")
    unknown = sorted(set(raw) - set(schema) - {"command"})
    if unknown:
        raise ConfigInvalid(f"unknown config fields for '{command}': {unknown}")
    if "command" in raw and raw["command"] != command:
        raise ConfigInvalid(
            f"config names command '{raw['command']}' but '{command}' was invoked"
        )
    resolved = {"command": command}
    for key, default in schema.items():
        if key in raw:
            resolved[key] = raw[key]
        elif default is REQUIRED:
            raise ConfigInvalid(f"missing required config field '{key}'")
        else:
            resolved[key] = default
    return resolved


def _operator(resolved, key="operator"):
    data = resolved[key]
    if not isinstance(data, dict):
        raise ConfigInvalid(f"'{key}' must be a block-spec JSON object")
    return build_operator(BlockSpec.from_json_dict(data))


def _packet(data, m):
    if not isinstance(data, dict):
        raise ConfigInvalid("'state' must be a JSON object")
    if "delta_scalar" in data:
        return WavePacket.delta_scalar(int(data["delta_scalar"]), m)
    if "delta_block" in data:
        return WavePacket.delta_block(int(data["delta_block"]),
                                      int(data.get("component", 0)), m)
    if "base" in data and "coeffs" in data:
        coeffs = [[complex(re, im) for re, im in block] for block in data["coeffs"]]
        arr = np.array(coeffs, dtype=complex)
        if arr.ndim != 2 or arr.shape[1] != m:
            raise ConfigInvalid(f"state coeffs must be blocks of {m} [re, im] pairs")
        return WavePacket(int(data["base"]), arr)
    raise ConfigInvalid(
        "state needs 'delta_scalar', 'delta_block', or 'base' + 'coeffs'"
    )


def _xy_spec(resolved):
    return xychain.XYChainSpec(mu=resolved["mu"], gamma=resolved["gamma"],
                               nu=resolved["nu"])


def _check_grid(G):
    if int(G) < floquet.MIN_GRID:
        raise GridTooCoarse(f"grid size {G} below minimum {floquet.MIN_GRID}")
    return int(G)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path, resolved, columns, rows):
    lines = [
        f"# transportctl {resolved['command']}",
        "# config: " + json.dumps(resolved, sort_keys=True),
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path, resolved, payload):
    body = dict(payload)
    body["config"] = resolved
    with open(path, "w") as fh:
        json.dump(body, fh, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

SCHEMAS = {
    "bands": {"operator": REQUIRED, "grid_size": 512, "gap_tol": 1e-8},
    "qnorm": {"operator": REQUIRED, "grid_size": 512},
    "evolve": {"operator": REQUIRED, "state": REQUIRED, "times": REQUIRED,
               "half_width": None, "threshold": 1e-12},
    "exponents": {"operator": REQUIRED, "state": REQUIRED, "times": REQUIRED,
                  "p": 2.0, "half_width": None},
    "ballistic-check": {"operator": REQUIRED, "state": REQUIRED, "times": REQUIRED,
                        "grid_size": 1024, "half_width": None},
    "derivative-check": {"operator": REQUIRED, "state": REQUIRED, "T": 1.0,
                         "quad_steps": 256, "half_width": None},
    "corollary-probe": {"operator": REQUIRED, "epsilon": REQUIRED, "K": REQUIRED,
                        "times": REQUIRED, "grid_size": 512},
    "localization": {"operator": REQUIRED, "half_width": REQUIRED, "pairs": REQUIRED,
                     "t_max": 20.0, "t_step": None},
    "xy-velocity": {"mu": REQUIRED, "gamma": REQUIRED, "nu": REQUIRED,
                    "grid_size": 512},
    "xy-verify": {"mu": REQUIRED, "gamma": REQUIRED, "nu": REQUIRED,
                  "window": REQUIRED, "pairs": REQUIRED, "times": REQUIRED,
                  "checks": ["free-fermion", "lower", "upper"],
                  "cases": [1, 2, 3, 4]},
    "lyapunov": {"potential": REQUIRED, "energies": REQUIRED, "n": 1000},
    "thouless": {"potential": REQUIRED, "points": REQUIRED, "grid_size": 2048},
    "dt-criterion": {"potential": REQUIRED, "coupling": REQUIRED, "K": REQUIRED,
                     "T": REQUIRED, "alpha": 1.0, "p_period": None},
    "stability": {"base_potential": REQUIRED, "perturbed_potential": REQUIRED,
                  "state": REQUIRED, "t": REQUIRED, "p": 2.0, "m_env": 1},
    "generic": {"stages": REQUIRED, "p": 2.0, "m_env": 1,
                "seed": limitperiodic.DEFAULT_SEED},
}


def cmd_bands(resolved, outdir, workers):
    J = _operator(resolved)
    G = _check_grid(resolved["grid_size"])
    bs = floquet.band_structure(J, G, gap_tol=float(resolved["gap_tol"]),
                                workers=workers)
    rows = []
    for g, theta in enumerate(bs.thetas):
        for j in range(bs.bands.shape[1]):
            rows.append((theta, j, bs.bands[g, j], bs.velocities[g, j],
                         bool(bs.degenerate[g])))
    _write_csv(os.path.join(outdir, "bands.csv"), resolved,
               ["theta", "band_index", "lambda", "velocity", "degenerate_flag"], rows)
    return None


def cmd_qnorm(resolved, outdir, workers):
    J = _operator(resolved)
    G = _check_grid(resolved["grid_size"])
    vm = floquet.velocity_maximum(J, grid_size=G, workers=workers)
    payload = {"q_norm": vm.value, "argmax_theta": vm.theta, "argmax_band": vm.band}
    _write_json(os.path.join(outdir, "qnorm.json"), resolved, payload)
    return payload


def cmd_evolve(resolved, outdir, workers):
    J = _operator(resolved)
    psi = _packet(resolved["state"], J.m)
    times = [float(t) for t in resolved["times"]]
    half = resolved["half_width"]
    if half is None:
        half = dynamics.required_half_width(J, psi.support_radius(), max(abs(t) for t in times))
    trunc = J.truncate(int(half))
    thr = float(resolved["threshold"])
    rows = []
    for t in times:
        pt = dynamics.evolve(trunc, psi, t)
        for i, site in enumerate(pt.sites):
            for c in range(pt.m):
                z = pt.coeffs[i, c]
                if abs(z) > thr:
                    rows.append((t, int(site), c, z.real, z.imag))
    _write_csv(os.path.join(outdir, "evolve.csv"), resolved,
               ["t", "site", "component", "re", "im"], rows)
    return None


def cmd_exponents(resolved, outdir, workers):
    J = _operator(resolved)
    psi = _packet(resolved["state"], J.m)
    times = [float(t) for t in resolved["times"]]
    p = float(resolved["p"])
    half = resolved["half_width"]
    traj = dynamics.moment_trajectory(J, psi, p, times,
                                      half_width=None if half is None else int(half))
    est = dynamics.exponent_estimate(traj)
    slopes = np.diff(np.log(traj.values)) / (p * np.diff(np.log(traj.times)))
    rows = []
    for i, t in enumerate(traj.times):
        rows.append((t, traj.values[i], slopes[i - 1] if i > 0 else float("nan")))
    _write_csv(os.path.join(outdir, "exponents.csv"), resolved,
               ["t", "moment", "running_slope"], rows)
    payload = {"beta_plus_hat": est.beta_plus_hat, "beta_minus_hat": est.beta_minus_hat,
               "residual": est.residual}
    _write_json(os.path.join(outdir, "exponents.json"), resolved, payload)
    return payload


def cmd_ballistic_check(resolved, outdir, workers):
    J = _operator(resolved)
    psi = _packet(resolved["state"], J.m)
    times = sorted(float(t) for t in resolved["times"])
    G = _check_grid(resolved["grid_size"])
    half = resolved["half_width"]
    errors = dynamics.check_ballistic_limit(J, psi, times, grid_size=G,
                                            half_width=None if half is None else int(half))
    _write_csv(os.path.join(outdir, "ballistic.csv"), resolved, ["t", "error"],
               list(zip(times, errors)))
    return None


def cmd_derivative_check(resolved, outdir, workers):
    J = _operator(resolved)
    psi = _packet(resolved["state"], J.m)
    half = resolved["half_width"]
    residual = dynamics.check_derivative_identity(
        J, psi, float(resolved["T"]), int(resolved["quad_steps"]),
        half_width=None if half is None else int(half))
    payload = {"residual": residual, "T": float(resolved["T"]),
               "quad_steps": int(resolved["quad_steps"])}
    _write_json(os.path.join(outdir, "derivative.json"), resolved, payload)
    return payload


def cmd_corollary_probe(resolved, outdir, workers):
    J = _operator(resolved)
    result = dynamics.corollary_probe(J, float(resolved["epsilon"]),
                                      [float(t) for t in resolved["times"]],
                                      int(resolved["K"]),
                                      grid_size=_check_grid(resolved["grid_size"]))
    rows = [(r.time, r.n_star, r.k_star, r.mass, r.threshold_ok)
            for r in result.records]
    _write_csv(os.path.join(outdir, "corollary.csv"), resolved,
               ["T", "n_star", "k_star", "mass", "threshold_ok"], rows)
    payload = {"c_tilde": result.c_tilde, "all_ok": result.all_ok}
    _write_json(os.path.join(outdir, "corollary.json"), resolved, payload)
    return payload


def cmd_localization(resolved, outdir, workers):
    J = _operator(resolved)
    trunc = J.truncate(int(resolved["half_width"]))
    step = resolved["t_step"]
    if step is None:
        step = 0.1 * 2.0 * math.pi / trunc.norm_bound
    t_grid = np.arange(0.0, float(resolved["t_max"]) + 1e-12, float(step))
    pairs = [(int(l), int(r)) for l, r in resolved["pairs"]]
    report = dynamics.localization_diagnostic(trunc, pairs, t_grid)
    rows = [(l, r, abs(r - l), s)
            for (l, r), s in zip(report.pairs, report.sup_amplitudes)]
    _write_csv(os.path.join(outdir, "localization.csv"), resolved,
               ["l", "r", "distance", "sup_amp"], rows)
    payload = {"slope": report.slope, "r_squared": report.r_squared,
               "decay_rate": report.decay_rate,
               "verdict": "localized" if report.localized else "not_localized"}
    _write_json(os.path.join(outdir, "localization.json"), resolved, payload)
    return payload


def cmd_xy_velocity(resolved, outdir, workers):
    spec = _xy_spec(resolved)
    v0 = xychain.lr_velocity_bound(spec, grid_size=_check_grid(resolved["grid_size"]))
    payload = {"v0": v0}
    _write_json(os.path.join(outdir, "xy_velocity.json"), resolved, payload)
    return payload


def cmd_xy_verify(resolved, outdir, workers):
    spec = _xy_spec(resolved)
    lo, hi = (int(x) for x in resolved["window"])
    chain = xychain.build_spin_hamiltonian(spec, (lo, hi))
    pairs = [(int(l), int(r)) for l, r in resolved["pairs"]]
    times = [float(t) for t in resolved["times"]]
    checks = resolved["checks"]
    cases = [int(c) for c in resolved["cases"]]
    rows = []
    if "free-fermion" in checks:
        for l, _ in pairs:
            for t in times:
                res = xychain.free_fermion_residual(chain, spec, l, t)
                rows.append(("free_fermion", l, l, t, res, 1e-8, res < 1e-8))
    if "lower" in checks:
        for l, r in pairs:
            for t in times:
                for case in cases:
                    chk = xychain.propagation_lower_bound(chain, spec, l, r, t, case)
                    rows.append((f"lower_case{case}", l, r, t, chk.commutator,
                                 chk.entry_abs, chk.ok))
    if "upper" in checks:
        for l, r in pairs:
            for t in times:
                chk = xychain.propagation_upper_bound(chain, spec, l, r, t)
                rows.append(("upper", l, r, t, chk.lhs, chk.rhs, chk.ok))
    _write_csv(os.path.join(outdir, "xy_verify.csv"), resolved,
               ["check_name", "l", "r", "t", "lhs", "rhs", "ok"], rows)
    payload = {"checks": len(rows), "all_ok": bool(all(r[-1] for r in rows))}
    _write_json(os.path.join(outdir, "xy_verify.json"), resolved, payload)
    return payload


def cmd_lyapunov(resolved, outdir, workers):
    w = [float(x) for x in resolved["potential"]]
    ns = resolved["n"]
    if not isinstance(ns, list):
        ns = [ns]
    rows = []
    for pair in resolved["energies"]:
        E = complex(float(pair[0]), float(pair[1]))
        for n in ns:
            L = limitperiodic.finite_lyapunov(int(n), E, w, periodic=True)
            rows.append((E.real, E.imag, int(n), L))
    _write_csv(os.path.join(outdir, "lyapunov.csv"), resolved,
               ["E_re", "E_im", "n", "L"], rows)
    return None


def cmd_thouless(resolved, outdir, workers):
    w = [float(x) for x in resolved["potential"]]
    G = _check_grid(resolved["grid_size"])
    rows = []
    for pair in resolved["points"]:
        z = complex(float(pair[0]), float(pair[1]))
        res = limitperiodic.thouless_check(len(w), z, w, grid_size=G)
        rows.append((z.real, z.imag, res.lhs, res.rhs, res.gap))
    _write_csv(os.path.join(outdir, "thouless.csv"), resolved,
               ["z_re", "z_im", "lhs", "rhs", "gap"], rows)
    return None


def cmd_dt_criterion(resolved, outdir, workers):
    value = limitperiodic.dt_criterion(
        [float(x) for x in resolved["potential"]], float(resolved["coupling"]),
        float(resolved["K"]), float(resolved["T"]), float(resolved["alpha"]),
        p_period=resolved["p_period"])
    payload = {"integral": value, "K": float(resolved["K"]),
               "T": float(resolved["T"]), "alpha": float(resolved["alpha"])}
    _write_json(os.path.join(outdir, "dt_criterion.json"), resolved, payload)
    return payload


def cmd_stability(resolved, outdir, workers):
    psi = _packet(resolved["state"], 1)
    diff = limitperiodic.perturbation_stability(
        [float(x) for x in resolved["base_potential"]],
        [float(x) for x in resolved["perturbed_potential"]],
        psi, float(resolved["t"]), float(resolved["p"]), int(resolved["m_env"]))
    payload = {"difference": diff, "t": float(resolved["t"]), "p": float(resolved["p"])}
    _write_json(os.path.join(outdir, "stability.json"), resolved, payload)
    return payload


def cmd_generic(resolved, outdir, workers):
    construction = limitperiodic.generic_builder(
        int(resolved["stages"]), float(resolved["p"]), int(resolved["m_env"]),
        seed=int(resolved["seed"]))
    stage_payload = []
    for rec in construction.records:
        stage_payload.append({
            "stage": rec.stage,
            "period": rec.period,
            "potential": [float(x) for x in rec.potential],
            "delta": rec.delta,
            "T": rec.time,
            "p": rec.moment_order,
            "m_env": rec.envelope_m,
        })
    _write_json(os.path.join(outdir, "generic_stages.json"), resolved,
                {"stages": stage_payload})
    rows = [(v.stage, v.time, v.threshold, v.worst_moment, v.ok)
            for v in construction.verification]
    _write_csv(os.path.join(outdir, "generic_verification.csv"), resolved,
               ["stage", "T", "threshold", "worst_moment", "ok"], rows)
    payload = {"stages": len(stage_payload),
               "deltas": [rec.delta for rec in construction.records],
               "all_ok": construction.all_ok}
    return payload


RUNNERS = {
    "bands": cmd_bands,
    "qnorm": cmd_qnorm,
    "evolve": cmd_evolve,
    "exponents": cmd_exponents,
    "ballistic-check": cmd_ballistic_check,
    "derivative-check": cmd_derivative_check,
    "corollary-probe": cmd_corollary_probe,
    "localization": cmd_localization,
    "xy-velocity": cmd_xy_velocity,
    "xy-verify": cmd_xy_verify,
    "lyapunov": cmd_lyapunov,
    "thouless": cmd_thouless,
    "dt-criterion": cmd_dt_criterion,
    "stability": cmd_stability,
    "generic": cmd_generic,
}

# cheap precondition checks promoted to the validation phase (exit code 2)
def _validate_phase(command, resolved):
    if "grid_size" in resolved:
        _check_grid(resolved["grid_size"])
    if "operator" in resolved:
        _operator(resolved)
    if command in ("xy-velocity", "xy-verify"):
        _xy_spec(resolved)
    if command == "xy-verify":
        lo, hi = (int(x) for x in resolved["window"])
        if hi - lo + 1 > xychain.MAX_SITES:
            raise ConfigInvalid(f"window [{lo}, {hi}] exceeds {xychain.MAX_SITES} sites")
    if command == "generic" and not 1 <= int(resolved["stages"]) <= 5:
        raise ConfigInvalid("stages must be between 1 and 5")


def _error_json(exc, command):
    return json.dumps({
        "error": type(exc).__name__,
        "message": str(exc),
        "command": command,
    }, sort_keys=True)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="transportctl",
        description="Transport experiments for periodic block Jacobi matrices",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help="worker cap (default: TRANSPORTCTL_WORKERS or all cores)")
    args = parser.parse_args(argv)

    command = args.command
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(_error_json(ConfigInvalid(f"cannot read config: {exc}"), command),
              file=sys.stderr)
        return 2

    try:
        resolved = _resolve(raw, SCHEMAS[command], command)
        _validate_phase(command, resolved)
    except Exception as exc:
        print(_error_json(exc, command), file=sys.stderr)
        return 2

    workers = resolve_workers(args.workers)
    os.makedirs(args.out, exist_ok=True)
    try:
        payload = RUNNERS[command](resolved, args.out, workers)
    except (NumericsError, SpecError, ValueError) as exc:
        print(_error_json(exc, command), file=sys.stderr)
        return 3
    if payload is not None:
        print(json.dumps(payload, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
